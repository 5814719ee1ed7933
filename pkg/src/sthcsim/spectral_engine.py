"""Exact and FFT-accelerated primitives for valid 3D convolution.

The two spatial axes model the Fourier transform performed by a lens and the
temporal axis the transform performed by an inhomogeneously broadened atomic
ensemble, so one spectral toolkit backs both the digital and the optical
convolution paths. ``direct_conv3d`` is the naive-loop ground truth that every
faster path is checked against.

All operations are pure functions of their inputs; float64/complex128
throughout.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from .errors import DimensionError, NumericalConsistencyError

# Largest tolerated imaginary residual after an inverse transform of
# Hermitian data, relative to the grid maximum.
IMAG_RESIDUAL_TOL = 1e-9

# Worker threads for the FFT backend; transforms are independent, so results
# do not depend on this value.
_WORKERS = os.cpu_count() or 1


@dataclass(frozen=True)
class VideoVolume:
    """Non-negative intensity volume with axes (height, width, frames, channels).

    Intensities are dimensionless, normalized into [0, 1].
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise DimensionError(
                f"video volume needs axes (H, W, T, C), got shape {v.shape}"
            )
        if min(v.shape) < 1:
            raise DimensionError(f"video volume axes must be positive, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("video volume contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("video intensities must lie in [0, 1] after normalization")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def frames(self) -> int:
        return self.values.shape[2]

    @property
    def channels(self) -> int:
        return self.values.shape[3]


@dataclass(frozen=True)
class KernelShape:
    """Extents of a 3D convolution kernel."""

    k_h: int
    k_w: int
    k_t: int
    c_in: int = 1

    def __post_init__(self):
        if min(self.k_h, self.k_w, self.k_t, self.c_in) < 1:
            raise DimensionError(f"kernel extents must be positive, got {self}")

    def fits_input(self, height, width, frames) -> bool:
        return self.k_h <= height and self.k_w <= width and self.k_t <= frames


@dataclass(frozen=True)
class KernelSet:
    """Bank of signed 3D kernels with per-kernel biases.

    ``weights`` has axes (kernel, k_h, k_w, k_t, channel); ``biases`` one entry
    per kernel.
    """

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 5:
            raise DimensionError(
                f"kernel weights need axes (K, k_h, k_w, k_t, C), got shape {w.shape}"
            )
        if w.shape[0] < 1:
            raise DimensionError("kernel set must hold at least one kernel")
        if b.shape != (w.shape[0],):
            raise DimensionError(
                f"biases must have shape ({w.shape[0]},), got {b.shape}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("kernel weights and biases must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def count(self) -> int:
        return self.weights.shape[0]

    @property
    def shape(self) -> KernelShape:
        _, kh, kw, kt, c = self.weights.shape
        return KernelShape(kh, kw, kt, c)


@dataclass(frozen=True)
class FeatureVolume:
    """Stack of valid-convolution output maps, axes (kernel, height, width, frames)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise DimensionError(
                f"feature volume needs axes (K, H', W', T'), got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @property
    def out_channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def frames(self) -> int:
        return self.values.shape[3]


def _volume_array(volume) -> np.ndarray:
    """Coerce a VideoVolume or bare array to float64 with axes (H, W, T, C)."""
    v = volume.values if isinstance(volume, VideoVolume) else np.asarray(volume, dtype=np.float64)
    if v.ndim == 3:
        v = v[..., np.newaxis]
    if v.ndim != 4:
        raise DimensionError(f"expected a 3D or 4D volume, got shape {v.shape}")
    return v


def _kernel_array(kernel) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim == 3:
        k = k[..., np.newaxis]
    if k.ndim != 4:
        raise DimensionError(f"expected a 3D or 4D kernel, got shape {k.shape}")
    return k


def _check_conv_shapes(x: np.ndarray, w: np.ndarray):
    if w.shape[3] != x.shape[3]:
        raise DimensionError(
            f"kernel has {w.shape[3]} channels but volume has {x.shape[3]}"
        )
    if w.shape[0] > x.shape[0] or w.shape[1] > x.shape[1] or w.shape[2] > x.shape[2]:
        raise DimensionError(
            f"kernel {w.shape[:3]} larger than volume {x.shape[:3]}"
        )


def _next_fast_len(n: int) -> int:
    """Smallest 5-smooth integer >= n, for fast FFT sizing."""
    if n <= 6:
        return max(1, n)
    best = 1 << (n - 1).bit_length()
    f5 = 1
    while f5 < best:
        f35 = f5
        while f35 < best:
            q = -(-n // f35)
            cand = f35 << max(0, (q - 1).bit_length())
            if cand == n:
                return n
            if n <= cand < best:
                best = cand
            f35 *= 3
        f5 *= 5
    return best


def forward_st_fft(volume, padded_shape) -> np.ndarray:
    """Zero-pad a real 3D grid to ``padded_shape`` and transform all axes.

    The 2D spatial transform and the 1D temporal transform are separable, so
    a single 3D DFT realizes both. Padding each axis to input + kernel - 1
    guarantees the later spectral product computes a linear (not circular)
    convolution.
    """
    v = np.asarray(volume, dtype=np.float64)
    if v.ndim != 3:
        raise DimensionError(f"expected a real 3D grid, got shape {v.shape}")
    shape = tuple(int(n) for n in padded_shape)
    if len(shape) != 3:
        raise DimensionError(f"padded_shape must have 3 entries, got {padded_shape}")
    if any(p < s for p, s in zip(shape, v.shape)):
        raise DimensionError(
            f"padded_shape {shape} smaller than volume shape {v.shape}"
        )
    return _fft.fftn(v, s=shape, workers=_WORKERS)


def _imag_residual_check(full: np.ndarray):
    scale = float(np.abs(full).max()) if full.size else 0.0
    residual = float(np.abs(full.imag).max()) if full.size else 0.0
    if residual > IMAG_RESIDUAL_TOL * scale:
        raise NumericalConsistencyError(
            f"imaginary residual {residual:.3e} exceeds {IMAG_RESIDUAL_TOL:.0e} of "
            f"grid max {scale:.3e}; spectrum is not that of a real signal"
        )


def inverse_st_fft(spectrum, crop_shape, offset=(0, 0, 0)) -> np.ndarray:
    """Inverse-transform all three axes, check realness, and crop.

    ``offset`` is where the crop starts on each axis; pass kernel - 1 per axis
    to extract the valid region of a linear convolution. An imaginary residual
    above IMAG_RESIDUAL_TOL of the grid maximum means the spectrum was not
    Hermitian and is reported as an error rather than silently discarded.
    """
    s = np.asarray(spectrum, dtype=np.complex128)
    if s.ndim != 3:
        raise DimensionError(f"expected a 3D spectrum, got shape {s.shape}")
    crop = tuple(int(n) for n in crop_shape)
    off = tuple(int(n) for n in offset)
    if len(crop) != 3 or len(off) != 3:
        raise DimensionError("crop_shape and offset must have 3 entries")
    if any(c < 1 for c in crop) or any(o < 0 for o in off):
        raise DimensionError(f"invalid crop {crop} / offset {off}")
    if any(o + c > g for o, c, g in zip(off, crop, s.shape)):
        raise DimensionError(
            f"crop {crop} at offset {off} exceeds spectrum grid {s.shape}"
        )
    full = _fft.ifftn(s, workers=_WORKERS)
    _imag_residual_check(full)
    region = tuple(slice(o, o + c) for o, c in zip(off, crop))
    return np.ascontiguousarray(full.real[region])


def direct_conv3d(volume, kernel) -> np.ndarray:
    """Ground-truth valid 3D correlation, summed over input channels.

    Output is Y[i,j,t] = sum over (m,n,tau,c) of W[m,n,tau,c] * X[i+m,j+n,t+tau,c],
    stride 1, no padding, no bias, no activation. Implemented as naive nested
    loops on purpose: this is the oracle all accelerated paths are verified
    against, so it must stay independent of any FFT machinery.
    """
    x = _volume_array(volume)
    w = _kernel_array(kernel)
    _check_conv_shapes(x, w)
    kh, kw, kt, c_in = w.shape
    oh = x.shape[0] - kh + 1
    ow = x.shape[1] - kw + 1
    ot = x.shape[2] - kt + 1
    out = np.zeros((oh, ow, ot), dtype=np.float64)
    for i in range(oh):
        for j in range(ow):
            for t in range(ot):
                acc = 0.0
                for m in range(kh):
                    for n in range(kw):
                        for tau in range(kt):
                            for c in range(c_in):
                                acc += w[m, n, tau, c] * x[i + m, j + n, t + tau, c]
                out[i, j, t] = acc
    return out


class FftConvBank:
    """Spectral plan for repeatedly convolving volumes with a fixed kernel bank.

    Kernel spectra are computed once at construction; ``maps`` then costs one
    forward and one inverse transform per volume. The working grid is padded
    to 5-smooth sizes, which leaves results unchanged beyond float roundoff.
    """

    def __init__(self, weights, input_shape):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim == 4:
            w = w[np.newaxis]
        if w.ndim != 5:
            raise DimensionError(
                f"kernel bank needs axes (K, k_h, k_w, k_t, C), got shape {w.shape}"
            )
        h, wd, t = (int(n) for n in input_shape)
        _, kh, kw, kt, _ = w.shape
        if kh > h or kw > wd or kt > t:
            raise DimensionError(
                f"kernel {(kh, kw, kt)} larger than volume {(h, wd, t)}"
            )
        self.input_shape = (h, wd, t)
        self.channels = w.shape[4]
        self.kernel_extents = (kh, kw, kt)
        self.valid_shape = (h - kh + 1, wd - kw + 1, t - kt + 1)
        self._grid = tuple(
            _next_fast_len(a + b - 1)
            for a, b in zip(self.input_shape, self.kernel_extents)
        )
        # Flip all three axes so that the spectral product reproduces the
        # correlation indexing of direct_conv3d.
        flipped = w[:, ::-1, ::-1, ::-1, :]
        self._kspec = _fft.rfftn(flipped, s=self._grid, axes=(1, 2, 3), workers=_WORKERS)

    def maps(self, volume) -> np.ndarray:
        """Valid correlation maps for one volume, axes (kernel, H', W', T')."""
        x = _volume_array(volume)
        if x.shape[:3] != self.input_shape or x.shape[3] != self.channels:
            raise DimensionError(
                f"volume shape {x.shape} does not match plan "
                f"{self.input_shape + (self.channels,)}"
            )
        xs = _fft.rfftn(x, s=self._grid, axes=(0, 1, 2), workers=_WORKERS)
        prod = np.einsum("xyzc,kxyzc->kxyz", xs, self._kspec)
        full = _fft.irfftn(prod, s=self._grid, axes=(1, 2, 3), workers=_WORKERS)
        kh, kw, kt = self.kernel_extents
        oh, ow, ot = self.valid_shape
        return np.ascontiguousarray(
            full[:, kh - 1 : kh - 1 + oh, kw - 1 : kw - 1 + ow, kt - 1 : kt - 1 + ot]
        )


def fft_conv3d_bank(volume, weights) -> np.ndarray:
    """One-shot bank correlation; see FftConvBank for the reusable form."""
    x = _volume_array(volume)
    return FftConvBank(weights, x.shape[:3]).maps(x)


def fft_conv3d(volume, kernel) -> np.ndarray:
    """FFT-accelerated equivalent of direct_conv3d (agrees to <= 1e-9 relative)."""
    x = _volume_array(volume)
    w = _kernel_array(kernel)
    _check_conv_shapes(x, w)
    return fft_conv3d_bank(x, w[np.newaxis])[0]
