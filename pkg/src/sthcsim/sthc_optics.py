"""Optical pipeline of the spatio-temporal holographic correlator.

Models the recording sequence end to end: a broadband recording pulse writes
a reference, each (flipped, decomposed, optionally quantized) kernel is stored
as a frequency-domain grating in the atomic medium, and later videos diffract
off the stored gratings so the photon echo delivers the valid 3D convolution.
Signed kernels ride on two intensity-only channels (positive and negative
halves) that are recombined by digital subtraction.

The atomic response is modeled as the ideal spectral triple product
video x kernel x conj(pulse) with a single scalar coherence-decay factor over
the storage-to-readout interval; per-atom dynamics are out of scope.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BandwidthWarning,
    CoherenceDecayWarning,
    CrosstalkError,
    DimensionError,
    EncodingError,
    LayoutCapacityError,
    ParameterError,
    TimingError,
)
from .spectral_engine import (
    FeatureVolume,
    KernelSet,
    _volume_array,
    forward_st_fft,
    inverse_st_fft,
)


@dataclass(frozen=True)
class OpticalParams:
    """Physical settings of the correlator.

    ``mode="ideal"`` replaces the recording pulse with a perfectly flat
    spectrum; ``"physical"`` builds the pulse as a small filled circle on the
    modulator and reports how flat its spectrum actually is.
    ``slm_levels=None`` disables intensity quantization.
    """

    mode: str = "physical"
    pulse_radius: int = 1
    ihb_bandwidth: float = 6.28e8          # rad/s
    coherence_lifetime: float = math.inf   # seconds
    slm_levels: int | None = 256
    flatness_min: float = 0.9
    guard_px: int = 4

    def __post_init__(self):
        if self.mode not in ("ideal", "physical"):
            raise ParameterError(f"mode must be 'ideal' or 'physical', got {self.mode!r}")
        if self.pulse_radius < 1:
            raise ParameterError("pulse_radius must be >= 1")
        if not self.ihb_bandwidth > 0:
            raise ParameterError("ihb_bandwidth must be positive")
        if not self.coherence_lifetime > 0:
            raise ParameterError("coherence_lifetime must be positive")
        if self.slm_levels is not None and self.slm_levels < 2:
            raise ParameterError("slm_levels must be >= 2 (or None to disable)")
        if not 0.0 < self.flatness_min <= 1.0:
            raise ParameterError("flatness_min must lie in (0, 1]")
        if self.guard_px < 0:
            raise ParameterError("guard_px must be >= 0")

    @classmethod
    def ideal(cls, **overrides) -> "OpticalParams":
        """Parity configuration: flat pulse, no quantization, no decay."""
        base = dict(mode="ideal", slm_levels=None, coherence_lifetime=math.inf)
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class SignedKernelPair:
    """Disjoint non-negative halves of a signed kernel: positive - negative = original."""

    positive: np.ndarray
    negative: np.ndarray


@dataclass(frozen=True)
class EchoTiming:
    """Arrival times of the pulse sequence; the echo forms after the third signal."""

    t_pulse: float
    t_second: float
    t_third: float

    def __post_init__(self):
        if not self.t_pulse < self.t_second < self.t_third:
            raise TimingError(
                f"need t_pulse < t_second < t_third, got "
                f"({self.t_pulse}, {self.t_second}, {self.t_third})"
            )

    @property
    def t_echo(self) -> float:
        return self.t_second + self.t_third - self.t_pulse


def echo_time(timing: EchoTiming) -> float:
    """Echo arrival time t_second + t_third - t_pulse (always after t_third)."""
    return timing.t_echo


@dataclass(frozen=True)
class RecordingPulse:
    """Recording pulse field on the modulator grid plus its spectrum.

    ``flatness`` is min|P|/max|P| over the grid (1.0 in ideal mode) and
    ``center`` the pulse position, which later fixes where the echo forms.
    """

    field: np.ndarray
    spectrum: np.ndarray
    flatness: float
    center: tuple[int, int, int]


@dataclass(frozen=True)
class GratingField:
    """Stored atomic grating: conj(pulse) x kernel spectra with coherence decay.

    ``response`` keeps the undecayed product per input channel and ``decay``
    the scalar storage-to-readout attenuation, so scaling stays exact;
    ``values`` is the decayed grating the medium actually holds.
    """

    response: np.ndarray            # (C, gh, gw, gt) complex
    decay: float
    pulse_center: tuple[int, int, int]

    @property
    def values(self) -> np.ndarray:
        return self.response * self.decay


@dataclass(frozen=True)
class LayoutTile:
    channel: str                    # e.g. "k03+" / "k03-"
    top_left: tuple[int, int]
    extents: tuple[int, int]


@dataclass(frozen=True)
class SlmFrameLayout:
    """Placement of the per-kernel channel pairs on the modulator canvas.

    A tile's output map grows it by ``map_extents`` per axis; expanded tiles
    must stay pairwise disjoint or neighbouring channels crosstalk.
    """

    canvas: tuple[int, int]
    tiles: tuple[LayoutTile, ...]
    map_extents: tuple[int, int]
    guard_px: int = 0


def _expanded(tile: LayoutTile, map_extents) -> tuple[int, int, int, int]:
    r, c = tile.top_left
    th, tw = tile.extents
    return (r, c, r + th + map_extents[0], c + tw + map_extents[1])


def validate_layout(layout: SlmFrameLayout):
    """Brute-force layout check: tiles inside the canvas, expanded tiles disjoint."""
    ch, cw = layout.canvas
    for tile in layout.tiles:
        r, c = tile.top_left
        th, tw = tile.extents
        if r < 0 or c < 0 or r + th > ch or c + tw > cw:
            raise CrosstalkError(
                f"tile {tile.channel} at {tile.top_left} size {tile.extents} "
                f"does not fit canvas {layout.canvas}"
            )
    boxes = [_expanded(t, layout.map_extents) for t in layout.tiles]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            r0, c0, r1, c1 = boxes[i]
            s0, d0, s1, d1 = boxes[j]
            if r0 < s1 and s0 < r1 and c0 < d1 and d0 < c1:
                raise CrosstalkError(
                    f"channels {layout.tiles[i].channel} and "
                    f"{layout.tiles[j].channel} overlap once grown by the "
                    f"output-map extents {layout.map_extents}"
                )


def plan_slm_layout(
    num_kernels: int,
    tile_extents,
    map_extents,
    guard_px: int,
    canvas=None,
) -> SlmFrameLayout:
    """Place 2K channel tiles (positive/negative pair per kernel) on a grid.

    Pitch per axis is tile + map + guard so expanded tiles cannot touch.
    Row-major placement keeps each kernel's pair adjacent. With several grid
    shapes fitting the canvas the one with the most columns wins.
    ``canvas=None`` sizes a canvas for a near-square grid automatically.
    """
    if num_kernels < 1:
        raise ParameterError("num_kernels must be >= 1")
    th, tw = (int(n) for n in tile_extents)
    mh, mw = (int(n) for n in map_extents)
    if min(th, tw, mh, mw) < 1 or guard_px < 0:
        raise ParameterError("tile/map extents must be positive and guard_px >= 0")
    n_tiles = 2 * num_kernels
    pitch_h = th + mh + guard_px
    pitch_w = tw + mw + guard_px

    def required(rows, cols):
        return ((rows - 1) * pitch_h + th + mh, (cols - 1) * pitch_w + tw + mw)

    def place(rows, cols, canvas_hw):
        tiles = []
        for i in range(n_tiles):
            kernel, sign = divmod(i, 2)
            tiles.append(
                LayoutTile(
                    channel=f"k{kernel:02d}{'+' if sign == 0 else '-'}",
                    top_left=((i // cols) * pitch_h, (i % cols) * pitch_w),
                    extents=(th, tw),
                )
            )
        layout = SlmFrameLayout(tuple(canvas_hw), tuple(tiles), (mh, mw), guard_px)
        validate_layout(layout)
        return layout

    if canvas is None:
        cols = math.isqrt(n_tiles - 1) + 1
        rows = -(-n_tiles // cols)
        return place(rows, cols, required(rows, cols))

    ch, cw = (int(n) for n in canvas)
    for cols in range(n_tiles, 0, -1):
        rows = -(-n_tiles // cols)
        rh, rw = required(rows, cols)
        if rh <= ch and rw <= cw:
            return place(rows, cols, (ch, cw))
    candidates = []
    for cols in range(n_tiles, 0, -1):
        rows = -(-n_tiles // cols)
        rh, rw = required(rows, cols)
        candidates.append((rh * rw, (rh, rw)))
    best = min(candidates)[1]
    raise LayoutCapacityError(
        f"canvas ({ch}, {cw}) cannot isolate {n_tiles} channels; "
        f"minimum canvas {best}"
    )


def make_recording_pulse(params: OpticalParams, grid) -> RecordingPulse:
    """Build the recording pulse on the padded grid and transform it.

    Ideal mode is a unit impulse whose spectrum is exactly 1 everywhere.
    Physical mode is a filled circle (strict radius, so radius 1 is a single
    pixel) at the grid center lasting one temporal sample; a flatness ratio
    below ``flatness_min`` means the pulse spectrum cannot stand in for a
    plane wave and is reported as a warning.
    """
    gh, gw, gt = (int(n) for n in grid)
    if min(gh, gw, gt) < 1:
        raise DimensionError(f"grid extents must be positive, got {grid}")
    if params.mode == "ideal":
        fld = np.zeros((gh, gw, gt))
        fld[0, 0, 0] = 1.0
        return RecordingPulse(fld, np.ones((gh, gw, gt), dtype=np.complex128), 1.0, (0, 0, 0))

    cy, cx = gh // 2, gw // 2
    yy, xx = np.ogrid[:gh, :gw]
    disk = ((yy - cy) ** 2 + (xx - cx) ** 2) < params.pulse_radius**2
    fld = np.zeros((gh, gw, gt))
    fld[:, :, 0] = disk.astype(np.float64)
    spectrum = forward_st_fft(fld, (gh, gw, gt))
    mags = np.abs(spectrum)
    peak = float(mags.max())
    flatness = float(mags.min() / peak) if peak > 0 else 0.0
    if flatness < params.flatness_min:
        warnings.warn(
            BandwidthWarning(
                f"recording-pulse flatness {flatness:.3g} below required "
                f"{params.flatness_min}; pulse spectrum does not cover the "
                f"signal band like a plane wave"
            )
        )
    return RecordingPulse(fld, spectrum, flatness, (cy, cx, 0))


def decompose_kernel(kernel) -> SignedKernelPair:
    """Split a signed kernel into non-negative halves with disjoint support."""
    k = np.asarray(kernel, dtype=np.float64)
    return SignedKernelPair(np.maximum(k, 0.0), np.maximum(-k, 0.0))


def quantize_slm(fld, levels: int) -> np.ndarray:
    """Snap a non-negative field onto ``levels`` even steps over [0, max].

    Worst-case elementwise error is max / (2 (levels - 1)); an all-zero field
    passes through unchanged and already-quantized fields are fixed points.
    """
    f = np.asarray(fld, dtype=np.float64)
    if f.size and f.min() < 0:
        raise EncodingError(
            "signed data reached the intensity encoder; decompose it first"
        )
    if levels < 2:
        raise ParameterError("levels must be >= 2")
    peak = float(f.max()) if f.size else 0.0
    if peak == 0.0:
        return f.copy()
    step = peak / (levels - 1)
    return np.round(f / step) * step


def record_grating(
    pulse: RecordingPulse,
    kernel_spectrum,
    timing: EchoTiming | None,
    params: OpticalParams,
) -> GratingField:
    """Store conj(pulse) x kernel spectra, attenuated by coherence decay.

    ``timing=None`` means no storage interval (decay exactly 1). The decay is
    one scalar over the storage-to-readout interval t_third - t_second; an
    interval beyond five lifetimes is flagged as decayed beyond use.
    """
    ks = np.asarray(kernel_spectrum, dtype=np.complex128)
    if ks.ndim == 3:
        ks = ks[np.newaxis]
    if ks.ndim != 4:
        raise DimensionError(
            f"kernel spectrum needs axes (C, gh, gw, gt) or (gh, gw, gt), got {ks.shape}"
        )
    if ks.shape[1:] != pulse.spectrum.shape:
        raise DimensionError(
            f"kernel spectrum grid {ks.shape[1:]} does not match pulse grid "
            f"{pulse.spectrum.shape}"
        )
    if timing is None:
        decay = 1.0
    else:
        interval = timing.t_third - timing.t_second
        if interval > 5.0 * params.coherence_lifetime:
            warnings.warn(
                CoherenceDecayWarning(
                    f"storage interval {interval:.3g} s exceeds five coherence "
                    f"lifetimes ({params.coherence_lifetime:.3g} s); grating "
                    f"decayed beyond use"
                )
            )
        decay = math.exp(-interval / params.coherence_lifetime)
    response = np.conj(pulse.spectrum)[np.newaxis] * ks
    return GratingField(response, float(decay), pulse.center)


def _echo_alignment_ramp(grid, center) -> np.ndarray:
    """Spectral phase ramp aligning the readout to where the echo forms.

    A pulse at position s imprints exp(+2i pi k s / N) on the grating; the
    echo therefore appears displaced by -s and the detector view compensates
    with the conjugate ramp. Exact for integer pixel positions.
    """
    ramp = np.ones((1, 1, 1), dtype=np.complex128)
    for axis, (n, s) in enumerate(zip(grid, center)):
        if s == 0:
            continue
        k = np.fft.fftfreq(n)
        ph = np.exp(-2j * np.pi * k * s)
        shape = [1, 1, 1]
        shape[axis] = n
        ramp = ramp * ph.reshape(shape)
    return ramp


def _video_spectra(x: np.ndarray, grid) -> np.ndarray:
    return np.stack([forward_st_fft(x[..., c], grid) for c in range(x.shape[3])])


def _readout(video_spectra: np.ndarray, grating: GratingField, kernel_extents) -> np.ndarray:
    grid = grating.response.shape[1:]
    echo = np.einsum("cxyz,cxyz->xyz", video_spectra, grating.response)
    if grating.pulse_center != (0, 0, 0):
        echo = echo * _echo_alignment_ramp(grid, grating.pulse_center)
    kh, kw, kt = kernel_extents
    crop = tuple(g - 2 * (k - 1) for g, k in zip(grid, (kh, kw, kt)))
    out = inverse_st_fft(echo, crop, offset=(kh - 1, kw - 1, kt - 1))
    return out * grating.decay


def diffract_and_readout(video, grating: GratingField, kernel_shape) -> np.ndarray:
    """Diffract a video off a stored grating and read out the echo.

    The echo spectrum is the product of the video spectrum and the grating;
    the inverse transform cropped to the valid region is the correlation the
    kernel was stored to compute, scaled by the grating decay.
    """
    x = _volume_array(video)
    if x.min() < 0:
        raise EncodingError("video intensities must be non-negative to enter the modulator")
    kh, kw, kt = kernel_shape.k_h, kernel_shape.k_w, kernel_shape.k_t
    need = (x.shape[0] + kh - 1, x.shape[1] + kw - 1, x.shape[2] + kt - 1)
    if grating.response.shape[1:] != need:
        raise DimensionError(
            f"grating grid {grating.response.shape[1:]} does not match "
            f"video+kernel-1 grid {need}"
        )
    if grating.response.shape[0] != x.shape[3]:
        raise DimensionError(
            f"grating holds {grating.response.shape[0]} channels, video has {x.shape[3]}"
        )
    return _readout(_video_spectra(x, need), grating, (kh, kw, kt))


class OpticalConvEngine:
    """Records a kernel bank once, then diffracts any number of videos.

    Mirrors the physical operating mode: gratings are written one time per
    kernel pair and are immutable afterwards, so evaluating a dataset reuses
    the stored medium instead of re-recording per sample.
    """

    def __init__(self, kernels: KernelSet, params: OpticalParams, layout: SlmFrameLayout,
                 input_shape, timing: EchoTiming | None = None):
        h, w, t = (int(n) for n in input_shape)
        ks = kernels.shape
        if not ks.fits_input(h, w, t):
            raise DimensionError(f"kernel {ks} larger than input {(h, w, t)}")
        validate_layout(layout)
        if len(layout.tiles) != 2 * kernels.count:
            raise CrosstalkError(
                f"layout provides {len(layout.tiles)} tiles but "
                f"{2 * kernels.count} channels are needed (one +/- pair per kernel)"
            )
        for tile in layout.tiles:
            if tile.extents[0] < ks.k_h or tile.extents[1] < ks.k_w:
                raise CrosstalkError(
                    f"tile {tile.channel} extents {tile.extents} cannot carry a "
                    f"{(ks.k_h, ks.k_w)} kernel"
                )
        valid_hw = (h - ks.k_h + 1, w - ks.k_w + 1)
        if layout.map_extents[0] < valid_hw[0] or layout.map_extents[1] < valid_hw[1]:
            raise CrosstalkError(
                f"layout guards assume output maps {layout.map_extents}, but this "
                f"input produces {valid_hw}"
            )

        self.kernels = kernels
        self.params = params
        self.layout = layout
        self.timing = timing
        self.input_shape = (h, w, t)
        self.kernel_extents = (ks.k_h, ks.k_w, ks.k_t)
        self.valid_shape = (h - ks.k_h + 1, w - ks.k_w + 1, t - ks.k_t + 1)
        grid = tuple(a + b - 1 for a, b in zip(self.input_shape, self.kernel_extents))
        self.pulse = make_recording_pulse(params, grid)
        self.gratings: list[tuple[GratingField, GratingField]] = []
        for k in range(kernels.count):
            flipped = kernels.weights[k][::-1, ::-1, ::-1, :]
            pair = decompose_kernel(flipped)
            pos, neg = pair.positive, pair.negative
            if params.slm_levels is not None:
                pos = quantize_slm(pos, params.slm_levels)
                neg = quantize_slm(neg, params.slm_levels)
            spectra = tuple(
                np.stack([forward_st_fft(half[..., c], grid) for c in range(half.shape[3])])
                for half in (pos, neg)
            )
            self.gratings.append(
                (
                    record_grating(self.pulse, spectra[0], timing, params),
                    record_grating(self.pulse, spectra[1], timing, params),
                )
            )

    def conv_maps(self, video) -> np.ndarray:
        """Subtracted (+ minus -) correlation maps, no bias, no activation."""
        x = _volume_array(video)
        if x.min() < 0:
            raise EncodingError("video intensities must be non-negative to enter the modulator")
        if x.shape[:3] != self.input_shape:
            raise DimensionError(
                f"video shape {x.shape[:3]} does not match recorded grid for "
                f"{self.input_shape}"
            )
        grid = tuple(a + b - 1 for a, b in zip(self.input_shape, self.kernel_extents))
        spectra = _video_spectra(x, grid)
        maps = np.empty((self.kernels.count,) + self.valid_shape)
        for k, (g_pos, g_neg) in enumerate(self.gratings):
            maps[k] = _readout(spectra, g_pos, self.kernel_extents) - _readout(
                spectra, g_neg, self.kernel_extents
            )
        return maps

    def layer(self, video) -> FeatureVolume:
        """Full optical layer output: subtracted maps, bias, ReLU."""
        maps = self.conv_maps(video)
        biased = maps + self.kernels.biases[:, np.newaxis, np.newaxis, np.newaxis]
        return FeatureVolume(np.maximum(biased, 0.0))


def optical_conv_maps(video, kernels: KernelSet, params: OpticalParams,
                      layout: SlmFrameLayout, timing: EchoTiming | None = None) -> np.ndarray:
    """One-shot subtracted maps (pre-bias, pre-activation) for one video."""
    x = _volume_array(video)
    return OpticalConvEngine(kernels, params, layout, x.shape[:3], timing).conv_maps(x)


def optical_conv_layer(video, kernels: KernelSet, params: OpticalParams,
                       layout: SlmFrameLayout, timing: EchoTiming | None = None) -> FeatureVolume:
    """Full optical convolution layer for one video (records, diffracts, recombines)."""
    x = _volume_array(video)
    return OpticalConvEngine(kernels, params, layout, x.shape[:3], timing).layer(x)


def check_bandwidth(video, frame_interval: float, params: OpticalParams) -> bool:
    """True iff the medium's frequency spread covers the video's temporal band.

    The sampling bandwidth is 2 pi / frame_interval; exceeding the
    inhomogeneous broadening is advisory (a warning), never fatal.
    """
    if not frame_interval > 0:
        raise ParameterError("frame_interval must be positive")
    needed = 2.0 * math.pi / frame_interval
    if needed <= params.ihb_bandwidth:
        return True
    frames = _volume_array(video).shape[2]
    warnings.warn(
        BandwidthWarning(
            f"temporal sampling bandwidth {needed:.3g} rad/s (frame interval "
            f"{frame_interval:.3g} s, {frames} frames) exceeds the medium's "
            f"{params.ihb_bandwidth:.3g} rad/s"
        )
    )
    return False
