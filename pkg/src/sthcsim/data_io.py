"""Dataset ingestion: PGM frame sequences, manifests, subject splits, synthesis.

Clips are described by a tab-separated manifest (id, subject, class, frame
glob) pointing at binary PGM frames, which keeps loading dependency-free and
bit-reproducible. A seeded synthetic generator provides a self-contained
four-class motion dataset whose classes differ only in motion direction, so
single-frame appearance carries no class information.
"""

from __future__ import annotations

import glob
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import IngestionError, ManifestError, ParameterError
from .spectral_engine import VideoVolume

ACTION_CLASSES = ("clapping", "waving", "boxing", "running")
SYNTH_CLASSES = ("up", "down", "left", "right")

TRAIN_SUBJECTS = range(1, 13)
VAL_SUBJECTS = range(13, 17)
TEST_SUBJECTS = range(17, 26)


@dataclass(frozen=True)
class ClipSpec:
    """Target clip geometry: frame count and per-frame resolution."""

    num_frames: int = 16
    height: int = 60
    width: int = 80

    def __post_init__(self):
        if min(self.num_frames, self.height, self.width) < 1:
            raise ParameterError(f"clip spec extents must be positive, got {self}")


@dataclass(frozen=True)
class ManifestEntry:
    video_id: str
    subject: int
    label: str
    frame_paths: tuple[str, ...] = ()
    pattern: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    """Immutable clip listing with a fixed, sorted label vocabulary."""

    entries: tuple[ManifestEntry, ...]
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        entries = tuple(self.entries)
        for e in entries:
            if not 1 <= e.subject <= 25:
                raise ManifestError(
                    f"clip {e.video_id!r}: subject {e.subject} outside 1..25"
                )
        names = tuple(self.class_names)
        if not names:
            names = tuple(sorted({e.label for e in entries}))
        else:
            unknown = {e.label for e in entries} - set(names)
            if unknown:
                raise ManifestError(f"labels {sorted(unknown)} not in vocabulary {names}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "class_names", names)

    def label_index(self, label: str) -> int:
        return self.class_names.index(label)

    def __len__(self) -> int:
        return len(self.entries)


def split_by_subject(manifest: DatasetManifest):
    """Deterministic subject-disjoint partition: 1-12 train, 13-16 val, 17-25 test."""

    def take(subjects):
        keep = tuple(e for e in manifest.entries if e.subject in subjects)
        return DatasetManifest(keep, manifest.class_names)

    return take(TRAIN_SUBJECTS), take(VAL_SUBJECTS), take(TEST_SUBJECTS)


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM with maxval <= 255 into a (H, W) uint8 array."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IngestionError(f"cannot read frame {path}: {exc}") from exc

    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise IngestionError(f"truncated PGM header in {path}")
        return data[start:pos]

    try:
        magic = token()
        if magic != b"P5":
            raise IngestionError(f"{path} is not a binary PGM (magic {magic!r})")
        width = int(token())
        height = int(token())
        maxval = int(token())
    except ValueError as exc:
        raise IngestionError(f"bad PGM header in {path}: {exc}") from exc
    if width < 1 or height < 1:
        raise IngestionError(f"bad PGM dimensions {width}x{height} in {path}")
    if not 0 < maxval <= 255:
        raise IngestionError(f"unsupported PGM maxval {maxval} in {path}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) < width * height:
        raise IngestionError(f"truncated PGM raster in {path}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def write_pgm(path, image: np.ndarray):
    """Write a (H, W) uint8 array as binary PGM, maxval 255."""
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"expected a 2D uint8 image, got {img.dtype} {img.shape}")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.tobytes())


def uniform_frame_indices(available: int, wanted: int) -> tuple[int, ...]:
    """Monotone frame subsample hitting both endpoints: round(i (N-1)/(F-1))."""
    if wanted < 1:
        raise ParameterError("wanted frame count must be >= 1")
    if available < wanted:
        raise IngestionError(
            f"clip has {available} frames but {wanted} are required"
        )
    if wanted == 1:
        return (0,)
    scale = (available - 1) / (wanted - 1)
    return tuple(int(i * scale + 0.5) for i in range(wanted))


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Endpoint-aligned bilinear resize; identity when sizes match."""
    in_h, in_w = img.shape

    def axis_coords(n_in, n_out):
        if n_out == 1:
            return np.array([(n_in - 1) / 2.0])
        return np.arange(n_out) * ((n_in - 1) / (n_out - 1))

    r = axis_coords(in_h, out_h)
    c = axis_coords(in_w, out_w)
    r0 = np.floor(r).astype(int)
    c0 = np.floor(c).astype(int)
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    fr = (r - r0)[:, np.newaxis]
    fc = (c - c0)[np.newaxis, :]
    top = img[r0][:, c0] * (1.0 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1.0 - fc) + img[r1][:, c1] * fc
    return top * (1.0 - fr) + bot * fr


def load_clip(entry: ManifestEntry, spec: ClipSpec = ClipSpec()) -> VideoVolume:
    """Load one clip: uniform frame sampling, grayscale, resize, scale to [0, 1]."""
    indices = uniform_frame_indices(len(entry.frame_paths), spec.num_frames)
    frames = np.empty((spec.height, spec.width, spec.num_frames))
    for slot, idx in enumerate(indices):
        # PGM sources are single-channel; multi-channel sources would be
        # grayscale-averaged here before the resize.
        raw = read_pgm(entry.frame_paths[idx]).astype(np.float64)
        frames[:, :, slot] = _resize_bilinear(raw / 255.0, spec.height, spec.width)
    return VideoVolume(frames[..., np.newaxis])


def load_samples(manifest: DatasetManifest, spec: ClipSpec = ClipSpec(), clips=None):
    """(VideoVolume, label index) pairs for every manifest entry.

    ``clips`` maps video ids to in-memory volumes and bypasses disk loading
    (the synthetic path); otherwise frames are read per the manifest.
    """
    out = []
    for e in manifest.entries:
        vol = clips[e.video_id] if clips is not None else load_clip(e, spec)
        out.append((vol, manifest.label_index(e.label)))
    return out


def _motion_clip(rng: np.random.Generator, direction: str, spec: ClipSpec) -> np.ndarray:
    """One clip of a bright bar drifting with wraparound over a noisy background.

    The bar is a wrapped Gaussian ridge so positions are subpixel and every
    single frame looks the same for opposite directions; only the frame order
    tells up from down (and left from right).
    """
    h, w, t = spec.height, spec.width, spec.num_frames
    vertical = direction in ("up", "down")
    axis_len = h if vertical else w
    sign = -1.0 if direction in ("up", "left") else 1.0

    speed = rng.uniform(1.5, 4.5)
    phase = rng.uniform(0.0, axis_len)
    sigma = rng.uniform(2.0, 4.0)
    amplitude = rng.uniform(0.7, 1.0)
    noise = rng.uniform(0.04, 0.12)

    coords = np.arange(axis_len, dtype=np.float64)
    clip = np.empty((h, w, t))
    for frame in range(t):
        pos = (phase + sign * speed * frame) % axis_len
        dist = np.abs(coords - pos)
        dist = np.minimum(dist, axis_len - dist)
        profile = amplitude * np.exp(-0.5 * (dist / sigma) ** 2)
        plane = profile[:, np.newaxis] if vertical else profile[np.newaxis, :]
        clip[:, :, frame] = plane + noise * rng.random((h, w))
    return np.clip(clip, 0.0, 1.0)


def synth_dataset(seed: int, per_class: int, spec: ClipSpec = ClipSpec()):
    """Seeded four-class motion-direction dataset, fully in memory.

    Subjects cycle 1..25 within each class so the standard subject split
    applies. Returns (manifest, clips) where clips maps video id to volume.
    """
    if per_class < 1:
        raise ParameterError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    entries = []
    clips = {}
    for label in SYNTH_CLASSES:
        for i in range(per_class):
            video_id = f"{label}_{i:04d}"
            entries.append(ManifestEntry(video_id, i % 25 + 1, label))
            clips[video_id] = VideoVolume(_motion_clip(rng, label, spec)[..., np.newaxis])
    return DatasetManifest(tuple(entries)), clips


def write_dataset(manifest: DatasetManifest, clips, out_dir) -> str:
    """Materialize in-memory clips as PGM frame folders plus a manifest file.

    Returns the manifest path. Frames are rounded to 8-bit intensities.
    """
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    new_entries = []
    for e in manifest.entries:
        frame_dir = os.path.join(out_dir, "frames", e.video_id)
        os.makedirs(frame_dir, exist_ok=True)
        vol = clips[e.video_id].values[..., 0]
        paths = []
        for t in range(vol.shape[2]):
            p = os.path.join(frame_dir, f"{t:04d}.pgm")
            write_pgm(p, np.rint(vol[:, :, t] * 255.0).astype(np.uint8))
            paths.append(p)
        pattern = f"frames/{e.video_id}/*.pgm"
        new_entries.append(replace(e, frame_paths=tuple(paths), pattern=pattern))
    manifest_path = os.path.join(out_dir, "manifest.tsv")
    write_manifest(manifest_path, DatasetManifest(tuple(new_entries), manifest.class_names))
    return manifest_path


def write_manifest(path, manifest: DatasetManifest):
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            if not e.pattern:
                raise ManifestError(f"clip {e.video_id!r} has no frame pattern to record")
            fh.write(f"{e.video_id}\t{e.subject}\t{e.label}\t{e.pattern}\n")


def parse_manifest(path, class_names=()) -> DatasetManifest:
    """Parse a tab-separated manifest and resolve frame globs (sorted)."""
    base = os.path.dirname(os.path.abspath(os.fspath(path)))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IngestionError(f"cannot read manifest {path}: {exc}") from exc
    entries = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ManifestError(
                f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}"
            )
        video_id, subject_s, label, pattern = parts
        try:
            subject = int(subject_s)
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: bad subject {subject_s!r}") from exc
        frames = tuple(sorted(glob.glob(os.path.join(base, pattern))))
        entries.append(ManifestEntry(video_id, subject, label, frames, pattern))
    return DatasetManifest(tuple(entries), tuple(class_names))
