import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sthcsim.data_io import (
    ClipSpec,
    DatasetManifest,
    ManifestEntry,
    load_clip,
    load_samples,
    parse_manifest,
    read_pgm,
    split_by_subject,
    synth_dataset,
    uniform_frame_indices,
    write_dataset,
    write_pgm,
)
from sthcsim.errors import IngestionError, ManifestError, ParameterError


class TestFrameSampling:
    def test_thirty_one_to_sixteen(self):
        assert uniform_frame_indices(31, 16) == tuple(range(0, 31, 2))

    def test_equal_counts_identity(self):
        assert uniform_frame_indices(16, 16) == tuple(range(16))

    def test_too_few_frames(self):
        with pytest.raises(IngestionError):
            uniform_frame_indices(10, 16)

    @given(st.integers(1, 300), st.integers(1, 64))
    def test_monotone_and_endpoints(self, available, wanted):
        if available < wanted:
            with pytest.raises(IngestionError):
                uniform_frame_indices(available, wanted)
            return
        idx = uniform_frame_indices(available, wanted)
        assert len(idx) == wanted
        assert all(b >= a for a, b in zip(idx, idx[1:]))
        assert idx[0] == 0
        if wanted > 1:
            assert idx[-1] == available - 1


class TestPgm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(40)
        img = rng.integers(0, 256, size=(13, 17), dtype=np.uint8)
        path = tmp_path / "frame.pgm"
        write_pgm(path, img)
        assert np.array_equal(read_pgm(path), img)

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x00\x01\x02\x03")
        assert np.array_equal(read_pgm(path), [[0, 1], [2, 3]])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P6\n2 2\n255\n" + b"\x00" * 12)
        with pytest.raises(IngestionError, match="bad.pgm"):
            read_pgm(path)

    def test_truncated_raster(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(IngestionError, match="short.pgm"):
            read_pgm(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError):
            read_pgm(tmp_path / "nope.pgm")


def _write_clip(tmp_path, name, frames):
    """frames: list of uint8 (H, W) arrays; returns a manifest entry."""
    clip_dir = tmp_path / name
    clip_dir.mkdir()
    paths = []
    for i, frame in enumerate(frames):
        p = clip_dir / f"{i:04d}.pgm"
        write_pgm(p, frame)
        paths.append(str(p))
    return ManifestEntry(name, 1, "up", tuple(paths), f"{name}/*.pgm")


class TestLoadClip:
    def test_native_size_is_exact_division(self, tmp_path):
        rng = np.random.default_rng(41)
        frames = [rng.integers(0, 256, (60, 80), dtype=np.uint8) for _ in range(16)]
        entry = _write_clip(tmp_path, "native", frames)
        vol = load_clip(entry, ClipSpec())
        assert vol.values.shape == (60, 80, 16, 1)
        for t in range(16):
            assert np.array_equal(vol.values[:, :, t, 0], frames[t] / 255.0)

    def test_constant_gray_resize_exact(self, tmp_path):
        frames = [np.full((45, 70), 120, dtype=np.uint8) for _ in range(20)]
        entry = _write_clip(tmp_path, "gray", frames)
        vol = load_clip(entry, ClipSpec(num_frames=16, height=60, width=80))
        assert np.all(vol.values == 120 / 255.0)

    def test_too_few_frames(self, tmp_path):
        frames = [np.zeros((8, 8), dtype=np.uint8) for _ in range(3)]
        entry = _write_clip(tmp_path, "short", frames)
        with pytest.raises(IngestionError):
            load_clip(entry, ClipSpec(num_frames=16, height=8, width=8))

    def test_undecodable_frame_names_file(self, tmp_path):
        frames = [np.zeros((8, 8), dtype=np.uint8) for _ in range(4)]
        entry = _write_clip(tmp_path, "corrupt", frames)
        with open(entry.frame_paths[2], "wb") as fh:
            fh.write(b"garbage")
        with pytest.raises(IngestionError, match="0002.pgm"):
            load_clip(entry, ClipSpec(num_frames=4, height=8, width=8))

    def test_values_in_unit_interval(self, tmp_path):
        rng = np.random.default_rng(42)
        frames = [rng.integers(0, 256, (30, 40), dtype=np.uint8) for _ in range(16)]
        entry = _write_clip(tmp_path, "range", frames)
        vol = load_clip(entry, ClipSpec(16, 60, 80))
        assert vol.values.min() >= 0.0
        assert vol.values.max() <= 1.0


class TestManifest:
    def test_subject_range_enforced(self):
        with pytest.raises(ManifestError):
            DatasetManifest((ManifestEntry("x", 0, "up"),))
        with pytest.raises(ManifestError):
            DatasetManifest((ManifestEntry("x", 26, "up"),))

    def test_vocabulary_enforced_when_given(self):
        with pytest.raises(ManifestError):
            DatasetManifest((ManifestEntry("x", 3, "jumping"),), class_names=("up", "down"))

    def test_sorted_vocabulary_inferred(self):
        m = DatasetManifest(
            (ManifestEntry("a", 1, "up"), ManifestEntry("b", 2, "down"))
        )
        assert m.class_names == ("down", "up")
        assert m.label_index("up") == 1


class TestSplitBySubject:
    def test_full_dataset_sizes(self):
        # 4 classes x 100 clips (25 subjects, 4 appearances each)
        manifest, _ = synth_dataset(0, 100, ClipSpec(2, 6, 6))
        train, val, test = split_by_subject(manifest)
        assert (len(train), len(val), len(test)) == (192, 64, 144)
        subjects = lambda m: {e.subject for e in m.entries}
        assert subjects(train) == set(range(1, 13))
        assert subjects(val) == set(range(13, 17))
        assert subjects(test) == set(range(17, 26))

    def test_empty_manifest(self):
        train, val, test = split_by_subject(DatasetManifest(()))
        assert (len(train), len(val), len(test)) == (0, 0, 0)

    def test_subject_13_goes_to_validation(self):
        m = DatasetManifest((ManifestEntry("x", 13, "up"),))
        train, val, test = split_by_subject(m)
        assert (len(train), len(val), len(test)) == (0, 1, 0)

    def test_splits_keep_parent_vocabulary(self):
        m = DatasetManifest(
            (ManifestEntry("a", 1, "up"), ManifestEntry("b", 2, "down"))
        )
        train, _, _ = split_by_subject(m)
        assert train.class_names == m.class_names


class TestSynthDataset:
    def test_deterministic(self):
        spec = ClipSpec(4, 12, 16)
        m1, c1 = synth_dataset(7, 3, spec)
        m2, c2 = synth_dataset(7, 3, spec)
        assert m1 == m2
        for vid in c1:
            assert np.array_equal(c1[vid].values, c2[vid].values)

    def test_counts(self):
        manifest, clips = synth_dataset(1, 25, ClipSpec(2, 6, 6))
        assert len(manifest) == 100
        assert len(clips) == 100
        per_class = {c: 0 for c in manifest.class_names}
        for e in manifest.entries:
            per_class[e.label] += 1
        assert set(per_class.values()) == {25}

    def test_bad_per_class(self):
        with pytest.raises(ParameterError):
            synth_dataset(0, 0)

    def test_opposite_directions_share_frame_statistics(self):
        # single frames of "up" and "down" clips are identically distributed;
        # compare coarse per-frame means over many clips
        spec = ClipSpec(6, 24, 24)
        manifest, clips = synth_dataset(3, 25, spec)
        means = {"up": [], "down": []}
        for e in manifest.entries:
            if e.label in means:
                means[e.label].append(clips[e.video_id].values.mean())
        assert abs(np.mean(means["up"]) - np.mean(means["down"])) < 0.02


class TestWriteAndParse:
    def test_round_trip(self, tmp_path):
        spec = ClipSpec(4, 10, 12)
        manifest, clips = synth_dataset(5, 2, spec)
        path = write_dataset(manifest, clips, tmp_path / "ds")
        parsed = parse_manifest(path)
        assert len(parsed) == len(manifest)
        assert parsed.class_names == manifest.class_names
        for orig, loaded in zip(manifest.entries, parsed.entries):
            assert (orig.video_id, orig.subject, orig.label) == (
                loaded.video_id,
                loaded.subject,
                loaded.label,
            )
            assert len(loaded.frame_paths) == spec.num_frames
        # loaded clip equals the 8-bit rounding of the in-memory clip
        vol = load_clip(parsed.entries[0], spec)
        expect = np.rint(clips[manifest.entries[0].video_id].values * 255.0) / 255.0
        assert np.allclose(vol.values, expect, atol=1e-12)

    def test_samples_share_label_indexing(self, tmp_path):
        spec = ClipSpec(4, 10, 12)
        manifest, clips = synth_dataset(5, 2, spec)
        path = write_dataset(manifest, clips, tmp_path / "ds")
        parsed = parse_manifest(path)
        mem = load_samples(manifest, spec, clips=clips)
        disk = load_samples(parsed, spec)
        assert [lab for _, lab in mem] == [lab for _, lab in disk]

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("id\t3\tup\n")
        with pytest.raises(ManifestError):
            parse_manifest(path)

    def test_bad_subject_value(self, tmp_path):
        path = tmp_path / "bad2.tsv"
        path.write_text("id\tthree\tup\tframes/*.pgm\n")
        with pytest.raises(ManifestError):
            parse_manifest(path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(IngestionError):
            parse_manifest(tmp_path / "none.tsv")
