"""Tests for volume I/O, slice preprocessing, augmentation, splitting and the slice cache."""

from pathlib import Path

import numpy as np
import pytest

from models.config_models import DataSection
from models.data_models import RegionMask, SlicePair, VolumeSample
from pipeline.augmentation import AugmentationConfig, augment, draw_augmentation
from pipeline.dataset import SliceDataset, cached_slice_indices, read_case_slices, write_case_slices
from pipeline.preprocessing import (
    compose_regions,
    crop_to_brain,
    minmax_normalize,
    preprocess_volume,
    resize,
    select_slices,
)
from pipeline.splits import load_manifest, save_manifest, split_cases
from pipeline.synthetic import case_stats, synth_generate, synth_volume
from pipeline.volumes import list_cases, load_volume
from utils.errors import ConfigError, DataError
from utils.rng import make_rng
from workflows.preprocess_workflow import preprocess_dataset


def volume(labels: np.ndarray, channels: np.ndarray = None, case_id: str = "CASE") -> VolumeSample:
    if channels is None:
        channels = np.zeros((3, *labels.shape), dtype=np.float32)
    return VolumeSample(case_id=case_id, channels=channels, labels=labels.astype(np.int16))


def pair_from_labels(labels: np.ndarray, seed: int = 0) -> SlicePair:
    image = np.random.default_rng(seed).random((3, *labels.shape)).astype(np.float32)
    return SlicePair(image=image, mask=compose_regions(labels), case_id="CASE", slice_index=0)


def cache_files(cache_dir) -> dict:
    root = Path(cache_dir)
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.axtn"))}


@pytest.fixture
def labelled_plane():
    labels = np.zeros((16, 16), dtype=np.int16)
    labels[3:12, 4:13] = 2
    labels[5:10, 6:11] = 1
    labels[7:9, 7:9] = 4
    return labels


class TestSelectSlices:
    def test_fraction_uses_full_slice_area(self):
        labels = np.zeros((240, 240, 3), dtype=np.int16)
        labels[:20, :23, 0] = 2  # 460 / 57600 ≈ 0.0080
        labels[:13, :31, 1] = 1  # 403 / 57600 ≈ 0.0070 (just below)
        assert select_slices(volume(labels), 0.007) == [0]

    def test_zero_threshold_keeps_every_slice(self):
        labels = np.zeros((16, 16, 5), dtype=np.int16)
        assert select_slices(volume(labels), 0.0) == [0, 1, 2, 3, 4]

    def test_monotone_in_threshold(self, synthetic_volume):
        kept = [set(select_slices(synthetic_volume, t)) for t in (0.0, 0.007, 0.05, 0.2)]
        assert all(later <= earlier for earlier, later in zip(kept, kept[1:]))

    def test_threshold_out_of_range(self):
        with pytest.raises(DataError):
            select_slices(volume(np.zeros((16, 16, 2), dtype=np.int16)), 1.5)


class TestCropToBrain:
    @pytest.fixture
    def brain_volume(self):
        channels = np.zeros((3, 240, 240, 2), dtype=np.float32)
        channels[1, 50:178, 40:204, :] = 1.0
        labels = np.zeros((240, 240, 2), dtype=np.int16)
        labels[100:110, 100:110, 0] = 2
        return volume(labels, channels)

    def test_tight_box(self, brain_volume):
        cropped = crop_to_brain(brain_volume)
        assert cropped.spatial_shape == (128, 164, 2)
        assert cropped.meta.crop_rect == (50, 178, 40, 204)
        assert cropped.labels.sum() == brain_volume.labels.sum()

    def test_idempotent(self, brain_volume):
        once = crop_to_brain(brain_volume)
        twice = crop_to_brain(once)
        np.testing.assert_array_equal(once.channels, twice.channels)

    def test_fixed_crop_pads_small_brain(self):
        channels = np.zeros((3, 240, 240, 1), dtype=np.float32)
        channels[0, 60:100, 70:110, 0] = 1.0
        cropped = crop_to_brain(volume(np.zeros((240, 240, 1), dtype=np.int16), channels), fixed=(128, 164))
        assert cropped.spatial_shape == (128, 164, 1)
        assert cropped.channels.sum() == 40 * 40

    def test_fixed_crop_beyond_volume_zero_pads(self):
        channels = np.ones((3, 64, 64, 1), dtype=np.float32)
        cropped = crop_to_brain(volume(np.zeros((64, 64, 1), dtype=np.int16), channels), fixed=(128, 164))
        assert cropped.spatial_shape == (128, 164, 1)
        assert cropped.channels[0].sum() == 64 * 64

    def test_empty_volume(self):
        with pytest.raises(DataError):
            crop_to_brain(volume(np.zeros((16, 16, 2), dtype=np.int16)))


class TestNormalizeAndCompose:
    def test_minmax(self):
        np.testing.assert_allclose(minmax_normalize(np.array([2.0, 4.0, 6.0])), [0.0, 0.5, 1.0])

    def test_constant_slice_is_zero(self):
        out = minmax_normalize(np.full((4, 4), 7.0))
        assert out.dtype == np.float32
        assert not out.any()

    def test_region_composition(self):
        mask = compose_regions(np.array([[0, 1], [2, 4]]))
        np.testing.assert_array_equal(mask.wt, [[False, True], [True, True]])
        np.testing.assert_array_equal(mask.tc, [[False, True], [False, True]])
        np.testing.assert_array_equal(mask.et, [[False, False], [False, True]])

    def test_unknown_label(self):
        with pytest.raises(DataError, match="3"):
            compose_regions(np.array([[0, 3], [2, 4]]))

    def test_region_mask_rejects_broken_nesting(self):
        with pytest.raises(ValueError):
            RegionMask(wt=np.zeros((2, 2)), tc=np.ones((2, 2)), et=np.zeros((2, 2)))


class TestResize:
    def test_output_size_and_range(self, labelled_plane):
        image = np.random.default_rng(0).random((3, 112, 112)).astype(np.float32)
        mask = compose_regions(np.kron(labelled_plane, np.ones((7, 7), dtype=np.int16)))
        out = resize(image, mask, to=(224, 224))
        assert out.image.shape == (3, 224, 224)
        assert out.mask.shape == (224, 224)
        assert 0.0 <= out.image.min() and out.image.max() <= 1.0

    def test_checkerboard_mask_stays_binary(self):
        board = (np.indices((112, 112)).sum(axis=0) % 2).astype(bool)
        mask = RegionMask(wt=board, tc=np.zeros_like(board), et=np.zeros_like(board))
        out = resize(np.zeros((3, 112, 112), dtype=np.float32), mask, to=(224, 224))
        assert out.mask.wt.dtype == bool
        assert out.mask.wt.sum() == 4 * board.sum()


class TestAugmentation:
    def test_all_probabilities_zero_is_identity(self, labelled_plane):
        pair = pair_from_labels(labelled_plane)
        cfg = AugmentationConfig(p_rotate90=0, p_hflip=0, p_vflip=0, p_shift_scale_rotate=0)
        assert augment(pair, 123, cfg) is pair

    def test_flips_and_rotations_preserve_counts(self, labelled_plane):
        pair = pair_from_labels(labelled_plane)
        cfg = AugmentationConfig(p_rotate90=1, p_hflip=1, p_vflip=1, p_shift_scale_rotate=0)
        for seed in range(6):
            out = augment(pair, seed, cfg)
            assert out.mask.counts() == pair.mask.counts()
            assert out.image.sum() == pytest.approx(pair.image.sum(), rel=1e-6)

    def test_shift_scale_rotate_keeps_nesting(self, labelled_plane):
        pair = pair_from_labels(labelled_plane)
        cfg = AugmentationConfig(p_shift_scale_rotate=1)
        out = augment(pair, 5, cfg)
        assert out.image.shape == pair.image.shape
        assert not (out.mask.tc & ~out.mask.wt).any()
        assert not (out.mask.et & ~out.mask.tc).any()

    def test_same_seed_same_result(self, labelled_plane):
        pair = pair_from_labels(labelled_plane)
        a, b = augment(pair, 77), augment(pair, 77)
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.mask.stack(), b.mask.stack())
        assert draw_augmentation(77) == draw_augmentation(77)


class TestSplits:
    @pytest.mark.parametrize("n,sizes", [(1251, (1000, 125, 126)), (10, (8, 1, 1))])
    def test_partition_sizes(self, n, sizes):
        manifest = split_cases([f"C{i:05d}" for i in range(n)], seed=3)
        assert (len(manifest.train), len(manifest.val), len(manifest.test)) == sizes

    def test_disjoint_and_exhaustive(self):
        ids = [f"C{i}" for i in range(37)]
        manifest = split_cases(ids, seed=1)
        parts = [set(manifest.train), set(manifest.val), set(manifest.test)]
        assert set.union(*parts) == set(ids)
        assert sum(len(p) for p in parts) == len(ids)

    def test_seeded_and_order_independent(self):
        ids = [f"C{i}" for i in range(20)]
        assert split_cases(ids, seed=4) == split_cases(list(reversed(ids)), seed=4)
        assert split_cases(ids, seed=4).train != split_cases(ids, seed=5).train

    def test_invalid_input(self):
        with pytest.raises(ConfigError):
            split_cases(["a", "b"], fractions=(0.5, 0.5, 0.5))
        with pytest.raises(DataError):
            split_cases(["a", "a", "b"])

    def test_manifest_file_round_trip(self, tmp_path):
        manifest = split_cases([f"C{i}" for i in range(10)], seed=2)
        path = save_manifest(manifest, tmp_path / "split.json")
        assert load_manifest(path) == manifest
        with pytest.raises(DataError):
            load_manifest(tmp_path / "missing.json")


class TestSynthetic:
    def test_deterministic(self):
        a = synth_volume("SYN_00000", (24, 24, 16), make_rng(1, "synth", 0))
        b = synth_volume("SYN_00000", (24, 24, 16), make_rng(1, "synth", 0))
        assert a.channels.tobytes() == b.channels.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_central_slice_has_tumour(self, synthetic_volume):
        stats = case_stats(synthetic_volume)
        assert stats.central_tumor_fraction > 0.007
        assert all(count > 0 for count in stats.label_voxels.values())

    def test_regions_nest_on_every_slice(self, synthetic_volume):
        for k in range(synthetic_volume.spatial_shape[2]):
            compose_regions(synthetic_volume.labels[:, :, k])

    def test_tumour_inside_brain(self, synthetic_volume):
        brain = (synthetic_volume.channels != 0).any(axis=0)
        assert not ((synthetic_volume.labels != 0) & ~brain).any()

    def test_too_small(self):
        with pytest.raises(ConfigError):
            synth_volume("X", (8, 32, 32), make_rng(0, "synth", 0))

    def test_generate_writes_layout(self, tmp_path):
        stats = synth_generate(2, (20, 20, 16), seed=3, out_dir=tmp_path)
        assert [s.case_id for s in stats] == ["SYN_00000", "SYN_00001"]
        assert list_cases(tmp_path) == ["SYN_00000", "SYN_00001"]
        loaded = load_volume(tmp_path, "SYN_00001")
        expected = synth_volume("SYN_00001", (20, 20, 16), make_rng(3, "synth", 1))
        np.testing.assert_array_equal(loaded.channels, expected.channels)
        np.testing.assert_array_equal(loaded.labels, expected.labels)

    def test_generate_rejects_zero_cases(self, tmp_path):
        with pytest.raises(ConfigError):
            synth_generate(0, (20, 20, 16), seed=0, out_dir=tmp_path)


class TestVolumes:
    def test_missing_sequences_listed(self, tmp_path):
        synth_generate(1, (16, 16, 16), seed=0, out_dir=tmp_path)
        (tmp_path / "SYN_00000" / "flair.axtn").unlink()
        (tmp_path / "SYN_00000" / "seg.axtn").unlink()
        with pytest.raises(DataError, match="flair, seg"):
            load_volume(tmp_path, "SYN_00000")

    def test_missing_root(self, tmp_path):
        with pytest.raises(DataError):
            list_cases(tmp_path / "nowhere")


class TestPreprocessVolume:
    def test_pairs_follow_retained_slices(self, synthetic_volume, synthetic_pairs):
        assert [p.slice_index for p in synthetic_pairs] == select_slices(synthetic_volume, 0.007)
        for pair in synthetic_pairs:
            assert pair.image.shape == (3, 32, 32)
            assert pair.case_id == "SYN_00000"

    def test_no_slice_selected(self):
        v = synth_volume("X", (16, 16, 16), make_rng(0, "synth", 0))
        assert preprocess_volume(v, threshold=1.0, size=(32, 32)) == []

    @pytest.mark.slow
    def test_full_size_volume(self):
        v = synth_volume("SYN_00000", (240, 240, 155), make_rng(0, "synth", 0))
        pairs = preprocess_volume(v)
        assert pairs
        assert all(p.image.shape == (3, 224, 224) and p.mask.shape == (224, 224) for p in pairs)

        recount = [k for k in range(155) if np.count_nonzero(v.labels[:, :, k]) / (240 * 240) >= 0.007]
        assert [p.slice_index for p in pairs] == recount
        for pair in pairs:
            assert pair.image.min() >= 0.0 and pair.image.max() <= 1.0
            assert not (pair.mask.et & ~pair.mask.tc).any()
            assert not (pair.mask.tc & ~pair.mask.wt).any()


class TestSliceCache:
    def test_round_trip_and_stale_removal(self, tmp_path, synthetic_pairs):
        assert write_case_slices(tmp_path, "SYN_00000", synthetic_pairs) == len(synthetic_pairs)
        loaded = read_case_slices(tmp_path, "SYN_00000")
        assert [p.slice_index for p in loaded] == [p.slice_index for p in synthetic_pairs]
        for got, want in zip(loaded, synthetic_pairs):
            np.testing.assert_array_equal(got.image, want.image)
            np.testing.assert_array_equal(got.mask.stack(), want.mask.stack())

        k = synthetic_pairs[0].slice_index
        assert (tmp_path / "img" / f"SYN_00000_{k}.axtn").is_file()
        assert (tmp_path / "msk" / f"SYN_00000_{k}.axtn").is_file()

        write_case_slices(tmp_path, "SYN_00000", synthetic_pairs[:1])
        assert cached_slice_indices(tmp_path, "SYN_00000") == [synthetic_pairs[0].slice_index]

    def test_empty_cache(self, tmp_path):
        with pytest.raises(DataError):
            SliceDataset.from_cache(tmp_path, ["SYN_00000"])


class TestSliceDataset:
    @pytest.fixture
    def dataset(self, synthetic_pairs):
        return SliceDataset.from_pairs(synthetic_pairs)

    def test_batches_cover_every_slice_once(self, dataset):
        seen = [i for _, _, idx in dataset.batches(3, epoch=0, seed=1) for i in idx]
        assert sorted(seen) == list(range(len(dataset)))

    def test_order_seeded_by_epoch(self, dataset):
        order = lambda epoch: [i for _, _, idx in dataset.batches(len(dataset), epoch=epoch, seed=1) for i in idx]
        assert order(0) == order(0)
        assert any(order(0) != order(e) for e in (1, 2, 3))

    def test_augmented_batches_deterministic(self, dataset):
        cfg = AugmentationConfig()
        a = [img for img, _, _ in dataset.batches(4, epoch=2, seed=9, augment_config=cfg)]
        b = [img for img, _, _ in dataset.batches(4, epoch=2, seed=9, augment_config=cfg)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_empty(self):
        with pytest.raises(DataError):
            SliceDataset.from_pairs([])


class TestPreprocessWorkflow:
    @pytest.fixture
    def data(self, tmp_path):
        synth_generate(4, (32, 32, 20), seed=0, out_dir=tmp_path / "raw")
        return DataSection(
            root=str(tmp_path / "raw"),
            cache_dir=str(tmp_path / "cache"),
            manifest_path=str(tmp_path / "split.json"),
            image_size=32,
        )

    def test_manifest_matches_cache(self, data):
        manifest = preprocess_dataset(data, seed=0, threads=2)
        ids = {f"SYN_{i:05d}" for i in range(4)}
        assert set(manifest.train) | set(manifest.val) | set(manifest.test) == ids
        for name in ("train", "val", "test"):
            recount = sum(len(cached_slice_indices(data.cache_dir, c)) for c in manifest.partition(name))
            assert manifest.slice_counts[name] == recount
        assert load_manifest(data.manifest_path) == manifest

    def test_rerun_is_idempotent(self, data):
        first = preprocess_dataset(data, seed=0, threads=1)
        files = cache_files(data.cache_dir)
        second = preprocess_dataset(data, seed=0, threads=2)
        assert first == second
        assert cache_files(data.cache_dir) == files
