import numpy as np
import pytest

from bathyseg.errors import EmptyLabel, InsufficientInputs, NoValidPlacement, ShipOnNodata
from bathyseg.grid_io import GeoGrid, RasterFormat, read_grid
from bathyseg.synthgen import (
    DatasetManifest,
    ShipPatch,
    SynthConfig,
    assign_splits,
    build_dataset,
    composite,
    extract_ship,
    generate_terrain,
    load_pair,
    synthetic_ship,
)


def grid_of(depth, valid=None, px=1.0):
    depth = np.asarray(depth, dtype=np.float32)
    if valid is None:
        valid = np.ones_like(depth, dtype=bool)
    return GeoGrid(depth=depth, valid=valid, origin_easting=0.0,
                   origin_northing=depth.shape[0] * px, pixel_size=px, crs_id=0)


class FixedRng:
    """Duck-typed generator forcing a chosen pose and depth draw."""

    def __init__(self, theta, r0, c0, normal_value):
        self.theta = theta
        self.r0, self.c0 = r0, c0
        self.normal_value = normal_value
        self.int_calls = 0

    def uniform(self, lo, hi):
        return self.theta

    def integers(self, lo, hi=None):
        self.int_calls += 1
        return self.r0 if self.int_calls % 2 == 1 else self.c0

    def normal(self, mean, sigma):
        return self.normal_value


class TestExtractShip:
    def test_uniform_depth_zero_relief(self):
        g = grid_of(np.full((3, 3), 50.0))
        patch = extract_ship(g, np.ones((3, 3), dtype=np.uint8), "w1")
        assert patch.footprint.all()
        assert np.allclose(patch.relief, 0.0)
        assert patch.source_id == "w1"

    def test_mean_subtraction(self):
        g = grid_of([[49.0, 51.0]])
        patch = extract_ship(g, np.array([[1, 1]], dtype=np.uint8))
        assert np.allclose(patch.relief, [[-1.0, 1.0]])

    def test_crops_to_bounding_box(self):
        depth = np.full((6, 6), 30.0)
        label = np.zeros((6, 6), dtype=np.uint8)
        label[2:4, 1:5] = 1
        patch = extract_ship(grid_of(depth), label)
        assert patch.relief.shape == (2, 4)

    def test_label_on_nodata(self):
        valid = np.ones((3, 3), dtype=bool)
        valid[1, 1] = False
        g = grid_of(np.full((3, 3), 50.0), valid=valid)
        with pytest.raises(ShipOnNodata):
            extract_ship(g, np.ones((3, 3), dtype=np.uint8))

    def test_empty_label(self):
        with pytest.raises(EmptyLabel):
            extract_ship(grid_of(np.zeros((3, 3))), np.zeros((3, 3), dtype=np.uint8))

    def test_zero_mean_contract(self):
        rng = np.random.default_rng(0)
        g = grid_of(rng.normal(80, 5, (12, 12)))
        label = np.zeros((12, 12), dtype=np.uint8)
        label[3:9, 2:10] = 1
        patch = extract_ship(g, label)
        assert abs(patch.relief[patch.footprint].mean()) <= 1e-6


class TestComposite:
    def ship(self):
        relief = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
        return ShipPatch(relief=relief, footprint=np.ones((2, 3), bool), pixel_size=1.0,
                         source_id="s")

    def test_identity_pose_places_exact_values(self):
        terrain = grid_of(np.full((10, 10), 100.0))
        rng = FixedRng(theta=0.0, r0=4, c0=3, normal_value=91.0)
        out, label = composite(self.ship(), terrain, SynthConfig(), rng)
        assert label[4:6, 3:6].all()
        assert label.sum() == 6
        expected = 91.0 + np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
        assert np.allclose(out.depth[4:6, 3:6], expected)

    def test_outside_footprint_bit_identical(self):
        rng = np.random.default_rng(3)
        terrain = generate_terrain(24, 24, 1.0, 100.0, 2.0, seed=5)
        out, label = composite(self.ship(), terrain, SynthConfig(), rng)
        outside = label == 0
        assert out.depth[outside].tobytes() == terrain.depth[outside].tobytes()
        assert (out.depth != terrain.depth).sum() <= label.sum()

    def test_seeded_determinism(self):
        terrain = generate_terrain(24, 24, 1.0, 100.0, 2.0, seed=5)
        a = composite(self.ship(), terrain, SynthConfig(), np.random.default_rng(42))
        b = composite(self.ship(), terrain, SynthConfig(), np.random.default_rng(42))
        assert a[0] == b[0]
        assert np.array_equal(a[1], b[1])

    def test_depth_ratio_statistics(self):
        terrain = grid_of(np.full((32, 32), 100.0))
        cfg = SynthConfig(depth_ratio_sigma=0.02)
        rng = np.random.default_rng(0)
        ratios = []
        for _ in range(300):
            out, label = composite(self.ship(), terrain, cfg, rng)
            ratios.append(out.depth[label == 1].mean() / 100.0)
        # mean of 300 draws around 0.91 with sigma 0.02 -> se ~ 0.00115
        assert abs(np.mean(ratios) - 0.91) < 4 * 0.02 / np.sqrt(300)

    def test_ship_larger_than_terrain(self):
        big = ShipPatch(relief=np.zeros((30, 30)), footprint=np.ones((30, 30), bool),
                        pixel_size=1.0)
        with pytest.raises(NoValidPlacement):
            composite(big, grid_of(np.full((10, 10), 50.0)), SynthConfig(),
                      np.random.default_rng(0))

    def test_no_valid_placement_on_masked_terrain(self):
        valid = np.zeros((12, 12), dtype=bool)
        valid[0, 0] = True
        terrain = grid_of(np.full((12, 12), 50.0), valid=valid)
        with pytest.raises(NoValidPlacement):
            composite(self.ship(), terrain, SynthConfig(), np.random.default_rng(0))

    def test_pixel_size_resampling(self):
        fine_ship = synthetic_ship(16.0, 6.0, 1.5, pixel_size=0.5, seed=1)
        terrain = grid_of(np.full((40, 40), 80.0), px=2.0)
        out, label = composite(fine_ship, terrain, SynthConfig(), np.random.default_rng(1))
        # 16 m hull at 2 m/px spans about 8 px in its longest direction
        assert 0 < label.sum() < 200


class TestGenerateTerrain:
    def test_zero_roughness_constant(self):
        g = generate_terrain(16, 20, 1.0, 55.0, 0.0, seed=0)
        assert np.all(g.depth == 55.0)
        assert g.valid.all()

    def test_deterministic(self):
        a = generate_terrain(33, 33, 1.0, 100.0, 2.0, seed=9)
        b = generate_terrain(33, 33, 1.0, 100.0, 2.0, seed=9)
        assert a == b

    def test_rms_matches_roughness(self):
        g = generate_terrain(128, 128, 1.0, 100.0, 2.0, seed=3)
        assert 1.0 <= g.depth.std() <= 3.0
        assert abs(g.depth.mean() - 100.0) < 1.0

    def test_non_power_of_two_dims(self):
        g = generate_terrain(100, 60, 0.5, 40.0, 1.0, seed=1)
        assert (g.rows, g.cols) == (100, 60)


class TestSyntheticShip:
    def test_footprint_and_zero_mean(self):
        s = synthetic_ship(20.0, 8.0, 2.0, pixel_size=1.0, seed=4)
        assert s.footprint.any()
        assert abs(s.relief[s.footprint].mean()) <= 1e-6
        # proud hull: relief is negative (shallower) in the middle
        assert s.relief[s.footprint].min() < 0


class TestSplits:
    def test_largest_remainder_1000(self):
        ids = [f"id{i}" for i in range(1000)]
        splits = assign_splits(ids, seed=0)
        counts = {s: splits.count(s) for s in ("train", "val", "test")}
        assert counts == {"train": 650, "val": 50, "test": 300}

    def test_source_atomicity(self):
        ids = [f"wreck{i % 7}" for i in range(100)]
        splits = assign_splits(ids, seed=1)
        seen = {}
        for sid, split in zip(ids, splits):
            assert seen.setdefault(sid, split) == split


class TestBuildDataset:
    def make_inputs(self):
        ships = [synthetic_ship(10.0, 4.0, 1.5, 1.0, seed=s, source_id=f"hull{s}")
                 for s in range(3)]
        terrains = [generate_terrain(32, 32, 1.0, 90.0 + t, 1.5, seed=t) for t in range(3)]
        return ships, terrains

    def test_counts_and_kinds(self, tmp_path):
        ships, terrains = self.make_inputs()
        real = [(terrains[0], np.zeros((32, 32), np.uint8), "real0")]
        real[0][1][4:8, 4:8] = 1
        m = build_dataset(ships, terrains, (5, 12, 20), SynthConfig(seed=7),
                         tmp_path, real_pairs=real)
        assert len(m.entries) == 37
        kinds = [e.kind for e in m.entries]
        assert kinds.count("real-wreck") == 5
        assert kinds.count("synthetic-wreck") == 12
        assert kinds.count("terrain") == 20

    def test_terrain_only_labels_zero(self, tmp_path):
        _, terrains = self.make_inputs()
        m = build_dataset([], terrains, (0, 0, 10), SynthConfig(seed=1), tmp_path)
        assert len(m.entries) == 10
        for e in m.entries:
            _, label = load_pair(m, e)
            assert label.sum() == 0

    def test_split_integrity_and_reload(self, tmp_path):
        ships, terrains = self.make_inputs()
        m = build_dataset(ships, terrains, (0, 30, 30), SynthConfig(seed=3), tmp_path)
        by_source = {}
        for e in m.entries:
            if e.kind == "synthetic-wreck":
                assert by_source.setdefault(e.source_id, e.split) == e.split
        again = DatasetManifest.load(tmp_path / "manifest.tsv")
        assert len(again.entries) == len(m.entries)
        assert [e.split for e in again.entries] == [e.split for e in m.entries]
        grid, label = load_pair(again, again.entries[0])
        assert grid.depth.shape == label.shape

    def test_deterministic_bytes(self, tmp_path):
        ships, terrains = self.make_inputs()
        m1 = build_dataset(ships, terrains, (0, 8, 8), SynthConfig(seed=5), tmp_path / "a")
        m2 = build_dataset(ships, terrains, (0, 8, 8), SynthConfig(seed=5), tmp_path / "b")
        for e1, e2 in zip(m1.entries, m2.entries):
            assert (tmp_path / "a" / e1.sample_path).read_bytes() == (
                tmp_path / "b" / e2.sample_path
            ).read_bytes()
        assert (tmp_path / "a" / "manifest.tsv").read_text() == (
            tmp_path / "b" / "manifest.tsv"
        ).read_text()

    def test_insufficient_inputs(self, tmp_path):
        with pytest.raises(InsufficientInputs):
            build_dataset([], [], (0, 5, 0), SynthConfig(), tmp_path)
        with pytest.raises(InsufficientInputs):
            build_dataset([], [], (1, 0, 0), SynthConfig(), tmp_path)

    def test_full_scale_counts(self, tmp_path):
        # the reference corpus composition: 162 real + 455 synthetic + 1167
        # terrain = 1784 entries (tiny tiles keep this quick)
        ships = [synthetic_ship(6.0, 3.0, 1.0, 1.0, seed=s, source_id=f"h{s}")
                 for s in range(10)]
        terrains = [generate_terrain(16, 16, 1.0, 80.0, 1.0, seed=t) for t in range(4)]
        label = np.zeros((16, 16), np.uint8)
        label[6:10, 6:10] = 1
        real = [(terrains[i % 4], label, f"real{i}") for i in range(12)]
        m = build_dataset(ships, terrains, (162, 455, 1167), SynthConfig(seed=1),
                         tmp_path, real_pairs=real)
        assert len(m.entries) == 1784
        kinds = [e.kind for e in m.entries]
        assert (kinds.count("real-wreck"), kinds.count("synthetic-wreck"),
                kinds.count("terrain")) == (162, 455, 1167)
