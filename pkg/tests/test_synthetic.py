"""Statistical and structural checks on the synthetic generators."""

import json

import numpy as np
import pytest

from tswarp.dataio import load_dataset
from tswarp.synthetic import (
    GeneratorSpec, generate_dataset, generate_instance, write_splits,
)


class TestSpec:
    def test_default_spec_is_valid(self):
        GeneratorSpec().validate()

    def test_rejects_bad_fields(self):
        with pytest.raises(ValueError):
            GeneratorSpec(kind="chaos").validate()
        with pytest.raises(ValueError):
            GeneratorSpec(horizon=-1.0).validate()
        with pytest.raises(ValueError):
            GeneratorSpec(dense_gap_range=(0.5, 0.2)).validate()
        with pytest.raises(ValueError):
            GeneratorSpec(dense_gap_range=(8.0, 10.0)).validate()

    def test_round_trips_through_dict(self):
        spec = GeneratorSpec(dense_noise=0.7, sparse_gap_range=(3.0, 6.0))
        again = GeneratorSpec.from_dict(spec.to_dict())
        assert again == spec


class TestParityTask:
    def test_zero_count_gives_empty_dataset(self):
        assert generate_dataset(GeneratorSpec(), np.random.default_rng(0), 0) == []

    def test_label_balance_near_half(self):
        rng = np.random.default_rng(1)
        grids = generate_dataset(GeneratorSpec(), rng, 1000)
        frac = np.mean([g.labels[0] for g in grids])
        assert abs(frac - 0.5) < 0.05

    def test_density_contrast_between_variates(self):
        rng = np.random.default_rng(2)
        grids = generate_dataset(GeneratorSpec(), rng, 200)
        dense_gaps, sparse_gaps = [], []
        for g in grids:
            for k, sink in ((0, dense_gaps), (1, sparse_gaps)):
                t = g.times[g.mask[k] > 0]
                sink.extend(np.diff(t))
        assert np.median(dense_gaps) <= np.median(sparse_gaps) / 10.0

    def test_label_is_xor_of_recoverable_bits(self):
        rng = np.random.default_rng(3)
        spec = GeneratorSpec()
        for i in range(200):
            grid, info = generate_instance(spec, rng, f"x{i}")
            # recover the trend bit from dense half-means
            t = grid.times
            dense = grid.mask[0] > 0
            early = grid.values[0][dense & (t < spec.horizon / 2)]
            late = grid.values[0][dense & (t >= spec.horizon / 2)]
            assert early.size and late.size
            # recover the spike bit from the largest sparse magnitude
            sparse_vals = grid.values[1][grid.mask[1] > 0]
            j = np.abs(sparse_vals).argmax()
            assert info["label"] == info["trend_up"] ^ info["spike_up"]
            assert grid.labels[0] == info["label"]
            assert (sparse_vals[j] > 0) == bool(info["spike_up"])

    def test_trend_bits_match_half_mean_gap_on_average(self):
        rng = np.random.default_rng(4)
        spec = GeneratorSpec()
        # the step must stay recoverable by a crude half-mean split, but the
        # noise level is calibrated so raw-granularity reads are hard: the
        # benchmark wants coarse averaging to be what makes the bit easy
        hits = 0
        n = 300
        for i in range(n):
            grid, info = generate_instance(spec, rng, f"t{i}")
            t = grid.times
            dense = grid.mask[0] > 0
            early = grid.values[0][dense & (t < spec.horizon / 2)].mean()
            late = grid.values[0][dense & (t >= spec.horizon / 2)].mean()
            hits += int((late - early > 0) == bool(info["trend_up"]))
        assert hits / n > 0.85

    def test_deterministic_given_seed(self):
        a = generate_dataset(GeneratorSpec(), np.random.default_rng(7), 5)
        b = generate_dataset(GeneratorSpec(), np.random.default_rng(7), 5)
        for ga, gb in zip(a, b):
            np.testing.assert_array_equal(ga.values, gb.values)
            np.testing.assert_array_equal(ga.times, gb.times)
            np.testing.assert_array_equal(ga.labels, gb.labels)


class TestRunningSignTask:
    def test_labels_track_last_dense_sign(self):
        rng = np.random.default_rng(5)
        spec = GeneratorSpec(kind="running_sign", version="running-v1")
        grid, _ = generate_instance(spec, rng, "r0")
        last = None
        for j in range(grid.length):
            if grid.mask[0, j] > 0:
                last = grid.values[0, j]
            if last is None:
                assert grid.labels[j] == -1
            else:
                assert grid.labels[j] == int(last > 0)

    def test_label_length_matches_grid(self):
        rng = np.random.default_rng(6)
        spec = GeneratorSpec(kind="running_sign")
        for i in range(20):
            grid, _ = generate_instance(spec, rng, f"r{i}")
            assert grid.labels.size == grid.length


class TestWriteSplits:
    def test_files_parse_and_counts_match(self, tmp_path):
        spec = GeneratorSpec()
        paths = write_splits(spec, tmp_path, {"train": 12, "val": 5}, seed=3)
        train, k = load_dataset(paths["train"])
        val, _ = load_dataset(paths["val"])
        assert k == 2 and len(train) == 12 and len(val) == 5
        meta = json.loads(paths["spec"].read_text())
        assert GeneratorSpec.from_dict(meta["spec"]) == spec
        assert meta["seed"] == 3

    def test_same_seed_same_files(self, tmp_path):
        spec = GeneratorSpec()
        p1 = write_splits(spec, tmp_path / "a", {"train": 4}, seed=9)
        p2 = write_splits(spec, tmp_path / "b", {"train": 4}, seed=9)
        assert p1["train"].read_text() == p2["train"].read_text()
