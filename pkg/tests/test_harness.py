import math

import numpy as np
import pytest

from vpr.filters import FilterParams, sequential_filter, spatial_continuity
from vpr.harness import (
    BASELINE_VALUES_PER_SECOND,
    BenchReport,
    SynthConfig,
    bench_matching,
    bench_report_to_dict,
    generate_synthetic,
    oracle_pipeline,
    run_pipeline,
)
from vpr.matching import best_matches, build_confusion_matrix, distances_to_rows, euclidean_distance


class TestSynthConfig:
    def test_defaults(self):
        cfg = SynthConfig(train_frames=100)
        assert cfg.velocity_ratio == 1.0
        assert cfg.dim == 32
        assert cfg.noise_sigma == 0.0
        assert cfg.test_frames == 100

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"train_frames": 0},
            {"train_frames": 10, "velocity_ratio": 0.0},
            {"train_frames": 10, "velocity_ratio": -1.0},
            {"train_frames": 10, "velocity_ratio": math.inf},
            {"train_frames": 10, "dim": 0},
            {"train_frames": 10, "noise_sigma": -0.1},
            {"train_frames": 10, "basis_count": 0},
            # round(1 / 3) == 0 testing frames
            {"train_frames": 1, "velocity_ratio": 3.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            SynthConfig(**kwargs)

    def test_test_frames_rounds_half_away(self):
        assert SynthConfig(train_frames=100, velocity_ratio=2.0).test_frames == 50
        assert SynthConfig(train_frames=50, velocity_ratio=0.5).test_frames == 100
        assert SynthConfig(train_frames=5, velocity_ratio=2.0).test_frames == 3


class TestGenerate:
    def test_shapes_and_metadata(self):
        train, test, gt = generate_synthetic(SynthConfig(train_frames=30, dim=12))
        assert train.count == 30 and test.count == 30
        assert train.dim == 12 and test.dim == 12
        assert train.frames.dtype == np.float32
        assert train.layer_tag == 0
        assert gt.kind == "frame_correspondence"
        assert gt.tolerance == 1.0

    def test_same_seed_bit_identical(self):
        cfg = SynthConfig(train_frames=40, noise_sigma=0.3, seed=11)
        a_train, a_test, a_gt = generate_synthetic(cfg)
        b_train, b_test, b_gt = generate_synthetic(cfg)
        assert np.array_equal(a_train.frames, b_train.frames)
        assert np.array_equal(a_test.frames, b_test.frames)
        assert a_gt.mapping == b_gt.mapping

    def test_seed_changes_data(self):
        a, _, _ = generate_synthetic(SynthConfig(train_frames=20, seed=0))
        b, _, _ = generate_synthetic(SynthConfig(train_frames=20, seed=1))
        assert not np.array_equal(a.frames, b.frames)

    def test_noise_leaves_training_traverse_alone(self):
        clean_train, clean_test, _ = generate_synthetic(SynthConfig(train_frames=25, seed=3))
        noisy_train, noisy_test, _ = generate_synthetic(
            SynthConfig(train_frames=25, noise_sigma=0.5, seed=3)
        )
        assert np.array_equal(clean_train.frames, noisy_train.frames)
        assert not np.array_equal(clean_test.frames, noisy_test.frames)

    def test_ground_truth_mapping_rounds_and_clamps(self):
        _, _, gt = generate_synthetic(SynthConfig(train_frames=4, velocity_ratio=0.5, dim=4))
        assert gt.mapping == {0: 0, 1: 1, 2: 1, 3: 2, 4: 2, 5: 3, 6: 3, 7: 3}

    def test_equal_speed_zero_noise_matches_exactly(self):
        train, test, _ = generate_synthetic(SynthConfig(train_frames=35, seed=5))
        cm = build_confusion_matrix(train, test)
        assert np.all(np.diag(cm.distances) == 0.0)
        for h in best_matches(cm):
            assert h.train_index == h.test_index

    def test_double_speed_interior_fits_have_slope_two(self):
        cfg = SynthConfig(train_frames=80, velocity_ratio=2.0, dim=24, seed=2)
        train, test, _ = generate_synthetic(cfg)
        hyps = best_matches(build_confusion_matrix(train, test))
        params = FilterParams(sigma=math.atan(2.0), epsilon=3, window=5, phi=0.1)
        finals = sequential_filter(
            spatial_continuity(hyps, params.epsilon, params.window), params, train.count
        )
        interior = [f for f in finals if params.window <= f.test_index < test.count - 1]
        assert interior
        for f in interior:
            assert f.fit is not None
            assert f.fit.alpha == pytest.approx(2.0, abs=1e-9)

    @pytest.mark.parametrize("ratio", [0.5, 1.0, 2.0])
    def test_zero_noise_perfect_precision_at_matched_sigma(self, ratio):
        cfg = SynthConfig(train_frames=60, velocity_ratio=ratio, dim=24, seed=4)
        train, test, gt = generate_synthetic(cfg)
        params = FilterParams(sigma=math.atan(ratio))
        report = run_pipeline(train, test, params, gt, [0.0, 0.1, 0.5])
        for point in report.curve:
            assert point.precision == 1.0
        # at the loosest angle gate the staircase wobble of fractional
        # ratios no longer suppresses acceptances
        assert report.curve[-1].reported > 0


class TestOracleAgreement:
    @pytest.mark.parametrize(
        "cfg",
        [
            SynthConfig(train_frames=50, velocity_ratio=1.0, dim=10, noise_sigma=0.4, seed=8),
            SynthConfig(train_frames=40, velocity_ratio=2.0, dim=8, noise_sigma=0.2, seed=9),
            SynthConfig(train_frames=30, velocity_ratio=0.5, dim=12, noise_sigma=0.0, seed=10),
        ],
    )
    def test_fast_path_equals_loop_oracle(self, cfg):
        train, test, gt = generate_synthetic(cfg)
        params = FilterParams(sigma=math.atan(cfg.velocity_ratio))
        phis = [0.0, 0.05, 0.2, 0.6]
        fast = run_pipeline(train, test, params, gt, phis)
        slow = oracle_pipeline(train, test, params, gt, phis)
        assert len(fast.curve) == len(slow.curve)
        for a, b in zip(fast.curve, slow.curve):
            assert (a.tp, a.fp, a.reported, a.total) == (b.tp, b.fp, b.reported, b.total)
            assert a.precision == pytest.approx(b.precision, rel=1e-6)
            assert a.recall == pytest.approx(b.recall, rel=1e-6)
        assert fast.max_recall_at_full_precision == pytest.approx(
            slow.max_recall_at_full_precision, rel=1e-6
        )
        assert fast.best_f1 == pytest.approx(slow.best_f1, rel=1e-6)


class TestBench:
    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            bench_matching(dim=4, ref_count=2, repetitions=0)
        with pytest.raises(ValueError):
            bench_matching(dim=0, ref_count=2, repetitions=1)
        with pytest.raises(ValueError):
            bench_matching(dim=4, ref_count=0, repetitions=1)
        with pytest.raises(ValueError):
            bench_matching(dim=4, ref_count=2, repetitions=1, threads=0)

    def test_report_fields_consistent(self):
        report = bench_matching(dim=64, ref_count=50, repetitions=3, seed=1)
        assert report.dim == 64 and report.ref_count == 50
        assert report.wall_time > 0
        assert report.queries_per_second == pytest.approx(3 / report.wall_time)
        assert report.values_per_second == pytest.approx(
            64 * 50 * report.queries_per_second
        )

    def test_bench_distances_match_direct_calls(self):
        # rebuild the benchmark's inputs and check the kernel it times
        # returns exactly what the public distance function returns
        dim, refs_n, reps, seed = 4, 2, 3, 7
        rng = np.random.default_rng(seed)
        refs = np.ascontiguousarray(rng.standard_normal((refs_n, dim)), dtype=np.float32)
        queries = np.ascontiguousarray(rng.standard_normal((reps, dim)), dtype=np.float32)
        for q in queries:
            batch = distances_to_rows(refs, q)
            for i in range(refs_n):
                assert batch[i] == euclidean_distance(refs[i], q)
        # the timed call itself must accept the same shapes
        report = bench_matching(dim=dim, ref_count=refs_n, repetitions=reps, seed=seed)
        assert report.dim == dim

    def test_multithreaded_bench_runs(self):
        report = bench_matching(dim=32, ref_count=40, repetitions=2, threads=2)
        assert report.threads == 2

    def test_report_dict_carries_baseline(self):
        report = bench_matching(dim=16, ref_count=10, repetitions=1)
        payload = bench_report_to_dict(report)
        assert payload["baseline_values_per_second"] == BASELINE_VALUES_PER_SECOND
        assert list(payload) == [
            "dim",
            "ref_count",
            "queries_per_second",
            "values_per_second",
            "wall_time",
            "threads",
            "baseline_values_per_second",
        ]

    def test_bench_report_validates(self):
        with pytest.raises(ValueError):
            BenchReport(
                dim=0,
                ref_count=1,
                queries_per_second=1.0,
                values_per_second=1.0,
                wall_time=1.0,
            )
