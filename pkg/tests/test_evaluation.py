"""Tests for scan simulation, the random baseline, and the evaluation pipeline."""

import json

import numpy as np
import pytest
from scipy.stats import ks_2samp

from planeguide.alignment import ContrastiveConfig, OptimizerConfig, ScanSequence
from planeguide.evaluation import (
    BenchmarkRow,
    EvaluationReport,
    TrajectoryConfig,
    evaluate_scan,
    random_plane_baseline,
    run_benchmark,
    simulate_scan,
)
from planeguide.geometry import Pose, rotation_angle_3d
from planeguide.registration import RegistrationConfig
from planeguide.volume import SliceImage, generate_phantom, sample_slice


@pytest.fixture(scope="module")
def phantom48():
    return generate_phantom(0, dims=(48, 48, 48))


def blank_scan(n_frames):
    """Scan of blank frames, cheap stand-in when only poses matter."""
    frames = tuple(SliceImage(intensities=np.zeros((8, 8), dtype=np.float32)) for _ in range(n_frames))
    return ScanSequence(frames=frames, sp_index=n_frames - 1, sp_id="tvp")


class TestTrajectoryConfig:
    def test_defaults(self):
        cfg = TrajectoryConfig()
        assert cfg.steps == 60
        assert cfg.start_offset_deg == 40.0
        assert cfg.noise_deg == 1.0
        assert cfg.rng_seed == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(steps=0),
            dict(start_offset_deg=0.0),
            dict(start_offset_deg=90.5),
            dict(noise_deg=-0.1),
            dict(noise_deg=95.0),
            dict(frame_noise=-0.01),
            dict(frame_noise=1.5),
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            TrajectoryConfig(**kwargs)

    def test_zero_noise_allowed(self):
        assert TrajectoryConfig(noise_deg=0.0).noise_deg == 0.0
        assert TrajectoryConfig().frame_noise == 0.0


class TestSimulateScan:
    def test_single_step_is_exactly_the_sp_slice(self, phantom48):
        vol, sps = phantom48
        sp = sps[0]
        scan, poses = simulate_scan(vol, sp, TrajectoryConfig(steps=1, rng_seed=2), size=64)
        reference = sample_slice(vol, Pose(q=sp.q_pos, delta=sp.delta_sp), 64, 64)
        assert len(scan) == 1
        assert np.array_equal(scan.frames[0].intensities, reference.intensities)
        assert np.array_equal(poses[0].q, sp.q_pos)

    def test_zero_noise_angle_monotone_non_increasing(self, phantom48):
        vol, sps = phantom48
        sp = sps[0]
        scan, _ = simulate_scan(
            vol, sp, TrajectoryConfig(steps=12, noise_deg=0.0, rng_seed=4), size=48
        )
        angles = [rotation_angle_3d(q, sp.q_pos) for q in scan.probe_q]
        assert all(a >= b - 1e-12 for a, b in zip(angles, angles[1:]))

    def test_same_seed_bit_identical(self, phantom48):
        vol, sps = phantom48
        sp = sps[1]
        cfg = TrajectoryConfig(steps=6, rng_seed=9)
        first, _ = simulate_scan(vol, sp, cfg, size=48)
        second, _ = simulate_scan(vol, sp, cfg, size=48)
        assert np.array_equal(first.probe_q, second.probe_q)
        for a, b in zip(first.frames, second.frames):
            assert np.array_equal(a.intensities, b.intensities)

    def test_final_frame_is_sp_and_start_offset_holds(self, phantom48):
        vol, sps = phantom48
        sp = sps[0]
        cfg = TrajectoryConfig(steps=10, start_offset_deg=25.0, noise_deg=0.0, rng_seed=3)
        scan, poses = simulate_scan(vol, sp, cfg, size=48)
        assert scan.sp_index == 9
        assert np.array_equal(scan.probe_q[-1], sp.q_pos)
        assert rotation_angle_3d(poses[0].q, sp.q_pos) == pytest.approx(np.radians(25.0), abs=1e-9)

    def test_frame_noise_degrades_pixels_not_poses(self, phantom48):
        vol, sps = phantom48
        sp = sps[0]
        clean, clean_poses = simulate_scan(
            vol, sp, TrajectoryConfig(steps=5, rng_seed=6), size=48
        )
        noisy, noisy_poses = simulate_scan(
            vol, sp, TrajectoryConfig(steps=5, rng_seed=6, frame_noise=0.1), size=48
        )
        assert np.array_equal(clean.probe_q, noisy.probe_q)
        for a, b in zip(clean_poses, noisy_poses):
            assert np.array_equal(a.q, b.q)
        for a, b in zip(clean.frames, noisy.frames):
            assert not np.array_equal(a.intensities, b.intensities)
            assert a.intensities.shape == b.intensities.shape
            assert float(np.min(b.intensities)) >= 0.0
            assert float(np.max(b.intensities)) <= 1.0

    def test_frame_noise_is_seeded(self, phantom48):
        vol, sps = phantom48
        cfg = TrajectoryConfig(steps=4, rng_seed=8, frame_noise=0.2)
        first, _ = simulate_scan(vol, sps[1], cfg, size=48)
        second, _ = simulate_scan(vol, sps[1], cfg, size=48)
        for a, b in zip(first.frames, second.frames):
            assert np.array_equal(a.intensities, b.intensities)


class TestRandomBaseline:
    def test_deterministic_for_fixed_seed(self):
        scan = blank_scan(5)
        first = random_plane_baseline(scan, seed=7)
        second = random_plane_baseline(scan, seed=7)
        assert len(first) == 5
        for a, b in zip(first, second):
            assert np.array_equal(a.q, b.q)
            assert np.array_equal(a.delta, b.delta)

    def test_translations_inside_atlas_box(self):
        poses = random_plane_baseline(blank_scan(500), seed=1)
        deltas = np.stack([p.delta for p in poses])
        assert deltas.min() >= -0.3
        assert deltas.max() <= 0.3

    def test_mean_consecutive_rotation_matches_uniform_expectation(self):
        poses = random_plane_baseline(blank_scan(10_000), seed=0)
        quats = np.stack([p.q for p in poses])
        angles = [rotation_angle_3d(a, b) for a, b in zip(quats, quats[1:])]
        assert abs(np.degrees(np.mean(angles)) - 126.5) < 5.0

    def test_angle_distribution_seed_independent(self, phantom48):
        _, sps = phantom48
        sp = sps[0]
        scan = blank_scan(10_000)
        a = [min(rotation_angle_3d(p.q, sp.q_pos), rotation_angle_3d(p.q, sp.q_neg))
             for p in random_plane_baseline(scan, seed=0)]
        b = [min(rotation_angle_3d(p.q, sp.q_pos), rotation_angle_3d(p.q, sp.q_neg))
             for p in random_plane_baseline(scan, seed=1)]
        assert ks_2samp(a, b).pvalue > 0.01


@pytest.fixture(scope="module")
def scan_and_truth(phantom48):
    vol, sps = phantom48
    sp = sps[0]
    scan, poses = simulate_scan(vol, sp, TrajectoryConfig(steps=12, rng_seed=5), size=96)
    return vol, sp, scan, poses


class TestEvaluateScan:

    def test_ground_truth_self_evaluation(self, scan_and_truth):
        vol, sp, scan, poses = scan_and_truth
        report = evaluate_scan(scan, poses, sp, vol)
        assert report.kl == 0.0
        assert report.ncc_mean > 0.95
        assert report.dice_pct > 90.0

    def test_random_baseline_dominated_by_truth(self, scan_and_truth):
        vol, sp, scan, poses = scan_and_truth
        truth = evaluate_scan(scan, poses, sp, vol)
        rand = evaluate_scan(scan, random_plane_baseline(scan, seed=3), sp, vol)
        assert rand.kl > truth.kl
        assert rand.ncc_mean < truth.ncc_mean
        assert rand.dice_pct < truth.dice_pct

    def test_sign_flip_invariant(self, scan_and_truth):
        vol, sp, scan, poses = scan_and_truth
        flipped = [Pose(q=-np.asarray(p.q), delta=p.delta) for p in poses]
        a = evaluate_scan(scan, poses, sp, vol)
        b = evaluate_scan(scan, flipped, sp, vol)
        assert a.kl == b.kl
        assert a.ncc_trace == b.ncc_trace
        assert a.dice_trace == b.dice_trace
        assert a.ms_ssim_trace == b.ms_ssim_trace

    def test_traces_one_entry_per_frame(self, scan_and_truth):
        vol, sp, scan, poses = scan_and_truth
        report = evaluate_scan(scan, poses, sp, vol)
        for trace in (report.angles_true, report.angles_pred, report.dice_trace,
                      report.ncc_trace, report.ms_ssim_trace):
            assert len(trace) == len(scan)

    def test_missing_probe_q_errors(self, phantom48):
        vol, sps = phantom48
        sp = sps[0]
        scan = blank_scan(3)
        with pytest.raises(ValueError, match="probe_q"):
            evaluate_scan(scan, random_plane_baseline(scan, 0), sp, vol)

    def test_pose_count_mismatch_errors(self, scan_and_truth):
        vol, sp, scan, poses = scan_and_truth
        with pytest.raises(ValueError, match="one predicted pose per frame"):
            evaluate_scan(scan, poses[:-1], sp, vol)


class TestEvaluationReport:
    def _kwargs(self, **overrides):
        base = dict(
            kl=0.1, dice_pct=50.0, ncc_mean=0.5, ncc_sd=0.1,
            ms_ssim_mean=0.5, ms_ssim_sd=0.1,
            angles_true=(0.1, 0.2), angles_pred=(0.1, 0.2),
            dice_trace=(0.5, 0.5), ncc_trace=(0.5, 0.5), ms_ssim_trace=(0.5, 0.5),
        )
        base.update(overrides)
        return base

    def test_rejects_out_of_range_dice(self):
        with pytest.raises(ValueError, match="dice_pct"):
            EvaluationReport(**self._kwargs(dice_pct=101.0))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            EvaluationReport(**self._kwargs(kl=float("nan")))

    def test_rejects_trace_length_mismatch(self):
        with pytest.raises(ValueError, match="per frame"):
            EvaluationReport(**self._kwargs(ncc_trace=(0.5,)))


class TestRunBenchmark:
    CHEAP = RegistrationConfig(
        orientation_samples=64,
        refine_orientations=16,
        top_k=4,
        max_refine_evals=60,
        working_size=24,
        final_size=40,
    )

    def test_zero_scans_errors(self, phantom48):
        vol, sps = phantom48
        with pytest.raises(ValueError, match="n_scans"):
            run_benchmark(vol, sps, 0)

    def test_structure_and_determinism(self, phantom48):
        # coarse-only registration keeps the double run affordable; the
        # proper-budget ordinal comparison lives in the acceptance suite
        vol, sps = phantom48
        kwargs = dict(
            traj_cfg=TrajectoryConfig(steps=4, rng_seed=11),
            reg_cfg=RegistrationConfig(
                orientation_samples=64,
                refine_orientations=16,
                top_k=4,
                max_refine_evals=0,
                working_size=24,
                final_size=40,
            ),
            align_cfg=ContrastiveConfig(),
            opt_cfg=OptimizerConfig(max_iters=20),
            size=48,
        )
        table = run_benchmark(vol, [sps[0]], 2, **kwargs)
        again = run_benchmark(vol, [sps[0]], 2, **kwargs)
        assert table.to_json() == again.to_json()

        payload = json.loads(table.to_json())
        assert [entry["sp_id"] for entry in payload] == ["tvp"]
        rows = payload[0]["rows"]
        assert [r["name"] for r in rows] == ["random", "registration_only", "registration_alignment"]
        for row in rows:
            assert set(row) == {
                "name", "kl", "dice_pct", "ncc_mean", "ncc_sd", "ms_ssim_mean", "ms_ssim_sd",
            }

        text = table.to_text()
        assert "tvp" in text
        assert "registration_alignment" in text

        sp_id, row_tuple = table.sections[0]
        assert all(isinstance(r, BenchmarkRow) for r in row_tuple)
        assert all(len(r.per_scan_kl) == 2 for r in row_tuple)
        random_row, reg_row, align_row = row_tuple
        assert reg_row.ncc_mean > random_row.ncc_mean
        assert align_row.ncc_mean > random_row.ncc_mean
