"""Single-frame slice-to-volume pose estimation by multi-start optimization.

A coarse sweep scores near-uniform orientation samples crossed with a
translation lattice by normalized cross-correlation at a reduced working
resolution, pattern-search rings walk the leaders toward their local
peaks, and simplex descent finishes at a finer reporting resolution
whose correlation the result carries. Scan registration chains frames
through temporal initialization and finishes with the contrastive
orientation refinement from the alignment module.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .alignment import ContrastiveConfig, OptimizerConfig, ScanSequence, refine_scan_poses
from .geometry import (
    IDENTITY_QUAT,
    Pose,
    StandardPlaneDef,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    rotation_angle_3d,
    to_rotation_matrix,
)
from .preprocess import resize_bilinear
from .validation import check_image
from .volume import SliceImage, Volume, sample_points

DEGENERATE_VARIANCE = 1e-12


def super_fibonacci_quaternions(n: int) -> np.ndarray:
    """Deterministic near-uniform unit quaternions on the 3-sphere.

    Double-spiral construction with irrational winding ratios; low
    discrepancy without randomness, so the coarse search is repeatable.
    """
    if n < 1:
        raise ValueError("sample count must be positive")
    psi = 1.533751168755204
    s = np.arange(n, dtype=np.float64) + 0.5
    t = s / n
    d = 2.0 * np.pi * s
    r = np.sqrt(t)
    big_r = np.sqrt(1.0 - t)
    alpha = d / np.sqrt(2.0)
    beta = d / psi
    quats = np.stack(
        [
            r * np.sin(alpha),
            r * np.cos(alpha),
            big_r * np.sin(beta),
            big_r * np.cos(beta),
        ],
        axis=1,
    )
    return quats


@dataclass(frozen=True)
class RegistrationConfig:
    """Search budget for coarse scoring and simplex refinement."""

    orientation_samples: int = 256
    translation_grid: int = 5
    translation_radius: float = 0.3
    top_k: int = 8
    max_refine_evals: int = 500
    working_size: int = 28
    final_size: int = 56
    refine_orientations: int = 64

    def __post_init__(self):
        if self.orientation_samples < 1:
            raise ValueError("orientation_samples must be positive")
        if self.translation_grid < 1:
            raise ValueError("translation_grid must be positive")
        if not 0.0 < self.translation_radius <= 1.0:
            raise ValueError("translation_radius must lie in (0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be positive")
        if self.max_refine_evals < 0:
            raise ValueError("max_refine_evals must be non-negative")
        if self.working_size < 8:
            raise ValueError("working_size must be at least 8")
        if self.final_size < 8:
            raise ValueError("final_size must be at least 8")
        if self.refine_orientations < 1:
            raise ValueError("refine_orientations must be positive")


@dataclass(frozen=True)
class RegistrationResult:
    """Estimated pose with its correlation score and coarse-search trace."""

    pose: Pose
    score: float
    degenerate: bool = False
    candidate_scores: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not -1.0 - 1e-9 <= self.score <= 1.0 + 1e-9:
            raise ValueError("score must lie in [-1, 1]")
        object.__setattr__(self, "candidate_scores", tuple(float(c) for c in self.candidate_scores))

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.to_dict(),
            "score": float(self.score),
            "degenerate": bool(self.degenerate),
            "candidates": list(self.candidate_scores),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RegistrationResult":
        return cls(
            pose=Pose.from_dict(payload["pose"]),
            score=float(payload["score"]),
            degenerate=bool(payload["degenerate"]),
            candidate_scores=tuple(payload.get("candidates", ())),
        )


def _plane_coords(size: int, extent: float = 1.0) -> np.ndarray:
    xs = np.linspace(-extent, extent, size)
    ys = np.linspace(-extent, extent, size)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel(), np.zeros(size * size)], axis=1)


def _working_image(image, size: int) -> np.ndarray:
    if isinstance(image, SliceImage):
        arr = np.asarray(image.intensities, dtype=np.float64)
    else:
        arr = check_image(image)
    if arr.shape != (size, size):
        arr = resize_bilinear(arr, size, size)
    return arr.ravel()


def _ncc_flat(values, target_res, target_norm) -> float:
    res = values - values.mean()
    var = float(res @ res)
    if var < DEGENERATE_VARIANCE or target_norm < DEGENERATE_VARIANCE:
        return 0.0
    return float(res @ target_res) / np.sqrt(var * target_norm)


def _ncc_batch(cands: np.ndarray, target_res: np.ndarray, target_norm: float) -> np.ndarray:
    res = cands - cands.mean(axis=-1, keepdims=True)
    var = np.einsum("...p,...p->...", res, res)
    num = res @ target_res
    scores = np.zeros(var.shape)
    ok = var > DEGENERATE_VARIANCE
    scores[ok] = num[ok] / np.sqrt(var[ok] * target_norm)
    return scores


def _coarse_search(vol, quats, center, radius, per_axis, size, target_res, target_norm, chunk=32, z_levels=None):
    """Score every orientation over a plane-aligned translation lattice.

    In-plane lattice offsets are snapped to whole working-resolution pixels
    so they become integer crops of one padded patch per plane; only the
    out-of-plane offsets need separate volume sampling, so that axis can
    afford extra levels (z_levels). Returns the lattice scores
    (Nq, Nz, Nk, Nk), the rotation matrices, and the lattice axes needed to
    reconstruct a candidate's translation.
    """
    center = np.asarray(center, dtype=np.float64)
    if center.ndim == 1:
        center = np.broadcast_to(center, (len(quats), 3))
    px = 2.0 / (size - 1)
    if per_axis == 1:
        ks = np.array([0], dtype=int)
        zoffs = np.array([0.0])
    else:
        offs = np.linspace(-radius, radius, per_axis)
        ks = np.unique(np.round(offs / px).astype(int))
        zoffs = np.linspace(-radius, radius, z_levels) if z_levels else offs
    pad = int(max(abs(int(ks[0])), abs(int(ks[-1]))))
    patch = size + 2 * pad
    axis = (np.arange(patch) - pad) * px - 1.0
    gx, gy = np.meshgrid(axis, axis)
    patch_pts = np.stack([gx.ravel(), gy.ravel(), np.zeros(patch * patch)], axis=1)

    n_q = len(quats)
    n_z = len(zoffs)
    n_k = len(ks)
    rots = np.stack([to_rotation_matrix(q) for q in quats])
    scores = np.empty((n_q, n_z, n_k, n_k))
    for start in range(0, n_q, chunk):
        rot_chunk = rots[start : start + chunk]
        base = np.einsum("cij,pj->cpi", rot_chunk, patch_pts)
        normals = rot_chunk[:, :, 2]
        pts = (
            base[:, None, :, :]
            + zoffs[None, :, None, None] * normals[:, None, None, :]
            + center[start : start + chunk, None, None, :]
        )
        vals = sample_points(vol, pts).reshape(-1, n_z, patch, patch)
        for iy, ky in enumerate(ks):
            for ix, kx in enumerate(ks):
                crops = vals[:, :, pad + ky : pad + ky + size, pad + kx : pad + kx + size]
                flat = crops.reshape(len(rot_chunk) * n_z, size * size)
                scored = _ncc_batch(flat, target_res, target_norm)
                scores[start : start + chunk, :, iy, ix] = scored.reshape(-1, n_z)
    return scores, rots, ks * px, zoffs


def _lattice_delta(rot, center, kx_off, ky_off, z_off):
    return np.asarray(center, dtype=np.float64) + rot @ np.array([kx_off, ky_off, z_off])


_DIAGONALS = np.array(
    [[sx, sy, sz] for sx in (-1.0, 1.0) for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)]
) / np.sqrt(3.0)

_RING_AXES = np.concatenate([np.eye(3), -np.eye(3), _DIAGONALS])

# The coarsest ring reaches past the orientation net spacing, the finest
# lands inside the simplex capture basin.
_RING_SCALES = tuple(np.radians(a) for a in (24.0, 12.0, 6.0, 3.0))
_RING_KEEPS = (32, 32, 16, 8)


def _ring_step(vol, cands, scale, size, target_res, target_norm):
    """One pattern-search step on orientation for every candidate.

    Each candidate competes against rotated copies of itself about the
    fixed axis fan, every copy scored over a small translation lattice in
    its own rotated frame, and the winner replaces the candidate. The
    parent competes on the same lattice, so a candidate's score never
    decreases.
    """
    members = len(_RING_AXES) + 1
    hops = [quat_from_axis_angle(ax, scale) for ax in _RING_AXES]
    quats_all = np.empty((len(cands) * members, 4))
    centers_all = np.empty((len(cands) * members, 3))
    for ci, (q0, d0, _) in enumerate(cands):
        base = ci * members
        quats_all[base] = q0
        centers_all[base : base + members] = d0
        for di, hop in enumerate(hops):
            quats_all[base + 1 + di] = quat_multiply(q0, hop)
    radius = float(min(0.15, max(0.05, 0.8 * np.sin(scale))))
    scores, rots, k_offs, z_offs = _coarse_search(
        vol, quats_all, centers_all, radius, 5, size, target_res, target_norm
    )
    lattice = scores.shape[1:]
    per_fam = scores.reshape(len(cands), members, -1)
    out = []
    for ci, (q0, d0, s0) in enumerate(cands):
        idx = int(per_fam[ci].argmax())
        mi, rest = divmod(idx, per_fam.shape[2])
        score = float(per_fam[ci].reshape(-1)[idx])
        if score <= s0:
            out.append((q0, d0, s0))
            continue
        zi, iy, ix = np.unravel_index(rest, lattice)
        row = ci * members + mi
        delta = _lattice_delta(rots[row], d0, k_offs[ix], k_offs[iy], z_offs[zi])
        out.append((quats_all[row], delta, score))
    return out


def _diverse_top(cands, keep, min_angle):
    """Best-scoring candidates separated by more than min_angle.

    Greedy selection in score order, so the leading candidate is always
    kept; later candidates inside an earlier one's neighborhood are taken
    as the same basin and dropped.
    """
    kept = []
    for cand in sorted(cands, key=lambda c: c[2], reverse=True):
        if all(rotation_angle_3d(cand[0], other[0]) > min_angle for other in kept):
            kept.append(cand)
        if len(kept) >= keep:
            break
    return kept


def _refine_candidate(vol, q0, delta0, plane, target_res, target_norm, max_evals):
    def objective(x):
        q = x[:4]
        norm = np.linalg.norm(q)
        if norm < 1e-8:
            return 2.0
        rot = to_rotation_matrix(q / norm)
        vals = sample_points(vol, plane @ rot.T + x[4:])
        return -_ncc_flat(vals, target_res, target_norm)

    x0 = np.concatenate([q0, delta0])
    steps = np.concatenate([np.full(4, 0.05), np.full(3, 0.05)])
    simplex = np.vstack([x0] + [x0 + steps[i] * np.eye(7)[i] for i in range(7)])
    result = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "maxfev": max_evals,
            "initial_simplex": simplex,
            "adaptive": True,
            "xatol": 1e-4,
            "fatol": 1e-7,
        },
    )
    q = quat_normalize(result.x[:4])
    return q, result.x[4:].copy(), -float(result.fun)


def _restart_until_stuck(vol, q, delta, score, plane, target_res, target_norm, budget, rounds=3):
    """Re-polish from fresh simplexes until the score stops moving."""
    for _ in range(rounds):
        if score >= _SETTLED_NCC:
            break
        q2, d2, s2 = _refine_candidate(vol, q, delta, plane, target_res, target_norm, budget)
        if s2 <= score + 1e-9:
            break
        q, delta, score = q2, d2, s2
    return q, delta, score


def _pose_score(vol, q, delta, plane, target_res, target_norm) -> float:
    rot = to_rotation_matrix(quat_normalize(q))
    vals = sample_points(vol, plane @ rot.T + np.asarray(delta, dtype=np.float64))
    return _ncc_flat(vals, target_res, target_norm)


_ESCAPE_SCALE = np.radians(10.0)


def _escape_step(vol, cand, size, plane, target_res, target_norm, budget):
    """Hop the leader sideways and re-polish the best landings.

    A simplex stalled on a compensated ridge often sits within one medium
    hop of the true basin, but raw lattice scores cannot see that: the
    polished parent outranks every unpolished landing. The leading
    landings therefore get their own short polish before the comparison,
    and the parent survives unless a landing genuinely beats it.
    """
    q0, d0, s0 = cand
    hops = [quat_from_axis_angle(ax, _ESCAPE_SCALE) for ax in _RING_AXES]
    quats_all = np.stack([quat_multiply(q0, hop) for hop in hops])
    scores, rots, k_offs, z_offs = _coarse_search(
        vol, quats_all, np.broadcast_to(d0, (len(quats_all), 3)), 0.12, 5,
        size, target_res, target_norm,
    )
    flat = scores.reshape(len(quats_all), -1)
    per_m = flat.max(axis=1)
    best = cand
    for mi in np.argsort(per_m)[::-1][:3]:
        zi, iy, ix = np.unravel_index(int(flat[mi].argmax()), scores.shape[1:])
        dm = _lattice_delta(rots[mi], d0, k_offs[ix], k_offs[iy], z_offs[zi])
        q, d, s = _refine_candidate(vol, quats_all[mi], dm, plane, target_res, target_norm, budget)
        if s > best[2]:
            best = (q, d, s)
    return best


# correlation this close to exact marks a converged match on clean renders;
# noisy targets never reach it, so they simply keep the full search depth
_SETTLED_NCC = 0.9995


def _polish_fine(vol, q0, d0, size, plane, target_res, target_norm, budget):
    """Polish one pose at the reporting resolution, never below its start.

    Each round relocks the translation on a lattice before the simplex
    runs: a simplex arriving from the working resolution often carries a
    translation that compensated a small orientation error there, and
    restarting the simplex alone rarely escapes that trade.
    """
    q = quat_normalize(np.asarray(q0, dtype=np.float64))
    d = np.asarray(d0, dtype=np.float64)
    s = _pose_score(vol, q, d, plane, target_res, target_norm)
    for _ in range(3):
        if s >= _SETTLED_NCC:
            return q, d, s
        scores, rots, k_offs, z_offs = _coarse_search(
            vol, q[None, :], d, 0.15, 5, size, target_res, target_norm, z_levels=7,
        )
        flat = scores.reshape(-1)
        # the greedy lattice winner is usually the basin the simplex is
        # already in, so nearby distinct lattice cells seed extra starts
        locks = []
        for li in np.argsort(flat)[::-1]:
            zi, iy, ix = np.unravel_index(int(li), scores.shape[1:])
            d_lock = _lattice_delta(rots[0], d, k_offs[ix], k_offs[iy], z_offs[zi])
            if all(np.linalg.norm(d_lock - other) > 0.04 for other in locks):
                locks.append(d_lock)
            if len(locks) >= 3:
                break
        improved = False
        for d_lock in locks:
            q2, d2, s2 = _refine_candidate(vol, q, d_lock, plane, target_res, target_norm, budget)
            if s2 > s + 1e-9:
                q, d, s = q2, d2, s2
                improved = True
            if s >= _SETTLED_NCC:
                return q, d, s
        if not improved:
            break
    return _restart_until_stuck(
        vol, q, d, s, plane, target_res, target_norm, max(150, budget // 2), rounds=2
    )


def _register_image(vol, image, cfg, quats, trans_center, trans_radius):
    """Coarse lattice sweep, ring descent, and two-resolution polish.

    Every orientation keeps its best lattice translation at the working
    resolution, pattern-search rings walk the leaders toward their local
    peaks, and a simplex pass polishes the survivors. The finishing stage
    re-polishes the leaders at the finer reporting resolution, whose
    correlation the result carries; reported coarse candidates are scored
    the same way, and the best of them joins the finishing pass whenever
    the leaders fail to dominate it, so the returned score never falls
    below any candidate's.
    """
    work_size = cfg.working_size
    target = _working_image(image, work_size)
    target_res = target - target.mean()
    target_norm = float(target_res @ target_res)
    plane = _plane_coords(work_size)

    fine_size = cfg.final_size
    fine_target = _working_image(image, fine_size)
    fine_res = fine_target - fine_target.mean()
    fine_norm = float(fine_res @ fine_res)
    fine_plane = _plane_coords(fine_size)

    scores, rots, k_offs, z_offs = _coarse_search(
        vol, quats, trans_center, trans_radius, cfg.translation_grid,
        work_size, target_res, target_norm,
        z_levels=2 * cfg.translation_grid - 1,
    )
    n_q = len(quats)
    flat = scores.reshape(n_q, -1)
    per_q = flat.max(axis=1)
    per_q_arg = flat.argmax(axis=1)
    order = np.argsort(per_q)[::-1]

    def lattice_pose(qi):
        zi, iy, ix = np.unravel_index(int(per_q_arg[qi]), scores.shape[1:])
        return quats[qi], _lattice_delta(rots[qi], trans_center, k_offs[ix], k_offs[iy], z_offs[zi])

    top_poses = [lattice_pose(qi) for qi in order[: min(cfg.top_k, n_q)]]
    cand_fine = [
        _pose_score(vol, q, d, fine_plane, fine_res, fine_norm) for q, d in top_poses
    ]
    candidate_scores = tuple(sorted((float(s) for s in cand_fine), reverse=True))
    lead = int(np.argmax(cand_fine))

    if cfg.max_refine_evals == 0:
        q, d = top_poses[lead]
        pose = Pose(q=quat_normalize(q), delta=np.clip(d, -1.0, 1.0))
        return RegistrationResult(pose=pose, score=float(cand_fine[lead]), candidate_scores=candidate_scores)

    starts = [
        (*lattice_pose(qi), float(per_q[qi])) for qi in order[: min(cfg.refine_orientations, n_q)]
    ]
    # pattern search on orientation at shrinking ring scales; the sample
    # net's spacing exceeds the capture basin of the simplex, so each
    # candidate walks toward its local peak before any simplex runs.
    # Trims separate at half the hop: scores this far out are still too
    # compensated to pick between branches closer than the next hop's reach
    for scale, keep in zip(_RING_SCALES, _RING_KEEPS):
        starts = _ring_step(vol, starts, scale, work_size, target_res, target_norm)
        starts = _diverse_top(starts, max(cfg.top_k, keep), 0.5 * scale)
    polished = []
    for q0, d0, s0 in starts[: cfg.top_k]:
        q, d, s = _refine_candidate(vol, q0, d0, plane, target_res, target_norm, cfg.max_refine_evals)
        if s < s0:
            q, d, s = q0, d0, s0
        polished.append((q, d, s))
        # a settled leader is the match; the rest would never be selected
        if s >= _SETTLED_NCC:
            break
    escape_budget = max(200, cfg.max_refine_evals // 2)
    finalists = []
    for cand in _diverse_top(polished, 3, np.radians(2.0)):
        for _ in range(2):
            if cand[2] >= _SETTLED_NCC:
                break
            hopped = _escape_step(vol, cand, work_size, plane, target_res, target_norm, escape_budget)
            if hopped[2] <= cand[2] + 1e-12:
                break
            cand = hopped
        finalists.append(cand)
    finalists.sort(key=lambda c: c[2], reverse=True)

    fine_budget = max(200, (7 * cfg.max_refine_evals) // 10)
    best_q, best_delta, best_score = None, None, -2.0
    for q0, d0, _ in finalists[:2]:
        if best_score >= _SETTLED_NCC:
            break
        q, d, s = _polish_fine(vol, q0, d0, fine_size, fine_plane, fine_res, fine_norm, fine_budget)
        if s > best_score:
            best_q, best_delta, best_score = q, d, s
    if best_score < cand_fine[lead]:
        q, d, s = _polish_fine(vol, *top_poses[lead], fine_size, fine_plane, fine_res, fine_norm, fine_budget)
        if s > best_score:
            best_q, best_delta, best_score = q, d, s

    pose = Pose(q=quat_normalize(best_q), delta=np.clip(best_delta, -1.0, 1.0))
    return RegistrationResult(pose=pose, score=best_score, candidate_scores=candidate_scores)


def register_slice(vol: Volume, image, cfg: RegistrationConfig = RegistrationConfig()) -> RegistrationResult:
    """Estimate the plane pose whose atlas slice best matches the image.

    Every sampled orientation is scored over a translation lattice at a
    reduced working resolution; the leading candidates are polished by
    Nelder-Mead over all seven pose parameters with the quaternion
    renormalized at each evaluation, finishing at a finer reporting
    resolution. The returned score is the reporting resolution
    correlation, never below any reported coarse candidate's.
    """
    if not isinstance(vol, Volume):
        raise TypeError("vol must be a Volume")
    target = _working_image(image, cfg.working_size)
    if float(np.var(target)) < DEGENERATE_VARIANCE:
        return RegistrationResult(
            pose=Pose(q=IDENTITY_QUAT.copy(), delta=np.zeros(3)),
            score=0.0,
            degenerate=True,
        )
    quats = super_fibonacci_quaternions(cfg.orientation_samples)
    return _register_image(vol, image, cfg, quats, np.zeros(3), cfg.translation_radius)


def register_scan(
    vol: Volume,
    scan: ScanSequence,
    sp: StandardPlaneDef,
    reg_cfg: RegistrationConfig = RegistrationConfig(),
    align_cfg: ContrastiveConfig = ContrastiveConfig(),
    opt_cfg: OptimizerConfig = OptimizerConfig(),
) -> list[RegistrationResult]:
    """Register every frame of a scan, then refine orientations jointly.

    Frame 0 runs the full search; each later frame searches only
    orientations within 45 degrees of its predecessor and a translation
    lattice of half the usual radius around the predecessor's position.
    The contrastive scan refinement then adjusts orientations across
    frames, and per-frame scores are recomputed at the refined poses.
    """
    if len(scan) == 0:
        raise ValueError("scan must contain at least one frame")
    quats = super_fibonacci_quaternions(reg_cfg.orientation_samples)
    fine_plane = _plane_coords(reg_cfg.final_size)

    results = []
    for idx, frame in enumerate(scan.frames):
        target = _working_image(frame, reg_cfg.working_size)
        if float(np.var(target)) < DEGENERATE_VARIANCE:
            results.append(
                RegistrationResult(
                    pose=Pose(q=IDENTITY_QUAT.copy(), delta=np.zeros(3)),
                    score=0.0,
                    degenerate=True,
                )
            )
            continue
        if idx == 0 or results[idx - 1].degenerate:
            results.append(_register_image(vol, frame, reg_cfg, quats, np.zeros(3), reg_cfg.translation_radius))
        else:
            prev = results[idx - 1].pose
            dots = np.abs(quats @ prev.q)
            near = quats[dots >= np.cos(np.pi / 4.0)]
            cands = np.vstack([prev.q[None, :], near])
            results.append(
                _register_image(vol, frame, reg_cfg, cands, prev.delta, reg_cfg.translation_radius / 2.0)
            )

    init_poses = [r.pose for r in results]
    refined = refine_scan_poses(scan, init_poses, sp, align_cfg, opt_cfg)

    final = []
    for res, pose, frame in zip(results, refined, scan.frames):
        if res.degenerate:
            final.append(res)
            continue
        target = _working_image(frame, reg_cfg.final_size)
        target_res = target - target.mean()
        target_norm = float(target_res @ target_res)
        score = _pose_score(vol, pose.q, pose.delta, fine_plane, target_res, target_norm)
        final.append(
            RegistrationResult(pose=pose, score=score, candidate_scores=res.candidate_scores)
        )
    return final
