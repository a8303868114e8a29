"""Scan-level alignment objectives and pose refinement.

Two terms steer a scan's estimated orientations: an in-plane geodesic loss
anchoring the designated SP frame to the standard plane (either traversal
direction), and a contrastive out-of-plane loss pulling consecutive frames
together relative to semantically-weighted negatives from the same scan.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose, StandardPlaneDef, geodesic_loss, quat_from_axis_angle
from .similarity import semantic_descriptor, semantic_similarity
from .volume import SliceImage

FRAME_RATE_HZ = 6.0
KNOWN_SP_IDS = ("tvp", "tcp")


@dataclass(frozen=True)
class ScanSequence:
    """An ordered sweep of frames with one frame designated as the SP."""

    frames: tuple
    sp_index: int
    sp_id: str
    probe_q: np.ndarray | None = None
    frame_rate_hz: float = FRAME_RATE_HZ

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("scan must contain at least one frame")
        if not all(isinstance(f, SliceImage) for f in frames):
            raise ValueError("frames must be SliceImage instances")
        shape = frames[0].intensities.shape
        if any(f.intensities.shape != shape for f in frames):
            raise ValueError("all frames must share one resolution")
        if not 0 <= self.sp_index < len(frames):
            raise ValueError(f"sp_index {self.sp_index} out of range for {len(frames)} frames")
        sp_id = str(self.sp_id).lower()
        if sp_id not in KNOWN_SP_IDS:
            raise ValueError(f"sp_id must be one of {KNOWN_SP_IDS}, got {self.sp_id!r}")
        if self.frame_rate_hz <= 0:
            raise ValueError("frame_rate_hz must be positive")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "sp_id", sp_id)
        if self.probe_q is not None:
            q = np.asarray(self.probe_q, dtype=np.float64)
            if q.shape != (len(frames), 4):
                raise ValueError(f"probe_q must have shape ({len(frames)}, 4), got {q.shape}")
            norms = np.linalg.norm(q, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("probe_q rows must be unit quaternions")
            q = q.copy()
            q.flags.writeable = False
            object.__setattr__(self, "probe_q", q)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class ContrastiveConfig:
    num_negatives: int = 5
    temperature: float = 0.8
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_negatives < 1:
            raise ValueError("num_negatives must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.05
    max_iters: int = 200
    fd_step: float = 1e-3
    early_stop_rel: float = 1e-6
    early_stop_window: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0 or self.fd_step <= 0:
            raise ValueError("learning_rate and fd_step must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.early_stop_window < 1:
            raise ValueError("early_stop_window must be >= 1")


def in_plane_loss(q_hat, sp: StandardPlaneDef) -> float:
    """Geodesic distance from q_hat to the nearer of the SP's two directions."""
    return min(geodesic_loss(sp.q_pos, q_hat), geodesic_loss(sp.q_neg, q_hat))


def contrastive_core(pos_geo: float, neg_geos, weights, tau: float) -> float:
    """Contrastive loss over precomputed geodesic distances.

    -log[ exp(cos(pos)/tau) / sum_n w_n exp(cos(neg_n)/tau) ], evaluated in
    log space so analytic identities (equal negatives -> ln N) hold exactly.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    neg = np.asarray(neg_geos, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if neg.ndim != 1 or neg.size == 0 or neg.shape != w.shape:
        raise ValueError("neg_geos and weights must be matching non-empty 1D arrays")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    z = np.cos(neg) / tau
    m = float(z.max())
    log_den = m + float(np.log(np.sum(w * np.exp(z - m))))
    return log_den - float(np.cos(pos_geo)) / tau


def _positive_index(anchor_idx: int, count: int) -> int:
    # successor frame; the final frame pairs backward
    return anchor_idx + 1 if anchor_idx + 1 < count else anchor_idx - 1


def _negative_indices(anchor_idx, count, cfg, exclude):
    pos = _positive_index(anchor_idx, count)
    banned = {anchor_idx, pos} | set(exclude)
    eligible = [j for j in range(count) if j not in banned]
    if len(eligible) < cfg.num_negatives:
        raise ValueError(
            f"scan too short: {len(eligible)} eligible negatives, need {cfg.num_negatives}"
        )
    rng = np.random.default_rng((cfg.rng_seed, anchor_idx))
    chosen = rng.choice(len(eligible), size=cfg.num_negatives, replace=False)
    return pos, [eligible[c] for c in chosen]


def out_of_plane_loss(
    anchor_idx: int,
    poses,
    descriptors,
    cfg: ContrastiveConfig,
    exclude=(),
) -> float:
    """Eq-style contrastive loss for one anchor frame.

    Positive is the consecutive frame; negatives are drawn without
    replacement from the remaining frames (minus `exclude`) by a generator
    seeded with (cfg.rng_seed, anchor_idx), so draws are reproducible.
    """
    quats = np.asarray([np.asarray(q, dtype=np.float64) for q in poses])
    count = len(quats)
    if not 0 <= anchor_idx < count:
        raise ValueError("anchor index out of range")
    if len(descriptors) != count:
        raise ValueError("one descriptor per pose required")
    pos, negs = _negative_indices(anchor_idx, count, cfg, exclude)
    pos_geo = geodesic_loss(quats[anchor_idx], quats[pos])
    neg_geos = [geodesic_loss(quats[anchor_idx], quats[j]) for j in negs]
    weights = [semantic_similarity(descriptors[anchor_idx], descriptors[j]) for j in negs]
    return contrastive_core(pos_geo, neg_geos, weights, cfg.temperature)


def scan_objective(scan: ScanSequence, poses, sp: StandardPlaneDef, cfg: ContrastiveConfig) -> float:
    """In-plane loss at the SP frame plus the mean out-of-plane loss over all
    other frames that have enough eligible negatives."""
    if len(poses) != len(scan):
        raise ValueError("one pose per frame required")
    quats = [p.q for p in poses]
    descriptors = [semantic_descriptor(f) for f in scan.frames]
    total = in_plane_loss(quats[scan.sp_index], sp)
    terms = []
    for i in range(len(scan)):
        if i == scan.sp_index or len(scan) < 2:
            continue
        try:
            terms.append(
                out_of_plane_loss(i, quats, descriptors, cfg, exclude=(scan.sp_index,))
            )
        except ValueError:
            continue
    if terms:
        total += float(np.mean(terms))
    return total


def _quat_mul_batch(a, b):
    """Hamilton product over broadcastable (..., 4) arrays."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def _rotvec_to_quat(v):
    """Axis-angle 3-vectors (..., 3) to unit quaternions (..., 4)."""
    v = np.asarray(v, dtype=np.float64)
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    half = 0.5 * angle
    small = angle < 1e-12
    axis = np.where(small, 0.0, v / np.where(small, 1.0, angle))
    q = np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)
    return q


class _FastScanObjective:
    """Vectorized scan_objective over batches of candidate pose sets.

    Anchor/positive/negative structure and semantic weights depend only on
    the scan and config, so they are precomputed once; __call__ then accepts
    (F, 4) or (B, F, 4) quaternion arrays.
    """

    def __init__(self, scan: ScanSequence, sp: StandardPlaneDef, cfg: ContrastiveConfig):
        self.sp_index = scan.sp_index
        self.tau = cfg.temperature
        self.branches = np.stack([sp.q_pos, sp.q_neg])
        descriptors = [semantic_descriptor(f) for f in scan.frames]
        count = len(scan)
        anchors, positives, negatives, weights = [], [], [], []
        for i in range(count):
            if i == self.sp_index or count < 2:
                continue
            try:
                pos, negs = _negative_indices(i, count, cfg, exclude=(self.sp_index,))
            except ValueError:
                continue
            anchors.append(i)
            positives.append(pos)
            negatives.append(negs)
            weights.append(
                [semantic_similarity(descriptors[i], descriptors[j]) for j in negs]
            )
        self.anchors = np.asarray(anchors, dtype=int)
        self.positives = np.asarray(positives, dtype=int)
        # an all-skipped scan (single frame, or too few peers) keeps an empty
        # contrastive term; reshape(-1) cannot infer a width from zero rows
        shape = (len(anchors), -1) if anchors else (0, 0)
        self.negatives = np.asarray(negatives, dtype=int).reshape(shape)
        self.weights = np.asarray(weights, dtype=np.float64).reshape(shape)

    def __call__(self, quats):
        q = np.asarray(quats, dtype=np.float64)
        single = q.ndim == 2
        if single:
            q = q[None]
        q = q / np.linalg.norm(q, axis=-1, keepdims=True)
        sp_dots = np.abs(q[:, self.sp_index] @ self.branches.T)
        total = np.arccos(np.clip(sp_dots.max(axis=1), 0.0, 1.0))
        if self.anchors.size:
            qa = q[:, self.anchors]
            pos_dot = np.abs(np.einsum("bak,bak->ba", qa, q[:, self.positives]))
            pos_geo = np.arccos(np.clip(pos_dot, 0.0, 1.0))
            neg_dot = np.abs(np.einsum("bak,bank->ban", qa, q[:, self.negatives]))
            neg_geo = np.arccos(np.clip(neg_dot, 0.0, 1.0))
            z = np.cos(neg_geo) / self.tau
            m = z.max(axis=2, keepdims=True)
            log_den = m[..., 0] + np.log(
                np.sum(self.weights[None] * np.exp(z - m), axis=2)
            )
            losses = log_den - np.cos(pos_geo) / self.tau
            total = total + losses.mean(axis=1)
        return float(total[0]) if single else total


def refine_scan_poses(
    scan: ScanSequence,
    init_poses,
    sp: StandardPlaneDef,
    cfg: ContrastiveConfig,
    opt: OptimizerConfig = OptimizerConfig(),
) -> list[Pose]:
    """Monotone finite-difference descent of scan_objective over orientations.

    Each iteration estimates a per-frame axis-angle gradient by central
    differences (all perturbations scored in one vectorized batch), takes a
    step, and keeps it only if the objective does not increase; the step
    size backs off on rejection. Translations pass through untouched.
    """
    init_poses = list(init_poses)
    if len(init_poses) != len(scan):
        raise ValueError("one init pose per frame required")
    if opt.max_iters == 0:
        return init_poses
    objective = _FastScanObjective(scan, sp, cfg)
    count = len(scan)
    q = np.stack([p.q for p in init_poses])
    f_cur = objective(q)
    history = [f_cur]
    h = opt.fd_step
    step_scale = opt.learning_rate
    axis_quats = np.stack(
        [quat_from_axis_angle(axis, h) for axis in np.eye(3)]
        + [quat_from_axis_angle(axis, -h) for axis in np.eye(3)]
    )
    for _ in range(opt.max_iters):
        batch = np.repeat(q[None], 6 * count, axis=0)
        slot = 0
        for i in range(count):
            for k in range(6):
                batch[slot, i] = _quat_mul_batch(q[i], axis_quats[k])
                slot += 1
        values = objective(batch).reshape(count, 6)
        grad = (values[:, :3] - values[:, 3:]) / (2.0 * h)
        step = -step_scale * grad
        q_new = _quat_mul_batch(q, _rotvec_to_quat(step))
        q_new = q_new / np.linalg.norm(q_new, axis=-1, keepdims=True)
        f_new = objective(q_new)
        if f_new <= f_cur:
            q = q_new
            f_cur = f_new
            step_scale = min(step_scale * 1.2, opt.learning_rate)
        else:
            step_scale *= 0.5
        history.append(f_cur)
        if len(history) > opt.early_stop_window:
            before = history[-opt.early_stop_window - 1]
            if before - f_cur < opt.early_stop_rel * max(abs(before), 1e-12):
                break
    return [
        Pose(q=q[i], delta=init_poses[i].delta) for i in range(count)
    ]


# --- scan directory serialization -------------------------------------------


def save_scan(scan: ScanSequence, directory) -> Path:
    """Write frames as raw little-endian f32 rows-major files plus manifest.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(scan.frames):
        data = np.ascontiguousarray(frame.intensities, dtype="<f4")
        (directory / f"frame_{i:04d}.raw").write_bytes(data.tobytes())
    first = scan.frames[0]
    manifest = {
        "sp_index": scan.sp_index,
        "sp_id": scan.sp_id,
        "probe_q": None if scan.probe_q is None else scan.probe_q.tolist(),
        "frame_rate_hz": scan.frame_rate_hz,
        "frame_count": len(scan),
        "width": first.width,
        "height": first.height,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return directory


def load_scan(directory) -> ScanSequence:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {directory}")
    manifest = json.loads(manifest_path.read_text())
    count = int(manifest["frame_count"])
    w, h = int(manifest["width"]), int(manifest["height"])
    frames = []
    for i in range(count):
        payload = (directory / f"frame_{i:04d}.raw").read_bytes()
        arr = np.frombuffer(payload, dtype="<f4")
        if arr.size != w * h:
            raise ValueError(f"frame {i} payload has {arr.size} values, expected {w * h}")
        frames.append(SliceImage(intensities=arr.reshape(h, w)))
    probe_q = manifest.get("probe_q")
    return ScanSequence(
        frames=tuple(frames),
        sp_index=int(manifest["sp_index"]),
        sp_id=manifest["sp_id"],
        probe_q=None if probe_q is None else np.asarray(probe_q, dtype=np.float64),
        frame_rate_hz=float(manifest.get("frame_rate_hz", FRAME_RATE_HZ)),
    )
