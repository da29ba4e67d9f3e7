"""Per-frame inverse-kinematics retargeting, root offset, and trajectory
smoothing.

The retarget objective is the sum of squared distances between source
keypoints and the same-named keypoints of the target skeleton after its
bones have been rescaled to source lengths. It is minimized by damped least
squares (Levenberg-Marquardt) on the stacked keypoint residual with the
analytic FK Jacobian; the accepted-step objective is non-increasing by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, NonFiniteError, ShapeError, SkeletonCorrespondenceError
from .kinematics import (
    Motion,
    Pose,
    Skeleton,
    _fk_world,
    fk_keypoints,
    fk_keypoints_with_jacobian,
    rescale_bones,
)


@dataclass
class RetargetConfig:
    """Solver controls for the per-frame IK problem.

    keypoint_weights is reserved: optional per-keypoint-name weights applied
    as sqrt-weights on the residual blocks (uniform when None).
    """

    max_iterations: int = 50
    damping: float = 1e-3
    residual_tol: float = 1e-10
    step_tol: float = 1e-8
    init_from_previous: bool = True
    keypoint_weights: dict[str, float] | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.residual_tol <= 0 or self.step_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.damping < 0:
            raise ValueError("damping must be >= 0")


@dataclass
class RetargetReport:
    """Per-frame solve diagnostics for a retargeted sequence."""

    residuals: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    converged: list[bool] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "residuals": self.residuals,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class IKSolution:
    pose: Pose
    residual: float
    iterations: int
    converged: bool


def _pack(pose: Pose) -> np.ndarray:
    return np.concatenate(
        [pose.root_translation, pose.root_rotation, pose.joint_rotations.ravel()]
    )


def _unpack(theta: np.ndarray) -> Pose:
    return Pose(theta[0:3], theta[3:6], theta[6:].reshape(-1, 3))


def solve_keypoint_ik(
    skel: Skeleton,
    keypoint_indices: np.ndarray,
    targets: np.ndarray,
    init: Pose,
    cfg: RetargetConfig,
    weights: np.ndarray | None = None,
    lock_root_translation: bool = False,
) -> IKSolution:
    """Damped least squares on ``sum_k w_k |kp_k(pose) - target_k|^2``.

    Non-convergence is not an error; the best iterate is returned with
    ``converged=False``. The reported residual is the unweighted sum of
    squared keypoint distances. With lock_root_translation the root stays
    where the initializer put it (interactive handle edits pin the body).
    """
    init.validate_for(skel)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (len(keypoint_indices), 3):
        raise ShapeError(
            f"targets shape {targets.shape} != ({len(keypoint_indices)}, 3)"
        )
    if not np.all(np.isfinite(targets)):
        raise NonFiniteError("IK targets contain non-finite values")
    sqrt_w = None
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(keypoint_indices),):
            raise ShapeError("one weight per keypoint required")
        sqrt_w = np.sqrt(np.repeat(weights, 3))
    kp_idx = np.asarray(keypoint_indices, dtype=np.int64)

    def residual_at(theta):
        p, _ = _fk_world(skel, _unpack(theta))
        return (p[kp_idx] - targets).ravel()

    theta = _pack(init)
    kp, jac = fk_keypoints_with_jacobian(skel, _unpack(theta), kp_idx)
    r = (kp - targets).ravel()
    cost = float(r @ r)  # unweighted objective, reported
    if cost <= cfg.residual_tol:
        return IKSolution(_unpack(theta), cost, 0, True)

    lam = max(cfg.damping, 1e-12)
    active = np.arange(3 if lock_root_translation else 0, theta.size)
    n = active.size
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        rw = r if sqrt_w is None else r * sqrt_w
        Jw = jac[:, active] if sqrt_w is None else jac[:, active] * sqrt_w[:, None]
        A = Jw.T @ Jw
        g = Jw.T @ rw

        accepted = False
        delta = np.zeros(theta.size)
        for _ in range(12):  # escalate damping until a step decreases cost
            try:
                delta_a = np.linalg.solve(A + lam * np.eye(n), -g)
            except np.linalg.LinAlgError:
                lam = max(lam, 1e-12) * 10.0
                continue
            if not np.all(np.isfinite(delta_a)):
                lam = max(lam, 1e-12) * 10.0
                continue
            delta = np.zeros(theta.size)
            delta[active] = delta_a
            r_new = residual_at(theta + delta)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                theta = theta + delta
                r = r_new
                cost = cost_new
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        if cost <= cfg.residual_tol:
            converged = True
            break
        if float(np.linalg.norm(delta)) < cfg.step_tol:
            break
        _, jac = fk_keypoints_with_jacobian(skel, _unpack(theta), kp_idx)
    if cost <= cfg.residual_tol:
        converged = True
    return IKSolution(_unpack(theta), cost, it, converged)


def _matched_keypoint_indices(src: Skeleton, trgt: Skeleton) -> np.ndarray:
    """Indices of the target joints matching source keypoint names, in source
    keypoint order."""
    idx = []
    trgt_kp = set(trgt.keypoint_names)
    for name in src.keypoint_names:
        if name not in trgt_kp:
            raise SkeletonCorrespondenceError(
                f"source keypoint {name!r} missing from target keypoints"
            )
        idx.append(trgt.name_to_index[name])
    return np.array(idx, dtype=np.int64)


def _keypoint_weight_vector(src: Skeleton, cfg: RetargetConfig) -> np.ndarray | None:
    if cfg.keypoint_weights is None:
        return None
    return np.array(
        [float(cfg.keypoint_weights.get(n, 1.0)) for n in src.keypoint_names]
    )


def transplant_pose(src_skel: Skeleton, src_pose: Pose, trgt_skel: Skeleton) -> Pose:
    """Copy pose parameters across by joint name (rotations of same-named
    joints, root terms verbatim). Geometry-naive; used as an IK initializer."""
    rots = np.zeros((trgt_skel.n_joints - 1, 3))
    src_index = src_skel.name_to_index
    for i in range(1, trgt_skel.n_joints):
        j = src_index.get(trgt_skel.joints[i].name)
        if j is not None and j > 0:
            rots[i - 1] = src_pose.joint_rotations[j - 1]
    return Pose(src_pose.root_translation, src_pose.root_rotation, rots)


def _aligned_transplant(src_skel: Skeleton, src_pose: Pose, trgt_skel: Skeleton) -> Pose:
    """Transplant plus a root-translation shift that makes the rest root
    positions coincide (cancels the un-rescaled root offset exactly)."""
    tp = transplant_pose(src_skel, src_pose, trgt_skel)
    delta = src_skel.offsets[0] - trgt_skel.offsets[0]
    return Pose(tp.root_translation + delta, tp.root_rotation, tp.joint_rotations)


def retarget_pose(
    src_skel: Skeleton,
    src_pose: Pose,
    trgt_skel: Skeleton,
    init: Pose | None,
    cfg: RetargetConfig | None = None,
) -> tuple[Pose, float]:
    """Solve one frame of the retargeting problem.

    Returns the optimal pose for the target skeleton's parameterization and
    the final objective value (sum of squared keypoint distances, evaluated
    on the bone-rescaled target skeleton).
    """
    cfg = cfg or RetargetConfig()
    src_pose.validate_for(src_skel)
    rescaled = rescale_bones(trgt_skel, src_skel)
    kp_idx = _matched_keypoint_indices(src_skel, rescaled)
    targets = fk_keypoints(src_skel, src_pose)
    if init is None:
        # best of rest and the root-aligned transplanted source pose
        candidates = [_aligned_transplant(src_skel, src_pose, rescaled), Pose.rest(trgt_skel)]
        costs = [_objective(rescaled, kp_idx, targets, c) for c in candidates]
        init = candidates[int(np.argmin(costs))]
    else:
        init.validate_for(trgt_skel)
    sol = solve_keypoint_ik(
        rescaled, kp_idx, targets, init, cfg, _keypoint_weight_vector(src_skel, cfg)
    )
    return sol.pose, sol.residual


def retarget_sequence(
    src_skel: Skeleton,
    src_motion: Motion,
    trgt_skel: Skeleton,
    cfg: RetargetConfig | None = None,
) -> tuple[Motion, RetargetReport]:
    """Sequential per-frame solves over a motion.

    Each frame starts from the lowest-objective candidate among the previous
    frame's solution (when init_from_previous), the name-transplanted source
    pose, and rest; ties keep the earlier candidate. Deterministic given
    inputs.
    """
    cfg = cfg or RetargetConfig()
    if len(src_motion) == 0:
        raise EmptyInputError("source motion has no frames")
    rescaled = rescale_bones(trgt_skel, src_skel)
    kp_idx = _matched_keypoint_indices(src_skel, rescaled)
    weights = _keypoint_weight_vector(src_skel, cfg)

    report = RetargetReport()
    out_frames: list[Pose] = []
    prev: Pose | None = None
    rest = Pose.rest(trgt_skel)
    for t, src_pose in enumerate(src_motion.frames):
        try:
            src_pose.validate_for(src_skel)
        except NonFiniteError as exc:
            raise NonFiniteError(f"frame {t}: {exc}") from exc
        targets = fk_keypoints(src_skel, src_pose)

        candidates = []
        if prev is not None and cfg.init_from_previous:
            candidates.append(prev)
        candidates.append(_aligned_transplant(src_skel, src_pose, rescaled))
        candidates.append(rest)
        costs = [_objective(rescaled, kp_idx, targets, c) for c in candidates]
        init = candidates[int(np.argmin(costs))]

        sol = solve_keypoint_ik(rescaled, kp_idx, targets, init, cfg, weights)
        out_frames.append(sol.pose)
        report.residuals.append(sol.residual)
        report.iterations.append(sol.iterations)
        report.converged.append(sol.converged)
        prev = sol.pose
    return Motion(fps=src_motion.fps, frames=tuple(out_frames)), report


def _objective(skel, kp_idx, targets, pose) -> float:
    p, _ = _fk_world(skel, pose)
    d = (p[kp_idx] - targets).ravel()
    return float(d @ d)


def apply_root_offset(
    motion: Motion, train_roots: list | np.ndarray, test_roots: list | np.ndarray
) -> Motion:
    """Shift every frame's root translation by mean(train) - mean(test)."""
    train = np.asarray(train_roots, dtype=np.float64).reshape(-1, 3)
    test = np.asarray(test_roots, dtype=np.float64).reshape(-1, 3)
    if train.shape[0] == 0 or test.shape[0] == 0:
        raise EmptyInputError("root position lists must be nonempty")
    delta = train.mean(axis=0) - test.mean(axis=0)
    frames = tuple(
        Pose(p.root_translation + delta, p.root_rotation, p.joint_rotations)
        for p in motion.frames
    )
    return Motion(fps=motion.fps, frames=frames)


def smooth_trajectories(frames: np.ndarray, sigma_frames: float) -> np.ndarray:
    """Temporal Gaussian smoothing of per-frame point sets.

    Parameters
    ----------
    frames : (T, N, 3) array (or nested sequence) of point trajectories.
    sigma_frames : Gaussian standard deviation in frames; the kernel is
        truncated at radius ceil(3*sigma) and renormalized over the valid
        window at sequence boundaries.

    Returns
    -------
    (T, N, 3) array of the same length.
    """
    if sigma_frames <= 0:
        raise ValueError("sigma_frames must be > 0")
    try:
        arr = np.asarray(frames, dtype=np.float64)
    except ValueError as exc:
        raise ShapeError(f"inconsistent frame shapes: {exc}") from exc
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1:
        raise ShapeError(f"expected (T, N, 3) trajectories, got {arr.shape}")

    T = arr.shape[0]
    radius = int(np.ceil(3.0 * sigma_frames))
    taps = np.exp(-(np.arange(-radius, radius + 1) ** 2) / (2.0 * sigma_frames**2))

    out = np.zeros_like(arr)
    norm = np.zeros(T)
    for di in range(-radius, radius + 1):
        w = taps[di + radius]
        lo = max(0, -di)
        hi = min(T, T - di)
        if lo >= hi:
            continue
        out[lo:hi] += w * arr[lo + di : hi + di]
        norm[lo:hi] += w
    out /= norm[:, None, None]
    return out
