"""Self-check suites: oracle comparisons and finite-difference gradient
verification, runnable from the CLI and reused by the test suite.

Each check returns a :class:`CheckResult` with the measured error and its
tolerance; a suite passes when every check does.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .appearance import MlpParams, descriptors, encode_descriptors, encode_appearance_backward
from .core import GridConfig, PointCloud, PoseSE3
from .geometry import OUT_OF_RANGE, partition, transform_cloud, compose_relative, relative_transform
from .motion import WindowState
from .netcore import (
    AmcmParams,
    amcm_backward,
    amcm_forward,
    central_difference,
    coattention_gate,
    coattention_gate_backward,
    motion_guided_attention,
    motion_guided_attention_backward,
    relative_error,
    ring_conv2d,
    ring_conv2d_backward,
)
from .objective import ClassStats, ConfusionCounts, accumulate, iou, lovasz_softmax, total_loss, weighted_ce
from .synth import BoxSpec, EgoSpec, SceneSpec, generate, oracle_motion_features


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.measured <= self.tolerance

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{flag}] {self.name}: error {self.measured:.3e} vs tol {self.tolerance:.1e}{extra}"


# ---------------------------------------------------------------------------
# geometry


def scalar_partition_oracle(xyz: np.ndarray, cfg: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    """Independent per-point reimplementation of the polar binning with
    plain scalar math; returns (u, v) with -1 marking out-of-range."""
    m = xyz.shape[0]
    u = np.empty(m, dtype=np.int64)
    v = np.empty(m, dtype=np.int64)
    for i in range(m):
        x, y = float(xyz[i, 0]), float(xyz[i, 1])
        rho = math.sqrt(x * x + y * y)
        theta = math.atan2(y, x)
        if not (cfg.rho_min <= rho <= cfg.rho_max) or not (cfg.theta_min <= theta <= cfg.theta_max):
            u[i] = OUT_OF_RANGE
            v[i] = OUT_OF_RANGE
            continue
        ui = math.floor((rho - cfg.rho_min) / (cfg.rho_max - cfg.rho_min) * cfg.w)
        vi = math.floor((theta - cfg.theta_min) / (cfg.theta_max - cfg.theta_min) * cfg.h)
        u[i] = min(ui, cfg.w - 1)
        v[i] = min(vi, cfg.h - 1)
    return u, v


def _random_cloud(rng: np.random.Generator, n: int, spread: float = 60.0) -> PointCloud:
    xyz = rng.uniform(-spread, spread, size=(n, 3))
    xyz[:, 2] = rng.uniform(-5.0, 3.0, n)
    return PointCloud(xyz=xyz)


def _random_pose(rng: np.random.Generator) -> PoseSE3:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    # Snap to SO(3) so pose validation at 1e-9 always holds.
    u_, _, vt = np.linalg.svd(rot)
    rot = u_ @ vt
    return PoseSE3.from_rt(rot, rng.uniform(-5, 5, 3))


def geometry_suite(seed: int = 0, trials: int = 5, points: int = 2000, cfg: Optional[GridConfig] = None) -> list[CheckResult]:
    cfg = cfg or GridConfig()
    rng = np.random.default_rng(seed)
    results = []

    mismatches = 0
    cover_err = 0
    for _ in range(trials):
        cloud = _random_cloud(rng, points)
        part = partition(cloud, cfg)
        u_ref, v_ref = scalar_partition_oracle(cloud.xyz, cfg)
        mismatches += int(np.sum((part.u != u_ref) | (part.v != v_ref)))
        cover_err += abs(int(part.counts().sum()) + int(np.sum(~part.in_range)) - len(cloud))
    results.append(CheckResult("geometry.partition_oracle", float(mismatches), 0.0, f"{trials}x{points} points"))
    results.append(CheckResult("geometry.disjoint_cover", float(cover_err), 0.0))

    rigid_err = 0.0
    for _ in range(trials):
        cloud = _random_cloud(rng, 200, spread=20.0)
        pose = _random_pose(rng)
        moved = transform_cloud(cloud, pose)
        d0 = np.linalg.norm(cloud.xyz[:100] - cloud.xyz[100:200], axis=1)
        d1 = np.linalg.norm(moved.xyz[:100] - moved.xyz[100:200], axis=1)
        rigid_err = max(rigid_err, float(np.max(np.abs(d0 - d1))))
    results.append(CheckResult("geometry.rigidity", rigid_err, 1e-9))

    chain_err = 0.0
    for _ in range(trials):
        poses = [_random_pose(rng) for _ in range(6)]
        for n in range(6):
            direct = compose_relative(poses, 5, n)
            step = PoseSE3.identity()
            for k in range(1, n + 1):
                step = step.compose(relative_transform(poses[5 - k + 1], poses[5 - k]))
            chain_err = max(chain_err, float(np.max(np.abs(direct.matrix - step.matrix))))
    results.append(CheckResult("geometry.compose_expansion", chain_err, 1e-12))
    return results


# ---------------------------------------------------------------------------
# motion


def _check_scene(seed: int) -> tuple[SceneSpec, GridConfig]:
    cfg = GridConfig(h=48, w=48, rho_max=20.0, window_size=8)
    spec = SceneSpec(
        seed=seed,
        frames=20,
        ground_points=8000,
        object_points=800,
        ego=EgoSpec(kind="line", speed=0.25),
        objects=(
            BoxSpec(center=(7.0, 2.0), velocity=(0.4, 0.0)),
            BoxSpec(center=(-6.0, -4.0), velocity=(0.0, 0.0)),
        ),
    )
    return spec, cfg


def motion_suite(seed: int = 0) -> list[CheckResult]:
    results = []
    spec, cfg = _check_scene(seed)
    frames = generate(spec)
    state = WindowState(cfg)
    popped = {}
    emit_at = {}
    for i, f in enumerate(frames):
        out = state.push(f.cloud, f.pose)
        if out is not None:
            popped[out.frame_index] = out
            emit_at[out.frame_index] = i

    max_diff = 0.0
    for j, feats in popped.items():
        ref = oracle_motion_features(frames, cfg, j)
        if not np.array_equal(feats.values, ref.values):
            max_diff = max(max_diff, float(np.max(np.abs(feats.values - ref.values))))
    results.append(CheckResult("motion.window_oracle", max_diff, 0.0, f"{len(popped)} frames, exact"))

    delay_err = sum(1 for j, i in emit_at.items() if i != j + cfg.window_size - 1)
    results.append(CheckResult("motion.delay_accounting", float(delay_err), 0.0))

    band_err = 0.0
    for feats in popped.values():
        nz = feats.values[feats.values != 0]
        if nz.size:
            band_err = max(band_err, float(max(cfg.d_min - nz.min(), nz.max() - cfg.d_max, 0.0)))
    results.append(CheckResult("motion.residual_band", band_err, 0.0))

    # Common rigid motion of world and poses leaves features unchanged.
    g = PoseSE3.rotation_z(0.7).compose(PoseSE3.translation(3.0, -2.0, 0.5))
    state_g = WindowState(cfg)
    popped_g = {}
    for f in frames:
        out = state_g.push(f.cloud, g.compose(f.pose))
        if out is not None:
            popped_g[out.frame_index] = out
    ego_err = max(
        float(np.max(np.abs(popped[j].values - popped_g[j].values))) for j in popped
    )
    results.append(CheckResult("motion.ego_invariance", ego_err, 1e-9))

    # Raw residuals negate when the window contents swap.
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 3, size=(cfg.h, cfg.w))
    b = rng.uniform(0, 3, size=(cfg.h, cfg.w))
    sym_err = float(np.max(np.abs((a - b) + (b - a))))
    results.append(CheckResult("motion.sign_symmetry", sym_err, 0.0))
    return results


# ---------------------------------------------------------------------------
# gradients


def _flatten(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def _split(flat: np.ndarray, shapes: Sequence[tuple]) -> list[np.ndarray]:
    out = []
    off = 0
    for s in shapes:
        n = int(np.prod(s)) if s else 1
        out.append(flat[off : off + n].reshape(s))
        off += n
    return out


def fd_ring_conv(seed: int, eps: float = 1e-5, tol: float = 1e-5, fault: float = 1.0) -> CheckResult:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 4, 6))
    k = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    r = rng.standard_normal((3, 4, 6))
    shapes = [x.shape, k.shape, b.shape]

    def loss(flat):
        x_, k_, b_ = _split(flat, shapes)
        return float(np.sum(r * ring_conv2d(x_, k_, b_)))

    dx, dk, db = ring_conv2d_backward(r, x, k)
    dk = dk * fault
    numeric = central_difference(loss, _flatten([x, k, b]), eps=eps)
    return CheckResult(
        "gradients.ring_conv2d", relative_error(numeric, _flatten([dx, dk, db])), tol, f"seed {seed}"
    )


def fd_gate(seed: int, eps: float = 1e-5, tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    c_a, c_m, h, w = 2, 2, 4, 6
    fa = rng.standard_normal((c_a, h, w))
    fm = rng.standard_normal((c_m, h, w))
    params = AmcmParams.random(c_a, c_m, rng, scale=0.4)
    ra = rng.standard_normal(fa.shape)
    rm = rng.standard_normal(fm.shape)
    shapes = [fa.shape, fm.shape, params.gate_kernel.shape, params.gate_bias.shape]

    def loss(flat):
        fa_, fm_, gk_, gb_ = _split(flat, shapes)
        p = dataclasses.replace(params, gate_kernel=gk_, gate_bias=gb_)
        (_, _, ga, gm), _ = coattention_gate(fa_, fm_, p)
        return float(np.sum(ra * ga) + np.sum(rm * gm))

    (_, _, ga, gm), cache = coattention_gate(fa, fm, params)
    dfa, dfm, dgk, dgb = coattention_gate_backward(ra, rm, cache)
    numeric = central_difference(loss, _flatten([fa, fm, params.gate_kernel, params.gate_bias]), eps=eps)
    return CheckResult(
        "gradients.coattention_gate",
        relative_error(numeric, _flatten([dfa, dfm, dgk, dgb])),
        tol,
        f"seed {seed}",
    )


def fd_mga(seed: int, eps: float = 1e-5, tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    c_a, c_m, h, w = 2, 2, 4, 6
    ga = rng.standard_normal((c_a, h, w))
    gm = rng.standard_normal((c_m, h, w))
    params = AmcmParams.random(c_a, c_m, rng, scale=0.4)
    r = rng.standard_normal(ga.shape)
    names = ["spatial_kernel", "spatial_bias", "channel_kernel", "channel_bias"]
    shapes = [ga.shape, gm.shape] + [getattr(params, n).shape for n in names]

    def loss(flat):
        parts = _split(flat, shapes)
        p = dataclasses.replace(params, **dict(zip(names, parts[2:])))
        (out, _, _), _ = motion_guided_attention(parts[0], parts[1], p)
        return float(np.sum(r * out))

    (_, _, _), cache = motion_guided_attention(ga, gm, params)
    dga, dgm, dsk, dsb, dck, dcb = motion_guided_attention_backward(r, cache)
    numeric = central_difference(
        loss, _flatten([ga, gm] + [getattr(params, n) for n in names]), eps=eps
    )
    return CheckResult(
        "gradients.motion_guided_attention",
        relative_error(numeric, _flatten([dga, dgm, dsk, dsb, dck, dcb])),
        tol,
        f"seed {seed}",
    )


_AMCM_PARAM_NAMES = [
    "gate_kernel",
    "gate_bias",
    "spatial_kernel",
    "spatial_bias",
    "channel_kernel",
    "channel_bias",
]


def fd_amcm(seed: int, eps: float = 1e-5, tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    c_a, c_m, h, w = 2, 2, 4, 6
    fa = rng.standard_normal((c_a, h, w))
    fm = rng.standard_normal((c_m, h, w))
    params = AmcmParams.random(c_a, c_m, rng, scale=0.4)
    r = rng.standard_normal(fa.shape)
    shapes = [fa.shape, fm.shape] + [getattr(params, n).shape for n in _AMCM_PARAM_NAMES]

    def loss(flat):
        parts = _split(flat, shapes)
        p = AmcmParams(**dict(zip(_AMCM_PARAM_NAMES, parts[2:])))
        out, _, _ = amcm_forward(parts[0], parts[1], p)
        return float(np.sum(r * out))

    _, _, cache = amcm_forward(fa, fm, params)
    g = amcm_backward(r, cache)
    analytic = _flatten([g.f_a, g.f_m] + [getattr(g, n) for n in _AMCM_PARAM_NAMES])
    numeric = central_difference(
        loss, _flatten([fa, fm] + [getattr(params, n) for n in _AMCM_PARAM_NAMES]), eps=eps
    )
    return CheckResult("gradients.amcm", relative_error(numeric, analytic), tol, f"seed {seed}")


def _random_labels_and_mask(rng, shape, c):
    labels = rng.integers(0, c, size=shape)
    ignore = rng.random(shape) < 0.2
    if ignore.all():
        ignore.flat[0] = False
    return labels, ignore


def fd_weighted_ce(seed: int, eps: float = 1e-5, tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    c, h, w = 2, 3, 4
    logits = rng.standard_normal((c, h, w))
    labels, ignore = _random_labels_and_mask(rng, (h, w), c)
    stats = ClassStats(np.array([0.7, 0.3]))

    def loss(flat):
        return weighted_ce(flat.reshape(logits.shape), labels, stats, ignore)[0]

    _, grad = weighted_ce(logits, labels, stats, ignore)
    numeric = central_difference(loss, logits.ravel(), eps=eps)
    return CheckResult("gradients.weighted_ce", relative_error(numeric, grad.ravel()), tol, f"seed {seed}")


def fd_lovasz(seed: int, eps: float = 1e-5, tol: float = 1e-4) -> CheckResult:
    from .objective import lovasz_softmax_from_logits

    rng = np.random.default_rng(seed)
    c, h, w = 2, 3, 4
    logits = rng.standard_normal((c, h, w))
    labels, ignore = _random_labels_and_mask(rng, (h, w), c)

    def loss(flat):
        return lovasz_softmax_from_logits(flat.reshape(logits.shape), labels, ignore)[0]

    _, grad = lovasz_softmax_from_logits(logits, labels, ignore)
    numeric = central_difference(loss, logits.ravel(), eps=eps)
    return CheckResult("gradients.lovasz_softmax", relative_error(numeric, grad.ravel()), tol, f"seed {seed}")


def fd_appearance(seed: int, eps: float = 1e-5, tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    cfg = GridConfig(h=4, w=5, rho_max=10.0, window_size=2)
    n = 24
    xyz = np.empty((n, 3))
    rho = rng.uniform(0.5, 9.5, n)
    ang = rng.uniform(-np.pi, np.pi, n)
    xyz[:, 0] = rho * np.cos(ang)
    xyz[:, 1] = rho * np.sin(ang)
    xyz[:, 2] = rng.uniform(-2, 1, n)
    cloud = PointCloud(xyz=xyz)
    part = partition(cloud, cfg)
    desc = descriptors(cloud, part)
    params = MlpParams.random([7, 6, 3], rng)
    r = rng.standard_normal((3, cfg.h, cfg.w))

    def loss(flat):
        feats, _ = encode_descriptors(desc, part, params.with_flat(flat))
        return float(np.sum(r * feats.values))

    _, cache = encode_descriptors(desc, part, params)
    grads, _ = encode_appearance_backward(r, cache)
    analytic = _flatten([g for pair in grads for g in pair])
    numeric = central_difference(loss, params.flatten(), eps=eps)
    return CheckResult("gradients.encode_appearance", relative_error(numeric, analytic), tol, f"seed {seed}")


def gradient_suite(seed: int = 0, seeds: int = 5, inject_fault: Optional[str] = None) -> list[CheckResult]:
    """Aggregate finite-difference checks over several seeds per op.

    ``inject_fault`` perturbs the named op's analytic gradient (test hook
    verifying that the suite actually detects broken backward passes).
    """
    cases = {
        "ring_conv2d": lambda s: fd_ring_conv(s, fault=1.001 if inject_fault == "ring_conv2d" else 1.0),
        "coattention_gate": fd_gate,
        "motion_guided_attention": fd_mga,
        "amcm": fd_amcm,
        "weighted_ce": fd_weighted_ce,
        "lovasz_softmax": fd_lovasz,
        "encode_appearance": fd_appearance,
    }
    results = []
    for name, fn in cases.items():
        worst = None
        for s in range(seed, seed + seeds):
            res = fn(s)
            if worst is None or res.measured > worst.measured:
                worst = res
        results.append(
            CheckResult(worst.name, worst.measured, worst.tolerance, f"worst of {seeds} seeds")
        )
    return results


# ---------------------------------------------------------------------------
# losses / closed forms


def loss_suite(seed: int = 0) -> list[CheckResult]:
    results = []
    rng = np.random.default_rng(seed)

    fa = rng.standard_normal((4, 5, 6))
    fm = rng.standard_normal((4, 5, 6))
    out, aux, _ = amcm_forward(fa, fm, AmcmParams.zeros(4, 4))
    results.append(
        CheckResult("loss.zero_param_amcm", float(np.max(np.abs(out - 0.75 * fa))), 1e-12)
    )
    gate_ok = 0.0 if (0.0 < aux.g_a < 1.0 and 0.0 < aux.g_m < 1.0) else 1.0
    results.append(CheckResult("loss.gate_range", gate_ok, 0.0, f"g_a={aux.g_a}, g_m={aux.g_m}"))
    results.append(
        CheckResult("loss.channel_weight_sum", abs(float(aux.channel_weights.sum()) - 4.0), 1e-12)
    )

    probs = np.array([0.7, 0.3]).reshape(2, 1, 1)
    labels = np.array([[1]])
    ls, _ = lovasz_softmax(probs, labels)
    results.append(CheckResult("loss.lovasz_single_pixel", abs(ls - 0.7), 1e-15))

    logits = np.zeros((2, 1, 1))
    stats = ClassStats(np.array([0.25, 0.75]))
    ce, _ = weighted_ce(logits, np.array([[0]]), stats)
    results.append(CheckResult("loss.weighted_ce_example", abs(ce - 1.386294), 1e-6))

    worst = 0.0
    for s in range(3):
        r2 = np.random.default_rng(seed + 100 + s)
        logits = r2.standard_normal((2, 3, 3))
        labels, ignore = _random_labels_and_mask(r2, (3, 3), 2)

        def loss_fn(flat):
            return total_loss(flat.reshape(logits.shape), labels, stats, ignore)[0]

        _, grad = total_loss(logits, labels, stats, ignore)
        numeric = central_difference(loss_fn, logits.ravel())
        worst = max(worst, relative_error(numeric, grad.ravel()))
    results.append(CheckResult("loss.total_loss_fd", worst, 1e-4))

    pred = np.array([1, 1, 1, 1, 0, 0])
    gt = np.array([1, 1, 1, 0, 0, 0])
    c1 = accumulate(ConfusionCounts(), pred[:3], gt[:3])
    c2 = accumulate(ConfusionCounts(), pred[3:], gt[3:])
    whole = accumulate(ConfusionCounts(), pred, gt)
    additivity = abs(iou(c1.merge(c2)) - iou(whole))
    results.append(CheckResult("loss.iou_additivity", additivity, 0.0))
    results.append(CheckResult("loss.iou_value", abs(iou(whole) - 0.75), 0.0, "TP=3 FP=1 FN=0"))
    results.append(CheckResult("loss.iou_empty_convention", abs(iou(ConfusionCounts()) - 1.0), 0.0))
    return results


SUITES = {
    "geometry": geometry_suite,
    "motion": motion_suite,
    "gradients": gradient_suite,
    "loss": loss_suite,
}


def run_suites(
    names: Sequence[str], seed: int = 0, gradient_seeds: int = 5, inject_fault: Optional[str] = None
) -> list[CheckResult]:
    results = []
    for name in names:
        if name == "gradients":
            results.extend(gradient_suite(seed, seeds=gradient_seeds, inject_fault=inject_fault))
        else:
            results.extend(SUITES[name](seed))
    return results
