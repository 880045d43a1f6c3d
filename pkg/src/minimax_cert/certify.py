"""Stationarity certificates and grid classification of candidate min-max points.

Universal quantifiers over cones and neighbourhoods are replaced by seeded
direction samples and grids; a ``pass`` always means "pass at the recorded
resolution", and the report records the samples that were used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .deriv import (QuotientScheme, central_gradient, clarke_directional, generalized_second,
                    restrict_x, restrict_y, second_subderivative, subderivative)
from .geometry import (TOL_KKT, TOL_ORTH, normal_cone_membership, sample_cone_directions)
from .problems import GridSpec, Point, golden_max, grid_nodes, inner_max

CONDITION_IDS = ("gs2-1", "gs2-2", "gs6-1", "gs6-2", "FKKT", "SKKT",
                 "NonS1st-1", "NonS1st-2", "NonS2ed-1", "NonS2ed-2")
SMOOTH_FIRST = ("gs2-1", "gs2-2", "FKKT")
SMOOTH_SECOND = ("gs6-1", "gs6-2", "SKKT")
NONSMOOTH_FIRST = ("NonS1st-1", "NonS1st-2")
NONSMOOTH_SECOND = ("NonS2ed-1", "NonS2ed-2")

DIRECTION_COUNT = 64
GS6_DELTAS = (1e-1, 1e-2, 1e-3)
GS6_SAMPLES = 16
TOL_QUAD = 1e-8
TOL_DIR = 1e-6
HVP_STEP = 1e-4

DELTA_LADDER = (0.2, 0.1, 0.05, 0.02, 0.01)
TAU_POWERS = (1.0, 1.5, 2.0, 3.0)
TAU_C_GRID = np.logspace(-2, 2, 401)
LOCAL_NODES = 41


# ---------------------------------------------------------------- report types

@dataclass
class ConditionResult:
    """Outcome of one condition: ``pass``, ``fail``, ``not-checkable`` or ``skipped``."""

    status: str
    residual: float | None = None
    witness: list | None = None
    value: float | None = None
    reason: str | None = None
    samples: int | None = None

    def to_json(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class StationarityReport:
    point: Point
    conditions: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    multipliers: dict | None = None
    direction_samples: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for cid in CONDITION_IDS:
            self.conditions.setdefault(cid, ConditionResult("skipped", reason="not requested"))

    def status(self, cid):
        return self.conditions[cid].status

    @property
    def failed(self):
        return any(c.status == "fail" for c in self.conditions.values())

    def passes(self, ids):
        return all(self.conditions[c].status == "pass" for c in ids)

    def to_json(self):
        return {"point": self.point.to_json(),
                "conditions": {k: v.to_json() for k, v in self.conditions.items()},
                "residuals": dict(self.residuals),
                "multipliers": self.multipliers,
                "direction_samples": dict(self.direction_samples),
                "notes": list(self.notes),
                "extra": dict(self.extra)}


@dataclass
class MinimaxClassification:
    labels: list
    tau_fit: tuple | None
    delta0: float
    evidence: dict
    diagnostics: list = field(default_factory=list)

    def to_json(self):
        return {"labels": list(self.labels),
                "tau_fit": None if self.tau_fit is None else list(self.tau_fit),
                "delta0": self.delta0, "evidence": self.evidence,
                "diagnostics": list(self.diagnostics)}


# ---------------------------------------------------------------- oracles

def gradients(problem, x, y, notes=None):
    """Partial gradients, by central differences (h=1e-6) when an oracle is missing."""
    if problem.grad_x is not None:
        gx = np.asarray(problem.grad_x(x, y), dtype=float).reshape(problem.n)
    else:
        gx = central_gradient(restrict_x(problem, y), x)
        if notes is not None:
            notes.append("grad_x by central differences (h=1e-6)")
    if problem.grad_y is not None:
        gy = np.asarray(problem.grad_y(x, y), dtype=float).reshape(problem.m)
    else:
        gy = central_gradient(restrict_y(problem, x), y)
        if notes is not None:
            notes.append("grad_y by central differences (h=1e-6)")
    return gx, gy


def _fd_hessian_of(g, z, h=HVP_STEP):
    n = z.size
    H = np.empty((n, n))
    E = np.eye(n) * h
    for i in range(n):
        for j in range(i, n):
            H[i, j] = H[j, i] = (g(z + E[i] + E[j]) - g(z + E[i] - E[j])
                                 - g(z - E[i] + E[j]) + g(z - E[i] - E[j])) / (4 * h * h)
    return H


def hessian_blocks(problem, x, y, notes=None):
    """``(H_xx, H_yy)`` from oracles, else central differences of gradients (h=1e-4)."""
    out = []
    for side, hess, grad, z in (("x", problem.hess_xx, problem.grad_x, x),
                                ("y", problem.hess_yy, problem.grad_y, y)):
        if hess is not None:
            H = np.atleast_2d(np.asarray(hess(x, y), dtype=float))
        elif grad is not None:
            gz = (lambda w: grad(w, y)) if side == "x" else (lambda w: grad(x, w))
            n = z.size
            H = np.column_stack([(np.asarray(gz(z + HVP_STEP * e)) - np.asarray(gz(z - HVP_STEP * e)))
                                 / (2 * HVP_STEP) for e in np.eye(n)])
            H = 0.5 * (H + H.T)
            if notes is not None:
                notes.append(f"H_{side}{side} by central differences of grad_{side} (h=1e-4)")
        else:
            g = restrict_x(problem, y) if side == "x" else restrict_y(problem, x)
            H = _fd_hessian_of(g, z)
            if notes is not None:
                notes.append(f"H_{side}{side} by second differences of f (h=1e-4)")
        out.append(H)
    return out[0], out[1]


# ---------------------------------------------------------------- smooth conditions

def _unit(v):
    nv = float(np.linalg.norm(v))
    return v / nv if nv > 0 else v


def check_first_order_smooth(problem, point, tol_kkt=TOL_KKT, notes=None):
    """gs2-1: ``-grad_x f in N_X(x)``; gs2-2: ``grad_y f in N_Y(y)``.

    Returns ``(results, info)`` where ``info`` holds the gradients and the
    multipliers recovered by the normal-cone fits.
    """
    gx, gy = gradients(problem, point.x, point.y, notes)
    rx = normal_cone_membership(problem.X, point.x, -gx, tol_kkt=tol_kkt)
    ry = normal_cone_membership(problem.Y, point.y, gy, tol_kkt=tol_kkt)
    results = {}
    for cid, r, grad in (("gs2-1", rx, gx), ("gs2-2", ry, gy)):
        if not r.converged:
            results[cid] = ConditionResult("not-checkable", residual=r.residual,
                                           reason="multiplier fit did not converge")
        elif r.member:
            results[cid] = ConditionResult("pass", residual=r.residual)
        else:
            # the unexplained part of the gradient is a tangent direction that
            # improves the objective for that player
            w = _unit(r.residual_vector)
            results[cid] = ConditionResult("fail", residual=r.residual, witness=w.tolist(),
                                           value=float(grad @ w))
    return results, {"grad_x": gx, "grad_y": gy, "fit_x": rx, "fit_y": ry}


@dataclass
class KKTResult:
    alpha: np.ndarray
    beta: np.ndarray
    residual: float
    accepted: bool
    converged: bool


def recover_kkt(problem, point, tol_kkt=TOL_KKT):
    """Multipliers ``alpha, beta >= 0`` (zero on inactive rows) of the first-order KKT system.

    The residual is ``||grad_x f + A^T alpha|| + ||-grad_y f + C^T beta||``
    with outward rows ``A`` of X and ``C`` of Y.
    """
    gx, gy = gradients(problem, point.x, point.y)
    rx = normal_cone_membership(problem.X, point.x, -gx, tol_kkt=tol_kkt)
    ry = normal_cone_membership(problem.Y, point.y, gy, tol_kkt=tol_kkt)
    return KKTResult(rx.multipliers, ry.multipliers, rx.residual + ry.residual,
                     rx.member and ry.member, rx.converged and ry.converged)


def _ball_samples(pset, center, radius, count, rng):
    n = center.size
    g = rng.standard_normal((count, n))
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    g *= radius * rng.uniform(0.0, 1.0, (count, 1)) ** (1.0 / n)
    return np.array([pset.project(center + d) for d in g])


def gs6_directions(problem, point, delta_list=GS6_DELTAS, samples=GS6_SAMPLES,
                   count=DIRECTION_COUNT, seed=0, notes=None):
    """Sampled members of the gs6-1 direction set.

    A direction survives level ``delta`` when it lies in the tangent cone of
    X and is orthogonal to ``grad_x f(x, y')`` for ``y' = y`` and ``samples``
    seeded points ``y'`` of the ``delta``-ball meet Y.  The union over levels
    is returned with the per-level counts.
    """
    rng = np.random.default_rng(seed)
    out, counts = [], []
    for k, delta in enumerate(delta_list):
        ys = np.vstack([point.y[None, :], _ball_samples(problem.Y, point.y, delta, samples, rng)])
        G = np.array([gradients(problem, point.x, yp, notes)[0] for yp in ys])
        V = sample_cone_directions(problem.X, point.x, count, seed=seed + k, mode="gamma", grad=G)
        counts.append(len(V))
        out.append(V)
    V = np.vstack(out) if out else np.zeros((0, problem.n))
    return V, counts


def _quad_check(H, V, sign, tol):
    """Test ``sign * v^T H v >= -tol`` on every row of ``V``."""
    if len(V) == 0:
        return ConditionResult("pass", residual=0.0, samples=0,
                               reason="direction set is {0} at the sampled resolution")
    q = np.einsum("ki,ij,kj->k", V, H, V)
    viol = -sign * q
    worst = int(np.argmax(viol))
    resid = float(max(viol[worst], 0.0))
    if viol[worst] > tol:
        return ConditionResult("fail", residual=resid, witness=V[worst].tolist(),
                               value=float(q[worst]), samples=len(V))
    return ConditionResult("pass", residual=resid, samples=len(V))


def check_second_order_smooth(problem, point, delta_list=GS6_DELTAS, samples=GS6_SAMPLES,
                              count=DIRECTION_COUNT, seed=0, notes=None):
    """gs6-1 / gs6-2 quadratic-form tests on sampled Gamma directions.

    Returns ``(results, info)``; ``info`` carries the Hessian blocks and the
    direction sets.
    """
    Hxx, Hyy = hessian_blocks(problem, point.x, point.y, notes)
    V, counts = gs6_directions(problem, point, delta_list, samples, count, seed, notes)
    gy = gradients(problem, point.x, point.y)[1]
    W = sample_cone_directions(problem.Y, point.y, count, seed=seed + 101, mode="gamma", grad=gy)
    r1 = _quad_check(Hxx, V, 1.0, TOL_QUAD * (1.0 + float(np.linalg.norm(Hxx))))
    r2 = _quad_check(Hyy, W, -1.0, TOL_QUAD * (1.0 + float(np.linalg.norm(Hyy))))
    return ({"gs6-1": r1, "gs6-2": r2},
            {"H_xx": Hxx, "H_yy": Hyy, "V": V, "W": W, "gamma1_counts": counts})


# ---------------------------------------------------------------- nonsmooth conditions

def _unique_rows(V):
    if len(V) == 0:
        return V, np.zeros(0, dtype=int)
    U, inverse = np.unique(np.round(V, 12), axis=0, return_inverse=True)
    return U, np.asarray(inverse).reshape(-1)


def _estimate_cond(estimates, directions, sign, tol, what):
    """Turn directional estimates into a condition: ``sign * value >= -tol`` must hold."""
    if len(directions) == 0:
        return ConditionResult("pass", residual=0.0, samples=0,
                               reason="direction set is empty at the sampled resolution")
    worst_fail, worst_val, unchecked = None, -math.inf, 0
    for v, est in zip(directions, estimates):
        if not est.converged:
            unchecked += 1
            continue
        viol = -sign * est.value
        if viol > worst_val:
            worst_val, worst_fail = viol, (v, est.value)
    if worst_fail is not None and worst_val > tol:
        return ConditionResult("fail", residual=float(worst_val), witness=worst_fail[0].tolist(),
                               value=float(worst_fail[1]), samples=len(directions))
    if unchecked:
        return ConditionResult("not-checkable", samples=len(directions),
                               residual=float(max(worst_val, 0.0)) if worst_fail else None,
                               reason=f"{unchecked} {what} estimates did not converge")
    return ConditionResult("pass", residual=float(max(worst_val, 0.0)), samples=len(directions))


def check_d_stationarity(problem, point, scheme=QuotientScheme(), order=2,
                         count=DIRECTION_COUNT, seed=0, delta_list=GS6_DELTAS,
                         samples=GS6_SAMPLES, tol_dir=TOL_DIR, tol_orth=TOL_ORTH):
    """First- (and second-) order d-stationarity from directional estimates.

    NonS1st-1: Clarke derivative of ``f(., y)`` is ``>= 0`` on tangent
    directions of X.  NonS1st-2: subderivative of ``f(x, .)`` is ``<= 0`` on
    tangent directions of Y.  NonS2ed-1: ``f_x°°(x; v, v) >= 0`` on tangent
    directions with ``d_x f(x, y')(v) = 0`` for all sampled ``y'`` of some
    ``delta``-ball.  NonS2ed-2: ``d²_y f <= 0`` on tangent directions with
    ``d_y f(x, y)(w) = 0``.

    Returns ``(results, info)``.
    """
    x, y = point.x, point.y
    gx_fun, gy_fun = restrict_x(problem, y), restrict_y(problem, x)
    V = sample_cone_directions(problem.X, x, count, seed=seed, mode="tangent")
    W = sample_cone_directions(problem.Y, y, count, seed=seed + 1, mode="tangent")
    Vu, vinv = _unique_rows(V)
    Wu, winv = _unique_rows(W)

    clarke = [clarke_directional(gx_fun, x, v, scheme) for v in Vu]
    sub_y = [subderivative(gy_fun, y, w, scheme) for w in Wu]
    results = {
        "NonS1st-1": _estimate_cond([clarke[i] for i in vinv], V, 1.0, tol_dir, "Clarke"),
        "NonS1st-2": _estimate_cond([sub_y[i] for i in winv], W, -1.0, tol_dir, "subderivative"),
    }
    info = {"V": V, "W": W, "clarke": clarke, "sub_y": sub_y, "Vu": Vu, "Wu": Wu}
    if order < 2:
        return results, info

    rng = np.random.default_rng(seed + 7)
    keep = np.zeros(len(Vu), dtype=bool)
    for delta in delta_list:
        ys = np.vstack([y[None, :], _ball_samples(problem.Y, y, delta, samples, rng)])
        for i, v in enumerate(Vu):
            if keep[i]:
                continue
            ok = True
            for yp in ys:
                est = subderivative(restrict_x(problem, yp), x, v, scheme)
                if not (est.converged and abs(est.value) <= tol_orth * (1.0 + abs(est.value))):
                    ok = False
                    break
            keep[i] = ok
    V2 = Vu[keep]
    gss = [generalized_second(gx_fun, x, v, v, scheme) for v in V2]
    results["NonS2ed-1"] = _estimate_cond(gss, V2, 1.0, tol_dir, "generalized second-order")

    wkeep = np.array([e.converged and abs(e.value) <= tol_orth for e in sub_y], dtype=bool)
    W2 = Wu[wkeep] if len(Wu) else Wu
    d2 = [second_subderivative(gy_fun, y, w, scheme) for w in W2]
    results["NonS2ed-2"] = _estimate_cond(d2, W2, -1.0, tol_dir, "second subderivative")
    info.update({"V2": V2, "W2": W2, "gss": gss, "d2_y": d2})
    return results, info


# ---------------------------------------------------------------- full report

def verify_point(problem, point, order=2, smooth=None, nonsmooth=None,
                 scheme=QuotientScheme(), seed=0, count=DIRECTION_COUNT,
                 delta_list=GS6_DELTAS, samples=GS6_SAMPLES, tol_kkt=TOL_KKT):
    """Run the requested stationarity conditions and assemble a report.

    ``smooth`` selects gs2/FKKT (and gs6/SKKT for ``order=2``); ``nonsmooth``
    selects the d-stationarity conditions.  By default the problem's
    smoothness tag decides.
    """
    problem.check_point(point)
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if smooth is None:
        smooth = problem.is_smooth
    if nonsmooth is None:
        nonsmooth = not problem.is_smooth
    rep = StationarityReport(point)
    rep.direction_samples = {"seed": seed, "count": count, "gs6_deltas": list(delta_list),
                             "gs6_samples_per_delta": samples}
    skipped_reason = f"order {order} requested"
    if smooth:
        res, info = check_first_order_smooth(problem, point, tol_kkt, notes=rep.notes)
        rep.conditions.update(res)
        kkt = recover_kkt(problem, point, tol_kkt)
        if not kkt.converged:
            rep.conditions["FKKT"] = ConditionResult("not-checkable", residual=kkt.residual,
                                                     reason="multiplier fit did not converge")
        elif kkt.accepted:
            rep.conditions["FKKT"] = ConditionResult("pass", residual=kkt.residual)
        else:
            bad = res["gs2-1"] if res["gs2-1"].status == "fail" else res["gs2-2"]
            rep.conditions["FKKT"] = ConditionResult("fail", residual=kkt.residual,
                                                     witness=bad.witness, value=bad.value)
        rep.multipliers = {"alpha": kkt.alpha.tolist(), "beta": kkt.beta.tolist()}
        rep.residuals.update({"gs2-1": res["gs2-1"].residual, "gs2-2": res["gs2-2"].residual,
                              "FKKT": kkt.residual})
        if order == 2:
            res2, info2 = check_second_order_smooth(problem, point, delta_list, samples,
                                                    count, seed, rep.notes)
            rep.conditions.update(res2)
            first = rep.conditions["FKKT"].status
            second = [res2["gs6-1"].status, res2["gs6-2"].status]
            if first == "pass" and all(s == "pass" for s in second):
                skkt = ConditionResult("pass", residual=0.0)
            elif first == "fail" or "fail" in second:
                src = rep.conditions["FKKT"] if first == "fail" else \
                    (res2["gs6-1"] if second[0] == "fail" else res2["gs6-2"])
                skkt = ConditionResult("fail", residual=src.residual, witness=src.witness,
                                       value=src.value)
            else:
                skkt = ConditionResult("not-checkable", reason="a component was not checkable")
            rep.conditions["SKKT"] = skkt
            rep.residuals.update({"gs6-1": res2["gs6-1"].residual,
                                  "gs6-2": res2["gs6-2"].residual})
            rep.direction_samples.update({"gamma1": int(len(info2["V"])),
                                          "gamma1_per_delta": info2["gamma1_counts"],
                                          "gamma2": int(len(info2["W"]))})
            rep.notes.append("gs6-1 closure approximated by sampled memberships; "
                             "boundary directions of the closure may be missed")
        else:
            for cid in SMOOTH_SECOND:
                rep.conditions[cid] = ConditionResult("skipped", reason=skipped_reason)
    else:
        for cid in SMOOTH_FIRST + SMOOTH_SECOND:
            rep.conditions[cid] = ConditionResult(
                "skipped", reason=f"smoothness tag {problem.smoothness}")
    if nonsmooth:
        res, info = check_d_stationarity(problem, point, scheme, order, count, seed,
                                         delta_list, samples)
        rep.conditions.update(res)
        for cid, r in res.items():
            rep.residuals[cid] = r.residual
        rep.direction_samples.update({"tangent_x": int(len(info["V"])),
                                      "tangent_y": int(len(info["W"]))})
        if order == 2:
            rep.direction_samples.update({"nons2ed_x": int(len(info["V2"])),
                                          "nons2ed_y": int(len(info["W2"]))})
        else:
            for cid in NONSMOOTH_SECOND:
                rep.conditions[cid] = ConditionResult("skipped", reason=skipped_reason)
        rep.extra["scheme"] = scheme.to_json()
        rep.notes.append("directional limits certified only on the sampled quotient cloud")
    else:
        for cid in NONSMOOTH_FIRST + NONSMOOTH_SECOND:
            rep.conditions[cid] = ConditionResult("skipped", reason="d-stationarity not requested")
    return rep


def first_order_stationary(report):
    if report.status("gs2-1") != "skipped":
        return report.passes(("gs2-1", "gs2-2"))
    return report.passes(NONSMOOTH_FIRST)


def second_order_stationary(report):
    if report.status("gs6-1") != "skipped":
        return report.passes(("gs2-1", "gs2-2", "gs6-1", "gs6-2"))
    return report.passes(NONSMOOTH_FIRST + NONSMOOTH_SECOND)


def stationarity_scan(problem, nodes=201, tol_kkt=TOL_KKT):
    """All nodes of a product grid on X x Y that pass gs2-1 and gs2-2."""
    spec = GridSpec(nodes=nodes)
    xs = grid_nodes(problem.X, spec)
    ys = grid_nodes(problem.Y, spec)
    hits = []
    for x in xs:
        for y in ys:
            res, _ = check_first_order_smooth(problem, Point(x, y), tol_kkt)
            if res["gs2-1"].status == "pass" and res["gs2-2"].status == "pass":
                hits.append(np.concatenate([x, y]))
    return np.array(hits).reshape(-1, problem.n + problem.m)


# ---------------------------------------------------------------- grid classification

def _outer_min(problem, y, grid, center=None, radius=None, include=None):
    """Grid-plus-refinement minimum of ``f(., y)`` over X (or X meet a ball)."""
    flipped = _Flipped(problem, y)
    val, x = inner_max(flipped, y, grid, center, radius, include)
    return -val, x


class _Flipped:
    """View of ``-f(., y)`` as an inner-maximization problem over X."""

    def __init__(self, problem, y):
        self.problem, self.y0 = problem, np.asarray(y, dtype=float)
        self.Y, self.m = problem.X, problem.n

    def eval(self, _, x):
        return -self.problem.eval(x, self.y0)

    def eval_batch(self, _, xs):
        return -self.problem.eval_batch(xs, self.y0[None, :]).T


def _radial_nodes(pset, center, radius, dim, seed=0):
    """Nodes of ``pset`` meet the ball, dense near the centre (geometric radii)."""
    radii = np.union1d(np.linspace(0.0, radius, 401), np.geomspace(1e-7 * radius, radius, 2001))
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(seed)
        d = rng.standard_normal((32 * dim, dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        if dim == 2:
            ang = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
            d = np.column_stack([np.cos(ang), np.sin(ang)])
        d = np.vstack([np.eye(dim), -np.eye(dim), d])
        radii = np.union1d(np.linspace(0.0, radius, 41), np.geomspace(1e-7 * radius, radius, 120))
    pts = center[None, None, :] + radii[None, :, None] * dirs[:, None, :]
    pts = pts.reshape(-1, dim)
    dist = np.linalg.norm(pts - center, axis=1)
    keep = np.array([pset.contains(p, 1e-12) for p in pts]) if pset.kind != "box" else \
        np.all((pts >= pset.lower - 1e-12) & (pts <= pset.upper + 1e-12), axis=1)
    pts, dist = pts[keep], dist[keep]
    order = np.argsort(dist, kind="stable")
    return pts[order], dist[order]


def required_tau(problem, point, delta, threshold, nodes=LOCAL_NODES):
    """Smallest radius ``r`` (on a radial grid) such that every grid ``x`` in the
    ``delta``-ball of ``x_hat`` reaches ``max_{|y - y_hat| <= r} f(x, y) >= threshold``.

    Returns ``inf`` when some ``x`` cannot reach the threshold anywhere in Y.
    """
    x0, y0 = point.x, point.y
    xs = grid_nodes(problem.X, GridSpec(nodes=nodes), x0, delta, include=x0)
    lo, hi = problem.Y.bounding_box()
    ys, dist = _radial_nodes(problem.Y, y0, float(np.linalg.norm(hi - lo)), problem.m)
    F = problem.eval_batch(xs, ys)
    reach = np.maximum.accumulate(F, axis=1) >= threshold
    worst = 0.0
    for row in reach:
        if not row.any():
            return math.inf
        worst = max(worst, float(dist[int(np.argmax(row))]))
    return worst


@dataclass
class TauFit:
    c: float | None
    p: float | None
    slope: float | None
    levels_used: int
    success: bool


def fit_tau(deltas, taus, powers=TAU_POWERS, c_grid=TAU_C_GRID):
    """Fit ``tau(delta) = c * delta**p`` to required radii, finest levels first.

    Uses the longest run of finest levels for which a family member works:
    all-zero requirements fit trivially; otherwise ``p`` is the family member
    nearest the log-log slope (which must be >= 0.5 so that tau vanishes)
    and ``c`` the smallest grid value dominating every level.
    """
    deltas = np.asarray(deltas, dtype=float)
    taus = np.asarray(taus, dtype=float)
    for k in range(len(deltas), 0, -1):
        d, t = deltas[-k:], taus[-k:]
        if not np.all(np.isfinite(t)):
            continue
        if np.all(t <= 0):
            return TauFit(float(c_grid[0]), float(max(powers)), None, k, True)
        pos = t > 0
        if k < 2 or pos.sum() < 2:
            continue
        slope = float(np.polyfit(np.log(d[pos]), np.log(t[pos]), 1)[0])
        if slope < 0.5:
            continue
        p = float(min(powers, key=lambda q: abs(q - slope)))
        need = float(np.max(t / d ** p))
        ok = c_grid[c_grid >= need * (1 - 1e-12)]
        if ok.size == 0:
            continue
        return TauFit(float(ok[0]), p, slope, k, True)
    return TauFit(None, None, None, 0, False)


def local_minimax_margins(problem, point, tau, deltas, nodes=LOCAL_NODES, grid=GridSpec()):
    """Worst margin of ``max_{|y - y_hat| <= tau(delta)} f(x, y) - f(x_hat, y_hat)``
    over grid ``x`` in each ``delta``-ball (ball maxima by grid plus golden refinement).

    Nonnegative (up to slack) margins mean the candidate ``tau`` satisfies
    the outer inequality of the local-minimax definition at every level.
    """
    x0, y0 = point.x, point.y
    f0 = problem.eval(x0, y0)
    ball_grid = GridSpec(nodes=max(grid.nodes, 401), refine_width=grid.refine_width)
    out = []
    for delta in deltas:
        r = float(tau(delta))
        xs = grid_nodes(problem.X, GridSpec(nodes=nodes), x0, delta, include=x0)
        worst = math.inf
        for x in xs:
            if r > 0:
                val, _ = inner_max(problem, x, ball_grid, y0, r, include=y0)
            else:
                val = problem.eval(x, y0)
            worst = min(worst, val - f0)
        out.append(worst)
    return out


def _phi_lower(problem, xs, ys, chunk=2048):
    vals = np.empty(len(xs))
    for s in range(0, len(xs), chunk):
        vals[s:s + chunk] = problem.eval_batch(xs[s:s + chunk], ys).max(axis=1)
    return vals


def _search_grid(problem, grid):
    per = int((4e7) ** (1.0 / (problem.n + problem.m)))
    return GridSpec(nodes=min(grid.nodes, max(per, 11)), refine_width=grid.refine_width,
                    max_points=grid.max_points)


def _probe_points(problem, x0, deltas):
    pts = []
    for d in deltas:
        for i in range(problem.n):
            for s in (1.0, -1.0):
                x = x0.copy()
                x[i] += s * d
                if problem.X.contains(x):
                    pts.append((d, x))
    return pts


def _inner_maximizers(problem, x, ys, tol_tie):
    """Grid-local maxima of ``f(x, .)`` within ``tol_tie`` of the best value."""
    vals = problem.eval_batch(x[None, :], ys)[0]
    best = vals.max()
    idx = np.flatnonzero(vals >= best - tol_tie)
    if len(idx) == 0:
        return ys[[int(np.argmax(vals))]], vals.max()
    spacing = np.min(np.ptp(ys, axis=0) / max(len(ys) ** (1.0 / problem.m) - 1, 1))
    clusters = []
    for i in idx[np.argsort(-vals[idx], kind="stable")]:
        if all(np.linalg.norm(ys[i] - ys[j]) > 3 * spacing for j in clusters):
            clusters.append(i)
    return ys[clusters], best


def classify_point(problem, point, ladder=DELTA_LADDER, grid=GridSpec(), nodes=LOCAL_NODES,
                   scheme=QuotientScheme(), seed=0, stationarity=True):
    """Grid classification of a candidate point against the saddle / minimax definitions.

    Global tests use the full grids (``grid``), local tests the ``delta``
    ladder (fractions of the set diameters) with ``nodes`` per coordinate
    in each ball.  All inequalities carry the slack ``1e-9 (1 + |f(x, y)|)``.
    """
    problem.check_point(point)
    if problem.n > 2 or problem.m > 2:
        raise ValueError("grid classification supports n, m <= 2")
    x0, y0 = point.x, point.y
    f0 = problem.eval(x0, y0)
    tol = 1e-9 * (1.0 + abs(f0))
    ev = {"f_value": f0, "tol_class": tol}
    diags = []

    inner_val, inner_arg = inner_max(problem, x0, grid, include=y0)
    y_global = inner_val <= f0 + tol
    sgrid = _search_grid(problem, grid)
    xs = grid_nodes(problem.X, sgrid, include=x0)
    ys = grid_nodes(problem.Y, sgrid, include=y0)
    phi = _phi_lower(problem, xs, ys)
    # grid values underestimate phi; refine only where the test would fail
    for i in np.flatnonzero(phi < f0 - tol):
        phi[i] = inner_max(problem, xs[i], grid, include=y0)[0]
    i_min = int(np.argmin(phi))
    x_global = bool(phi[i_min] >= f0 - tol)
    min_val, _ = _outer_min(problem, y0, grid, include=x0)
    saddle = bool(y_global and min_val >= f0 - tol)
    global_minimax = bool(y_global and x_global)
    ev["global"] = {"inner_max": inner_val, "inner_argmax": inner_arg.tolist(),
                    "phi_min": float(phi[i_min]), "phi_argmin": xs[i_min].tolist(),
                    "outer_min_at_y": min_val, "x_grid_nodes": int(len(xs))}

    lo_x, hi_x = problem.X.bounding_box()
    lo_y, hi_y = problem.Y.bounding_box()
    dx = [r * float(np.linalg.norm(hi_x - lo_x)) for r in ladder]
    dy = [r * float(np.linalg.norm(hi_y - lo_y)) for r in ladder]
    local_grid = GridSpec(nodes=nodes, refine_width=grid.refine_width)
    delta0 = dy[-1]
    local_max_y = inner_max(problem, x0, local_grid, y0, delta0, include=y0)[0] <= f0 + tol

    saddle_levels, violations = [], []
    for ddx, ddy in zip(dx, dy):
        up = inner_max(problem, x0, local_grid, y0, ddy, include=y0)[0]
        down = _outer_min(problem, y0, local_grid, x0, ddx, include=x0)[0]
        violations.append(max(up - f0, f0 - down))
        saddle_levels.append(bool(violations[-1] <= tol))
    local_saddle = any(saddle_levels)
    # a coarse level that fails, with finer ones passing only inside the slack,
    # is a violation shrinking below resolution rather than a saddle neighbourhood
    noise = 4 * np.finfo(float).eps * abs(f0)
    if local_saddle and not all(saddle_levels) \
            and not any(v <= noise for v in violations):
        local_saddle = False
        diags.append("local saddle inequalities hold only within the slack on the finer "
                     "levels while a coarser level fails; not declared")
    if saddle and not local_saddle:
        saddle = False
        diags.append("global saddle inequalities failed on the finer local grids")

    taus = [required_tau(problem, point, d, f0 - tol, nodes) for d in dx]
    fit = fit_tau(dx, taus)
    local_minimax = bool(local_max_y and fit.success)
    for a, b in zip(taus, taus[1:]):
        if np.isfinite(a) and b > a * (1 + 1e-2) + 1e-12:
            diags.append("required tau grows as delta shrinks; maximizer motion exceeds the grid")
            break
    ev["local"] = {"deltas_x": dx, "deltas_y": dy, "local_max_y": bool(local_max_y),
                   "saddle_levels": saddle_levels, "saddle_violation": violations,
                   "tau_required": taus,
                   "tau_slope": fit.slope, "tau_levels_used": fit.levels_used}

    # inner maximizers near x_hat: do they approach y_hat (outer-limit
    # hypothesis), and are they unique?
    tol_tie = 1e-6 * (1.0 + abs(f0))
    probes = _probe_points(problem, x0, dx)
    dists, unique = [], True
    for d, x in probes:
        arg, _ = _inner_maximizers(problem, x, ys, tol_tie)
        unique &= len(arg) == 1
        dists.append((d, float(np.min(np.linalg.norm(arg - y0, axis=1)))))
    finest = [v for d, v in dists if d == min(dx)] or [0.0]
    argmax_converges = bool(max(finest) <= 0.1 * float(np.linalg.norm(hi_y - lo_y)))
    ev["inner_argmax"] = {"probe_distances": dists, "converges_to_y": argmax_converges,
                          "unique": bool(unique)}
    if not argmax_converges:
        diags.append("inner argmax does not approach y as x -> x_hat (outer-limit hypothesis fails)")

    labels = set()
    if saddle:
        labels.add("saddle")
    if local_saddle:
        labels.add("local-saddle")
    if global_minimax:
        labels.add("global-minimax")
    if local_minimax:
        labels.add("local-minimax")

    if stationarity:
        rep = verify_point(problem, point, order=2, scheme=scheme, seed=seed)
        first = first_order_stationary(rep)
        second = first and second_order_stationary(rep)
        if first:
            labels.add("first-order-stationary")
        if second:
            labels.add("second-order-stationary")
        ev["stationarity"] = {cid: c.status for cid, c in rep.conditions.items()}
        checkable = all(rep.status(c) in ("pass", "fail") for c in
                        (("gs2-1", "gs2-2") if problem.is_smooth else NONSMOOTH_FIRST))
        if "local-minimax" in labels and checkable and not first:
            labels -= {"local-minimax", "local-saddle", "saddle"}
            diags.append("local-minimax grid check passed but a necessary first-order "
                         "condition failed; resolution insufficient")

    if not labels:
        labels.add("none")
    tau_fit = (fit.c, fit.p) if fit.success else None
    return MinimaxClassification(sorted(labels), tau_fit, float(delta0), ev, diags)


def search_global_minimax(problem, grid=GridSpec()):
    """Global minimax candidates: grid argmin of the envelope, then all tied inner maximizers."""
    if problem.n > 2 or problem.m > 2:
        raise ValueError("grid search supports n, m <= 2")
    sgrid = _search_grid(problem, grid)
    xs = grid_nodes(problem.X, sgrid)
    ys = grid_nodes(problem.Y, sgrid)
    phi = _phi_lower(problem, xs, ys)
    order = np.argsort(phi, kind="stable")[:5]
    refined = [(inner_max(problem, xs[i], grid)[0], i) for i in order]
    _, i_best = min(refined)
    x = xs[i_best].copy()
    lo, hi = problem.X.bounding_box()
    step = (hi - lo) / max(sgrid.nodes_for(problem.n) - 1, 1)
    best = inner_max(problem, x, grid)[0]
    for k in range(problem.n):
        a, b = max(lo[k], x[k] - step[k]), min(hi[k], x[k] + step[k])

        def neg_phi(s, k=k):
            z = x.copy()
            z[k] = s
            return -inner_max(problem, z, grid)[0] if problem.X.contains(z) else -math.inf

        s, v = golden_max(neg_phi, a, b, 1e-9)
        if -v < best:
            x[k], best = s, -v
    tol_tie = 1e-6 * (1.0 + abs(best))
    fine_ys = grid_nodes(problem.Y, grid)
    cands, _ = _inner_maximizers(problem, x, fine_ys, tol_tie)
    lo_y, hi_y = problem.Y.bounding_box()
    ystep = (hi_y - lo_y) / max(grid.nodes_for(problem.m) - 1, 1)
    radius = float(np.linalg.norm(ystep)) * 2
    kept = []
    for y in cands:
        yr = y
        for _ in range(100):
            # climb ball by ball to the local maximizer
            val, y_next = inner_max(problem, x, grid, yr, radius, include=yr)
            moved = np.linalg.norm(y_next - yr)
            yr = y_next
            if moved <= 0.5 * radius:
                break
        if val < best - tol_tie:
            continue
        # flat maxima tie over many nodes; refinement pulls them together
        near = [k for k, (_, yk) in enumerate(kept) if np.linalg.norm(yk - yr) <= 1.5 * radius]
        if not near:
            kept.append((val, yr))
        elif val > kept[near[0]][0]:
            kept[near[0]] = (val, yr)
    return [Point(x.copy(), yr) for _, yr in kept]


def maxmin_gap(problem, delta, center=None, nodes=401):
    """``max_y min_x f - min_x max_y f`` over ``delta``-boxes (grid values).

    The boxes are centred at ``center = (x_c, y_c)`` (default: centre of the
    bounding boxes) and clipped to X and Y.
    """
    if problem.n > 2 or problem.m > 2:
        raise ValueError("grid max-min gap supports n, m <= 2")
    if center is None:
        cx = np.mean(problem.X.bounding_box(), axis=0)
        cy = np.mean(problem.Y.bounding_box(), axis=0)
    else:
        cx, cy = np.asarray(center.x, dtype=float), np.asarray(center.y, dtype=float)
    spec = GridSpec(nodes=nodes)

    def box_nodes(pset, c):
        lo, hi = pset.bounding_box()
        a, b = np.maximum(lo, c - delta), np.minimum(hi, c + delta)
        k = spec.nodes_for(pset.dim)
        axes = [np.linspace(p, q, k) for p, q in zip(a, b)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, pset.dim)
        return mesh[[pset.contains(z, 1e-12) for z in mesh]]

    F = problem.eval_batch(box_nodes(problem.X, cx), box_nodes(problem.Y, cy))
    maxmin = float(F.min(axis=0).max())
    minmax = float(F.max(axis=1).min())
    return maxmin - minmax
