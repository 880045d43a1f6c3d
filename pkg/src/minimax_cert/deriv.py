"""Difference-quotient estimators for first- and second-order directional quantities.

Every estimator evaluates its quotient on a geometric ladder of step sizes and
on a seeded cloud of perturbed directions (or base points).  Each cloud member
gives one quotient sequence, which is extrapolated to ``t = 0`` with the
Lagrange polynomial through the used levels.  The liminf/limsup of the
definition is then the min/max over the cloud.

The cloud shrinks together with ``t``: at level ``t`` a member is displaced by
``radius * (t / t0) * ||v||``, so every member describes a sequence that
approaches the limit point, as the definitions require.  Member 0 always has
zero displacement, which makes the plain directional derivative a member of
every cloud; the orderings ``g° >= g'`` and ``g°° >= g⁽²⁾`` hold by
construction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

MODES = ("liminf", "limsup", "limit")


@dataclass(frozen=True)
class QuotientScheme:
    """Step ladders, cloud sizes and tolerances of the quotient estimators.

    Parameters
    ----------
    t_sequence : tuple of float
        First-order step ladder, strictly decreasing.
    t2_sequence : tuple of float
        Step ladder for second-order quotients.  These divide by ``t**2`` so
        they stop earlier to keep rounding error small.  Levels are
        evaluated coarse to fine and the first window of
        ``extrapolation_levels`` consecutive levels that converges is
        reported; near a kink the coarse windows straddle it and the finer
        ones take over.
    perturbation_radius : float
        Relative radius of the direction cloud at the coarsest level.
    perturbation_count : int
        Number of random cloud members (member 0 and the two members along
        ``±v`` are added on top).
    base_point_radius : float
        Absolute radius of the base-point cloud at the coarsest level, per
        unit direction length.
    mode : str
        ``liminf``, ``limsup`` or ``limit``; set by the estimators.
    extrapolation_levels : int
        Number of finest first-order levels used for extrapolation, and the
        window length for second-order levels.
    tol_conv_second : float
        Relative agreement required of a second-order window, on top of the
        rounding allowance ``64 eps (1 + |g(x)|) / t**2`` at its finest step.
        Tighter than ``tol_conv`` so that a window still straddling a kink
        is not mistaken for a converged one.
    """

    t_sequence: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    t2_sequence: tuple = tuple(10.0 ** (-k / 2) for k in range(4, 11))
    perturbation_radius: float = 1e-3
    perturbation_count: int = 32
    base_point_radius: float = 2e-2
    mode: str = "limit"
    seed: int = 0
    cap: float = 1e12
    tol_conv: float = 1e-4
    extrapolation_levels: int = 3
    tol_conv_second: float = 1e-6

    def __post_init__(self):
        for name in ("t_sequence", "t2_sequence"):
            ts = tuple(float(t) for t in getattr(self, name))
            if len(ts) < 2 or any(t <= 0 for t in ts) or any(a <= b for a, b in zip(ts, ts[1:])):
                raise ValueError(f"{name} must be strictly decreasing positive (length >= 2)")
            object.__setattr__(self, name, ts)
        if self.perturbation_count < 1:
            raise ValueError("perturbation_count must be >= 1")
        if self.perturbation_radius < 0 or self.base_point_radius < 0:
            raise ValueError("cloud radii must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 2 <= self.extrapolation_levels <= len(self.t_sequence):
            raise ValueError("extrapolation_levels must lie in [2, len(t_sequence)]")

    def with_mode(self, mode):
        return replace(self, mode=mode)

    def to_json(self):
        out = asdict(self)
        out["t_sequence"] = list(self.t_sequence)
        out["t2_sequence"] = list(self.t2_sequence)
        return out

    @classmethod
    def from_json(cls, obj):
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown scheme fields {sorted(unknown)}")
        return cls(**obj)


@dataclass
class DerivativeEstimate:
    """Result of one estimator call.

    ``levels`` holds the cloud-reduced raw quotient at each step of the
    ladder, coarsest first.  ``converged`` means that extrapolations with and
    without the coarsest used level agree to ``tol_conv * (1 + |value|)``.
    A quotient growing like a negative power of ``t`` is reported as
    ``diverged`` with ``value = ±cap``.
    """

    value: float
    spread: float
    scheme: QuotientScheme
    converged: bool
    diverged: bool = False
    levels: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    def to_json(self):
        return {"value": self.value, "spread": self.spread, "converged": self.converged,
                "diverged": self.diverged, "levels": list(self.levels),
                "steps": list(self.steps), "mode": self.scheme.mode}


def lagrange_weights_at_zero(ts):
    """Weights ``w`` with ``p(0) = sum(w * p(ts))`` for the interpolating polynomial."""
    ts = np.asarray(ts, dtype=float)
    w = np.ones(ts.size)
    for i in range(ts.size):
        for j in range(ts.size):
            if j != i:
                w[i] *= ts[j] / (ts[j] - ts[i])
    return w


def _unit_ball_cloud(n, count, seed, axis=None):
    """Member 0 is the origin; then ``±axis`` (if given); then seeded draws in the unit ball."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, n))
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    g *= rng.uniform(0.0, 1.0, (count, 1)) ** (1.0 / n)
    rows = [np.zeros(n)]
    if axis is not None and np.linalg.norm(axis) > 0:
        a = axis / np.linalg.norm(axis)
        rows += [a, -a]
    return np.vstack([np.array(rows), g])


def _reduce(mode):
    return {"liminf": np.min, "limsup": np.max, "limit": np.min}[mode]


def _diverging(levels, ts):
    # growth close to the step ratio over the last two refinements
    a = np.abs(np.asarray(levels[-3:], dtype=float))
    if a.size < 3 or a[-1] < 1.0:
        return False
    r = np.asarray(ts[-3:-1]) / np.asarray(ts[-2:])
    return bool(a[1] >= 0.5 * r[0] * a[0] and a[2] >= 0.5 * r[1] * a[1])


def _summarize(Q, ts, scheme, used, tol=None, noise=0.0):
    """Reduce a (members, levels) quotient table to a :class:`DerivativeEstimate`."""
    tol = scheme.tol_conv if tol is None else tol
    reduce = _reduce(scheme.mode)
    ts = list(ts)
    if not np.all(np.isfinite(Q)):
        return DerivativeEstimate(float("nan"), float("nan"), scheme, False, False, [], ts)
    raw = [float(reduce(Q[:, k])) for k in range(Q.shape[1])]
    spread = float(np.ptp(Q[:, -1]))
    if _diverging(raw, ts):
        value = math.copysign(scheme.cap, raw[-1])
        return DerivativeEstimate(value, spread, scheme, False, True, raw, ts)
    w_all = lagrange_weights_at_zero(ts[-used:])
    w_fine = lagrange_weights_at_zero(ts[-(used - 1):])
    value = float(reduce(Q[:, -used:] @ w_all))
    alt = float(reduce(Q[:, -(used - 1):] @ w_fine))
    converged = abs(value - alt) <= tol * (1.0 + abs(value)) + noise
    diverged = abs(value) > scheme.cap
    if diverged:
        value = math.copysign(scheme.cap, value)
        converged = False
    return DerivativeEstimate(value, spread, scheme, converged, diverged, raw, ts)


def _as_vec(z):
    return np.atleast_1d(np.asarray(z, dtype=float))


def _first_table(g, x, v, scheme, dir_cloud, base_cloud):
    ts = scheme.t_sequence
    t0 = ts[0]
    nv = float(np.linalg.norm(v))
    Q = np.empty((len(dir_cloud) * len(base_cloud), len(ts)))
    g0 = g(x) if len(base_cloud) == 1 else None
    for k, t in enumerate(ts):
        s = t / t0
        row = 0
        for ub in base_cloud:
            xb = x + (scheme.base_point_radius * s * nv) * ub
            gb = g0 if g0 is not None else g(xb)
            for ud in dir_cloud:
                vp = v + (scheme.perturbation_radius * s * nv) * ud
                Q[row, k] = (g(xb + t * vp) - gb) / t
                row += 1
    return Q


def _mixed(g, xb, u, v, t, gb):
    # (g(x'+tu+tv) - g(x'+tu) - g(x'+tv) + g(x')) / t^2
    return (g(xb + t * (u + v)) - g(xb + t * u) - g(xb + t * v) + gb) / (t * t)


def _zero_result(scheme, ts):
    return DerivativeEstimate(0.0, 0.0, scheme, True, False, [0.0] * len(ts), list(ts))


def directional(g, x, v, scheme=QuotientScheme()):
    """One-sided directional derivative ``g'(x; v) = lim (g(x+tv) - g(x)) / t``."""
    x, v = _as_vec(x), _as_vec(v)
    scheme = scheme.with_mode("limit")
    if not np.any(v):
        return _zero_result(scheme, scheme.t_sequence)
    Q = _first_table(g, x, v, scheme, np.zeros((1, x.size)), np.zeros((1, x.size)))
    return _summarize(Q, scheme.t_sequence, scheme, scheme.extrapolation_levels)


def subderivative(g, x, v, scheme=QuotientScheme()):
    """Subderivative ``d g(x)(v)``: liminf over ``v' -> v`` and ``t -> 0``."""
    x, v = _as_vec(x), _as_vec(v)
    scheme = scheme.with_mode("liminf")
    if not np.any(v):
        return _zero_result(scheme, scheme.t_sequence)
    cloud = _unit_ball_cloud(x.size, scheme.perturbation_count, scheme.seed, v)
    Q = _first_table(g, x, v, scheme, cloud, np.zeros((1, x.size)))
    return _summarize(Q, scheme.t_sequence, scheme, scheme.extrapolation_levels)


def clarke_directional(g, x, v, scheme=QuotientScheme()):
    """Clarke derivative ``g°(x; v)``: limsup over base points ``x' -> x`` and ``t -> 0``."""
    x, v = _as_vec(x), _as_vec(v)
    scheme = scheme.with_mode("limsup")
    if not np.any(v):
        return _zero_result(scheme, scheme.t_sequence)
    cloud = _unit_ball_cloud(x.size, scheme.perturbation_count, scheme.seed, v)
    Q = _first_table(g, x, v, scheme, np.zeros((1, x.size)), cloud)
    return _summarize(Q, scheme.t_sequence, scheme, scheme.extrapolation_levels)


def _adaptive(column, ts, scheme, gscale):
    """Evaluate ``column(t, scale)`` level by level until a window converges."""
    used = min(scheme.extrapolation_levels, len(ts))
    eps = np.finfo(float).eps
    cols, est = [], None
    for k, t in enumerate(ts):
        cols.append(column(t, t / ts[0]))
        if k + 1 < used:
            continue
        window = slice(k + 1 - used, k + 1)
        noise = 64.0 * eps * (1.0 + gscale) / (t * t)
        est = _summarize(np.column_stack(cols[window]), ts[window], scheme, used,
                         scheme.tol_conv_second, noise)
        if est.converged or est.diverged or not np.isfinite(est.value):
            break
    reduce = _reduce(scheme.mode)
    est.levels = [float(reduce(c)) for c in cols]
    est.steps = list(ts[:len(cols)])
    return est


def _second_column(g, x, w, scheme, cloud, pinned=None):
    nw = float(np.linalg.norm(w))
    gx = g(x)

    def column(t, s):
        out = np.empty(len(cloud))
        for j, u in enumerate(cloud):
            wp = w + (scheme.perturbation_radius * s * nw) * u
            if pinned is None:
                # t d g(x)(w') is replaced by its two-step Richardson estimate,
                # which leaves the one-sided second difference
                out[j] = _mixed(g, x, wp, wp, t, gx)
            else:
                out[j] = (g(x + t * wp) - gx - t * float(pinned @ wp)) / (0.5 * t * t)
        return out
    return column


def second_directional(g, x, v, scheme=QuotientScheme()):
    """Second-order directional derivative ``g⁽²⁾(x; v)``."""
    x, v = _as_vec(x), _as_vec(v)
    scheme = scheme.with_mode("limit")
    if not np.any(v):
        return _zero_result(scheme, scheme.t2_sequence)
    return _adaptive(_second_column(g, x, v, scheme, np.zeros((1, x.size))),
                     scheme.t2_sequence, scheme, abs(g(x)))


def second_subderivative(g, x, w, scheme=QuotientScheme()):
    """Second subderivative ``d²g(x)(w)`` (liminf over ``w' -> w``)."""
    x, w = _as_vec(x), _as_vec(w)
    scheme = scheme.with_mode("liminf")
    if not np.any(w):
        return _zero_result(scheme, scheme.t2_sequence)
    cloud = _unit_ball_cloud(x.size, scheme.perturbation_count, scheme.seed, w)
    return _adaptive(_second_column(g, x, w, scheme, cloud), scheme.t2_sequence, scheme,
                     abs(g(x)))


def second_subderivative_pinned(g, x, v, w, scheme=QuotientScheme()):
    """Second subderivative ``d²g(x | v)(w)`` with the linear term ``t <v, w'>`` pinned."""
    x, v, w = _as_vec(x), _as_vec(v), _as_vec(w)
    scheme = scheme.with_mode("liminf")
    if not np.any(w):
        return _zero_result(scheme, scheme.t2_sequence)
    cloud = _unit_ball_cloud(x.size, scheme.perturbation_count, scheme.seed, w)
    return _adaptive(_second_column(g, x, w, scheme, cloud, pinned=v), scheme.t2_sequence,
                     scheme, abs(g(x)))


def generalized_second(g, x, u, v, scheme=QuotientScheme()):
    """Generalized second-order derivative ``g°°(x; u, v)``.

    The two step sizes are paired (``delta = t``) and the limsup runs over
    the base-point cloud.
    """
    x, u, v = _as_vec(x), _as_vec(u), _as_vec(v)
    scheme = scheme.with_mode("limsup")
    ts = scheme.t2_sequence
    if not (np.any(u) and np.any(v)):
        return _zero_result(scheme, ts)
    scale = max(float(np.linalg.norm(u)), float(np.linalg.norm(v)))
    cloud = _unit_ball_cloud(x.size, scheme.perturbation_count, scheme.seed, v)

    def column(t, s):
        out = np.empty(len(cloud))
        for j, c in enumerate(cloud):
            xb = x + (scheme.base_point_radius * s * scale) * c
            out[j] = _mixed(g, xb, u, v, t, g(xb))
        return out
    return _adaptive(column, ts, scheme, abs(g(x)))


# ---------------------------------------------------------------- smooth helpers

def central_gradient(g, x, h=1e-6):
    x = _as_vec(x)
    out = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        out[i] = (g(x + e) - g(x - e)) / (2 * h)
    return out


def hessian_vector_fd(grad, x, v, h=1e-4):
    """Central difference of a gradient oracle along ``v``."""
    x, v = _as_vec(x), _as_vec(v)
    return (np.asarray(grad(x + h * v)) - np.asarray(grad(x - h * v))) / (2 * h)


def fd_hessian(grad, x, h=1e-4):
    """Symmetrized central-difference Hessian of a gradient oracle."""
    x = _as_vec(x)
    H = np.column_stack([hessian_vector_fd(grad, x, e, h) for e in np.eye(x.size)])
    return 0.5 * (H + H.T)


def restrict_x(problem, y):
    """``x -> f(x, y)`` with ``y`` frozen."""
    y = _as_vec(y)
    return lambda x: problem.eval(x, y)


def restrict_y(problem, x):
    """``y -> f(x, y)`` with ``x`` frozen."""
    x = _as_vec(x)
    return lambda y: problem.eval(x, y)


def joint(problem):
    """``z = (x, y) -> f(x, y)``."""
    n = problem.n
    return lambda z: problem.eval(z[:n], z[n:])
