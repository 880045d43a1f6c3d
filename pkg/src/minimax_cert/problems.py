"""Min-max problem oracles, grid envelopes and the registry of example problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import InfeasiblePointError, PolyhedralSet

SMOOTHNESS_TAGS = ("smooth-C2", "smooth-C1", "locally-Lipschitz")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Point:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("point entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def to_json(self):
        return {"x": self.x.tolist(), "y": self.y.tolist()}


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution for brute-force oracles.

    ``nodes`` is per coordinate; for more than one coordinate it is reduced so
    that a product grid stays below ``max_points``.
    """

    nodes: int = 401
    refine_width: float = 1e-10
    max_points: int = 200_000

    def nodes_for(self, dim):
        if dim <= 1:
            return self.nodes
        return max(3, min(self.nodes, int(self.max_points ** (1.0 / dim))))


@dataclass
class MinMaxProblem:
    """``min_{x in X} max_{y in Y} f(x, y)`` with optional derivative oracles."""

    name: str
    n: int
    m: int
    f: Callable
    X: PolyhedralSet
    Y: PolyhedralSet
    smoothness: str
    grad_x: Callable | None = None
    grad_y: Callable | None = None
    hess_xx: Callable | None = None
    hess_yy: Callable | None = None
    batch: Callable | None = None
    params: dict = field(default_factory=dict)
    facts: tuple = ()

    def __post_init__(self):
        if self.smoothness not in SMOOTHNESS_TAGS:
            raise ValueError(f"unknown smoothness tag {self.smoothness!r}")
        if self.X.dim != self.n or self.Y.dim != self.m:
            raise ValueError("feasible-set dimensions do not match (n, m)")

    def eval(self, x, y):
        return float(self.f(np.asarray(x, dtype=float), np.asarray(y, dtype=float)))

    def eval_batch(self, xs, ys):
        """Values on all pairs: ``out[k, l] = f(xs[k], ys[l])``."""
        xs = np.asarray(xs, dtype=float).reshape(-1, self.n)
        ys = np.asarray(ys, dtype=float).reshape(-1, self.m)
        if self.batch is not None:
            return np.asarray(self.batch(xs, ys), dtype=float).reshape(len(xs), len(ys))
        return np.array([[self.f(x, y) for y in ys] for x in xs], dtype=float)

    def check_point(self, point):
        if point.x.shape != (self.n,) or point.y.shape != (self.m,):
            raise ValueError(f"point dimensions {point.x.size},{point.y.size} "
                             f"do not match problem ({self.n},{self.m})")
        if not (self.X.contains(point.x) and self.Y.contains(point.y)):
            raise InfeasiblePointError(f"point {point.to_json()} is outside X x Y")
        return point

    @property
    def is_smooth(self):
        return self.smoothness != "locally-Lipschitz"


# ---------------------------------------------------------------- grid search

def grid_nodes(pset, grid, center=None, radius=None, include=None):
    """Product-grid nodes of ``pset`` (optionally of ``pset`` meet a ball).

    ``include`` points are appended so that brute-force comparisons always
    contain the point under test.
    """
    lo, hi = pset.bounding_box()
    if center is not None:
        center = np.asarray(center, dtype=float)
        lo = np.maximum(lo, center - radius)
        hi = np.minimum(hi, center + radius)
    k = grid.nodes_for(pset.dim)
    axes = [np.linspace(a, b, k) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, pset.dim)
    if include is not None:
        mesh = np.vstack([mesh, np.atleast_2d(include)])
    keep = np.array([pset.contains(z, 1e-12) for z in mesh]) if pset.kind != "box" \
        else np.ones(len(mesh), dtype=bool)
    if center is not None:
        keep &= np.linalg.norm(mesh - center, axis=1) <= radius * (1 + 1e-12)
    return mesh[keep]


def _coordinate_interval(pset, z, i, center=None, radius=None):
    # Feasible range of coordinate i with the other coordinates frozen.
    lo, hi = -np.inf, np.inf
    if pset.kind == "box":
        lo, hi = pset.lower[i], pset.upper[i]
    else:
        A, b = pset.A_, pset.b_
        rest = b - A @ z + A[:, i] * z[i]
        for a_i, r in zip(A[:, i], rest):
            if a_i > 0:
                hi = min(hi, r / a_i)
            elif a_i < 0:
                lo = max(lo, r / a_i)
    if center is not None:
        others = float(np.sum(np.delete(z - center, i) ** 2))
        half = math.sqrt(max(radius * radius - others, 0.0))
        lo, hi = max(lo, center[i] - half), min(hi, center[i] + half)
    return lo, hi


def golden_max(fun, a, b, width=1e-10):
    """Maximize a scalar function on ``[a, b]``; returns ``(s, value)``."""
    best_s, best_v = a, fun(a)
    vb = fun(b)
    if vb > best_v:
        best_s, best_v = b, vb
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > width:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    for s, v in ((c, fc), (d, fd)):
        if v > best_v:
            best_s, best_v = s, v
    return best_s, best_v


def refine_max(fun, z0, v0, pset, grid, step, center=None, radius=None):
    """One golden-section pass per coordinate around the grid maximizer ``z0``."""
    z, best = np.array(z0, dtype=float), float(v0)
    for i in range(z.size):
        lo, hi = _coordinate_interval(pset, z, i, center, radius)
        a, b = max(lo, z[i] - step[i]), min(hi, z[i] + step[i])
        if not b > a:
            continue

        def along(s, i=i):
            w = z.copy()
            w[i] = s
            return fun(w)

        s, val = golden_max(along, a, b, grid.refine_width)
        if val > best:
            z[i], best = s, val
    return z, best


def inner_max(problem, x, grid=GridSpec(), center=None, radius=None, include=None):
    """Grid-plus-refinement maximum of ``f(x, .)`` over Y (or Y meet a ball).

    Returns ``(value, argmax)``.
    """
    x = np.asarray(x, dtype=float)
    ys = grid_nodes(problem.Y, grid, center, radius, include)
    if len(ys) == 0:
        ys = np.atleast_2d(center)
    vals = problem.eval_batch(x[None, :], ys)[0]
    j = int(np.argmax(vals))
    lo, hi = problem.Y.bounding_box()
    if center is not None:
        lo = np.maximum(lo, center - radius)
        hi = np.minimum(hi, center + radius)
    step = (hi - lo) / max(grid.nodes_for(problem.m) - 1, 1)
    y, val = refine_max(lambda w: problem.eval(x, w), ys[j], vals[j], problem.Y, grid,
                        step, center, radius)
    return float(val), y


def envelope_phi(problem, x, grid=GridSpec()):
    """``phi(x) = max_{y in Y} f(x, y)`` by grid search plus golden-section refinement."""
    x = np.asarray(x, dtype=float)
    if not problem.X.contains(x):
        raise InfeasiblePointError(f"x = {x.tolist()} is outside X")
    return inner_max(problem, x, grid)[0]


def gradient_check(problem, points, h=1e-6, rtol=1e-6, atol=1e-8):
    """Largest violation of ``|analytic - central FD| <= rtol |FD| + atol`` (<= 0 passes)."""
    worst = -np.inf
    for pt in points:
        fd_x, fd_y = central_gradients(problem, pt.x, pt.y, h)
        for oracle, fd, args in ((problem.grad_x, fd_x, (pt.x, pt.y)),
                                 (problem.grad_y, fd_y, (pt.x, pt.y))):
            if oracle is None:
                continue
            an = np.asarray(oracle(*args), dtype=float)
            worst = max(worst, float(np.max(np.abs(an - fd) - (rtol * np.abs(fd) + atol))))
    return worst


def central_gradients(problem, x, y, h=1e-6):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gx = np.empty(problem.n)
    gy = np.empty(problem.m)
    for i in range(problem.n):
        e = np.zeros(problem.n)
        e[i] = h
        gx[i] = (problem.eval(x + e, y) - problem.eval(x - e, y)) / (2 * h)
    for j in range(problem.m):
        e = np.zeros(problem.m)
        e[j] = h
        gy[j] = (problem.eval(x, y + e) - problem.eval(x, y - e)) / (2 * h)
    return gx, gy


# ---------------------------------------------------------------- ReLU network

def unpack_relu_net(x, in_dim, hidden, out_dim):
    """Split ``x = (vec W1, vec W2, b1, b2)`` (column-major vec)."""
    x = np.asarray(x, dtype=float)
    k1, k2 = hidden * in_dim, out_dim * hidden
    if x.size != k1 + k2 + hidden + out_dim:
        raise ValueError("parameter vector has the wrong length for the network shape")
    W1 = x[:k1].reshape((hidden, in_dim), order="F")
    W2 = x[k1:k1 + k2].reshape((out_dim, hidden), order="F")
    b1 = x[k1 + k2:k1 + k2 + hidden]
    b2 = x[k1 + k2 + hidden:]
    return W1, W2, b1, b2


def pack_relu_net(W1, W2, b1, b2):
    return np.concatenate([np.ravel(W1, order="F"), np.ravel(W2, order="F"),
                           np.ravel(b1), np.ravel(b2)])


def relu_net_output(x, xi, shape):
    W1, W2, b1, b2 = unpack_relu_net(x, *shape)
    return W2 @ np.maximum(W1 @ xi + b1, 0.0) + b2


def relu_net_value(x, xi, shape):
    """``F = rho(W2 (W1 xi + b1)_+ + b2)`` with ``rho(z) = ||z||^2``."""
    z = relu_net_output(x, xi, shape)
    return float(z @ z)


def relu_net_directional(x, xdot, xi, shape):
    """Closed-form one-sided directional derivative of :func:`relu_net_value`.

    Hidden unit ``i`` contributes the slope of its pre-activation when it is
    strictly positive, or when it sits at zero and the direction pushes it
    up; otherwise it contributes nothing.
    """
    W1, W2, b1, b2 = unpack_relu_net(x, *shape)
    dW1, dW2, db1, db2 = unpack_relu_net(xdot, *shape)
    pre = W1 @ xi + b1
    dpre = dW1 @ xi + db1
    slope = np.where((pre > 0) | ((pre == 0) & (dpre > 0)), dpre, 0.0)
    upsilon = W2 @ slope + dW2 @ np.maximum(pre, 0.0) + db2
    z = W2 @ np.maximum(pre, 0.0) + b2
    return float(2.0 * z @ upsilon)


# ---------------------------------------------------------------- registry

def _unit_boxes(lo_x, hi_x, lo_y, hi_y):
    return PolyhedralSet.box([lo_x], [hi_x]), PolyhedralSet.box([lo_y], [hi_y])


def _scalar_problem(name, fun, gx, gy, hxx, hyy, X, Y, smoothness, facts):
    def f(x, y):
        return fun(x[..., 0], y[..., 0])

    def batch(xs, ys):
        return fun(xs[:, None, 0], ys[None, :, 0])

    def wrap(g):
        if g is None:
            return None
        return lambda x, y: np.atleast_1d(np.asarray(g(x[0], y[0]), dtype=float))

    def wrap_h(h):
        if h is None:
            return None
        return lambda x, y: np.array([[float(h(x[0], y[0]))]])

    return MinMaxProblem(name=name, n=1, m=1, f=f, X=X, Y=Y, smoothness=smoothness,
                         grad_x=wrap(gx), grad_y=wrap(gy), hess_xx=wrap_h(hxx),
                         hess_yy=wrap_h(hyy), batch=batch, facts=tuple(facts))


def _no_params(name, params):
    if params:
        raise ValueError(f"example {name!r} takes no parameters, got {sorted(params)}")


def _quadratic_5xy(params):
    _no_params("quadratic-5xy", params)
    X, Y = _unit_boxes(-1, 1, -1, 1)
    return _scalar_problem(
        "quadratic-5xy",
        lambda x, y: -x ** 2 + 5 * x * y - y ** 2,
        lambda x, y: -2 * x + 5 * y,
        lambda x, y: 5 * x - 2 * y,
        lambda x, y: -2.0,
        lambda x, y: -2.0,
        X, Y, "smooth-C2",
        ["phi(x) = 21/4 x^2 on [-2/5, 2/5] and -x^2 + 5|x| - 1 outside",
         "(0,0) is global and local minimax with tau(delta) = 5/2 delta",
         "(0,0) is neither a saddle nor a local saddle point",
         "max-min minus min-max over [-d,d]^2 equals -d^2"])


def _xy_cos(params):
    _no_params("xy-cos", params)
    X, Y = _unit_boxes(-1, 1, -5, 5)
    return _scalar_problem(
        "xy-cos",
        lambda x, y: x * y - np.cos(y),
        lambda x, y: y,
        lambda x, y: x + np.sin(y),
        lambda x, y: 0.0,
        lambda x, y: np.cos(y),
        X, Y, "smooth-C2",
        ["(0, -pi) and (0, pi) are global minimax points",
         "(0, +-pi) are not first-order stationary, hence not local minimax",
         "(0, 0) is first-order stationary but not local minimax"])


def _quartic(params):
    _no_params("quartic-4x2y2", params)
    X, Y = _unit_boxes(-1, 1, -1, 1)
    return _scalar_problem(
        "quartic-4x2y2",
        lambda x, y: -x ** 4 + 4 * x ** 2 * y ** 2 - y ** 4,
        lambda x, y: -4 * x ** 3 + 8 * x * y ** 2,
        lambda x, y: 8 * x ** 2 * y - 4 * y ** 3,
        lambda x, y: -12 * x ** 2 + 8 * y ** 2,
        lambda x, y: 8 * x ** 2 - 12 * y ** 2,
        X, Y, "smooth-C2",
        ["phi(x) = 3 x^4 on [-sqrt(2)/2, sqrt(2)/2]",
         "(0,0) is a global and local minimax point",
         "second-order conditions at (0,0) reduce to f_xx(0,0) >= 0 and f_yy(0,0) <= 0"])


def _nonsmooth_935(params):
    _no_params("nonsmooth-935", params)
    X, Y = _unit_boxes(-1, 1, -1, 1)
    return _scalar_problem(
        "nonsmooth-935",
        lambda x, y: -np.abs(x) ** 9 + 0.6 * np.abs(x) ** 3 * np.abs(y) ** 3 - np.abs(y) ** 5,
        None, None, None, None,
        X, Y, "locally-Lipschitz",
        ["(0,0) is a local minimax point with tau(delta) = 3/5 delta^(3/2)",
         "f_x^o(0,0;v) = 0 and d_y f(0,0)(w) = 0 for all directions",
         "f_x^oo(0,0;v) >= 0 and d^2_y f(0,0)(w) = 0: second-order d-stationary"])


RELU_DEFAULTS = {"in_dim": 3, "hidden": 4, "out_dim": 2, "seed": 0, "x_bound": 2.0}


def _relu_net(params):
    params = {**RELU_DEFAULTS, **(params or {})}
    unknown = set(params) - set(RELU_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown relu-net-F parameters {sorted(unknown)}")
    shape = (int(params["in_dim"]), int(params["hidden"]), int(params["out_dim"]))
    if min(shape) < 1:
        raise ValueError("network dimensions must be >= 1")
    xi = np.random.default_rng(int(params["seed"])).uniform(-1.0, 1.0, shape[0])
    n = shape[1] * shape[0] + shape[2] * shape[1] + shape[1] + shape[2]
    bound = float(params["x_bound"])

    def f(x, y):
        return relu_net_value(x, xi, shape) - float(y @ y)

    prob = MinMaxProblem(
        name="relu-net-F", n=n, m=1, f=f,
        X=PolyhedralSet.box(-bound * np.ones(n), bound * np.ones(n)),
        Y=PolyhedralSet.box([-1.0], [1.0]),
        smoothness="locally-Lipschitz",
        grad_y=lambda x, y: -2.0 * np.asarray(y, dtype=float),
        hess_yy=lambda x, y: -2.0 * np.eye(1),
        params={**params, "xi": xi.tolist()},
        facts=("F(W,b) = ||W2 (W1 xi + b1)_+ + b2||^2 is semidifferentiable",
               "its directional derivative follows the ReLU sign case split",
               "x-player: network weights; y-player: concave -y^2 term"))
    prob.relu_shape = shape
    prob.relu_xi = xi
    return prob


def _gan_saa(params):
    from .gan import gan_problem_from_params

    return gan_problem_from_params(params or {})


REGISTRY = {
    "quadratic-5xy": _quadratic_5xy,
    "xy-cos": _xy_cos,
    "relu-net-F": _relu_net,
    "nonsmooth-935": _nonsmooth_935,
    "quartic-4x2y2": _quartic,
    "gan-saa": _gan_saa,
}


class UnknownProblemError(KeyError):
    pass


def build_example(name, params=None):
    """Build a registered example problem by id."""
    try:
        builder = REGISTRY[name]
    except KeyError:
        raise UnknownProblemError(f"unknown example id {name!r}; known: {sorted(REGISTRY)}")
    if params is not None and not isinstance(params, dict):
        raise ValueError("params must be a mapping")
    return builder(params)
