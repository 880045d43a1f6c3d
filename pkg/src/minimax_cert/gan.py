"""Sample-average GAN min-max problem with a ReLU generator and a logistic discriminator.

Generator ``G(x, xi2) = W2 (W1 xi2 + b1)_+ + b2`` with ``x = (vec W1, vec W2,
b1, b2)`` (column-major vec), ``W1`` of shape ``(s, s2)`` and ``W2`` of shape
``(s1, s)``.  Discriminator ``D(y, xi1) = 1 / (1 + exp(y . xi1))``.  The SAA
objective is

    f_N(x, y) = mean_i [ log D(y, xi1_i) + log(1 - D(y, G(x, xi2_i))) ]
              = mean_i [ -softplus(u1_i) + u2_i - softplus(u2_i) ]

with ``u1 = y . xi1`` and ``u2 = y . G``.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .geometry import PolyhedralSet
from .problems import MinMaxProblem

KINK_TOL = 1e-7
RESAMPLE_RETRIES = 100
ZERO_ROW_TOL = 1e-12
HESS_STEP = 1e-4
GDA_STEP = 1e-2
GDA_TOL = 1e-6
GDA_MAX_ITER = 100_000
N_REF = 16384
CSV_HEADER = "N,median_residual,p90_residual,nonconverged"


class KinkProximityError(ValueError):
    """A hidden pre-activation is (nearly) zero, so f_N is not C^2 there."""


class DegenerateHiddenUnitError(ValueError):
    """Some hidden unit has an all-zero weight row and zero bias."""


@dataclass(frozen=True)
class GanShape:
    s: int = 4
    s1: int = 2
    s2: int = 2

    def __post_init__(self):
        if min(self.s, self.s1, self.s2) < 1:
            raise ValueError("GAN dimensions must be >= 1")

    @property
    def n(self):
        return self.s * self.s2 + self.s1 * self.s + self.s + self.s1

    @property
    def m(self):
        return self.s1

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected {self.n} generator parameters, got {x.shape}")
        s, s1, s2 = self.s, self.s1, self.s2
        k1, k2 = s * s2, s1 * s
        W1 = x[:k1].reshape((s, s2), order="F")
        W2 = x[k1:k1 + k2].reshape((s1, s), order="F")
        b1 = x[k1 + k2:k1 + k2 + s]
        b2 = x[k1 + k2 + s:]
        return W1, W2, b1, b2

    def pack(self, W1, W2, b1, b2):
        return np.concatenate([np.ravel(W1, order="F"), np.ravel(W2, order="F"),
                               np.ravel(b1), np.ravel(b2)]).astype(float)

    def to_json(self):
        return {"s": self.s, "s1": self.s1, "s2": self.s2}


@dataclass
class SampleSet:
    xi1: np.ndarray
    xi2: np.ndarray
    seed: int
    xi1_box: tuple = (-0.5, 1.5)
    xi2_box: tuple = (-1.0, 1.0)
    resampled: int = 0

    @property
    def N(self):
        return self.xi1.shape[0]

    def descriptor(self):
        return {"seed": self.seed, "N": self.N, "resampled": self.resampled,
                "xi1": {"distribution": "uniform", "low": self.xi1_box[0], "high": self.xi1_box[1]},
                "xi2": {"distribution": "uniform", "low": self.xi2_box[0], "high": self.xi2_box[1]}}


@dataclass
class GanSaaInstance:
    shape: GanShape
    samples: SampleSet
    X: PolyhedralSet
    Y: PolyhedralSet
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.samples.N


def _softplus(u):
    return np.logaddexp(0.0, u)


def _sigmoid(u):
    # 1 / (1 + exp(-u)) without overflow
    return np.exp(-np.logaddexp(0.0, -u))


def _mean(v):
    # fixed pairwise reduction order, independent of threading
    return float(np.add.reduce(np.ascontiguousarray(v, dtype=float))) / len(v)


# ---------------------------------------------------------------- forward passes

def generator_forward(shape, x, xi2):
    """``G(x, xi2)``; ``xi2`` may be one sample or an ``(N, s2)`` batch."""
    W1, W2, b1, b2 = shape.unpack(x)
    xi2 = np.asarray(xi2, dtype=float)
    if xi2.shape[-1] != shape.s2:
        raise ValueError("latent sample dimension does not match s2")
    pre = xi2 @ W1.T + b1
    return np.maximum(pre, 0.0) @ W2.T + b2


def discriminator_forward(y, xi1):
    """``D(y, xi1) = 1 / (1 + exp(y . xi1))`` computed as ``exp(-softplus(u))``."""
    u = np.asarray(xi1, dtype=float) @ np.asarray(y, dtype=float)
    return np.exp(-_softplus(u))


def pre_activations(instance, x):
    W1, _, b1, _ = instance.shape.unpack(x)
    return instance.samples.xi2 @ W1.T + b1


def kink_margin(instance, x):
    """``min |(W1 xi2_j + b1)_i|`` over samples and hidden units."""
    return float(np.min(np.abs(pre_activations(instance, x))))


def saa_objective(instance, x, y):
    y = np.asarray(y, dtype=float)
    G = generator_forward(instance.shape, x, instance.samples.xi2)
    u1 = instance.samples.xi1 @ y
    u2 = G @ y
    return _mean(-_softplus(u1) + u2 - _softplus(u2))


def saa_objective_many(instance, x, ys):
    """Objective at one ``x`` and a batch of ``y`` rows."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    G = generator_forward(instance.shape, x, instance.samples.xi2)
    U1 = instance.samples.xi1 @ ys.T
    U2 = G @ ys.T
    T = -_softplus(U1) + U2 - _softplus(U2)
    return np.add.reduce(T, axis=0) / instance.N


def _raw_gradients(instance, x, y):
    shape = instance.shape
    W1, W2, b1, b2 = shape.unpack(x)
    y = np.asarray(y, dtype=float)
    xi1, xi2 = instance.samples.xi1, instance.samples.xi2
    N = instance.N
    pre = xi2 @ W1.T + b1
    h = np.maximum(pre, 0.0)
    G = h @ W2.T + b2
    u1 = xi1 @ y
    u2 = G @ y
    c = _sigmoid(-u2)                      # d/du2 of u2 - softplus(u2)
    grad_y = (np.add.reduce(-_sigmoid(u1)[:, None] * xi1, axis=0)
              + np.add.reduce(c[:, None] * G, axis=0)) / N
    cbar = np.add.reduce(c) / N
    g_b2 = cbar * y
    g_W2 = np.outer(y, np.add.reduce(c[:, None] * h, axis=0)) / N
    dpre = (c[:, None] * (W2.T @ y)[None, :]) * (pre > 0)
    g_b1 = np.add.reduce(dpre, axis=0) / N
    g_W1 = dpre.T @ xi2 / N
    return shape.pack(g_W1, g_W2, g_b1, g_b2), grad_y, pre


def saa_gradients(instance, x, y, kink_tol=KINK_TOL):
    """Reverse-mode gradients ``(grad_x, grad_y)``.

    Raises :class:`KinkProximityError` when a hidden pre-activation is within
    ``kink_tol`` of zero, where the objective need not be differentiable.
    """
    gx, gy, pre = _raw_gradients(instance, x, y)
    margin = float(np.min(np.abs(pre)))
    if margin <= kink_tol:
        raise KinkProximityError(
            f"hidden pre-activation {margin:.3e} within {kink_tol:g} of a ReLU kink; "
            "resample the latent data or perturb the parameters")
    return gx, gy


def saa_hessian_blocks(instance, x, y, h=HESS_STEP, kink_tol=KINK_TOL):
    """``(H_xx, H_yy)`` by central differences of the analytic gradients, symmetrized."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pre = pre_activations(instance, x)
    # a coordinate step of size h moves a pre-activation by at most h * max(|xi2|, 1)
    reach = h * max(float(np.max(np.abs(instance.samples.xi2))), 1.0)
    if float(np.min(np.abs(pre))) <= max(kink_tol, reach):
        raise KinkProximityError("a ReLU kink lies inside the finite-difference stencil")
    n, m = instance.shape.n, instance.shape.m
    Hxx = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        Hxx[:, i] = (_raw_gradients(instance, x + e, y)[0]
                     - _raw_gradients(instance, x - e, y)[0]) / (2 * h)
    Hyy = np.empty((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        Hyy[:, j] = (_raw_gradients(instance, x, y + e)[1]
                     - _raw_gradients(instance, x, y - e)[1]) / (2 * h)
    return 0.5 * (Hxx + Hxx.T), 0.5 * (Hyy + Hyy.T)


# ---------------------------------------------------------------- construction

def draw_samples(shape, N, seed, xi1_box=(-0.5, 1.5), xi2_box=(-1.0, 1.0), x_ref=None,
                 kink_tol=KINK_TOL, retries=RESAMPLE_RETRIES):
    """Seeded uniform samples; latent draws too close to a kink at ``x_ref`` are redrawn."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    xi1 = rng.uniform(xi1_box[0], xi1_box[1], (N, shape.s1))
    xi2 = rng.uniform(xi2_box[0], xi2_box[1], (N, shape.s2))
    redrawn = 0
    if x_ref is not None:
        W1, _, b1, _ = shape.unpack(x_ref)
        for j in range(N):
            tries = 0
            while np.min(np.abs(W1 @ xi2[j] + b1)) <= kink_tol:
                if tries >= retries:
                    raise KinkProximityError(
                        f"sample {j} stays within {kink_tol:g} of a kink after {retries} redraws")
                xi2[j] = rng.uniform(xi2_box[0], xi2_box[1], shape.s2)
                tries += 1
                redrawn += 1
    return SampleSet(xi1, xi2, int(seed), tuple(map(float, xi1_box)), tuple(map(float, xi2_box)),
                     redrawn)


def build_instance(shape=GanShape(), N=256, seed=0, x_bound=2.0, y_bound=2.0,
                   xi1_box=(-0.5, 1.5), xi2_box=(-1.0, 1.0), x_ref=None):
    samples = draw_samples(shape, N, seed, xi1_box, xi2_box, x_ref)
    X = PolyhedralSet.box(-x_bound * np.ones(shape.n), x_bound * np.ones(shape.n))
    Y = PolyhedralSet.box(-y_bound * np.ones(shape.m), y_bound * np.ones(shape.m))
    return GanSaaInstance(shape, samples, X, Y, {"x_bound": float(x_bound),
                                                 "y_bound": float(y_bound)})


def instance_problem(instance):
    """Wrap an instance as a :class:`MinMaxProblem` for the certifiers."""

    def batch(xs, ys):
        return np.array([saa_objective_many(instance, x, ys) for x in xs])

    return MinMaxProblem(
        name="gan-saa", n=instance.shape.n, m=instance.shape.m,
        f=lambda x, y: saa_objective(instance, x, y),
        X=instance.X, Y=instance.Y, smoothness="locally-Lipschitz",
        grad_x=lambda x, y: saa_gradients(instance, x, y)[0],
        grad_y=lambda x, y: saa_gradients(instance, x, y)[1],
        hess_xx=lambda x, y: saa_hessian_blocks(instance, x, y)[0],
        hess_yy=lambda x, y: saa_hessian_blocks(instance, x, y)[1],
        batch=batch,
        params={**instance.shape.to_json(), **instance.meta, **instance.samples.descriptor()},
        facts=("f_N is locally Lipschitz and twice semidifferentiable",
               "f_N is C^2 wherever no hidden pre-activation vanishes",
               "f_N(x, 0) = -2 log 2 for every x"))


GAN_PARAM_KEYS = {"s", "s1", "s2", "N", "seed", "x_bound", "y_bound", "xi1_box", "xi2_box"}


def gan_problem_from_params(params):
    unknown = set(params) - GAN_PARAM_KEYS
    if unknown:
        raise ValueError(f"unknown gan-saa parameters {sorted(unknown)}")
    try:
        shape = GanShape(int(params.get("s", 4)), int(params.get("s1", 2)), int(params.get("s2", 2)))
        inst = build_instance(shape, int(params.get("N", 256)), int(params.get("seed", 0)),
                              float(params.get("x_bound", 2.0)), float(params.get("y_bound", 2.0)),
                              tuple(params.get("xi1_box", (-0.5, 1.5))),
                              tuple(params.get("xi2_box", (-1.0, 1.0))))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed gan-saa parameters: {exc}") from exc
    prob = instance_problem(inst)
    prob.instance = inst
    return prob


# ---------------------------------------------------------------- serialization

def save_instance(instance, path):
    """JSON header line, then little-endian float64 column-major ``xi1`` and ``xi2``."""
    header = {"shape": instance.shape.to_json(), "samples": instance.samples.descriptor(),
              "X": instance.X.to_json(), "Y": instance.Y.to_json(), "meta": instance.meta,
              "layout": "xi1 (N x s1) then xi2 (N x s2), column-major, float64 little-endian"}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for A in (instance.samples.xi1, instance.samples.xi2):
            fh.write(np.asarray(A, dtype="<f8").ravel(order="F").tobytes())


def load_instance(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        body = fh.read()
    shape = GanShape(**header["shape"])
    d = header["samples"]
    N = d["N"]
    k1 = N * shape.s1
    expected = 8 * (k1 + N * shape.s2)
    if len(body) != expected:
        raise ValueError(f"sample payload has {len(body)} bytes, expected {expected}")
    data = np.frombuffer(body, dtype="<f8")
    # C order, as freshly drawn samples are, so reductions round identically
    xi1 = np.ascontiguousarray(data[:k1].reshape((N, shape.s1), order="F"), dtype=float)
    xi2 = np.ascontiguousarray(data[k1:].reshape((N, shape.s2), order="F"), dtype=float)
    samples = SampleSet(xi1, xi2, d["seed"], (d["xi1"]["low"], d["xi1"]["high"]),
                        (d["xi2"]["low"], d["xi2"]["high"]), d.get("resampled", 0))
    return GanSaaInstance(shape, samples, PolyhedralSet.from_json(header["X"]),
                          PolyhedralSet.from_json(header["Y"]), header.get("meta", {}))


# ---------------------------------------------------------------- solver and certification

def natural_residual(instance, x, y):
    """``||x - P_X(x - grad_x)|| + ||y - P_Y(y + grad_y)||`` (zero iff first-order stationary)."""
    gx, gy, _ = _raw_gradients(instance, x, y)
    rx = x - instance.X.project(x - gx)
    ry = y - instance.Y.project(y + gy)
    return float(np.sqrt(rx @ rx + ry @ ry))


def projected_gda(instance, x0, y0, step=GDA_STEP, tol=GDA_TOL, max_iter=GDA_MAX_ITER):
    """Simultaneous projected gradient descent-ascent; returns ``(x, y, residual, iters, converged)``."""
    x = instance.X.project(np.asarray(x0, dtype=float))
    y = instance.Y.project(np.asarray(y0, dtype=float))
    res = np.inf
    for it in range(max_iter):
        gx, gy, _ = _raw_gradients(instance, x, y)
        rx = x - instance.X.project(x - gx)
        ry = y - instance.Y.project(y + gy)
        res = float(np.sqrt(rx @ rx + ry @ ry))
        if res < tol:
            return x, y, res, it, True
        x = instance.X.project(x - step * gx)
        y = instance.Y.project(y + step * gy)
    return x, y, res, max_iter, False


def start_point(shape, seed=0):
    """Fixed start for the solver: small seeded weights, positive hidden biases, ``y = 0``."""
    rng = np.random.default_rng([seed, 7919])
    W1 = rng.uniform(-0.5, 0.5, (shape.s, shape.s2))
    W2 = rng.uniform(-0.5, 0.5, (shape.s1, shape.s))
    b1 = rng.uniform(0.1, 0.5, shape.s)
    b2 = np.zeros(shape.s1)
    return shape.pack(W1, W2, b1, b2), np.zeros(shape.m)


def certify_gan_point(instance, point, order=2, seed=0, tol_kkt=2 * GDA_TOL):
    """Smooth stationarity report for a GAN point, with the kink-avoidance certificate.

    The default ``tol_kkt`` matches the solver's stopping rule: a GDA
    residual below ``GDA_TOL`` bounds the summed block residuals at an
    interior point by ``sqrt(2) * GDA_TOL``.
    """
    from .certify import verify_point

    W1, _, b1, _ = instance.shape.unpack(point.x)
    row = np.linalg.norm(W1, axis=1) + np.abs(b1)
    if np.any(row <= ZERO_ROW_TOL):
        raise DegenerateHiddenUnitError(
            f"hidden units {np.flatnonzero(row <= ZERO_ROW_TOL).tolist()} have zero weights and bias")
    margin = kink_margin(instance, point.x)
    if margin <= KINK_TOL:
        raise KinkProximityError(f"kink margin {margin:.3e} <= {KINK_TOL:g}")
    problem = instance_problem(instance)
    rep = verify_point(problem, point, order=order, smooth=True, nonsmooth=False, seed=seed,
                       tol_kkt=tol_kkt)
    rep.extra["kink_certificate"] = margin
    rep.extra["instance"] = {**instance.shape.to_json(), **instance.samples.descriptor()}
    return rep


def _batched_gradients(shape, xi1T, xi2T, xi2, x, y):
    """Gradients for ``T`` independent instances stacked along axis 0.

    ``xi1T``: (T, s1, N) and ``xi2T``: (T, s2, N) are the transposed samples
    (sample index last keeps the elementwise work contiguous), ``xi2``:
    (T, N, s2), ``x``: (T, n), ``y``: (T, m).
    """
    T, _, N = xi1T.shape
    s, s1, s2 = shape.s, shape.s1, shape.s2
    k1, k2 = s * s2, s1 * s
    W1 = x[:, :k1].reshape(T, s2, s).transpose(0, 2, 1)
    W2 = x[:, k1:k1 + k2].reshape(T, s, s1).transpose(0, 2, 1)
    b1 = x[:, k1 + k2:k1 + k2 + s]
    b2 = x[:, k1 + k2 + s:]
    pre = W1 @ xi2T + b1[:, :, None]
    mask = pre > 0
    h = pre * mask
    G = W2 @ h + b2[:, :, None]
    yr = y[:, None, :]
    c = expit(-(yr @ G))                       # (T, 1, N)
    e1 = expit(yr @ xi1T)
    cT = c.transpose(0, 2, 1)
    grad_y = ((G @ cT) - (xi1T @ e1.transpose(0, 2, 1)))[:, :, 0] / N
    g_b2 = c.sum(axis=-1) / N * y
    g_W2 = y[:, :, None] * (h @ cT)[:, None, :, 0] / N
    # d/dpre = c * (W2^T y) * mask, split into per-sample and per-unit factors
    v = (yr @ W2)[:, 0, :]
    Mc = mask * c
    g_b1 = v * Mc.sum(axis=-1) / N
    g_W1 = v[:, :, None] * (Mc @ xi2) / N
    grad_x = np.concatenate([g_W1.transpose(0, 2, 1).reshape(T, -1),
                             g_W2.transpose(0, 2, 1).reshape(T, -1), g_b1, g_b2], axis=1)
    return grad_x, grad_y


def projected_gda_batch(instances, x0, y0, step=GDA_STEP, tol=GDA_TOL, max_iter=GDA_MAX_ITER):
    """:func:`projected_gda` run on several same-shape box instances at once.

    Each instance stops updating as soon as its own residual drops below
    ``tol``.  Returns arrays ``(x, y, residual, iterations, converged)``.
    """
    shape, N = instances[0].shape, instances[0].N
    for inst in instances:
        if inst.shape != shape or inst.N != N or inst.X.kind != "box" or inst.Y.kind != "box":
            raise ValueError("batched GDA needs box instances of one shape and sample size")
    T = len(instances)
    xi2_all = np.stack([inst.samples.xi2 for inst in instances])
    xi1T_all = np.ascontiguousarray(np.stack([inst.samples.xi1 for inst in instances])
                                    .transpose(0, 2, 1))
    xi2T_all = np.ascontiguousarray(xi2_all.transpose(0, 2, 1))
    bounds_all = [np.stack([getattr(inst, S).lower for inst in instances]) for S in "XY"] + \
                 [np.stack([getattr(inst, S).upper for inst in instances]) for S in "XY"]
    x_out = np.clip(np.tile(np.asarray(x0, dtype=float), (T, 1)), bounds_all[0], bounds_all[2])
    y_out = np.clip(np.tile(np.asarray(y0, dtype=float), (T, 1)), bounds_all[1], bounds_all[3])
    res = np.full(T, np.inf)
    iters = np.full(T, max_iter)
    done_all = np.zeros(T, dtype=bool)

    idx = np.arange(T)
    x, y = x_out.copy(), y_out.copy()
    xi1T, xi2T, xi2 = xi1T_all, xi2T_all, xi2_all
    xl, yl, xu, yu = bounds_all
    for it in range(max_iter):
        gx, gy = _batched_gradients(shape, xi1T, xi2T, xi2, x, y)
        rx = x - np.clip(x - gx, xl, xu)
        ry = y - np.clip(y + gy, yl, yu)
        r = np.sqrt(np.einsum("ti,ti->t", rx, rx) + np.einsum("ti,ti->t", ry, ry))
        res[idx] = r
        done = r < tol
        if done.any():
            # converged instances keep the iterate at which the test passed
            fin = idx[done]
            x_out[fin] = x[done]
            y_out[fin] = y[done]
            iters[fin] = it
            done_all[fin] = True
            keep = ~done
            idx = idx[keep]
            if idx.size == 0:
                break
            x, y, gx, gy = x[keep], y[keep], gx[keep], gy[keep]
            xi1T, xi2T, xi2 = xi1T[keep], xi2T[keep], xi2[keep]
            xl, yl, xu, yu = xl[keep], yl[keep], xu[keep], yu[keep]
        x = np.clip(x - step * gx, xl, xu)
        y = np.clip(y + step * gy, yl, yu)
    if idx.size:
        x_out[idx] = x
        y_out[idx] = y
    return x_out, y_out, res, iters, done_all


def _thread_count():
    try:
        return max(1, int(os.environ.get("MINIMAX_CERT_THREADS", "1")))
    except ValueError:
        return 1


def convergence_experiment(shape=GanShape(), N_list=(16, 64, 256, 1024), seed=0, trials=20,
                           N_ref=N_REF, max_iter=GDA_MAX_ITER, step=GDA_STEP, tol=GDA_TOL):
    """First-order residual, against an ``N_ref`` reference, of points solved at each ``N``.

    Every trial draws its own samples and runs projected GDA from the same
    start until the residual is below ``tol``; the solution is then scored
    by :func:`natural_residual` on the reference instance.  The reference is
    itself an SAA instance, so this measures SAA-to-SAA consistency.

    Returns rows ``(N, median_residual, p90_residual, nonconverged)``;
    non-converged trials are excluded from the statistics and counted.
    """
    N_list = list(N_list)
    if any(a >= b for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be increasing")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ref_seed = int(np.random.SeedSequence([seed, 0]).generate_state(1)[0])
    ref = build_instance(shape, N_ref, ref_seed)
    x0, y0 = start_point(shape, seed)

    def run(N):
        if N >= N_ref:
            insts = [ref] * trials
        else:
            insts = [build_instance(shape, N, int(np.random.SeedSequence([seed, 1, N, k])
                                                  .generate_state(1)[0]))
                     for k in range(trials)]
        xs, ys, _, _, ok = projected_gda_batch(insts, x0, y0, step, tol, max_iter)
        scores = [natural_residual(ref, xs[k], ys[k]) for k in range(trials) if ok[k]]
        bad = int(np.sum(~ok))
        med = float(np.median(scores)) if scores else float("nan")
        p90 = float(np.percentile(scores, 90)) if scores else float("nan")
        return (N, med, p90, bad)

    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        return list(pool.map(run, N_list))


def convergence_csv(rows):
    lines = [CSV_HEADER]
    for N, med, p90, bad in rows:
        lines.append(f"{N},{med:.12e},{p90:.12e},{bad}")
    return "\n".join(lines) + "\n"


