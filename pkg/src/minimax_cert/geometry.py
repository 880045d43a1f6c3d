"""Polyhedral feasible sets and the cones attached to them.

A set is either a finite box ``lower <= z <= upper`` or a polytope
``{z : A z <= b}``.  Boxes are handled with per-coordinate sign rules; for
the general case every query goes through the row description, with the box
rows ordered as ``[I; -I]`` (upper-bound rows first).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TOL_ACTIVE = 1e-9
TOL_ORTH = 1e-8
TOL_KKT = 1e-7
TOL_FEAS = 1e-9

POLISH_EVERY = 25
STALL_ITER = 500
LINE_SEARCH_STEPS = tuple(10.0 ** -k for k in range(1, 13))


class InfeasiblePointError(ValueError):
    """Raised when a query point lies outside its feasible set."""


def nnls(B, g, max_iter=10_000, tol=1e-14):
    """Solve ``min ||B.T @ alpha - g||`` subject to ``alpha >= 0``.

    Projected gradient with Armijo backtracking.  Every few iterations a
    least-squares solve on the current support is tried and accepted once it
    satisfies the optimality conditions.  If the iteration stalls (repeated
    or linearly dependent generators make the optimal multipliers
    non-unique, and projected gradient then crawls) an active-set
    Lawson-Hanson pass finishes the job.

    Parameters
    ----------
    B : ndarray, shape (k, n)
        Generator rows.
    g : ndarray, shape (n,)
        Target vector.

    Returns
    -------
    alpha : ndarray, shape (k,)
    residual : float
        ``||B.T @ alpha - g||``.
    converged : bool
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    g = np.asarray(g, dtype=float)
    k = B.shape[0]
    if k == 0:
        return np.zeros(0), float(np.linalg.norm(g)), True

    Q = B @ B.T
    c = B @ g
    scale = max(1.0, float(np.linalg.norm(c)))

    def objective(a):
        r = B.T @ a - g
        return 0.5 * float(r @ r)

    alpha = np.zeros(k)
    step = 1.0 / max(float(np.linalg.norm(Q, 2)), 1e-300)
    fval = objective(alpha)
    converged = False
    for it in range(max_iter):
        grad = Q @ alpha - c
        pg = alpha - np.maximum(alpha - grad, 0.0)
        if np.linalg.norm(pg) <= tol * scale:
            converged = True
            break
        if it % POLISH_EVERY == POLISH_EVERY - 1:
            # once the support is identified, least squares on it is exact
            cand = _polish(B, g, alpha)
            if _kkt_gap(Q, c, cand) <= 1e-12 * scale:
                alpha, converged = cand, True
                break
        if it == STALL_ITER:
            cand = _lawson_hanson(B, g)
            if _kkt_gap(Q, c, cand) <= 1e-10 * scale:
                alpha, converged = cand, True
                break
        t = step
        while True:
            trial = np.maximum(alpha - t * grad, 0.0)
            ftrial = objective(trial)
            if ftrial <= fval + 1e-4 * float(grad @ (trial - alpha)) or t < 1e-20:
                break
            t *= 0.5
        # a larger next trial step lets the backtracking adapt upward again
        step = 2.0 * t
        alpha, fval = trial, ftrial

    alpha = _polish(B, g, alpha)
    residual = float(np.linalg.norm(B.T @ alpha - g))
    if not converged:
        converged = _kkt_gap(Q, c, alpha) <= 1e-10 * scale
    return alpha, residual, bool(converged)


def _kkt_gap(Q, c, alpha):
    grad = Q @ alpha - c
    return float(np.linalg.norm(alpha - np.maximum(alpha - grad, 0.0)))


def _lawson_hanson(B, g, max_iter=3000):
    M = B.T
    k = M.shape[1]
    alpha = np.zeros(k)
    passive = np.zeros(k, dtype=bool)
    tol = 1e-12 * max(1.0, float(np.abs(M).max()) * float(np.linalg.norm(g)))
    for _ in range(max_iter):
        w = M.T @ (g - M @ alpha)
        w[passive] = -np.inf
        j = int(np.argmax(w))
        if w[j] <= tol:
            break
        passive[j] = True
        for _ in range(max_iter):
            s = np.zeros(k)
            s[passive], *_ = np.linalg.lstsq(M[:, passive], g, rcond=None)
            if np.all(s[passive] > 0):
                alpha = s
                break
            bad = passive & (s <= 0)
            step = np.min(alpha[bad] / (alpha[bad] - s[bad]))
            alpha = alpha + step * (s - alpha)
            passive &= alpha > tol
            alpha[~passive] = 0.0
    return alpha


def _polish(B, g, alpha):
    # Least squares on the support; keep it only if it stays nonnegative and
    # does not increase the residual.
    support = alpha > 0
    if not support.any():
        return alpha
    sol, *_ = np.linalg.lstsq(B[support].T, g, rcond=None)
    if np.all(sol >= 0):
        cand = np.zeros_like(alpha)
        cand[support] = sol
        if np.linalg.norm(B.T @ cand - g) <= np.linalg.norm(B.T @ alpha - g) + 1e-15:
            return cand
    return alpha


@dataclass(frozen=True)
class PolyhedralSet:
    """A box or a halfspace polytope.

    Build with :meth:`box` or :meth:`halfspaces`; halfspace sets are checked
    for nonemptiness by a phase-1 linear program.
    """

    kind: str
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    A_: np.ndarray | None = None
    b_: np.ndarray | None = None
    _feasible_point: np.ndarray | None = field(default=None, compare=False, repr=False)

    @classmethod
    def box(cls, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("box bounds must be finite")
        if np.any(lower >= upper):
            raise ValueError("box requires lower < upper componentwise")
        return cls("box", lower=lower, upper=upper)

    @classmethod
    def halfspaces(cls, A, b):
        from scipy.optimize import linprog

        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b have inconsistent row counts")
        res = linprog(np.zeros(A.shape[1]), A_ub=A, b_ub=b,
                      bounds=[(None, None)] * A.shape[1], method="highs")
        if res.status != 0:
            raise ValueError("halfspace set is empty (phase-1 infeasible)")
        return cls("halfspaces", A_=A, b_=b, _feasible_point=np.asarray(res.x))

    @classmethod
    def from_json(cls, obj):
        if "box" in obj:
            return cls.box(obj["box"]["lower"], obj["box"]["upper"])
        if "A" in obj and "b" in obj:
            return cls.halfspaces(obj["A"], obj["b"])
        raise ValueError("polyhedron JSON needs a 'box' entry or 'A' and 'b'")

    def to_json(self):
        if self.kind == "box":
            return {"box": {"lower": self.lower.tolist(), "upper": self.upper.tolist()}}
        return {"A": self.A_.tolist(), "b": self.b_.tolist()}

    @property
    def dim(self):
        return self.lower.size if self.kind == "box" else self.A_.shape[1]

    @property
    def A(self):
        if self.kind == "box":
            eye = np.eye(self.dim)
            return np.vstack([eye, -eye])
        return self.A_

    @property
    def b(self):
        if self.kind == "box":
            return np.concatenate([self.upper, -self.lower])
        return self.b_

    def bounding_box(self):
        """Finite coordinate bounds enclosing the set."""
        if self.kind == "box":
            return self.lower.copy(), self.upper.copy()
        from scipy.optimize import linprog

        lo, hi = np.empty(self.dim), np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            for sign, out in ((1.0, lo), (-1.0, hi)):
                res = linprog(sign * e, A_ub=self.A_, b_ub=self.b_,
                              bounds=[(None, None)] * self.dim, method="highs")
                if res.status != 0:
                    raise ValueError("set is unbounded; grid oracles need bounded sets")
                out[i] = res.x[i]
        return lo, hi

    def diameter(self):
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def contains(self, z, tol=TOL_FEAS):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            return False
        if self.kind == "box":
            return bool(np.all(z >= self.lower - tol) and np.all(z <= self.upper + tol))
        return bool(np.all(self.A_ @ z <= self.b_ + tol))

    def project(self, z, iters=2000):
        """Euclidean projection onto the set (Dykstra's method for polytopes)."""
        z = np.asarray(z, dtype=float)
        if self.kind == "box":
            return np.clip(z, self.lower, self.upper)
        A, b = self.A_, self.b_
        x = z.copy()
        incr = np.zeros((A.shape[0], z.size))
        norms = np.einsum("ij,ij->i", A, A)
        for _ in range(iters):
            x_prev = x.copy()
            for i in range(A.shape[0]):
                y = x + incr[i]
                viol = A[i] @ y - b[i]
                x_new = y - (viol / norms[i]) * A[i] if viol > 0 else y
                incr[i] = y - x_new
                x = x_new
            if np.linalg.norm(x - x_prev) <= 1e-15 * (1 + np.linalg.norm(x)):
                break
        return x


def _check_point(pset, z):
    z = np.asarray(z, dtype=float)
    if z.shape != (pset.dim,):
        raise ValueError(f"expected a point of dimension {pset.dim}, got shape {z.shape}")
    if not pset.contains(z):
        raise InfeasiblePointError(f"point {z.tolist()} is outside the feasible set")
    return z


def _check_direction(pset, v):
    v = np.asarray(v, dtype=float)
    if v.shape != (pset.dim,):
        raise ValueError(f"direction has shape {v.shape}, expected ({pset.dim},)")
    return v


def active_set(pset, z, tol_active=TOL_ACTIVE):
    """Indices of rows of ``A z <= b`` that hold with equality (within tolerance).

    For boxes the rows are ``[I; -I]``, so index ``i`` means coordinate ``i``
    sits at its upper bound and ``n + i`` that it sits at its lower bound.
    """
    z = _check_point(pset, z)
    slack = pset.b - pset.A @ z
    return [int(i) for i in np.flatnonzero(slack <= tol_active)]


def tangent_cone_membership(pset, z, v, tol_active=TOL_ACTIVE, tol_orth=TOL_ORTH):
    z = _check_point(pset, z)
    v = _check_direction(pset, v)
    vnorm = float(np.linalg.norm(v))
    if vnorm == 0.0:
        return True
    if pset.kind == "box":
        at_lo = z <= pset.lower + tol_active
        at_hi = z >= pset.upper - tol_active
        slop = tol_orth * vnorm
        return bool(np.all(v[at_lo] >= -slop) and np.all(v[at_hi] <= slop))
    act = active_set(pset, z, tol_active)
    if not act:
        return True
    rows = pset.A_[act]
    return bool(np.all(rows @ v <= tol_orth * np.linalg.norm(rows, axis=1) * vnorm))


def t_circle_membership(pset, z, v, tol_active=TOL_ACTIVE, tol_orth=TOL_ORTH):
    """Is ``z + lam * v`` feasible for some ``lam > 0``?

    For polyhedral sets this cone coincides with the tangent cone, so the
    algebraic test is used; :func:`t_circle_linesearch` is the independent
    check.
    """
    return tangent_cone_membership(pset, z, v, tol_active, tol_orth)


def t_circle_linesearch(pset, z, v, steps=LINE_SEARCH_STEPS, tol_orth=TOL_ORTH):
    """Decide ``z + lam v in set`` by trying ``lam`` in ``steps``.

    The slack is updated as ``s - lam * A v`` so that ``z`` never gets
    re-rounded; a violation up to ``tol_orth * lam * |A_i| |v|`` is tolerated.
    """
    z = _check_point(pset, z)
    v = _check_direction(pset, v)
    vnorm = float(np.linalg.norm(v))
    if vnorm == 0.0:
        return True
    A, b = pset.A, pset.b
    slack = b - A @ z
    Av = A @ v
    slop = tol_orth * np.linalg.norm(A, axis=1) * vnorm
    for lam in steps:
        if np.all(slack - lam * Av >= -lam * slop):
            return True
    return False


@dataclass
class NormalConeResult:
    member: bool
    multipliers: np.ndarray
    residual: float
    residual_vector: np.ndarray
    converged: bool = True

    def __bool__(self):
        return self.member


def normal_cone_membership(pset, z, g, tol_active=TOL_ACTIVE, tol_kkt=TOL_KKT):
    """Test ``g in N(z)``, i.e. ``g = sum_i alpha_i A_i`` over active rows, ``alpha >= 0``.

    Returns a :class:`NormalConeResult` (truthy when ``g`` is a member) whose
    ``multipliers`` has one entry per row of the set, zero on inactive rows.
    ``residual_vector`` is ``g`` minus its projection onto the normal cone,
    which is the projection of ``g`` onto the tangent cone.
    """
    z = _check_point(pset, z)
    g = _check_direction(pset, g)
    p = pset.A.shape[0]
    alpha = np.zeros(p)
    converged = True
    if pset.kind == "box":
        n = pset.dim
        at_hi = z >= pset.upper - tol_active
        at_lo = z <= pset.lower + tol_active
        alpha[:n] = np.where(at_hi, np.maximum(g, 0.0), 0.0)
        alpha[n:] = np.where(at_lo, np.maximum(-g, 0.0), 0.0)
        r = g - alpha[:n] + alpha[n:]
    else:
        act = active_set(pset, z, tol_active)
        if act:
            a, _, converged = nnls(pset.A_[act], g)
            alpha[act] = a
        r = g - pset.A_.T @ alpha
    res = float(np.linalg.norm(r))
    member = res <= tol_kkt * (1.0 + float(np.linalg.norm(g)))
    return NormalConeResult(bool(member), alpha, res, r, bool(converged))


def project_tangent(pset, z, v, tol_active=TOL_ACTIVE):
    """Euclidean projection of ``v`` onto the tangent cone at ``z``."""
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    if pset.kind == "box":
        out = v.copy()
        at_lo = z <= pset.lower + tol_active
        at_hi = z >= pset.upper - tol_active
        out[at_lo] = np.maximum(out[at_lo], 0.0)
        out[at_hi] = np.minimum(out[at_hi], 0.0)
        return out
    slack = pset.b_ - pset.A_ @ z
    act = np.flatnonzero(slack <= tol_active)
    if act.size == 0:
        return v.copy()
    # Moreau: v = proj_T(v) + proj_N(v), and N is generated by the active rows.
    a, _, _ = nnls(pset.A_[act], v)
    out = v - pset.A_[act].T @ a
    # pure cancellation noise means v lies in the normal cone
    if np.linalg.norm(out) <= 1e-12 * np.linalg.norm(v):
        out[:] = 0.0
    return out


def _null_basis(G, n):
    """Orthonormal basis (columns) of the vectors orthogonal to the rows of ``G``."""
    G = np.atleast_2d(np.asarray(G, dtype=float)).reshape(-1, n)
    # rows this short satisfy the orthogonality test for any unit direction
    G = G[np.linalg.norm(G, axis=1) > TOL_ORTH]
    if G.size == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(G, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * s[0]))
    return vt[rank:].T


def gamma_membership(pset, z, v, grad, tol_active=TOL_ACTIVE, tol_orth=TOL_ORTH):
    """Membership in ``{v in T(z) : <v, grad> = 0}`` for one or several gradients."""
    v = np.asarray(v, dtype=float)
    G = np.atleast_2d(np.asarray(grad, dtype=float)).reshape(-1, v.size)
    vnorm = float(np.linalg.norm(v))
    for gi in G:
        if abs(float(v @ gi)) > tol_orth * (1.0 + vnorm * float(np.linalg.norm(gi))):
            return False
    return tangent_cone_membership(pset, z, v, tol_active, tol_orth)


def sample_cone_directions(pset, z, count, seed=0, mode="tangent", grad=None,
                           tol_active=TOL_ACTIVE, tol_orth=TOL_ORTH):
    """Seeded unit directions inside the tangent cone (or a Gamma cone) at ``z``.

    Admissible coordinate rays ``+-e_i`` come first, then random members
    obtained by projecting Gaussian draws onto the cone.  ``mode="gamma"``
    projects onto the tangent cone intersected with the orthogonal
    complement of the rows of ``grad``; every returned direction is
    re-checked by the membership tests.

    Returns an array of shape ``(k, n)`` with ``k <= count``; ``k == 0``
    means the cone is ``{0}`` as far as sampling can tell.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if mode not in ("tangent", "t_circle", "gamma"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    z = _check_point(pset, z)
    n = pset.dim
    if mode == "gamma":
        # The Gamma cone is the polyhedral cone {N u : (A_act N) u <= 0} for an
        # orthonormal null-space basis N, so projecting onto it is one NNLS.
        N = _null_basis(grad, n)
        if N.shape[1] == 0:
            return np.zeros((0, n))
        R = pset.A[active_set(pset, z, tol_active)] @ N

        def project(w):
            u = N.T @ w
            if len(R):
                a, _, _ = nnls(R, u)
                u = u - R.T @ a
            return N @ u
    else:
        def project(w):
            return project_tangent(pset, z, w, tol_active)

    def admit(v):
        v = project(v)
        nv = float(np.linalg.norm(v))
        if nv <= 1e-12:
            return None
        v = v / nv
        if mode == "gamma":
            ok = gamma_membership(pset, z, v, grad, tol_active, tol_orth)
        else:
            ok = tangent_cone_membership(pset, z, v, tol_active, tol_orth)
        return v if ok else None

    out = []
    for i in range(n):
        for sign in (1.0, -1.0):
            if len(out) >= count:
                break
            e = np.zeros(n)
            e[i] = sign
            if tangent_cone_membership(pset, z, e, tol_active, tol_orth):
                v = admit(e)
                if v is not None:
                    out.append(v)

    rng = np.random.default_rng(seed)
    attempts = 0
    while len(out) < count and attempts < 50 * count:
        if not out and attempts >= 10 * count:
            break  # nothing admitted so far: the cone is {0} for sampling purposes
        attempts += 1
        v = admit(rng.standard_normal(n))
        if v is not None:
            out.append(v)
    return np.array(out).reshape(-1, n)
