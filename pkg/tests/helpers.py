"""Shared generators for the test modules."""

import numpy as np

from minimax_cert.geometry import PolyhedralSet


def random_polytope_triple(rng, max_dim=3, max_rows=5):
    """An integer polytope, a feasible point with some rows tight, and an integer direction.

    Integer data keep every membership decision exact, so the tolerance
    bands never matter.
    """
    n = int(rng.integers(1, max_dim + 1))
    p = int(rng.integers(1, max_rows + 1))
    A = rng.integers(-3, 4, size=(p, n)).astype(float)
    A[np.all(A == 0, axis=1), 0] = 1.0
    z = rng.integers(-2, 3, size=n).astype(float)
    slack = np.where(rng.random(p) < 0.5, 0.0, rng.integers(1, 4, size=p))
    b = A @ z + slack
    v = rng.integers(-3, 4, size=n).astype(float)
    return PolyhedralSet.halfspaces(A, b), z, v


def random_box_triple(rng, max_dim=3):
    n = int(rng.integers(1, max_dim + 1))
    lo = -rng.integers(1, 3, size=n).astype(float)
    hi = rng.integers(1, 3, size=n).astype(float)
    z = np.array([rng.choice([l, 0.0, h]) for l, h in zip(lo, hi)])
    v = rng.integers(-3, 4, size=n).astype(float)
    return PolyhedralSet.box(lo, hi), z, v


def kink_margin(problem, x):
    """Smallest |hidden pre-activation| for the ReLU fixtures, ``inf`` otherwise."""
    from minimax_cert import gan
    from minimax_cert.problems import unpack_relu_net

    if problem.name == "gan-saa":
        return gan.kink_margin(problem.instance, x)
    if problem.name == "relu-net-F":
        W1, _, b1, _ = unpack_relu_net(x, *problem.relu_shape)
        return float(np.min(np.abs(W1 @ problem.relu_xi + b1)))
    return np.inf


def probe_points(problem, count, seed, min_margin=1e-3):
    """Random joint points ``z = (x, y)`` strictly inside X x Y.

    On the ReLU fixtures the draws are kept at least ``min_margin`` away
    from every kink; closer than the finest quotient step the second-order
    estimators cannot resolve the local smoothness.
    """
    rng = np.random.default_rng(seed)
    (xl, xu), (yl, yu) = problem.X.bounding_box(), problem.Y.bounding_box()
    out = []
    while len(out) < count:
        x = rng.uniform(xl + 0.01 * (xu - xl), xu - 0.01 * (xu - xl))
        y = rng.uniform(yl + 0.01 * (yu - yl), yu - 0.01 * (yu - yl))
        if kink_margin(problem, x) >= min_margin:
            out.append(np.concatenate([x, y]))
    return out


def joint_gradient(problem, z):
    n = problem.n
    return np.concatenate([problem.grad_x(z[:n], z[n:]), problem.grad_y(z[:n], z[n:])])


def relu_second_directional(x, xdot, xi, shape):
    """Second derivative of ``||W2 (W1 xi + b1)_+ + b2||^2`` along ``xdot`` off the kinks.

    Along the ray the output is ``z + t U + t^2 dW2 s`` with ``U`` the
    first-order output velocity and ``s`` the masked pre-activation slope,
    so the second derivative is ``2 |U|^2 + 4 z . (dW2 s)``.
    """
    from minimax_cert.problems import unpack_relu_net

    W1, W2, b1, b2 = unpack_relu_net(x, *shape)
    dW1, dW2, db1, db2 = unpack_relu_net(xdot, *shape)
    pre = W1 @ xi + b1
    s = (pre > 0) * (dW1 @ xi + db1)
    U = W2 @ s + dW2 @ np.maximum(pre, 0.0) + db2
    z = W2 @ np.maximum(pre, 0.0) + b2
    return float(2.0 * U @ U + 4.0 * z @ (dW2 @ s))


def analytic_directionals(problem, z, v):
    """Exact ``(grad . v, v' H v)`` at a point where the problem is C^2, or ``None``.

    Smooth fixtures use their analytic gradients (Hessian by differences of
    them) and nonsmooth-935 its hand-derived derivatives; the ReLU network
    uses its closed forms and the GAN its analytic gradients, both valid
    only at the kink-free probe points.
    """
    from minimax_cert import deriv
    from minimax_cert.problems import relu_net_directional

    n = problem.n
    if problem.smoothness == "smooth-C2" or problem.name == "gan-saa":
        first = joint_gradient(problem, z) @ v
        if problem.name == "gan-saa":
            h = 1e-5
            dg = joint_gradient(problem, z + h * v) - joint_gradient(problem, z - h * v)
            second = dg @ v / (2 * h)
        else:
            H = deriv.fd_hessian(lambda w: joint_gradient(problem, w), z, 1e-5)
            second = v @ H @ v
        return float(first), float(second)
    if problem.name == "nonsmooth-935":
        # -|x|^9 + 0.6 |x|^3 |y|^3 - |y|^5 is C^2 even though it is not analytic at 0
        x, y = z
        ax, ay = abs(x), abs(y)
        grad = np.array([-9 * x * ax ** 7 + 1.8 * x * ax * ay ** 3,
                         1.8 * ax ** 3 * y * ay - 5 * y * ay ** 3])
        H = np.array([[-72 * ax ** 7 + 3.6 * ax * ay ** 3, 5.4 * x * ax * y * ay],
                      [5.4 * x * ax * y * ay, 3.6 * ax ** 3 * ay - 20 * ay ** 3]])
        return float(grad @ v), float(v @ H @ v)
    if problem.name == "relu-net-F":
        x, y, vx, vy = z[:n], z[n:], v[:n], v[n:]
        shape, xi = problem.relu_shape, problem.relu_xi
        first = relu_net_directional(x, vx, xi, shape) - 2.0 * y @ vy
        second = relu_second_directional(x, vx, xi, shape) - 2.0 * vy @ vy
        return float(first), float(second)
    return None


def derivative_property_violations(problem, count=100, seed=0):
    """Worst normalized violation of each estimator property over random probes.

    Each entry is ``<= 0`` when the property holds at its tolerance:
    degree-1 homogeneity 1e-6, degree-2 homogeneity 1e-5, Clarke over
    directional 1e-8, g°° over the second directional 1e-5, and wherever
    :func:`analytic_directionals` applies, agreement with the exact first
    and second directional derivatives to 1e-5 (all relative, as
    ``tol * (1 + |ref|)``).
    """
    from minimax_cert import deriv

    g = deriv.joint(problem)
    rng = np.random.default_rng(seed + 1)
    worst = {}

    def record(key, err, tol, ref):
        worst[key] = max(worst.get(key, -np.inf), err - tol * (1.0 + abs(ref)))

    for z in probe_points(problem, count, seed):
        v = rng.standard_normal(z.size)
        v /= np.linalg.norm(v)
        d1 = deriv.subderivative(g, z, v).value
        d2 = deriv.second_subderivative(g, z, v).value
        for lam in (0.5, 2.0):
            record("homogeneity-1", abs(deriv.subderivative(g, z, lam * v).value - lam * d1),
                   1e-6, lam * d1)
            record("homogeneity-2",
                   abs(deriv.second_subderivative(g, z, lam * v).value - lam ** 2 * d2),
                   1e-5, lam ** 2 * d2)
        dd = deriv.directional(g, z, v).value
        cl = deriv.clarke_directional(g, z, v).value
        record("clarke>=directional", dd - cl, 1e-8, dd)
        sd = deriv.second_directional(g, z, v).value
        gs = deriv.generalized_second(g, z, v, v).value
        record("g°°>=second-directional", sd - gs, 1e-5, sd)
        exact = analytic_directionals(problem, z, v)
        if exact is not None:
            exact1, exact2 = exact
            for val in (dd, cl, d1):
                record("smooth-first", abs(val - exact1), 1e-5, exact1)
            for val in (sd, gs, d2):
                record("smooth-second", abs(val - exact2), 1e-5, exact2)
    return worst
