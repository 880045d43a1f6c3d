"""Acceptance criteria, one test each, with one PASS/FAIL line per criterion."""

import math
import subprocess
import sys
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from helpers import derivative_property_violations, random_box_triple, random_polytope_triple
from minimax_cert import deriv, gan
from minimax_cert.certify import (
    check_d_stationarity,
    check_first_order_smooth,
    check_second_order_smooth,
    classify_point,
    maxmin_gap,
    search_global_minimax,
    stationarity_scan,
)
from minimax_cert.geometry import (
    active_set,
    normal_cone_membership,
    project_tangent,
    sample_cone_directions,
    t_circle_linesearch,
    t_circle_membership,
    tangent_cone_membership,
)
from minimax_cert.problems import (
    REGISTRY,
    Point,
    build_example,
    envelope_phi,
    relu_net_directional,
    relu_net_value,
    unpack_relu_net,
)

ORIGIN = Point([0.0], [0.0])


def verdict(number, title, checks):
    """Print and record one line, then fail with the failing checks listed."""
    failed = [name for name, ok in checks if not ok]
    status = "FAIL" if failed else "PASS"
    detail = "; ".join(f"{name}={'ok' if ok else 'FAILED'}" for name, ok in checks)
    line = f"criterion {number}: {status}  {title}  [{detail}]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert not failed, f"criterion {number} failed checks: {failed}"


def test_criterion_01_quadratic_global_minimax_and_gap():
    t0 = time.perf_counter()
    prob = build_example("quadratic-5xy")
    cands = search_global_minimax(prob)
    near = len(cands) > 0 and all(np.hypot(c.x[0], c.y[0]) <= 1e-3 for c in cands)
    labels = set(classify_point(prob, ORIGIN).labels)
    gaps = {d: maxmin_gap(prob, d) for d in (1.0, 0.5, 0.1)}
    elapsed = time.perf_counter() - t0
    verdict(1, "quadratic-5xy reproduction", [
        ("search near origin", near),
        ("global+local minimax", {"global-minimax", "local-minimax"} <= labels),
        ("no saddle labels", not {"saddle", "local-saddle"} & labels),
        ("gap = -delta^2", all(abs(g + d * d) <= 1e-3 for d, g in gaps.items())),
        (f"runtime {elapsed:.2f}s < 5s", elapsed < 5.0),
    ])


def test_criterion_02_envelope_values():
    q = build_example("quadratic-5xy")

    def phi_ref(x):
        return 21 / 4 * x * x if abs(x) <= 0.4 else -x * x + 5 * x - 1

    quartic = build_example("quartic-4x2y2")
    err_q = max(abs(envelope_phi(q, [x]) - phi_ref(x)) for x in (0.0, 0.2, 0.4, 0.7, 1.0))
    err_4 = max(abs(envelope_phi(quartic, [x]) - 3 * x ** 4) for x in (0.0, 0.3, 0.5, 0.7))
    verdict(2, "envelope closed forms", [
        (f"quadratic-5xy err {err_q:.1e}", err_q <= 1e-6),
        (f"quartic err {err_4:.1e}", err_4 <= 1e-6),
    ])


def test_criterion_03_xy_cos_trichotomy():
    t0 = time.perf_counter()
    prob = build_example("xy-cos")
    checks = []
    for y in (math.pi, -math.pi):
        pt = Point([0.0], [y])
        labels = classify_point(prob, pt).labels
        res, _ = check_first_order_smooth(prob, pt)
        failing = [r for r in res.values() if r.status == "fail"]
        worst = max((r.residual for r in failing), default=0.0)
        checks.append((f"(0,{y:+.2f}) global minimax", "global-minimax" in labels))
        checks.append((f"(0,{y:+.2f}) fails gs2 residual {worst:.4f}", worst >= math.pi - 1e-3))
    res, _ = check_first_order_smooth(prob, ORIGIN)
    checks.append(("(0,0) passes gs2", all(r.status == "pass" for r in res.values())))
    hits = stationarity_scan(prob, nodes=201)
    checks.append(("(0,0) unique on 201^2 scan",
                   hits.shape == (1, 2) and np.allclose(hits[0], [0.0, 0.0])))
    checks.append(("(0,0) not local minimax",
                   "local-minimax" not in classify_point(prob, ORIGIN).labels))
    elapsed = time.perf_counter() - t0
    checks.append((f"runtime {elapsed:.2f}s < 10s", elapsed < 10.0))
    verdict(3, "xy-cos stationarity versus minimax", checks)


def test_criterion_04_nonsmooth_935_suite():
    prob = build_example("nonsmooth-935")
    fx = lambda v: prob.eval(v, np.zeros(1))
    fy = lambda w: prob.eval(np.zeros(1), w)
    V = sample_cone_directions(prob.X, [0.0], 64, seed=0)
    W = sample_cone_directions(prob.Y, [0.0], 64, seed=1)
    # the unit directions in one dimension are +-1; scaled copies exercise homogeneity too
    scales = np.linspace(0.25, 2.0, 64)[:, None]
    V, W = V * scales, W * scales
    clarke = max(max(abs(deriv.clarke_directional(fx, [0.0], v).value) for v in V),
                 max(abs(deriv.clarke_directional(fy, [0.0], w).value) for w in W))
    sub_y = max(abs(deriv.subderivative(fy, [0.0], w).value) for w in W)
    gen2 = min(deriv.generalized_second(fx, [0.0], v, v).value for v in V)
    sub2_y = max(abs(deriv.second_subderivative(fy, [0.0], w).value) for w in W)
    res, _ = check_d_stationarity(prob, ORIGIN)
    conds = ("NonS1st-1", "NonS1st-2", "NonS2ed-1", "NonS2ed-2")
    verdict(4, "nonsmooth-935 d-stationarity", [
        (f"{len(V)}+{len(W)} directions", len(V) >= 64 and len(W) >= 64),
        (f"|clarke| {clarke:.1e}", clarke <= 1e-3),
        (f"|subderivative y| {sub_y:.1e}", sub_y <= 1e-3),
        (f"generalized second {gen2:.1e}", gen2 >= -1e-3),
        (f"|second subderivative y| {sub2_y:.1e}", sub2_y <= 1e-3),
        ("d-stationarity verdicts", all(res[c].status == "pass" for c in conds)),
    ])


def test_criterion_05_quartic_second_order_and_tau():
    prob = build_example("quartic-4x2y2")
    res, info = check_second_order_smooth(prob, ORIGIN)
    V, W = info["V"], info["W"]
    Hxx = prob.hess_xx(ORIGIN.x, ORIGIN.y)
    Hyy = prob.hess_yy(ORIGIN.x, ORIGIN.y)
    qx = max((abs(v @ Hxx @ v) for v in V), default=np.inf)
    qy = max((abs(w @ Hyy @ w) for w in W), default=np.inf)
    fit = classify_point(prob, ORIGIN).tau_fit
    c, p = fit if fit is not None else (None, None)
    verdict(5, "quartic-4x2y2 second order", [
        ("gs6-1 and gs6-2 pass", res["gs6-1"].status == "pass" and res["gs6-2"].status == "pass"),
        (f"Gamma sets {len(V)}/{len(W)} nonempty", len(V) > 0 and len(W) > 0),
        (f"quadratic forms {max(qx, qy):.1e}", max(qx, qy) <= 1e-8),
        (f"tau fit (c={c}, p={p}) is (2, 2)",
         fit is not None and p == 2.0 and abs(c - 2.0) <= 0.1),
    ])


def test_criterion_06_derivative_property_suite():
    checks = []
    for name in sorted(REGISTRY):
        worst = derivative_property_violations(build_example(name), count=100, seed=0)
        bad = sorted(k for k, v in worst.items() if v > 0)
        has_smooth = {"smooth-first", "smooth-second"} <= set(worst)
        checks.append((f"{name} ({len(worst)} properties)", not bad and has_smooth))
    verdict(6, "estimator properties on all fixtures, 100 probes each", checks)


def test_criterion_07_cone_geometry_suite():
    violations = {"scaling": 0, "convexity": 0, "polarity": 0, "t-circle": 0, "moreau": 0}
    for seed in range(1000):
        rng = np.random.default_rng([7, seed])
        pset, z, v = (random_polytope_triple if seed % 3 else random_box_triple)(rng)
        tangent = tangent_cone_membership(pset, z, v)
        if tangent and not all(tangent_cone_membership(pset, z, lam * v) for lam in (0.5, 2.0, 10.0)):
            violations["scaling"] += 1
        v2 = rng.integers(-3, 4, size=z.size).astype(float)
        if tangent and tangent_cone_membership(pset, z, v2) \
                and not tangent_cone_membership(pset, z, 0.5 * (v + v2)):
            violations["convexity"] += 1
        act = active_set(pset, z)
        g = pset.A[act].T @ rng.integers(0, 3, size=len(act)) if act else np.zeros(z.size)
        if not normal_cone_membership(pset, z, g) or (tangent and v @ g > 1e-8):
            violations["polarity"] += 1
        if not (t_circle_membership(pset, z, v) == t_circle_linesearch(pset, z, v) == tangent):
            violations["t-circle"] += 1
        proj = project_tangent(pset, z, v)
        if not (tangent_cone_membership(pset, z, proj, tol_orth=1e-7)
                and normal_cone_membership(pset, z, v - proj, tol_kkt=1e-6)):
            violations["moreau"] += 1
    verdict(7, "cone invariants on 1000 triples",
            [(f"{k} violations {n}", n == 0) for k, n in violations.items()])


def _kinked_configuration(rng, prob, kinks, signs):
    """Parameters with the listed hidden units exactly at their kink, and a
    direction moving each of them to the requested side."""
    shape, xi = prob.relu_shape, prob.relu_xi
    x = rng.uniform(-1, 1, prob.n)
    v = rng.standard_normal(prob.n)
    W1, _, b1, _ = unpack_relu_net(x, *shape)        # views into x and v
    dW1, _, db1, _ = unpack_relu_net(v, *shape)
    kinks = list(kinks)
    b1[kinks] = 0.0
    b1[kinks] = -(W1 @ xi + b1)[kinks]
    db1[kinks] = 0.0
    db1[kinks] = np.asarray(signs) * rng.uniform(0.1, 1.0, len(kinks)) - (dW1 @ xi + db1)[kinks]
    return x, v


def test_criterion_08_relu_directional_closed_form():
    prob = build_example("relu-net-F")
    shape, xi = prob.relu_shape, prob.relu_xi
    g = lambda w: relu_net_value(w, xi, shape)
    rng = np.random.default_rng(8)
    layouts = [((), ())] * 4 + [((i,), (s,)) for i in range(4) for s in (1, -1)] \
        + [((0, 1), (1, 1)), ((1, 2), (-1, -1)), ((2, 3), (1, -1)), ((3, 0), (-1, 1)),
           ((0, 2), (1, -1)), ((1, 3), (-1, 1)), ((0, 3), (1, 1)), ((1, 2), (-1, 1))]
    worst, at_kink, branches = 0.0, 0, set()
    for kinks, signs in layouts:
        x, v = _kinked_configuration(rng, prob, kinks, signs)
        W1, _, b1, _ = unpack_relu_net(x, *shape)
        dW1, _, db1, _ = unpack_relu_net(v, *shape)
        pre, dpre = W1 @ xi + b1, dW1 @ xi + db1
        assert np.all(pre[list(kinks)] == 0.0)
        at_kink += bool(kinks)
        branches |= {int(np.sign(dpre[i])) for i in kinks}
        est = deriv.directional(g, x, v).value
        worst = max(worst, abs(est - relu_net_directional(x, v, xi, shape)))
    verdict(8, "ReLU directional derivative versus case-split closed form", [
        (f"{len(layouts)} configurations, {at_kink} at kinks", len(layouts) == 20 and at_kink > 0),
        ("both sign branches probed", branches == {-1, 1}),
        (f"max error {worst:.1e}", worst <= 1e-6),
    ])


def test_criterion_09_gan_gradient_and_hessian():
    shape = gan.GanShape(4, 2, 2)
    inst = gan.build_instance(shape, N=256, seed=0)
    rng = np.random.default_rng(9)
    worst_grad, points = 0.0, 0
    while points < 50:
        x, y = rng.uniform(-2, 2, shape.n), rng.uniform(-2, 2, shape.m)
        if gan.kink_margin(inst, x) <= 1e-4:
            continue
        points += 1
        gx, gy = gan.saa_gradients(inst, x, y)
        z, g = np.concatenate([x, y]), np.concatenate([gx, gy])
        fd = np.empty(z.size)
        for i in range(z.size):
            e = np.zeros(z.size)
            e[i] = 1e-6
            fd[i] = (gan.saa_objective(inst, (z + e)[:shape.n], (z + e)[shape.n:])
                     - gan.saa_objective(inst, (z - e)[:shape.n], (z - e)[shape.n:])) / 2e-6
        worst_grad = max(worst_grad, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    x = rng.uniform(-1, 1, shape.n)
    while gan.kink_margin(inst, x) <= 1e-3:
        x = rng.uniform(-1, 1, shape.n)
    _, Hyy = gan.saa_hessian_blocks(inst, x, np.zeros(2))
    G = gan.generator_forward(shape, x, inst.samples.xi2)
    xi1 = inst.samples.xi1
    H_ref = -0.25 * (xi1.T @ xi1 + G.T @ G) / inst.N
    h_err = float(np.max(np.abs(Hyy - H_ref)))
    f0_err = max(abs(gan.saa_objective(inst, rng.uniform(-2, 2, shape.n), np.zeros(2))
                     + 2 * math.log(2)) for _ in range(50))
    verdict(9, "GAN gradients, H_yy closed form, f(x, 0)", [
        (f"gradient rel err {worst_grad:.1e}", worst_grad < 1e-5),
        (f"H_yy err {h_err:.1e}", h_err <= 1e-6),
        (f"f(x,0) err {f0_err:.1e}", f0_err <= 1e-12),
    ])


def test_criterion_10_gan_convergence_in_N():
    t0 = time.perf_counter()
    rows = gan.convergence_experiment(gan.GanShape(), (16, 64, 256, 1024), seed=0, trials=20)
    elapsed = time.perf_counter() - t0
    med = [r[1] for r in rows]
    summary = ", ".join(f"N={r[0]}:{r[1]:.2e}" for r in rows)
    verdict(10, f"SAA residual medians {summary}", [
        ("non-increasing", all(b <= a for a, b in zip(med, med[1:]))),
        ("N=1024 at most half of N=16", med[-1] <= 0.5 * med[0]),
        ("all trials converged", all(r[3] == 0 for r in rows)),
        (f"runtime {elapsed:.0f}s < 300s", elapsed < 300.0),
    ])


CLI_RUNS = [
    ["verify", "--problem", "quadratic-5xy", "--point", "0,0", "--order", "2"],
    ["classify", "--problem", "xy-cos", "--point", "0,3.14159265"],
    ["verify", "--problem", "xy-cos", "--point", "0,3.14159265", "--order", "1"],
    ["search", "--problem", "quadratic-5xy"],
    ["gap", "--problem", "quadratic-5xy", "--delta-ladder", "1,0.5,0.1"],
    ["verify", "--problem", "nonsmooth-935", "--point", "0,0", "--order", "2", "--nonsmooth"],
    ["verify", "--problem", "quartic-4x2y2", "--point", "0,0", "--order", "2"],
    ["gan-certify", "--params", '{"N": 16, "seed": 21}', "--order", "1"],
    ["gan-converge", "--n-list", "8,16", "--trials", "2", "--n-ref", "128"],
]


def test_criterion_11_cli_determinism(tmp_path):
    checks = []
    for argv in CLI_RUNS:
        outs, codes = [], []
        for _ in range(2):
            # fresh processes, so nothing is shared between the two runs
            path = tmp_path / "report.out"
            proc = subprocess.run([sys.executable, "-m", "minimax_cert", *argv, "--out", str(path)],
                                  capture_output=True, check=False)
            codes.append(proc.returncode)
            outs.append(path.read_bytes() if path.exists() else None)
            path.unlink(missing_ok=True)
        same = outs[0] is not None and outs[0] == outs[1] and codes[0] == codes[1]
        checks.append((" ".join(argv[:3]), same))
    verdict(11, "byte-identical CLI reports", checks)
