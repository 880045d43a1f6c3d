"""Command-line interface: certification, classification, search and the GAN experiment.

Exit codes: 0 success, 1 a checked condition failed (or nothing to report),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import certify, gan
from .deriv import QuotientScheme
from .geometry import InfeasiblePointError
from .problems import REGISTRY, GridSpec, Point, UnknownProblemError, build_example
from .report import canonical_json

VERBS = ("verify", "classify", "search", "gap", "gan-build", "gan-certify", "gan-converge",
         "examples")


class UsageError(Exception):
    pass


def parse_point(text, n, m):
    """``"x1,..,xn;y1,..,ym"`` or a flat comma list split after ``n`` entries."""
    try:
        if ";" in text:
            xs, ys = text.split(";", 1)
            x = [float(v) for v in xs.split(",") if v.strip()]
            y = [float(v) for v in ys.split(",") if v.strip()]
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
            x, y = vals[:n], vals[n:]
    except ValueError as exc:
        raise UsageError(f"malformed point {text!r}: {exc}") from None
    if len(x) != n or len(y) != m:
        raise UsageError(f"point {text!r} has {len(x)}+{len(y)} entries, problem needs {n}+{m}")
    try:
        return Point(np.array(x), np.array(y))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _json_arg(text, what):
    if text is None:
        return None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--{what} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"--{what} must be a JSON object")
    return obj


def _floats(text, what):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{what} must be a comma-separated list of numbers") from None
    if not vals or any(v <= 0 for v in vals):
        raise UsageError(f"--{what} needs positive entries")
    return vals


def _problem(args):
    try:
        return build_example(args.problem, _json_arg(args.params, "params"))
    except UnknownProblemError as exc:
        raise UsageError(exc.args[0]) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _scheme(args):
    obj = _json_arg(args.scheme, "scheme")
    if obj is None:
        return QuotientScheme(seed=args.seed)
    try:
        return QuotientScheme.from_json({"seed": args.seed, **obj})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad --scheme: {exc}") from None


def _grid(args):
    if args.grid is None:
        return GridSpec()
    if args.grid < 3:
        raise UsageError("--grid must be >= 3")
    return GridSpec(nodes=args.grid)


def _config(args, **extra):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "json") and v is not None}
    cfg.update(extra)
    return cfg


def _emit(args, payload):
    text = canonical_json(payload)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.json or not args.out:
        sys.stdout.write(text)


def _require_point(args, problem):
    if args.point is None:
        raise UsageError("--point is required")
    point = parse_point(args.point, problem.n, problem.m)
    try:
        problem.check_point(point)
    except InfeasiblePointError as exc:
        raise UsageError(str(exc)) from None
    return point


def cmd_verify(args):
    problem = _problem(args)
    point = _require_point(args, problem)
    scheme = _scheme(args)
    nonsmooth = True if args.nonsmooth else None
    deltas = tuple(_floats(args.delta_ladder, "delta-ladder")) if args.delta_ladder \
        else certify.GS6_DELTAS
    rep = certify.verify_point(problem, point, order=args.order, nonsmooth=nonsmooth,
                               scheme=scheme, seed=args.seed, delta_list=deltas)
    _emit(args, {"config": _config(args, scheme=scheme.to_json()), "report": rep})
    return 1 if rep.failed else 0


def _classify(problem, point, args, grid, ladder):
    return certify.classify_point(problem, point, ladder=ladder, grid=grid,
                                  scheme=_scheme(args), seed=args.seed)


def cmd_classify(args):
    problem = _problem(args)
    point = _require_point(args, problem)
    grid = _grid(args)
    ladder = tuple(_floats(args.delta_ladder, "delta-ladder")) if args.delta_ladder \
        else certify.DELTA_LADDER
    try:
        cls = _classify(problem, point, args, grid, ladder)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(args, {"config": _config(args, grid_nodes=grid.nodes, delta_ladder=list(ladder)),
                 "classification": cls})
    return 0 if cls.labels != ["none"] else 1


def cmd_search(args):
    problem = _problem(args)
    grid = _grid(args)
    ladder = tuple(_floats(args.delta_ladder, "delta-ladder")) if args.delta_ladder \
        else certify.DELTA_LADDER
    try:
        cands = certify.search_global_minimax(problem, grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = [{"point": c, "classification": _classify(problem, c, args, grid, ladder)}
           for c in cands]
    _emit(args, {"config": _config(args, grid_nodes=grid.nodes), "candidates": out})
    return 0 if out else 1


def cmd_gap(args):
    problem = _problem(args)
    center = _require_point(args, problem) if args.point else None
    deltas = _floats(args.delta_ladder, "delta-ladder") if args.delta_ladder else [1.0]
    nodes = args.grid or 401
    try:
        gaps = [{"delta": d, "gap": certify.maxmin_gap(problem, d, center, nodes)} for d in deltas]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(args, {"config": _config(args), "gaps": gaps})
    return 0


def _gan_instance(args):
    params = _json_arg(args.params, "params") or {}
    if args.instance:
        try:
            return gan.load_instance(args.instance)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read instance {args.instance!r}: {exc}") from None
    try:
        return gan.gan_problem_from_params(params).instance
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _instance_summary(inst):
    return {"shape": inst.shape.to_json(), "n": inst.shape.n, "m": inst.shape.m,
            "samples": inst.samples.descriptor(), "X": inst.X.to_json(), "Y": inst.Y.to_json()}


def cmd_gan_build(args):
    inst = _gan_instance(args)
    if args.out:
        gan.save_instance(inst, args.out)
    sys.stdout.write(canonical_json({"config": _config(args), "instance": _instance_summary(inst)}))
    return 0


def cmd_gan_certify(args):
    inst = _gan_instance(args)
    if args.point:
        point = parse_point(args.point, inst.shape.n, inst.shape.m)
        solver = None
    else:
        x0, y0 = gan.start_point(inst.shape, args.seed)
        x, y, res, it, ok = gan.projected_gda(inst, x0, y0)
        point = Point(x, y)
        solver = {"residual": res, "iterations": it, "converged": ok}
    try:
        rep = gan.certify_gan_point(inst, point, order=args.order, seed=args.seed)
    except (gan.KinkProximityError, gan.DegenerateHiddenUnitError, InfeasiblePointError) as exc:
        raise UsageError(str(exc)) from None
    _emit(args, {"config": _config(args), "solver": solver, "report": rep})
    return 1 if rep.failed else 0


def cmd_gan_converge(args):
    params = _json_arg(args.params, "params") or {}
    shape = gan.GanShape(int(params.get("s", 4)), int(params.get("s1", 2)),
                         int(params.get("s2", 2)))
    N_list = [int(v) for v in _floats(args.n_list, "n-list")]
    rows = gan.convergence_experiment(shape, N_list, args.seed, args.trials, args.n_ref)
    text = gan.convergence_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 1 if any(r[3] == args.trials for r in rows) else 0


def examples_manifest():
    """One entry per registered example: sets, smoothness tag and asserted facts."""
    out = []
    for name in REGISTRY:
        prob = build_example(name)
        out.append({"id": name, "n": prob.n, "m": prob.m, "X": prob.X.to_json(),
                    "Y": prob.Y.to_json(), "smoothness": prob.smoothness,
                    "facts": list(prob.facts)})
    return out


def cmd_examples(args):
    entries = examples_manifest()
    if args.json:
        sys.stdout.write(canonical_json({"examples": entries}))
    else:
        for e in entries:
            print(f"{e['id']}  n={e['n']} m={e['m']}  {e['smoothness']}")
            for fact in e["facts"]:
                print(f"    - {fact}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="minimax-cert", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, point=True, problem=False):
        if problem:
            p.add_argument("--problem")
        if point:
            p.add_argument("--point")
        p.add_argument("--params", help="JSON object of problem parameters")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        p.add_argument("--json", action="store_true")

    for verb, func in (("verify", cmd_verify), ("classify", cmd_classify),
                       ("search", cmd_search), ("gap", cmd_gap)):
        p = sub.add_parser(verb)
        common(p, problem=True)
        p.set_defaults(func=func)
        p.add_argument("--order", type=int, choices=(1, 2), default=1)
        p.add_argument("--nonsmooth", action="store_true")
        p.add_argument("--grid", type=int)
        p.add_argument("--delta-ladder")
        p.add_argument("--scheme", help="JSON object overriding quotient-scheme fields")

    p = sub.add_parser("gan-build")
    common(p, point=False)
    p.add_argument("--instance", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gan_build)

    p = sub.add_parser("gan-certify")
    common(p)
    p.add_argument("--instance", help="instance file written by gan-build")
    p.add_argument("--order", type=int, choices=(1, 2), default=2)
    p.set_defaults(func=cmd_gan_certify)

    p = sub.add_parser("gan-converge")
    common(p, point=False)
    p.add_argument("--n-list", default="16,64,256,1024")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--n-ref", type=int, default=gan.N_REF)
    p.set_defaults(func=cmd_gan_converge)

    p = sub.add_parser("examples")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_examples)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb in ("verify", "classify", "search", "gap") and args.problem is None:
        parser.error("--problem is required")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
