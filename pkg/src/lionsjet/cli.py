"""Command-line front end: enumeration, grading, verification batches,
expansion evaluation, and convergence studies.

Verification batches are driven by a seed: every trial is a pure function of
(base seed + trial index), so runs are reproducible byte for byte and a
failing trial can be dumped as a self-contained JSON instance and replayed.

Exit codes: 0 success, 1 verification failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import random
import sys
from dataclasses import dataclass
from fractions import Fraction

from .errors import ValidationError
from .expansion import taylor1, taylor2, taylor_derivative
from .functional import PolyFunctional, PolyKernel
from .measures import load_coupling, load_points, pair_coupling
from .oracle import (
    convergence_study,
    schwarz_check,
    verify_empirical_deriv,
    verify_expansion_match,
    verify_fullsystem,
)
from .partitions import enum_A
from .poly import MPoly, format_rational, parse_rational
from .tagged import Grading, TaggedSeq, enum_A0, enum_graded, grade


# ---------------------------------------------------------------------------
# seeded instance generation

def gen_kernel(rng, e, d, arity, spatial, degree=3, nterms=4, positive=False):
    """Random polynomial kernel with small rational coefficients."""
    nvars = (arity + spatial) * e
    comps = []
    for _ in range(d):
        terms = {}
        for _ in range(nterms):
            exps = [0] * nvars
            for _ in range(rng.randint(0, degree)):
                exps[rng.randrange(nvars)] += 1
            lo = 1 if positive else -3
            num = rng.randint(lo, 3)
            if num == 0:
                num = 1
            terms[tuple(exps)] = Fraction(num, rng.randint(1, 2))
        if not terms:
            terms[(0,) * nvars] = Fraction(1)
        comps.append(MPoly(nvars, terms))
    return PolyFunctional(PolyKernel(e, d, arity, spatial, comps))


def gen_point(rng, e, as_float=False):
    pt = tuple(Fraction(rng.randint(-2, 2), rng.randint(1, 3)) for _ in range(e))
    return tuple(map(float, pt)) if as_float else pt


def gen_points(rng, n, e, as_float=False):
    return [gen_point(rng, e, as_float) for _ in range(n)]


_GRADING_POOL = [
    (1, 1, Fraction(5, 2)),
    (1, 1, Fraction(7, 2)),
    (Fraction(1, 2), 1, Fraction(9, 4)),
    (Fraction(1, 2), 1, Fraction(3, 2)),
    (1, Fraction(1, 2), Fraction(9, 4)),
    (1, Fraction(1, 2), Fraction(3, 2)),
    (Fraction(1, 3), 1, Fraction(5, 3)),
    (1, 3, Fraction(3, 2)),
    (3, 1, Fraction(3, 2)),
    (Fraction(2, 3), 1, 3),
]


def _tolerance(mode):
    return 0.0 if mode == "rational" else 1e-9


def make_instance(identity, seed, mode="rational"):
    """Deterministic instance payload for one verification trial."""
    rng = random.Random(seed)
    as_float = mode == "float"
    inst = {"identity": identity, "seed": seed, "mode": mode}
    if identity == "empirical":
        e = rng.choice([1, 1, 2])
        n_particles = rng.randint(1, 5)
        f = gen_kernel(rng, e, 1, rng.randint(1, 3), False, degree=3)
        idx = tuple(rng.randint(1, n_particles) for _ in range(rng.randint(1, 3)))
        inst.update(
            kernel=f.to_json(),
            points=_points_json(gen_points(rng, n_particles, e, as_float)),
            idx=list(idx),
        )
    elif identity == "fullsystem":
        e = rng.choice([1, 1, 2])
        n_particles = rng.randint(1, 5)
        f = gen_kernel(rng, e, 1, rng.randint(1, 2), True, degree=3)
        idx = tuple(rng.randint(1, n_particles) for _ in range(rng.randint(1, 3)))
        inst.update(
            kernel=f.to_json(),
            points=_points_json(gen_points(rng, n_particles, e, as_float)),
            idx=list(idx),
            i=rng.randint(1, n_particles),
        )
    elif identity == "expansion":
        e = rng.choice([1, 1, 1, 2])
        n_particles = rng.randint(1, 3)
        spatial = rng.random() < 0.5
        f = gen_kernel(rng, e, 1, rng.randint(1, 2), spatial, degree=3)
        inst.update(
            kernel=f.to_json(),
            points=_points_json(gen_points(rng, n_particles, e, as_float)),
            points2=_points_json(gen_points(rng, n_particles, e, as_float)),
            order=rng.randint(1, 2),
        )
        if spatial:
            a, b, g = rng.choice(_GRADING_POOL)
            inst["grading"] = Grading(a, b, g).to_json()
            inst["x0"] = _point_json(gen_point(rng, e, as_float))
            inst["y0"] = _point_json(gen_point(rng, e, as_float))
    elif identity == "schwarz":
        e = rng.choice([1, 2])
        f = gen_kernel(rng, e, 1, rng.randint(1, 2), True, degree=4)
        n = rng.randint(0, 3)
        seqs = [a for a in enum_A0(n)]
        a = rng.choice(seqs)
        sigma = list(range(n))
        rng.shuffle(sigma)
        n_particles = rng.randint(max(1, a.m), 4)
        pts = gen_points(rng, n_particles, e, as_float)
        inst.update(
            kernel=f.to_json(),
            points=_points_json(pts),
            seq=list(a.values),
            sigma=sigma,
            x0=_point_json(gen_point(rng, e, as_float)),
            dirs=_points_json(gen_points(rng, n, e, as_float)),
            free_labels=[rng.randrange(n_particles) for _ in range(a.m)],
        )
    else:
        raise ValidationError(f"unknown identity {identity}")
    return inst


def _point_json(p):
    return [str(c) for c in p]


def _points_json(pts):
    return [_point_json(p) for p in pts]


def _parse_point(p):
    return tuple(parse_rational(c) if "/" in c or "." not in c else float(c) for c in p)


def _parse_points(pts):
    return [_parse_point(p) for p in pts]


def run_instance(inst):
    """Run one dumped or generated instance; returns a Report."""
    from .measures import EmpiricalMeasure

    identity = inst["identity"]
    seed = inst.get("seed")
    tol = _tolerance(inst.get("mode", "rational"))
    f = PolyFunctional.from_json(inst["kernel"])
    points = _parse_points(inst["points"])
    if identity == "empirical":
        rep = verify_empirical_deriv(
            f, len(points), tuple(inst["idx"]), points=points, seed=seed
        )
    elif identity == "fullsystem":
        rep = verify_fullsystem(
            f, len(points), inst["i"], tuple(inst["idx"]), points=points, seed=seed
        )
    elif identity == "expansion":
        y = _parse_points(inst["points2"])
        rep = verify_expansion_match(f, points, y, inst["order"], seed=seed)
        if rep.passed and "grading" in inst:
            g = Grading.from_json(inst["grading"])
            c = pair_coupling(points, y)
            res = taylor2(
                f, _parse_point(inst["x0"]), _parse_point(inst["y0"]), c, g
            )
            gap = float(res.identity_gap())
            rep.details["graded_identity_gap"] = gap
            rep.max_abs_difference = max(rep.max_abs_difference, gap)
    elif identity == "schwarz":
        mu = EmpiricalMeasure(points)
        a = TaggedSeq(tuple(inst["seq"]))
        free = [mu.atoms[j] for j in inst["free_labels"]]
        rep = schwarz_check(
            f,
            a,
            tuple(inst["sigma"]),
            _parse_point(inst["x0"]),
            mu,
            free,
            _parse_points(inst["dirs"]),
            seed=seed,
        )
    else:
        raise ValidationError(f"unknown identity {identity}")
    rep.passed = rep.max_abs_difference <= tol
    return rep


def _trial(args):
    identity, seed, mode = args
    inst = make_instance(identity, seed, mode)
    rep = run_instance(inst)
    return inst, rep


# ---------------------------------------------------------------------------
# commands

@dataclass
class RunConfig:
    """One resolved command invocation.

    The seed fully determines every random instance a verify run touches;
    rational mode keeps all arithmetic exact (float-only operations raise a
    clear error instead of silently degrading).
    """

    command: str
    kernel_path: str | None = None
    points_path: str | None = None
    points2_path: str | None = None
    coupling_path: str | None = None
    directions_path: str | None = None
    n: int | None = None
    kn: int | None = None
    tagged: bool = False
    graded: tuple | None = None
    seq: str | None = None
    families: bool = False
    identity: str | None = None
    seed: int = 0
    trials: int = 100
    jobs: int = 1
    mode: str = "rational"
    output: str = "text"
    dump_dir: str | None = None
    replay: str | None = None
    order: int | None = None
    grading: tuple | None = None
    x0: str | None = None
    y0: str | None = None
    x0_direction: str | None = None
    free_x: tuple = ()
    free_y: tuple = ()
    box: tuple | None = None
    h_list: str = "1/2,1/4,1/8,1/16,1/32,1/64"

    @classmethod
    def from_args(cls, args):
        fields = {
            "command": args.command,
            "kernel_path": getattr(args, "kernel", None),
            "points_path": getattr(args, "points", None),
            "points2_path": getattr(args, "points2", None),
            "coupling_path": getattr(args, "coupling", None),
            "directions_path": getattr(args, "directions", None),
            "n": getattr(args, "n", None),
            "kn": getattr(args, "kn", None),
            "tagged": getattr(args, "tagged", False),
            "graded": tuple(args.graded) if getattr(args, "graded", None) else None,
            "seq": getattr(args, "seq", None),
            "families": getattr(args, "families", False),
            "identity": getattr(args, "identity", None),
            "seed": getattr(args, "seed", 0),
            "trials": getattr(args, "trials", 100),
            "jobs": getattr(args, "jobs", 1),
            "mode": getattr(args, "mode", "rational"),
            "output": getattr(args, "output", "text"),
            "dump_dir": getattr(args, "dump_dir", None),
            "replay": getattr(args, "replay", None),
            "order": getattr(args, "order", None),
            "grading": tuple(args.grading) if getattr(args, "grading", None) else None,
            "x0": getattr(args, "x0", None),
            "y0": getattr(args, "y0", None),
            "x0_direction": getattr(args, "x0_direction", None),
            "free_x": tuple(getattr(args, "free_x", None) or ()),
            "free_y": tuple(getattr(args, "free_y", None) or ()),
            "box": tuple(args.box) if getattr(args, "box", None) else None,
        }
        if getattr(args, "h_list", None):
            fields["h_list"] = args.h_list
        return cls(**fields)


def _grading_arg(values):
    gamma, alpha, beta = (parse_rational(v) for v in values)
    return Grading(alpha, beta, gamma)


def _cmd_enum(args, out):
    if args.graded:
        g = _grading_arg(args.graded)
        fam = enum_graded(g)
        if args.output == "json":
            print(json.dumps(fam.to_json(), indent=2), file=out)
        else:
            for name in ("core", "star", "plus", "cross"):
                for a in getattr(fam, name):
                    print(f"{name}\t{','.join(map(str, a.values))}", file=out)
        return 0
    if args.kn is not None:
        from .tagged import enum_Akn0

        seqs = enum_Akn0(args.kn, args.n)
    elif args.tagged:
        seqs = enum_A0(args.n)
    else:
        seqs = enum_A(args.n)
    if args.output == "json":
        print(json.dumps([list(a.values) for a in seqs]), file=out)
    else:
        for a in seqs:
            print(",".join(map(str, a.values)) if a.values else "()", file=out)
    return 0


def _cmd_grade(args, out):
    g = _grading_arg(args.grading)
    a = TaggedSeq(tuple(int(v) for v in args.seq.split(",")) if args.seq else ())
    value = grade(a, g)
    if args.families:
        fam = enum_graded(g)
        membership = [
            name
            for name in ("core", "star", "plus", "cross")
            if any(b.values == a.values for b in getattr(fam, name))
        ]
        print(json.dumps({"grade": format_rational(value), "families": membership}), file=out)
    else:
        print(format_rational(value), file=out)
    return 0


def _cmd_verify(args, out):
    if args.replay:
        inst = json.load(open(args.replay))
        rep = run_instance(inst)
        print(json.dumps(rep.to_json()), file=out)
        return 0 if rep.passed else 1
    trials = [(args.identity, args.seed + k, args.mode) for k in range(args.trials)]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_trial, trials))
    else:
        results = [_trial(t) for t in trials]
    failures = 0
    for inst, rep in results:
        status = "ok" if rep.passed else "FAIL"
        print(
            f"{status} seed={inst['seed']} identity={rep.identity} "
            f"max_abs_difference={rep.max_abs_difference}",
            file=out,
        )
        if not rep.passed:
            failures += 1
            if args.dump_dir:
                path = f"{args.dump_dir}/failure-{inst['identity']}-{inst['seed']}.json"
                with open(path, "w") as fh:
                    json.dump(inst, fh, indent=2)
                print(f"instance dumped to {path}", file=out)
            else:
                print(json.dumps(inst), file=out)
    print(f"{len(results) - failures}/{len(results)} passed", file=out)
    return 1 if failures else 0


def _load_functional(path):
    return PolyFunctional.from_json(json.load(open(path)))


def _cmd_expand(args, out):
    f = _load_functional(args.kernel_path)
    if args.coupling_path:
        c = load_coupling(args.coupling_path)
    else:
        x = load_points(args.points_path)
        y = load_points(args.points2_path)
        c = pair_coupling(x, y)
    if args.mode == "float":
        c = pair_coupling(
            [tuple(map(float, p)) for p, _ in c.pairs],
            [tuple(map(float, q)) for _, q in c.pairs],
        )
    box = tuple(float(v) for v in args.box) if args.box else None
    point = lambda s: tuple(parse_rational(v) for v in s.split(","))
    if args.order is not None:
        result = taylor1(f, c.left(), c, args.order, box=box)
    else:
        g = _grading_arg(args.grading)
        x0, y0 = point(args.x0), point(args.y0)
        if args.seq:
            a = TaggedSeq(tuple(int(v) for v in args.seq.split(",")))
            fx = [point(s) for s in (args.free_x or [])]
            fy = [point(s) for s in (args.free_y or [])]
            result = taylor_derivative(f, a, x0, y0, fx, fy, c, g)
        else:
            result = taylor2(f, x0, y0, c, g, box=box)
    print(json.dumps(result.to_json(), indent=2), file=out)
    return 0


def _cmd_converge(args, out):
    f = _load_functional(args.kernel_path)
    pts = load_points(args.points_path)
    dirs = load_points(args.directions_path)
    hs = [parse_rational(h) for h in args.h_list.split(",")]
    if args.order is not None:
        spec = args.order
        x0 = dx0 = None
    else:
        spec = _grading_arg(args.grading)
        x0 = tuple(parse_rational(v) for v in args.x0.split(","))
        dx0 = tuple(parse_rational(v) for v in args.x0_direction.split(","))
    box = tuple(float(v) for v in args.box) if args.box else None
    rows, slope = convergence_study(
        f, pts, dirs, spec, hs, x0=x0, x0_direction=dx0, box=box
    )
    if args.output == "json":
        print(
            json.dumps(
                {"rows": rows, "slope": "exact" if slope is None else slope},
                indent=2,
            ),
            file=out,
        )
        return 0
    print("h,remainder,bound", file=out)
    for row in rows:
        bound = "" if row["bound"] is None else row["bound"]
        print(f"{row['h']},{row['remainder']},{bound}", file=out)
    print(f"# slope: {'exact' if slope is None else slope}", file=out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lionsjet",
        description="partition-sequence combinatorics and exact jet expansions "
        "for polynomial measure functionals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enum", help="enumerate partition sequences")
    p.add_argument("n", type=int)
    p.add_argument("--tagged", action="store_true")
    p.add_argument("--kn", type=int, default=None, help="zeros count for the shuffle family")
    p.add_argument("--graded", nargs=3, metavar=("GAMMA", "ALPHA", "BETA"))
    p.add_argument("--output", choices=("text", "json"), default="text")

    p = sub.add_parser("grade", help="grade a tagged sequence")
    p.add_argument("--seq", default="", help="comma-separated entries, empty for the empty sequence")
    p.add_argument("--grading", nargs=3, metavar=("GAMMA", "ALPHA", "BETA"), required=True)
    p.add_argument("--families", action="store_true")

    p = sub.add_parser("verify", help="run a seeded verification batch")
    p.add_argument("identity", choices=("empirical", "fullsystem", "expansion", "schwarz"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--mode", choices=("rational", "float"), default="rational")
    p.add_argument("--dump-dir", default=None)
    p.add_argument("--replay", default=None, help="re-run a dumped instance file")

    p = sub.add_parser("expand", help="evaluate one expansion")
    p.add_argument("--kernel", required=True)
    p.add_argument("--coupling")
    p.add_argument("--points")
    p.add_argument("--points2")
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--grading", nargs=3, metavar=("GAMMA", "ALPHA", "BETA"))
    p.add_argument("--x0")
    p.add_argument("--y0")
    p.add_argument("--seq", default=None, help="expand this derivative instead")
    p.add_argument("--free-x", nargs="*")
    p.add_argument("--free-y", nargs="*")
    p.add_argument("--box", nargs=2, metavar=("LO", "HI"))
    p.add_argument("--mode", choices=("rational", "float"), default="rational")
    p.add_argument("--output", choices=("json",), default="json")

    p = sub.add_parser("converge", help="remainder decay study, CSV output")
    p.add_argument("--kernel", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--directions", required=True)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--grading", nargs=3, metavar=("GAMMA", "ALPHA", "BETA"))
    p.add_argument("--x0")
    p.add_argument("--x0-direction")
    p.add_argument("--h-list", default="1/2,1/4,1/8,1/16,1/32,1/64")
    p.add_argument("--box", nargs=2, metavar=("LO", "HI"))
    p.add_argument("--output", choices=("csv", "json"), default="csv")
    return parser



def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    return run(RunConfig.from_args(args), out=out)


def run(config, out=None):
    """Execute one command; returns the process exit status."""
    out = out or sys.stdout
    try:
        if config.command == "enum":
            return _cmd_enum(config, out)
        if config.command == "grade":
            return _cmd_grade(config, out)
        if config.command == "verify":
            return _cmd_verify(config, out)
        if config.command == "expand":
            return _cmd_expand(config, out)
        if config.command == "converge":
            return _cmd_converge(config, out)
    except (ValidationError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
