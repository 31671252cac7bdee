"""Command-line interface: pair files, invariants, solves and seeded sweeps.

Pair files are JSON documents {"n", "theta", "u", "v"} with complex entries
stored as [re, im]. Floats are written with Python's shortest round-trip
repr, so save/load is bit-exact.

Exit codes: 0 success, 1 Exel mismatch, 2 usage or input error,
3 spectral gap too small, 4 spectrum on the branch cut, 5 infeasible
target, 6 iteration budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import GapTooSmall, Infeasible, IrrationalTarget, SoftTorusError, SpectrumOnCut
from .generators import (
    RationalAngle,
    UnitaryPair,
    as_rational,
    haar_pair,
    perturb_pair,
    tensor_lift,
    theta_pair,
    twist,
    voiculescu,
)
from .invariants import DEFAULT_GAP_POLICY, TraceKind, bott_pair, cut_for, defect, winding
from .matcore import LOG0, PRINCIPAL
from .rotrep import IrrepSpec, irrep_at
from .solver import SolverOptions, project_to_theta_pairs

log = logging.getLogger("softtorus")

EXIT_OK = 0
EXIT_EXEL_FAIL = 1
EXIT_USAGE = 2
EXIT_GAP = 3
EXIT_CUT = 4
EXIT_INFEASIBLE = 5
EXIT_MAX_ITER = 6

SWEEP_HEADER = (
    "n", "q", "p", "eps", "seed", "defect", "winding_norm", "bott", "gap",
    "exel_ok", "solve_dist", "solve_iters", "solve_converged", "wall_ms",
)
THREADS_ENV = "SOFT_TORUS_THREADS"
GEN_KINDS = ("clockshift", "voiculescu", "perturbed", "haar", "lift", "twist", "irrep")


class UsageError(SoftTorusError):
    pass


# ---------------------------------------------------------------- serialization

def parse_theta(text: str, *, strict: bool = False):
    """"p/q" gives an exact RationalAngle. A decimal is snapped to a nearby
    rational (q <= 64, within 1e-9) with a warning; otherwise it stays a float,
    or raises IrrationalTarget when ``strict``."""
    text = str(text).strip()
    if "/" in text:
        return RationalAngle.parse(text)
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"cannot parse theta {text!r}") from None
    if not math.isfinite(value):
        raise UsageError(f"theta must be finite, got {text!r}")
    try:
        snapped = RationalAngle.snap(value)
    except IrrationalTarget:
        if strict:
            raise
        return value
    if float(snapped) != value:
        log.warning("theta %s snapped to %s", text, snapped)
    return snapped


def format_theta(theta) -> str:
    return str(theta) if isinstance(theta, RationalAngle) else repr(float(theta))


def _encode(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _decode(rows, n: int, name: str) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.shape != (n, n, 2):
        raise UsageError(f"field {name!r} must be an {n}x{n} array of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def pair_to_document(pair: UnitaryPair) -> dict:
    return {
        "n": pair.n,
        "theta": format_theta(pair.theta),
        "u": _encode(pair.u),
        "v": _encode(pair.v),
    }


def pair_from_document(doc: dict) -> UnitaryPair:
    try:
        n = int(doc["n"])
        theta = parse_theta(doc["theta"])
        u = _decode(doc["u"], n, "u")
        v = _decode(doc["v"], n, "v")
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed pair file: {exc}") from exc
    return UnitaryPair(u, v, theta)


def atomic_write(path: str, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_pair(pair: UnitaryPair, path: str) -> None:
    atomic_write(path, json.dumps(pair_to_document(pair)) + "\n")


def load_pair(path: str) -> UnitaryPair:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read pair file {path}: {exc}") from exc
    return pair_from_document(doc)


def _emit(doc: dict, out=None) -> None:
    print(json.dumps(doc, sort_keys=True, allow_nan=True), file=out or sys.stdout)


# ---------------------------------------------------------------- gen

def _turn(x: float) -> complex:
    return complex(np.exp(2j * np.pi * x))


def build_pair(args) -> UnitaryPair:
    kind = args.kind
    theta = parse_theta(args.theta, strict=True) if kind != "voiculescu" else None
    if kind == "voiculescu":
        return voiculescu(args.n)
    if kind == "haar":
        return haar_pair(args.n, args.seed)
    if kind == "irrep":
        return irrep_at(IrrepSpec(theta, _turn(args.t1), _turn(args.t2)))
    base = theta_pair(theta, args.m)
    if kind == "clockshift":
        return base
    if kind == "perturbed":
        return perturb_pair(base, args.eps, args.seed)
    if kind == "twist":
        return twist(base, _turn(args.t1), _turn(args.t2))
    # lift: the tensor lift of a perturbed theta-pair
    return tensor_lift(perturb_pair(base, args.eps, args.seed), theta)


def cmd_gen(args) -> int:
    pair = build_pair(args)
    save_pair(pair, args.out)
    print(f"n={pair.n} theta={format_theta(pair.theta)} defect={defect(pair):.12g}")
    return EXIT_OK


# ---------------------------------------------------------------- invariants

def _branch(name: str):
    return LOG0 if name == "log0" else PRINCIPAL


def cmd_invariants(args) -> int:
    pair = load_pair(args.pairfile)
    if args.lift:
        pair = tensor_lift(pair, as_rational(pair.theta))
    cut = _branch(args.branch)
    doc = {"n": pair.n, "theta": format_theta(pair.theta), "branch": args.branch,
           "defect": defect(pair)}
    try:
        doc["winding"] = winding(pair, cut, TraceKind.UNNORMALIZED)
        doc["winding_norm"] = winding(pair, cut, TraceKind.NORMALIZED)
    except SpectrumOnCut as exc:
        doc["error"] = f"spectrum on cut: {exc}"
        _report(args, doc)
        return EXIT_CUT
    try:
        report = bott_pair(pair, args.gap_policy, cut)
    except GapTooSmall as exc:
        doc["error"] = f"gap too small: {exc}"
        _report(args, doc)
        return EXIT_GAP
    doc.update(bott=report.bott, gap=report.gap, exel_discrepancy=report.exel_discrepancy,
               exel="pass" if report.exel_pass else "fail")
    _report(args, doc)
    return EXIT_OK if report.exel_pass else EXIT_EXEL_FAIL


def _show(x: float) -> str:
    # ten decimals are plenty for integers and multiples of 1/q; also drops -0
    return f"{round(x, 10) + 0.0:.10g}"


def _report(args, doc: dict) -> None:
    if args.json:
        _emit(doc)
        return
    print(f"defect={doc['defect']:.12g}")
    if "winding" in doc:
        print(f"winding_norm={_show(doc['winding_norm'])} winding_unnorm={_show(doc['winding'])}")
    if "bott" in doc:
        print(f"bott={doc['bott']} winding={_show(doc['winding'])} exel={doc['exel']} gap={doc['gap']:.6g}")
    if "error" in doc:
        print(doc["error"], file=sys.stderr)


# ---------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    pair = load_pair(args.pairfile)
    try:
        theta = as_rational(parse_theta(args.theta, strict=True) if args.theta else pair.theta)
    except IrrationalTarget as exc:
        _emit({"status": "infeasible", "error": str(exc)})
        return EXIT_INFEASIBLE
    opts = SolverOptions(max_iterations=args.max_iter, seed=args.seed)
    try:
        candidate, report = project_to_theta_pairs(pair, theta, opts)
    except Infeasible as exc:
        _emit({"status": "infeasible", "theta": str(theta), "obstruction": exc.obstruction,
               "divisible": exc.divisible, "error": str(exc)})
        return EXIT_INFEASIBLE
    except SpectrumOnCut as exc:
        _emit({"status": "spectrum_on_cut", "theta": str(theta), "error": str(exc)})
        return EXIT_CUT
    if args.out:
        save_pair(candidate, args.out)
    status = "converged" if report.converged else "max_iterations"
    _emit({
        "status": status,
        "theta": str(theta),
        "obstruction": winding(pair, cut_for(theta), TraceKind.NORMALIZED),
        "converged": report.converged,
        "iterations": report.iterations,
        "dist_u": report.dist_u,
        "dist_v": report.dist_v,
        "relation_residual": report.relation_residual,
        "objective": report.objective_trace[-1],
    })
    return EXIT_OK if report.converged else EXIT_MAX_ITER


# ---------------------------------------------------------------- sweep

@dataclass(frozen=True)
class Trial:
    theta: RationalAngle
    n: int
    eps: float
    seed: int
    timing: bool = False


def run_trial(trial: Trial) -> tuple:
    """One SweepRow. Bott, gap and the Exel verdict refer to the tensor lift,
    which is the almost commuting pair attached to a theta-pair; failed
    fields hold -1."""
    start = time.perf_counter()
    theta, n = trial.theta, trial.n
    pair = perturb_pair(theta_pair(theta, n // theta.q), trial.eps, trial.seed)
    row = dict(n=n, q=theta.q, p=theta.p, eps=trial.eps, seed=trial.seed,
               defect=defect(pair), winding_norm=-1, bott=-1, gap=-1, exel_ok=0,
               solve_dist=-1, solve_iters=-1, solve_converged=0, wall_ms=-1)
    try:
        row["winding_norm"] = winding(pair, cut_for(theta), TraceKind.NORMALIZED)
    except SpectrumOnCut:
        pass
    try:
        report = bott_pair(tensor_lift(pair, theta), DEFAULT_GAP_POLICY)
        row.update(bott=report.bott, gap=report.gap, exel_ok=int(report.exel_pass))
    except (GapTooSmall, SpectrumOnCut):
        pass
    try:
        _, solved = project_to_theta_pairs(pair, theta, SolverOptions(seed=trial.seed))
        row.update(solve_dist=solved.max_dist, solve_iters=solved.iterations,
                   solve_converged=int(solved.converged))
    except (Infeasible, SpectrumOnCut):
        pass
    if trial.timing:
        row["wall_ms"] = round(1000.0 * (time.perf_counter() - start), 3)
    return tuple(row[key] for key in SWEEP_HEADER)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _worker_count(jobs: int) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            limit = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer") from None
    else:
        limit = os.cpu_count() or 1
    return max(1, min(limit, jobs))


def sweep_trials(theta: RationalAngle, n_list, eps_list, trials: int, seed: int,
                 timing: bool = False) -> list[Trial]:
    out = []
    for n in n_list:
        for eps in eps_list:
            for _ in range(trials):
                out.append(Trial(theta, n, eps, seed + len(out), timing))
    return out


def run_sweep(jobs: list[Trial]) -> str:
    workers = _worker_count(len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_trial, jobs))
    else:
        rows = [run_trial(job) for job in jobs]
    rows.sort(key=lambda r: (r[0], r[3], r[4]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for row in rows:
        writer.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_sweep(args) -> int:
    theta = parse_theta(args.theta, strict=True)
    if not isinstance(theta, RationalAngle):
        raise UsageError("sweep needs a rational theta")
    bad = [n for n in args.n_list if n < 1 or n % theta.q]
    if bad:
        raise UsageError(f"every n must be a positive multiple of q = {theta.q}; got {bad}")
    if any(not 0.0 <= e <= 0.5 for e in args.eps_list):
        raise UsageError("eps values must lie in [0, 0.5]")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    jobs = sweep_trials(theta, args.n_list, args.eps_list, args.trials, args.seed, args.timing)
    text = run_sweep(jobs)
    if args.out:
        atomic_write(args.out, text)
        print(f"wrote {len(jobs)} rows to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softtorus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a generated pair file")
    gen.add_argument("kind", choices=GEN_KINDS)
    gen.add_argument("--n", type=int, default=8, help="size for voiculescu and haar")
    gen.add_argument("--theta", default="0/1")
    gen.add_argument("--m", type=int, default=1, help="number of q-blocks")
    gen.add_argument("--eps", type=float, default=0.0)
    gen.add_argument("--t1", type=float, default=0.0, help="first torus point or twist, in turns")
    gen.add_argument("--t2", type=float, default=0.0, help="second torus point or twist, in turns")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    inv = sub.add_parser("invariants", help="defect, winding, bott and the Exel verdict")
    inv.add_argument("pairfile")
    inv.add_argument("--branch", choices=("principal", "log0"), default="principal")
    inv.add_argument("--gap-policy", type=float, default=DEFAULT_GAP_POLICY)
    inv.add_argument("--lift", action="store_true", help="evaluate on the tensor lift of the pair")
    inv.add_argument("--json", action="store_true", help="print a JSON document instead of text")
    inv.set_defaults(func=cmd_invariants)

    solve = sub.add_parser("solve", help="project onto exact theta-pairs")
    solve.add_argument("pairfile")
    solve.add_argument("--theta", default=None, help="target angle (default: the file's theta)")
    solve.add_argument("--max-iter", type=int, default=SolverOptions.max_iterations)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--out", default=None)
    solve.set_defaults(func=cmd_solve)

    sweep = sub.add_parser("sweep", help="seeded parameter sweep written as CSV")
    sweep.add_argument("--theta", default="0/1")
    sweep.add_argument("--n-list", type=_int_list, required=True)
    sweep.add_argument("--eps-list", type=_float_list, required=True)
    sweep.add_argument("--trials", type=int, default=1)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--timing", action="store_true", help="fill wall_ms (output is then not reproducible)")
    sweep.add_argument("--out", default=None)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SoftTorusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
