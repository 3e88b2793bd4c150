"""Command-line interface: ``carma-fields {validate,table,simulate,sample-arma}``.

Results go to stdout as CSV or JSON, logs go to stderr.  Exit status is 0 on
success, 1 for domain errors (invalid model, method/model mismatch, moments
that do not exist) and 2 for usage or parse errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import lattice_arma, moments
from .documents import DocumentError, load_model, model_document
from .errors import CarmaError
from .kernel import kernel_grid
from .model import validate_model
from .simulate import GaussianExactSampler, LatticeGrid, check_method, simulate

log = logging.getLogger("carma_fields")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class _Abort(Exception):
    def __init__(self, code: int, message: str, payload: dict | None = None):
        super().__init__(message)
        self.code = code
        self.payload = payload


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("step counts must be positive")
    return vals


def _per_axis(vals: list, d: int, name: str) -> list:
    if len(vals) == 1:
        return vals * d
    if len(vals) != d:
        raise _Abort(EXIT_USAGE, f"--{name} needs 1 or {d} values, got {len(vals)}")
    return vals


def _fmt(x: float) -> str:
    return "%.17g" % x


def _json_out(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _threads() -> int:
    cap = os.environ.get("CARMA_FIELDS_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer CARMA_FIELDS_THREADS=%r", cap)
    return n


def _load_valid(path):
    try:
        spec, levy = load_model(path)
    except DocumentError as exc:
        raise _Abort(EXIT_USAGE, str(exc)) from exc
    except CarmaError as exc:
        raise _Abort(EXIT_DOMAIN, str(exc)) from exc
    report = validate_model(spec, levy)
    if not report.valid:
        raise _Abort(EXIT_DOMAIN, "model is invalid: " + ", ".join(report.failures()), report.to_dict())
    return spec, levy


# --- subcommands ---------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        spec, levy = load_model(args.model)
    except DocumentError as exc:
        raise _Abort(EXIT_USAGE, str(exc)) from exc
    except CarmaError as exc:
        # the document parsed but does not describe a well-formed model
        _json_out({"valid": False, "flags": {"structure": False}, "failures": ["structure"],
                   "messages": [str(exc)]})
        return EXIT_DOMAIN
    report = validate_model(spec, levy)
    _json_out(report.to_dict())
    return EXIT_OK if report.valid else EXIT_DOMAIN


_COORD = {"kernel": "s", "acf": "t", "spectrum": "w"}


def _tabulate(spec, levy, quantity: str, axes: list[np.ndarray]) -> np.ndarray:
    if quantity == "kernel":
        return kernel_grid(spec, axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.d)
    if quantity == "acf":
        pts = mesh[:, 0] if spec.d == 1 else mesh
        vals = moments.autocovariance(spec, levy, pts)
    else:
        pts = mesh[:, 0] if spec.d == 1 else mesh
        vals = moments.spectral_density(spec, levy, pts)
    return np.asarray(vals, dtype=float).reshape([len(a) for a in axes])


def _gnuplot_script(csv_path: Path, quantity: str, d: int) -> str:
    name = csv_path.name
    lines = ["set datafile separator ','", f"set title '{quantity}'", "set key off"]
    if d == 1:
        lines.append(f"plot '{name}' using 1:2 skip 1 with lines")
    elif d == 2:
        lines += ["set pm3d map", f"splot '{name}' using 1:2:3 skip 1 with pm3d"]
    else:
        lines.append(f"plot '{name}' using 0:{d + 1} skip 1 with lines")
    return "\n".join(lines) + "\n"


def cmd_table(args) -> int:
    spec, levy = _load_valid(args.model)
    d = spec.d
    lo = _per_axis(args.min, d, "min")
    hi = _per_axis(args.max, d, "max")
    steps = _per_axis(args.steps, d, "steps")
    axes = [np.linspace(a, b, n) for a, b, n in zip(lo, hi, steps)]
    try:
        vals = _tabulate(spec, levy, args.quantity, axes)
    except CarmaError as exc:
        raise _Abort(EXIT_DOMAIN, str(exc)) from exc

    c = _COORD[args.quantity]
    rows = [",".join([f"{c}{i + 1}" for i in range(d)] + ["value"])]
    for idx in np.ndindex(*vals.shape):
        rows.append(",".join([_fmt(axes[k][i]) for k, i in enumerate(idx)] + [_fmt(vals[idx])]))
    text = "\n".join(rows) + "\n"
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        log.info("wrote %d rows to %s", len(rows) - 1, out)
        if args.gnuplot:
            gp = out.with_suffix(".gp")
            gp.write_text(_gnuplot_script(out, args.quantity, d))
            log.info("wrote plot script %s", gp)
    else:
        if args.gnuplot:
            raise _Abort(EXIT_USAGE, "--gnuplot needs --out so the script can reference the CSV")
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec, levy = _load_valid(args.model)
    d = spec.d
    grid = LatticeGrid(tuple(_per_axis(args.min, d, "min")), tuple(_per_axis(args.spacing, d, "spacing")),
                       tuple(_per_axis(args.steps, d, "steps")))
    try:
        check_method(spec, levy, args.method)
    except CarmaError as exc:
        raise _Abort(EXIT_DOMAIN, str(exc)) from exc
    kwargs = {}
    if args.refine != 1:
        if args.method != "convolution":
            raise _Abort(EXIT_USAGE, "--refine applies to the convolution method only")
        kwargs["refine"] = args.refine
    if args.trunc_tol is not None:
        if args.method == "gaussian-exact":
            raise _Abort(EXIT_USAGE, "--trunc-tol does not apply to gaussian-exact")
        kwargs["trunc_tol"] = args.trunc_tol
    if args.method == "gaussian-exact":
        try:
            kwargs["sampler"] = GaussianExactSampler(spec, levy, grid.points())
        except CarmaError as exc:
            raise _Abort(EXIT_DOMAIN, str(exc)) from exc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def run(r: int):
        fld = simulate(spec, levy, grid, args.method, args.seed, r, **kwargs)
        fld.to_csv(out / f"field_{r:04d}.csv")
        v = fld.values
        return v.size, float(v.sum()), float((v * v).sum())

    workers = min(_threads(), args.replicates)
    log.info("simulating %d replicate(s) with %s on %d thread(s)", args.replicates, args.method, workers)
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(run, range(args.replicates)))
    except CarmaError as exc:
        raise _Abort(EXIT_DOMAIN, str(exc)) from exc

    # reduction in replicate order keeps the summary independent of scheduling
    n = sum(s[0] for s in stats)
    s1 = sum(s[1] for s in stats)
    s2 = sum(s[2] for s in stats)
    emp_mean = s1 / n
    emp_var = s2 / n - emp_mean ** 2
    summary = {
        "model": model_document(spec, levy),
        "method": args.method,
        "seed": args.seed,
        "replicates": args.replicates,
        "grid": {"origin": list(grid.origin), "spacing": list(grid.spacing), "extents": list(grid.extents)},
        "files": [f"field_{r:04d}.csv" for r in range(args.replicates)],
        "empirical_mean": emp_mean,
        "empirical_variance": emp_var,
    }
    for key, fn in (("analytic_mean", moments.mean), ("analytic_variance", moments.variance)):
        try:
            summary[key] = float(fn(spec, levy))
        except CarmaError:
            summary[key] = None
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _json_out(summary)
    return EXIT_OK


def cmd_sample_arma(args) -> int:
    spec, levy = _load_valid(args.model)
    try:
        rep = lattice_arma.arma_representation(spec, levy)
    except CarmaError as exc:
        raise _Abort(EXIT_DOMAIN, str(exc)) from exc
    result = rep.to_dict()
    result["spectral_check"] = lattice_arma.discrete_spectral_check(rep.rhs_acov)
    if args.ma_match:
        if rep.p != 2:
            raise _Abort(EXIT_DOMAIN, f"--ma-match needs p = 2, the model has p = {rep.p}")
        log.info("matching MA(1,1) from %d starts", args.starts)
        result["ma_match"] = lattice_arma.ma_match(rep.rhs_acov, starts=args.starts, seed=args.seed).to_dict()
    _json_out(result)
    return EXIT_OK


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carma-fields", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model document")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("table", help="tabulate kernel, autocovariance or spectral density on a grid")
    p.add_argument("model")
    p.add_argument("--quantity", choices=sorted(_COORD), default="kernel")
    p.add_argument("--min", type=_floats, default=[0.0], help="lower grid bound, one value or one per axis")
    p.add_argument("--max", type=_floats, default=[5.0], help="upper grid bound")
    p.add_argument("--steps", type=_ints, default=[11], help="grid points per axis")
    p.add_argument("--out", help="write the CSV here instead of stdout")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script next to --out")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("simulate", help="simulate replicates on a regular lattice")
    p.add_argument("model")
    p.add_argument("--method", choices=["convolution", "gaussian-exact", "car1"], default="convolution")
    p.add_argument("--min", type=_floats, default=[0.0], help="lattice origin")
    p.add_argument("--spacing", type=_floats, default=[1.0])
    p.add_argument("--steps", type=_ints, default=[32], help="lattice points per axis")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--trunc-tol", type=float, default=None, help="kernel truncation tolerance")
    p.add_argument("--refine", type=int, default=1, help="noise cells per lattice step and axis (convolution)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sample-arma", help="exact lattice ARMA representation (d = 2)")
    p.add_argument("model")
    p.add_argument("--ma-match", action="store_true", help="solve for MA(1,1) coefficients (p = 2)")
    p.add_argument("--starts", type=int, default=2 ** 14)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample_arma)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "replicates", 1) < 1 or getattr(args, "refine", 1) < 1:
        print("carma-fields: error: --replicates and --refine must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _Abort as exc:
        print(f"carma-fields: error: {exc}", file=sys.stderr)
        if exc.payload is not None:
            print(json.dumps(exc.payload, indent=2), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
