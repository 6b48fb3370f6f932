"""Command line interface: ``generate``, ``evaluate``, ``benchmark``, ``predict-study``.

Exit codes: 0 success, 2 bad arguments, 3 invalid design/spec input,
4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .comparators import LhsConfig, ingest_external_design, maximin_lhs, random_design, random_lhs
from .core import (Design, DesignError, DesignSpec, SpecError, default_n_sim, scale_to_boundary,
                   validate_spec, write_design)
from .criteria import (DEFAULT_MC_SAMPLES, DEFAULT_VARIANCE_RATIO, REPORT_COLUMNS,
                       evaluate_design, format_row, report_row)
from .testbed import (LEAST_SQUARES, LOGISTIC, coded_displacement, coded_passfail,
                      evaluate_predictions, fit_logistic_irls, fit_ols_quadratic, validation_set)
from .ward import fff_design, form_whole_plots, spfff_design, write_merge_history

log = logging.getLogger("spfff")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_IO = 4

SPLIT_TYPES = ("spfff", "spfff_scaled")
GENERATED_TYPES = ("spfff", "spfff_scaled", "fff", "maximin_lhs", "random_lhs", "random")
GRID_TYPES = ("spfff", "spfff_scaled", "fff", "maximin_lhs", "random", "external")

BENCHMARK_COLUMNS = ["design_id", "design_type", "d", "d_wp", "n", "grid_n_wp", "n_wp", "seed",
                     "maximin", "phi_2", "minimax_mc", "mc_samples", "i_opt_iid", "i_opt_sp",
                     "variance_ratio"]
METRIC_COLUMNS = ["design_id", "design_type", "n", "model_kind", "rmse", "accuracy",
                  "validation_m", "seed", "convergence"]


class UsageError(Exception):
    pass


# --- design construction shared by the subcommands ------------------------------

def build_design(kind: str, n: int, d: int, d_wp: int, n_wp: int, seed: int,
                 n_sim: Optional[int] = None) -> Tuple[Design, list]:
    """Construct one generated design; returns (design, merge histories)."""
    if kind not in GENERATED_TYPES:
        raise UsageError(f"unknown design type {kind!r}; choose from {', '.join(GENERATED_TYPES)}")
    spec = DesignSpec.make(n, n_wp, d, d_wp, seed=seed, n_sim=n_sim)
    if kind in SPLIT_TYPES:
        design, h1, h2 = spfff_design(spec, return_history=True)
        if kind == "spfff_scaled":
            scaled = scale_to_boundary(design)
            design = scaled.with_points(scaled.points, kind="spfff_scaled")
        return design, h1 + h2
    if kind == "fff":
        return fff_design(spec), []
    if n < 2:
        raise SpecError(f"n >= 2 required, got {n}")
    if kind == "maximin_lhs":
        return maximin_lhs(LhsConfig(n, d, seed)), []
    if kind == "random_lhs":
        return random_lhs(LhsConfig(n, d, seed)), []
    return random_design(n, d, seed), []


# --- config ---------------------------------------------------------------------

@dataclass
class BenchmarkGrid:
    dims: List[Tuple[int, int]] = field(default_factory=lambda: [(2, 1), (4, 2)])
    run_counts: List[int] = field(default_factory=lambda: [20, 25, 30, 35, 40, 45, 50])
    wp_counts: List[int] = field(default_factory=lambda: [8, 12, 16])
    seeds: List[int] = field(default_factory=lambda: list(range(1, 11)))
    design_types: List[str] = field(
        default_factory=lambda: ["spfff", "spfff_scaled", "fff", "maximin_lhs", "random"])
    mc_samples: int = DEFAULT_MC_SAMPLES
    variance_ratio: float = DEFAULT_VARIANCE_RATIO
    nsim_factor: int = 50
    external: List[str] = field(default_factory=list)

    def validate(self) -> "BenchmarkGrid":
        bad = [t for t in self.design_types if t not in GRID_TYPES]
        if bad:
            raise UsageError(f"unknown design types: {', '.join(bad)}")
        if "external" in self.design_types and not self.external:
            log.warning("design type 'external' requested but no external files supplied")
        for d, d_wp in self.dims:
            if not 1 <= d_wp < d:
                raise UsageError(f"invalid (d, d_wp) pair ({d}, {d_wp})")
        if self.mc_samples < 1 or self.nsim_factor < 2:
            raise UsageError("mc_samples must be >= 1 and nsim_factor >= 2")
        return self

    def cells(self) -> List[Tuple[int, int, int, int]]:
        """Permitted (d, d_wp, n, n_wp) cells in grid order."""
        out = []
        for d, d_wp in self.dims:
            for n in self.run_counts:
                for n_wp in self.wp_counts:
                    if excluded_cell(n, n_wp):
                        log.warning("skipping cell n=%d, n_wp=%d (excluded by design grid)", n, n_wp)
                        continue
                    out.append((d, d_wp, n, n_wp))
        return out

    def generated_types(self) -> List[str]:
        return [t for t in self.design_types if t != "external"]

    def expected_rows(self) -> int:
        return (len(self.cells()) * len(self.generated_types()) * len(self.seeds)
                + (len(self.external) if "external" in self.design_types else 0))


def excluded_cell(n: int, n_wp: int) -> bool:
    """n=20 with 16 whole plots is not part of the study; n_wp must stay below n."""
    return (n == 20 and n_wp == 16) or n_wp >= n


def _int_list(text: str) -> List[int]:
    out: List[int] = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _dims(text: str) -> List[Tuple[int, int]]:
    pairs = []
    for part in text.replace(" ", "").split(","):
        if part:
            d, d_wp = part.split(":")
            pairs.append((int(d), int(d_wp)))
    return pairs


def _str_list(text: str) -> List[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


_GRID_KEYS = {
    "dims": _dims, "run_counts": _int_list, "wp_counts": _int_list, "seeds": _int_list,
    "design_types": _str_list, "mc_samples": int, "variance_ratio": float,
    "nsim_factor": int, "external": _str_list,
}
# config files may also use the command-line spellings
_CONFIG_ALIASES = {"runs": "run_counts", "wps": "wp_counts", "types": "design_types"}


def read_config(path) -> Dict[str, object]:
    """Parse ``key = value`` lines ('#' starts a comment)."""
    values: Dict[str, object] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        key = _CONFIG_ALIASES.get(key, key)
        if key in _GRID_KEYS:
            try:
                values[key] = _GRID_KEYS[key](value)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
        elif key in ("workers", "seed"):
            values[key] = int(value)
        elif key == "output":
            values[key] = value
        else:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
    return values


# --- benchmark ------------------------------------------------------------------

def _design_id(kind, d, n, n_wp, seed) -> str:
    return f"{kind}-d{d}-n{n}-wp{n_wp}-s{seed}"


def _benchmark_group(args) -> List[Tuple[int, dict]]:
    """All rows for one (d, d_wp, n, seed); returns (grid index, row) pairs."""
    grid, d, d_wp, n, seed, cells = args
    rows: List[Tuple[int, dict]] = []
    cache: Dict[str, Tuple[Design, object]] = {}
    spec = DesignSpec.make(n, 1, d, d_wp, seed=seed, n_sim=grid.nsim_factor * n)

    def criteria(design):
        return evaluate_design(design, mc_samples=grid.mc_samples, seed=seed,
                               variance_ratio=grid.variance_ratio)

    fff: List[Design] = []

    def stage_one() -> Design:
        if not fff:
            fff.append(fff_design(spec))
        return fff[0]

    for index, n_wp, kind in cells:
        design_id = _design_id(kind, d, n, n_wp, seed)
        try:
            if kind in SPLIT_TYPES:
                key = f"spfff-{n_wp}"
                if key not in cache:
                    design, _ = form_whole_plots(stage_one().points, n_wp, d_wp, seed)
                    cache[key] = (design, criteria(design))
                if kind == "spfff_scaled":
                    skey = f"spfff_scaled-{n_wp}"
                    if skey not in cache:
                        sd = scale_to_boundary(cache[key][0])
                        sd = sd.with_points(sd.points, kind="spfff_scaled")
                        cache[skey] = (sd, criteria(sd))
                    key = skey
            else:
                key = kind
                if key not in cache:
                    if kind == "fff":
                        design = stage_one()
                    else:
                        design, _ = build_design(kind, n, d, d_wp, n_wp, seed, grid.nsim_factor * n)
                    cache[key] = (design, criteria(design))
            design, report = cache[key]
        except Exception as exc:  # partial-failure policy: log and continue
            log.error("cell %s failed: %s", design_id, exc)
            continue
        row = report_row(design_id, design, report)
        row.update(design_type=kind, d_wp=d_wp, grid_n_wp=n_wp, seed=seed)
        rows.append((index, row))
    return rows


def run_benchmark(grid: BenchmarkGrid, workers: int = 1) -> List[dict]:
    """Evaluate every permitted grid cell; rows come back in grid order."""
    grid.validate()
    groups: Dict[Tuple[int, int, int, int], list] = {}
    index = 0
    for d, d_wp, n, n_wp in grid.cells():
        for kind in grid.generated_types():
            for seed in grid.seeds:
                groups.setdefault((d, d_wp, n, seed), []).append((index, n_wp, kind))
                index += 1
    jobs = [(grid, d, d_wp, n, seed, cells) for (d, d_wp, n, seed), cells in groups.items()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_benchmark_group, jobs))
    else:
        results = [_benchmark_group(job) for job in jobs]
    indexed = sorted((i, row) for group in results for i, row in group)
    rows = [row for _, row in indexed]

    if "external" in grid.design_types:
        for path in grid.external:
            try:
                design = ingest_external_design(path)
            except (OSError, DesignError) as exc:
                log.error("external design %s skipped: %s", path, exc)
                continue
            report = evaluate_design(design, grid.mc_samples, 0, grid.variance_ratio)
            row = report_row(Path(path).stem, design, report)
            row.update(design_type="external", d_wp=design.d_wp, grid_n_wp=design.n_wp, seed="")
            rows.append(row)
    return rows


def write_rows(rows: Sequence[dict], columns: Sequence[str], out) -> None:
    lines = [",".join(columns)] + [format_row(r, columns) for r in rows]
    text = "\n".join(lines) + "\n"
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# --- prediction study -------------------------------------------------------------

def run_predict_study(types: Sequence[str], run_counts: Sequence[int], seeds: Sequence[int],
                      n_wp: int = 8, d_wp: int = 2, validation_m: int = 100_000,
                      validation_seed: int = 0, quadratic: bool = True,
                      nsim_factor: int = 50) -> List[dict]:
    """Fit least-squares and logistic models on cantilever data for each design."""
    v = validation_set(validation_m, 4, validation_seed)
    truth_d = coded_displacement(v)
    truth_pf = coded_passfail(v)
    rows = []
    for kind in types:
        for n in run_counts:
            for seed in seeds:
                design_id = _design_id(kind, 4, n, n_wp, seed)
                base = {"design_id": design_id, "design_type": kind, "n": n,
                        "validation_m": validation_m, "seed": seed, "rmse": None, "accuracy": None}
                try:
                    design, _ = build_design(kind, n, 4, d_wp, n_wp, seed, nsim_factor * n)
                except (SpecError, UsageError) as exc:
                    log.error("design %s skipped: %s", design_id, exc)
                    continue
                y = coded_displacement(design.points)
                labels = coded_passfail(design.points)
                for model_kind in (LEAST_SQUARES, LOGISTIC):
                    row = dict(base, model_kind=model_kind)
                    try:
                        if model_kind == LEAST_SQUARES:
                            fit = fit_ols_quadratic(design, y, quadratic, design_id)
                            row["rmse"] = evaluate_predictions(fit, v, lambda _: truth_d)["rmse"]
                        else:
                            fit = fit_logistic_irls(design, labels, quadratic, design_id)
                            row["accuracy"] = evaluate_predictions(fit, v, lambda _: truth_pf)["accuracy"]
                        row["convergence"] = fit.convergence
                    except (np.linalg.LinAlgError, ValueError) as exc:
                        row["convergence"] = f"failed: {exc}".replace(",", ";")
                    rows.append(row)
    return rows


# --- argument parsing -------------------------------------------------------------

def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="random seed")
    parser.add_argument("--workers", type=int, default=default, help="parallel worker processes")
    parser.add_argument("-o", "--output", default=default, help="output path ('-' for stdout)")
    parser.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS if suppress else False)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spfff", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="generate one design")
    g.add_argument("--type", default="spfff", choices=GENERATED_TYPES)
    g.add_argument("-n", "--runs", type=int, required=True)
    g.add_argument("-d", "--factors", type=int, required=True)
    g.add_argument("--dwp", type=int, default=1, help="number of whole-plot factors")
    g.add_argument("--nwp", type=int, default=None, help="number of whole plots")
    g.add_argument("--nsim", type=int, default=None, help="initial uniform points (default 50*n)")
    g.add_argument("--scaled", action="store_true", help="stretch columns to [-1, 1]")
    g.add_argument("--history", default=None, help="write the Ward merge history CSV here")

    e = sub.add_parser("evaluate", parents=[common], help="compute criteria for design files")
    e.add_argument("designs", nargs="+")
    e.add_argument("--mc-samples", type=int, default=DEFAULT_MC_SAMPLES)
    e.add_argument("--variance-ratio", type=float, default=DEFAULT_VARIANCE_RATIO)

    b = sub.add_parser("benchmark", parents=[common], help="run the design comparison grid")
    b.add_argument("--config", default=None, help="key = value grid file")
    b.add_argument("--dims", type=_dims, default=None, help="e.g. 2:1,4:2")
    b.add_argument("--runs", dest="run_counts", type=_int_list, default=None)
    b.add_argument("--wps", dest="wp_counts", type=_int_list, default=None)
    b.add_argument("--seeds", type=_int_list, default=None, help="e.g. 1-10")
    b.add_argument("--types", dest="design_types", type=_str_list, default=None)
    b.add_argument("--mc-samples", type=int, default=None)
    b.add_argument("--variance-ratio", type=float, default=None)
    b.add_argument("--nsim-factor", type=int, default=None)
    b.add_argument("--external", type=_str_list, default=None, help="external design CSVs")

    p = sub.add_parser("predict-study", parents=[common], help="cantilever prediction study")
    p.add_argument("--types", type=_str_list, default=["spfff_scaled", "spfff", "fff", "maximin_lhs",
                                                        "random"])
    p.add_argument("--runs", type=_int_list, default=[20, 30, 40, 50])
    p.add_argument("--seeds", type=_int_list, default=[1, 2, 3])
    p.add_argument("--nwp", type=int, default=8)
    p.add_argument("--dwp", type=int, default=2)
    p.add_argument("--validation-m", type=int, default=100_000)
    p.add_argument("--no-quadratic", action="store_true",
                   help="main effects and two-factor interactions only")
    return parser


def _cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else 0
    n_wp = args.nwp if args.nwp is not None else args.runs
    if args.output in (None, "-"):
        raise UsageError("generate needs -o/--output FILE.csv")
    if args.scaled and args.type in ("spfff",):
        args.type = "spfff_scaled"
    if args.nsim is None:
        n_sim = default_n_sim(args.runs)
    else:
        n_sim = args.nsim
    if args.type in SPLIT_TYPES:
        validate_spec(DesignSpec(n_sim, args.runs, n_wp, args.factors, args.dwp,
                                 args.factors - args.dwp, seed))
    design, history = build_design(args.type, args.runs, args.factors, args.dwp, n_wp, seed, n_sim)
    if args.scaled and not design.scaled:
        design = scale_to_boundary(design)
    csv_path, meta_path = write_design(design, args.output)
    if args.history:
        write_merge_history(history, args.history)
    print(f"wrote {csv_path} ({meta_path.name}): type={args.type} n={design.n} d={design.d} "
          f"n_wp={design.n_wp} seed={seed}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    seed = args.seed if args.seed is not None else 0
    rows = []
    for path in args.designs:
        try:
            design = ingest_external_design(path)
        except DesignError as exc:
            raise DesignError(f"{path}: {exc}") from None
        report = evaluate_design(design, args.mc_samples, seed, args.variance_ratio)
        rows.append(report_row(Path(path).stem, design, report))
    write_rows(rows, REPORT_COLUMNS, args.output)
    return EXIT_OK


def _grid_from_args(args) -> Tuple[BenchmarkGrid, int, Optional[str]]:
    values = read_config(args.config) if args.config else {}
    for key in _GRID_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    workers = args.workers if args.workers is not None else int(values.pop("workers", 1))
    values.pop("workers", None)
    output = args.output if args.output is not None else values.pop("output", None)
    values.pop("output", None)
    values.pop("seed", None)
    return BenchmarkGrid(**values), workers, output


def _cmd_benchmark(args) -> int:
    grid, workers, output = _grid_from_args(args)
    rows = run_benchmark(grid, workers)
    write_rows(rows, BENCHMARK_COLUMNS, output)
    if output not in (None, "-"):
        meta = {"replications": len(grid.seeds), "seeds": grid.seeds,
                "mc_samples": grid.mc_samples, "variance_ratio": grid.variance_ratio,
                "nsim_factor": grid.nsim_factor, "rows": len(rows), "version": __version__,
                "minimax_mc_note": "Monte Carlo minimax underestimates the true coverage radius"}
        Path(output).with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    log.info("benchmark: %d rows", len(rows))
    return EXIT_OK


def _cmd_predict(args) -> int:
    rows = run_predict_study(args.types, args.runs, args.seeds, n_wp=args.nwp, d_wp=args.dwp,
                             validation_m=args.validation_m,
                             validation_seed=args.seed if args.seed is not None else 0,
                             quadratic=not args.no_quadratic)
    write_rows(rows, METRIC_COLUMNS, args.output)
    return EXIT_OK


COMMANDS = {"generate": _cmd_generate, "evaluate": _cmd_evaluate,
            "benchmark": _cmd_benchmark, "predict-study": _cmd_predict}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"spfff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SpecError, DesignError) as exc:
        print(f"spfff: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"spfff: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
