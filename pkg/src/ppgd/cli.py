"""Command-line front end: ``ppgd run | sweep | render | check``.

Exit codes are 0 on success, 2 when an outer loop stops at its iteration
cap and 1 on any error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .ch import SolverConfig, TraceRecord, build_problem, ch_ppgd_solve
from .exceptions import ConfigurationError, DivergenceError, PPGDError
from .spectral import save_field

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITERS = 0, 1, 2
SUMMARY_FIELDS = ("delta0", "outer_iters", "fft_count", "inner_iters_total", "wall_time_s")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _pair(text: str) -> tuple:
    parts = [float(p) for p in text.replace(" ", "").split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'x,y', got {text!r}")
    return tuple(parts)


# config key -> (SolverConfig field, parser)
CONFIG_KEYS = {
    "n": ("n", int),
    "length": ("length", float),
    "delta0": ("delta0", float),
    "lambda": ("lam", float),
    "gamma": ("gamma", float),
    "sigma": ("sigma", float),
    "tol_outer": ("tol_outer", float),
    "tol_inner": ("tol_inner", float),
    "k_hat": ("k_hat", int),
    "n_0": ("n_0", int),
    "f_center": ("f_center", _pair),
    "u_star_center": ("u_star_center", _pair),
    "f_data": ("f_data", str),
    "u_star_data": ("u_star_data", str),
    "mobility": ("mobility", str),
    "mobility_constant": ("mobility_constant", float),
    "v0": ("v0", str),
    "warm_start": ("warm_start", _bool),
    "dealias": ("dealias", str),
    "outer_metric": ("outer_metric", str),
    "inner_metric": ("inner_metric", str),
    "strict_inner": ("strict_inner", _bool),
}
EXTRA_KEYS = ("output_dir", "seed")


def parse_config_text(text: str, base_dir: Path | None = None) -> tuple[SolverConfig, dict]:
    """Parse flat ``key = value`` text (INI sections optional).

    Returns the solver config plus the non-solver keys (``output_dir``,
    ``seed``).  Unknown keys and unparsable values raise
    :class:`ConfigurationError` naming the key.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[ppgd]\n" + text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    values, extra = {}, {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key in EXTRA_KEYS:
                extra[key] = raw.strip()
                continue
            if key not in CONFIG_KEYS:
                raise ConfigurationError(f"unknown config key {key!r}")
            name, conv = CONFIG_KEYS[key]
            try:
                values[name] = conv(raw.strip())
            except ValueError as exc:
                raise ConfigurationError(f"bad value for config key {key!r}: {exc}") from None
    if "v0" in values and values["v0"] != "zero" and base_dir is not None:
        values["v0"] = str((base_dir / values["v0"]).resolve())
    try:
        config = SolverConfig(**values)
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(str(exc)) from None
    return config, extra


def load_config(path) -> tuple[SolverConfig, dict]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, path.parent)


def write_trace(path: Path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TraceRecord.FIELDS)
        for r in records:
            w.writerow(r.as_row())


def read_trace(path) -> dict:
    """Columns of a ``trace.csv`` as lists of floats; errors name the file."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != TraceRecord.FIELDS:
                raise ValueError(f"header {reader.fieldnames} is not {list(TraceRecord.FIELDS)}")
            cols = {name: [] for name in TraceRecord.FIELDS}
            for row in reader:
                for name in TraceRecord.FIELDS:
                    cols[name].append(float(row[name]))
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigurationError(f"cannot parse trace file {path}: {exc}") from None
    return cols


def write_summary(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for row in sorted(rows, key=lambda r: -r[0]):
            w.writerow(row)


def execute(config: SolverConfig, out: Path):
    """Solve, write ``trace.csv``, ``final_field.csv`` and ``summary.csv``.

    Returns ``(exit_code, summary_row or None, message)``.
    """
    out.mkdir(parents=True, exist_ok=True)
    try:
        problem = build_problem(config)
        start = time.perf_counter()
        result = ch_ppgd_solve(problem, config)
        wall = time.perf_counter() - start
    except DivergenceError as exc:
        write_trace(out / "trace.csv", exc.trace)
        return EXIT_ERROR, None, f"diverged: {exc}"
    except PPGDError as exc:
        return EXIT_ERROR, None, str(exc)
    write_trace(out / "trace.csv", result.trace)
    save_field(out / "final_field.csv", problem.grid, result.u)
    row = (config.delta0, result.outer_iters, result.fft_count, result.inner_iters_total, wall)
    write_summary(out / "summary.csv", [row])
    code = EXIT_OK if result.status == "converged" else EXIT_MAX_ITERS
    msg = (f"delta0={config.delta0!r} status={result.status} outer_iters={result.outer_iters} "
           f"inner_iters={result.inner_iters_total} ffts={result.fft_count} wall_time_s={wall:.3f}")
    if result.inner_capped:
        msg += f" capped_inner_solves={result.inner_capped}"
    return code, row, msg


def cmd_run(args) -> int:
    config, extra = load_config(args.config)
    out = Path(args.out or extra.get("output_dir") or "ppgd-out")
    code, _, msg = execute(config, out)
    print(msg, file=sys.stderr if code == EXIT_ERROR else sys.stdout)
    return code


def parse_delta0_list(text: str) -> list[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad --delta0 list: {exc}") from None
    if not values:
        raise ConfigurationError("--delta0 list is empty")
    bad = [v for v in values if not (v > 0 and math.isfinite(v))]
    if bad:
        raise ConfigurationError(f"delta0 values must be positive, got {bad}")
    return values


def sweep_threads(env=None) -> int:
    raw = (os.environ if env is None else env).get("PPGD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"PPGD_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


def cmd_sweep(args) -> int:
    config, extra = load_config(args.config)
    deltas = parse_delta0_list(args.delta0)
    out = Path(args.out or extra.get("output_dir") or "ppgd-sweep")
    out.mkdir(parents=True, exist_ok=True)

    def one(d):
        return d, execute(replace(config, delta0=d), out / f"delta0_{d!r}")

    with ThreadPoolExecutor(max_workers=min(sweep_threads(), len(deltas))) as pool:
        results = list(pool.map(one, deltas))
    rows, worst = [], EXIT_OK
    for d, (code, row, msg) in results:
        print(msg, file=sys.stderr if code == EXIT_ERROR else sys.stdout)
        if row is not None:
            rows.append(row)
        if code == EXIT_ERROR or (code == EXIT_MAX_ITERS and worst == EXIT_OK):
            worst = code
    write_summary(out / "summary.csv", rows)
    failed = [d for d, (code, _, _) in results if code == EXIT_ERROR]
    if failed:
        (out / "failures.txt").write_text("".join(f"{d!r}\n" for d in failed))
    return worst


def trace_label(path: Path) -> str:
    return path.parent.name if path.name == "trace.csv" and path.parent.name else path.stem


def cmd_render(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = [Path(p) for p in args.traces]
    traces = [(trace_label(p), read_trace(p)) for p in paths]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series = {
        "residual": ("residual_L_norm", True, "residual norm"),
        "energy_gap": ("energy_gap", True, "energy gap"),
        "inner_iters": ("inner_iters", False, "inner iterations"),
    }
    with open(out / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("trace", "series", "outer_iter", "value"))
        for label, cols in traces:
            for name, (col, _, _) in series.items():
                for k, value in zip(cols["outer_iter"], cols[col]):
                    w.writerow((label, name, int(k), value))
    for name, (col, logy, ylabel) in series.items():
        fig, ax = plt.subplots(figsize=(5, 4))
        for label, cols in traces:
            k, y = cols["outer_iter"], cols[col]
            if logy:
                # the last energy gap is zero by construction
                k, y = zip(*[(a, b) for a, b in zip(k, y) if b > 0]) if any(b > 0 for b in y) else ((), ())
            ax.plot(k, y, marker="o", label=label)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("outer iteration")
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / f"{name}.png", dpi=120)
        plt.close(fig)
    print(f"wrote {len(series)} plots and series.csv to {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .theory import run_all_checks

    start = time.perf_counter()
    reports = run_all_checks(seed=args.seed, force_failure=args.force_failure)
    for r in reports:
        print(r.row())
    ok = all(r.passed for r in reports)
    print(f"{'all checks passed' if ok else 'CHECKS FAILED'} ({time.perf_counter() - start:.1f} s)")
    return EXIT_OK if ok else EXIT_ERROR


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors share the generic error code; 2 means max-iters here
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ppgd", description="Perturbed preconditioned gradient descent for "
                                              "stationary Cahn-Hilliard with variable mobility.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("run", help="solve one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="solve for several delta0 values")
    p.add_argument("--config", required=True)
    p.add_argument("--delta0", required=True, help="comma-separated list, e.g. 0.1,0.01,0.001")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("render", help="plot trace files")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_render)
    p = sub.add_parser("check", help="run the dense theory checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force-failure", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PPGDError as exc:
        print(f"ppgd: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
