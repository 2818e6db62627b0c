"""Command-line front end: ``bpbeta <command> [options]``.

Exit codes: 0 success, 2 data or configuration error, 3 numerical failure,
4 scan finished with at least one failed grid point.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import __version__
from .errors import BpBetaError, ConfigError, DataError, MissingColumn, NonNumericCell, NumericError
from .estimation import fit_null_dpd
from .lmtest import DEFAULT_ALPHA, DEFAULT_GRID, bp_beta_test, koenker_beta_test, scan_beta
from .mc import parse_scenario_file, run_scenario, with_seed
from .model import RegressionData, build_white_design
from .robustness import (
    Theta0,
    are,
    contaminated_power,
    if2_curve,
    influence_report,
    null_sandwich,
    pitman_power,
)

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_DATA, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def load_schema() -> dict:
    text = resources.files("bpbeta").joinpath("schemas/output.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


# -- input --------------------------------------------------------------------

def parse_number(text: str) -> float:
    """Strict decimal parse: ``.`` separator, optional exponent, nothing else."""
    t = text.strip()
    if not _NUMBER.match(t):
        raise ValueError(text)
    return float(t)


def read_columns(path: str, names: list[str]) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        idx = {}
        for name in names:
            if name not in header:
                raise MissingColumn(name)
            idx[name] = header.index(name)
        cols: dict[str, list[float]] = {name: [] for name in names}
        for rowno, row in enumerate(reader, 1):
            if not row or all(not c.strip() for c in row):
                continue
            for name, j in idx.items():
                cell = row[j] if j < len(row) else ""
                try:
                    cols[name].append(parse_number(cell))
                except ValueError:
                    raise NonNumericCell(rowno, name, cell) from None
    return {k: np.array(v) for k, v in cols.items()}


def _split(text: str | None) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _floats(text: str, what: str) -> list[float]:
    try:
        return [parse_number(t) for t in _split(text)]
    except ValueError:
        raise ConfigError(f"{what}: cannot parse {text!r}") from None


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive of stop) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid must be start:stop:step, got {text!r}")
        try:
            start, stop, step = (parse_number(p) for p in parts)
        except ValueError:
            raise ConfigError(f"cannot parse grid {text!r}") from None
        if step <= 0 or stop < start:
            raise ConfigError(f"bad grid {text!r}")
        k = int(round((stop - start) / step))
        return [round(start + i * step, 12) for i in range(k + 1)]
    return _floats(text, "grid")


@dataclass(frozen=True)
class RunConfig:
    input_path: str
    response: str
    x_columns: tuple[str, ...]
    z_columns: tuple[str, ...]
    white: bool
    drop_rows: tuple[int, ...]
    alpha: float

    def echo(self) -> dict:
        return {
            "input": self.input_path,
            "response": self.response,
            "x": list(self.x_columns),
            "z": list(self.z_columns) if not self.white else "white",
            "drop_rows": list(self.drop_rows),
            "alpha": self.alpha,
        }


def make_config(ns) -> RunConfig:
    if not ns.input or not ns.response or not ns.x:
        raise ConfigError("--input, --response and --x are required")
    x = tuple(_split(ns.x))
    z = tuple(_split(getattr(ns, "z", None)))
    if ns.response in x:
        raise ConfigError("response column cannot also be a regressor")
    drops = tuple(int(v) for v in _floats(ns.drop_rows, "--drop-rows")) if ns.drop_rows else ()
    alpha = ns.alpha
    if not 0.0 < alpha < 1.0:
        raise ConfigError("--alpha must lie in (0, 1)")
    return RunConfig(ns.input, ns.response, x, z, bool(getattr(ns, "white", False)), drops, alpha)


def load_data(cfg: RunConfig) -> RegressionData:
    names = [cfg.response, *cfg.x_columns, *[c for c in cfg.z_columns if c not in cfg.x_columns]]
    cols = read_columns(cfg.input_path, list(dict.fromkeys(names)))
    y = cols[cfg.response]
    R = np.column_stack([cols[c] for c in cfg.x_columns])
    X = np.column_stack([np.ones(len(y)), R])
    if cfg.white:
        Z = build_white_design(X)
    elif cfg.z_columns:
        Z = np.column_stack([cols[c] for c in cfg.z_columns])
    else:
        Z = R
    data = RegressionData(y, X, Z)
    if cfg.drop_rows:
        data = data.drop_rows(cfg.drop_rows)
    return data


# -- output -------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def envelope(command: str, config: dict, results: list, **extra) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": command,
        "config": config,
        "results": results,
    }
    out.update(extra)
    return out


def write_csv(rows: list[dict], columns: list[str], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c)
            if v is None:
                cells.append("")
            elif isinstance(v, float):
                cells.append(repr(v))
            else:
                cells.append(str(v))
        w.writerow(cells)


def write_table(rows: list[dict], columns: list[str], fh) -> None:
    def fmt(c, v):
        if v is None:
            return ""
        if c.endswith("p_value") and isinstance(v, float):
            return f"{v:.3e}"
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    cells = [[fmt(c, r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[j]) for row in cells)) if cells else len(c) for j, c in enumerate(columns)]
    fh.write("  ".join(c.rjust(w) for c, w in zip(columns, widths)) + "\n")
    for row in cells:
        fh.write("  ".join(v.rjust(w) for v, w in zip(row, widths)) + "\n")


def emit(ns, doc: dict, rows: list[dict], columns: list[str], out) -> None:
    if ns.format == "json":
        json.dump(_clean(doc), out, indent=2, allow_nan=False)
        out.write("\n")
    elif ns.format == "csv":
        write_csv(rows, columns, out)
    else:
        write_table(rows, columns, out)


def _fit_meta(fit) -> dict:
    return {
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "gradient_norm": float(fit.final_gradient_norm),
        "sigma2": float(fit.sigma2),
        "coefficients": [float(c) for c in fit.coefficients],
    }


TEST_COLUMNS = ["kind", "beta", "statistic", "df", "p_value", "ess", "tss", "denominator"]


# -- commands -----------------------------------------------------------------

def cmd_test(ns, out) -> int:
    cfg = make_config(ns)
    betas = _floats(ns.beta, "--beta") if ns.beta else [0.0]
    data = load_data(cfg)
    results, rows = [], []
    for b in betas:
        fit = fit_null_dpd(data, b)
        for res in (bp_beta_test(fit, data.Z), koenker_beta_test(fit, data.Z)):
            d = res.as_dict()
            rows.append(d)
            results.append({**d, "fit": _fit_meta(fit)})
    doc = envelope("test", {**cfg.echo(), "beta": betas, "n": data.n, "r": data.r}, results)
    emit(ns, doc, rows, TEST_COLUMNS, out)
    return EXIT_OK


SCAN_COLUMNS = ["beta", "bp_stat", "koenker_stat", "bp_p_value", "koenker_p_value", "threshold", "error"]


def cmd_scan(ns, out) -> int:
    cfg = make_config(ns)
    grid = parse_grid(ns.beta_grid) if ns.beta_grid else list(DEFAULT_GRID)
    data = load_data(cfg)
    # the White expansion (if any) is already in data.Z
    scan = scan_beta(data, grid, cfg.alpha)
    rows, results = [], []
    for p in scan.points:
        row = {"beta": p.beta, "threshold": scan.threshold, "error": p.error}
        if p.ok:
            row.update(bp_stat=p.bp.statistic, koenker_stat=p.koenker.statistic,
                       bp_p_value=p.bp.p_value, koenker_p_value=p.koenker.p_value)
        rows.append(row)
        results.append({**row, "fit": _fit_meta(p.fit) if p.ok else None})
    doc = envelope("scan", {**cfg.echo(), "grid": list(scan.grid), "n": data.n, "r": data.r}, results,
                   threshold=scan.threshold)
    emit(ns, doc, rows, SCAN_COLUMNS, out)
    return EXIT_PARTIAL if scan.failed else EXIT_OK


def cmd_are(ns, out) -> int:
    grid = parse_grid(ns.beta_grid) if ns.beta_grid else list(DEFAULT_GRID)
    rows = [{"beta": b, "are": are(b)} for b in grid]
    emit(ns, envelope("are", {"grid": grid}, rows), rows, ["beta", "are"], out)
    return EXIT_OK


def _theta0(ns, data: RegressionData, beta: float) -> Theta0:
    if ns.theta0_coef or ns.theta0_sigma2:
        if not (ns.theta0_coef and ns.theta0_sigma2):
            raise ConfigError("--theta0-coef and --theta0-sigma2 go together")
        coef = np.array(_floats(ns.theta0_coef, "--theta0-coef"))
        if coef.shape != (data.X.shape[1],):
            raise ConfigError(f"--theta0-coef needs {data.X.shape[1]} values")
        if not ns.theta0_sigma2 > 0:
            raise ConfigError("--theta0-sigma2 must be positive")
        return Theta0(coef, ns.theta0_sigma2)
    fit = fit_null_dpd(data, beta)
    return Theta0(fit.coefficients, fit.sigma2)


def cmd_influence(ns, out) -> int:
    cfg = make_config(ns)
    data = load_data(cfg)
    beta = _floats(ns.beta, "--beta")[0] if ns.beta else 0.2
    theta0 = _theta0(ns, data, beta)
    grid = parse_grid(ns.y_grid) if ns.y_grid else None
    obs = [int(v) for v in _floats(ns.obs, "--obs")] if ns.obs else list(range(1, data.n + 1))
    if any(not 1 <= i <= data.n for i in obs):
        raise ConfigError(f"--obs must lie in 1..{data.n}")
    rows = []
    for i in obs:
        mu = float(data.X[i - 1] @ theta0.coefficients)
        ys = np.asarray(grid) if grid is not None else mu + np.sqrt(theta0.sigma2) * np.linspace(-10, 10, 401)
        for yv, val in zip(ys, if2_curve(data, theta0, beta, i - 1, ys)):
            rows.append({"obs": i, "y": float(yv), "if2": float(val)})
    rep = influence_report(data, theta0, beta, data.y)
    ges = None if rep.unbounded else rep.ges
    doc = envelope("influence", {**cfg.echo(), "beta": beta, "sigma2": float(theta0.sigma2),
                                 "coefficients": [float(c) for c in theta0.coefficients]},
                   rows, ges=ges, unbounded=rep.unbounded)
    emit(ns, doc, rows, ["obs", "y", "if2"], out)
    return EXIT_OK


def cmd_power(ns, out) -> int:
    cfg = make_config(ns)
    data = load_data(cfg)
    beta = _floats(ns.beta, "--beta")[0] if ns.beta else 0.0
    delta = _floats(ns.delta, "--delta") if ns.delta else [0.0] * data.r
    if len(delta) != data.r:
        raise ConfigError(f"--delta needs r = {data.r} values")
    fit = fit_null_dpd(data, beta)
    sw = null_sandwich(fit, data)
    if ns.epsilon is None:
        rep = pitman_power(delta, sw, cfg.alpha)
    else:
        yc = np.full(data.n, np.nan)
        idx = [int(v) - 1 for v in _floats(ns.contam_rows, "--contam-rows")] if ns.contam_rows else range(data.n)
        yc[list(idx)] = ns.contam_y
        rep = contaminated_power(delta, ns.epsilon, yc, sw, data, cfg.alpha)
    row = {"beta": beta, **rep.as_dict()}
    doc = envelope("power", {**cfg.echo(), "beta": beta, "delta": delta, "epsilon": ns.epsilon}, [row])
    cols = ["beta", "alpha", "df", "threshold", "ncp", "power", "contaminated_ncp", "contaminated_power", "pif"]
    emit(ns, doc, [row], cols, out)
    return EXIT_OK


def cmd_simulate(ns, out) -> int:
    if not ns.scenario:
        raise ConfigError("--scenario is required")
    s = parse_scenario_file(ns.scenario)
    if ns.seed is not None:
        s = with_seed(s, ns.seed)
    rep = run_scenario(s)
    d = rep.as_dict()
    rows = [
        {"beta": b, "bp_rate": d["bp_rate"][k], "koenker_rate": d["koenker_rate"][k],
         "bp_se": d["bp_se"][k], "koenker_se": d["koenker_se"][k], "failures": d["failures"][k]}
        for k, b in enumerate(rep.beta_grid)
    ]
    cfg = {"scenario": ns.scenario, "seed": s.seed, "n": s.n, "p": s.p, "replications": s.replications}
    doc = envelope("simulate", cfg, rows, threshold=rep.threshold)
    emit(ns, doc, rows, ["beta", "bp_rate", "koenker_rate", "bp_se", "koenker_se", "failures"], out)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def _data_args(p: argparse.ArgumentParser, z: bool = True) -> None:
    p.add_argument("--input", help="CSV file with a header row")
    p.add_argument("--response", help="response column")
    p.add_argument("--x", help="comma-separated regressor columns (intercept added)")
    if z:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--z", help="comma-separated heteroscedasticity columns (default: the regressors)")
        g.add_argument("--white", action="store_true", help="use regressors, squares and cross-products")
    p.add_argument("--drop-rows", help="comma-separated 1-based data rows to drop")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bpbeta", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"bpbeta {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, helptext, fmt="table"):
        p = sub.add_parser(name, help=helptext)
        p.set_defaults(fn=fn)
        p.add_argument("--format", choices=("json", "csv", "table"), default=fmt)
        p.add_argument("--seed", type=int, default=None)
        return p

    p = add("test", cmd_test, "BP and Koenker beta-score tests")
    _data_args(p)
    p.add_argument("--beta", help="comma-separated tuning values (default 0)")

    p = add("scan", cmd_scan, "statistics over a beta grid", fmt="csv")
    _data_args(p)
    p.add_argument("--beta-grid", help="start:stop:step or comma list (default 0:0.75:0.05)")

    p = add("are", cmd_are, "asymptotic relative efficiency curve", fmt="csv")
    p.add_argument("--beta-grid", help="start:stop:step or comma list")

    p = add("influence", cmd_influence, "second-order influence curves", fmt="csv")
    _data_args(p)
    p.add_argument("--beta", help="tuning value (default 0.2)")
    p.add_argument("--y-grid", help="start:stop:step or comma list of probe responses")
    p.add_argument("--obs", help="comma-separated 1-based observations (default all)")
    p.add_argument("--theta0-coef", help="null coefficients (default: the fit at --beta)")
    p.add_argument("--theta0-sigma2", type=float, help="null variance")

    p = add("power", cmd_power, "asymptotic power under local alternatives", fmt="json")
    _data_args(p)
    p.add_argument("--beta", help="tuning value (default 0)")
    p.add_argument("--delta", help="comma-separated local alternative direction (length r)")
    p.add_argument("--epsilon", type=float, help="contamination size; enables contaminated power")
    p.add_argument("--contam-y", type=float, default=0.0, help="contamination point")
    p.add_argument("--contam-rows", help="1-based rows receiving contamination (default all)")

    p = add("simulate", cmd_simulate, "Monte Carlo size and power", fmt="json")
    p.add_argument("--scenario", help="key = value scenario file")
    return ap


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    ns = build_parser().parse_args(argv)
    buf = io.StringIO()
    try:
        code = ns.fn(ns, buf)
    except DataError as exc:
        print(f"bpbeta: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"bpbeta: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BpBetaError as exc:  # pragma: no cover - every error is one of the two families
        print(f"bpbeta: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"bpbeta: {exc}", file=sys.stderr)
        return EXIT_DATA
    out.write(buf.getvalue())
    return code


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
