"""Command-line front end: ``grss {sample,fit,info,simulate,tables,fixtures}``.

Settings can also come from a flat ``key=value`` file given with ``--config``;
keys are the long flag names with ``-`` or ``_``, and flags on the command line
win.  Exit status is 0 on success, 2 on a usage error and 1 on a numeric
failure, which is reported on stderr together with the stage that failed.
Output files are written to a temporary name and renamed on success.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .distributions import Family, LocationScaleModel
from .errors import GrssError
from .estimation import fit_mle
from .information import CoefficientRule, ConditionalMethod, fit_std_errors, information_report
from .likelihood import Mode
from .sampling import draw_grss, format_dataset, read_dataset
from .simulation import (
    TABLE_SIGMAS,
    SimConfig,
    TableRow,
    fixture_report,
    format_fixture_report,
    format_table_csv,
    run_sim,
    run_table,
    table_file_name,
    table_grid,
)

_FAMILIES = [f.value for f in Family]

# Defaults applied after the config file, so a file value beats a default.
_DEFAULTS = {
    "mu": 0.0,
    "sigma": 1.0,
    "mode": "grss",
    "rule": "chen",
    "method": "quadrature",
    "param": "scale",
    "replicates": 20_000,
    "bootstrap_b": 10_000,
    "workers": 1,
    "output_dir": ".",
    "families": ",".join(_FAMILIES),
    "sigmas": ",".join(TABLE_SIGMAS),
}

_REQUIRED = {
    "sample": ("family", "m", "r"),
    "fit": ("input", "family"),
    "info": ("family", "m", "r"),
    "simulate": ("family", "m", "r", "seed"),
    "tables": ("seed",),
    "fixtures": (),
}


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grss", description="Ranked set sampling with binomial counts: sampling, MLE, information, simulation."
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="subcommand")

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, argument_default=None)
        p.add_argument("--config", help="flat key=value settings file; flags override it")
        p.add_argument("--output", "-o", help="output file (default: stdout)")
        return p

    def model_args(p, with_seed: bool):
        p.add_argument("--family", choices=_FAMILIES + ["exp"], help="parent family")
        p.add_argument("--mu", type=float, help="location (default 0)")
        p.add_argument("--sigma", type=float, help="scale, never the variance (default 1)")
        p.add_argument("--m", type=int, help="set size")
        p.add_argument("--r", type=int, help="number of cycles")
        if with_seed:
            p.add_argument("--seed", type=int, help="root random seed")

    p = add("sample", "draw a GRSS (or RSS) dataset")
    model_args(p, True)
    p.add_argument("--mode", choices=["grss", "rss"], help="write counts (grss, default) or not")

    p = add("fit", "maximum-likelihood fit of a dataset file")
    p.add_argument("--input", "-i", help="dataset file")
    p.add_argument("--family", choices=_FAMILIES + ["exp"])
    p.add_argument("--mode", choices=["grss", "rss"], help="likelihood to maximise (default grss)")

    p = add("info", "Fisher information matrices and asymptotic SDs")
    model_args(p, True)
    p.add_argument("--rule", choices=["chen", "paper"], help="Delta multiplier m-1 (chen, default) or r-1")
    p.add_argument("--method", choices=[m.value for m in ConditionalMethod],
                   help="conditional information method (default quadrature)")
    p.add_argument("--param", choices=["scale", "variance"],
                   help="second coordinate sigma (default) or sigma^2")
    p.add_argument("--replicates", type=int, help="Monte Carlo cycles for --method montecarlo")

    p = add("simulate", "bias and MSE for one configuration, as CSV")
    model_args(p, True)
    p.add_argument("--replicates", type=int, help="replicate count N (default 20000)")
    p.add_argument("--workers", type=int, help="worker processes; never changes the output")

    p = add("tables", "the full table grid, one CSV per family and scale")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int, help="replicates per cell (default 20000)")
    p.add_argument("--families", help="comma-separated families (default all)")
    p.add_argument("--sigmas", help=f"comma-separated scale tags from {list(TABLE_SIGMAS)}")
    p.add_argument("--output-dir", help="directory for the CSV files (default .)")
    p.add_argument("--workers", type=int)

    p = add("fixtures", "fits and bootstrap MSEs for the four example datasets")
    p.add_argument("--seed", type=int, help="bootstrap seed (default: OS entropy, echoed)")
    p.add_argument("--bootstrap-b", type=int, help="bootstrap replicates (default 10000; 0 skips)")
    p.add_argument("--strict-paper", action="store_true", default=None,
                   help="bootstrap from a normal model whatever the family")
    p.add_argument("--workers", type=int)
    return parser


def _read_config(path: str, parser: argparse.ArgumentParser, command: str) -> dict:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    actions = {a.dest: a for a in sub.choices[command]._actions if a.dest not in ("help", "config")}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().replace("-", "_"), value.strip()
        if not sep or not key:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        if key == "subcommand":
            if value != command:
                raise UsageError(f"{path}:{lineno}: config is for {value!r}, not {command!r}")
            continue
        key = {"output_path": "output", "input_path": "input", "coefficient_rule": "rule"}.get(key, key)
        if key not in actions:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r} for {command}")
        action = actions[key]
        try:
            if isinstance(action, argparse._StoreTrueAction):
                out[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                out[key] = action.type(value) if action.type else value
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
        if action.choices is not None and out[key] not in action.choices:
            raise UsageError(f"{path}:{lineno}: {key} must be one of {list(action.choices)}")
    return out


def _settings(argv, parser) -> argparse.Namespace:
    args = parser.parse_args(argv)
    merged = {k: v for k, v in vars(args).items()}
    if args.config:
        for key, value in _read_config(args.config, parser, args.subcommand).items():
            if merged.get(key) is None:
                merged[key] = value
    for key, value in _DEFAULTS.items():
        if key in merged and merged[key] is None:
            merged[key] = value
    missing = [k for k in _REQUIRED[args.subcommand] if merged.get(k) is None]
    if missing:
        raise UsageError(f"{args.subcommand} needs " + ", ".join("--" + k.replace("_", "-") for k in missing))
    for key in ("m", "r", "replicates", "workers"):
        if merged.get(key) is not None and merged[key] < 1:
            raise UsageError(f"--{key} must be at least 1")
    if merged.get("bootstrap_b") is not None and (merged["bootstrap_b"] < 0 or merged["bootstrap_b"] == 1):
        raise UsageError("--bootstrap-b must be 0 or at least 2")
    if merged.get("seed") is not None and not 0 <= merged["seed"] < 2**64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    return argparse.Namespace(**merged)


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g6(x: float) -> str:
    return f"{x:.6g}"


def _model(a) -> LocationScaleModel:
    try:
        return LocationScaleModel(Family.parse(a.family), a.mu, a.sigma)
    except GrssError as exc:
        raise UsageError(str(exc)) from None


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (GrssError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise StageError(name, str(exc)) from exc


def _cmd_sample(a) -> int:
    model = _model(a)
    seed = a.seed
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    data = _stage("sample", draw_grss, model, a.m, a.r, np.random.default_rng(seed))
    if a.mode == "rss":
        data = data.to_rss()
    _write(a.output, format_dataset(data, seed=seed))
    return 0


def _cmd_fit(a) -> int:
    try:
        data = read_dataset(a.input)
    except OSError as exc:
        raise UsageError(f"cannot read dataset: {exc}") from None
    except GrssError as exc:
        raise UsageError(f"bad dataset file {a.input}: {exc}") from None
    mode = Mode.parse(a.mode)
    if mode is Mode.GRSS and not hasattr(data, "z"):
        raise UsageError("GRSS fit needs a dataset with a z column; use --mode rss")
    fit = _stage("fit", fit_mle, data, Family.parse(a.family), mode)
    se = (math.nan, math.nan)
    if fit.converged:
        se = _stage("standard errors", _fit_se, fit, data)
    lines = [
        f"mode={mode.value}",
        f"family={fit.family.value}",
        f"mu_hat={_g6(fit.theta_hat.mu)}",
        f"sigma_hat={_g6(fit.theta_hat.sigma)}",
        f"loglik={_g6(fit.loglik_at_opt)}",
        f"converged={str(fit.converged).lower()}",
        f"se_mu={_g6(se[0])}",
        f"se_sigma={_g6(se[1])}",
    ]
    _write(a.output, "\n".join(lines) + "\n")
    if not fit.converged:
        print(f"grss: stage fit: no converged maximum ({fit.message})", file=sys.stderr)
        return 1
    return 0


def _fit_se(fit, data):
    return fit_std_errors(fit, data.m, data.r)


def _format_matrix(e: np.ndarray) -> str:
    finite = np.abs(e[np.isfinite(e)])
    scale = finite.max() if finite.size else 1.0
    cells = [
        "0" if math.isfinite(v) and abs(v) <= 1e-12 * scale else _g6(v)
        for v in e.ravel()
    ]
    return f"[[{cells[0]}, {cells[1]}],[{cells[2]}, {cells[3]}]]"


def _cmd_info(a) -> int:
    model = _model(a)
    rule = CoefficientRule.parse(a.rule)
    method = ConditionalMethod.parse(a.method)
    mc = {}
    if method is ConditionalMethod.MONTE_CARLO:
        mc = {"rng": a.seed}
        if a.replicates is not None:
            mc["replicates"] = a.replicates
    report = _stage("information", information_report, model.family, (model.mu, model.sigma),
                    a.m, a.r, rule, method, **mc)
    mats = {
        "srs": report.srs,
        "delta": report.delta,
        "i_x": report.x,
        "i_z_given_x": report.z_given_x,
        "i_total": report.total,
    }
    se_grss, se_rss = report.se_grss, report.se_rss
    if a.param == "variance":
        mats = {k: v.in_variance_parameterization(model.sigma) for k, v in mats.items()}
        # SD of sigma^2_hat = 2 sigma SD(sigma_hat) to first order.
        se_grss = (se_grss[0], 2 * model.sigma * se_grss[1])
        se_rss = (se_rss[0], 2 * model.sigma * se_rss[1])
    second = "sigma2" if a.param == "variance" else "sigma"
    lines = [
        f"family={model.family.value}",
        f"mu={_g6(model.mu)}",
        f"sigma={_g6(model.sigma)}",
        f"m={a.m}",
        f"r={a.r}",
        f"rule={rule.value}",
        f"method={method.value}",
        f"param={a.param}",
    ]
    lines += [f"{k} = {_format_matrix(v.entries)}" for k, v in mats.items()]
    lines += [
        f"se_mu_grss={_g6(se_grss[0])}",
        f"se_{second}_grss={_g6(se_grss[1])}",
        f"se_mu_rss={_g6(se_rss[0])}",
        f"se_{second}_rss={_g6(se_rss[1])}",
    ]
    _write(a.output, "\n".join(lines) + "\n")
    return 0


def _cmd_simulate(a) -> int:
    try:
        config = SimConfig(Family.parse(a.family), a.mu, a.sigma, a.m, a.r, a.replicates, a.seed)
    except GrssError as exc:
        raise UsageError(str(exc)) from None
    summary = _stage("simulate", run_sim, config, a.workers)
    rows = [
        TableRow(config.n, config.m, config.r, c.mode.value.upper(), c.param,
                 c.bias, c.mse, c.used, c.dropped)
        for c in summary.cells
    ]
    _write(a.output, format_table_csv(rows))
    if not summary.valid:
        print("grss: stage simulate: more than 5% of fits failed to converge; summary invalid",
              file=sys.stderr)
        return 1
    return 0


def _cmd_tables(a) -> int:
    try:
        families = [Family.parse(f) for f in a.families.split(",") if f.strip()]
        tags = [t.strip() for t in a.sigmas.split(",") if t.strip()]
        grids = {(f, t): table_grid(f, t, a.seed, a.replicates) for f in families for t in tags}
    except GrssError as exc:
        raise UsageError(str(exc)) from None
    if not grids:
        raise UsageError("no families or scales selected")
    out_dir = Path(a.output_dir)
    if not out_dir.is_dir():
        raise UsageError(f"output directory {out_dir} does not exist")
    for (family, tag), grid in grids.items():
        rows = _stage(f"tables ({family.value}, sigma {tag})", run_table, grid, a.workers)
        _write(str(out_dir / table_file_name(family, tag)), format_table_csv(rows))
    return 0


def _cmd_fixtures(a) -> int:
    seed = a.seed
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    rows = _stage("fixtures", fixture_report, B=a.bootstrap_b, seed=seed, workers=a.workers,
                  strict_paper=bool(a.strict_paper))
    header = f"# seed={seed} B={a.bootstrap_b} truth_mu=5 truth_sigma=3\n"
    _write(a.output, header + format_fixture_report(rows))
    return 0


_COMMANDS = {
    "sample": _cmd_sample,
    "fit": _cmd_fit,
    "info": _cmd_info,
    "simulate": _cmd_simulate,
    "tables": _cmd_tables,
    "fixtures": _cmd_fixtures,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = _settings(argv, parser)
        return _COMMANDS[args.subcommand](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"grss: usage error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"grss: stage {exc.stage}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"grss: stage write: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
