"""Command-line front end: ``bd-spectra <subcommand> [flags]``.

Exit codes: 0 success, 1 failed validation, 2 configuration error, 3 solver error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from typing import Optional

from . import io
from .analysis import localization_report, solve, spectrum_convergence
from .eigensolve import DEFAULT_TOL, SolverError
from .limit_spectra import LimitSpectrum, merge_eta
from .model import ModelError, RateModel, model_constants
from .qsd import QsdError, pi_weights, qsd_from_ground_state
from .simulate import (Fixed, FromQsd, SimulationConfig, SimulationError, default_t_max,
                       extinction_study)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["main", "build_parser", "CliConfig", "ConfigError"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

MODEL_KEYS = {"model", "lambda", "mu", "theta"}
TOP_KEYS = {"K", "K_list", "num_eigs", "tol", "seed", "trajectories", "out", "format",
            "count", "t_max", "initial"}
DEFAULT_MODEL = {"model": "logistic", "lambda": 2.0, "mu": 1.0}
_INT_KEYS = {"K", "num_eigs", "seed", "trajectories", "count", "initial"}
_NUM_KEYS = {"tol", "t_max"}
_STR_KEYS = {"out", "format"}


class ConfigError(ValueError):
    pass


@dataclass
class CliConfig:
    model: Optional[RateModel] = None
    K: Optional[int] = None
    K_list: Optional[list] = None
    num_eigs: Optional[int] = None
    tol: float = DEFAULT_TOL
    seed: int = 0
    trajectories: int = 2000
    count: int = 7
    t_max: Optional[float] = None
    initial: Optional[int] = None
    out: str = "-"
    format: str = "csv"


# -- parsing ------------------------------------------------------------------

def _k_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--K-list must be comma-separated integers, got {text!r}")


def _common(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=["logistic", "age", "smith"])
    g.add_argument("--lambda", dest="lam", type=float, metavar="LAMBDA")
    g.add_argument("--mu", type=float)
    g.add_argument("--theta", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--K-list", dest="K_list", type=_k_list)
    p.add_argument("--num-eigs", dest="num_eigs", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--trajectories", type=int)
    p.add_argument("--out", help="output path, '-' for standard output (default)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--config", help="TOML file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bd-spectra",
        description="Spectra of scaled birth-and-death generators and their limits. "
                    "With no model flags the logistic model with lambda=2, mu=1 is used.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="lowest rho_j at one K: j,rho,residual")
    _common(p)
    p.add_argument("--dump-operator", dest="dump_operator", metavar="PATH",
                   help="also write n,diag,offdiag of the truncated operator")

    p = sub.add_parser("limit", help="merged limit sequence: index,eta,tag")
    _common(p)
    p.add_argument("--count", type=int, help="number of eta values (default 7)")

    p = sub.add_parser("qsd", help="quasi-stationary distribution at one K: n,nu")
    _common(p)
    p.add_argument("--summary", metavar="PATH",
                   help="write the JSON summary here instead of standard error")

    p = sub.add_parser("converge", help="rho_j against eta_j over --K-list: K,j,rho,eta,abs_err")
    _common(p)
    p.add_argument("--localization", metavar="PATH",
                   help="also write K,j,n_l,n_r,mid_sup,mass_left,mass_right")

    p = sub.add_parser("simulate", help="Gillespie extinction study: traj,extinction_time,censored")
    _common(p)
    p.add_argument("--t-max", dest="t_max", type=float,
                   help="censoring time (default 50/rho0)")
    p.add_argument("--initial", type=int,
                   help="fixed initial state (default: draw from the QSD)")
    p.add_argument("--survival", metavar="PATH", help="also write t,survivors_fraction")

    p = sub.add_parser("validate", help="run the acceptance suite; nonzero exit on failure")
    _common(p)
    return parser


def _load_config(path):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    model = raw.pop("model", None)
    if model is not None and not isinstance(model, dict):
        raise ConfigError("config key 'model' must be a table")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, value in raw.items():
        if key in _INT_KEYS:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif key in _NUM_KEYS:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif key in _STR_KEYS:
            ok = isinstance(value, str)
        else:  # K_list
            ok = isinstance(value, list) and all(isinstance(v, int) for v in value)
        if not ok:
            raise ConfigError(f"config key {key!r} has the wrong type: {value!r}")
    if model:
        bad = set(model) - MODEL_KEYS
        if bad:
            raise ConfigError(f"unknown keys in [model]: {sorted(bad)}")
    return raw, model or {}


def _resolve_model(args, file_model):
    flags = {"model": args.model, "lambda": args.lam, "mu": args.mu, "theta": args.theta}
    given = {k: v for k, v in flags.items() if v is not None}
    spec = dict(file_model)
    spec.update(given)
    if not spec:
        spec = dict(DEFAULT_MODEL)
    if "model" not in spec:
        raise ConfigError("missing --model")
    need = ["lambda", "mu"] + (["theta"] if spec["model"] == "age" else [])
    for key in need:
        if key not in spec:
            raise ConfigError(f"missing --{key} for model {spec['model']!r}")
    if spec["model"] != "age" and "theta" in spec:
        raise ConfigError(f"--theta applies only to the age model, not {spec['model']!r}")
    try:
        model = RateModel.from_config(spec)
        model_constants(model)
    except ModelError as exc:
        raise ConfigError(f"invalid model: {exc}") from None
    return model


def resolve(args) -> CliConfig:
    file_top, file_model = _load_config(args.config) if args.config else ({}, {})
    cfg = CliConfig()
    for key, value in file_top.items():
        setattr(cfg, key, value)
    for key in TOP_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.model = _resolve_model(args, file_model)
    if cfg.K is not None and cfg.K < 1:
        raise ConfigError(f"--K must be >= 1, got {cfg.K}")
    if cfg.K_list is not None:
        if not cfg.K_list or any(k < 1 for k in cfg.K_list):
            raise ConfigError(f"--K-list entries must be >= 1, got {cfg.K_list}")
        if any(b <= a for a, b in zip(cfg.K_list, cfg.K_list[1:])):
            raise ConfigError("--K-list must be strictly increasing")
    if cfg.num_eigs is not None and cfg.num_eigs < 1:
        raise ConfigError(f"--num-eigs must be >= 1, got {cfg.num_eigs}")
    if not cfg.tol >= 1e-14:
        raise ConfigError(f"--tol must be >= 1e-14, got {cfg.tol}")
    if cfg.trajectories < 1:
        raise ConfigError(f"--trajectories must be >= 1, got {cfg.trajectories}")
    if cfg.count < 1:
        raise ConfigError(f"--count must be >= 1, got {cfg.count}")
    if cfg.format not in ("csv", "json"):
        raise ConfigError(f"--format must be csv or json, got {cfg.format!r}")
    return cfg


def _require_K(cfg):
    if cfg.K is None:
        raise ConfigError("missing --K")
    return cfg.K


# -- emitting ---------------------------------------------------------------------

def _emit(cfg, header, rows, meta=None):
    rows = list(rows)
    with io.open_output(cfg.out) as fh:
        if cfg.format == "json":
            doc = dict(meta or {})
            doc["rows"] = io.rows_to_records(header, rows)
            io.write_json(fh, doc)
        else:
            io.write_csv(fh, header, rows)


def _side_csv(path, header, rows):
    with io.open_output(path) as fh:
        io.write_csv(fh, header, rows)


# -- subcommands ------------------------------------------------------------------

def cmd_spectrum(cfg, args):
    K = _require_K(cfg)
    op, spec = solve(cfg.model, K, cfg.num_eigs or 6, cfg.tol)
    if args.dump_operator:
        _side_csv(args.dump_operator, ["n", "diag", "offdiag"], op.csv_rows())
    _emit(cfg, ["j", "rho", "residual"], spec.csv_rows(),
          {"model": cfg.model.describe(), "K": K, "N": op.N, "floor": spec.floor.tolist()})
    return EXIT_OK


def cmd_limit(cfg, args):
    seq = merge_eta(LimitSpectrum.from_constants(model_constants(cfg.model)), cfg.count)
    _emit(cfg, ["index", "eta", "tag"], seq.csv_rows(), {"model": cfg.model.describe()})
    return EXIT_OK


def cmd_qsd(cfg, args):
    K = _require_K(cfg)
    if K < 2:
        raise ConfigError("qsd needs --K >= 2")
    op, spec = solve(cfg.model, K, 1, cfg.tol)
    q = qsd_from_ground_state(op, spec, pi_weights(cfg.model, K, op.N),
                              model_constants(cfg.model), cfg.model)
    summary = q.summary()
    _emit(cfg, ["n", "nu"], q.csv_rows(), {"summary": summary})
    if args.summary:
        with io.open_output(args.summary) as fh:
            io.write_json(fh, summary)
    elif cfg.format == "csv":
        io.write_json(sys.stderr, summary)
    return EXIT_OK


def cmd_converge(cfg, args):
    if cfg.K_list is None:
        if cfg.K is None:
            raise ConfigError("missing --K-list")
        cfg.K_list = [cfg.K]
    j_max = (cfg.num_eigs or 5) - 1
    if j_max > 8:
        raise ConfigError(f"--num-eigs must be <= 9 for converge, got {cfg.num_eigs}")
    rep = spectrum_convergence(cfg.model, cfg.K_list, j_max, cfg.tol)
    _emit(cfg, ["K", "j", "rho", "eta", "abs_err"], rep.csv_rows(), {"summary": rep.summary()})
    if args.localization:
        rows = []
        for K in cfg.K_list:
            op, spec = solve(cfg.model, K, j_max + 1, cfg.tol)
            rows.extend(localization_report(op, spec, cfg.model, K, j).csv_row()
                        for j in range(spec.k))
        _side_csv(args.localization, ["K", "j", "n_l", "n_r", "mid_sup", "mass_left", "mass_right"],
                  rows)
    return EXIT_OK


def cmd_simulate(cfg, args):
    K = _require_K(cfg)
    op, spec = solve(cfg.model, K, 1, cfg.tol)
    rho0 = float(spec.rhos[0])
    if cfg.t_max is None:
        if rho0 <= 0:
            raise SolverError("rho0 is at the solver floor; pass --t-max explicitly")
        cfg.t_max = default_t_max(rho0)
    if cfg.initial is not None:
        if cfg.initial < 0:
            raise ConfigError(f"--initial must be >= 0, got {cfg.initial}")
        initial = Fixed(cfg.initial)
    else:
        initial = FromQsd(qsd_from_ground_state(op, spec, pi_weights(cfg.model, K, op.N)))
    try:
        sim = SimulationConfig(seed=cfg.seed, n_traj=cfg.trajectories, t_max=float(cfg.t_max),
                               initial=initial)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    st = extinction_study(cfg.model, K, sim)
    meta = {"K": K, "seed": cfg.seed, "rho0": rho0, "t_max": st.t_max, "mean": st.mean,
            "stderr": st.stderr, "censored_fraction": st.censored_fraction,
            "bias_flag": st.bias_flag}
    _emit(cfg, ["traj", "extinction_time", "censored"], st.csv_rows(), meta)
    if args.survival:
        _side_csv(args.survival, ["t", "survivors_fraction"], st.survival_rows())
    return EXIT_OK


def cmd_validate(cfg, args):
    from .validation import run_all

    def progress(res):
        print(res.line(), file=sys.stderr, flush=True)

    results = run_all(progress)
    rows = [(r.name, int(r.passed), r.seconds) for r in results]
    _emit(cfg, ["check", "passed", "seconds"], rows,
          {"details": {r.name: r.detail for r in results}})
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {
    "spectrum": cmd_spectrum,
    "limit": cmd_limit,
    "qsd": cmd_qsd,
    "converge": cmd_converge,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ModelError) as exc:
        print(f"bd-spectra: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, QsdError, SimulationError) as exc:
        print(f"bd-spectra: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
