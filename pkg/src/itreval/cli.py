"""Command-line interface.

Every command writes one JSON document holding the resolved configuration,
the seed, the results and a timestamp (the only field that changes between
identical runs). Options may come from ``--config file.json``; flags given
on the command line take precedence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import resolve_threads
from .analysis import NewRuleAnalysis, PartialAnalysis, evaluate, recommendation, scheme_label
from .data import ColumnSpec, Dataset, LinearRule, load_csv
from .em import em_fit, implied_propensity
from .errors import ConfigError, ItrevalError
from .schemes import ALIASES
from .simulation import (COLUMN_LAYOUTS, ESTIMANDS, ScenarioConfig, SimStudyConfig,
                         ground_truth, run_study)

SCHEMA_VERSION = 1

# Defaults for every option that may appear in a config file, per command.
_COMMON = {"seed": None, "threads": None, "output": None}
_DATA = {"data": None, "treatment": "A", "outcome": "Y", "covariates": None,
         "rule": None, "rule_col": None}
_EM = {"gating_cols": None, "expert_cols": None, "em_tol": 1e-6, "em_max_iter": 500,
       "init_sd": 1.0, "multi_start": 1, "em_restarts": 10}
_BOOT = {"boot": 0, "ci_level": 0.95, "replicates_csv": None}

DEFAULTS = {
    "simulate": {**_COMMON, "scenario": "A", "n": 800, "iters": 200, "boot": 199,
                 "pop_size": 2_000_000, "ci_level": 0.95, "columns": "literal",
                 "em_restarts": 10, "table_csv": None, "iterations_csv": None},
    "ground-truth": {**_COMMON, "scenario": ["A", "B", "C"], "pop_size": 2_000_000,
                     "n_seeds": 1},
    "evaluate-new": {**_COMMON, **_DATA, **_BOOT, "mu_cols": None, "pi_cols": None,
                     "scheme": [], "alpha": [], "tau_tilde_col": None, "se_col": None,
                     "clip": None},
    "evaluate-partial": {**_COMMON, **_DATA, **_EM, **_BOOT, "mu_cols": None,
                         "pi_cols": None, "no_propensity": False,
                         "allow_nonconverged": False, "clip": None},
    "em-fit": {**_COMMON, **_DATA, **_EM},
}
SEED_OPTIONAL = {"evaluate-new"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _cols(text: str) -> list[str]:
    return [c.strip() for c in text.split(",") if c.strip()]


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="itreval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"itreval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    def common(p):
        p.add_argument("--config", default=S, help="JSON file of options; flags override it")
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("--threads", type=int, default=S,
                       help="worker processes (default: $ITREVAL_THREADS or 1)")
        p.add_argument("--output", "-o", default=S, help="result JSON path (default: stdout)")

    def data_opts(p):
        p.add_argument("--data", default=S, help="CSV file with a header row")
        p.add_argument("--treatment", default=S, help="treatment column (default A)")
        p.add_argument("--outcome", default=S, help="outcome column (default Y)")
        p.add_argument("--covariates", type=_cols, default=S,
                       help="comma-separated model covariates (default: all other columns)")
        p.add_argument("--rule", default=S, help='JSON file {"coefficients": {col: delta}}')
        p.add_argument("--rule-col", default=S, help="0/1 column holding the recommendation")

    def em_opts(p):
        p.add_argument("--gating-cols", type=_cols, default=S)
        p.add_argument("--expert-cols", type=_cols, default=S)
        p.add_argument("--em-tol", type=float, default=S)
        p.add_argument("--em-max-iter", type=int, default=S)
        p.add_argument("--init-sd", type=float, default=S)
        p.add_argument("--multi-start", type=int, default=S,
                       help="number of random starts; the best likelihood is kept")
        p.add_argument("--em-restarts", type=int, default=S,
                       help="extra starts tried while no start has converged")

    def boot_opts(p):
        p.add_argument("--boot", type=int, default=S, help="bootstrap replicates (0: none)")
        p.add_argument("--ci-level", type=float, default=S)
        p.add_argument("--replicates-csv", default=S, help="dump bootstrap replicates here")

    p = sub.add_parser("simulate", help="Monte Carlo study of the partial-regime estimators")
    common(p)
    p.add_argument("--scenario", choices=["A", "B", "C"], default=S)
    p.add_argument("--n", type=int, default=S)
    p.add_argument("--iters", type=int, default=S)
    p.add_argument("--boot", type=int, default=S)
    p.add_argument("--pop-size", type=int, default=S)
    p.add_argument("--ci-level", type=float, default=S)
    p.add_argument("--columns", choices=sorted(COLUMN_LAYOUTS), default=S)
    p.add_argument("--em-restarts", type=int, default=S)
    p.add_argument("--table-csv", default=S, help="metrics table (metric x estimand)")
    p.add_argument("--iterations-csv", default=S, help="per-iteration estimates and CIs")

    p = sub.add_parser("ground-truth", help="population values of MIG, ARE and AIE")
    common(p)
    p.add_argument("--scenario", choices=["A", "B", "C"], action="append", default=S)
    p.add_argument("--pop-size", type=int, default=S)
    p.add_argument("--n-seeds", type=int, default=S,
                   help="average over this many seeds (seed, seed+1, ...)")

    p = sub.add_parser("evaluate-new", help="evaluate a rule that has never been used")
    common(p)
    data_opts(p)
    boot_opts(p)
    p.add_argument("--mu-cols", type=_cols, default=S)
    p.add_argument("--pi-cols", type=_cols, default=S)
    p.add_argument("--scheme", action="append", default=S,
                   choices=sorted(ALIASES), help="implementation scheme (repeatable)")
    p.add_argument("--alpha", type=float, action="append", default=S,
                   help="scheme parameter, one per --scheme")
    p.add_argument("--tau-tilde-col", default=S)
    p.add_argument("--se-col", default=S)
    p.add_argument("--clip", type=float, default=S, help="clip propensities to [c, 1-c]")

    p = sub.add_parser("evaluate-partial", help="evaluate a partially implemented rule")
    common(p)
    data_opts(p)
    em_opts(p)
    boot_opts(p)
    p.add_argument("--mu-cols", type=_cols, default=S)
    p.add_argument("--pi-cols", type=_cols, default=S)
    p.add_argument("--no-propensity", action="store_true", default=S,
                   help="skip the IPW and AIPW estimators of the MIG")
    p.add_argument("--allow-nonconverged", action="store_true", default=S)
    p.add_argument("--clip", type=float, default=S)

    p = sub.add_parser("em-fit", help="fit the implementation mixture by EM")
    common(p)
    data_opts(p)
    em_opts(p)
    return parser


def resolve_config(argv: list[str]) -> dict:
    """Merge defaults, the optional config file and command-line flags."""
    ns = vars(_build_parser().parse_args(argv))
    command = ns.pop("command")
    defaults = DEFAULTS[command]
    cfg = dict(defaults)
    path = ns.pop("config", None)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        doc = {k.replace("-", "_"): v for k, v in doc.items()}
        doc.pop("command", None)
        unknown = sorted(set(doc) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown option(s) for {command}: {', '.join(unknown)}")
        cfg.update(doc)
    cfg.update(ns)
    if isinstance(cfg.get("scenario"), str) and command == "ground-truth":
        cfg["scenario"] = [cfg["scenario"]]
    if cfg["seed"] is None and command not in SEED_OPTIONAL:
        raise ConfigError(f"{command} needs --seed")
    if command == "evaluate-new" and cfg["boot"] > 0 and cfg["seed"] is None:
        raise ConfigError("bootstrap needs --seed")
    cfg["command"] = command
    return cfg


# -- commands -----------------------------------------------------------------

def _load(cfg: dict) -> tuple[Dataset, LinearRule | str, list[str]]:
    if not cfg["data"]:
        raise ConfigError("--data is required")
    if (cfg["rule"] is None) == (cfg["rule_col"] is None):
        raise ConfigError("give exactly one of --rule and --rule-col")
    data = load_csv(cfg["data"], cfg["treatment"], cfg["outcome"])
    rule = LinearRule.from_json(cfg["rule"]) if cfg["rule"] else cfg["rule_col"]
    if cfg["covariates"] is not None:
        model_cols = list(cfg["covariates"])
    else:
        aux = {cfg.get("rule_col"), cfg.get("tau_tilde_col"), cfg.get("se_col")}
        model_cols = [c for c in data.columns if c != "_intercept" and c not in aux]
    return data, rule, model_cols


def _spec(cfg: dict, model_cols: list[str]) -> ColumnSpec:
    def pick(key):
        v = cfg.get(key)
        return tuple(model_cols if v is None else v)
    return ColumnSpec(mu_cols=pick("mu_cols"), pi_cols=pick("pi_cols"),
                      gating_cols=pick("gating_cols"), expert_cols=pick("expert_cols"))


def _em_options(cfg: dict) -> dict:
    return {"tol": cfg["em_tol"], "max_iter": cfg["em_max_iter"], "init_sd": cfg["init_sd"],
            "n_starts": cfg["multi_start"], "max_restarts": cfg["em_restarts"]}


def _write_replicates(path, boot) -> None:
    keys = list(boot)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        # replicate vectors share length because failures drop whole replicates
        for row in zip(*(boot[k].replicates for k in keys)):
            w.writerow([f"{v:.17g}" for v in row])


def _scheme_meta(schemes) -> dict:
    return {scheme_label(k, a): {"kind": ALIASES[k], "alpha": a} for k, a in schemes}


def _evaluate(cfg: dict, regime: str, pipeline, data: Dataset, meta: dict) -> dict:
    seed = cfg["seed"] if cfg["seed"] is not None else 0
    reports, boot = evaluate(data, pipeline, regime, B=cfg["boot"], level=cfg["ci_level"],
                             seed=seed, threads=cfg["threads"])
    for rep in reports:
        if rep.scheme is not None:
            rep.scheme = meta.get(rep.scheme["label"], rep.scheme)
    if cfg["replicates_csv"] and boot:
        _write_replicates(cfg["replicates_csv"], boot)
    out = {"n": data.n, "estimates": [r.to_dict() for r in reports]}
    if boot:
        out["bootstrap"] = {"B": cfg["boot"], "ci_level": cfg["ci_level"],
                            "n_failed": next(iter(boot.values())).n_failed}
    return out


def cmd_evaluate_new(cfg: dict) -> dict:
    schemes = list(zip(cfg["scheme"], cfg["alpha"]))
    if len(cfg["scheme"]) != len(cfg["alpha"]):
        raise ConfigError("give one --alpha per --scheme")
    data, rule, model_cols = _load(cfg)
    pipeline = NewRuleAnalysis(_spec(cfg, model_cols), rule, tuple(schemes),
                               cfg["tau_tilde_col"], cfg["se_col"], cfg["clip"])
    return _evaluate(cfg, "new", pipeline, data, _scheme_meta(schemes))


def cmd_evaluate_partial(cfg: dict) -> dict:
    data, rule, model_cols = _load(cfg)
    pipeline = PartialAnalysis(_spec(cfg, model_cols), rule,
                               propensity=not cfg["no_propensity"],
                               em_options=_em_options(cfg),
                               allow_nonconverged=cfg["allow_nonconverged"], clip=cfg["clip"])
    return _evaluate(cfg, "partial", pipeline, data, {})


def cmd_em_fit(cfg: dict) -> dict:
    data, rule, model_cols = _load(cfg)
    spec = _spec(cfg, model_cols)
    rec = recommendation(rule, data)
    fit = em_fit(data, spec, rec, seed=cfg["seed"], **_em_options(cfg))
    out = fit.to_dict()
    pi = implied_propensity(fit, rec)
    out["diagnostics"] = {
        "mean_rho_hat": float(np.mean(fit.rho_hat)),
        "mean_posterior_h1": float(np.mean(fit.posterior_h1)),
        "mean_implied_propensity": float(np.mean(pi)),
        "treated_fraction": float(np.mean(data.treatment)),
        "rule_agreement": float(np.mean(rec == data.treatment)),
    }
    return out


def cmd_ground_truth(cfg: dict) -> dict:
    if cfg["n_seeds"] < 1:
        raise ConfigError("n-seeds must be >= 1")
    out = {}
    for sc in cfg["scenario"]:
        per_seed = [ground_truth(ScenarioConfig(sc, seed=cfg["seed"] + k), cfg["pop_size"])
                    for k in range(cfg["n_seeds"])]
        arr = np.array([[g[e] for e in ESTIMANDS] for g in per_seed])
        entry = dict(zip(ESTIMANDS, map(float, arr.mean(axis=0))))
        if cfg["n_seeds"] > 1:
            entry["sd_over_seeds"] = dict(zip(ESTIMANDS, map(float, arr.std(axis=0, ddof=1))))
            entry["per_seed"] = per_seed
        out[sc] = entry
    return out


def cmd_simulate(cfg: dict) -> dict:
    study = SimStudyConfig(
        scenario=ScenarioConfig(cfg["scenario"], seed=cfg["seed"]), n=cfg["n"],
        iterations=cfg["iters"], boot_B=cfg["boot"], pop_size=cfg["pop_size"],
        ci_level=cfg["ci_level"], columns=cfg["columns"], em_restarts=cfg["em_restarts"])
    res = run_study(study, threads=cfg["threads"])
    if cfg["table_csv"]:
        with Path(cfg["table_csv"]).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", *ESTIMANDS])
            for row in res.table_rows():
                w.writerow([row[0], *("" if v is None else f"{v:.6g}" for v in row[1:])])
    if cfg["iterations_csv"]:
        rows = res.iteration_rows()
        with Path(cfg["iterations_csv"]).open("w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    out = {"metrics": res.metrics.to_dict(), "truth": res.truth,
           "scenario": study.scenario.to_dict()}
    if res.n_boot_failed is not None:
        out["bootstrap_failed_total"] = int(res.n_boot_failed.sum())
    return out


COMMANDS = {
    "simulate": cmd_simulate,
    "ground-truth": cmd_ground_truth,
    "evaluate-new": cmd_evaluate_new,
    "evaluate-partial": cmd_evaluate_partial,
    "em-fit": cmd_em_fit,
}


def _origin(exc: BaseException) -> str:
    """Module of the innermost package frame that raised ``exc``."""
    module = __name__
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("itreval"):
            module = name
        tb = tb.tb_next
    return module


def _fail(exc: BaseException, code: int) -> int:
    record = {"error": type(exc).__name__, "module": _origin(exc), "message": str(exc),
              "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve_config(argv)
        threads = resolve_threads(cfg["threads"])
        cfg["threads"] = threads
        command = cfg["command"]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            results = COMMANDS[command](cfg)
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "config": {k: v for k, v in cfg.items() if k not in ("command", "threads", "output")},
            "seed": cfg["seed"],
            "results": results,
            "warnings": [str(w.message) for w in caught],
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"
        if cfg["output"]:
            Path(cfg["output"]).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return 0
    except ItrevalError as exc:
        return _fail(exc, exc.exit_code)
    except ValueError as exc:
        # plain ValueErrors from option values (e.g. threads < 1) are usage errors
        return _fail(exc, 2)
    except Exception as exc:  # noqa: BLE001 - surfaced as a one-line record
        traceback.print_exc(file=sys.stderr)
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
