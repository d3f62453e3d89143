"""Batch command line: bounds, provisioning, the reference simulations and audits.

Exit codes: 0 success or feasible, 2 input error, 3 infeasible, 4 insufficient data.
Every command that is given ``--out`` writes its artifacts and a
``manifest.json`` into that directory; reruns with the same manifest produce
byte-identical files.
"""
from __future__ import annotations

import argparse
import base64
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audit import (
    attribute_bound_sensitivity,
    attribute_simulation,
    audit_report,
    load_telemetry,
)
from .contracts import (
    envelope_from_dict,
    offer_from_dict,
    slo_from_dict,
    tre_from_dict,
    verify_tre,
)
from .errors import (
    EmptySample,
    Infeasible,
    InsufficientTail,
    MalformedKeyError,
    NoPath,
    DeadlineBelowFloor,
    SerializationError,
    TreAssureError,
    Unstable,
)
from .provision import ProvisionConfig, solve_federated
from .sim import TandemConfig, derive_trial_seed, slotted_validate
from .sim import scenarios as sc
from .snc import aggregate_path, feasibility_check, tandem_bound

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_DATA = 0, 2, 3, 4
SCENARIOS = ("sweep-load", "isolation", "degradation", "validate-bound", "all")

_VALIDATE_DESIGNS = (
    {"lambda": 0.3, "theta": 1.0, "R": 1.0, "T": 0.0},
    {"lambda": 0.5, "theta": 0.5, "R": 1.0, "T": 1.0},
    {"lambda": 0.2, "theta": 2.0, "R": 1.0, "T": 0.0},
    {"lambda": 1.0, "theta": 0.3, "R": 1.5, "T": 0.5},
    {"lambda": 2.0, "theta": 0.2, "R": 3.0, "T": 0.5},
)


class InputError(TreAssureError):
    """Configuration is missing, malformed or fails signature checks."""


# -- helpers -----------------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    return cfg


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, (set, frozenset, tuple)):
        return sorted(o) if isinstance(o, (set, frozenset)) else list(o)
    if isinstance(o, bytes):
        return base64.b64encode(o).decode("ascii")
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _keyring(cfg) -> dict:
    keys = {}
    for signer, value in (cfg.get("public_keys") or {}).items():
        try:
            keys[signer] = base64.b64decode(value, validate=True)
        except (ValueError, TypeError) as exc:
            raise InputError(f"public key for {signer!r} is not base64") from exc
    return keys


def _check_signatures(tres, cfg, unsigned: bool):
    if unsigned:
        return
    keys = _keyring(cfg)
    for t in tres:
        if not t.signature:
            raise InputError(f"TRE {t.domain_id}/{t.reservation_class} is unsigned "
                             "(pass --unsigned to accept unsigned contracts)")
        if t.signer_id not in keys:
            raise InputError(f"no public key for signer {t.signer_id!r}")
        try:
            ok = verify_tre(t, keys[t.signer_id])
        except MalformedKeyError as exc:
            raise InputError(str(exc)) from exc
        if not ok:
            raise InputError(f"signature of {t.domain_id}/{t.reservation_class} does not verify")


def _tres(cfg) -> list:
    raw = cfg.get("tres")
    if raw is None and "tre" in cfg:
        raw = [cfg["tre"]]
    if not raw:
        raise InputError("config needs a non-empty 'tres' list")
    tres = [tre_from_dict(t) for t in raw]
    _check_invariants(tres)
    return tres


def _check_invariants(tres):
    for t in tres:
        bad = t.invariant_violations()
        if bad:
            raise InputError(f"TRE {t.domain_id}/{t.reservation_class}: "
                             + "; ".join(detail for _, detail in bad))


def _require(cfg, key):
    if key not in cfg:
        raise InputError(f"config is missing {key!r}")
    return cfg[key]


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(cfg.get("seed", 0))


def _trials(args, cfg) -> int:
    if args.trials is not None:
        return int(args.trials)
    return int(cfg.get("n_trials", 100))


def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w", newline="") as fh:
        fh.write(text)


def _manifest(args, seed, trials) -> str:
    return _dump({
        "command": args.command + (f" {args.scenario}" if getattr(args, "scenario", None) else ""),
        "config_path": args.config,
        "master_seed": seed,
        "output_dir": args.out,
        "n_trials": trials,
        "tool_version": __version__,
    })


def _emit(args, report: dict, name: str, seed=None, trials=None):
    text = _dump(report)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        _write(out, name, text)
        _write(out, "manifest.json", _manifest(args, seed, trials))


# -- commands ----------------------------------------------------------------

def cmd_bound(args) -> int:
    cfg = _load_config(args.config)
    tres = _tres(cfg)
    if len(tres) != 1:
        raise InputError("'bound' takes exactly one TRE; use 'compose' for paths")
    _check_signatures(tres, cfg, args.unsigned)
    env = envelope_from_dict(_require(cfg, "envelope"))
    b = tandem_bound(aggregate_path(tres), env, float(_require(cfg, "tau")))
    _emit(args, {"bound": vars(b)}, "bound.json")
    return EXIT_OK


def cmd_compose(args) -> int:
    cfg = _load_config(args.config)
    tres = _tres(cfg)
    _check_signatures(tres, cfg, args.unsigned)
    desc = aggregate_path(tres)
    report = {"path": {k: v for k, v in vars(desc).items()}}
    if "envelope" in cfg and "tau" in cfg:
        env = envelope_from_dict(cfg["envelope"])
        report["bound"] = vars(tandem_bound(desc, env, float(cfg["tau"])))
    _emit(args, report, "compose.json")
    return EXIT_OK


def cmd_feasible(args) -> int:
    cfg = _load_config(args.config)
    tres = _tres(cfg)
    _check_signatures(tres, cfg, args.unsigned)
    env = envelope_from_dict(_require(cfg, "envelope"))
    if "slo" in cfg:
        slo = slo_from_dict(cfg["slo"])
        tau, eps = slo.tau, slo.epsilon
    else:
        tau, eps = float(_require(cfg, "tau")), float(_require(cfg, "epsilon"))
    rep = feasibility_check(aggregate_path(tres), env, tau, eps)
    _emit(args, {"feasibility": vars(rep)}, "feasible.json")
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_provision(args) -> int:
    cfg = _load_config(args.config)
    stages = [[offer_from_dict(o) for o in stage] for stage in _require(cfg, "stages")]
    if not stages or any(not s for s in stages):
        raise InputError("every stage needs at least one offer")
    offered = [t for st in stages for o in st for t in o.tres]
    _check_invariants(offered)
    _check_signatures(offered, cfg, args.unsigned)
    slos = [slo_from_dict(s) for s in _require(cfg, "slos")]
    envs = {k: envelope_from_dict(v) for k, v in _require(cfg, "envelopes").items()}
    missing = [s.tenant_id for s in slos if s.tenant_id not in envs]
    if missing:
        raise InputError(f"no arrival envelope for tenants {missing}")
    config = ProvisionConfig.from_dict(cfg.get("config") or {})
    try:
        plan = solve_federated(stages, slos, envs, cfg.get("policy", ()), config)
    except Infeasible as exc:
        sys.stdout.write(_dump({"status": "infeasible", "reason": str(exc),
                                "report": getattr(exc, "report", None)}))
        return EXIT_INFEASIBLE
    sys.stdout.write(_dump(plan.to_dict()))
    if args.out:
        out = Path(args.out)
        _write(out, "plan.json", _dump(plan.to_dict()))
        rows = [[i, p, d] for i, p, d in plan.residual_trace]
        _write(out, "residuals.csv", sc.write_csv(["iteration", "primal", "dual"], rows))
        _write(out, "manifest.json", _manifest(args, None, None))
    return EXIT_OK


def _reference_tandem(cfg, lam=0.0, seed=0) -> TandemConfig:
    return TandemConfig(tuple(cfg.get("mu", sc.MU)), tuple(cfg.get("shifts", sc.SHIFTS)), lam,
                        int(cfg.get("n_packets", sc.N_PACKETS)), seed)


def _run_sweep(cfg, seed, trials) -> dict:
    be, tre = sc.sweep_load(
        _reference_tandem(cfg, seed=seed), cfg.get("rho_grid", sc.RHO_GRID), float(cfg.get("tau", sc.TAU)),
        float(cfg.get("guard", sc.GUARD)), int(cfg.get("bisect_iters", sc.BISECT_ITERS)),
        trials, derive_trial_seed(seed, 1))
    return {"sweep_load.csv": sc.sweep_csv(be, tre)}


def _run_isolation(cfg, seed, trials) -> dict:
    mu = float(cfg.get("isolation_mu", min(cfg.get("mu", sc.MU))))
    kw = dict(mu=mu,
              lam_v=float(cfg.get("lambda_v", sc.VICTIM_LOAD * mu)),
              lam_a=float(cfg.get("lambda_a", sc.ATTACKER_MEAN * mu)),
              b_grid=cfg.get("b_grid", sc.B_GRID), s_v=float(cfg.get("s_v", sc.VICTIM_SHARE)),
              n_packets=int(cfg.get("n_packets", sc.N_PACKETS)), n_trials=trials,
              master_seed=derive_trial_seed(seed, 2))
    return {f"isolation_{mode}.csv": sc.isolation_csv(sc.isolation_scenario(mode=mode, **kw))
            for mode in ("shared", "reserved")}


def _run_degradation(cfg, seed, trials) -> dict:
    mu = cfg.get("mu", sc.MU)
    lam = float(cfg.get("degradation_load", sc.DEGRADATION_LOAD)) * min(mu)
    res = sc.degradation_scenario(_reference_tandem(cfg, lam, seed), cfg.get("s_grid", sc.S_GRID), trials,
                                  derive_trial_seed(seed, 3))
    return {"degradation.csv": sc.degradation_csv(res)}


def _run_validate(cfg, seed, trials) -> dict:
    spec = cfg.get("validate", {})
    designs = spec.get("designs", _VALIDATE_DESIGNS)
    tau_grid = spec.get("tau_grid", [float(x) for x in range(1, 11)])
    n_slots = int(spec.get("n_slots", 200_000))
    rows = []
    for i, d in enumerate(designs):
        pts = slotted_validate(float(d["lambda"]), float(d["theta"]), float(d["R"]),
                               float(d.get("T", 0.0)), tau_grid, n_slots,
                               derive_trial_seed(derive_trial_seed(seed, 4), i))
        for p in pts:
            rows.append([i, d["lambda"], d["theta"], d["R"], d.get("T", 0.0), p.tau,
                         p.frequency, p.stderr, p.bound, p.dominated])
    return {"validate_bound.csv": sc.write_csv(
        ["design", "lambda", "theta", "R", "T", "tau", "frequency", "stderr", "bound",
         "dominated"], rows)}


_RUNNERS = {
    "sweep-load": _run_sweep,
    "isolation": _run_isolation,
    "degradation": _run_degradation,
    "validate-bound": _run_validate,
}


def run_scenarios(scenario: str, cfg: dict, seed: int, trials: int) -> dict:
    """CSV text of each output file keyed by file name."""
    names = list(_RUNNERS) if scenario == "all" else [scenario]
    out = {}
    for name in names:
        out.update(_RUNNERS[name](cfg, seed, trials))
    return out


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    seed, trials = _seed(args, cfg), _trials(args, cfg)
    if trials < 1:
        raise InputError("--trials must be at least 1")
    files = run_scenarios(args.scenario, cfg, seed, trials)
    out = Path(args.out or ".")
    for name, text in files.items():
        _write(out, name, text)
    _write(out, "manifest.json", _manifest(args, seed, trials))
    for name in files:
        sys.stdout.write(f"{out / name}\n")
    return EXIT_OK


def _attribution_from_csv(path, s_value=None):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InputError("degradation CSV is empty")
    stable = [r for r in rows if r.get("saturated_all", "0") in ("0", "False")
              and float(r["s"]) < 1.0]
    pick = [r for r in rows if s_value is not None and math.isclose(float(r["s"]), s_value)]
    row = (pick or stable or rows)[0]
    only = {k[len("dq_only_"):]: float(v) for k, v in row.items() if k.startswith("dq_only_")}
    return attribute_simulation(float(row["dq_all"]), only)


def cmd_audit(args) -> int:
    cfg = _load_config(args.config)
    base = Path(args.config).parent if args.config else Path(".")
    telemetry = _require(cfg, "telemetry")
    samples = load_telemetry(str(base / telemetry)) if isinstance(telemetry, str) \
        else np.asarray(telemetry, dtype=float)
    slo = slo_from_dict(_require(cfg, "slo"))
    tres = _tres(cfg)
    _check_signatures(tres, cfg, args.unsigned)
    env = envelope_from_dict(_require(cfg, "envelope"))
    bound = tandem_bound(aggregate_path(tres), env, slo.tau)
    if "degradation_csv" in cfg:
        attribution = _attribution_from_csv(base / cfg["degradation_csv"], cfg.get("attribution_s"))
    else:
        attribution = attribute_bound_sensitivity(tres, env, slo.tau)
    seed = _seed(args, cfg)
    report = audit_report(
        samples, slo, bound, tres, frac=float(cfg.get("frac", 0.98)),
        n_bootstrap=int(cfg.get("n_bootstrap", 200)),
        confidence=float(cfg.get("confidence", 0.95)), seed=seed, attribution=attribution,
        payment=float(cfg.get("payment", 0.0)), penalty=float(cfg.get("penalty", 0.0)))
    _emit(args, report, "audit.json", seed)
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="64-bit master seed")
    common.add_argument("--trials", type=int, help="Monte-Carlo trials per grid point")
    common.add_argument("--out", help="output directory")
    common.add_argument("--unsigned", action="store_true",
                        help="accept TREs without verifying signatures")
    p = argparse.ArgumentParser(prog="tre-assure", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("bound", parents=[common], help="single-domain delay-violation bound")
    sub.add_parser("compose", parents=[common], help="path aggregation and tandem bound")
    sub.add_parser("feasible", parents=[common], help="end-to-end feasibility check")
    sub.add_parser("provision", parents=[common], help="federated reservation plan")
    sim = sub.add_parser("simulate", parents=[common], help="reference Monte-Carlo scenarios")
    sim.add_argument("scenario", choices=SCENARIOS)
    sub.add_parser("audit", parents=[common], help="EVT audit of telemetry against contracts")
    return p


_COMMANDS = {
    "bound": cmd_bound, "compose": cmd_compose, "feasible": cmd_feasible,
    "provision": cmd_provision, "simulate": cmd_simulate, "audit": cmd_audit,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if "TRE_ASSURE_THREADS" in os.environ and not os.environ["TRE_ASSURE_THREADS"].isdigit():
        print("error: TRE_ASSURE_THREADS must be a positive integer", file=sys.stderr)
        return EXIT_INPUT
    try:
        return _COMMANDS[args.command](args)
    except (InsufficientTail, EmptySample) as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (Infeasible, NoPath, DeadlineBelowFloor, Unstable) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, SerializationError, TreAssureError, KeyError, TypeError,
            ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
