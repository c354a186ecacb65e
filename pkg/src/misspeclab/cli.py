"""Command-line front door: run scenarios, checkers, and trajectories.

Configuration comes from an optional JSON file (``--config``) merged with
command-line overrides; unknown keys are rejected.  Every sampling command
requires a seed.  Output files embed the fully resolved configuration, and
identical (config, seed) pairs produce byte-identical files.

Exit codes: 0 success, 1 configuration or runtime error, 2 an assumption
checker returned a failing verdict (so CI jobs can gate on theorems).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Sequence

import numpy as np

from .checkers import check_assumption1, check_sufficient_2c, witness_to_json
from .divergences import (
    alpha_affinity,
    kl,
    kl_excess,
    l1,
    l1_metric,
    weighted_l1,
    weighted_l1_metric,
)
from .errors import ConfigError, MisspecLabError
from .inid import Design, FunctionClass, InidScenario, check_assumptions_CDE, inid_run
from .measures import catalog
from .posterior import RegionQuery, run_trajectory
from .projection import FiniteFamily, kl_minimizer, kl_profile
from .report import ExperimentReport
from .scenarios import (
    MixtureSpec,
    example1_report,
    example2_simulate,
    mixture_scenario,
)

__all__ = ["RunConfig", "run", "validate", "main"]

_COMMANDS = ("divergence", "project", "trajectory", "check", "counterexample", "inid-run", "mixture")

_KNOWN_KEYS = {
    "command", "seed", "output", "format", "scenario", "eps", "assumption",
    "alpha", "alpha0", "n_max", "reps", "id", "b_values", "f0", "f", "fstar",
    "record_every", "beta", "design_m", "design_csv", "tau",
}

_SAMPLING_COMMANDS = {"trajectory", "counterexample", "inid-run", "mixture"}


class RunConfig(dict):
    """A resolved run configuration (plain dict with validation applied)."""


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    if not text.strip():
        raise ConfigError("config file is empty")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = _load_config(getattr(args, "config", None))
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in _KNOWN_KEYS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.cmd
    cfg.setdefault("format", "csv")
    if cfg["format"] not in ("csv", "jsonl"):
        raise ConfigError(f"format must be csv or jsonl, got {cfg['format']!r}")
    diagnostics = _diagnose(cfg)
    if diagnostics:
        raise ConfigError("; ".join(diagnostics))
    return RunConfig(cfg)


def _diagnose(cfg: dict) -> list[str]:
    out = []
    cmd = cfg.get("command")
    if cmd not in _COMMANDS:
        out.append(f"command must be one of {_COMMANDS}, got {cmd!r}")
        return out
    if cmd in _SAMPLING_COMMANDS and cfg.get("seed") is None:
        out.append(f"command {cmd!r} samples data and therefore requires seed")
    n_max = cfg.get("n_max")
    if n_max is not None and int(n_max) < 1:
        out.append(f"n_max must be positive, got {n_max}")
    reps = cfg.get("reps")
    if reps is not None and int(reps) < 1:
        out.append(f"reps must be positive, got {reps}")
    eps = cfg.get("eps")
    if eps is not None and float(eps) <= 0:
        out.append(f"eps must be positive, got {eps}")
    return out


def validate(cfg: dict) -> list[str]:
    """Schema check without execution; returns diagnostics (empty = ok)."""
    unknown = set(cfg) - _KNOWN_KEYS
    out = [f"unknown config keys: {sorted(unknown)}"] if unknown else []
    return out + _diagnose(cfg)


# ---------------------------------------------------------------------------
# Scenario registry
# ---------------------------------------------------------------------------


def _unif_grid_family() -> tuple:
    """f0 = unif(0,1); family unif(0,c) for c = 1.0, 1.1, ..., 2.0, uniform prior."""
    cs = [round(1.0 + 0.1 * i, 10) for i in range(11)]
    members = [catalog("unif", lo=0.0, hi=c) for c in cs]
    prior = np.full(len(cs), 1.0 / len(cs))
    f0 = catalog("unif", lo=0.0, hi=1.0)
    return f0, FiniteFamily(members, prior, param=cs), 0


def _example1_family(k_max: int = 30) -> tuple:
    bs = [0.5 - 1.0 / k for k in range(3, k_max + 1)]
    members = [catalog("example1_fk", b=b) for b in bs] + [catalog("example1_fstar")]
    prior = np.full(len(members), 1.0 / len(members))
    f0 = catalog("unif", lo=0.0, hi=1.0)
    return f0, FiniteFamily(members, prior, param=bs + [0.5]), len(members) - 1


def _example1_no_prior_mass() -> tuple:
    """Diagnostic scenario: the prior skips every KL neighborhood of f*.

    All mass sits on two far step members, none on the baseline, so the
    prior-concentration check fails (and the CLI exits 2).
    """
    members = [
        catalog("example1_fk", b=0.1),
        catalog("example1_fk", b=0.2),
        catalog("example1_fstar"),
    ]
    prior = np.array([0.5, 0.5, 0.0])
    f0 = catalog("unif", lo=0.0, hi=1.0)
    return f0, FiniteFamily(members, prior, param=[0.1, 0.2, 0.5]), 2


_SCENARIOS = {
    "unif-grid": _unif_grid_family,
    "example1": _example1_family,
    "example1-no-prior-mass": _example1_no_prior_mass,
}


def _build_inid_default(design_m: int = 256, n_max: int = 2000) -> tuple[InidScenario, Design]:
    """Quantile regression with normal residuals and a coarse degree-2 grid."""
    fclass = FunctionClass.from_coefficient_grid(
        coef_values=[(0.0, 0.3, 0.6), (-0.6, 0.4, 1.4), (-1.5, 0.0, 1.5)],
        bound=4.0,
    )
    star = [tuple(c) for c in fclass.coeffs.tolist()].index((0.3, 0.4, 0.0))
    prior = np.full(len(fclass), 1.0 / len(fclass))
    scenario = InidScenario(
        fclass=fclass,
        prior=prior,
        theta_star_index=star,
        p0=catalog("normal", mu=0.0, sigma=1.0),
        tau=0.5,
    )
    return scenario, Design.equispaced_cycle(design_m, n_max)


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------


def _emit(report: ExperimentReport, cfg: RunConfig) -> None:
    path = cfg.get("output")
    if path:
        # full resolved config in the preamble; the destination path is left
        # out so identical runs stay byte-identical wherever they are written
        run_cfg = {k: v for k, v in sorted(cfg.items()) if k != "output" and v is not None}
        merged = ExperimentReport.build(
            {**report.config, "run": run_cfg}, report.columns, report.rows
        )
        if cfg["format"] == "csv":
            merged.to_csv(path)
        else:
            merged.to_jsonl(path)
        print(f"wrote {len(merged.rows)} rows to {path}")


def _cmd_divergence(cfg: RunConfig) -> int:
    f0 = catalog("unif", lo=0.0, hi=1.0) if cfg.get("f0") is None else _density_from_id(cfg["f0"])
    fstar = _density_from_id(cfg.get("fstar", "unif:0:2"))
    f = _density_from_id(cfg.get("f", "example1_fk:0.4"))
    rows = [
        ("kl", kl(f0, f).value),
        ("kl_excess", kl_excess(f0, f, fstar).value),
        ("l1", l1(f, fstar).value),
        ("weighted_l1", weighted_l1(f, fstar, f0, fstar).value),
    ]
    alpha = cfg.get("alpha")
    if alpha is not None:
        rows.append((f"alpha_affinity_{alpha}", alpha_affinity(f0, fstar, f, float(alpha)).value))
    for name, value in rows:
        print(f"{name} = {value!r}")
    report = ExperimentReport.build(cfg, ("quantity", "value"), rows)
    _emit(report, cfg)
    return 0


def _density_from_id(spec: str):
    """Parse 'name:arg1:arg2' density ids, e.g. unif:0:2 or example1_fk:0.4."""
    parts = str(spec).split(":")
    name, args = parts[0], [float(p) for p in parts[1:]]
    if name == "unif":
        return catalog("unif", lo=args[0], hi=args[1])
    if name == "normal":
        return catalog("normal", mu=args[0], sigma=args[1])
    if name == "example1_fk":
        return catalog("example1_fk", b=args[0])
    if name == "example1_fstar":
        return catalog("example1_fstar")
    if name == "example2_fk":
        return catalog("example2_fk", k=int(args[0]))
    if name == "example2_ga":
        return catalog("example2_ga", a=args[0])
    if name == "example2_f0":
        return catalog("example2_f0")
    if name == "ald":
        return catalog("ald", tau=args[0])
    raise ConfigError(f"unknown density id {spec!r}")


def _cmd_project(cfg: RunConfig) -> int:
    scenario = cfg.get("scenario", "unif-grid")
    if scenario not in _SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    f0, family, _ = _SCENARIOS[scenario]()
    result = kl_minimizer(f0, family)
    print(
        f"kl minimizer: index={result.index} param={family.param[result.index]}"
        f" kl={result.kl_at_min!r} gap={result.runner_up_gap!r} tie={result.tie}"
    )
    rows = [(p, v) for p, v in kl_profile(f0, family)]
    report = ExperimentReport.build(cfg, ("param", "kl"), rows)
    _emit(report, cfg)
    return 0


def _cmd_trajectory(cfg: RunConfig) -> int:
    scenario = cfg.get("scenario", "unif-grid")
    if scenario not in _SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    f0, family, fstar_index = _SCENARIOS[scenario]()
    eps = float(cfg.get("eps", 0.1))
    fstar = family.members[fstar_index]
    queries = [
        RegionQuery(
            kind="metric_ball_complement",
            query_id=f"l1mu0_gt_{eps:g}",
            eps=eps,
            metric=weighted_l1_metric(f0, fstar),
        )
    ]
    report = run_trajectory(
        f0,
        family,
        fstar_index,
        queries,
        n_max=int(cfg.get("n_max", 200)),
        seed=int(cfg["seed"]),
        beta_grid=(float(cfg.get("beta", 0.1)),),
        record_every=int(cfg.get("record_every", 10)),
    )
    final = [r for r in report.rows if r[1] == queries[0].query_id][-1]
    print(f"final mass of {queries[0].query_id} at n={final[0]}: {final[2]!r}")
    _emit(report, cfg)
    return 0


def _cmd_check(cfg: RunConfig) -> int:
    scenario = cfg.get("scenario", "unif-grid")
    if scenario not in _SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    f0, family, fstar_index = _SCENARIOS[scenario]()
    assumption = str(cfg.get("assumption", "1"))
    eps = float(cfg.get("eps", 0.05))
    if assumption == "1":
        witness = check_assumption1(family, f0, fstar_index, eps_grid=[eps])
        mass = dict(witness.certificate["eps_mass"]).get(eps)
        print(f"assumption 1 at eps={eps:g}: mass {mass:.4f} -> {witness.verdict}")
    elif assumption in ("2c", "sufficient2c"):
        witness = check_sufficient_2c(family, f0, fstar_index, alpha0=float(cfg.get("alpha0", 0.5)))
        print(f"sufficient conditions for assumption 2c -> {witness.verdict}")
    else:
        raise ConfigError(f"unknown assumption id {assumption!r}")
    print(witness_to_json(witness))
    report = ExperimentReport.build(cfg, ("assumption", "verdict"), [(assumption, witness.verdict)])
    _emit(report, cfg)
    return 0 if witness.holds else 2


def _cmd_counterexample(cfg: RunConfig) -> int:
    which = cfg.get("id", "example2")
    if which == "example1":
        bs = cfg.get("b_values") or [0.5 - 1.0 / k for k in range(3, 51)]
        report = example1_report([float(b) for b in bs])
        last = report.rows[-1]
        print(f"{len(report.rows)} rows; at b={last[0]:.4f}: kl={last[1]:.6f} l1={last[3]:.4f}")
    elif which == "example2":
        report = example2_simulate(
            n_max=int(cfg.get("n_max", 40)),
            replications=int(cfg.get("reps", 100)),
            seed=int(cfg["seed"]),
        )
        finals = [r for r in report.rows if r[1] == report.config["n_max"]]
        ok = sum(1 for r in finals if r[2] >= 0.99)
        print(
            f"{len(finals)} replications; lower bound >= 0.99 at n_max in {ok} of them"
        )
    else:
        raise ConfigError(f"unknown counterexample id {which!r}")
    _emit(report, cfg)
    return 0


def _load_design_csv(path: str, n_max: int) -> "Design":
    """One covariate value per line (a plain single-column CSV)."""
    try:
        values = [
            float(line.split(",")[0])
            for line in open(path, "r", encoding="utf-8")
            if line.strip() and not line.startswith("#")
        ]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read design CSV {path!r}: {exc}") from exc
    if len(values) < n_max:
        raise ConfigError(f"design CSV provides {len(values)} points, need {n_max}")
    pts = np.asarray(values[:n_max])
    return Design(points=pts, lo=float(pts.min()), hi=float(pts.max()), name=f"csv:{path}")


def _cmd_inid_run(cfg: RunConfig) -> int:
    n_max = int(cfg.get("n_max", 2000))
    scenario, design = _build_inid_default(int(cfg.get("design_m", 256)), n_max)
    if cfg.get("design_csv"):
        design = _load_design_csv(str(cfg["design_csv"]), n_max)
    witnesses = check_assumptions_CDE(scenario, eps=float(cfg.get("eps", 0.1)), x_probes=5, t_probes=3)
    for w in witnesses:
        print(witness_to_json(w))
    if any(w.verdict == "fails" for w in witnesses):
        return 2
    report = inid_run(
        scenario,
        design,
        n_max=n_max,
        eps=float(cfg.get("eps", 0.1)),
        replications=int(cfg.get("reps", 5)),
        seed=int(cfg["seed"]),
        record_every=int(cfg.get("record_every", 200)),
    )
    finals = [r for r in report.rows if r[0] == n_max]
    worst = max(r[2] for r in finals)
    print(f"worst far-set mass at n={n_max} across replications: {worst!r}")
    _emit(report, cfg)
    return 0


def _cmd_mixture(cfg: RunConfig) -> int:
    spec = MixtureSpec(
        kernel=lambda z: catalog("normal", mu=z, sigma=1.0),
        z_grid=(-1.0, 0.0, 1.0),
        weight_resolution=4,
    )
    f0 = catalog("normal", mu=0.0, sigma=1.0)
    family, queries = mixture_scenario(spec, f0, test_functions=[lambda y: math.tanh(y)])
    fstar_index = kl_minimizer(f0, family).index
    report = run_trajectory(
        f0,
        family,
        fstar_index,
        queries,
        n_max=int(cfg.get("n_max", 100)),
        seed=int(cfg["seed"]),
        record_every=int(cfg.get("record_every", 10)),
    )
    final = [r for r in report.rows if r[1] == queries[0].query_id][-1]
    print(f"weak-complement mass at n={final[0]}: {final[2]!r}")
    _emit(report, cfg)
    return 0


_RUNNERS = {
    "divergence": _cmd_divergence,
    "project": _cmd_project,
    "trajectory": _cmd_trajectory,
    "check": _cmd_check,
    "counterexample": _cmd_counterexample,
    "inid-run": _cmd_inid_run,
    "mixture": _cmd_mixture,
}


def run(cfg: RunConfig) -> int:
    """Execute a resolved configuration; returns the process exit status."""
    return _RUNNERS[cfg["command"]](cfg)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="misspeclab",
        description="Posterior-concentration laboratory: scenarios, checkers, trajectories.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, sampling: bool):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, required=False)
        p.add_argument("--output", help="output file path")
        p.add_argument("--format", choices=("csv", "jsonl"))

    p = sub.add_parser("divergence", help="divergences between catalog densities")
    common(p, False)
    p.add_argument("--f0")
    p.add_argument("--f")
    p.add_argument("--fstar")
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("project", help="KL minimizer over a scenario family")
    common(p, False)
    p.add_argument("--scenario")

    p = sub.add_parser("trajectory", help="posterior region-mass trajectory")
    common(p, True)
    p.add_argument("--scenario")
    p.add_argument("--eps", type=float)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--record-every", dest="record_every", type=int)

    p = sub.add_parser("check", help="run an assumption checker (exit 2 on fail)")
    common(p, False)
    p.add_argument("--assumption")
    p.add_argument("--scenario")
    p.add_argument("--eps", type=float)
    p.add_argument("--alpha0", type=float)

    p = sub.add_parser("counterexample", help="counterexample reports and simulations")
    common(p, True)
    p.add_argument("--id")
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--reps", type=int)

    p = sub.add_parser("inid-run", help="i.n.i.d. design experiment")
    common(p, True)
    p.add_argument("--eps", type=float)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--design-m", dest="design_m", type=int)
    p.add_argument("--design-csv", dest="design_csv")
    p.add_argument("--record-every", dest="record_every", type=int)

    p = sub.add_parser("mixture", help="grid-mixture weak-consistency experiment")
    common(p, True)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--record-every", dest="record_every", type=int)

    p = sub.add_parser("validate", help="validate a config file without running")
    p.add_argument("--config", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.cmd == "validate":
            cfg = _load_config(args.config)
            diagnostics = validate(cfg)
            if diagnostics:
                for d in diagnostics:
                    print(f"config problem: {d}")
                return 1
            print("ok")
            resolved = dict(cfg)
            resolved.setdefault("format", "csv")
            print(f"resolved defaults: {json.dumps(resolved, sort_keys=True)}")
            return 0
        cfg = _resolve(args)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    except MisspecLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
