"""Configuration-driven CLI composing the laboratory into experiments.

Subcommands: enumerate | gap | hierarchy | specloop | budget | cost | report.
Each experiment consumes a single JSON config (CLI flags override top-level
fields), writes a JSON report plus plot-ready CSV tables into a run
directory named by the config hash, and exits nonzero iff an invariant
audit (recursion residual, law normalization, bound validity, rollback)
failed during the run. Reports are reproducible: identical config and seed
give byte-identical JSON apart from the ``meta`` block.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import estimators as est
from . import laws, metrics, samplers
from .errors import EnumerationLimitError, EstimatorDegeneracyError, StateGraphLimitError
from .grammar import BudgetGrammar, Grammar, grammar_from_config
from .toylm import ToyLm, lm_from_config

VERSION = "0.1.0"
RUN_DIR_ENV = "MASKGAP_RUNS"

DEFAULT_HIERARCHY = (
    {"variant": "uniform"},
    {"variant": "onestep_cheap"},
    {"variant": "onestep_true"},
    {"variant": "monte_carlo", "rollouts": 4},
    {"variant": "monte_carlo", "rollouts": 16},
    {"variant": "exact"},
)

DEFAULT_COST = {
    "t_verify_ms": 35.0,
    "t_draft_ms": 5.0,
    "t_forward_ms": 1.0,
    "tokens_per_round": 3.07,
}

# Per-method estimation overhead for the cost table: (forwards/round, fixed ms).
COST_METHODS = (
    ("sd_uniform", 0.0, 0.0),
    ("sd_onestep_cheap", 0.0, 0.3),
    ("sd_onestep_true", 7.5, 0.0),
    ("sd_exact_table", 0.0, 0.0),  # table precomputed offline
)


@dataclass
class ExperimentConfig:
    """One experiment's full configuration (JSON-serializable)."""

    grammar: dict
    lm: dict = field(default_factory=lambda: {"variant": "seeded", "seed": 0})
    draft_lm: dict | None = None
    estimator: dict = field(default_factory=lambda: {"variant": "exact"})
    estimators: tuple = DEFAULT_HIERARCHY
    gamma: int = 4
    target: str = "local_mask"
    samples: int = 10000
    seeds: tuple[int, ...] = (0,)
    length_cap: int = 32
    bootstrap_resamples: int = 500
    alpha: float = 0.05
    ar_baseline_tok_s: float = 16.0
    cost: dict = field(default_factory=lambda: dict(DEFAULT_COST))
    budget_rows: tuple = ()
    dump_samples: bool = False

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        raw = dict(raw)
        for key in ("estimators", "budget_rows"):
            if key in raw:
                raw[key] = tuple(
                    tuple(r) if isinstance(r, list) else r for r in raw[key]
                )
        if "seeds" in raw:
            raw["seeds"] = tuple(int(s) for s in raw["seeds"])
        return cls(**raw)

    def to_dict(self) -> dict:
        out = {
            "grammar": self.grammar,
            "lm": self.lm,
            "draft_lm": self.draft_lm,
            "estimator": self.estimator,
            "estimators": [dict(e) for e in self.estimators],
            "gamma": self.gamma,
            "target": self.target,
            "samples": self.samples,
            "seeds": list(self.seeds),
            "length_cap": self.length_cap,
            "bootstrap_resamples": self.bootstrap_resamples,
            "alpha": self.alpha,
            "ar_baseline_tok_s": self.ar_baseline_tok_s,
            "cost": self.cost,
            "budget_rows": [list(r) for r in self.budget_rows],
            "dump_samples": self.dump_samples,
        }
        return out


@dataclass
class RunResult:
    report: dict
    files: dict[str, str] = field(default_factory=dict)


def _seeded_lm(config: ExperimentConfig, vocab, seed: int) -> ToyLm:
    cfg = dict(config.lm)
    if cfg.get("variant") == "seeded":
        cfg["seed"] = seed
    cfg.setdefault("length_cap", config.length_cap)
    return lm_from_config(cfg, vocab)


def _draft_lm(config: ExperimentConfig, vocab, seed: int) -> ToyLm:
    cfg = dict(config.draft_lm) if config.draft_lm else dict(config.lm)
    if config.draft_lm is None and cfg.get("variant") == "seeded":
        cfg["seed"] = seed + 101  # default draft: same family, shifted seed
    elif cfg.get("variant") == "seeded" and "seed" not in cfg:
        cfg["seed"] = seed + 101
    cfg.setdefault("length_cap", config.length_cap)
    return lm_from_config(cfg, vocab)


def _build_estimator(cfg: dict, seed: int, table) -> est.EstimatorSpec:
    cfg = dict(cfg)
    if cfg.get("variant") == "monte_carlo" and "seed" not in cfg:
        cfg["seed"] = seed
    return est.estimator_from_config(cfg, exact_table=table)


def _tier_label(cfg: dict) -> str:
    if cfg["variant"] == "monte_carlo":
        return f"monte_carlo(k={cfg['rollouts']})"
    return cfg["variant"]


# Reserved stream indices for non-sample draws (bootstrap resampling).
_BOOT_STREAM = 2**62
_BOOT_STREAM_2 = 2**62 + 1


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((seed & 2**63 - 1, index))
    )


def _base_report(name: str, config: ExperimentConfig) -> dict:
    return {
        "experiment": name,
        "version": VERSION,
        "config": config.to_dict(),
        "analytic": {},
        "empirical": {},
        "audits": {"ok": True, "failures": []},
    }


def _audit(report: dict, name: str, ok: bool, detail) -> None:
    if not ok:
        report["audits"]["ok"] = False
        report["audits"]["failures"].append({"audit": name, "detail": detail})


def _empirical_entry(value: float, n: int, seed: int, ci: tuple[float, float]) -> dict:
    return {"value": value, "n": n, "seed": seed, "ci95": [ci[0], ci[1]]}


def _law_csv(law: laws.TerminalLaw) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["string", "probability"])
    for s in sorted(law.support()):
        writer.writerow([s, repr(law.prob(s))])
    return buf.getvalue()


def _table_csv(table: laws.FutureValidityTable, g: Grammar) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["state", "context", "token", "validity"])
    for state, tail, token, value in table.items():
        writer.writerow([state, g.vocab.decode(tail), g.vocab.glyphs[token], repr(value)])
    return buf.getvalue()


def _rows_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row.get(c, "") for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def run_enumerate(config: ExperimentConfig) -> RunResult:
    g = grammar_from_config(config.grammar)
    report = _base_report("enumerate", config)
    strings = g.enumerate_language(cap=config.length_cap)
    decoded = [g.vocab.decode(s) for s in strings]
    report["analytic"]["count"] = len(strings)
    report["analytic"]["max_length"] = max((len(s) for s in decoded), default=0)
    try:
        report["analytic"]["state_count"] = g.state_count()
    except ValueError:
        report["analytic"]["state_count"] = None
    return RunResult(report, files={"language.txt": "\n".join(decoded) + "\n"})


def _per_state_sweep(g, lm, table, spec) -> dict:
    """Per-state estimator diagnostics: additive error, mean validity,
    fidelity bound, bound violations against the exact per-step TV."""
    delta_max = 0.0
    validity_mean_min = math.inf
    bound_worst = None
    vacuous = 0
    degenerate = 0
    violations = 0
    states = 0
    for (state, tail) in table.state_lengths:
        candidates = g.valid_next(state)
        states += 1
        estimate = est.estimate_future_validity(spec, g, lm, state, tail, candidates)
        projected = np.exp(laws.step_log_kernel(lm, tail, candidates))
        bound = metrics.fidelity_bounds(estimate, table, projected)
        delta_max = max(delta_max, bound.delta)
        validity_mean_min = min(validity_mean_min, bound.validity_mean)
        if bound.additive_bound is None:
            vacuous += 1
            continue
        bound_worst = (
            bound.additive_bound
            if bound_worst is None
            else max(bound_worst, bound.additive_bound)
        )
        if not np.any(estimate.values > 0.0):
            degenerate += 1
            continue
        truth = table.values(state, tail, candidates)
        conditional = projected * truth
        conditional /= conditional.sum()
        reweighted = projected * estimate.values
        reweighted /= reweighted.sum()
        if metrics.tv(reweighted, conditional) > bound.additive_bound + 1e-12:
            violations += 1
    return {
        "states": states,
        "delta_max": delta_max,
        "validity_mean_min": validity_mean_min,
        "bound_worst": bound_worst,
        "vacuous_states": vacuous,
        "degenerate_states": degenerate,
        "bound_violations": violations,
    }


def run_gap(config: ExperimentConfig) -> RunResult:
    g = grammar_from_config(config.grammar)
    report = _base_report("gap", config)
    files: dict[str, str] = {}

    if isinstance(g, BudgetGrammar):
        # Large regular languages use the grouped analytic path.
        lm_cfg = config.lm if config.lm.get("variant") == "bernoulli" else {}
        gap = laws.budget_grouped_tv(
            g.length,
            g.max_ones,
            float(lm_cfg.get("p_one", 0.5)),
            eos_prob=float(lm_cfg.get("eos_prob", 0.05)),
        )
        report["analytic"] = {
            "tv_projected_conditional": gap.tv_projected,
            "tv_reweighted_conditional": gap.tv_reweighted,
            "valid_count": gap.valid_count,
            "state_count": gap.state_count,
            "masked_root_p_one": gap.masked_root_p_one,
            "corrected_root_p_one": gap.corrected_root_p_one,
        }
        _audit(report, "reweighted_residual", gap.tv_reweighted <= 1e-12, gap.tv_reweighted)
        return RunResult(report, files)

    seed = config.seeds[0]
    lm = _seeded_lm(config, g.vocab, seed)
    try:
        table = laws.future_validity_table(g, lm, cap=config.length_cap)
        mu_star = laws.conditional_law(g, lm, cap=config.length_cap)
    except (StateGraphLimitError, EnumerationLimitError) as exc:
        raise type(exc)(f"{exc}; for budget grammars use the budget command") from exc
    mu_proj = laws.projected_law(g, lm, cap=config.length_cap)

    residual = table.recursion_residual(g, lm)
    _audit(report, "recursion_residual", residual <= 1e-12, residual)
    for name, law in (("conditional", mu_star), ("projected", mu_proj)):
        _audit(report, f"{name}_normalization", abs(law.total() - 1.0) <= 1e-10, law.total())

    report["analytic"]["language_mass"] = math.exp(mu_star.log_mass)
    report["analytic"]["language_size"] = len(mu_star.support())
    report["analytic"]["recursion_residual"] = residual
    report["analytic"]["tv_projected_conditional"] = metrics.tv(mu_proj, mu_star)

    # KL identity at every reachable state (direct vs closed form).
    kl_gap_max = 0.0
    for (state, tail) in table.state_lengths:
        candidates = g.valid_next(state)
        projected = np.exp(laws.step_log_kernel(lm, tail, candidates))
        truth = table.values(state, tail, candidates)
        conditional = projected * truth
        conditional /= conditional.sum()
        direct, via = metrics.kl_identity_check(conditional, projected, truth)
        kl_gap_max = max(kl_gap_max, abs(direct - via))
    report["analytic"]["kl_identity_max_gap"] = kl_gap_max
    _audit(report, "kl_identity", kl_gap_max <= 1e-10, kl_gap_max)

    rows = []
    for est_cfg in config.estimators:
        spec = _build_estimator(dict(est_cfg), seed, table)
        label = _tier_label(dict(est_cfg))
        row = {"tier": label}
        scorer = est.scorer_for(spec, g, lm)
        try:
            mu_hat = laws.reweighted_law(g, lm, scorer, cap=config.length_cap)
            row["tv_to_conditional"] = metrics.tv(mu_hat, mu_star)
            row["tv_to_projected"] = metrics.tv(mu_hat, mu_proj)
            files[f"reweighted_{label}.csv"] = _law_csv(mu_hat)
        except EstimatorDegeneracyError:
            row["degenerate"] = True
        row.update(_per_state_sweep(g, lm, table, spec))
        _audit(report, f"bound_validity[{label}]", row["bound_violations"] == 0, row)
        rows.append(row)
    report["analytic"]["estimators"] = rows

    files["conditional_law.csv"] = _law_csv(mu_star)
    files["projected_law.csv"] = _law_csv(mu_proj)
    files["future_validity.csv"] = _table_csv(table, g)
    return RunResult(report, files)


def run_hierarchy(config: ExperimentConfig) -> RunResult:
    g = grammar_from_config(config.grammar)
    report = _base_report("hierarchy", config)
    rows = []
    for seed in config.seeds:
        lm = _seeded_lm(config, g.vocab, seed)
        table = laws.future_validity_table(g, lm, cap=config.length_cap)
        residual = table.recursion_residual(g, lm)
        _audit(report, f"recursion_residual[seed={seed}]", residual <= 1e-12, residual)
        mu_star = laws.conditional_law(g, lm, cap=config.length_cap)
        mu_proj = laws.projected_law(g, lm, cap=config.length_cap)
        analytic_gap = metrics.tv(mu_proj, mu_star)
        for est_cfg in config.estimators:
            spec = _build_estimator(dict(est_cfg), seed, table)
            label = _tier_label(dict(est_cfg))
            scorer = est.scorer_for(spec, g, lm)
            kernel = samplers.reweighted_kernel(g, lm, scorer)
            row = {"seed": seed, "tier": label, "analytic_gap": analytic_gap}
            try:
                row["tv_analytic"] = metrics.tv(
                    laws.reweighted_law(g, lm, scorer, cap=config.length_cap), mu_star
                )
                drawn = [
                    samplers.ancestral_sample(kernel, _sample_rng(seed, i))
                    for i in range(config.samples)
                ]
                point, lo, hi = metrics.bootstrap_tv_ci(
                    drawn,
                    mu_star,
                    resamples=config.bootstrap_resamples,
                    rng=_sample_rng(seed, _BOOT_STREAM),
                )
                row["tv_empirical"] = _empirical_entry(point, config.samples, seed, (lo, hi))
                row["cost"] = {
                    "lm_forwards": scorer.lm_forwards,
                    "matcher_queries": scorer.matcher_queries,
                }
            except EstimatorDegeneracyError:
                row["degenerate"] = True
            sweep = _per_state_sweep(g, lm, table, spec)
            row["delta_max"] = sweep["delta_max"]
            row["validity_mean_min"] = sweep["validity_mean_min"]
            row["bound_worst"] = sweep["bound_worst"]
            _audit(
                report,
                f"bound_validity[{label},seed={seed}]",
                sweep["bound_violations"] == 0,
                sweep,
            )
            rows.append(row)
    report["empirical"]["tiers"] = rows

    columns = [
        "seed", "tier", "analytic_gap", "tv_analytic", "tv_empirical",
        "delta_max", "validity_mean_min", "bound_worst",
    ]
    flat = []
    for row in rows:
        flat_row = dict(row)
        if isinstance(flat_row.get("tv_empirical"), dict):
            flat_row["tv_empirical"] = flat_row["tv_empirical"]["value"]
        flat.append(flat_row)
    return RunResult(report, files={"hierarchy.csv": _rows_csv(flat, columns)})


def run_specloop(config: ExperimentConfig) -> RunResult:
    g = grammar_from_config(config.grammar)
    report = _base_report("specloop", config)
    seed = config.seeds[0]
    lm = _seeded_lm(config, g.vocab, seed)
    draft = _draft_lm(config, g.vocab, seed)
    table = laws.future_validity_table(g, lm, cap=config.length_cap)
    residual = table.recursion_residual(g, lm)
    _audit(report, "recursion_residual", residual <= 1e-12, residual)

    mu_star = laws.conditional_law(g, lm, cap=config.length_cap)
    mu_proj = laws.projected_law(g, lm, cap=config.length_cap)
    report["analytic"]["tv_projected_conditional"] = metrics.tv(mu_proj, mu_star)

    spec = _build_estimator(dict(config.estimator), seed, table)
    scorer = est.scorer_for(spec, g, lm)
    if config.target == "reweighted":
        target_kernel = samplers.reweighted_kernel(g, lm, scorer)
    else:
        target_kernel = samplers.local_mask_kernel(g, lm)
    draft_kernel = samplers.local_mask_kernel(g, draft)

    totals = samplers.AcceptStats()
    drawn: list[str] = []
    for i in range(config.samples):
        text, stats = samplers.speculative_decode(
            target_kernel, draft_kernel, config.gamma, _sample_rng(seed, i)
        )
        drawn.append(text)
        totals = totals + stats
    _audit(report, "rollback_soundness", True, totals.rollback_audits)

    boot_rng = _sample_rng(seed, _BOOT_STREAM)
    p_star, lo_s, hi_s = metrics.bootstrap_tv_ci(
        drawn, mu_star, config.bootstrap_resamples, boot_rng
    )
    p_proj, lo_p, hi_p = metrics.bootstrap_tv_ci(
        drawn, mu_proj, config.bootstrap_resamples, _sample_rng(seed, _BOOT_STREAM_2)
    )
    report["empirical"]["tv_to_conditional"] = _empirical_entry(
        p_star, config.samples, seed, (lo_s, hi_s)
    )
    report["empirical"]["tv_to_projected"] = _empirical_entry(
        p_proj, config.samples, seed, (lo_p, hi_p)
    )
    report["empirical"]["accept_rate"] = totals.accept_rate
    report["empirical"]["accept_stats"] = {
        "proposed": totals.proposed,
        "accepted": totals.accepted,
        "residual_draws": totals.residual_draws,
        "rounds": totals.rounds,
        "rollback_audits": totals.rollback_audits,
    }
    files = {}
    if config.dump_samples:
        files["samples.txt"] = "\n".join(drawn) + "\n"
    return RunResult(report, files)


def run_budget(config: ExperimentConfig) -> RunResult:
    report = _base_report("budget", config)
    rows = []
    if config.budget_rows:
        triples = [(int(n), int(k), float(p)) for n, k, p in config.budget_rows]
    else:
        g = grammar_from_config(config.grammar)
        if not isinstance(g, BudgetGrammar):
            raise ValueError("budget command needs a budget grammar or budget_rows")
        triples = [(g.length, g.max_ones, float(config.lm.get("p_one", 0.5)))]
    for n, k, p in triples:
        gap = laws.budget_grouped_tv(n, k, p)
        _audit(
            report,
            f"reweighted_residual[{n},{k},{p}]",
            gap.tv_reweighted <= 1e-12,
            gap.tv_reweighted,
        )
        rows.append(
            {
                "length": n,
                "max_ones": k,
                "p_one": p,
                "valid_count": gap.valid_count,
                "state_count": gap.state_count,
                "tv_projected": gap.tv_projected,
                "tv_reweighted": gap.tv_reweighted,
                "masked_root_p_one": gap.masked_root_p_one,
                "corrected_root_p_one": gap.corrected_root_p_one,
            }
        )
    report["analytic"]["rows"] = rows
    columns = list(rows[0]) if rows else []
    return RunResult(report, files={"budget.csv": _rows_csv(rows, columns)})


def run_cost(config: ExperimentConfig) -> RunResult:
    report = _base_report("cost", config)
    base = dict(DEFAULT_COST)
    base.update(config.cost or {})
    rows = [
        {
            "method": "ar_baseline",
            "tok_s": config.ar_baseline_tok_s,  # config input, not derived
            "overhead_forwards": "",
            "overhead_fixed_ms": "",
        }
    ]
    for method, forwards, fixed in COST_METHODS:
        params = metrics.CostModelParams(
            t_verify_ms=float(base["t_verify_ms"]),
            t_draft_ms=float(base["t_draft_ms"]),
            t_forward_ms=float(base["t_forward_ms"]),
            tokens_per_round=float(base["tokens_per_round"]),
            overhead_forwards_per_round=forwards,
            overhead_fixed_ms=fixed,
        )
        rows.append(
            {
                "method": method,
                "tok_s": metrics.cost_model(params),
                "overhead_forwards": forwards,
                "overhead_fixed_ms": fixed,
            }
        )
    report["analytic"]["rows"] = rows
    columns = ["method", "tok_s", "overhead_forwards", "overhead_fixed_ms"]
    return RunResult(report, files={"cost.csv": _rows_csv(rows, columns)})


RUNNERS = {
    "enumerate": run_enumerate,
    "gap": run_gap,
    "hierarchy": run_hierarchy,
    "specloop": run_specloop,
    "budget": run_budget,
    "cost": run_cost,
}


# ---------------------------------------------------------------------------
# CLI plumbing
# ---------------------------------------------------------------------------


def config_hash(name: str, config: ExperimentConfig) -> str:
    canonical = json.dumps(
        {"experiment": name, "config": config.to_dict()}, sort_keys=True
    )
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def write_run(name: str, result: RunResult, out_root: Path) -> Path:
    canonical = json.dumps(
        {"experiment": name, "config": result.report["config"]}, sort_keys=True
    )
    digest = hashlib.sha256(canonical.encode()).hexdigest()[:12]
    run_dir = out_root / f"{name}-{digest}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "report.json").write_text(
        json.dumps(result.report, sort_keys=True, indent=2) + "\n"
    )
    for fname, content in result.files.items():
        (run_dir / fname).write_text(content)
    return run_dir


def _print_summary(result: RunResult) -> None:
    report = result.report
    print(f"experiment: {report['experiment']} (v{report['version']})")
    for section in ("analytic", "empirical"):
        body = report.get(section) or {}
        for key, value in body.items():
            if isinstance(value, list):
                print(f"  {section}.{key}: {len(value)} rows")
            else:
                print(f"  {section}.{key}: {value}")
    status = "ok" if report["audits"]["ok"] else "FAILED"
    print(f"  audits: {status} ({len(report['audits']['failures'])} failures)")


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    raw: dict = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
    if args.grammar:
        raw["grammar"] = json.loads(args.grammar)
    if args.samples is not None:
        raw["samples"] = args.samples
    if args.seeds is not None:
        raw["seeds"] = [int(s) for s in args.seeds.split(",") if s]
    if args.gamma is not None:
        raw["gamma"] = args.gamma
    if args.target is not None:
        raw["target"] = args.target
    if getattr(args, "rows", None):
        raw["budget_rows"] = [
            [part for part in row.split(":")] for row in args.rows.split(",")
        ]
        raw.setdefault("grammar", {"variant": "budget", "length": 1, "max_ones": 0})
    if "grammar" not in raw:
        raise SystemExit("a grammar is required (config file or --grammar)")
    return ExperimentConfig.from_dict(raw)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="maskgap",
        description=(
            "Desk-scale laboratory for grammar-constrained speculative decoding: "
            "measures and corrects the gap between locally masked sampling and "
            "the grammar-conditional distribution."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--grammar", help="inline grammar JSON (overrides config)")
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--seeds", default=None, help="comma-separated seed list")
        p.add_argument("--gamma", type=int, default=None)
        p.add_argument("--target", choices=("local_mask", "reweighted"), default=None)
        p.add_argument("--out", default=None, help="run directory root")

    for name in RUNNERS:
        p = sub.add_parser(name)
        add_common(p)
        if name == "budget":
            p.add_argument(
                "--rows", default=None, help="budget rows as n:K:p1[,n:K:p1...]"
            )

    rep = sub.add_parser("report", help="pretty-print a saved report")
    rep.add_argument("path", help="report.json or a run directory")

    args = parser.parse_args(argv)

    if args.command == "report":
        path = Path(args.path)
        if path.is_dir():
            path = path / "report.json"
        result = RunResult(report=json.loads(path.read_text()))
        _print_summary(result)
        return 0 if result.report["audits"]["ok"] else 1

    config = _load_config(args)
    started = time.perf_counter()
    result = RUNNERS[args.command](config)
    result.report["meta"] = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "wall_clock_s": time.perf_counter() - started,
    }
    out_root = Path(
        args.out or os.environ.get(RUN_DIR_ENV, "runs")
    )
    run_dir = write_run(args.command, result, out_root)
    _print_summary(result)
    print(f"  run dir: {run_dir}")
    return 0 if result.report["audits"]["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
