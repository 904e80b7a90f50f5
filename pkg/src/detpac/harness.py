"""Seeded Monte-Carlo batches over the learner and their summaries."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .instances import generate, theorem1_lower_bound
from .learner import DEFAULT_BUDGET, RULES, BudgetExceeded, RunResult, run_eprl
from .mdp import DeterministicMdp

CSV_VERSION = "# detpac-bench v1"
CSV_COLUMNS = ("seed", "rule", "eps", "delta", "tau", "stop_rule", "subopt", "good_event")
FAIL_TOL = 1e-12


def _split_top_level(text: str) -> list[str]:
    # commas inside JSON brackets belong to the value
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return parts


def load_instance(source: str) -> DeterministicMdp:
    """A JSON file path, or "gen:<kind>:key=value,..." for a generator call."""
    if source.startswith("gen:"):
        _, kind, *rest = source.split(":", 2)
        params = {}
        if rest and rest[0]:
            for item in _split_top_level(rest[0]):
                k, v = item.split("=", 1)
                params[k] = json.loads(v)
        return generate(kind, **params)
    return DeterministicMdp.from_dict(json.loads(Path(source).read_text()))


def trial_seed(master: int, trial: int) -> int:
    """Independent 32-bit stream seed for one trial."""
    return int(np.random.SeedSequence([master, trial]).generate_state(1, dtype=np.uint32)[0])


def worker_count(trials: int) -> int:
    env = os.environ.get("DETPAC_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    if cap < 1:
        raise ValueError("DETPAC_THREADS must be a positive integer")
    return max(1, min(cap, trials))


@dataclass
class ExperimentConfig:
    instance: str
    rules: tuple = ("max-diameter",)
    eps: float = 0.1
    delta: float = 0.1
    trials: int = 100
    seed: int = 0
    budget: int = DEFAULT_BUDGET
    elim_period: int = 1
    out: str | None = None
    summary_out: str | None = None

    def validate(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.budget < 1 or self.elim_period < 1:
            raise ValueError("budget and elim-period must be positive")
        for r in self.rules:
            if r not in RULES:
                raise ValueError(f"unknown rule {r!r}")


def _one_trial(job):
    mdp, rule, eps, delta, seed, budget, elim_period = job
    try:
        return run_eprl(mdp, rule, eps, delta, seed, budget, elim_period)
    except BudgetExceeded as e:
        return e.result


def run_trials(mdp: DeterministicMdp, rule: str, eps: float, delta: float, trials: int,
               seed: int = 0, budget: int = DEFAULT_BUDGET, elim_period: int = 1) -> list[RunResult]:
    jobs = [(mdp, rule, eps, delta, trial_seed(seed, i), budget, elim_period)
            for i in range(trials)]
    workers = worker_count(trials)
    if workers == 1:
        return [_one_trial(j) for j in jobs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(_one_trial, jobs))


def period_bound(rule: str, phi: float, horizon: int) -> float:
    if rule == "max-coverage":
        return 2.0 * phi
    if rule == "adaptive-max-coverage":
        return 2.0 * phi * (math.log(horizon) + 1.0)
    return math.inf


@dataclass
class BatchSummary:
    rule: str
    eps: float
    delta: float
    trials: int
    mean_tau: float
    median_tau: float
    p95_tau: float
    failure_rate: float
    good_event_rate: float
    mean_subopt: float
    budget_hits: int
    max_period_ratio: float       # max d_k / bound over logged periods, 0 without periods
    period_violations: int
    lb_phi_star: float            # unit-variance scaling
    lb_phi_star_quarter: float    # variance 1/4 scaling
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(mdp: DeterministicMdp, results: list[RunResult], rule: str, eps: float,
              delta: float) -> BatchSummary:
    taus = np.array([r.tau for r in results], dtype=float)
    failed = [r.stop_rule == "budget" or r.subopt > eps + FAIL_TOL for r in results]
    ratio, violations = 0.0, 0
    for r in results:
        for p in r.periods:
            if p.d == 0:
                continue
            bound = period_bound(rule, p.phi_star, mdp.horizon)
            ratio = max(ratio, p.d / bound)
            violations += p.d > bound
    lb1 = theorem1_lower_bound(mdp, eps, delta, 1.0).phi_star
    lbq = theorem1_lower_bound(mdp, eps, delta, 0.25).phi_star
    return BatchSummary(rule, eps, delta, len(results), float(taus.mean()),
                        float(np.median(taus)), float(np.percentile(taus, 95)),
                        float(np.mean(failed)), float(np.mean([r.good_event for r in results])),
                        float(np.mean([r.subopt for r in results])),
                        sum(r.stop_rule == "budget" for r in results), ratio, int(violations),
                        lb1, lbq)


def csv_rows(results: list[RunResult]) -> list[list[str]]:
    return [[str(r.seed), r.rule, repr(float(r.eps)), repr(float(r.delta)), str(r.tau),
             r.stop_rule, repr(float(r.subopt)), "1" if r.good_event else "0"] for r in results]


def write_csv(results: list[RunResult], fh) -> None:
    fh.write(CSV_VERSION + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(csv_rows(results))


def read_csv(text: str) -> list[dict]:
    lines = text.splitlines()
    if not lines or lines[0] != CSV_VERSION:
        raise ValueError("missing or unknown CSV version line")
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    out = []
    for row in rows:
        if tuple(row) != CSV_COLUMNS:
            raise ValueError("unexpected CSV columns")
        out.append({"seed": int(row["seed"]), "rule": row["rule"], "eps": float(row["eps"]),
                    "delta": float(row["delta"]), "tau": int(row["tau"]),
                    "stop_rule": row["stop_rule"], "subopt": float(row["subopt"]),
                    "good_event": row["good_event"] == "1"})
    return out


def run_batch(config: ExperimentConfig, mdp: DeterministicMdp | None = None):
    """All trials of every configured rule; returns (results by rule, summaries)."""
    config.validate()
    mdp = load_instance(config.instance) if mdp is None else mdp
    results, summaries = {}, []
    for rule in config.rules:
        res = run_trials(mdp, rule, config.eps, config.delta, config.trials, config.seed,
                         config.budget, config.elim_period)
        results[rule] = res
        summaries.append(summarize(mdp, res, rule, config.eps, config.delta))
    return results, summaries
