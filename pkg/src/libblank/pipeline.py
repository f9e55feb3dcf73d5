"""End-to-end run of one scenario in memory: plan, profile, train, simulate, measure."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import Scenario
from .divergence import DivergenceReport, classify_divergence
from .ir import Program
from .metrics import SurfaceMetrics, benchmark_row, surface_metrics
from .planner import SitePlan, plan_program
from .predictor import DEFAULT_MAX_DEPTH, DecisionTreeModel, train_tree
from .profiler import Profile, TrainingSummary, build_profile
from .runtime import Mode, Policy, SimEvent, SimulationReport, simulate


@dataclass
class RunResult:
    name: str
    plans: dict[int, SitePlan]
    divergence: DivergenceReport
    profile: Profile
    model: DecisionTreeModel
    report: SimulationReport
    log: list[SimEvent]
    metrics: SurfaceMetrics
    program: Program

    def row(self) -> dict:
        return benchmark_row(self.name, self.metrics, self.report)


def train_for_mode(profile: Profile, mode: Mode, depth: int = DEFAULT_MAX_DEPTH) -> DecisionTreeModel:
    if Mode(mode) is Mode.SET:
        return train_tree(profile.records, depth)
    return train_tree([(r.features, r.sequence_label) for r in profile.records], depth)


def run_scenario(sc: Scenario, policy: Policy = Policy(), depth: int = DEFAULT_MAX_DEPTH,
                 train_scales: Sequence[str] = ("small", "medium"),
                 test_scale: str = "large") -> RunResult:
    p = sc.program
    plans = plan_program(p)
    div = classify_divergence(p)
    profile = build_profile([sc.traces[s] for s in train_scales], plans)
    model = train_for_mode(profile, policy.mode, depth)
    summary = TrainingSummary(profile.chains, profile.sequences, frozenset(profile.sites))
    report, log = simulate(p, sc.traces[test_scale], model, summary, plans, policy,
                           sc.oracle, div)
    metrics = surface_metrics(p, log, sc.cve)
    return RunResult(sc.spec.name, plans, div, profile, model, report, log, metrics, p)
