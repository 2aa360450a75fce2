"""Cross-pipeline and conservation suite behind ``cohbench validate``."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from . import optics
from .detection import (
    default_phi_grid,
    detector_mean,
    detector_mean_sampled,
    gated_correlation_analytic,
    gated_correlation_sampled,
)
from .dsl import loads, serialize
from .field import BenchParams, slot_powers
from .generate import random_bench, random_field
from .optics import build_fig1, coefficient, field_report

ANALYTIC_TOL = 1e-12
SAMPLED_TOL = 1e-3


@dataclass
class Check:
    name: str
    tolerance: float
    max_deviation: float = 0.0
    manifest: dict | None = None

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tolerance

    def record(self, deviation: float, manifest: dict) -> None:
        if not math.isfinite(deviation):
            deviation = math.inf
        if deviation > self.max_deviation:
            self.max_deviation = deviation
            if deviation >= self.tolerance and self.manifest is None:
                self.manifest = manifest


@dataclass
class Report:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def by_name(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)


def random_params(rng: np.random.Generator) -> BenchParams:
    return BenchParams(
        xi=float(rng.uniform(0, math.pi)), theta=float(rng.uniform(0, math.pi)),
        psi=float(rng.uniform(-math.pi, math.pi)), zeta=float(rng.uniform(-math.pi, math.pi)),
        tau=float(rng.uniform(-0.5, 0.5)),
    )


def expected_means(p: BenchParams) -> dict[str, float]:
    q = p.i0 / 4
    a, b, c = math.sin(2 * p.xi), math.sin(2 * p.theta), math.cos(p.phi)
    return {"s1": q * (1 - a * c), "s2": q * (1 + a * c),
            "i3": q * (1 + b * c), "i4": q * (1 - b * c)}


def expected_ratios(p: BenchParams) -> dict[str, complex]:
    """Upper/lower coefficient ratios (signal) and lower/upper (idler)."""
    e = cmath.exp(1j * p.phi)
    return {"s1": -e * math.tan(p.xi), "s2": e * math.tan(p.xi),
            "i3": math.tan(p.theta) / e, "i4": -math.tan(p.theta) / e}


def measured_ratio(graph, det: str) -> complex:
    rows = field_report(graph, det)
    up, lo = coefficient(rows, "upper"), coefficient(rows, "lower")
    return up / lo if det.startswith("s") else lo / up


def _rel(a: float, b: float, scale: float) -> float:
    return abs(a - b) / max(abs(b), scale)


def _conservation(rng: np.random.Generator, check: Check, draw: int) -> None:
    a, b = random_field(rng, "a"), random_field(rng, "b")
    total_in = [x + y for x, y in zip(slot_powers(a), slot_powers(b))]
    single = [
        ("hwp", [optics.apply_hwp(a, float(rng.uniform(0, math.pi)))]),
        ("eom", [optics.apply_eom_swap(a)]),
        ("aom", [optics.apply_aom_shift(a, int(rng.choice([-1, 1])))]),
        ("phase", [optics.apply_phase(a, float(rng.uniform(-math.pi, math.pi)))]),
    ]
    for name, outs in single:
        p_in = slot_powers(a)
        p_out = [sum(x) for x in zip(*(slot_powers(o) for o in outs))]
        dev = max(abs(i - o) / max(1.0, i) for i, o in zip(p_in, p_out))
        check.record(dev, {"draw": draw, "element": name})
    for name, fn in (("pbs", optics.apply_pbs), ("bs", optics.apply_bs)):
        outs = fn(a, b)
        p_out = [sum(x) for x in zip(*(slot_powers(o) for o in outs))]
        dev = max(abs(i - o) / max(1.0, i) for i, o in zip(total_in, p_out))
        check.record(dev, {"draw": draw, "element": name})
    slots = int(rng.integers(0, 3))
    d = optics.apply_delay_slot(a, slots, float(rng.uniform(-math.pi, math.pi)))
    p_in, p_out = slot_powers(a), slot_powers(d)
    dev = max(abs(p_in[c] - p_out[(c + slots) % 2]) / max(1.0, p_in[c]) for c in (0, 1))
    check.record(dev, {"draw": draw, "element": "delay", "slots": slots})


def run_validation(draws: int = 100, seed: int = 0) -> Report:
    rng = np.random.default_rng(seed)
    fringe = Check("fringe_formula", ANALYTIC_TOL)
    ratios = {det: Check(f"{det}_coefficient_ratio", ANALYTIC_TOL) for det in ("s1", "s2", "i3", "i4")}
    gated_formula = Check("gated_correlation_formula", ANALYTIC_TOL)
    phi_indep = Check("phi_independence", ANALYTIC_TOL)
    means_x = Check("analytic_vs_sampled_means", SAMPLED_TOL)
    gated_x = Check("analytic_vs_sampled_gated", SAMPLED_TOL)
    conservation = Check("energy_conservation", ANALYTIC_TOL)
    sums = Check("detector_pair_sum", ANALYTIC_TOL)
    round_trip = Check("dsl_round_trip", 0.5)

    base = build_fig1()
    phi_grid = default_phi_grid(16)
    for k in range(draws):
        p = random_params(rng)
        manifest = {"draw": k, "seed": seed, "params": {
            name: getattr(p, name) for name in ("e0", "delta_f", "t_e", "psi", "zeta", "tau", "xi", "theta")}}
        g = base.with_params(**manifest["params"])
        want = expected_means(p)
        for det, w in want.items():
            got = detector_mean(g, det)
            fringe.record(abs(got - w), manifest)
            means_x.record(_rel(detector_mean_sampled(g, det), got, p.i0 / 4), manifest)
        sums.record(abs(detector_mean(g, "s1") + detector_mean(g, "s2") - p.i0 / 2), manifest)
        sums.record(abs(detector_mean(g, "i3") + detector_mean(g, "i4") - p.i0 / 2), manifest)
        for det, w in expected_ratios(p).items():
            ratios[det].record(abs(measured_ratio(g, det) - w) / max(1.0, abs(w)), manifest)
        scale = p.i0 ** 2 / 16
        for da, db, plus in (("s1", "i3", True), ("s2", "i4", True), ("s1", "i4", False), ("s2", "i3", False)):
            angle = p.xi + p.theta if plus else p.xi - p.theta
            res = gated_correlation_analytic(g, da, db, phi_grid if da == "s1" else None)
            gated_formula.record(abs(res.gated_value - scale * math.cos(angle) ** 2), manifest)
            if res.per_phi_values:
                phi_indep.record(res.spread, manifest)
            sampled = gated_correlation_sampled(g, da, db)
            gated_x.record(_rel(sampled.gated_value, res.gated_value, scale), manifest)
        _conservation(rng, conservation, k)

    for k in range(max(1, min(draws, 20))):
        bench = random_bench(rng) if k else base
        text = serialize(bench).text
        parsed, diags = loads(text)
        ok = not diags and parsed == bench and serialize(parsed).text == text
        round_trip.record(0.0 if ok else 1.0, {"draw": k, "bench": text})

    checks = [fringe, *ratios.values(), gated_formula, phi_indep, means_x, gated_x,
              conservation, sums, round_trip]
    return Report(checks)
