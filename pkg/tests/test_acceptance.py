"""Acceptance criteria, one test each, at their stated tolerances.

Each test prints a single ``[ACCEPT n] PASS|FAIL`` line with the measured
figure, so ``pytest -v`` output doubles as the acceptance report.
"""
import itertools
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from cohbench import optics
from cohbench.detection import (
    CANONICAL_SETTINGS,
    chsh_max_search,
    chsh_S,
    correlation_map,
    default_phi_grid,
    detector_field,
    detector_mean,
    detector_mean_sampled,
    fringe_visibility,
    gated_correlation_analytic,
    gated_correlation_sampled,
    product_spectrum,
)
from cohbench.dsl import loads, serialize
from cohbench.field import LOWER, UPPER, BenchParams, mean_intensity, slot_powers
from cohbench.generate import random_bench, random_field
from cohbench.optics import build_fig1, coefficient, field_report, propagate

DETS = ("s1", "s2", "i3", "i4")
PHI16 = default_phi_grid(16)


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n[ACCEPT {n:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, f"criterion {n} ({title}): {detail}"
    return emit


def with_phi(graph, phi):
    p = graph.bench_params
    return graph.with_params(psi=phi - (p.phi - p.psi))


def fringe_formula(p):
    q = p.i0 / 4
    a, b, c = math.sin(2 * p.xi), math.sin(2 * p.theta), math.cos(p.phi)
    return {"s1": q * (1 - a * c), "s2": q * (1 + a * c), "i3": q * (1 + b * c), "i4": q * (1 - b * c)}


def psi_scan(graph, det, n=64):
    return [detector_mean(graph.with_params(psi=2 * math.pi * k / n), det) for k in range(n)]


def test_01_mzi_output_flatness(report):
    p0 = BenchParams(e0=1.3)
    ports = build_fig1(p0, stop_at="ports")
    worst = 0.0
    for k in range(64):
        g = ports.with_params(psi=2 * math.pi * k / 64)
        fields = propagate(g)
        for port in ("A", "B"):
            worst = max(worst, abs(mean_intensity(fields[port], g.bench_params) - p0.i0 / 2))
    report(1, "MZI output flatness", worst < 1e-12, f"max |<I> - I0/2| = {worst:.2e} over 64 psi")


def test_02_fringe_formulas(report):
    base = build_fig1()
    grid = [math.radians(7.5 * k) for k in range(25)]
    worst_a = worst_s = 0.0
    for angle, phi in itertools.product(grid, PHI16):
        g = with_phi(base.with_params(xi=angle, theta=angle), phi)
        p = g.bench_params
        want = fringe_formula(p)
        for det in DETS:
            got = detector_mean(g, det)
            worst_a = max(worst_a, abs(got - want[det]))
            sampled = detector_mean_sampled(g, det)
            worst_s = max(worst_s, abs(sampled - got) / max(abs(got), p.i0 / 4))
    ok = worst_a < 1e-12 and worst_s < 1e-3
    report(2, "fringe formulas", ok, f"analytic {worst_a:.2e} (tol 1e-12), sampled rel {worst_s:.2e} (tol 1e-3)")


def test_03_gated_correlation(report):
    base = build_fig1()
    grid = [math.radians(15 * k) for k in range(13)]
    m = correlation_map(base, grid, grid)
    formula = np.cos(np.add.outer(grid, grid)) ** 2 / 16
    dev = float(np.max(np.abs(m - formula)))
    spread_a = spread_s = 0.0
    scale = 1 / 16
    for xi, th in itertools.product(grid, grid):
        g = base.with_params(xi=xi, theta=th)
        spread_a = max(spread_a, gated_correlation_analytic(g, "s1", "i3", PHI16).spread)
        spread_s = max(spread_s, gated_correlation_sampled(g, "s1", "i3", phi_grid=PHI16).spread / scale)
    ok = dev < 1e-12 and spread_a < 1e-12 and spread_s < 1e-3
    report(3, "gated correlation", ok,
           f"formula {dev:.2e}, phi spread analytic {spread_a:.2e}, sampled rel {spread_s:.2e}")


def _symbolic_cross_rate():
    xi, th, phi = sp.symbols("xi theta phi", real=True)
    e = sp.exp(sp.I * phi)
    # s1 = (1/2)(-V_u e^{i phi} sin xi + H_l cos xi); i4 = (1/2)(-V_l sin th + H_u e^{i phi} cos th)
    kept = sp.Rational(1, 4) * ((-e * sp.sin(xi)) * (-sp.sin(th)) + sp.cos(xi) * (e * sp.cos(th)))
    return sp.lambdify((xi, th, phi), sp.simplify(sp.expand(kept * sp.conjugate(kept))))


def test_04_cross_pair_rates(report):
    oracle = _symbolic_cross_rate()
    base = build_fig1()
    rng = np.random.default_rng(4)
    exact = True
    worst = 0.0
    for _ in range(100):
        x, t, ph = (float(v) for v in rng.uniform([0, 0, -math.pi], [math.pi, math.pi, math.pi]))
        g = with_phi(base.with_params(xi=x, theta=t, zeta=float(rng.uniform(-3, 3))), ph)
        r = {pair: gated_correlation_analytic(g, *pair).gated_value
             for pair in (("s1", "i3"), ("s2", "i4"), ("s1", "i4"), ("s2", "i3"))}
        exact &= r[("s1", "i3")] == r[("s2", "i4")]
        want = float(oracle(x, t, ph))
        worst = max(worst, abs(r[("s1", "i4")] - want), abs(r[("s2", "i3")] - want),
                    abs(want - math.cos(x - t) ** 2 / 16))
    report(4, "cross-pair rates", exact and worst < 1e-12,
           f"R_s1i3 == R_s2i4 bitwise: {exact}; R_s1i4, R_s2i3 vs symbolic oracle {worst:.2e}")


def _oracle_smax():
    def neg_s(v):
        a, ap, b, bp = v
        e = lambda x, y: math.cos(2 * (x + y))
        return -(e(a, b) + e(a, bp) + e(ap, b) - e(ap, bp))
    grid = [math.radians(15 * k) for k in range(12)]
    start = min(itertools.product(grid, repeat=4), key=neg_s)
    return -minimize(neg_s, start, method="Nelder-Mead",
                     options={"xatol": 1e-10, "fatol": 1e-12}).fun


def test_05_chsh(report):
    g = build_fig1()
    canonical = chsh_S(g, *CANONICAL_SETTINGS).s
    found = chsh_max_search(g).s
    oracle = _oracle_smax()
    ok = (abs(canonical - 2 * math.sqrt(2)) < 1e-9 and abs(found - 2.828427) < 1e-4
          and abs(found - oracle) < 1e-4)
    report(5, "CHSH", ok, f"canonical S = {canonical:.12f}, search S_max = {found:.9f}, oracle {oracle:.9f}")


def _recombined_power(graph):
    """All-slot time-averaged power leaving the two recombining splitters."""
    ports = optics.propagate_ports(graph)
    outs = [ports[(bs, o)] for bs in ("BS_A", "BS_B") for o in ("out0", "out1")]
    return sum(sum(slot_powers(f)) for f in outs) / 2


def test_06_no_delay_control(report):
    worst_v = worst_p = 0.0
    for xd, td in [(45, 45), (22.5, 67.5), (10, 30)]:
        p = BenchParams(xi=math.radians(xd), theta=math.radians(td))
        g = build_fig1(p, delay_slots=0)
        for det in DETS:
            worst_v = max(worst_v, fringe_visibility(psi_scan(g, det)))
        for k in range(16):
            gk = g.with_params(psi=2 * math.pi * k / 16)
            worst_p = max(worst_p, abs(_recombined_power(gk) - gk.bench_params.i0))
    ok = worst_v < 1e-12 and worst_p < 1e-12
    report(6, "no-delay control", ok,
           f"max visibility {worst_v:.2e}, |recombined power - I0| {worst_p:.2e}")


def test_07_gate_necessity(report):
    g = build_fig1().with_params(xi=math.radians(22.5), theta=math.radians(22.5))
    target = math.cos(math.radians(45)) ** 2 / 16
    devs = [abs(gated_correlation_analytic(with_phi(g, phi), "s1", "i3").ungated_value - target)
            for phi in PHI16]
    rel = max(devs) / (1 / 16)
    report(7, "gate necessity", rel > 0.05, f"max ungated deviation {rel:.3f} x I0^2/16 (need > 0.05)")


def test_08_product_spectrum(report):
    g = build_fig1().with_params(xi=math.radians(22.5), theta=math.radians(22.5), psi=0.7, zeta=-0.4)
    df = g.bench_params.delta_f
    worst_db = math.inf
    peaks_ok = True
    for pair in (("s1", "i3"), ("s2", "i4")):
        for slot in detector_field(g, pair[0]).occupied_classes():
            freqs, power = product_spectrum(g, *pair, slot)
            allowed = np.isclose(freqs, 0) | np.isclose(np.abs(freqs), 2 * df)
            peak = power[allowed].max()
            peaks_ok &= bool(np.all(power[allowed] > 0)) and peak == power.max()
            leak = power[~allowed].max()
            worst_db = min(worst_db, 10 * math.log10(peak / leak) if leak > 0 else math.inf)
    ok = peaks_ok and worst_db > 60
    report(8, "product-spectrum structure", ok,
           f"power at 0 and +-2 delta_f only; rejection elsewhere {worst_db:.1f} dB (need > 60)")


def test_09_pipeline_equivalence(report):
    base = build_fig1()
    rng = np.random.default_rng(9)
    worst_m = worst_r = 0.0
    for _ in range(100):
        g = base.with_params(xi=float(rng.uniform(0, math.pi)), theta=float(rng.uniform(0, math.pi)),
                             psi=float(rng.uniform(-math.pi, math.pi)),
                             zeta=float(rng.uniform(-math.pi, math.pi)), tau=float(rng.uniform(-0.5, 0.5)))
        p = g.bench_params
        for det in DETS:
            a = detector_mean(g, det)
            worst_m = max(worst_m, abs(detector_mean_sampled(g, det) - a) / max(abs(a), p.i0 / 4))
        for pair in (("s1", "i3"), ("s2", "i4"), ("s1", "i4"), ("s2", "i3")):
            a = gated_correlation_analytic(g, *pair).gated_value
            s = gated_correlation_sampled(g, *pair).gated_value
            worst_r = max(worst_r, abs(s - a) / max(abs(a), p.i0 ** 2 / 16))
    ok = worst_m < 1e-3 and worst_r < 1e-3
    report(9, "pipeline equivalence", ok, f"means rel {worst_m:.2e}, gated rel {worst_r:.2e} over 100 draws")


_conservation_worst = [0.0]


@settings(max_examples=200, deadline=None, derandomize=True)
@given(st.integers(0, 2**32 - 1))
def _conservation_property(seed):
    rng = np.random.default_rng(seed)
    a, b = random_field(rng, "a"), random_field(rng, "b")
    pa = slot_powers(a)
    total = [x + y for x, y in zip(pa, slot_powers(b))]
    angle = float(rng.uniform(-math.pi, math.pi))
    outs = [(pa, slot_powers(optics.apply_hwp(a, angle))),
            (pa, slot_powers(optics.apply_eom_swap(a))),
            (pa, slot_powers(optics.apply_aom_shift(a, int(rng.choice([-1, 1]))))),
            (pa, slot_powers(optics.apply_phase(a, angle))),
            (pa, slot_powers(optics.apply_delay_slot(a, 2, angle)))]
    d1 = slot_powers(optics.apply_delay_slot(a, 1, angle))
    outs.append(((pa[1], pa[0]), d1))
    for fn in (optics.apply_pbs, optics.apply_bs):
        o0, o1 = fn(a, b)
        outs.append((total, [x + y for x, y in zip(slot_powers(o0), slot_powers(o1))]))
    for p_in, p_out in outs:
        for x, y in zip(p_in, p_out):
            dev = abs(x - y) / max(1.0, x)
            _conservation_worst[0] = max(_conservation_worst[0], dev)
            assert dev < 1e-12


def test_10_conservation(report):
    _conservation_worst[0] = 0.0
    _conservation_property()
    base = build_fig1()
    worst_sum = 0.0
    for xi, phi in itertools.product([math.radians(7.5 * k) for k in range(25)], PHI16):
        g = with_phi(base.with_params(xi=xi, theta=xi), phi)
        half = g.bench_params.i0 / 2
        worst_sum = max(worst_sum, abs(detector_mean(g, "s1") + detector_mean(g, "s2") - half),
                        abs(detector_mean(g, "i3") + detector_mean(g, "i4") - half))
    ok = _conservation_worst[0] < 1e-12 and worst_sum < 1e-12
    report(10, "conservation", ok,
           f"lossless elements {_conservation_worst[0]:.2e} (200 random fields), s1+s2 = I0/2 to {worst_sum:.2e}")


def test_11_field_structure(report):
    base = build_fig1()
    grid = np.linspace(5, 175, 10)
    worst = 0.0
    for xd, td in itertools.product(grid, grid):
        for phi in np.linspace(-math.pi, math.pi, 8, endpoint=False):
            g = base.with_params(xi=math.radians(xd), theta=math.radians(td),
                                 zeta=0.3, tau=0.02)
            g = with_phi(g, float(phi))
            e = np.exp(1j * g.bench_params.phi)
            tx, tt = math.tan(math.radians(xd)), math.tan(math.radians(td))
            want = {"s1": -e * tx, "s2": e * tx, "i3": tt / e, "i4": -tt / e}
            fields = propagate(g)
            for det, w in want.items():
                rows = field_report(g, det, fields)
                up, lo = coefficient(rows, UPPER), coefficient(rows, LOWER)
                got = up / lo if det.startswith("s") else lo / up
                worst = max(worst, abs(got - w) / max(1.0, abs(w)))
    report(11, "field-structure checks", worst < 1e-12,
           f"coefficient ratios vs closed forms {worst:.2e} over 10x10x8 grid")


MALFORMED = {
    "unknown kind": ("bench b\nnode L : laser(amplitude=1.0)\nnode Q : lens()\n", 3),
    "syntax error": ("bench b\n# comment\nnode L : laser(amplitude=1.0)\nlink L.out -> \n", 4),
    "duplicate node": ("bench b\nnode L : laser(amplitude=1.0)\nnode M : mirror()\nnode M : mirror()\n"
                       "link L.out -> M.in\ndetector d on M.out\n", 4),
    "cycle": ("bench b\nnode L : laser(amplitude=1.0)\nnode B : bs()\nnode M : mirror()\n"
              "link L.out -> B.in0\nlink B.out0 -> M.in\nlink M.out -> B.in1\ndetector d on B.out1\n", 3),
    "illegal character": ("bench b\nnode L : laser(amplitude=1.0)\n\nnode M : mirror() $\n", 4),
}


def test_12_dsl(report):
    failures = []
    fig1 = build_fig1()
    benches = [fig1] + [random_bench(np.random.default_rng(1000 + k)) for k in range(20)]
    for bench in benches:
        text = serialize(bench).text
        parsed, diags = loads(text)
        if diags or parsed != bench or serialize(parsed).text != text:
            failures.append(f"round trip {bench.name}")
    for label, (text, line) in MALFORMED.items():
        _, diags = loads(text)
        if not any(d.line == line for d in diags):
            failures.append(f"{label}: lines {[d.line for d in diags]}, want {line}")
    report(12, "DSL", not failures,
           f"{len(benches)} round trips, {len(MALFORMED)} malformed files" + (f"; {failures}" if failures else " ok"))
