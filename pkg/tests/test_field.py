import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from cohbench.field import (
    H,
    V,
    BenchParams,
    FieldTerm,
    JonesVec,
    PortField,
    canonical_jones,
    instantaneous_intensity,
    mean_intensity,
    merge_terms,
    product_term_pairs,
    slot_powers,
    time_averaged_intensity,
)
from cohbench.generate import random_field

P = BenchParams()


def test_merge_same_labels():
    pf = PortField("p", (FieldTerm(0.3), FieldTerm(0.2)))
    merged = merge_terms(pf)
    assert len(merged) == 1
    assert merged.terms[0].amplitude == pytest.approx(0.5)


def test_merge_keeps_distinct_offsets():
    pf = PortField("p", (FieldTerm(0.3, freq_offset=1), FieldTerm(0.3, freq_offset=0)))
    assert len(merge_terms(pf)) == 2


def test_merge_empty():
    assert merge_terms(PortField("p")).terms == ()


def test_canonical_jones_puts_phase_in_amplitude():
    jones, scale = canonical_jones(0, -1j)
    assert jones == V
    assert scale == pytest.approx(-1j)
    jones, scale = canonical_jones(1e-17, 2.0)
    assert jones == V and scale == 2.0


def test_single_term_intensity():
    pf = PortField("p", (FieldTerm(0.5, slot_parity=0),))
    for t in (0.0, 0.13, 0.77):
        assert instantaneous_intensity(pf, t, 0, P) == pytest.approx(0.25, abs=1e-15)
    assert instantaneous_intensity(pf, 0.0, 1, P) == 0.0


def test_beat_between_opposite_offsets_matches_symbolic_expansion():
    a, phi0, t, df = sp.symbols("a phi t df", real=True)
    field = a * sp.exp(sp.I * 2 * sp.pi * df * t) + a * sp.exp(-sp.I * 2 * sp.pi * df * t - sp.I * phi0)
    expr = sp.simplify(sp.expand(field * sp.conjugate(field)))
    amp, phi = 0.37, 0.9
    pf = PortField("p", (FieldTerm(amp, freq_offset=1),
                         FieldTerm(amp * np.exp(-1j * phi), freq_offset=-1)))
    for tv in (0.0, 0.1, 0.33, 1.7):
        want = complex(expr.subs({a: amp, phi0: phi, t: tv, df: P.delta_f}).evalf())
        assert abs(want.imag) < 1e-12
        want = want.real
        assert instantaneous_intensity(pf, tv, 0, P) == pytest.approx(want, abs=1e-12)
        closed = 2 * amp**2 * (1 + math.cos(2 * math.pi * 2 * P.delta_f * tv + phi))
        assert want == pytest.approx(closed, abs=1e-12)
    pf0 = PortField("p", (FieldTerm(amp, freq_offset=1), FieldTerm(amp, freq_offset=-1)))
    assert instantaneous_intensity(pf0, 0.0, 0, P) == pytest.approx(4 * amp**2)


def test_orthogonal_terms_do_not_interfere():
    pf = PortField("p", (FieldTerm(0.6, H), FieldTerm(0.8j, V)))
    assert instantaneous_intensity(pf, 0.2, 0, P) == pytest.approx(1.0)
    assert mean_intensity(pf, P) == pytest.approx(
        mean_intensity(PortField("p", pf.terms[:1]), P) + mean_intensity(PortField("p", pf.terms[1:]), P))


def test_mean_is_per_occupied_slot():
    pf = PortField("p", (FieldTerm(1.0, slot_parity=1),))
    assert mean_intensity(pf, P) == 1.0
    assert mean_intensity(PortField("p"), P) == 0.0


def test_time_average_drops_unequal_offset_cross_terms():
    pf = PortField("p", (FieldTerm(0.5, freq_offset=1), FieldTerm(0.5, freq_offset=-1)))
    assert time_averaged_intensity(pf, P) == pytest.approx(0.5)
    assert mean_intensity(pf, P.updated(tau=0.0)) == pytest.approx(1.0)
    # beat at 2*delta_f: dark fringe a quarter beat period later
    assert mean_intensity(pf, P.updated(tau=0.25)) == pytest.approx(0.0, abs=1e-15)
    assert mean_intensity(pf, P.updated(tau=0.125)) == pytest.approx(0.5)


def test_product_pairs():
    a = PortField("a", (FieldTerm(0.5, freq_offset=1),))
    b = PortField("b", (FieldTerm(2.0, freq_offset=-1),))
    pairs = product_term_pairs(a, b)
    assert len(pairs) == 1 and pairs[0][2] == 0
    assert product_term_pairs(PortField("a"), b) == []


def test_product_pairs_rejects_unprojected():
    a = PortField("a", (FieldTerm(1.0, H), FieldTerm(1.0, V)))
    with pytest.raises(ValueError):
        product_term_pairs(a, a)


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=200, deadline=None)
@given(seeds, st.floats(0, 10), st.integers(0, 5))
def test_intensity_invariant_under_merge(seed, t, slot):
    pf = random_field(np.random.default_rng(seed))
    doubled = PortField("p", pf.terms + pf.terms)
    for field in (pf, doubled):
        before = instantaneous_intensity(field, t, slot, P)
        after = instantaneous_intensity(merge_terms(field), t, slot, P)
        assert before >= 0
        assert after == pytest.approx(before, rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_intensities_non_negative(seed):
    pf = random_field(np.random.default_rng(seed))
    assert mean_intensity(pf, P) >= 0
    assert time_averaged_intensity(pf, P) >= 0
    assert min(slot_powers(pf)) >= 0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.floats(0.5, 3.0), st.floats(-math.pi, math.pi))
def test_offset_selection_rule(d, n, delta_f, phase):
    """Cross term of offsets differing by d averages to zero over n/(d*delta_f)."""
    params = BenchParams(delta_f=delta_f)
    window = n / (d * delta_f)
    samples = 4096
    t = np.arange(samples) * window / samples
    cross = np.exp(2j * np.pi * d * delta_f * t + 1j * phase)
    assert abs(cross.mean()) < 1e-12
    # and the analytic readout agrees: cross contribution vanishes
    pf = PortField("p", (FieldTerm(1.0, freq_offset=d), FieldTerm(np.exp(1j * phase), freq_offset=0)))
    assert time_averaged_intensity(pf, params) == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_orthogonal_polarizations_add(seed):
    rng = np.random.default_rng(seed)
    h = FieldTerm(complex(rng.normal(), rng.normal()), H, freq_offset=int(rng.integers(-1, 2)))
    v = FieldTerm(complex(rng.normal(), rng.normal()), V, freq_offset=int(rng.integers(-1, 2)))
    params = P.updated(tau=float(rng.uniform(0, 1)))
    both = mean_intensity(PortField("p", (h, v)), params)
    assert both == mean_intensity(PortField("p", (h,)), params) + mean_intensity(PortField("p", (v,)), params)


def test_bench_params_derived():
    p = BenchParams(e0=2.0, psi=0.1, zeta=0.2, tau=0.05, delta_f=3.0)
    assert p.i0 == 4.0
    assert p.phi == pytest.approx(0.3 + 2 * math.pi * 6.0 * 0.05)
    with pytest.raises(ValueError):
        BenchParams(delta_f=0)


def test_jones_from_angle():
    j = JonesVec.from_angle(math.pi / 4)
    assert abs(j.h) ** 2 + abs(j.v) ** 2 == pytest.approx(1.0, abs=1e-12)
