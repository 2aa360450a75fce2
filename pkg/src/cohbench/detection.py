"""Detector observables: fringes, gated joint correlations, CHSH.

Two independent routes compute every observable:

* ``analytic`` works on the term algebra directly;
* ``sampled`` synthesizes rotating-frame envelopes on a time grid and reads
  them out through FFT bin selection, the way a heterodyne receiver would.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .field import (
    BenchParams,
    PortField,
    mean_intensity,
    pair_amplitude,
    product_term_pairs,
    projected_axis,
)
from .graph import BenchGraph
from .optics import propagate


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CorrelationResult:
    det_a: str
    det_b: str
    gated_value: float
    ungated_value: float
    phi_grid: tuple[float, ...] = ()
    per_phi_values: tuple[float, ...] = ()
    pipeline: str = "analytic"

    @property
    def spread(self) -> float:
        if not self.per_phi_values:
            return 0.0
        return max(self.per_phi_values) - min(self.per_phi_values)


@dataclass(frozen=True)
class ChshResult:
    a: float
    a_prime: float
    b: float
    b_prime: float
    e_values: tuple[float, float, float, float]
    s: float
    gated: bool = True


@dataclass(frozen=True)
class SampledConfig:
    """Time grid for the sampled pipeline, in units where delta_f sets the scale.

    ``sample_rate`` is in multiples of delta_f and the window spans
    ``beat_periods`` periods of the 2*delta_f beat note.
    """

    sample_rate: float = 64.0
    beat_periods: int = 16

    def check(self, params: BenchParams) -> tuple[int, float]:
        """Validate against ``params``; return (sample count, sample rate in Hz)."""
        fs = self.sample_rate * params.delta_f
        beat = 2 * params.delta_f
        if self.sample_rate < 16 * 2:
            raise ConfigError(f"sample_rate {self.sample_rate}*delta_f is below 16x the beat frequency")
        if int(self.beat_periods) != self.beat_periods or self.beat_periods < 1:
            raise ConfigError("window must be a positive integer number of beat periods")
        per_beat = self.sample_rate / 2
        if abs(per_beat - round(per_beat)) > 1e-9:
            raise ConfigError("sample_rate must give an integer number of samples per beat period")
        n = int(round(per_beat)) * int(self.beat_periods)
        assert abs(n / fs - self.beat_periods / beat) < 1e-9 / params.delta_f
        return n, fs


# -- party assignment ------------------------------------------------------

def party(detector: str) -> str | None:
    """``"signal"`` for s-detectors, ``"idler"`` for i-detectors."""
    if detector.startswith("s"):
        return "signal"
    if detector.startswith("i"):
        return "idler"
    return None


def _check_cross_party(det_a: str, det_b: str) -> None:
    pa, pb = party(det_a), party(det_b)
    if det_a == det_b or (pa is not None and pa == pb):
        raise ValueError(f"{det_a}/{det_b} is not a cross-party pair")


# -- analytic pipeline -----------------------------------------------------

@functools.lru_cache(maxsize=4096)
def _fields(graph: BenchGraph) -> dict[str, PortField]:
    return propagate(graph)


def detector_fields(graph: BenchGraph) -> dict[str, PortField]:
    return _fields(graph)


def detector_field(graph: BenchGraph, detector: str) -> PortField:
    fields = _fields(graph)
    if detector not in fields:
        raise KeyError(f"unknown detector {detector!r}")
    return fields[detector]


def detector_mean(graph: BenchGraph, detector: str) -> float:
    return mean_intensity(detector_field(graph, detector), graph.bench_params)


def fringe_visibility(values) -> float:
    """(max - min)/(max + min) of a trace of (phi, intensity) pairs or intensities."""
    ys = [v[1] if isinstance(v, (tuple, list)) else v for v in values]
    if not ys:
        return 0.0
    hi, lo = max(ys), min(ys)
    if hi + lo <= 0:
        return 0.0
    return (hi - lo) / (hi + lo)


def _joint_classes(pf_a: PortField, pf_b: PortField) -> tuple[int, ...]:
    return tuple(sorted(set(pf_a.occupied_classes()) & set(pf_b.occupied_classes())))


def _pair_rates(pf_a: PortField, pf_b: PortField) -> tuple[float, float]:
    """(gated, ungated) joint rates averaged over jointly occupied slots."""
    classes = _joint_classes(pf_a, pf_b)
    if not classes:
        return 0.0, 0.0
    pairs = product_term_pairs(pf_a, pf_b)
    gated = ungated = 0.0
    for c in classes:
        by_net: dict[int, complex] = {}
        for pair in pairs:
            ta, tb, net = pair
            if ta.occupies(c) and tb.occupies(c):
                by_net[net] = by_net.get(net, 0j) + pair_amplitude(pair)
        gated += abs(by_net.get(0, 0j)) ** 2
        ungated += sum(abs(z) ** 2 for z in by_net.values())
    return gated / len(classes), ungated / len(classes)


def _phi_graphs(graph: BenchGraph, phi_grid) -> list[BenchGraph]:
    """Copies of ``graph`` with psi chosen so that phi takes each grid value."""
    p = graph.bench_params
    rest = p.phi - p.psi
    return [graph.with_params(psi=phi - rest) for phi in phi_grid]


def default_phi_grid(n: int = 16) -> tuple[float, ...]:
    return tuple(2 * math.pi * k / n for k in range(n))


def gated_correlation_analytic(graph: BenchGraph, det_a: str, det_b: str,
                               phi_grid=None) -> CorrelationResult:
    """Joint rate keeping only zero-net-offset field products.

    ``ungated_value`` keeps every product and time-averages the beat notes.
    ``per_phi_values`` repeats the gated rate with psi moved so that phi
    visits each point of ``phi_grid``.
    """
    _check_cross_party(det_a, det_b)
    gated, ungated = _pair_rates(detector_field(graph, det_a), detector_field(graph, det_b))
    per_phi: list[float] = []
    if phi_grid is not None:
        for g in _phi_graphs(graph, phi_grid):
            per_phi.append(_pair_rates(detector_field(g, det_a), detector_field(g, det_b))[0])
    return CorrelationResult(det_a, det_b, gated, ungated,
                             tuple(phi_grid or ()), tuple(per_phi), "analytic")


def correlation_map(graph: BenchGraph, xi_grid, theta_grid, det_a: str = "s1",
                    det_b: str = "i3", gated: bool = True) -> np.ndarray:
    """Joint rate on a (xi, theta) grid; rows follow xi, columns theta (radians)."""
    out = np.empty((len(xi_grid), len(theta_grid)))
    for i, xi in enumerate(xi_grid):
        for j, theta in enumerate(theta_grid):
            r = gated_correlation_analytic(graph.with_params(xi=xi, theta=theta), det_a, det_b)
            out[i, j] = r.gated_value if gated else r.ungated_value
    return out


# -- sampled pipeline ------------------------------------------------------

def _time_grid(params: BenchParams, cfg: SampledConfig) -> np.ndarray:
    n, fs = cfg.check(params)
    return np.arange(n) / fs


def synthesize(pf: PortField, slot_class: int, t: np.ndarray,
               params: BenchParams) -> np.ndarray:
    """Rotating-frame (H, V) envelope of one slot class, shape (2, len(t))."""
    env = np.zeros((2, t.size), dtype=complex)
    for term in pf.terms:
        if not term.occupies(slot_class):
            continue
        carrier = np.exp(2j * np.pi * term.freq_offset * params.delta_f * t)
        h, v = term.vector()
        env[0] += h * carrier
        env[1] += v * carrier
    return env


def synthesize_scalar(pf: PortField, slot_class: int, t: np.ndarray,
                      params: BenchParams) -> np.ndarray:
    """Envelope of a polarizer-projected field along its transmission axis."""
    axis = projected_axis(pf)
    env = synthesize(pf, slot_class, t, params)
    if axis is None:
        return env[0]
    return env[0] * np.conj(axis.h) + env[1] * np.conj(axis.v)


def _bins_at(freqs: np.ndarray, step: float) -> np.ndarray:
    """Indices of FFT bins sitting on integer multiples of ``step``."""
    ratio = freqs / step
    return np.flatnonzero(np.abs(ratio - np.round(ratio)) < 1e-9)


def lockin_readout(signal: np.ndarray, fs: float, lag: float, ref_freq: float) -> float:
    """Value of a periodic photocurrent at ``lag``, rebuilt from its beat notes.

    Every FFT bin on a multiple of ``ref_freq`` is demodulated and evaluated
    at the reference lag; bins off the reference comb are rejected.
    """
    n = signal.size
    spec = np.fft.fft(signal) / n
    freqs = np.fft.fftfreq(n, d=1.0 / fs)
    keep = _bins_at(freqs, ref_freq)
    value = np.sum(spec[keep] * np.exp(2j * np.pi * freqs[keep] * lag))
    return float(value.real)


def detector_mean_sampled(graph: BenchGraph, detector: str,
                          cfg: SampledConfig = SampledConfig()) -> float:
    params = graph.bench_params
    pf = detector_field(graph, detector)
    classes = pf.occupied_classes()
    if not classes:
        return 0.0
    n, fs = cfg.check(params)
    t = np.arange(n) / fs
    total = 0.0
    for c in classes:
        env = synthesize(pf, c, t, params)
        current = np.abs(env[0]) ** 2 + np.abs(env[1]) ** 2
        total += lockin_readout(current, fs, params.tau, params.delta_f)
    return total / len(classes)


def product_signal(graph: BenchGraph, det_a: str, det_b: str, slot_class: int,
                   cfg: SampledConfig = SampledConfig()) -> tuple[np.ndarray, float]:
    """E_a(t)*E_b(t) for one slot class, with its sample rate."""
    params = graph.bench_params
    n, fs = cfg.check(params)
    t = np.arange(n) / fs
    ea = synthesize_scalar(detector_field(graph, det_a), slot_class, t, params)
    eb = synthesize_scalar(detector_field(graph, det_b), slot_class, t, params)
    return ea * eb, fs


def product_spectrum(graph: BenchGraph, det_a: str, det_b: str, slot_class: int,
                     cfg: SampledConfig = SampledConfig()) -> tuple[np.ndarray, np.ndarray]:
    """(frequencies in Hz, power per bin) of the product signal."""
    p, fs = product_signal(graph, det_a, det_b, slot_class, cfg)
    spec = np.fft.fft(p) / p.size
    return np.fft.fftfreq(p.size, d=1.0 / fs), np.abs(spec) ** 2


def _sampled_rates(graph: BenchGraph, det_a: str, det_b: str,
                   cfg: SampledConfig) -> tuple[float, float]:
    classes = _joint_classes(detector_field(graph, det_a), detector_field(graph, det_b))
    if not classes:
        return 0.0, 0.0
    gated = ungated = 0.0
    for c in classes:
        p, _ = product_signal(graph, det_a, det_b, c, cfg)
        spec = np.fft.fft(p)
        mask = np.zeros_like(spec)
        mask[0] = spec[0]
        p_gated = np.fft.ifft(mask)
        gated += float(np.mean(np.abs(p_gated) ** 2))
        ungated += float(np.mean(np.abs(p) ** 2))
    return gated / len(classes), ungated / len(classes)


def gated_correlation_sampled(graph: BenchGraph, det_a: str, det_b: str,
                              cfg: SampledConfig = SampledConfig(),
                              phi_grid=None) -> CorrelationResult:
    """Joint rate from the DC bin of the sampled field-product signal."""
    _check_cross_party(det_a, det_b)
    cfg.check(graph.bench_params)
    gated, ungated = _sampled_rates(graph, det_a, det_b, cfg)
    per_phi: list[float] = []
    if phi_grid is not None:
        per_phi = [_sampled_rates(g, det_a, det_b, cfg)[0] for g in _phi_graphs(graph, phi_grid)]
    return CorrelationResult(det_a, det_b, gated, ungated,
                             tuple(phi_grid or ()), tuple(per_phi), "sampled")


# -- CHSH ------------------------------------------------------------------

def joint_rate(graph: BenchGraph, xi: float, theta: float, pair=("s1", "i3"),
               gated: bool = True) -> float:
    r = gated_correlation_analytic(graph.with_params(xi=xi, theta=theta), *pair)
    return r.gated_value if gated else r.ungated_value


def chsh_E(graph: BenchGraph, xi: float, theta: float, pair=("s1", "i3"),
           gated: bool = True) -> float:
    """Rate-normalized correlator from the four polarizer-rotated rates."""
    perp = math.pi / 2
    r = functools.partial(joint_rate, graph, pair=pair, gated=gated)
    same = r(xi, theta) + r(xi + perp, theta + perp)
    cross = r(xi + perp, theta) + r(xi, theta + perp)
    total = same + cross
    if total <= 0:
        raise ZeroDivisionError("all four joint rates vanish")
    return (same - cross) / total


def chsh_S(graph: BenchGraph, a: float, a_prime: float, b: float, b_prime: float,
           pair=("s1", "i3"), gated: bool = True, e_func=None) -> ChshResult:
    e = e_func or functools.partial(chsh_E, graph, pair=pair, gated=gated)
    es = (e(a, b), e(a, b_prime), e(a_prime, b), e(a_prime, b_prime))
    return ChshResult(a, a_prime, b, b_prime, es, es[0] + es[1] + es[2] - es[3], gated)


CANONICAL_SETTINGS = (0.0, math.radians(45.0), math.radians(-22.5), math.radians(22.5))


def _cached_e(graph: BenchGraph, pair, gated):
    cache: dict[tuple[float, float], float] = {}

    def e(xi, theta):
        key = (xi, theta)
        if key not in cache:
            cache[key] = chsh_E(graph, xi, theta, pair=pair, gated=gated)
        return cache[key]
    return e


def chsh_max_search(graph: BenchGraph, pair=("s1", "i3"), gated: bool = True,
                    tie_a: bool = False, grid_deg: float = 15.0,
                    tol: float = 1e-6) -> ChshResult:
    """Maximize S: coarse grid over all four settings, then coordinate descent.

    With ``tie_a`` the two signal-side settings are forced equal.
    """
    e = _cached_e(graph, pair, gated)
    grid = [math.radians(k * grid_deg) for k in range(int(round(180 / grid_deg)))]
    table = np.array([[e(x, y) for y in grid] for x in grid])
    # S[a, a', b, b'] = E[a,b] + E[a,b'] + E[a',b] - E[a',b']
    s = (table[:, None, :, None] + table[:, None, None, :]
         + table[None, :, :, None] - table[None, :, None, :])
    if tie_a:
        idx = np.arange(len(grid))
        sub = s[idx, idx]  # axes (a, b, b')
        ia, ib, ibp = np.unravel_index(int(np.argmax(sub)), sub.shape)
        x = [grid[ia], grid[ia], grid[ib], grid[ibp]]
    else:
        best = np.unravel_index(int(np.argmax(s)), s.shape)
        x = [grid[i] for i in best]

    def score(v):
        a, ap, b, bp = v
        if tie_a:
            ap = a
        return e(a, b) + e(a, bp) + e(ap, b) - e(ap, bp)

    coords = (0, 2, 3) if tie_a else (0, 1, 2, 3)
    current = score(x)
    step = math.radians(grid_deg)
    while step >= tol:
        improved = False
        for i in coords:
            for sign in (1, -1):
                trial = list(x)
                trial[i] += sign * step
                val = score(trial)
                if val > current + 1e-15:
                    x, current, improved = trial, val, True
                    break
        if not improved:
            step /= 2
    if tie_a:
        x[1] = x[0]
    return chsh_S(graph, *x, pair=pair, gated=gated, e_func=e)
