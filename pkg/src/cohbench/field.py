"""Labeled complex-field terms and the intensity algebra built on them.

Fields live in the rotating frame of the laser carrier: a term with
frequency offset ``o`` evolves as ``exp(2j*pi*o*delta_f*t)`` where ``t`` is
the time inside a slot. The AOM drive phase is locked to the slot clock, so
every slot starts the beat at the same phase.

A term occupies either every slot (``slot_parity is None``, a continuous
beam) or one parity class of the slot train. Only the parity of the
physical slot matters because the pulse train is periodic with period two
slots.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

UPPER = "upper"
LOWER = "lower"
ORIGINS = (UPPER, LOWER)

# Jones components below this magnitude are trigonometric round-off.
SNAP = 1e-13

PARITY_NAMES = {None: "all", 0: "even", 1: "odd"}


def _snap(z: complex) -> complex:
    re = 0.0 if abs(z.real) < SNAP else z.real
    im = 0.0 if abs(z.imag) < SNAP else z.imag
    return complex(re, im)


@dataclass(frozen=True)
class JonesVec:
    """Unit polarization direction ``h*H + v*V``."""

    h: complex
    v: complex

    @classmethod
    def from_angle(cls, angle: float) -> "JonesVec":
        return cls(complex(math.cos(angle)), complex(math.sin(angle)))

    @property
    def axis(self) -> str | None:
        """``"H"`` or ``"V"`` for the lab basis states, else None."""
        if self.v == 0:
            return "H"
        if self.h == 0:
            return "V"
        return None

    def components(self) -> tuple[complex, complex]:
        return (self.h, self.v)


def _jones_key(j: JonesVec) -> tuple[float, float, float, float]:
    return (j.h.real, j.h.imag, j.v.real, j.v.imag)


H = JonesVec(1 + 0j, 0j)
V = JonesVec(0j, 1 + 0j)


def canonical_jones(h: complex, v: complex) -> tuple[JonesVec, complex]:
    """Split ``(h, v)`` into a unit JonesVec and a scalar factor.

    The first non-zero component of the returned vector is real positive,
    so the same physical polarization always gets the same label.
    """
    h, v = _snap(complex(h)), _snap(complex(v))
    norm = math.hypot(abs(h), abs(v))
    if norm == 0.0:
        return H, 0j
    lead = h if h != 0 else v
    phase = lead / abs(lead)
    uh, uv = _snap(h / (norm * phase)), _snap(v / (norm * phase))
    if uh == 0:
        uv = complex(1.0)
    elif uv == 0:
        uh = complex(1.0)
    return JonesVec(uh, uv), norm * phase


@dataclass(frozen=True)
class FieldTerm:
    amplitude: complex
    jones: JonesVec = H
    origin: str | None = None
    freq_offset: int = 0
    slot_shift: int = 0
    slot_parity: int | None = None

    @classmethod
    def make(cls, amplitude: complex, h: complex, v: complex, **labels) -> "FieldTerm":
        """Build a term from raw Jones components, normalizing the label."""
        jones, scale = canonical_jones(h, v)
        return cls(complex(amplitude) * scale, jones, **labels)

    @property
    def label(self) -> tuple:
        return (
            self.origin or "",
            _jones_key(self.jones),
            self.freq_offset,
            -1 if self.slot_parity is None else self.slot_parity,
            self.slot_shift,
        )

    def occupies(self, slot: int) -> bool:
        """True if the term is present in physical slot ``slot``."""
        if self.slot_parity is None:
            return True
        return (self.slot_parity + self.slot_shift - slot) % 2 == 0

    def physical_classes(self) -> tuple[int, ...]:
        if self.slot_parity is None:
            return (0, 1)
        return ((self.slot_parity + self.slot_shift) % 2,)

    def vector(self) -> tuple[complex, complex]:
        """Complex H and V field components."""
        return (self.amplitude * self.jones.h, self.amplitude * self.jones.v)


@dataclass(frozen=True)
class PortField:
    port: str
    terms: tuple[FieldTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def with_terms(self, terms: Iterable[FieldTerm]) -> "PortField":
        return PortField(self.port, tuple(terms))

    def renamed(self, port: str) -> "PortField":
        return PortField(port, self.terms)

    def occupied_classes(self) -> tuple[int, ...]:
        seen = set()
        for t in self.terms:
            seen.update(t.physical_classes())
        return tuple(sorted(seen))


@dataclass(frozen=True)
class BenchParams:
    """Scalar knobs of a bench. Angles in radians, times in seconds."""

    e0: float = 1.0
    delta_f: float = 1.0
    t_e: float = 4.0
    psi: float = 0.0
    zeta: float = 0.0
    tau: float = 0.0
    xi: float = 0.0
    theta: float = 0.0
    f0: float = 0.0

    def __post_init__(self):
        if not self.delta_f > 0:
            raise ValueError("delta_f must be positive")
        if not self.t_e > 0:
            raise ValueError("t_e must be positive")
        if not self.e0 > 0:
            raise ValueError("e0 must be positive")

    @property
    def i0(self) -> float:
        return self.e0 ** 2

    @property
    def phi(self) -> float:
        return self.psi + self.zeta + 2 * math.pi * (2 * self.delta_f) * self.tau

    def updated(self, **kw) -> "BenchParams":
        return replace(self, **kw)


RESERVED = ("delta_f", "t_e", "e0", "psi", "zeta", "tau", "xi", "theta")
ANGLE_PARAMS = ("psi", "zeta", "xi", "theta")


def merge_terms(pf: PortField) -> PortField:
    """Combine terms with identical labels and sort into canonical order."""
    acc: dict[tuple, FieldTerm] = {}
    for t in pf.terms:
        key = t.label
        if key in acc:
            prev = acc[key]
            acc[key] = replace(prev, amplitude=prev.amplitude + t.amplitude)
        else:
            acc[key] = t
    return pf.with_terms(acc[k] for k in sorted(acc))


def rotating_phase(freq_offset: int, t: float, params: BenchParams) -> complex:
    return cmath.exp(2j * math.pi * freq_offset * params.delta_f * t)


def instantaneous_intensity(pf: PortField, t: float, slot: int, params: BenchParams) -> float:
    """Photodetector intensity at time ``t`` inside physical slot ``slot``."""
    if slot < 0:
        raise ValueError("slot must be non-negative")
    eh = ev = 0j
    for term in pf.terms:
        if not term.occupies(slot):
            continue
        rot = rotating_phase(term.freq_offset, t, params)
        h, v = term.vector()
        eh += h * rot
        ev += v * rot
    return abs(eh) ** 2 + abs(ev) ** 2


def mean_intensity(pf: PortField, params: BenchParams) -> float:
    """Slot-averaged intensity read out at lag ``tau`` behind the slot clock.

    This is what a heterodyne receiver locked to the synchronized AOM/EOM
    clock reports: the DC level plus every beat note evaluated at the
    reference lag. Averaging runs over occupied slots only (duty-cycle
    normalization). Unequal-offset cross terms contribute with phase
    ``2*pi*(o_a - o_b)*delta_f*tau``; see :func:`time_averaged_intensity`
    for the readout in which they vanish.
    """
    classes = pf.occupied_classes()
    if not classes:
        return 0.0
    total = sum(instantaneous_intensity(pf, params.tau, c, params) for c in classes)
    return total / len(classes)


def time_averaged_intensity(pf: PortField, params: BenchParams) -> float:
    """Slot-averaged DC intensity over an integer number of beat periods."""
    classes = pf.occupied_classes()
    if not classes:
        return 0.0
    powers = slot_powers(pf)
    return sum(powers[c] for c in classes) / len(classes)


def slot_powers(pf: PortField) -> tuple[float, float]:
    """Time-averaged power in the even and odd physical slot classes.

    Terms sharing a frequency offset interfere; others add incoherently.
    """
    powers = [0.0, 0.0]
    for c in (0, 1):
        by_offset: dict[int, list[complex]] = {}
        for term in pf.terms:
            if term.occupies(c):
                h, v = term.vector()
                acc = by_offset.setdefault(term.freq_offset, [0j, 0j])
                acc[0] += h
                acc[1] += v
        powers[c] = sum(abs(h) ** 2 + abs(v) ** 2 for h, v in by_offset.values())
    return powers[0], powers[1]


def scalar_amplitude(term: FieldTerm, axis: JonesVec) -> complex:
    h, v = term.vector()
    return h * axis.h.conjugate() + v * axis.v.conjugate()


def projected_axis(pf: PortField) -> JonesVec | None:
    """The single polarization shared by all terms, or None if empty.

    Raises ValueError when the terms are not polarizer-projected.
    """
    axes = {t.jones for t in pf.terms}
    if not axes:
        return None
    if len(axes) > 1:
        raise ValueError(f"port {pf.port!r} carries more than one polarization")
    return axes.pop()


def product_term_pairs(
    pf_a: PortField, pf_b: PortField
) -> list[tuple[FieldTerm, FieldTerm, int]]:
    """Every (term_a, term_b, net_offset) pair of two projected fields."""
    projected_axis(pf_a)
    projected_axis(pf_b)
    return [
        (ta, tb, ta.freq_offset + tb.freq_offset)
        for ta in pf_a.terms
        for tb in pf_b.terms
    ]


def pair_amplitude(pair: tuple[FieldTerm, FieldTerm, int]) -> complex:
    ta, tb, _ = pair
    return ta.amplitude * tb.amplitude


def superpose(ports: Sequence[PortField], port: str) -> PortField:
    """Concatenate the terms of several fields onto one port."""
    terms: list[FieldTerm] = []
    for pf in ports:
        terms.extend(pf.terms)
    return PortField(port, tuple(terms))
