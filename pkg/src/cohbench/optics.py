"""Optical elements as PortField transforms, graph propagation, the built-in fig1 bench.

Conventions
-----------
* HWP at angle ``eta``: Jones matrix ``[[cos 2eta, sin 2eta], [sin 2eta, -cos 2eta]]``.
* PBS: H transmits with factor 1, V reflects with factor ``1j``. ``h_out`` is
  the port where H light entering ``in0`` exits (and V entering ``in1``);
  ``v_out`` receives V from ``in0`` and H from ``in1``.
* BS: symmetric, ``out0 = (in0 + i*in1)/sqrt2``, ``out1 = (i*in0 + in1)/sqrt2``.
"""
from __future__ import annotations

import cmath
import csv
import io
import math
from dataclasses import dataclass, replace

from .field import (
    LOWER,
    PARITY_NAMES,
    SNAP,
    UPPER,
    BenchParams,
    FieldTerm,
    JonesVec,
    PortField,
    canonical_jones,
    merge_terms,
    rotating_phase,
)
from .graph import BenchError, BenchGraph, Element, Link, topological_order, validate

PBS_REFLECTION = 1j
BS_REFLECTION = 1j
SQRT_HALF = math.sqrt(0.5)


def _rejones(term: FieldTerm, h: complex, v: complex, **labels) -> FieldTerm | None:
    jones, scale = canonical_jones(h, v)
    if scale == 0:
        return None
    return replace(term, amplitude=scale, jones=jones, **labels)


def apply_hwp(pf: PortField, angle: float) -> PortField:
    c, s = math.cos(2 * angle), math.sin(2 * angle)
    out = []
    for t in pf.terms:
        h, v = t.vector()
        new = _rejones(t, c * h + s * v, s * h - c * v)
        if new is not None:
            out.append(new)
    return pf.with_terms(out)


def apply_pbs(pf0: PortField, pf1: PortField,
              names: tuple[str, str] = ("h_out", "v_out")) -> tuple[PortField, PortField]:
    """Route polarization components; untagged light gets its path origin here."""
    h_out: list[FieldTerm] = []
    v_out: list[FieldTerm] = []

    def route(term, comp, pol, sink, factor, origin):
        if abs(comp) == 0:
            return
        labels = {} if term.origin is not None else {"origin": origin}
        jones = JonesVec(1 + 0j, 0j) if pol == "H" else JonesVec(0j, 1 + 0j)
        sink.append(replace(term, amplitude=comp * factor, jones=jones, **labels))

    for t in pf0.terms:
        h, v = t.vector()
        route(t, h, "H", h_out, 1, LOWER)
        route(t, v, "V", v_out, PBS_REFLECTION, UPPER)
    for t in pf1.terms:
        h, v = t.vector()
        route(t, h, "H", v_out, 1, UPPER)
        route(t, v, "V", h_out, PBS_REFLECTION, LOWER)
    return PortField(names[0], tuple(h_out)), PortField(names[1], tuple(v_out))


def apply_bs(pf0: PortField, pf1: PortField,
             names: tuple[str, str] = ("out0", "out1")) -> tuple[PortField, PortField]:
    r = BS_REFLECTION
    out0 = [replace(t, amplitude=t.amplitude * SQRT_HALF) for t in pf0.terms]
    out0 += [replace(t, amplitude=t.amplitude * r * SQRT_HALF) for t in pf1.terms]
    out1 = [replace(t, amplitude=t.amplitude * r * SQRT_HALF) for t in pf0.terms]
    out1 += [replace(t, amplitude=t.amplitude * SQRT_HALF) for t in pf1.terms]
    return PortField(names[0], tuple(out0)), PortField(names[1], tuple(out1))


def apply_eom_swap(pf: PortField) -> PortField:
    """Exchange H and V on odd physical slots, pass even slots untouched.

    A continuous term splits into an even-slot copy and a swapped odd-slot
    copy with the same amplitude (the copies never overlap in time).
    """
    out = []
    for t in pf.terms:
        for cls in t.physical_classes():
            parity = (cls - t.slot_shift) % 2
            copy = replace(t, slot_parity=parity)
            if cls == 1:
                h, v = t.vector()
                copy = _rejones(copy, v, h)
            out.append(copy)
    return pf.with_terms(out)


def apply_aom_shift(pf: PortField, sign: int) -> PortField:
    return pf.with_terms(replace(t, freq_offset=t.freq_offset + int(sign)) for t in pf.terms)


def apply_delay_slot(pf: PortField, slots: int, zeta: float) -> PortField:
    if slots < 0:
        raise ValueError("delay must be a non-negative number of slots")
    ph = cmath.exp(1j * zeta)
    return pf.with_terms(
        replace(t, slot_shift=t.slot_shift + int(slots), amplitude=t.amplitude * ph)
        for t in pf.terms
    )


def apply_phase(pf: PortField, psi: float) -> PortField:
    ph = cmath.exp(1j * psi)
    return pf.with_terms(replace(t, amplitude=t.amplitude * ph) for t in pf.terms)


def apply_polarizer(pf: PortField, angle: float) -> PortField:
    """Project every term onto the transmission axis at ``angle`` from H."""
    axis, _ = canonical_jones(math.cos(angle), math.sin(angle))
    out = []
    for t in pf.terms:
        h, v = t.vector()
        proj = h * axis.h + v * axis.v
        if abs(proj) <= SNAP * abs(t.amplitude):
            continue
        out.append(replace(t, amplitude=proj, jones=axis))
    return pf.with_terms(out)


def laser_field(amplitude: float) -> PortField:
    return PortField("out", (FieldTerm(complex(amplitude)),))


def _arg(graph: BenchGraph, el: Element, name: str) -> float:
    return graph.resolve(el.kwargs[name])


def _evaluate(graph: BenchGraph, name: str, el: Element,
              inputs: dict[str, PortField]) -> dict[str, PortField]:
    def inp(port):
        return inputs.get(port, PortField(port))

    kind = el.kind
    if kind == "laser":
        return {"out": laser_field(_arg(graph, el, "amplitude"))}
    if kind in ("pbs", "bs"):
        fn = apply_pbs if kind == "pbs" else apply_bs
        a, b = fn(inp("in0"), inp("in1"), el.outputs)
        return {a.port: a, b.port: b}
    x = inp("in")
    if kind == "hwp":
        y = apply_hwp(x, math.radians(_arg(graph, el, "angle_deg")))
    elif kind == "eom":
        y = apply_eom_swap(x)
    elif kind == "aom":
        y = apply_aom_shift(x, int(_arg(graph, el, "sign")))
    elif kind == "delay":
        y = apply_delay_slot(x, int(_arg(graph, el, "slots")), _arg(graph, el, "zeta_rad"))
    elif kind == "phase":
        y = apply_phase(x, _arg(graph, el, "psi_rad"))
    elif kind == "polarizer":
        kw = el.kwargs
        if "angle_deg" in kw:
            angle = math.radians(graph.resolve(kw["angle_deg"]))
        else:
            angle = graph.resolve(kw["angle_param"])
        y = apply_polarizer(x, angle)
    elif kind == "mirror":
        y = x
    else:  # pragma: no cover - validate rejects unknown kinds
        raise BenchError([f"node {name}: unknown kind {kind}"])
    return {"out": y.renamed("out")}


def propagate_ports(graph: BenchGraph) -> dict[tuple[str, str], PortField]:
    """Field at every output port of every node."""
    diags = validate(graph)
    if diags:
        raise BenchError(diags)
    order = topological_order(graph)
    feeds: dict[tuple[str, str], tuple[str, str]] = {
        (lk.dst, lk.dst_port): (lk.src, lk.src_port) for lk in graph.links
    }
    fields: dict[tuple[str, str], PortField] = {}
    for name in order:
        el = graph.nodes[name]
        inputs = {}
        for port in el.inputs:
            src = feeds.get((name, port))
            if src is not None:
                inputs[port] = fields[src].renamed(port)
        for port, pf in _evaluate(graph, name, el, inputs).items():
            fields[(name, port)] = merge_terms(pf.renamed(f"{name}.{port}"))
    return fields


def propagate(graph: BenchGraph) -> dict[str, PortField]:
    """Field at every detector, keyed by detector name."""
    fields = propagate_ports(graph)
    return {det: fields[node_port].renamed(det)
            for det, node_port in sorted(graph.detectors.items())}


# -- reporting -------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    port: str
    origin: str
    pol: str
    freq_offset: int
    slot_parity: str
    slot_shift: int
    coefficient: complex


def _pol_label(j: JonesVec) -> str:
    if j.axis:
        return j.axis
    angle = math.degrees(math.atan2(j.v.real, j.h.real))
    if j.h.imag == 0 and j.v.imag == 0:
        return f"{angle:.6g}deg"
    return f"({j.h:.6g},{j.v:.6g})"


def field_report(graph: BenchGraph, port: str,
                 fields: dict[str, PortField] | None = None) -> list[ReportRow]:
    """Coefficient table of one detector (or ``node.port``) field.

    Coefficients include the rotating-frame phase at the detection lag tau
    and are normalized so the largest one is real positive.
    """
    if fields is None:
        fields = propagate(graph)
    if port in fields:
        pf = fields[port]
    else:
        node, _, p = port.partition(".")
        all_ports = propagate_ports(graph)
        if (node, p) not in all_ports:
            raise KeyError(f"unknown port {port!r}")
        pf = all_ports[(node, p)]
    params = graph.bench_params
    coeffs = [t.amplitude * rotating_phase(t.freq_offset, params.tau, params) for t in pf.terms]
    ref = max(coeffs, key=abs, default=1)
    norm = abs(ref) / ref if ref else 1
    rows = []
    for t, c in zip(pf.terms, coeffs):
        rows.append(ReportRow(
            port=port,
            origin=t.origin or "",
            pol=_pol_label(t.jones),
            freq_offset=t.freq_offset,
            slot_parity=PARITY_NAMES[t.slot_parity],
            slot_shift=t.slot_shift,
            coefficient=c * norm,
        ))
    return rows


REPORT_COLUMNS = ("port", "origin", "pol", "freq_offset", "slot_parity", "slot_shift", "re", "im")


def report_rows(rows: list[ReportRow]) -> list[list]:
    return [[r.port, r.origin, r.pol, r.freq_offset, r.slot_parity, r.slot_shift,
             r.coefficient.real, r.coefficient.imag] for r in rows]


def report_csv(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in report_rows(rows):
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def coefficient(rows: list[ReportRow], origin: str, **match) -> complex:
    """Look up the single coefficient with the given origin (and labels)."""
    hits = [r for r in rows if r.origin == origin
            and all(getattr(r, k) == v for k, v in match.items())]
    if len(hits) != 1:
        raise KeyError(f"{len(hits)} rows match origin={origin} {match}")
    return hits[0].coefficient


# -- built-in two-party bench ----------------------------------------------

FIG1_DETECTORS = ("s1", "s2", "i3", "i4")


def fig1_param_values(params: BenchParams) -> dict[str, float]:
    return {
        "delta_f": params.delta_f, "e0": params.e0, "psi": params.psi,
        "t_e": params.t_e, "tau": params.tau, "theta": params.theta,
        "xi": params.xi, "zeta": params.zeta,
    }


def build_fig1(params: BenchParams | None = None, delay_slots: int = 1,
               stop_at: str | None = None) -> BenchGraph:
    """The complete two-party bench.

    ``delay_slots=0`` removes the compensating delay lines. ``stop_at``
    truncates the bench: ``"arms"`` binds detectors ``upper``/``lower`` on the
    first interferometer's arms just before PBS2, ``"ports"`` binds ``A``/``B``
    at the first interferometer's outputs.
    """
    params = params or BenchParams()
    nodes: dict[str, Element] = {}
    links: list[Link] = []

    def node(name, kind, **args):
        nodes[name] = Element.of(kind, **args)

    def link(a, ap, b, bp):
        links.append(Link(a, ap, b, bp))

    node("L", "laser", amplitude="e0")
    node("H1", "hwp", angle_deg=22.5)
    node("PBS1", "pbs")
    node("EOM_u", "eom")
    node("EOM_l", "eom")
    node("H2", "hwp", angle_deg=45.0)
    node("PZT", "phase", psi_rad="psi")
    link("L", "out", "H1", "in")
    link("H1", "out", "PBS1", "in0")
    link("PBS1", "v_out", "EOM_u", "in")
    link("PBS1", "h_out", "EOM_l", "in")
    link("EOM_l", "out", "H2", "in")
    link("EOM_u", "out", "PZT", "in")
    detectors: dict[str, tuple[str, str]] = {}

    if stop_at == "arms":
        detectors = {"upper": ("PZT", "out"), "lower": ("H2", "out")}
        return BenchGraph("fig1_arms", nodes, links, detectors, fig1_param_values(params))

    node("PBS2", "pbs")
    link("PZT", "out", "PBS2", "in0")
    link("H2", "out", "PBS2", "in1")
    # v_out carries V_u (reflected) and H_l (transmitted): port A.
    if stop_at == "ports":
        detectors = {"A": ("PBS2", "v_out"), "B": ("PBS2", "h_out")}
        return BenchGraph("fig1_ports", nodes, links, detectors, fig1_param_values(params))

    # Signal side (port A): V arm holds upper-origin even-slot pulses.
    node("PBS_A", "pbs")
    node("AOM_Au", "aom", sign=1.0)
    node("AOM_Al", "aom", sign=-1.0)
    node("DL_A", "delay", slots=float(delay_slots), zeta_rad="zeta")
    node("BS_A", "bs")
    node("P_s1", "polarizer", angle_param="xi")
    node("P_s2", "polarizer", angle_param="xi")
    link("PBS2", "v_out", "PBS_A", "in0")
    link("PBS_A", "v_out", "AOM_Au", "in")
    link("AOM_Au", "out", "DL_A", "in")
    link("PBS_A", "h_out", "AOM_Al", "in")
    link("DL_A", "out", "BS_A", "in0")
    link("AOM_Al", "out", "BS_A", "in1")
    link("BS_A", "out0", "P_s1", "in")
    link("BS_A", "out1", "P_s2", "in")

    # Idler side (port B): V arm holds lower-origin even-slot pulses; the
    # interferometer phase rides on the upper-origin (H) arm, as on side A.
    node("PBS_B", "pbs")
    node("AOM_Bl", "aom", sign=-1.0)
    node("AOM_Bu", "aom", sign=1.0)
    node("DL_B", "delay", slots=float(delay_slots), zeta_rad=0.0)
    node("PZT_B", "phase", psi_rad="zeta")
    node("BS_B", "bs")
    node("P_i3", "polarizer", angle_param="theta")
    node("P_i4", "polarizer", angle_param="theta")
    link("PBS2", "h_out", "PBS_B", "in0")
    link("PBS_B", "v_out", "AOM_Bl", "in")
    link("AOM_Bl", "out", "DL_B", "in")
    link("PBS_B", "h_out", "AOM_Bu", "in")
    link("AOM_Bu", "out", "PZT_B", "in")
    link("DL_B", "out", "BS_B", "in0")
    link("PZT_B", "out", "BS_B", "in1")
    link("BS_B", "out0", "P_i3", "in")
    link("BS_B", "out1", "P_i4", "in")

    detectors = {"s1": ("P_s1", "out"), "s2": ("P_s2", "out"),
                 "i3": ("P_i3", "out"), "i4": ("P_i4", "out")}
    name = "fig1" if delay_slots == 1 else f"fig1_delay{delay_slots}"
    return BenchGraph(name, nodes, links, detectors, fig1_param_values(params))


def pair_phase(upper: PortField, lower: PortField) -> float:
    """Relative phase between the odd-slot and even-slot product pairs.

    For the first-interferometer arms this is the phase ``alpha`` of the
    alternating polarization-path state ``|VV> + exp(i alpha)|HH>``.
    """
    def slot_product(cls):
        a = [t.amplitude for t in upper.terms if t.occupies(cls)]
        b = [t.amplitude for t in lower.terms if t.occupies(cls)]
        if len(a) != 1 or len(b) != 1:
            raise ValueError(f"expected one term per arm in slot class {cls}")
        return a[0] * b[0]

    return cmath.phase(slot_product(1) / slot_product(0))
