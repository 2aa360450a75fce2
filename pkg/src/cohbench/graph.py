"""Bench topology: typed elements, port links, detector bindings."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

from .field import RESERVED, BenchParams

# kind -> (input ports, output ports)
PORTS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "laser": ((), ("out",)),
    "hwp": (("in",), ("out",)),
    "pbs": (("in0", "in1"), ("h_out", "v_out")),
    "bs": (("in0", "in1"), ("out0", "out1")),
    "eom": (("in",), ("out",)),
    "aom": (("in",), ("out",)),
    "delay": (("in",), ("out",)),
    "phase": (("in",), ("out",)),
    "polarizer": (("in",), ("out",)),
    "mirror": (("in",), ("out",)),
}

# kind -> required kwargs; polarizer takes exactly one of its alternatives
REQUIRED: dict[str, tuple[str, ...]] = {
    "laser": ("amplitude",),
    "hwp": ("angle_deg",),
    "pbs": (),
    "bs": (),
    "eom": (),
    "aom": ("sign",),
    "delay": ("slots", "zeta_rad"),
    "phase": ("psi_rad",),
    "polarizer": (),
    "mirror": (),
}
POLARIZER_ARGS = ("angle_deg", "angle_param")

LOSSLESS = frozenset(PORTS) - {"polarizer", "laser"}


class BenchError(ValueError):
    """Raised when a bench cannot be evaluated; carries its diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    line: int
    column: int
    severity: str
    message: str

    def __str__(self):
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


Value = float | str  # a number or the name of a declared param


@dataclass(frozen=True)
class Element:
    kind: str
    args: tuple[tuple[str, Value], ...] = ()

    @classmethod
    def of(cls, kind: str, **args: Value) -> "Element":
        return cls(kind, tuple(sorted(args.items())))

    @property
    def kwargs(self) -> dict[str, Value]:
        return dict(self.args)

    @property
    def inputs(self) -> tuple[str, ...]:
        return PORTS[self.kind][0]

    @property
    def outputs(self) -> tuple[str, ...]:
        return PORTS[self.kind][1]


@dataclass(frozen=True, order=True)
class Link:
    src: str
    src_port: str
    dst: str
    dst_port: str

    def __str__(self):
        return f"{self.src}.{self.src_port} -> {self.dst}.{self.dst_port}"


@dataclass(frozen=True)
class BenchGraph:
    name: str = "bench"
    nodes: Mapping[str, Element] = field(default_factory=dict)
    links: tuple[Link, ...] = ()
    detectors: Mapping[str, tuple[str, str]] = field(default_factory=dict)
    params: Mapping[str, float] = field(default_factory=dict)
    # source positions, keyed ("node", name) / ("link", Link) / ("detector", name)
    positions: Mapping[tuple, tuple[int, int]] = field(
        default_factory=dict, compare=False, repr=False
    )

    def __post_init__(self):
        object.__setattr__(self, "nodes", dict(self.nodes))
        object.__setattr__(self, "links", tuple(sorted(self.links)))
        object.__setattr__(self, "detectors", dict(self.detectors))
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.nodes.items())), self.links,
                     tuple(sorted(self.detectors.items())), tuple(sorted(self.params.items()))))

    @property
    def bench_params(self) -> BenchParams:
        return BenchParams(**{k: v for k, v in self.params.items() if k in RESERVED})

    def with_params(self, **kw: float) -> "BenchGraph":
        unknown = set(kw) - set(self.params) - set(RESERVED)
        if unknown:
            raise KeyError(f"unknown param(s): {', '.join(sorted(unknown))}")
        params = dict(self.params)
        params.update({k: float(v) for k, v in kw.items()})
        return replace(self, params=params)

    def resolve(self, value: Value) -> float:
        if isinstance(value, str):
            if value in self.params:
                return self.params[value]
            if value in RESERVED:
                return getattr(self.bench_params, value)
            raise KeyError(value)
        return float(value)

    def position(self, key: tuple) -> tuple[int, int]:
        return self.positions.get(key, (1, 1))


def _diag(graph: BenchGraph, key: tuple, message: str) -> Diagnostic:
    line, col = graph.position(key)
    return Diagnostic(line, col, "error", message)


def _kahn(graph: BenchGraph) -> list[str]:
    indeg = {n: 0 for n in graph.nodes}
    succ: dict[str, set[str]] = {n: set() for n in graph.nodes}
    for link in graph.links:
        if link.src in succ and link.dst in indeg and link.dst not in succ[link.src]:
            succ[link.src].add(link.dst)
            indeg[link.dst] += 1
    ready = sorted(n for n, d in indeg.items() if d == 0)
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for m in sorted(succ[n]):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
        ready.sort()
    return order


def topological_order(graph: BenchGraph) -> list[str] | None:
    """Node names in dependency order (ties broken by name); None on a cycle."""
    order = _kahn(graph)
    return order if len(order) == len(graph.nodes) else None


def validate(graph: BenchGraph) -> list[Diagnostic]:
    """Semantic checks; an empty list means the bench can be propagated."""
    out: list[Diagnostic] = []

    for name, el in sorted(graph.nodes.items()):
        key = ("node", name)
        if el.kind not in PORTS:
            out.append(_diag(graph, key, f"node {name}: unknown kind {el.kind!r}"))
            continue
        kw = el.kwargs
        if el.kind == "polarizer":
            given = [a for a in POLARIZER_ARGS if a in kw]
            if len(given) != 1:
                out.append(_diag(graph, key,
                                 f"node {name}: polarizer needs exactly one of angle_deg, angle_param"))
            allowed = set(POLARIZER_ARGS)
        else:
            allowed = set(REQUIRED[el.kind])
            for arg in REQUIRED[el.kind]:
                if arg not in kw:
                    out.append(_diag(graph, key, f"node {name}: missing argument {arg!r}"))
        for arg, value in el.args:
            if arg not in allowed:
                out.append(_diag(graph, key, f"node {name}: unexpected argument {arg!r}"))
                continue
            if isinstance(value, str):
                if value not in graph.params:
                    out.append(_diag(graph, key,
                                     f"node {name}: {arg} references undeclared param {value!r}"))
            elif arg == "angle_param":
                out.append(_diag(graph, key, f"node {name}: angle_param must name a param"))
            elif not math.isfinite(value):
                out.append(_diag(graph, key, f"node {name}: {arg} is not finite"))
        if el.kind == "aom" and not isinstance(kw.get("sign"), str) and kw.get("sign") not in (1.0, -1.0, None):
            out.append(_diag(graph, key, f"node {name}: aom sign must be +1 or -1"))
        if el.kind == "delay" and "slots" in kw and not isinstance(kw["slots"], str):
            s = kw["slots"]
            if s < 0 or s != int(s):
                out.append(_diag(graph, key, f"node {name}: delay slots must be a non-negative integer"))

    incoming: dict[tuple[str, str], Link] = {}
    outgoing: dict[tuple[str, str], Link] = {}
    # Links in source order so arity errors name the offending (later) line.
    for link in sorted(graph.links, key=lambda lk: graph.position(("link", lk))):
        key = ("link", link)
        src, dst = graph.nodes.get(link.src), graph.nodes.get(link.dst)
        bad = False
        if src is None:
            out.append(_diag(graph, key, f"link {link}: unknown node {link.src}"))
            bad = True
        elif src.kind in PORTS and link.src_port not in src.outputs:
            out.append(_diag(graph, key,
                             f"link {link}: {link.src} ({src.kind}) has no output port {link.src_port!r}"))
            bad = True
        if dst is None:
            out.append(_diag(graph, key, f"link {link}: unknown node {link.dst}"))
            bad = True
        elif dst.kind in PORTS and link.dst_port not in dst.inputs:
            out.append(_diag(graph, key,
                             f"link {link}: {link.dst} ({dst.kind}) has no input port {link.dst_port!r}"))
            bad = True
        if bad:
            continue
        dkey = (link.dst, link.dst_port)
        if dkey in incoming:
            out.append(_diag(graph, key,
                             f"link {link}: arity error, input {link.dst}.{link.dst_port} already fed by {incoming[dkey]}"))
        else:
            incoming[dkey] = link
        skey = (link.src, link.src_port)
        if skey in outgoing:
            out.append(_diag(graph, key,
                             f"link {link}: output {link.src}.{link.src_port} is linked twice"))
        else:
            outgoing[skey] = link

    for name, el in sorted(graph.nodes.items()):
        if el.kind in PORTS and el.inputs and not any((name, p) in incoming for p in el.inputs):
            out.append(_diag(graph, ("node", name), f"node {name}: no incoming link"))

    bound: dict[tuple[str, str], str] = {}
    for det, (node, port) in sorted(graph.detectors.items()):
        key = ("detector", det)
        el = graph.nodes.get(node)
        if el is None:
            out.append(_diag(graph, key, f"detector {det}: unknown node {node}"))
        elif el.kind in PORTS and port not in el.outputs:
            out.append(_diag(graph, key, f"detector {det}: {node} has no output port {port!r}"))
        elif (node, port) in outgoing:
            out.append(_diag(graph, key, f"detector {det}: {node}.{port} is not a sink"))
        elif (node, port) in bound:
            out.append(_diag(graph, key,
                             f"detector {det}: {node}.{port} already bound to {bound[(node, port)]}"))
        else:
            bound[(node, port)] = det

    for name in sorted(set(graph.nodes) - set(_kahn(graph))):
        out.append(_diag(graph, ("node", name), f"cycle detected through node {name}"))

    try:
        graph.bench_params
    except ValueError as exc:
        out.append(Diagnostic(1, 1, "error", f"invalid params: {exc}"))

    return sorted(out, key=lambda d: (d.line, d.column, d.message))
