"""Random fields and random valid benches for property checks."""
from __future__ import annotations

import math

import numpy as np

from .field import LOWER, UPPER, FieldTerm, PortField
from .graph import BenchGraph, Element, Link

_SINGLE = ("hwp", "eom", "aom", "delay", "phase", "polarizer", "mirror")


def random_term(rng: np.random.Generator) -> FieldTerm:
    amp = complex(rng.normal(), rng.normal())
    h = complex(rng.normal(), rng.normal())
    v = complex(rng.normal(), rng.normal())
    return FieldTerm.make(
        amp, h, v,
        origin=rng.choice([None, UPPER, LOWER]),
        freq_offset=int(rng.integers(-1, 2)),
        slot_shift=int(rng.integers(0, 3)),
        slot_parity=rng.choice([None, 0, 1]),
    )


def random_field(rng: np.random.Generator, port: str = "p", max_terms: int = 5) -> PortField:
    n = int(rng.integers(0, max_terms + 1))
    return PortField(port, tuple(random_term(rng) for _ in range(n)))


def _random_args(kind: str, rng: np.random.Generator, params: dict[str, float]) -> dict:
    if kind == "hwp":
        return {"angle_deg": float(np.round(rng.uniform(0, 180), 3))}
    if kind == "aom":
        return {"sign": float(rng.choice([-1.0, 1.0]))}
    if kind == "delay":
        return {"slots": float(rng.integers(0, 3)), "zeta_rad": float(rng.uniform(-math.pi, math.pi))}
    if kind == "phase":
        if params and rng.random() < 0.5:
            return {"psi_rad": str(rng.choice(sorted(params)))}
        return {"psi_rad": float(rng.uniform(-math.pi, math.pi))}
    if kind == "polarizer":
        if params and rng.random() < 0.5:
            return {"angle_param": str(rng.choice(sorted(params)))}
        return {"angle_deg": float(rng.uniform(0, 180))}
    return {}


def random_bench(rng: np.random.Generator, steps: int = 8) -> BenchGraph:
    """A random valid DAG: one laser, chains of elements, PBS splits, BS merges."""
    params = {f"p{i}": float(rng.uniform(0, math.pi)) for i in range(int(rng.integers(0, 3)))}
    if rng.random() < 0.5:
        params["xi"] = float(rng.uniform(0, math.pi))
    nodes: dict[str, Element] = {"L": Element.of("laser", amplitude=float(rng.uniform(0.5, 2)))}
    links: list[Link] = []
    open_ports: list[tuple[str, str]] = [("L", "out")]
    for i in range(steps):
        name = f"n{i}"
        roll = rng.random()
        if roll < 0.15 and len(open_ports) >= 2:
            a = open_ports.pop(int(rng.integers(len(open_ports))))
            b = open_ports.pop(int(rng.integers(len(open_ports))))
            nodes[name] = Element.of("bs")
            links += [Link(*a, name, "in0"), Link(*b, name, "in1")]
            open_ports += [(name, "out0"), (name, "out1")]
        elif roll < 0.3:
            a = open_ports.pop(int(rng.integers(len(open_ports))))
            nodes[name] = Element.of("pbs")
            links.append(Link(*a, name, "in0"))
            open_ports += [(name, "h_out"), (name, "v_out")]
        else:
            kind = str(rng.choice(_SINGLE))
            a = open_ports.pop(int(rng.integers(len(open_ports))))
            nodes[name] = Element.of(kind, **_random_args(kind, rng, params))
            links.append(Link(*a, name, "in"))
            open_ports.append((name, "out"))
    detectors = {f"d{k}": port for k, port in enumerate(open_ports)}
    return BenchGraph(f"random{int(rng.integers(1_000_000))}", nodes, links, detectors, params)
