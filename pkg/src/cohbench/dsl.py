"""Optical bench description (``.obd``) language.

A line-oriented netlist::

    bench fig1
    param xi = 0.39269908169872414      # radians
    node H1 : hwp(angle_deg=22.5)
    node P : polarizer(angle_param=xi)
    link H1.out -> P.in
    detector s1 on P.out

Keyword arguments take a number or the name of a declared ``param``.
Reserved params (``delta_f``, ``t_e``, ``e0``, ``psi``, ``zeta``, ``tau``,
``xi``, ``theta``) are in SI units with angles in radians.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .graph import PORTS, BenchGraph, Diagnostic, Element, Link, validate

KEYWORDS = frozenset({"bench", "param", "node", "link", "detector", "on"})

KINDS = frozenset(PORTS)

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


@dataclass(frozen=True)
class BenchSource:
    text: str
    name: str = "<bench>"


@dataclass(frozen=True)
class Token:
    kind: str  # KEYWORD, IDENT, NUMBER, PUNCT, NEWLINE
    text: str
    line: int
    column: int
    value: float | None = None

    def __repr__(self):
        return f"{self.kind}({self.text!r}@{self.line}:{self.column})"


class DslError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


def _err(line, col, msg):
    return Diagnostic(line, col, "error", msg)


def tokenize(src: BenchSource | str) -> tuple[list[Token], list[Diagnostic]]:
    """Split source into tokens; each non-empty line ends with a NEWLINE token."""
    text = src.text if isinstance(src, BenchSource) else src
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].rstrip("\r")
        pos = 0
        emitted = False
        while pos < len(line):
            ch = line[pos]
            col = pos + 1
            if ch.isspace():
                pos += 1
                continue
            if line.startswith("->", pos):
                tokens.append(Token("PUNCT", "->", lineno, col))
                pos += 2
                emitted = True
                continue
            m = _NUMBER.match(line, pos)
            # "A.out" must not lex ".out"-style numbers; numbers never follow an ident directly
            if m and not (ch == "." and tokens and tokens[-1].line == lineno
                          and tokens[-1].kind == "IDENT" and tokens[-1].column + len(tokens[-1].text) == col):
                tokens.append(Token("NUMBER", m.group(), lineno, col, float(m.group())))
                pos = m.end()
                emitted = True
                continue
            m = _IDENT.match(line, pos)
            if m:
                word = m.group()
                kind = "KEYWORD" if word in KEYWORDS else "IDENT"
                tokens.append(Token(kind, word, lineno, col))
                pos = m.end()
                emitted = True
                continue
            if ch in ":()=,.":
                tokens.append(Token("PUNCT", ch, lineno, col))
                pos += 1
                emitted = True
                continue
            diags.append(_err(lineno, col, f"illegal character {ch!r}"))
            pos += 1
        if emitted:
            tokens.append(Token("NEWLINE", "\n", lineno, len(line) + 1))
    return tokens, diags


class _Stmt:
    """Cursor over the tokens of one statement (one source line)."""

    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.i = 0

    def peek(self) -> Token:
        return self.toks[self.i]

    def take(self, kind: str, text: str | None = None, what: str | None = None) -> Token:
        tok = self.toks[self.i]
        if tok.kind != kind or (text is not None and tok.text != text):
            expected = what or (repr(text) if text else kind.lower())
            found = "end of line" if tok.kind == "NEWLINE" else repr(tok.text)
            raise _Syntax(tok, f"expected {expected}, found {found}")
        self.i += 1
        return tok

    def done(self) -> None:
        tok = self.toks[self.i]
        if tok.kind != "NEWLINE":
            raise _Syntax(tok, f"unexpected {tok.text!r}")


class _Syntax(Exception):
    def __init__(self, tok: Token, msg: str):
        self.tok = tok
        self.msg = msg


def _statements(tokens: list[Token]) -> list[list[Token]]:
    out, cur = [], []
    for tok in tokens:
        cur.append(tok)
        if tok.kind == "NEWLINE":
            out.append(cur)
            cur = []
    if cur:
        last = cur[-1]
        cur.append(Token("NEWLINE", "\n", last.line, last.column + len(last.text)))
        out.append(cur)
    return out


def parse(tokens: list[Token]) -> tuple[BenchGraph, list[Diagnostic]]:
    """Build an (unvalidated) BenchGraph; errors become diagnostics."""
    diags: list[Diagnostic] = []
    name = "bench"
    nodes: dict[str, Element] = {}
    links: list[Link] = []
    detectors: dict[str, tuple[str, str]] = {}
    params: dict[str, float] = {}
    positions: dict[tuple, tuple[int, int]] = {}
    seen_header = False

    for toks in _statements(tokens):
        st = _Stmt(toks)
        head = st.peek()
        try:
            if not seen_header:
                st.take("KEYWORD", "bench", "'bench' header")
                name = st.take("IDENT", what="bench name").text
                st.done()
                seen_header = True
                continue
            if head.kind != "KEYWORD" or head.text not in ("param", "node", "link", "detector"):
                raise _Syntax(head, f"expected a statement (param, node, link, detector), found {head.text!r}")
            st.take("KEYWORD")
            pos = (head.line, head.column)
            if head.text == "param":
                ident = st.take("IDENT", what="param name")
                st.take("PUNCT", "=")
                num = st.take("NUMBER", what="number")
                st.done()
                if ident.text in params:
                    raise _Syntax(ident, f"duplicate param {ident.text}")
                params[ident.text] = num.value
                positions[("param", ident.text)] = pos
            elif head.text == "node":
                ident = st.take("IDENT", what="node name")
                st.take("PUNCT", ":")
                kind = st.take("IDENT", what="element kind")
                st.take("PUNCT", "(")
                args: dict[str, float | str] = {}
                if st.peek().text != ")":
                    while True:
                        key = st.take("IDENT", what="argument name")
                        st.take("PUNCT", "=")
                        val = st.peek()
                        if val.kind == "NUMBER":
                            args_val: float | str = val.value
                        elif val.kind == "IDENT":
                            args_val = val.text
                        else:
                            raise _Syntax(val, f"expected number or param name, found {val.text!r}")
                        st.i += 1
                        if key.text in args:
                            raise _Syntax(key, f"duplicate argument {key.text}")
                        args[key.text] = args_val
                        if st.peek().text == ",":
                            st.i += 1
                            continue
                        break
                st.take("PUNCT", ")")
                st.done()
                if kind.text not in KINDS:
                    raise _Syntax(kind, f"unknown element kind {kind.text!r}")
                if ident.text in nodes:
                    raise _Syntax(ident, f"duplicate node name {ident.text}")
                nodes[ident.text] = Element.of(kind.text, **args)
                positions[("node", ident.text)] = pos
            elif head.text == "link":
                a = st.take("IDENT", what="node name").text
                st.take("PUNCT", ".")
                ap = st.take("IDENT", what="port name").text
                st.take("PUNCT", "->")
                b = st.take("IDENT", what="node name").text
                st.take("PUNCT", ".")
                bp = st.take("IDENT", what="port name").text
                st.done()
                link = Link(a, ap, b, bp)
                if ("link", link) in positions:
                    raise _Syntax(head, f"duplicate link {link}")
                links.append(link)
                positions[("link", link)] = pos
            else:
                det = st.take("IDENT", what="detector name")
                st.take("KEYWORD", "on")
                n = st.take("IDENT", what="node name").text
                st.take("PUNCT", ".")
                p = st.take("IDENT", what="port name").text
                st.done()
                if det.text in detectors:
                    raise _Syntax(det, f"duplicate detector {det.text}")
                detectors[det.text] = (n, p)
                positions[("detector", det.text)] = pos
        except _Syntax as exc:
            diags.append(_err(exc.tok.line, exc.tok.column, exc.msg))

    if not seen_header:
        diags.append(_err(1, 1, "missing 'bench <name>' header"))
    graph = BenchGraph(name, nodes, links, detectors, params, positions)
    return graph, diags


def loads(text: str, name: str = "<bench>") -> tuple[BenchGraph, list[Diagnostic]]:
    """Tokenize, parse and validate; diagnostics from every stage."""
    tokens, diags = tokenize(BenchSource(text, name))
    graph, pdiags = parse(tokens)
    diags = diags + pdiags
    if not diags:
        diags = validate(graph)
    return graph, sorted(diags, key=lambda d: (d.line, d.column))


def load(text: str, name: str = "<bench>") -> BenchGraph:
    graph, diags = loads(text, name)
    if diags:
        raise DslError(diags)
    return graph


def _fmt(value: float | str) -> str:
    return value if isinstance(value, str) else repr(float(value))


def serialize(graph: BenchGraph) -> BenchSource:
    """Canonical text: params, nodes, links, detectors, each sorted."""
    lines = [f"bench {graph.name}"]
    lines += [f"param {k} = {_fmt(v)}" for k, v in sorted(graph.params.items())]
    for name, el in sorted(graph.nodes.items()):
        args = ", ".join(f"{k}={_fmt(v)}" for k, v in el.args)
        lines.append(f"node {name} : {el.kind}({args})")
    lines += [f"link {lk}" for lk in graph.links]
    lines += [f"detector {d} on {n}.{p}" for d, (n, p) in sorted(graph.detectors.items())]
    return BenchSource("\n".join(lines) + "\n", graph.name)
