"""Surface syntax (``.qw`` files) for quantum while-programs.

::

    # one-qubit geometric coin
    var q : 2;
    prog {
      while std[q] == 1 do q := H[q] od
    }

Declarations come first (``var``, ``gate``, ``meas``), then a single ``prog``
block. The gates ``H``, ``X``, ``I`` and the computational-basis measurement
``std`` are built in. Sequencing with ``;`` associates to the right.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .program import (BUILTIN_GATES, Case, Init, Layout, MeasurementDecl, Program,
                      QuantumVariable, Seq, Skip, Unitary, UnitaryDecl, ValidationReport, While,
                      check_gate, check_measurement, flatten_seq, std_measurement, validate, walk)

KEYWORDS = {"var", "gate", "meas", "prog", "skip", "if", "while", "do", "od"}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<ket>\|0>)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?i?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|==|->|[:;,(){}\[\]=+\-])
""", re.VERBOSE)


class ParseError(ValueError):
    """Syntax or well-formedness error at a 1-based source position."""

    def __init__(self, line: int, column: int, message: str, hint: str | None = None):
        self.line, self.column, self.message, self.hint = line, column, message, hint
        text = f"{line}:{column}: {message}"
        if hint:
            text += f" (expected {hint})"
        super().__init__(text)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


class Parsed(NamedTuple):
    program: Program
    layout: Layout


def _position(source: str, offset: int) -> tuple[int, int]:
    line = source.count("\n", 0, offset) + 1
    start = source.rfind("\n", 0, offset) + 1
    return line, offset - start + 1


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            line, col = _position(source, pos)
            raise ParseError(line, col, f"unexpected character {source[pos]!r}")
        kind = m.lastgroup
        if kind != "ws":
            line, col = _position(source, pos)
            text = m.group()
            if kind == "id" and text in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, text, line, col))
        pos = m.end()
    # EOF sits on the last character so error positions stay inside the input
    line, col = _position(source, max(len(source) - 1, 0))
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0
        self.vars: dict[str, QuantumVariable] = {}
        self.gates: dict[str, UnitaryDecl] = dict(BUILTIN_GATES)
        self.meas: dict[str, MeasurementDecl] = {}
        self.layout = Layout()

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message: str, hint: str | None = None, tok: Token | None = None):
        tok = tok or self.tok
        return ParseError(tok.line, tok.column, message, hint)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "kw")

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"unexpected {found!r}", repr(text))
        tok = self.tok
        self.i += 1
        return tok

    def ident(self) -> Token:
        if self.tok.kind != "id":
            found = self.tok.text or "end of input"
            raise self.error(f"unexpected {found!r}", "identifier")
        tok = self.tok
        self.i += 1
        return tok

    def integer(self) -> int:
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit():
            raise self.error(f"unexpected {tok.text or 'end of input'!r}", "integer")
        self.i += 1
        return int(tok.text)

    # -- literals
    def complex_literal(self) -> complex:
        sign = 1.0
        if self.at("-") or self.at("+"):
            sign = -1.0 if self.tok.text == "-" else 1.0
            self.i += 1
        tok = self.tok
        if tok.kind != "num":
            raise self.error(f"unexpected {tok.text or 'end of input'!r}", "number")
        self.i += 1
        if tok.text.endswith("i"):
            return complex(0.0, sign * float(tok.text[:-1]))
        re_part = sign * float(tok.text)
        if (self.at("+") or self.at("-")) and self.peek().kind == "num" \
                and self.peek().text.endswith("i"):
            isign = -1.0 if self.tok.text == "-" else 1.0
            self.i += 1
            im_part = isign * float(self.tok.text[:-1])
            self.i += 1
            return complex(re_part, im_part)
        return complex(re_part, 0.0)

    def matrix(self) -> np.ndarray:
        start = self.tok
        self.expect("[")
        rows = [self.row()]
        while self.at(","):
            self.i += 1
            rows.append(self.row())
        self.expect("]")
        if len({len(r) for r in rows}) != 1:
            raise self.error("matrix rows have different lengths", tok=start)
        return np.array(rows, dtype=complex)

    def row(self) -> list[complex]:
        self.expect("[")
        vals = [self.complex_literal()]
        while self.at(","):
            self.i += 1
            vals.append(self.complex_literal())
        self.expect("]")
        return vals

    def dims(self) -> tuple[int, ...]:
        self.expect("(")
        out = [self.integer()]
        while self.at(","):
            self.i += 1
            out.append(self.integer())
        self.expect(")")
        return tuple(out)

    # -- declarations
    def declared(self, tok: Token):
        name = tok.text
        if name in self.vars or name in self.gates or name in self.meas or name == "std":
            raise self.error(f"{name!r} is already declared", tok=tok)

    def decl_var(self):
        self.expect("var")
        tok = self.ident()
        self.declared(tok)
        self.expect(":")
        dtok = self.tok
        dim = self.integer()
        if dim < 1:
            raise self.error("variable dimension must be positive", tok=dtok)
        self.expect(";")
        self.vars[tok.text] = QuantumVariable(tok.text, dim)

    def decl_gate(self):
        self.expect("gate")
        tok = self.ident()
        self.declared(tok)
        arity = self.dims()
        self.expect("=")
        mat = self.matrix()
        self.expect(";")
        gate = UnitaryDecl(tok.text, mat, arity)
        report = ValidationReport()
        check_gate(gate, report)
        if not report.ok:
            raise self.error(str(report), tok=tok)
        self.gates[tok.text] = gate

    def decl_meas(self):
        self.expect("meas")
        tok = self.ident()
        self.declared(tok)
        arity = self.dims()
        self.expect("{")
        outcomes = []
        while not self.at("}"):
            label = self.integer()
            self.expect(":")
            outcomes.append((label, self.matrix()))
            self.expect(";")
        self.expect("}")
        if self.at(";"):
            self.i += 1
        meas = MeasurementDecl(tok.text, tuple(outcomes), arity)
        report = ValidationReport()
        check_measurement(meas, report)
        if not report.ok:
            raise self.error(str(report), tok=tok)
        self.meas[tok.text] = meas

    # -- statements
    def variable(self, tok: Token) -> QuantumVariable:
        if tok.text not in self.vars:
            raise self.error(f"undeclared variable {tok.text!r}", tok=tok)
        return self.vars[tok.text]

    def var_list(self) -> tuple[list[Token], tuple[QuantumVariable, ...]]:
        toks = [self.ident()]
        while self.at(",") and self.peek().kind == "id":
            self.i += 1
            toks.append(self.ident())
        return toks, tuple(self.variable(t) for t in toks)

    def measurement(self, tok: Token, targets) -> MeasurementDecl:
        if tok.text == "std":
            return std_measurement(tuple(t.dim for t in targets))
        if tok.text not in self.meas:
            raise self.error(f"undeclared measurement {tok.text!r}", tok=tok)
        return self.meas[tok.text]

    def check(self, node: Program, tok: Token) -> Program:
        report = validate(node, self.layout)
        if not report.ok:
            raise self.error(str(report), tok=tok)
        return node

    def stmt(self) -> Program:
        first = self.simple()
        if self.at(";"):
            self.i += 1
            return Seq(first, self.stmt())
        return first

    def simple(self) -> Program:
        tok = self.tok
        if self.at("skip"):
            self.i += 1
            return Skip()
        if self.at("if"):
            return self.case()
        if self.at("while"):
            return self.loop()
        if tok.kind == "id":
            return self.assignment()
        raise self.error(f"unexpected {tok.text or 'end of input'!r}", "statement")

    def assignment(self) -> Program:
        start = self.tok
        lhs_toks, lhs = self.var_list()
        self.expect(":=")
        if self.tok.kind == "ket":
            if len(lhs) != 1:
                raise self.error("initialisation applies to a single variable", tok=start)
            self.i += 1
            return self.check(Init(lhs[0]), start)
        gtok = self.ident()
        if gtok.text not in self.gates:
            raise self.error(f"undeclared gate {gtok.text!r}", tok=gtok)
        self.expect("[")
        ttoks, targets = self.var_list()
        self.expect("]")
        if [t.text for t in lhs_toks] != [t.text for t in ttoks]:
            raise self.error("left-hand side must repeat the gate's targets", tok=start)
        return self.check(Unitary(self.gates[gtok.text], targets), gtok)

    def guard(self) -> tuple[Token, MeasurementDecl, tuple[QuantumVariable, ...]]:
        mtok = self.ident()
        self.expect("[")
        _, targets = self.var_list()
        self.expect("]")
        return mtok, self.measurement(mtok, targets), targets

    def case(self) -> Program:
        self.expect("if")
        mtok, meas, targets = self.guard()
        self.expect("{")
        branches = []
        seen = set()
        while True:
            ltok = self.tok
            label = self.integer()
            if label in seen:
                raise self.error(f"duplicate branch for outcome {label}", tok=ltok)
            seen.add(label)
            self.expect("->")
            branches.append((label, self.stmt()))
            if self.at(",") and self.peek().kind == "num":
                self.i += 1
                continue
            break
        self.expect("}")
        shell = Case(meas, targets, tuple((m, Skip()) for m, _ in branches))
        self.check(shell, mtok)
        return Case(meas, targets, tuple(branches))

    def loop(self) -> Program:
        self.expect("while")
        mtok, meas, targets = self.guard()
        self.expect("==")
        one = self.tok
        if self.integer() != 1:
            raise self.error("loop guards test for outcome 1", "'1'", tok=one)
        self.expect("do")
        body = self.stmt()
        self.expect("od")
        self.check(While(meas, targets, Skip()), mtok)
        return While(meas, targets, body)

    def source_file(self) -> Parsed:
        while True:
            if self.at("var"):
                self.decl_var()
            elif self.at("gate"):
                self.decl_gate()
            elif self.at("meas"):
                self.decl_meas()
            else:
                break
        self.layout = Layout(tuple(self.vars.values()))
        self.expect("prog")
        self.expect("{")
        prog = self.stmt()
        self.expect("}")
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r} after program", "end of input")
        return Parsed(prog, self.layout)


def parse(source: str) -> Parsed:
    """Parse and validate a ``.qw`` source; raises :class:`ParseError`."""
    return _Parser(source).source_file()


# --- printing --------------------------------------------------------------------

def format_real(x: float) -> str:
    return repr(float(x))


def format_complex(z: complex) -> str:
    z = complex(z)
    if z.imag == 0 and math.copysign(1, z.imag) > 0:
        return format_real(z.real)
    mag = format_real(abs(z.imag))
    sign = "-" if math.copysign(1, z.imag) < 0 else "+"
    return f"{format_real(z.real)}{sign}{mag}i"


def format_matrix(m: np.ndarray) -> str:
    rows = ("[" + ", ".join(format_complex(z) for z in row) + "]" for row in np.asarray(m))
    return "[" + ", ".join(rows) + "]"


def _names(targets) -> str:
    return ", ".join(t.name for t in targets)


class _Printer:
    def __init__(self):
        self.lines: list[str] = []

    def emit(self, depth: int, text: str):
        self.lines.append("  " * depth + text)

    def stmt(self, node: Program, depth: int):
        parts = flatten_seq(node)
        for k, part in enumerate(parts):
            self.simple(part, depth, ";" if k < len(parts) - 1 else "")

    def simple(self, node: Program, depth: int, tail: str):
        if isinstance(node, Skip):
            self.emit(depth, "skip" + tail)
        elif isinstance(node, Init):
            self.emit(depth, f"{node.var.name} := |0>" + tail)
        elif isinstance(node, Unitary):
            ts = _names(node.targets)
            self.emit(depth, f"{ts} := {node.gate.name}[{ts}]" + tail)
        elif isinstance(node, Case):
            self.emit(depth, f"if {node.meas.name}[{_names(node.targets)}] {{")
            for k, (label, branch) in enumerate(node.branches):
                self.emit(depth + 1, f"{label} ->")
                self.stmt(branch, depth + 2)
                if k < len(node.branches) - 1:
                    self.lines[-1] += ","
            self.emit(depth, "}" + tail)
        elif isinstance(node, While):
            self.emit(depth, f"while {node.meas.name}[{_names(node.targets)}] == 1 do")
            self.stmt(node.body, depth + 1)
            self.emit(depth, "od" + tail)
        else:
            raise TypeError(f"not a program node: {node!r}")


def _declarations(program: Program) -> tuple[list[UnitaryDecl], list[MeasurementDecl]]:
    gates: dict[str, UnitaryDecl] = {}
    meas: dict[str, MeasurementDecl] = {}
    for node in walk(program):
        if isinstance(node, Unitary):
            g = node.gate
            if g.name in BUILTIN_GATES:
                if g != BUILTIN_GATES[g.name]:
                    raise ValueError(f"gate {g.name!r} shadows a built-in")
                continue
            if gates.setdefault(g.name, g) != g:
                raise ValueError(f"two different gates are named {g.name!r}")
        elif isinstance(node, (Case, While)):
            m = node.meas
            if m.name == "std":
                if m != std_measurement(m.arity):
                    raise ValueError("measurement 'std' shadows the built-in")
                continue
            if meas.setdefault(m.name, m) != m:
                raise ValueError(f"two different measurements are named {m.name!r}")
    return list(gates.values()), list(meas.values())


def pretty_print(program: Program, layout: Layout) -> str:
    """Canonical source text; ``parse`` of the result rebuilds ``program`` exactly."""
    gates, meas = _declarations(program)
    out = [f"var {v.name} : {v.dim};" for v in layout.variables]
    for g in gates:
        out.append(f"gate {g.name}({', '.join(map(str, g.arity))}) = {format_matrix(g.matrix)};")
    for m in meas:
        body = " ".join(f"{label} : {format_matrix(mat)};" for label, mat in m.outcomes)
        out.append(f"meas {m.name}({', '.join(map(str, m.arity))}) {{ {body} }}")
    printer = _Printer()
    printer.stmt(program, 1)
    out.append("prog {")
    out.extend(printer.lines)
    out.append("}")
    return "\n".join(out) + "\n"


def print_statement(program: Program) -> str:
    """Statement text only, without declarations."""
    printer = _Printer()
    printer.stmt(program, 0)
    return "\n".join(printer.lines)


def parse_complex(text: str) -> complex:
    """A single complex literal such as ``0.6``, ``-1e-3i`` or ``0.5-0.5i``."""
    p = _Parser(text)
    z = p.complex_literal()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r} after number", "end of input")
    return z
