"""Abstract syntax and well-formedness checks for quantum while-programs.

A program is a tree of immutable nodes::

    S ::= skip | q := |0> | qs := U[qs] | S1; S2
        | if M[qs] { m -> S_m ... } | while M[qs] == 1 do S od

Variables carry their Hilbert-space dimension, so the state space of any
subtree can be recovered from the tree alone. Analyses run over an explicit
:class:`Layout`, which fixes the tensor ordering of the global space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

TOL_UNITARY = 1e-10
TOL_COMPLETE = 1e-10


@dataclass(frozen=True)
class QuantumVariable:
    name: str
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"variable {self.name!r} needs a positive dimension, got {self.dim}")


def _frozen_matrix(m) -> np.ndarray:
    arr = np.array(m, dtype=complex)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class UnitaryDecl:
    """A named gate acting on registers with the given per-variable dims."""

    name: str
    matrix: np.ndarray
    arity: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen_matrix(self.matrix))
        object.__setattr__(self, "arity", tuple(int(d) for d in self.arity))

    def __eq__(self, other):
        if not isinstance(other, UnitaryDecl):
            return NotImplemented
        return (self.name == other.name and self.arity == other.arity
                and self.matrix.shape == other.matrix.shape
                and np.array_equal(self.matrix, other.matrix))

    def __hash__(self):
        return hash((self.name, self.arity))

    def unitarity_residual(self) -> float:
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            return math.inf
        return float(np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0])), initial=0.0))


@dataclass(frozen=True, eq=False)
class MeasurementDecl:
    """A named measurement; ``outcomes`` is an ordered tuple of ``(label, M_m)``."""

    name: str
    outcomes: tuple[tuple[int, np.ndarray], ...]
    arity: tuple[int, ...]

    def __post_init__(self):
        outs = tuple((int(label), _frozen_matrix(m)) for label, m in self.outcomes)
        object.__setattr__(self, "outcomes", outs)
        object.__setattr__(self, "arity", tuple(int(d) for d in self.arity))

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(label for label, _ in self.outcomes)

    def operator(self, label: int) -> np.ndarray:
        for lab, m in self.outcomes:
            if lab == label:
                return m
        raise KeyError(label)

    def __eq__(self, other):
        if not isinstance(other, MeasurementDecl):
            return NotImplemented
        if (self.name, self.arity, self.labels) != (other.name, other.arity, other.labels):
            return False
        return all(a.shape == b.shape and np.array_equal(a, b)
                   for (_, a), (_, b) in zip(self.outcomes, other.outcomes))

    def __hash__(self):
        return hash((self.name, self.arity, self.labels))

    def completeness_residual(self) -> float:
        dim = math.prod(self.arity)
        total = np.zeros((dim, dim), dtype=complex)
        for _, m in self.outcomes:
            if m.shape != (dim, dim):
                return math.inf
            total += m.conj().T @ m
        return float(np.max(np.abs(total - np.eye(dim)), initial=0.0))


# --- program nodes -----------------------------------------------------------

@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Init:
    var: QuantumVariable


@dataclass(frozen=True)
class Unitary:
    gate: UnitaryDecl
    targets: tuple[QuantumVariable, ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))


@dataclass(frozen=True)
class Seq:
    first: "Program"
    second: "Program"


@dataclass(frozen=True)
class Case:
    meas: MeasurementDecl
    targets: tuple[QuantumVariable, ...]
    branches: tuple[tuple[int, "Program"], ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "branches", tuple((int(m), s) for m, s in self.branches))

    def branch(self, label: int) -> "Program":
        for m, s in self.branches:
            if m == label:
                return s
        raise KeyError(label)


@dataclass(frozen=True)
class While:
    meas: MeasurementDecl
    targets: tuple[QuantumVariable, ...]
    body: "Program"

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))


Program = Union[Skip, Init, Unitary, Seq, Case, While]


def seq(*stmts: Program) -> Program:
    """Right-associated sequential composition; ``seq()`` is ``skip``."""
    if not stmts:
        return Skip()
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(s, out)
    return out


def flatten_seq(program: Program) -> list[Program]:
    if isinstance(program, Seq):
        return flatten_seq(program.first) + flatten_seq(program.second)
    return [program]


def walk(program: Program) -> Iterator[Program]:
    """Pre-order traversal of all nodes."""
    yield program
    if isinstance(program, Seq):
        yield from walk(program.first)
        yield from walk(program.second)
    elif isinstance(program, Case):
        for _, s in program.branches:
            yield from walk(s)
    elif isinstance(program, While):
        yield from walk(program.body)


def _node_vars(node: Program) -> tuple[QuantumVariable, ...]:
    if isinstance(node, Init):
        return (node.var,)
    if isinstance(node, (Unitary, Case, While)):
        return node.targets
    return ()


def variables(program: Program) -> tuple[QuantumVariable, ...]:
    """var(S), in order of first occurrence."""
    seen: dict[str, QuantumVariable] = {}
    for node in walk(program):
        for v in _node_vars(node):
            seen.setdefault(v.name, v)
    return tuple(seen.values())


def total_dimension(program: Program) -> int:
    return math.prod(v.dim for v in variables(program))


@dataclass(frozen=True)
class Layout:
    """Ordered tensor factors of the global state space."""

    variables: tuple[QuantumVariable, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in layout: {names}")

    @classmethod
    def of(cls, program: Program) -> "Layout":
        return cls(variables(program))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(v.dim for v in self.variables)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def index(self, var: QuantumVariable | str) -> int:
        name = var if isinstance(var, str) else var.name
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)

    def __contains__(self, var) -> bool:
        name = var if isinstance(var, str) else var.name
        return any(v.name == name for v in self.variables)

    def __getitem__(self, name: str) -> QuantumVariable:
        return self.variables[self.index(name)]


# --- validation ----------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        if msg not in self.violations:
            self.violations.append(msg)

    def __str__(self):
        return "valid" if self.ok else "; ".join(self.violations)


def _check_targets(report: ValidationReport, what: str, arity, targets, layout: Layout):
    names = [t.name for t in targets]
    if len(set(names)) != len(names):
        report.add(f"{what}: targets are not distinct: {', '.join(names)}")
    for t in targets:
        if t not in layout:
            report.add(f"undeclared variable {t.name!r}")
        elif layout[t.name].dim != t.dim:
            report.add(f"variable {t.name!r} used with dim {t.dim}, declared {layout[t.name].dim}")
    if len(arity) != len(targets):
        report.add(f"{what}: expects {len(arity)} target(s), got {len(targets)}")
    elif tuple(t.dim for t in targets) != tuple(arity):
        report.add(f"{what}: dimension mismatch, arity {tuple(arity)} vs targets "
                   f"{tuple(t.dim for t in targets)}")


def check_gate(gate: UnitaryDecl, report: ValidationReport) -> None:
    dim = math.prod(gate.arity)
    if gate.matrix.shape != (dim, dim):
        report.add(f"gate {gate.name}: matrix shape {gate.matrix.shape} does not match arity "
                   f"{gate.arity}")
    elif gate.unitarity_residual() > TOL_UNITARY:
        report.add(f"gate {gate.name}: non-unitary gate (residual {gate.unitarity_residual():.3g})")


def check_measurement(meas: MeasurementDecl, report: ValidationReport) -> None:
    dim = math.prod(meas.arity)
    if not meas.outcomes:
        report.add(f"measurement {meas.name}: no outcomes")
        return
    if len(set(meas.labels)) != len(meas.labels):
        report.add(f"measurement {meas.name}: duplicate outcome labels")
    for label, m in meas.outcomes:
        if m.shape != (dim, dim):
            report.add(f"measurement {meas.name}: outcome {label} has shape {m.shape}, "
                       f"expected {(dim, dim)}")
            return
    if meas.completeness_residual() > TOL_COMPLETE:
        report.add(f"measurement {meas.name}: incomplete measurement "
                   f"(residual {meas.completeness_residual():.3g})")


def validate(program: Program, layout: Layout) -> ValidationReport:
    """Collect every well-formedness violation; an empty report means valid."""
    report = ValidationReport()
    for node in walk(program):
        if isinstance(node, Init):
            _check_targets(report, "init", (node.var.dim,), (node.var,), layout)
        elif isinstance(node, Unitary):
            check_gate(node.gate, report)
            _check_targets(report, f"gate {node.gate.name}", node.gate.arity, node.targets, layout)
        elif isinstance(node, Case):
            check_measurement(node.meas, report)
            _check_targets(report, f"measurement {node.meas.name}", node.meas.arity,
                           node.targets, layout)
            labels = sorted(m for m, _ in node.branches)
            for missing in sorted(set(node.meas.labels) - set(labels)):
                report.add(f"if {node.meas.name}: missing branch for outcome {missing}")
            for extra in sorted(set(labels) - set(node.meas.labels)):
                report.add(f"if {node.meas.name}: branch {extra} is not an outcome")
            if len(set(labels)) != len(labels):
                report.add(f"if {node.meas.name}: duplicate branch labels")
        elif isinstance(node, While):
            check_measurement(node.meas, report)
            _check_targets(report, f"measurement {node.meas.name}", node.meas.arity,
                           node.targets, layout)
            if sorted(node.meas.labels) != [0, 1]:
                report.add(f"while {node.meas.name}: guard measurement must have outcomes "
                           f"exactly {{0, 1}}, got {sorted(node.meas.labels)}")
    return report


# --- built-ins -----------------------------------------------------------------

_S = 1 / math.sqrt(2)
H = UnitaryDecl("H", [[_S, _S], [_S, -_S]], (2,))
X = UnitaryDecl("X", [[0, 1], [1, 0]], (2,))
I = UnitaryDecl("I", [[1, 0], [0, 1]], (2,))
BUILTIN_GATES = {g.name: g for g in (H, X, I)}


def std_measurement(arity: tuple[int, ...] | int = (2,)) -> MeasurementDecl:
    """Computational-basis measurement ``std`` over registers of the given dims."""
    if isinstance(arity, int):
        arity = (arity,)
    dim = math.prod(arity)
    outcomes = []
    for m in range(dim):
        proj = np.zeros((dim, dim))
        proj[m, m] = 1.0
        outcomes.append((m, proj))
    return MeasurementDecl("std", tuple(outcomes), tuple(arity))
