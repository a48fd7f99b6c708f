"""Denotational semantics of quantum while-programs as superoperator matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .linalg import KrausSet, SuperOpMatrix, embed, superop_matrix, vec, unvec
from .program import (Case, Init, Layout, MeasurementDecl, Program, QuantumVariable, Seq, Skip,
                      Unitary, While)

STATE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Partial density operator: positive, trace at most one."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got {m.shape}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > STATE_TOL:
            raise ValueError("density matrix is not Hermitian")
        m = (m + m.conj().T) / 2
        if m.size and np.linalg.eigvalsh(m)[0] < -STATE_TOL:
            raise ValueError("density matrix is not positive semidefinite")
        if np.trace(m).real > 1 + STATE_TOL:
            raise ValueError(f"density matrix has trace {np.trace(m).real:.12g} > 1")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        return cls(np.outer(psi, psi.conj()))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian operator; runtime observables are additionally positive."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"observable must be square, got {m.shape}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > STATE_TOL * max(1.0, np.max(np.abs(m))):
            raise ValueError("observable is not Hermitian")
        object.__setattr__(self, "matrix", (m + m.conj().T) / 2)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def expectation(self, rho: DensityMatrix | np.ndarray) -> float:
        r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
        return float(np.trace(self.matrix @ r).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_psd(self, tol: float = STATE_TOL) -> bool:
        return bool(self.eigenvalues()[0] >= -tol * max(1.0, np.max(np.abs(self.matrix))))


def apply(superop: SuperOpMatrix, rho: DensityMatrix) -> DensityMatrix:
    if rho.dim != superop.dim:
        raise ValueError(f"state of dim {rho.dim} for a superoperator on dim {superop.dim}")
    return DensityMatrix(unvec(superop.matrix @ vec(rho.matrix), rho.dim))


def dual_apply(superop: SuperOpMatrix, obs: Observable) -> Observable:
    if obs.dim != superop.dim:
        raise ValueError(f"observable of dim {obs.dim} for a superoperator on dim {superop.dim}")
    return Observable(unvec(superop.matrix.conj().T @ vec(obs.matrix), obs.dim))


@dataclass(frozen=True, eq=False)
class GuardOps:
    """Single-Kraus superoperators ``ρ ↦ M_m ρ M_m†`` for each measurement outcome."""

    kraus: dict[int, KrausSet]
    matrices: dict[int, SuperOpMatrix]

    def __getitem__(self, label: int) -> SuperOpMatrix:
        return self.matrices[label]

    def operator(self, label: int) -> np.ndarray:
        return self.kraus[label].operators[0]

    @property
    def E0(self) -> SuperOpMatrix:
        return self.matrices[0]

    @property
    def E1(self) -> SuperOpMatrix:
        return self.matrices[1]


def guard_ops(meas: MeasurementDecl, targets, layout: Layout) -> GuardOps:
    kraus, mats = {}, {}
    d = layout.total_dim
    for label, m in meas.outcomes:
        op = embed(m, targets, layout)
        kraus[label] = KrausSet(d, (op,))
        mats[label] = superop_matrix(kraus[label])
    return GuardOps(kraus, mats)


def init_kraus(var: QuantumVariable, layout: Layout, basis: np.ndarray | None = None) -> KrausSet:
    """Kraus set ``{|0⟩_q⟨e_n| ⊗ I}`` of ``q := |0⟩``.

    ``basis`` columns are the ``e_n``; they default to ``{|n⟩}``.
    """
    if basis is None:
        basis = np.eye(var.dim, dtype=complex)
    ops = []
    for n in range(var.dim):
        local = np.zeros((var.dim, var.dim), dtype=complex)
        local[0, :] = basis[:, n].conj()
        ops.append(embed(local, [var], layout))
    return KrausSet(layout.total_dim, tuple(ops))


class Semantics:
    """Per-analysis evaluator of ``[[S]]``; caches subtree results by node identity.

    The cache lives as long as the instance, so share one instance per analysis
    and never across threads that analyse different layouts.
    """

    def __init__(self, layout: Layout, eps_spec: float = linalg.EPS_SPEC):
        self.layout = layout
        self.eps_spec = eps_spec
        self.dim = layout.total_dim
        self._denote: dict[int, SuperOpMatrix] = {}
        self._guards: dict[int, GuardOps] = {}
        self._splits: dict[int, linalg.SpectralSplit] = {}
        self._keep: list[Program] = []

    def guards(self, node: Case | While) -> GuardOps:
        key = id(node)
        if key not in self._guards:
            self._keep.append(node)
            self._guards[key] = guard_ops(node.meas, node.targets, self.layout)
        return self._guards[key]

    def loop_split(self, node: While) -> linalg.SpectralSplit:
        """Spectral split of the Schrödinger-picture transfer matrix ``M_[[body]] M_E1``."""
        key = id(node)
        if key not in self._splits:
            self._keep.append(node)
            r = self.denote(node.body).matrix @ self.guards(node).E1.matrix
            self._splits[key] = linalg.spectral_split(r, self.eps_spec)
        return self._splits[key]

    def denote(self, node: Program) -> SuperOpMatrix:
        key = id(node)
        hit = self._denote.get(key)
        if hit is None:
            hit = self._denote_uncached(node)
            self._keep.append(node)
            self._denote[key] = hit
        return hit

    def _denote_uncached(self, node: Program) -> SuperOpMatrix:
        d = self.dim
        if isinstance(node, Skip):
            return SuperOpMatrix.identity(d)
        if isinstance(node, Init):
            return superop_matrix(init_kraus(node.var, self.layout))
        if isinstance(node, Unitary):
            u = embed(node.gate.matrix, node.targets, self.layout)
            return SuperOpMatrix(d, np.kron(u, u.conj()))
        if isinstance(node, Seq):
            return self.denote(node.second) @ self.denote(node.first)
        if isinstance(node, Case):
            g = self.guards(node)
            total = np.zeros((d * d, d * d), dtype=complex)
            for label, branch in node.branches:
                total += self.denote(branch).matrix @ g[label].matrix
            return SuperOpMatrix(d, total)
        if isinstance(node, While):
            split = self.loop_split(node)
            e0 = self.guards(node).E0.matrix
            # M_E0 (I - N')^{-1}, solved from the transposed system
            closure = linalg.neumann_solve(split.N.T, e0.T, self.eps_spec).T
            return SuperOpMatrix(d, closure)
        raise TypeError(f"not a program node: {node!r}")


def denote(program: Program, layout: Layout, eps_spec: float = linalg.EPS_SPEC) -> SuperOpMatrix:
    """Matrix representation of ``[[program]]`` on the layout's global space."""
    return Semantics(layout, eps_spec).denote(program)


def maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim, dtype=complex) / dim)


def basis_state(index: int, dim: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho).real)


def random_pure(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)
