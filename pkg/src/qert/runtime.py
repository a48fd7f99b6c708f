"""Runtime observables, termination projectors and expected runtimes.

Cost model: each initialisation, unitary and guard measurement costs one
step, ``skip`` costs nothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .linalg import vec, unvec
from .program import Case, Init, Layout, Program, Seq, Skip, Unitary, While
from .semantics import DensityMatrix, Observable, Semantics, dual_apply

EPS_TERM = 1e-6
TOL_AST = 1e-7

VERDICT_AST = "a.s.-terminating"
VERDICT_DIVERGENT_INPUT = "divergent-on-input"
VERDICT_DIVERGENT_SOMEWHERE = "divergent-somewhere"


@dataclass(frozen=True, eq=False)
class TerminationInfo:
    """``B = [[S]]*(I)`` together with the projector onto its eigenvalue-1 eigenspace."""

    B: Observable
    projector: np.ndarray
    as_dim: int


class RuntimeAnalyzer:
    """Structural computation of ``ert[S]`` over a fixed layout.

    One instance corresponds to one analysis context; denotations and loop
    spectral splits are cached per node.
    """

    def __init__(self, layout: Layout, eps_spec: float = linalg.EPS_SPEC,
                 eps_term: float = EPS_TERM, tol_ast: float = TOL_AST):
        self.layout = layout
        self.dim = layout.total_dim
        self.eps_term = eps_term
        self.tol_ast = tol_ast
        self.semantics = Semantics(layout, eps_spec)
        self._ert: dict[int, Observable] = {}
        self._term: dict[int, TerminationInfo] = {}
        self._keep: list[Program] = []

    def termination_operator(self, node: Program) -> Observable:
        eye = Observable(np.eye(self.dim, dtype=complex))
        return dual_apply(self.semantics.denote(node), eye)

    def termination_projector(self, node: Program) -> TerminationInfo:
        key = id(node)
        if key not in self._term:
            b = self.termination_operator(node)
            vals, vecs = np.linalg.eigh(b.matrix)
            keep = vecs[:, vals >= 1 - self.eps_term]
            proj = keep @ keep.conj().T
            self._keep.append(node)
            self._term[key] = TerminationInfo(b, proj, keep.shape[1])
        return self._term[key]

    def loop_series(self, node: While, x: np.ndarray) -> np.ndarray:
        """``Σ_k P (E1*∘[[body]]*)^k(x) P`` via ``M_P (I - N)^{-1} vec(x)``."""
        split = self.semantics.loop_split(node)
        # dual transfer R = M_E1* M_[[body]]* is the adjoint of the Schrödinger one,
        # so its contractive part is N'†
        n_dual = split.N.conj().T
        y = unvec(linalg.neumann_solve(n_dual, vec(x), self.semantics.eps_spec), self.dim)
        p = self.termination_projector(node).projector
        return p @ y @ p

    def ert(self, node: Program) -> Observable:
        key = id(node)
        hit = self._ert.get(key)
        if hit is None:
            hit = self._ert_uncached(node)
            self._keep.append(node)
            self._ert[key] = hit
        return hit

    def _ert_uncached(self, node: Program) -> Observable:
        d = self.dim
        eye = np.eye(d, dtype=complex)
        if isinstance(node, Skip):
            return Observable(np.zeros((d, d), dtype=complex))
        if isinstance(node, (Init, Unitary)):
            return Observable(eye)
        if isinstance(node, Seq):
            tail = dual_apply(self.semantics.denote(node.first), self.ert(node.second))
            return Observable(self.ert(node.first).matrix + tail.matrix)
        if isinstance(node, Case):
            guards = self.semantics.guards(node)
            total = eye.copy()
            for label, branch in node.branches:
                total += dual_apply(guards[label], self.ert(branch)).matrix
            return Observable(total)
        if isinstance(node, While):
            guards = self.semantics.guards(node)
            seed = eye + dual_apply(guards.E1, self.ert(node.body)).matrix
            return Observable(self.loop_series(node, seed))
        raise TypeError(f"not a program node: {node!r}")

    def expected_runtime(self, node: Program, rho: DensityMatrix) -> float:
        """``tr(ert[S] ρ)`` on almost-surely terminating inputs, ``math.inf`` otherwise."""
        if rho.dim != self.dim:
            raise ValueError(f"state of dim {rho.dim} for a program on dim {self.dim}")
        if not self.terminates_on(node, rho):
            return math.inf
        return max(0.0, self.ert(node).expectation(rho))

    def terminates_on(self, node: Program, rho: DensityMatrix) -> bool:
        b = self.termination_operator(node)
        return b.expectation(rho) >= rho.trace - self.tol_ast


def termination_operator(program: Program, layout: Layout, **kw) -> Observable:
    return RuntimeAnalyzer(layout, **kw).termination_operator(program)


def termination_projector(program: Program, layout: Layout, **kw) -> TerminationInfo:
    return RuntimeAnalyzer(layout, **kw).termination_projector(program)


def ert_observable(program: Program, layout: Layout, **kw) -> Observable:
    return RuntimeAnalyzer(layout, **kw).ert(program)


def expected_runtime(program: Program, layout: Layout, rho: DensityMatrix, **kw) -> float:
    return RuntimeAnalyzer(layout, **kw).expected_runtime(program, rho)


def runtime_bound(program: Program, layout: Layout, **kw) -> float:
    """Operator norm of ``ert[S]``: a uniform bound over all terminating inputs."""
    vals = ert_observable(program, layout, **kw).eigenvalues()
    return max(0.0, float(vals[-1])) if vals.size else 0.0


@dataclass
class AnalysisReport:
    ert_matrix: np.ndarray
    ert_norm: float
    termination_dim: int
    verdict: str
    value: float

    def to_json(self) -> dict:
        return {
            "ert_matrix": linalg.matrix_to_json(self.ert_matrix),
            "ert_norm": self.ert_norm,
            "termination_dim": self.termination_dim,
            "verdict": self.verdict,
            "value": self.value if math.isfinite(self.value) else "infinity",
        }


def analyze(program: Program, layout: Layout, rho: DensityMatrix, **kw) -> AnalysisReport:
    az = RuntimeAnalyzer(layout, **kw)
    ert = az.ert(program)
    info = az.termination_projector(program)
    value = az.expected_runtime(program, rho)
    if not math.isfinite(value):
        verdict = VERDICT_DIVERGENT_INPUT
    elif info.as_dim == layout.total_dim:
        verdict = VERDICT_AST
    else:
        verdict = VERDICT_DIVERGENT_SOMEWHERE
    norm = float(max(0.0, ert.eigenvalues()[-1])) if ert.dim else 0.0
    return AnalysisReport(ert.matrix, norm, info.as_dim, verdict, value)
