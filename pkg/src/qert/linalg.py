"""Dense complex linear algebra for superoperators.

Operators are vectorised row-major, ``vec(A) = (A ⊗ I)|Ψ⟩`` with
``|Ψ⟩ = Σ_j |jj⟩``; this ordering is normative for everything built on top
(matrix representations, duals, the loop transfer matrices). Do not switch
to column-major stacking.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .program import Layout, QuantumVariable

EPS_SPEC = 1e-8
TOL_KRAUS = 1e-10
NEUMANN_RESIDUAL = 1e-9
HERMITIAN_TOL = 1e-9


class SpectralError(ArithmeticError):
    """A transfer matrix has an eigenvalue outside the closed unit disc."""


class NeumannError(ArithmeticError):
    """``I - N`` is singular; a peripheral eigenvalue was not removed."""


def vec(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"vec expects a square matrix, got shape {a.shape}")
    return a.reshape(-1).astype(complex)


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = math.isqrt(v.size)
    if v.ndim != 1 or v.size != d * d:
        raise ValueError(f"unvec expects a vector of length {d}² = {d * d}, got shape {v.shape}")
    return v.reshape(d, d).astype(complex)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def dagger(a: np.ndarray) -> np.ndarray:
    return np.asarray(a).conj().T


@dataclass(frozen=True, eq=False)
class KrausSet:
    dim: int
    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(np.asarray(m, dtype=complex) for m in self.operators)
        if not ops:
            raise ValueError("a Kraus set needs at least one operator")
        for m in ops:
            if m.shape != (self.dim, self.dim):
                raise ValueError(f"Kraus operator of shape {m.shape} in a dim-{self.dim} set")
        object.__setattr__(self, "operators", ops)
        # Σ M†M ⊑ I
        gram = sum(m.conj().T @ m for m in ops)
        top = np.linalg.eigvalsh((gram + gram.conj().T) / 2)[-1]
        if top > 1 + TOL_KRAUS:
            raise ValueError(f"Kraus set is trace-increasing (λmax(ΣM†M) = {top:.12g})")

    def apply(self, a: np.ndarray) -> np.ndarray:
        return sum(m @ a @ m.conj().T for m in self.operators)

    def apply_dual(self, a: np.ndarray) -> np.ndarray:
        return sum(m.conj().T @ a @ m for m in self.operators)


@dataclass(frozen=True, eq=False)
class SuperOpMatrix:
    """Matrix representation ``M_E`` acting on row-major ``vec``."""

    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.dim ** 2, self.dim ** 2):
            raise ValueError(f"superoperator on dim {self.dim} needs shape "
                             f"{(self.dim ** 2,) * 2}, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other: "SuperOpMatrix") -> "SuperOpMatrix":
        return SuperOpMatrix(self.dim, self.matrix @ other.matrix)

    def __call__(self, a: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(a), self.dim)

    @classmethod
    def identity(cls, dim: int) -> "SuperOpMatrix":
        return cls(dim, np.eye(dim * dim, dtype=complex))


def superop_matrix(kraus: KrausSet) -> SuperOpMatrix:
    m = sum(np.kron(k, k.conj()) for k in kraus.operators)
    return SuperOpMatrix(kraus.dim, m)


def dual_matrix(m: SuperOpMatrix) -> SuperOpMatrix:
    """Matrix of the Heisenberg-picture dual; ``M_{E*} = (M_E)†`` for row-major vec."""
    return SuperOpMatrix(m.dim, m.matrix.conj().T)


@dataclass(frozen=True, eq=False)
class SpectralSplit:
    """``R = N + R·Π``: ``N`` keeps the contractive part, ``Π`` projects on the periphery."""

    N: np.ndarray
    peripheral_projector: np.ndarray
    eps_spec: float
    peripheral_count: int
    eigenvalues: np.ndarray

    @property
    def contractive_radius(self) -> float:
        lam = self.eigenvalues[np.abs(self.eigenvalues) < 1 - self.eps_spec]
        return float(np.max(np.abs(lam), initial=0.0))


def spectral_split(r: np.ndarray, eps_spec: float = EPS_SPEC) -> SpectralSplit:
    """Remove the peripheral spectrum (``|λ| ≥ 1 - eps_spec``) of a transfer matrix.

    A complex Schur form is reordered so that the peripheral eigenvalues come
    first, ``R = Z [[T11, T12], [0, T22]] Z†``. The coupling block is then
    eliminated with the Sylvester equation ``T11 X - X T22 = -T12``, giving the
    similarity ``V = Z [[I, X], [0, I]]`` that block-diagonalises ``R``. ``N``
    is ``R`` with the ``T11`` block replaced by zero.

    Raises
    ------
    SpectralError
        If some eigenvalue has modulus above ``1 + eps_spec``.
    """
    r = np.asarray(r, dtype=complex)
    n = r.shape[0]
    if r.shape != (n, n):
        raise ValueError(f"spectral_split expects a square matrix, got {r.shape}")
    threshold = 1.0 - eps_spec
    t, z, k = scipy.linalg.schur(r, output="complex", sort=lambda lam: abs(lam) >= threshold)
    lam = np.diag(t).copy()
    if n and np.max(np.abs(lam)) > 1 + eps_spec:
        raise SpectralError(f"eigenvalue of modulus {np.max(np.abs(lam)):.12g} > 1: "
                            "transfer matrix is trace-increasing")
    if k == 0:
        return SpectralSplit(r.copy(), np.zeros_like(r), eps_spec, 0, lam)
    if k == n:
        return SpectralSplit(np.zeros_like(r), np.eye(n, dtype=complex), eps_spec, n, lam)
    t11, t12, t22 = t[:k, :k], t[:k, k:], t[k:, k:]
    x = scipy.linalg.solve_sylvester(t11, -t22, -t12)
    # V = Z Y, V^{-1} = Y^{-1} Z†, Y = [[I, X], [0, I]]
    v_left = z[:, :k]
    v_right = z[:, :k] @ x + z[:, k:]
    zh = z.conj().T
    w_top = zh[:k, :] - x @ zh[k:, :]
    w_bottom = zh[k:, :]
    big_n = v_right @ t22 @ w_bottom
    proj = v_left @ w_top
    return SpectralSplit(big_n, proj, eps_spec, k, lam)


def neumann_sum(n_mat: np.ndarray, eps_spec: float = EPS_SPEC) -> np.ndarray:
    """``Σ_k N^k = (I - N)^{-1}`` for a matrix with spectral radius below one."""
    n_mat = np.asarray(n_mat, dtype=complex)
    eye = np.eye(n_mat.shape[0], dtype=complex)
    return neumann_solve(n_mat, eye, eps_spec)


def neumann_solve(n_mat: np.ndarray, rhs: np.ndarray, eps_spec: float = EPS_SPEC) -> np.ndarray:
    """Solve ``(I - N) X = rhs`` with the same singularity guards as :func:`neumann_sum`."""
    a = np.eye(n_mat.shape[0], dtype=complex) - n_mat
    with warnings.catch_warnings(), np.errstate(divide="ignore", invalid="ignore"):
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            x = scipy.linalg.solve(a, rhs)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise NeumannError(f"I - N is singular (eps_spec={eps_spec}): {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NeumannError("I - N is singular: non-finite solution")
    residual = np.max(np.abs(a @ x - rhs), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(rhs), initial=0.0)))
    if residual > NEUMANN_RESIDUAL * scale:
        raise NeumannError(f"I - N is near-singular: residual {residual:.3g}")
    return x


def embed(a: np.ndarray, targets: Sequence[QuantumVariable | str], layout: Layout) -> np.ndarray:
    """Lift an operator on ``targets`` to the whole layout, identity elsewhere."""
    a = np.asarray(a, dtype=complex)
    idx = [layout.index(t) for t in targets]
    if len(set(idx)) != len(idx):
        raise ValueError("embed targets must be distinct")
    dims = layout.dims
    tdim = math.prod(dims[i] for i in idx)
    if a.shape != (tdim, tdim):
        raise ValueError(f"operator of shape {a.shape} does not act on targets of dim {tdim}")
    rest = [i for i in range(len(dims)) if i not in idx]
    order = idx + rest
    full = np.kron(a, np.eye(math.prod(dims[i] for i in rest), dtype=complex))
    if order == list(range(len(dims))):
        return full
    shape = [dims[i] for i in order]
    inv = list(np.argsort(order))
    m = len(dims)
    full = full.reshape(shape + shape).transpose(inv + [m + i for i in inv])
    total = layout.total_dim
    return full.reshape(total, total)


def hermitian_eigensystem(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    if np.max(np.abs(a - a.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise ValueError("matrix is not Hermitian")
    return np.linalg.eigh((a + a.conj().T) / 2)


# --- matrix JSON -------------------------------------------------------------

def matrix_to_json(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]),
            "data": [[float(z.real), float(z.imag)] for z in a.reshape(-1)]}


def matrix_from_json(obj: dict) -> np.ndarray:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed matrix JSON: {exc}") from exc
    if len(data) != rows * cols:
        raise ValueError(f"matrix JSON has {len(data)} entries, expected {rows}×{cols}")
    flat = np.array([complex(re, im) for re, im in data], dtype=complex)
    return flat.reshape(rows, cols)
