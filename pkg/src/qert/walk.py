"""Case-study programs and the closed-form walk matrix ``Q_n``.

The walk lives on ``coin ⊗ position`` with coin basis ``|L⟩ = |0⟩``,
``|R⟩ = |1⟩`` and positions ``0..n-1`` on a circle; position 0 absorbs.
``Q_n = Σ_k (E_1* ∘ [[body]]*)^k (I)`` counts expected guard measurements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .linalg import neumann_solve, vec, unvec
from .program import (H, Init, Layout, MeasurementDecl, Program, QuantumVariable, Skip,
                      Unitary, UnitaryDecl, While, X, seq, std_measurement)

COIN_TOL = 1e-10
MAX_N = 64
FIXED_POINT_TOL = 1e-8


# --- coins and specs -------------------------------------------------------------

@dataclass(frozen=True)
class CoinSpec:
    """Coin ``T = [[a, b], [b*, -a*]]`` with ``|a|² + |b|² = 1``."""

    a: complex
    b: complex

    def __post_init__(self):
        a, b = complex(self.a), complex(self.b)
        norm = abs(a) ** 2 + abs(b) ** 2
        if abs(norm - 1) > COIN_TOL:
            raise ValueError(f"coin is not normalised: |a|²+|b|² = {norm:.12g}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def hadamard(cls) -> "CoinSpec":
        s = 1 / math.sqrt(2)
        return cls(s, s)

    @classmethod
    def real(cls, x: float) -> "CoinSpec":
        """Real coin with ``a = x``, ``b = sqrt(1 - x²)``."""
        return cls(x, math.sqrt(1 - x * x))

    @property
    def is_real(self) -> bool:
        return self.a.imag == 0 and self.b.imag == 0

    @property
    def matrix(self) -> np.ndarray:
        a, b = self.a, self.b
        return np.array([[a, b], [b.conjugate(), -a.conjugate()]], dtype=complex)


@dataclass(frozen=True)
class WalkSpec:
    n: int
    coin: CoinSpec = CoinSpec(1 / math.sqrt(2), 1 / math.sqrt(2))

    def __post_init__(self):
        if not 2 <= self.n <= MAX_N:
            raise ValueError(f"walk size must be in [2, {MAX_N}], got {self.n}")

    @property
    def dim(self) -> int:
        return 2 * self.n


@dataclass(frozen=True, eq=False)
class QnMatrix:
    """``Q_n = [[A, B†], [B, C]]`` in the ``(L block, R block)`` ordering."""

    n: int
    matrix: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return self.matrix[: self.n, : self.n]

    @property
    def B(self) -> np.ndarray:
        return self.matrix[self.n:, : self.n]

    @property
    def C(self) -> np.ndarray:
        return self.matrix[self.n:, self.n:]

    def entry(self, direction: str, k: int) -> float:
        i = basis_index(direction, k, self.n)
        return float(self.matrix[i, i].real)


def basis_index(direction: str, k: int, n: int) -> int:
    d = direction.upper()
    if d not in ("L", "R") or not 0 <= k < n:
        raise ValueError(f"bad walk state {direction},{k} for n={n}")
    return k if d == "L" else n + k


# --- program builders -------------------------------------------------------------

def build_geo() -> tuple[Program, Layout]:
    """``while M[q] = 1 do q := H[q] od`` on one qubit."""
    q = QuantumVariable("q", 2)
    prog = While(std_measurement(2), (q,), Unitary(H, (q,)))
    return prog, Layout((q,))


def build_divergent() -> tuple[Program, Layout]:
    """``while M[q] = 1 do skip od``: diverges exactly on ``|1⟩``."""
    q = QuantumVariable("q", 2)
    return While(std_measurement(2), (q,), Skip()), Layout((q,))


_R = 1 / math.sqrt(2)
QBF_U = np.array([[_R, 0, 0, -_R],
                  [_R, 0, 0, _R],
                  [0, _R, _R, 0],
                  [0, _R, -_R, 0]], dtype=complex)


def coin_prep(p: float) -> np.ndarray:
    """``U_p`` with ``U_p|0⟩ = √p|0⟩ + √(1-p)|1⟩``."""
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    s, c = math.sqrt(p), math.sqrt(1 - p)
    return np.array([[s, -c], [c, s]], dtype=complex)


def build_qbf(p: float) -> tuple[Program, Layout]:
    """Quantum Bernoulli factory for ``(2p-1)²``; the loop is the last statement."""
    q1, q2 = QuantumVariable("q1", 2), QuantumVariable("q2", 2)
    up = UnitaryDecl("Up", coin_prep(p), (2,))
    u = UnitaryDecl("U", QBF_U, (2, 2))
    body = seq(Init(q1), Unitary(up, (q1,)), Init(q2), Unitary(up, (q2,)),
               Unitary(u, (q1, q2)))
    loop = While(std_measurement(2), (q2,), body)
    prog = seq(Init(q1), Unitary(X, (q1,)), Init(q2), Unitary(X, (q2,)), loop)
    return prog, Layout((q1, q2))


def qbf_loop(program: Program) -> While:
    node = program
    while not isinstance(node, While):
        node = node.second
    return node


def shift_left(n: int) -> np.ndarray:
    """``S_L = Σ_i |i ⊖ 1⟩⟨i|``."""
    s = np.zeros((n, n), dtype=complex)
    for i in range(n):
        s[(i - 1) % n, i] = 1
    return s


def shift_operator(n: int) -> np.ndarray:
    sl = shift_left(n)
    return np.kron(np.diag([1, 0]), sl) + np.kron(np.diag([0, 1]), sl.T)


def boundary_measurement(n: int) -> MeasurementDecl:
    m0 = np.zeros((n, n))
    m0[0, 0] = 1
    return MeasurementDecl("N", ((0, m0), (1, np.eye(n) - m0)), (n,))


def build_walk(spec: WalkSpec) -> tuple[Program, Layout]:
    """``while N[p] = 1 do q := T[q]; q,p := S[q,p] od``, layout ``(q, p)``."""
    q, p = QuantumVariable("q", 2), QuantumVariable("p", spec.n)
    t = UnitaryDecl("T", spec.coin.matrix, (2,))
    s = UnitaryDecl("S", shift_operator(spec.n), (2, spec.n))
    body = seq(Unitary(t, (q,)), Unitary(s, (q, p)))
    return While(boundary_measurement(spec.n), (p,), body), Layout((q, p))


def walk_E(spec: WalkSpec) -> np.ndarray:
    """``E = M_1† (T ⊗ I)† S†`` so that one guarded iteration is ``X ↦ E X E†``."""
    n = spec.n
    m1 = np.kron(np.eye(2), boundary_measurement(n).operator(1))
    tl = np.kron(spec.coin.matrix, np.eye(n))
    return m1.conj().T @ tl.conj().T @ shift_operator(n).conj().T


# --- closed form ---------------------------------------------------------------------

def _sign(j: int, k: int) -> int:
    return -1 if ((j - k) // 2) % 2 else 1


def f_n(n: int, j: int, k: int, ratio_sq):
    return _sign(j, k) * ratio_sq * j * (n - 1 - k)


def h_n(n: int, j: int, k: int, ratio):
    return _sign(j, k) * ratio * (j + k - n)


def closed_form_blocks(n: int, ratio, ratio_sq=None):
    """``A, B, C`` as nested lists over any numeric type (floats or Fractions).

    ``ratio`` is ``b/a``; passing exact values keeps the arithmetic exact.
    """
    if ratio_sq is None:
        ratio_sq = ratio * ratio
    zero = ratio * 0
    a = [[zero] * n for _ in range(n)]
    b = [[zero] * n for _ in range(n)]
    for j in range(n):
        for k in range(n):
            even = (j - k) % 2 == 0
            if j == k:
                a[j][k] = f_n(n, j, j, ratio_sq) + j + 1
            elif even:
                a[j][k] = f_n(n, min(j, k), max(j, k), ratio_sq)
            if 0 < j <= k < n and even:
                b[j][k] = h_n(n, j, k, ratio)
    c = [[a[(n - j) % n][(n - k) % n] for k in range(n)] for j in range(n)]
    return a, b, c


def closed_form_Q(n: int, coin: CoinSpec) -> QnMatrix:
    if not coin.is_real:
        raise ValueError("closed form needs a real coin; use phase_reduction first")
    a, b = coin.a.real, coin.b.real
    if a == 0:
        raise ValueError("closed form divides by a; a = 0 is not supported")
    ab, bb, cb = (np.array(m, dtype=float) for m in closed_form_blocks(n, b / a))
    return QnMatrix(n, np.block([[ab, bb.T], [bb, cb]]).astype(complex))


def numeric_Q(n: int, coin: CoinSpec) -> QnMatrix:
    """Solve ``(I - E ⊗ E*) vec(Q) = vec(I)``.

    Raises ``ArithmeticError`` when ``E`` has an eigenvalue on the unit circle,
    i.e. the walk is not almost surely terminating.
    """
    spec = WalkSpec(n, coin)
    e = walk_E(spec)
    radius = float(np.max(np.abs(np.linalg.eigvals(e))))
    if radius >= 1 - 1e-9:
        raise ArithmeticError("walk does not terminate almost surely "
                              f"(spectral radius {radius:.12g})")
    d = spec.dim
    q = unvec(neumann_solve(np.kron(e, e.conj()), vec(np.eye(d))), d)
    q = (q + q.conj().T) / 2
    residual = np.max(np.abs(np.eye(d) + e @ q @ e.conj().T - q))
    if residual > FIXED_POINT_TOL:
        raise ArithmeticError(f"fixed-point residual {residual:.3g} exceeds {FIXED_POINT_TOL}")
    return QnMatrix(n, q)


# --- verification ----------------------------------------------------------------------

@dataclass(frozen=True)
class FixedPointCheck:
    residual: float
    recurrence_residual: float

    @property
    def ok(self) -> bool:
        return max(self.residual, self.recurrence_residual) < FIXED_POINT_TOL


def recurrence_residuals(a_blk, b_blk, c_blk, n: int, a, b):
    """Residuals of the scalar recurrences on ``A`` (diagonal, then ``0 < j < k < n``).

    Works over any field; with Fractions the residuals are exact.
    """
    m = lambda i: i % n  # noqa: E731
    out = []
    for j in range(1, n):
        rhs = 1 + a * a * a_blk[m(j - 1)][m(j - 1)] + b * b * a_blk[m(n - j - 1)][m(n - j - 1)]
        out.append(a_blk[j][j] - rhs)
    for j in range(1, n):
        for k in range(j + 1, n):
            rhs = (a * a * a_blk[m(j - 1)][m(k - 1)] + b * b * c_blk[m(j + 1)][m(k + 1)]
                   + a * b * b_blk[m(j + 1)][m(k - 1)])
            out.append(a_blk[j][k] - rhs)
    return out


def verify_fixed_point(q: QnMatrix, spec: WalkSpec) -> FixedPointCheck:
    """Max-abs residual of ``Q - I - E Q E†`` plus the scalar recurrences on ``A``."""
    n = spec.n
    e = walk_E(spec)
    m = q.matrix
    residual = float(np.max(np.abs(m - np.eye(2 * n) - e @ m @ e.conj().T)))
    rec = 0.0
    if spec.coin.is_real:
        res = recurrence_residuals(q.A.tolist(), q.B.tolist(), q.C.tolist(), n,
                                   spec.coin.a.real, spec.coin.b.real)
        rec = float(max((abs(r) for r in res), default=0.0))
    return FixedPointCheck(residual, rec)


def exact_hadamard_check(n: int) -> list[Fraction]:
    """Recurrence residuals of the closed form in exact arithmetic, ``a = b = 1/√2``.

    Only ``a²``, ``b²``, ``ab`` and ``b/a`` enter, and all are rational here.
    """
    half = Fraction(1, 2)
    a_blk, b_blk, c_blk = closed_form_blocks(n, Fraction(1), Fraction(1))
    m = lambda i: i % n  # noqa: E731
    out = []
    for j in range(1, n):
        rhs = 1 + half * a_blk[m(j - 1)][m(j - 1)] + half * a_blk[m(n - j - 1)][m(n - j - 1)]
        out.append(a_blk[j][j] - rhs)
    for j in range(1, n):
        for k in range(j + 1, n):
            rhs = (half * a_blk[m(j - 1)][m(k - 1)] + half * c_blk[m(j + 1)][m(k + 1)]
                   + half * b_blk[m(j + 1)][m(k - 1)])
            out.append(a_blk[j][k] - rhs)
    return out


# --- phases and the expected-steps formula -------------------------------------------

def phase_reduction(coin: CoinSpec, n: int) -> tuple[CoinSpec, np.ndarray]:
    """Real coin ``T'`` and diagonal unitary ``P`` with ``Q_n = P† Q_n' P``.

    Write ``a = e^{-i(β+δ)} x`` and ``b = e^{-i(β-δ)} y``. Then
    ``P_L(k) = e^{-i(β+δ)k - 2iδ}`` and ``P_R(k) = e^{-i(β+δ)k}``.
    """
    if coin.is_real:
        return coin, np.eye(2 * n, dtype=complex)
    x, y = abs(coin.a), abs(coin.b)
    s = -np.angle(coin.a) if x else 0.0      # β + δ
    t = -np.angle(coin.b) if y else 0.0      # β - δ
    delta = (s - t) / 2
    k = np.arange(n)
    pl = np.exp(-1j * s * k - 2j * delta)
    pr = np.exp(-1j * s * k)
    real = CoinSpec(x, y)
    return real, np.diag(np.concatenate([pl, pr]))


def closed_form_any(n: int, coin: CoinSpec) -> QnMatrix:
    """Closed form for any coin, going through the real reduction when needed."""
    real, p = phase_reduction(coin, n)
    q = closed_form_Q(n, real).matrix
    return QnMatrix(n, p.conj().T @ q @ p)


def phase_identity_residual(coin: CoinSpec, n: int) -> float:
    """How far ``E`` is from ``P† E' P``.

    The diagonal phases are linear in the position and do not close around
    the circle, so the identity only holds on inputs away from position 0.
    Those are the only columns that enter ``E X E†`` after the first step,
    and ``E E† = P† E' E'† P`` covers the first step itself.
    """
    real, p = phase_reduction(coin, n)
    e = walk_E(WalkSpec(n, coin))
    ep = p.conj().T @ walk_E(WalkSpec(n, real)) @ p
    m1 = np.kron(np.eye(2), boundary_measurement(n).operator(1))
    r1 = np.max(np.abs((e - ep) @ m1))
    r2 = np.max(np.abs(e @ e.conj().T - ep @ ep.conj().T))
    return float(max(r1, r2))


def expected_steps(spec: WalkSpec, alpha: Sequence[complex], beta: Sequence[complex]) -> float:
    """``⟨Ψ|Q_n|Ψ⟩`` for ``Ψ = Σ_k α_k|L,k⟩ + β_k|R,k⟩``, expanded in closed form."""
    n = spec.n
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    if alpha.shape != (n,) or beta.shape != (n,):
        raise ValueError(f"need {n} amplitudes for each coin direction")
    norm = float(np.sum(np.abs(alpha) ** 2 + np.abs(beta) ** 2))
    if abs(norm - 1) > 1e-9:
        raise ValueError(f"state is not normalised (norm² = {norm:.12g})")
    coin = spec.coin
    if not coin.is_real:
        coin, p = phase_reduction(coin, n)
        psi = p @ np.concatenate([alpha, beta])
        alpha, beta = psi[:n], psi[n:]
    a, b = coin.a.real, coin.b.real
    if a == 0:
        raise ValueError("closed form divides by a; a = 0 is not supported")
    r = b / a
    r2 = r * r
    neg = lambda j: (n - j) % n  # noqa: E731
    cj = np.conj
    total = 0.0 + 0.0j
    for j in range(n):
        weight = f_n(n, j, j, r2) + j + 1
        total += weight * (cj(alpha[j]) * alpha[j] + cj(beta[neg(j)]) * beta[neg(j)])
    for j in range(1, n):
        total += h_n(n, j, j, r) * (cj(alpha[j]) * beta[j] + cj(beta[j]) * alpha[j])
    for j in range(1, n):
        for k in range(j + 2, n, 2):
            total += f_n(n, j, k, r2) * (cj(alpha[j]) * alpha[k] + cj(alpha[k]) * alpha[j]
                                         + cj(beta[neg(j)]) * beta[neg(k)]
                                         + cj(beta[neg(k)]) * beta[neg(j)])
            total += h_n(n, j, k, r) * (cj(beta[j]) * alpha[k] + cj(alpha[k]) * beta[j])
    return float(total.real)


def state_amplitudes(n: int, direction: str, k: int) -> tuple[np.ndarray, np.ndarray]:
    psi = np.zeros(2 * n, dtype=complex)
    psi[basis_index(direction, k, n)] = 1
    return psi[:n], psi[n:]


# --- corpus ------------------------------------------------------------------------------

QBF_PS = tuple(round(0.1 * i, 1) for i in range(1, 10))
WALK_NS = (3, 5, 8)


@dataclass(frozen=True, eq=False)
class CorpusEntry:
    """A named program with an input state and its expected ERT (``None`` = infinite)."""

    name: str
    program: Program
    layout: Layout
    state: np.ndarray
    state_label: str
    expected: float | None


def corpus() -> list[CorpusEntry]:
    out = []
    prog, lay = build_geo()
    out.append(CorpusEntry("geo", prog, lay, np.array([0, 1], dtype=complex), "|1>", 5.0))
    prog, lay = build_divergent()
    out.append(CorpusEntry("div", prog, lay, np.array([0, 1], dtype=complex), "|1>", None))
    for p in QBF_PS:
        prog, lay = build_qbf(p)
        psi = np.zeros(4, dtype=complex)
        psi[0] = 1
        out.append(CorpusEntry(f"qbf_p{p}", prog, lay, psi, "|00>", 17.0))
    for n in WALK_NS:
        prog, lay = build_walk(WalkSpec(n))
        psi = np.zeros(2 * n, dtype=complex)
        psi[1] = 1
        # each iteration costs a measurement, a coin toss and a shift; the final
        # measurement costs one more, so ERT = 3·Q - 2 on a basis state
        out.append(CorpusEntry(f"walk_n{n}", prog, lay, psi, "L,1", 3.0 * n - 2))
    return out
