"""Ground truth that does not go through the closed-form loop machinery.

* :func:`ert_truncated` unrolls every loop ``n`` times and evaluates the
  runtime definition directly on density matrices with Kraus operators.
* :func:`enumerate_paths` applies the small-step transition rules to all
  branches up to a transition budget.
* :func:`monte_carlo_ert` samples pure-state trajectories with Born-rule
  measurements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import embed
from .program import Case, Init, Layout, Program, Seq, Skip, Unitary, While
from .semantics import DensityMatrix

DEFAULT_MAX_STEPS = 1_000_000
CHUNK = 4096


def _local_ops(node: Program, layout: Layout) -> list[tuple[int | None, np.ndarray]]:
    """Kraus operators of a primitive step on the global space, labelled by outcome."""
    if isinstance(node, Init):
        d = node.var.dim
        ops = []
        for n in range(d):
            k = np.zeros((d, d), dtype=complex)
            k[0, n] = 1
            ops.append((None, embed(k, [node.var], layout)))
        return ops
    if isinstance(node, Unitary):
        return [(None, embed(node.gate.matrix, node.targets, layout))]
    if isinstance(node, (Case, While)):
        return [(m, embed(op, node.targets, layout)) for m, op in node.meas.outcomes]
    raise TypeError(f"no Kraus operators for {type(node).__name__}")


class _Ops:
    def __init__(self, layout: Layout):
        self.layout = layout
        self._cache: dict[int, tuple[Program, list]] = {}

    def __call__(self, node: Program):
        hit = self._cache.get(id(node))
        if hit is None:
            hit = (node, _local_ops(node, self.layout))
            self._cache[id(node)] = hit
        return hit[1]

    def outcome(self, node: Program, label: int) -> np.ndarray:
        for m, op in self(node):
            if m == label:
                return op
        raise KeyError(label)


def _sandwich(k: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return k @ rho @ k.conj().T


def _tr(rho: np.ndarray) -> float:
    return float(np.trace(rho).real)


# --- truncated unfolding ----------------------------------------------------------------

@dataclass(frozen=True)
class UnfoldingSeries:
    terms: tuple[float, ...]
    converged: bool

    @property
    def last(self) -> float:
        return self.terms[-1]


class _Unfolder:
    """Runtime and output of the program with every loop replaced by ``while^[n]``."""

    def __init__(self, layout: Layout, n: int, abort: bool = False):
        self.ops = _Ops(layout)
        self.n = n
        self.abort = abort

    def run(self, node: Program, rho: np.ndarray) -> tuple[float, np.ndarray]:
        if isinstance(node, Skip):
            return 0.0, rho
        if isinstance(node, (Init, Unitary)):
            out = sum(_sandwich(k, rho) for _, k in self.ops(node))
            return _tr(rho), out
        if isinstance(node, Seq):
            c1, mid = self.run(node.first, rho)
            c2, out = self.run(node.second, mid)
            return c1 + c2, out
        if isinstance(node, Case):
            cost, out = _tr(rho), np.zeros_like(rho)
            for label, branch in node.branches:
                c, o = self.run(branch, _sandwich(self.ops.outcome(node, label), rho))
                cost += c
                out = out + o
            return cost, out
        if isinstance(node, While):
            m0, m1 = self.ops.outcome(node, 0), self.ops.outcome(node, 1)
            cost, out, cur = 0.0, np.zeros_like(rho), rho
            # ERT[while^[n]] = Σ_k tr((S∘E1)^k ρ) + Σ_k ERT[S](E1 (S∘E1)^k ρ)
            for _ in range(self.n):
                cost += _tr(cur)
                out = out + _sandwich(m0, cur)
                c, cur = self.run(node.body, _sandwich(m1, cur))
                cost += c
            # while^[0] is skip and lets the unfinished part through; abort drops it
            return cost, out if self.abort else out + cur
        raise TypeError(f"not a program node: {node!r}")


def ert_truncated(program: Program, layout: Layout, rho: DensityMatrix | np.ndarray, K: int,
                  tol: float = 1e-9) -> UnfoldingSeries:
    """``terms[n]`` is the runtime of ``program`` with each loop unrolled ``n`` times."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    terms = tuple(_Unfolder(layout, n).run(program, r)[0] for n in range(K + 1))
    converged = K >= 1 and terms[-1] - terms[-2] <= tol * max(1.0, terms[-1])
    return UnfoldingSeries(terms, converged)


def run_truncated(program: Program, layout: Layout, rho: DensityMatrix | np.ndarray,
                  K: int) -> np.ndarray:
    """Output state with every loop cut after ``K`` iterations (unfinished mass dropped)."""
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    return _Unfolder(layout, K, abort=True).run(program, r)[1]


def loop_exit_distribution(loop: While, layout: Layout, rho: DensityMatrix | np.ndarray,
                           kmax: int) -> np.ndarray:
    """``p[j] = tr(E_0 ((S ∘ E_1)^j ρ))``: exit after exactly ``j`` body runs.

    The body must be loop-free.
    """
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    unf = _Unfolder(layout, 0)
    m0, m1 = unf.ops.outcome(loop, 0), unf.ops.outcome(loop, 1)
    out = np.empty(kmax)
    cur = r
    for j in range(kmax):
        out[j] = _tr(_sandwich(m0, cur))
        cur = unf.run(loop.body, _sandwich(m1, cur))[1]
    return out


# --- operational path enumeration ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PathResult:
    terminated: np.ndarray      # Σ of final states over finished paths
    expected_cost: float        # Σ tr(ρ_final) · cost over finished paths
    pending_trace: float        # mass of configurations still running
    paths: int                  # finished paths


def _step(node: Program, rho: np.ndarray, ops: _Ops):
    """One transition; yields ``(rest or None, ρ', cost)``."""
    if isinstance(node, Skip):
        yield None, rho, 0
    elif isinstance(node, (Init, Unitary)):
        yield None, sum(_sandwich(k, rho) for _, k in ops(node)), 1
    elif isinstance(node, Seq):
        for rest, r2, c in _step(node.first, rho, ops):
            yield (node.second if rest is None else Seq(rest, node.second)), r2, c
    elif isinstance(node, Case):
        for label, branch in node.branches:
            yield branch, _sandwich(ops.outcome(node, label), rho), 1
    elif isinstance(node, While):
        yield None, _sandwich(ops.outcome(node, 0), rho), 1
        yield Seq(node.body, node), _sandwich(ops.outcome(node, 1), rho), 1
    else:
        raise TypeError(f"not a program node: {node!r}")


def enumerate_paths(program: Program, layout: Layout, rho: DensityMatrix | np.ndarray,
                    max_transitions: int, prune: float = 1e-15) -> PathResult:
    """Explore all branches of the transition system for ``max_transitions`` steps."""
    ops = _Ops(layout)
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    frontier = [(program, r, 0)]
    done = np.zeros_like(r)
    cost = 0.0
    paths = 0
    for _ in range(max_transitions):
        nxt = []
        for node, state, c in frontier:
            for rest, r2, dc in _step(node, state, ops):
                if _tr(r2) <= prune:
                    continue
                if rest is None:
                    done = done + r2
                    cost += _tr(r2) * (c + dc)
                    paths += 1
                else:
                    nxt.append((rest, r2, c + dc))
        frontier = nxt
        if not frontier:
            break
    pending = sum(_tr(s) for _, s, _ in frontier)
    return PathResult(done, cost, pending, paths)


# --- trajectories ----------------------------------------------------------------------

class _Batch:
    """Pure-state trajectories for a batch of shots, advanced in lockstep."""

    def __init__(self, layout: Layout, psi: np.ndarray, rng: np.random.Generator,
                 max_steps: int):
        self.ops = _Ops(layout)
        self.psi = psi
        self.rng = rng
        self.max_steps = max_steps
        self.steps = np.zeros(psi.shape[0], dtype=np.int64)
        self.timed_out = np.zeros(psi.shape[0], dtype=bool)

    def charge(self, idx: np.ndarray) -> np.ndarray:
        self.steps[idx] += 1
        over = self.steps[idx] > self.max_steps
        if over.any():
            self.timed_out[idx[over]] = True
            idx = idx[~over]
        return idx

    def sample(self, node: Program, idx: np.ndarray) -> tuple[np.ndarray, list]:
        """Born-rule outcome per shot; states are updated and renormalised."""
        ops = self.ops(node)
        psi = self.psi[idx]
        amps = [psi @ k.T for _, k in ops]
        probs = np.stack([np.sum(np.abs(a) ** 2, axis=1) for a in amps], axis=1)
        probs /= probs.sum(axis=1, keepdims=True)
        u = self.rng.random(len(idx))
        choice = (u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
        choice = np.minimum(choice, len(ops) - 1)
        new = np.empty_like(psi)
        for j, a in enumerate(amps):
            sel = choice == j
            new[sel] = a[sel]
        new /= np.linalg.norm(new, axis=1, keepdims=True)
        self.psi[idx] = new
        labels = [m for m, _ in ops]
        return choice, labels

    def run(self, node: Program, idx: np.ndarray) -> np.ndarray:
        """Execute ``node`` on shots ``idx``; returns the shots that finished it."""
        if idx.size == 0 or isinstance(node, Skip):
            return idx
        if isinstance(node, Init):
            self.sample(node, idx)
            return self.charge(idx)
        if isinstance(node, Unitary):
            (_, u), = self.ops(node)
            self.psi[idx] = self.psi[idx] @ u.T
            return self.charge(idx)
        if isinstance(node, Seq):
            return self.run(node.second, self.run(node.first, idx))
        if isinstance(node, Case):
            choice, labels = self.sample(node, idx)
            idx = idx.copy()
            keep = self.charge(idx)
            alive = np.isin(idx, keep)
            out = []
            for j, label in enumerate(labels):
                sub = idx[(choice == j) & alive]
                out.append(self.run(node.branch(label), sub))
            return np.sort(np.concatenate(out)) if out else idx[:0]
        if isinstance(node, While):
            finished = []
            active = idx
            while active.size:
                choice, labels = self.sample(node, active)
                one = choice == labels.index(1)
                exiting, looping = active[~one], active[one]
                finished.append(self.charge(exiting))
                looping = self.charge(looping)
                active = self.run(node.body, looping)
            return np.sort(np.concatenate(finished)) if finished else idx[:0]
        raise TypeError(f"not a program node: {node!r}")


def _normalised(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > 1e-9:
        raise ValueError(f"state vector has norm {norm:.12g}, expected 1")
    return psi / norm


def simulate_run(program: Program, layout: Layout, psi, rng_seed: int,
                 max_steps: int = DEFAULT_MAX_STEPS) -> int | None:
    """Steps of one sampled execution, or ``None`` on timeout."""
    psi = _normalised(psi)
    if psi.size != layout.total_dim:
        raise ValueError(f"state of dim {psi.size} for a program on dim {layout.total_dim}")
    batch = _Batch(layout, psi[None, :].copy(), np.random.default_rng(rng_seed), max_steps)
    batch.run(program, np.arange(1))
    return None if batch.timed_out[0] else int(batch.steps[0])


@dataclass(frozen=True)
class TrajectoryStats:
    shots: int
    mean_steps: float           # over completed shots; nan if none completed
    stderr: float
    timeouts: int
    max_steps: int
    seed: int

    def to_json(self) -> dict:
        fin = lambda x: x if math.isfinite(x) else None  # noqa: E731
        return {"mean": fin(self.mean_steps), "stderr": fin(self.stderr), "shots": self.shots,
                "timeouts": self.timeouts, "seed": self.seed}


def _ensemble(rho: DensityMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    vals, vecs = np.linalg.eigh(r)
    vals = np.clip(vals, 0, None)
    if vals.sum() <= 0:
        raise ValueError("state has zero trace")
    return vals / vals.sum(), vecs


def sample_steps(program: Program, layout: Layout, rho: DensityMatrix | np.ndarray, shots: int,
                 max_steps: int = DEFAULT_MAX_STEPS, rng_seed: int = 0) -> np.ndarray:
    """Step counts per shot, ``-1`` marking timeouts.

    Shots are processed in fixed chunks, each with its own stream spawned from
    ``rng_seed``, so the result depends only on the seed and the shot count.
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    weights, vecs = _ensemble(rho)
    if vecs.shape[0] != layout.total_dim:
        raise ValueError(f"state of dim {vecs.shape[0]} for a program on dim {layout.total_dim}")
    n_chunks = -(-shots // CHUNK)
    streams = np.random.SeedSequence(rng_seed).spawn(n_chunks)
    out = np.empty(shots, dtype=np.int64)
    for c, ss in enumerate(streams):
        lo, hi = c * CHUNK, min(shots, (c + 1) * CHUNK)
        rng = np.random.default_rng(ss)
        pick = rng.choice(len(weights), size=hi - lo, p=weights)
        batch = _Batch(layout, vecs[:, pick].T.copy(), rng, max_steps)
        batch.run(program, np.arange(hi - lo))
        out[lo:hi] = np.where(batch.timed_out, -1, batch.steps)
    return out


def monte_carlo_ert(program: Program, layout: Layout, rho: DensityMatrix | np.ndarray,
                    shots: int, max_steps: int = DEFAULT_MAX_STEPS,
                    rng_seed: int = 0) -> TrajectoryStats:
    steps = sample_steps(program, layout, rho, shots, max_steps, rng_seed)
    done = steps[steps >= 0].astype(float)
    timeouts = int(shots - done.size)
    if done.size == 0:
        mean, err = math.nan, math.nan
    elif done.size == 1:
        mean, err = float(done[0]), math.nan
    else:
        mean = float(done.mean())
        err = float(done.std(ddof=1) / math.sqrt(done.size))
    return TrajectoryStats(shots, mean, err, timeouts, max_steps, rng_seed)
