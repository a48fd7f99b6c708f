"""Random programs and states for property tests."""
import numpy as np

from qert.program import (H, Case, Init, Layout, MeasurementDecl, QuantumVariable, Skip, Unitary,
                          UnitaryDecl, While, X, seq, std_measurement)


def random_unitary(rng, d):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_measurement(rng, name, d, labels=(0, 1)):
    """Projective measurement in a random basis, outcomes grouped into ``labels``."""
    u = random_unitary(rng, d)
    groups = {m: np.zeros((d, d), dtype=complex) for m in labels}
    cut = rng.permutation(d)
    for i, col in enumerate(cut):
        label = labels[i % len(labels)]
        v = u[:, col]
        groups[label] += np.outer(v, v.conj())
    return MeasurementDecl(name, tuple(groups.items()), (d,))


def random_layout(rng, count=None):
    count = count or int(rng.integers(1, 3))
    return Layout(tuple(QuantumVariable(f"v{i}", int(rng.choice([2, 2, 3]))) for i in range(count)))


def random_program(rng, layout, depth=3, loops=True, max_len=3):
    vars_ = layout.variables

    def stmt(level):
        kinds = ["skip", "init", "gate", "gate"]
        if level > 0:
            kinds += ["case"] + (["while"] if loops else [])
        kind = rng.choice(kinds)
        v = vars_[int(rng.integers(len(vars_)))]
        if kind == "skip":
            return Skip()
        if kind == "init":
            return Init(v)
        if kind == "gate":
            if v.dim == 2 and rng.random() < 0.4:
                return Unitary(H if rng.random() < 0.5 else X, (v,))
            if len(vars_) > 1 and rng.random() < 0.3:
                w = [u for u in vars_ if u != v][0]
                d = v.dim * w.dim
                return Unitary(UnitaryDecl(f"G{rng.integers(1000)}", random_unitary(rng, d),
                                           (v.dim, w.dim)), (v, w))
            return Unitary(UnitaryDecl(f"G{rng.integers(1000)}", random_unitary(rng, v.dim),
                                       (v.dim,)), (v,))
        if kind == "case":
            meas = std_measurement(v.dim) if rng.random() < 0.5 else \
                random_measurement(rng, f"M{rng.integers(1000)}", v.dim, tuple(range(v.dim)))
            return Case(meas, (v,), tuple((m, block(level - 1)) for m in meas.labels))
        meas = std_measurement(2) if v.dim == 2 and rng.random() < 0.5 else \
            random_measurement(rng, f"W{rng.integers(1000)}", v.dim)
        return While(meas, (v,), block(level - 1))

    def block(level):
        return seq(*(stmt(level) for _ in range(int(rng.integers(1, max_len + 1)))))

    return block(depth)


def random_density(rng, d, rank=None):
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
