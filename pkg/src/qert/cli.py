"""``qert`` command line: analyze, simulate, walk, corpus."""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import linalg, oracles, walk
from .parser import ParseError, parse, parse_complex, pretty_print
from .program import Layout
from .runtime import analyze
from .semantics import DensityMatrix

EXIT_OK, EXIT_ERROR, EXIT_INFINITE = 0, 1, 2
COIN_RENORMALISE = 1e-6


class CliError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    # usage errors exit 1; 2 is reserved for infinite runtimes
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def eps_spec() -> float:
    raw = os.environ.get("QERT_EPS_SPEC")
    if raw is None:
        return linalg.EPS_SPEC
    try:
        value = float(raw)
    except ValueError:
        raise CliError(f"QERT_EPS_SPEC is not a number: {raw!r}") from None
    if not 0 < value < 1:
        raise CliError(f"QERT_EPS_SPEC must lie in (0, 1), got {value}")
    return value


# --- states -----------------------------------------------------------------------

_SINGLE = {"0": np.array([1, 0]), "1": np.array([0, 1]),
           "+": np.array([1, 1]) / math.sqrt(2), "-": np.array([1, -1]) / math.sqrt(2)}


def parse_ket(text: str, layout: Layout) -> np.ndarray:
    """``|1>``, ``|+0>`` (one symbol per variable) or ``L,k`` / ``R,k`` for walk layouts."""
    text = text.strip()
    m = re.fullmatch(r"([LRlr])\s*,\s*(\d+)", text)
    if m:
        dims = layout.dims
        if len(dims) != 2 or dims[0] != 2:
            raise CliError("L,k / R,k states need a coin ⊗ position layout")
        psi = np.zeros(layout.total_dim, dtype=complex)
        psi[walk.basis_index(m.group(1), int(m.group(2)), dims[1])] = 1
        return psi
    m = re.fullmatch(r"\|([0-9+\-]*)>", text)
    if not m:
        raise CliError(f"cannot read ket {text!r}; use e.g. '|1>', '|+>' or 'L,1'")
    symbols = m.group(1)
    if len(symbols) != len(layout.variables):
        raise CliError(f"ket {text!r} has {len(symbols)} symbol(s) for "
                       f"{len(layout.variables)} variable(s)")
    psi = np.ones(1, dtype=complex)
    for sym, var in zip(symbols, layout.variables):
        if sym in "+-":
            if var.dim != 2:
                raise CliError(f"'{sym}' needs a qubit, {var.name} has dim {var.dim}")
            local = _SINGLE[sym]
        else:
            if int(sym) >= var.dim:
                raise CliError(f"basis state {sym} out of range for {var.name} (dim {var.dim})")
            local = np.zeros(var.dim)
            local[int(sym)] = 1
        psi = np.kron(psi, local)
    return psi


def read_state(args, layout: Layout) -> DensityMatrix:
    if args.pure is not None:
        return DensityMatrix.pure(parse_ket(args.pure, layout))
    if args.rho is not None:
        try:
            obj = json.loads(Path(args.rho).read_text())
            m = linalg.matrix_from_json(obj)
            rho = DensityMatrix(m)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read density matrix {args.rho}: {exc}") from exc
        if rho.dim != layout.total_dim:
            raise CliError(f"density matrix has dim {rho.dim}, program needs {layout.total_dim}")
        return rho
    return DensityMatrix(np.eye(layout.total_dim, dtype=complex) / layout.total_dim)


def load(path: str):
    try:
        source = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    try:
        parsed = parse(source)
    except ParseError as exc:
        raise CliError(f"{path}:{exc}") from exc
    return source, parsed


def emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


# --- commands -----------------------------------------------------------------------

def cmd_analyze(args) -> int:
    t0 = time.perf_counter()
    source, parsed = load(args.file)
    rho = read_state(args, parsed.layout)
    t1 = time.perf_counter()
    report = analyze(parsed.program, parsed.layout, rho, eps_spec=eps_spec())
    t2 = time.perf_counter()
    out = {"source_sha256": hashlib.sha256(source.encode()).hexdigest()}
    out.update(report.to_json())
    if args.oracles:
        series = oracles.ert_truncated(parsed.program, parsed.layout, rho, args.unroll)
        stats = oracles.monte_carlo_ert(parsed.program, parsed.layout, rho, args.shots,
                                        args.max_steps, args.seed)
        out["oracles"] = {
            "unfolding": {"K": args.unroll, "value": series.last, "converged": series.converged},
            "monte_carlo": stats.to_json(),
        }
    t3 = time.perf_counter()
    out["timings"] = {"parse_s": t1 - t0, "analyze_s": t2 - t1,
                      "oracles_s": t3 - t2 if args.oracles else 0.0}
    emit(out)
    return EXIT_OK if math.isfinite(report.value) else EXIT_INFINITE


def cmd_simulate(args) -> int:
    _, parsed = load(args.file)
    rho = read_state(args, parsed.layout)
    stats = oracles.monte_carlo_ert(parsed.program, parsed.layout, rho, args.shots,
                                    args.max_steps, args.seed)
    emit(stats.to_json())
    return EXIT_OK


def parse_coin(text: str) -> walk.CoinSpec:
    parts = text.split(",")
    if len(parts) != 2:
        raise CliError(f"coin must be 'a,b', got {text!r}")
    vals = []
    for part in parts:
        try:
            vals.append(parse_complex(part))
        except ParseError as exc:
            raise CliError(f"bad coin entry {part!r}: {exc}") from exc
    a, b = vals
    norm = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
    if abs(norm ** 2 - 1) > COIN_RENORMALISE:
        raise CliError(f"coin is not normalised: |a|²+|b|² = {norm ** 2:.12g}")
    if abs(norm ** 2 - 1) > walk.COIN_TOL:
        print(f"note: coin renormalised from |a|²+|b|² = {norm ** 2:.12g}", file=sys.stderr)
    return walk.CoinSpec(a / norm, b / norm)


def cmd_walk(args) -> int:
    coin = parse_coin(args.coin) if args.coin else walk.CoinSpec.hadamard()
    spec = walk.WalkSpec(args.n, coin)
    out = {"n": args.n, "coin": [[coin.a.real, coin.a.imag], [coin.b.real, coin.b.imag]],
           "mode": args.mode}
    mats = {}
    if args.mode in ("closed", "both"):
        mats["closed"] = walk.closed_form_any(args.n, coin)
    if args.mode in ("numeric", "both"):
        mats["numeric"] = walk.numeric_Q(args.n, coin)
    for name, q in mats.items():
        check = walk.verify_fixed_point(q, spec)
        out[name] = {"Q": linalg.matrix_to_json(q.matrix), "residual": check.residual,
                     "recurrence_residual": check.recurrence_residual}
    if len(mats) == 2:
        out["discrepancy"] = float(np.linalg.norm(mats["closed"].matrix - mats["numeric"].matrix))
    if args.state:
        m = re.fullmatch(r"\s*([LRlr])\s*,\s*(\d+)\s*", args.state)
        if not m:
            raise CliError(f"walk state must be 'L,k' or 'R,k', got {args.state!r}")
        alpha, beta = walk.state_amplitudes(args.n, m.group(1), int(m.group(2)))
        if "closed" in mats:
            out["expected_steps"] = walk.expected_steps(spec, alpha, beta)
        else:
            psi = np.concatenate([alpha, beta])
            out["expected_steps"] = float((psi.conj() @ mats["numeric"].matrix @ psi).real)
    emit(out)
    return EXIT_OK


def cmd_corpus(args) -> int:
    target = Path(args.emit)
    try:
        target.mkdir(parents=True, exist_ok=True)
        manifest = {}
        for entry in walk.corpus():
            fname = f"{entry.name}.qw"
            (target / fname).write_text(pretty_print(entry.program, entry.layout), encoding="utf-8")
            item = {"file": fname, "state": entry.state_label,
                    "expected_ert": "infinity" if entry.expected is None else entry.expected}
            if entry.name.startswith("walk_n"):
                item["expected_steps"] = float(entry.name[len("walk_n"):])
            manifest[entry.name] = item
        (target / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise CliError(f"cannot write corpus to {target}: {exc}") from exc
    emit({"written": sorted(manifest), "directory": str(target)})
    return EXIT_OK


# --- entry point ---------------------------------------------------------------------------

def _state_args(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--pure", metavar="KET", help="pure input state, e.g. '|1>', '|+0>', 'L,1'")
    g.add_argument("--rho", metavar="JSON", help="density matrix file in matrix JSON")
    g.add_argument("--maximally-mixed", action="store_true",
                   help="maximally mixed input (the default)")


def build_parser() -> argparse.ArgumentParser:
    ap = _ArgumentParser(prog="qert", description="Expected runtimes of quantum while-programs")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("analyze", help="runtime observable and expected runtime")
    p.add_argument("file")
    _state_args(p)
    p.add_argument("--oracles", action="store_true", help="also run unfolding and Monte-Carlo")
    p.add_argument("--unroll", type=int, default=200, help="unfolding depth for --oracles")
    p.add_argument("--shots", type=int, default=10_000)
    p.add_argument("--max-steps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte-Carlo trajectories")
    p.add_argument("file")
    _state_args(p)
    p.add_argument("--shots", type=int, default=10_000)
    p.add_argument("--max-steps", type=int, default=oracles.DEFAULT_MAX_STEPS)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("walk", help="Q_n of the absorbing walk on an n-circle")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--coin", help="coin entries 'a,b' (default Hadamard)")
    p.add_argument("--mode", choices=("closed", "numeric", "both"), default="closed")
    p.add_argument("--state", help="initial basis state 'L,k' or 'R,k'")
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("corpus", help="write the case-study programs and a manifest")
    p.add_argument("--emit", required=True, metavar="DIR")
    p.set_defaults(func=cmd_corpus)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, ArithmeticError) as exc:
        print(f"qert: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
