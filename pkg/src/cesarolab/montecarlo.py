"""Trajectory sampling and empirical Cesaro occupation measures.

Random numbers come from Philox (counter-based, NumPy's
``np.random.Philox``).  Replica ``r`` owns the stream with key ``seed``
and counter ``[0, 0, 0, r]``, so each replica's draws depend only on
``(seed, r)``: results are identical whatever the block size or worker
count.  Uniforms that come out as exactly 0 are redrawn from the same
stream (``Generator.random`` never returns 1).

Reductions are order-independent: visits are tallied as integer counts
per bin / atom and divided by ``n * M`` once; per-replica time averages
are summed in replica order.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .kernel import Kernel
from .measure import Grid, HybridMeasure, TestFamily, integrate
from .operator import cesaro_integrals

BLOCK = 8192


@dataclass(frozen=True)
class SimConfig:
    """``M`` trajectories of length ``horizon`` started at ``x0`` or drawn from ``initial``."""

    kernel: Kernel
    horizon: int
    replicas: int
    seed: int
    x0: float | None = 1.0
    initial: HybridMeasure | None = None

    def __post_init__(self):
        if self.horizon < 1 or self.replicas < 1:
            raise ValueError("horizon and replicas must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if (self.x0 is None) == (self.initial is None):
            raise ValueError("give exactly one of x0 and initial")
        if self.x0 is not None and not 0.0 <= self.x0 <= 1.0:
            raise ValueError("x0 must lie in [0, 1]")


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(replica)]))


def open_uniforms(rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` uniforms on the open interval (0, 1)."""
    u = rng.random(size)
    zero = u == 0.0
    while np.any(zero):
        u[zero] = rng.random(int(zero.sum()))
        zero = u == 0.0
    return u


def sample_step(kernel: Kernel, x: float, rng: np.random.Generator) -> tuple[float, np.random.Generator]:
    """One transition from a single state; the generator is advanced in place."""
    u = open_uniforms(rng, max(kernel.uniforms_per_step, 1)).reshape(1, -1)
    nxt, _ = kernel.sample(np.array([float(x)]), u)
    return float(nxt[0]), rng


def sample_measure(mu: HybridMeasure, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws from a probability measure; ``u`` has shape ``(m, 2)``.

    The near-zero bucket is drawn uniformly on ``(0, epsilon_min]``.
    """
    g = mu.grid
    total = mu.total_mass
    weights = np.concatenate([[mu.near_zero_mass], mu.bins, mu.atom_w]) / total
    cum = np.cumsum(weights)
    idx = np.minimum(np.searchsorted(cum, u[:, 0], side="right"), weights.size - 1)
    n = g.bin_count
    out = np.empty(u.shape[0])
    nz = idx == 0
    out[nz] = u[nz, 1] * g.epsilon_min
    b = (idx >= 1) & (idx <= n)
    bi = idx[b] - 1
    out[b] = g.edges[bi] + u[b, 1] * g.widths[bi]
    a = idx > n
    out[a] = mu.atom_x[idx[a] - n - 1]
    return out


def _block_uniforms(config: SimConfig, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    k = max(config.kernel.uniforms_per_step, 1)
    need = 2 + config.horizon * k
    init = np.empty((stop - start, 2))
    steps = np.empty((stop - start, config.horizon, k))
    for i, r in enumerate(range(start, stop)):
        u = open_uniforms(replica_generator(config.seed, r), need)
        init[i] = u[:2]
        steps[i] = u[2:].reshape(config.horizon, k)
    return init, steps


def simulate_blocks(config: SimConfig, block: int = BLOCK) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(first_replica, states, exact)`` with arrays of shape ``(B, horizon)``.

    Column ``k - 1`` holds ``X_k``; ``exact`` marks states produced by a
    deterministic branch.
    """
    for start in range(0, config.replicas, block):
        stop = min(start + block, config.replicas)
        init, steps = _block_uniforms(config, start, stop)
        if config.x0 is not None:
            x = np.full(stop - start, float(config.x0))
        else:
            x = sample_measure(config.initial, init)
        states = np.empty((stop - start, config.horizon))
        exact = np.empty((stop - start, config.horizon), dtype=bool)
        for k in range(config.horizon):
            x, ex = config.kernel.sample(x, steps[:, k, :])
            states[:, k] = x
            exact[:, k] = ex
        yield start, states, exact


@dataclass
class Occupation:
    """Integer visit counts; ``to_measure`` divides by the number of visits."""

    grid: Grid
    bins: np.ndarray
    near_zero: int
    atoms: dict[float, int]
    visits: int

    def to_measure(self) -> HybridMeasure:
        scale = 1.0 / self.visits
        atoms = [(x, c * scale) for x, c in sorted(self.atoms.items())]
        return HybridMeasure(self.grid, atoms, self.bins * scale, self.near_zero * scale)


def _deposit(occ: Occupation, states: np.ndarray, exact: np.ndarray) -> None:
    ex_vals = states[exact]
    if ex_vals.size:
        vals, counts = np.unique(ex_vals, return_counts=True)
        for v, c in zip(vals.tolist(), counts.tolist()):
            occ.atoms[v] = occ.atoms.get(v, 0) + c
    rest = states[~exact]
    idx = occ.grid.bin_index(rest)
    occ.near_zero += int(np.count_nonzero(idx < 0))
    occ.bins += np.bincount(idx[idx >= 0], minlength=occ.grid.bin_count)
    occ.visits += states.size


def _run(config: SimConfig, grid: Grid, family: TestFamily | None, block: int):
    occ = Occupation(grid, np.zeros(grid.bin_count, dtype=np.int64), 0, {}, 0)
    means = None if family is None else np.empty((len(family), config.replicas))
    for start, states, exact in simulate_blocks(config, block):
        _deposit(occ, states, exact)
        if family is not None:
            for i, f in enumerate(family):
                means[i, start:start + states.shape[0]] = np.asarray(f(states)).mean(axis=1)
    return occ, means


def empirical_cesaro(config: SimConfig, grid: Grid, block: int = BLOCK) -> HybridMeasure:
    """Occupation measure ``(1/(nM)) sum_{r, k<=n} delta_{X_k^r}`` on the hybrid grid."""
    occ, _ = _run(config, grid, None, block)
    return occ.to_measure()


def trajectories(config: SimConfig, block: int = BLOCK) -> np.ndarray:
    """All sampled states as an array of shape ``(M, horizon)``."""
    return np.concatenate([s for _, s, _ in simulate_blocks(config, block)], axis=0)


def trajectory_csv(states: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replica", "k", "x"])
    for r, row in enumerate(states):
        for k, x in enumerate(row, 1):
            w.writerow([r, k, repr(float(x))])
    return buf.getvalue()


@dataclass(frozen=True)
class Comparison:
    name: str
    mc_value: float
    operator_value: float
    std_error: float
    z: float


def _z(diff: float, se: float, scale: float) -> float:
    if se > 1e-14 * max(1.0, abs(scale)):
        return diff / se
    return 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(scale)) else float(np.copysign(np.inf, diff))


def mc_vs_operator(config: SimConfig, family: TestFamily, grid: Grid,
                   block: int = BLOCK) -> list[Comparison]:
    """Empirical vs operator Cesaro integrals at ``n = horizon``.

    The standard error is that of the per-replica time averages
    ``(1/n) sum_k f(X_k)`` across the ``M`` replicas.
    """
    occ, means = _run(config, grid, family, block)
    emp = occ.to_measure()
    eta = config.initial if config.initial is not None else HybridMeasure.dirac(config.x0, grid)
    rows = cesaro_integrals(config.kernel, eta, config.horizon, family)
    op = {name: v for n, name, v in rows if n == config.horizon}
    out = []
    m = config.replicas
    for i, f in enumerate(family):
        mc = integrate(emp, f)
        se = float(np.std(means[i], ddof=1) / np.sqrt(m)) if m > 1 else 0.0
        out.append(Comparison(f.name, mc, op[f.name], se, _z(mc - op[f.name], se, op[f.name])))
    return out


def comparison_csv(rows: list[Comparison]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["function_name", "mc_value", "operator_value", "std_error", "z"])
    for c in rows:
        w.writerow([c.name, repr(c.mc_value), repr(c.operator_value), repr(c.std_error), repr(c.z)])
    return buf.getvalue()
