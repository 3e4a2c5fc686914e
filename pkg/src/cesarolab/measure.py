"""Nonnegative bounded measures on [0, 1] in hybrid form.

A :class:`HybridMeasure` is the sum of three parts:

* a finite list of atoms ``(x, w)``,
* a piecewise-constant density on the bins ``(e_i, e_{i+1}]`` of a
  log-spaced :class:`Grid` (stored as per-bin masses),
* a scalar ``near_zero_mass`` carried by ``(0, epsilon_min]``, below the
  resolution of the grid.  It integrates against ``f(0)``.

Everything here is exact arithmetic on that representation; the only
approximation in the package is the re-projection done by the kernels.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate as _integrate

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)
# bin averages: weights sum to one
_GL_WEIGHTS = _GL_WEIGHTS / 2.0


class GridMismatchError(ValueError):
    """Raised when measures on different grids are combined."""


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _grid_arrays(epsilon_min: float, bin_count: int):
    log_edges = np.linspace(math.log(epsilon_min), 0.0, bin_count + 1)
    edges = np.exp(log_edges)
    edges[0] = epsilon_min
    edges[-1] = 1.0
    widths = np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    nodes = mids[:, None] + 0.5 * widths[:, None] * _GL_NODES[None, :]
    log_steps = np.diff(np.log(edges))
    for arr in (edges, widths, mids, nodes, log_steps):
        arr.flags.writeable = False
    return edges, widths, mids, nodes, log_steps


@dataclass(frozen=True)
class Grid:
    """Log-uniform partition of ``(epsilon_min, 1]`` into ``bin_count`` bins."""

    epsilon_min: float = 1e-12
    bin_count: int = 4096

    def __post_init__(self):
        eps = float(self.epsilon_min)
        if not (0.0 < eps < 1.0) or not math.isfinite(eps):
            raise ValueError(f"epsilon_min must lie in (0, 1), got {self.epsilon_min!r}")
        if int(self.bin_count) != self.bin_count or self.bin_count < 1:
            raise ValueError(f"bin_count must be a positive integer, got {self.bin_count!r}")
        object.__setattr__(self, "epsilon_min", eps)
        object.__setattr__(self, "bin_count", int(self.bin_count))

    @property
    def edges(self) -> np.ndarray:
        return _grid_arrays(self.epsilon_min, self.bin_count)[0]

    @property
    def widths(self) -> np.ndarray:
        return _grid_arrays(self.epsilon_min, self.bin_count)[1]

    @property
    def midpoints(self) -> np.ndarray:
        return _grid_arrays(self.epsilon_min, self.bin_count)[2]

    @property
    def quadrature_nodes(self) -> np.ndarray:
        """Gauss-Legendre nodes, shape ``(bin_count, 4)``."""
        return _grid_arrays(self.epsilon_min, self.bin_count)[3]

    @property
    def log_steps(self) -> np.ndarray:
        """``log(e_{i+1}) - log(e_i)`` per bin."""
        return _grid_arrays(self.epsilon_min, self.bin_count)[4]

    def bin_index(self, x) -> np.ndarray:
        """Index ``i`` with ``e_i < x <= e_{i+1}``; ``-1`` for ``x <= epsilon_min``."""
        return np.searchsorted(self.edges, np.asarray(x, dtype=float), side="left") - 1

    def to_dict(self) -> dict:
        return {"epsilon_min": self.epsilon_min, "bin_count": self.bin_count}


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A bounded continuous function on [0, 1] used to probe weak convergence.

    ``evaluator`` must accept numpy arrays.  ``antiderivative`` (optional)
    is ``x -> int_0^x f``; when absent, averages over ``(0, x)`` fall back
    to adaptive quadrature.
    """

    __test__ = False  # not a pytest class

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    bound: float
    antiderivative: Callable[[np.ndarray], np.ndarray] | None = None
    mean_from_zero: Callable[[np.ndarray], np.ndarray] | None = None
    value_at_zero: float = field(init=False)
    value_at_one: float = field(init=False)

    def __post_init__(self):
        if not self.bound > 0:
            raise ValueError("sup-norm bound must be positive")
        object.__setattr__(self, "value_at_zero", float(self.evaluator(np.array([0.0]))[0]))
        object.__setattr__(self, "value_at_one", float(self.evaluator(np.array([1.0]))[0]))

    def __call__(self, y):
        return self.evaluator(np.asarray(y, dtype=float))

    def __repr__(self):
        return f"TestFunction({self.name!r})"

    def bin_averages(self, grid: Grid) -> np.ndarray:
        return _bin_averages(self, grid)

    def average_from_zero(self, x) -> np.ndarray:
        """``(1/x) int_0^x f(y) dy`` for ``x > 0`` (vectorised)."""
        x = np.asarray(x, dtype=float)
        if self.mean_from_zero is not None:
            return self.mean_from_zero(x)
        if self.antiderivative is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                avg = self.antiderivative(x) / x
            return np.where(x > 0, avg, self.value_at_zero)
        out = np.empty_like(x)
        flat, res = x.ravel(), out.ravel()
        for i, xi in enumerate(flat):
            if xi < 1e-6:
                # f is essentially linear on tiny intervals
                nodes = 0.5 * xi * (1.0 + _GL8_NODES)
                res[i] = float(np.dot(_GL8_WEIGHTS, self.evaluator(nodes)))
            else:
                val, _ = _integrate.quad(lambda y: float(self.evaluator(np.array([y]))[0]),
                                         0.0, xi, epsabs=1e-10, epsrel=1e-12, limit=200)
                res[i] = val / xi
        return out


_GL8_NODES, _GL8_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL8_WEIGHTS = _GL8_WEIGHTS / 2.0


@lru_cache(maxsize=256)
def _bin_averages(f: TestFunction, grid: Grid) -> np.ndarray:
    vals = f(grid.quadrature_nodes) @ _GL_WEIGHTS
    vals.flags.writeable = False
    return vals


def monomial(k: int) -> TestFunction:
    k = int(k)
    if k < 0:
        raise ValueError("monomial degree must be >= 0")
    if k == 0:
        ev = lambda y: np.ones_like(y, dtype=float)  # noqa: E731
    else:
        ev = lambda y: y**k  # noqa: E731
    return TestFunction(
        f"monomial({k})", ev, 1.0,
        antiderivative=lambda x: x ** (k + 1) / (k + 1),
        mean_from_zero=lambda x: np.asarray(x, float) ** k / (k + 1),
    )


def cosine(k: int) -> TestFunction:
    k = int(k)
    if k < 1:
        raise ValueError("cosine frequency must be >= 1")
    return TestFunction(
        f"cosine({k})",
        lambda y: np.cos(np.pi * k * y),
        1.0,
        antiderivative=lambda x: np.sin(np.pi * k * x) / (np.pi * k),
        # sinc keeps full relative accuracy as x -> 0
        mean_from_zero=lambda x: np.sinc(k * np.asarray(x, float)),
    )


def hat(a: float, b: float, c: float) -> TestFunction:
    """Piecewise-linear bump: 0 outside ``[a, c]``, peak 1 at ``b``."""
    a, b, c = float(a), float(b), float(c)
    if not (0.0 <= a <= b <= c <= 1.0) or a == c:
        raise ValueError(f"hat needs 0 <= a <= b <= c <= 1 with a < c, got {(a, b, c)}")
    if a == b and a > 0 or b == c and c < 1:
        raise ValueError("hat would be discontinuous inside [0, 1]")

    def ev(y):
        y = np.asarray(y, dtype=float)
        up = (y - a) / (b - a) if b > a else np.ones_like(y)
        down = (c - y) / (c - b) if c > b else np.ones_like(y)
        out = np.where(y <= b, up, down)
        return np.clip(np.where((y < a) | (y > c), 0.0, out), 0.0, 1.0)

    def anti(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        rise = 0.5 * (b - a)
        left = np.where(x <= a, 0.0, 0.5 * (np.minimum(x, b) - a) ** 2 / (b - a) if b > a else 0.0)
        if c > b:
            t = np.clip(x - b, 0.0, c - b)
            right = t - 0.5 * t**2 / (c - b)
        else:
            right = np.zeros_like(x)
        return np.where(x <= b, left, rise + right)

    return TestFunction(f"hat({a:g},{b:g},{c:g})", ev, 1.0, anti)


def custom(name: str, fn: Callable[[np.ndarray], np.ndarray], bound: float | None = None,
           antiderivative=None) -> TestFunction:
    """Wrap an arbitrary vectorised continuous function."""
    if bound is None:
        ys = np.linspace(0.0, 1.0, 10001)
        bound = float(np.max(np.abs(fn(ys)))) or 1.0
    return TestFunction(name, fn, bound, antiderivative)


@dataclass(frozen=True)
class TestFamily:
    """Finite surrogate for C[0, 1]; always contains the constant function."""

    __test__ = False

    functions: tuple[TestFunction, ...]

    def __post_init__(self):
        funcs = tuple(self.functions)
        if not funcs:
            raise ValueError("test family must be nonempty")
        names = [f.name for f in funcs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate test function names: {names}")
        if "monomial(0)" not in names:
            raise ValueError("test family must contain monomial(0)")
        object.__setattr__(self, "functions", funcs)

    def __iter__(self):
        return iter(self.functions)

    def __len__(self):
        return len(self.functions)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.functions]

    @classmethod
    def default(cls) -> "TestFamily":
        return cls(tuple(monomial(k) for k in range(9)) + tuple(cosine(k) for k in range(1, 5)))

    @classmethod
    def monomials(cls, max_degree: int = 8) -> "TestFamily":
        return cls(tuple(monomial(k) for k in range(max_degree + 1)))

    @classmethod
    def of(cls, *functions: TestFunction) -> "TestFamily":
        """Family from the given functions, adding ``monomial(0)`` if absent."""
        funcs = list(functions)
        if "monomial(0)" not in [f.name for f in funcs]:
            funcs.insert(0, monomial(0))
        return cls(tuple(funcs))


_SPEC_RE = re.compile(r"^\s*(monomial|cosine|hat)\s*\(([^)]*)\)\s*$")


def parse_test_function(spec: str) -> TestFunction:
    """``'monomial(3)'``, ``'cosine(2)'`` or ``'hat(0,0.1,0.2)'``."""
    m = _SPEC_RE.match(spec)
    if not m:
        raise ValueError(f"cannot parse test function {spec!r}")
    kind, args = m.group(1), [a for a in m.group(2).split(",") if a.strip()]
    try:
        if kind == "hat":
            if len(args) != 3:
                raise ValueError
            return hat(*map(float, args))
        if len(args) != 1 or float(args[0]) != int(float(args[0])):
            raise ValueError
        return (monomial if kind == "monomial" else cosine)(int(float(args[0])))
    except ValueError:
        raise ValueError(f"bad arguments in test function {spec!r}") from None


def near_zero_modulus(f: TestFunction, epsilon_min: float, samples: int = 65) -> float:
    """Sampled ``sup |f(y) - f(0)|`` over ``(0, epsilon_min]``.

    Bounds the error of integrating the near-zero bucket against ``f(0)``.
    """
    ys = np.concatenate([np.linspace(0.0, epsilon_min, samples)[1:],
                         np.geomspace(epsilon_min * 1e-6, epsilon_min, samples)])
    return float(np.max(np.abs(f(ys) - f.value_at_zero)))


# ---------------------------------------------------------------------------
# Hybrid measures
# ---------------------------------------------------------------------------


def _merge_atoms(x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if x.size == 0:
        return np.empty(0), np.empty(0)
    uniq, inv = np.unique(x, return_inverse=True)
    if uniq.size == x.size:
        order = np.argsort(x, kind="stable")
        return x[order], w[order]
    merged = np.zeros(uniq.size)
    np.add.at(merged, inv, w)
    return uniq, merged


class HybridMeasure:
    """Atoms + binned density + near-zero bucket, all nonnegative.

    Instances are immutable; arrays are exposed read-only.
    """

    def __init__(self, grid: Grid, atoms: Iterable[tuple[float, float]] | None = None,
                 bins: Sequence[float] | np.ndarray | None = None, near_zero_mass: float = 0.0):
        self.grid = grid
        pairs = list(atoms) if atoms is not None else []
        ax = np.array([float(p[0]) for p in pairs]) if pairs else np.empty(0)
        aw = np.array([float(p[1]) for p in pairs]) if pairs else np.empty(0)
        self._init_arrays(ax, aw, bins, near_zero_mass)

    @classmethod
    def _from_arrays(cls, grid, ax, aw, bins, near_zero_mass) -> "HybridMeasure":
        obj = cls.__new__(cls)
        obj.grid = grid
        obj._init_arrays(np.asarray(ax, float), np.asarray(aw, float), bins, near_zero_mass)
        return obj

    def _init_arrays(self, ax, aw, bins, near_zero_mass):
        n = self.grid.bin_count
        if bins is None:
            b = np.zeros(n)
        else:
            b = np.array(bins, dtype=float)
            if b.shape != (n,):
                raise GridMismatchError(f"expected {n} bin masses, got shape {b.shape}")
        if ax.size:
            if np.any(~np.isfinite(ax)) or np.any((ax < 0.0) | (ax > 1.0)):
                raise ValueError("atom locations must lie in [0, 1]")
            if np.any(~np.isfinite(aw)) or np.any(aw < 0.0):
                raise ValueError("atom weights must be finite and nonnegative")
        if np.any(~np.isfinite(b)) or np.any(b < 0.0):
            raise ValueError("bin masses must be finite and nonnegative")
        nz = float(near_zero_mass)
        if not (nz >= 0.0 and math.isfinite(nz)):
            raise ValueError("near_zero_mass must be finite and nonnegative")
        ax, aw = _merge_atoms(ax, aw)
        for arr in (ax, aw, b):
            arr.flags.writeable = False
        self.atom_x, self.atom_w, self.bins, self.near_zero_mass = ax, aw, b, nz

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, grid: Grid) -> "HybridMeasure":
        return cls(grid)

    @classmethod
    def dirac(cls, x: float, grid: Grid, weight: float = 1.0) -> "HybridMeasure":
        return cls(grid, [(x, weight)])

    @classmethod
    def uniform(cls, grid: Grid) -> "HybridMeasure":
        """Lebesgue measure on [0, 1]."""
        return cls(grid, bins=grid.widths, near_zero_mass=grid.epsilon_min)

    # -- views ----------------------------------------------------------------

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.atom_x.tolist(), self.atom_w.tolist()))

    @cached_property
    def total_mass(self) -> float:
        return float(self.atom_w.sum() + self.bins.sum() + self.near_zero_mass)

    @cached_property
    def _cum_bins(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.bins)])

    def atom_mass(self, x: float) -> float:
        hit = self.atom_x == x
        return float(self.atom_w[hit].sum())

    def continuous_cdf(self, x) -> np.ndarray:
        """Mass of the non-atomic part on ``(0, x]``.

        The near-zero bucket is treated as spread uniformly over
        ``(0, epsilon_min]`` when ``x`` cuts through it.
        """
        g = self.grid
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        j = g.bin_index(x)
        jj = np.clip(j, 0, g.bin_count - 1)
        e = g.edges
        inside = self._cum_bins[jj] + self.bins[jj] * ((x - e[jj]) / g.widths[jj])
        below = self.near_zero_mass * (x / g.epsilon_min)
        return np.where(j < 0, below, self.near_zero_mass + inside)

    def __repr__(self):
        return (f"HybridMeasure(atoms={self.atoms!r}, bin_mass={self.bins.sum():.6g}, "
                f"near_zero_mass={self.near_zero_mass:.6g}, grid={self.grid})")

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "atoms": [[x, w] for x, w in self.atoms],
            "bins": self.bins.tolist(),
            "near_zero_mass": self.near_zero_mass,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HybridMeasure":
        unknown = set(data) - {"grid", "atoms", "bins", "near_zero_mass"}
        if unknown:
            raise ValueError(f"unknown measure keys: {sorted(unknown)}")
        grid = Grid(**data["grid"])
        return cls(grid, [tuple(a) for a in data.get("atoms", [])],
                   data.get("bins"), data.get("near_zero_mass", 0.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "HybridMeasure":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def integrate(mu: HybridMeasure, f: TestFunction) -> float:
    """``int f dmu``: atoms exactly, bins by 4-point Gauss-Legendre, bucket at f(0)."""
    total = float(np.dot(mu.bins, f.bin_averages(mu.grid)))
    if mu.atom_x.size:
        total += float(np.dot(mu.atom_w, f(mu.atom_x)))
    return total + mu.near_zero_mass * f.value_at_zero


def mass_of_interval(mu: HybridMeasure, a: float, b: float,
                     include_a: bool = False, include_b: bool = False) -> float:
    """Mass of the interval between ``a`` and ``b`` with the given endpoint flags."""
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise ValueError(f"interval endpoints must lie in [0, 1], got ({a}, {b})")
    if a > b:
        raise ValueError(f"empty interval orientation: a={a} > b={b}")
    ax = mu.atom_x
    lo_ok = ax >= a if include_a else ax > a
    hi_ok = ax <= b if include_b else ax < b
    atom_part = float(mu.atom_w[lo_ok & hi_ok].sum())
    if a == b:
        return atom_part
    cdf = mu.continuous_cdf(np.array([a, b]))
    return atom_part + max(float(cdf[1] - cdf[0]), 0.0)


def mix(terms: Sequence[tuple[float, HybridMeasure]]) -> HybridMeasure:
    """Nonnegative linear combination of measures sharing a grid."""
    terms = list(terms)
    if not terms:
        raise ValueError("mix needs at least one term")
    grid = terms[0][1].grid
    bins = np.zeros(grid.bin_count)
    nz = 0.0
    xs, ws = [], []
    for weight, mu in terms:
        if mu.grid != grid:
            raise GridMismatchError(f"cannot mix measures on {mu.grid} and {grid}")
        weight = float(weight)
        if weight < 0 or not math.isfinite(weight):
            raise ValueError("mixing weights must be finite and nonnegative")
        bins += weight * mu.bins
        nz += weight * mu.near_zero_mass
        xs.append(mu.atom_x)
        ws.append(weight * mu.atom_w)
    return HybridMeasure._from_arrays(grid, np.concatenate(xs), np.concatenate(ws), bins, nz)


def project_cdf_to_grid(cdf: Callable[[np.ndarray], np.ndarray],
                        atom_list: Iterable[tuple[float, float]], grid: Grid,
                        rtol: float = 1e-12) -> HybridMeasure:
    """Bin-mass-conserving projection of a distribution onto ``grid``.

    ``cdf(t)`` is the mass of ``[0, t]`` including the listed atoms, which
    are kept exactly and subtracted from the bin they fall into.
    """
    atoms = [(float(x), float(w)) for x, w in atom_list]
    vals = np.asarray(cdf(grid.edges), dtype=float)
    if vals.shape != grid.edges.shape or np.any(~np.isfinite(vals)):
        raise ValueError("cdf must return finite values for every grid edge")
    scale = max(1.0, float(np.max(np.abs(vals))))
    tol = rtol * scale
    diffs = np.diff(vals)
    if np.any(diffs < -tol):
        raise ValueError("cdf samples decrease; not a distribution function")
    near_zero = float(vals[0])
    if atoms:
        ax = np.array([x for x, _ in atoms])
        aw = np.array([w for _, w in atoms])
        idx = grid.bin_index(ax)
        in_bins = idx >= 0
        np.subtract.at(diffs, idx[in_bins], aw[in_bins])
        near_zero -= float(aw[~in_bins].sum())
    if np.any(diffs < -tol) or near_zero < -tol:
        raise ValueError("listed atoms exceed the mass the cdf assigns to their bins")
    diffs = np.maximum(diffs, 0.0)
    return HybridMeasure(grid, atoms, diffs, max(near_zero, 0.0))


def random_measure(grid: Grid, rng: np.random.Generator, *, max_atoms: int = 3) -> HybridMeasure:
    """Random hybrid probability measure, for property tests and searches.

    Mass is split at random between atoms (possibly at 0 or 1), a density
    on a random window of bins, and the near-zero bucket.
    """
    parts = rng.dirichlet(np.ones(3))
    if rng.random() < 0.25:
        parts[2] = 0.0
    n_atoms = int(rng.integers(0, max_atoms + 1))
    if n_atoms == 0:
        parts[0] = 0.0
    if parts.sum() == 0:
        parts[1] = 1.0
    parts = parts / parts.sum()

    atoms = []
    if n_atoms:
        locs = rng.random(n_atoms)
        special = rng.random(n_atoms)
        locs = np.where(special < 0.15, 0.0, np.where(special > 0.85, 1.0, locs))
        w = rng.dirichlet(np.ones(n_atoms)) * parts[0]
        atoms = list(zip(locs.tolist(), w.tolist()))

    n = grid.bin_count
    lo = int(rng.integers(0, n))
    hi = int(rng.integers(lo + 1, n + 1))
    raw = np.zeros(n)
    if rng.random() < 0.5:
        raw[lo:hi] = rng.random(hi - lo)
    else:
        # smooth density in y rather than in bin index
        mids = grid.midpoints[lo:hi]
        raw[lo:hi] = (1.0 + np.sin(rng.uniform(1, 20) * mids + rng.uniform(0, 6))) * grid.widths[lo:hi]
    if raw.sum() == 0:
        raw[lo] = 1.0
    bins = raw / raw.sum() * parts[1]
    # exact normalisation: fold the rounding residue into the largest part
    mu = HybridMeasure(grid, atoms, bins, parts[2])
    resid = 1.0 - mu.total_mass
    k = int(np.argmax(bins))
    if bins[k] + resid > 0:
        bins = bins.copy()
        bins[k] += resid
        mu = HybridMeasure(grid, atoms, bins, parts[2])
    return mu
