"""Transition functions ``p(x, E)`` on the Borel sets of [0, 1].

Every kernel provides

* ``transition(x, grid)`` -- ``p(x, .)`` as a :class:`HybridMeasure`,
* ``transition_prob(x, a, b)`` -- exact ``p(x, (a, b))``, no grid,
* ``pushforward_cdf(mu, t)`` -- exact ``(A mu)((0, t])`` given ``mu``,
* ``apply(mu)`` -- ``A mu`` re-projected onto ``mu.grid``,
* ``apply_T(f, x)`` -- ``int f(y) p(x, dy)``,
* ``pushforward_integral(mu, f)`` -- ``int f d(A mu)`` without projection,
* ``sample(x, u)`` -- one vectorised step of the chain.

Pushforward CDFs use the half-open convention ``(0, t]``; mass sitting
exactly at 0 is only ever carried by atoms.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .measure import (
    Grid,
    GridMismatchError,
    HybridMeasure,
    TestFunction,
    integrate,
    mass_of_interval,
    project_cdf_to_grid,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)
_TINY = np.nextafter(0.0, 1.0)


def _check_point(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
        raise ValueError(f"state must lie in [0, 1], got {x!r}")
    return arr


def _check_interval(a: float, b: float) -> None:
    if not (0.0 <= a <= b <= 1.0):
        raise ValueError(f"malformed interval ({a}, {b}); need 0 <= a <= b <= 1")


def _contains(a, b, include_a, include_b, pt) -> bool:
    lo = pt >= a if include_a else pt > a
    hi = pt <= b if include_b else pt < b
    return bool(lo and hi)


def _gl_integral(lo: np.ndarray, hi: np.ndarray, fn) -> float:
    """Sum over intervals of 4-point Gauss-Legendre integrals of ``fn``."""
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_NODES[None, :]
    return float(np.sum(half * (fn(nodes) @ _GL_WEIGHTS)))


class Kernel(ABC):
    """Transition function with closed-form pushforwards."""

    name: str = "kernel"
    #: uniforms consumed by :meth:`sample` per state per step
    uniforms_per_step: int = 0

    # -- pushforwards -------------------------------------------------------

    @abstractmethod
    def image_atoms(self, mu: HybridMeasure) -> tuple[np.ndarray, np.ndarray]:
        """Atoms of ``A mu`` as ``(locations, weights)``."""

    @abstractmethod
    def continuous_cdf(self, mu: HybridMeasure, t) -> np.ndarray:
        """Mass of the non-atomic part of ``A mu`` on ``(0, t]``."""

    def pushforward_cdf(self, mu: HybridMeasure, t):
        t_arr = _check_point(t)
        ax, aw = self.image_atoms(mu)
        out = np.asarray(self.continuous_cdf(mu, t_arr), dtype=float)
        if ax.size:
            hit = (ax[None, :] > 0.0) & (ax[None, :] <= np.atleast_1d(t_arr)[:, None])
            out = out + (hit * aw[None, :]).sum(axis=1).reshape(out.shape)
        return float(out) if np.ndim(t) == 0 else out

    def apply(self, mu: HybridMeasure) -> HybridMeasure:
        ax, aw = self.image_atoms(mu)
        cont = project_cdf_to_grid(lambda e: self.continuous_cdf(mu, e), [], mu.grid)
        return HybridMeasure._from_arrays(mu.grid, ax, aw, cont.bins, cont.near_zero_mass)

    def transition(self, x: float, grid: Grid) -> HybridMeasure:
        _check_point(x)
        return self.apply(HybridMeasure.dirac(float(x), grid))

    @abstractmethod
    def transition_prob(self, x: float, a: float, b: float,
                        include_a: bool = False, include_b: bool = False) -> float:
        """Exact ``p(x, I)`` for the interval ``I`` between ``a`` and ``b``."""

    # -- dual side ----------------------------------------------------------

    @abstractmethod
    def apply_T(self, f: TestFunction, x):
        """``Tf(x) = int f(y) p(x, dy)``, vectorised in ``x``."""

    @abstractmethod
    def T_right_limit_at_zero(self, f: TestFunction) -> float:
        """``lim_{x -> 0+} Tf(x)``: the value the near-zero bucket integrates against."""

    @abstractmethod
    def pushforward_integral(self, mu: HybridMeasure, f: TestFunction) -> float:
        """``int f d(A mu)`` evaluated from the exact image, with no grid projection."""

    # -- sampling -----------------------------------------------------------

    @abstractmethod
    def sample(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One step from states ``x`` using uniforms ``u`` of shape ``(len(x), k)``.

        Returns the new states and a mask of states produced by a
        deterministic branch (these are deposited as atoms).
        """

    @abstractmethod
    def describe(self) -> dict:
        """Run-config JSON descriptor."""

    def __repr__(self):
        return f"{type(self).__name__}()"


# ---------------------------------------------------------------------------
# Shrinking uniform kernel: p(x, .) = U(0, x) for x > 0, p(0, .) = delta_1
# ---------------------------------------------------------------------------


def _inverse_tail(mu: HybridMeasure, t: np.ndarray) -> np.ndarray:
    """``int_{(t, 1]} x^{-1} mu(dx)`` over the part of ``mu`` away from 0."""
    g = mu.grid
    e = g.edges
    n = g.bin_count
    dens = mu.bins / g.widths
    full = dens * g.log_steps
    tail = np.concatenate([np.cumsum(full[::-1])[::-1], [0.0]])
    j = g.bin_index(t)
    jj = np.clip(j, 0, n - 1)
    safe_t = np.where(t > 0.0, t, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        in_bin = tail[jj + 1] + dens[jj] * np.log(e[jj + 1] / safe_t)
        below = tail[0] + (mu.near_zero_mass / g.epsilon_min) * np.log(g.epsilon_min / safe_t)
    out = np.where(j < 0, below, in_bin)
    pos = mu.atom_x > 0.0
    if np.any(pos):
        ax = mu.atom_x[pos]
        inv = mu.atom_w[pos] / ax
        suffix = np.concatenate([np.cumsum(inv[::-1])[::-1], [0.0]])
        out = out + suffix[np.searchsorted(ax, t, side="right")]
    return out


class ShrinkingUniform(Kernel):
    """Uniform jump into ``(0, x)``; from 0 the chain jumps to 1."""

    name = "shrinking_uniform"
    uniforms_per_step = 1

    def image_atoms(self, mu):
        w0 = mu.atom_mass(0.0)
        if w0 > 0:
            return np.array([1.0]), np.array([w0])
        return np.empty(0), np.empty(0)

    def continuous_cdf(self, mu, t):
        t = np.asarray(t, dtype=float)
        pos = mu.atom_x > 0.0
        below = mu.continuous_cdf(t)
        if np.any(pos):
            below = below + np.cumsum(np.concatenate([[0.0], mu.atom_w[pos]]))[
                np.searchsorted(mu.atom_x[pos], t, side="right")]
        out = below + t * _inverse_tail(mu, t)
        return np.where(t > 0.0, out, 0.0)

    def transition_prob(self, x, a, b, include_a=False, include_b=False):
        _check_point(x)
        _check_interval(a, b)
        if x == 0.0:
            return 1.0 if _contains(a, b, include_a, include_b, 1.0) else 0.0
        return max(0.0, min(b, x) - max(a, 0.0)) / x

    def apply_T(self, f, x):
        x = _check_point(x)
        safe = np.where(x > 0.0, x, 1.0)
        out = np.where(x > 0.0, f.average_from_zero(safe), f.value_at_one)
        return float(out) if out.ndim == 0 else out

    def T_right_limit_at_zero(self, f):
        return f.value_at_zero

    def pushforward_integral(self, mu, f):
        g = mu.grid
        eps = g.epsilon_min
        total = mu.atom_mass(0.0) * f.value_at_one
        total += float(self.continuous_cdf(mu, np.array([eps]))[0]) * f.value_at_zero
        # density of the image on (eps, 1] is the inverse tail; it jumps at atoms
        inner = mu.atom_x[(mu.atom_x > eps) & (mu.atom_x < 1.0)]
        cuts = np.union1d(g.edges, inner)
        lo, hi = cuts[:-1], cuts[1:]
        total += _gl_integral(lo, hi, lambda y: f(y) * _inverse_tail(mu, y.ravel()).reshape(y.shape))
        return total

    def sample(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float).reshape(x.shape[0], -1)[:, 0]
        at_zero = x == 0.0
        nxt = x * u
        # float underflow must not send the chain to the absorbing-jump state 0
        nxt = np.where((nxt == 0.0) & ~at_zero, _TINY, nxt)
        return np.where(at_zero, 1.0, nxt), at_zero

    def describe(self):
        return {"kernel": self.name}


# ---------------------------------------------------------------------------
# Deterministic maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MapPiece:
    """Strictly monotone continuous branch on ``[lo, hi]``.

    ``kind='power'``: ``y = a * x**b`` (``a, b > 0``);
    ``kind='affine'``: ``y = a * x + b`` (``a != 0``).
    """

    lo: float
    hi: float
    kind: str
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise ValueError(f"bad piece domain [{self.lo}, {self.hi}]")
        if self.kind == "power":
            if not (self.a > 0 and self.b > 0):
                raise ValueError("power piece needs a > 0 and b > 0")
        elif self.kind == "affine":
            if self.a == 0:
                raise ValueError("affine piece must have nonzero slope")
        else:
            raise ValueError(f"unknown piece kind {self.kind!r}")
        y0, y1 = self(np.array([self.lo, self.hi]))
        if min(y0, y1) < 0.0 or max(y0, y1) > 1.0:
            raise ValueError(f"piece image [{min(y0, y1)}, {max(y0, y1)}] leaves [0, 1]")

    @property
    def increasing(self) -> bool:
        return self.kind == "power" or self.a > 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "power":
            return self.a * x**self.b
        return self.a * x + self.b

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "power":
            return (y / self.a) ** (1.0 / self.b)
        return (y - self.b) / self.a

    def inverse_slope(self, y):
        """``|dx/dy|`` of the inverse branch."""
        y = np.asarray(y, dtype=float)
        if self.kind == "power":
            return (y / self.a) ** (1.0 / self.b - 1.0) / (self.a * self.b)
        return np.full_like(y, 1.0 / abs(self.a))

    def to_dict(self) -> dict:
        return {"domain": [self.lo, self.hi], self.kind: [self.a, self.b]}


class DeterministicMap(Kernel):
    """``p(x, .) = delta_{F(x)}`` for a piecewise monotone map ``F``.

    Pieces are tried in order; ``jumps`` maps isolated points to values
    that override the pieces there.
    """

    uniforms_per_step = 0

    def __init__(self, pieces: Sequence[MapPiece], jumps: dict[float, float] | None = None,
                 name: str = "deterministic"):
        self.pieces = tuple(pieces)
        self.jumps = {float(k): float(v) for k, v in (jumps or {}).items()}
        self.name = name
        if not self.pieces:
            raise ValueError("deterministic map needs at least one piece")
        for x, y in self.jumps.items():
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise ValueError(f"jump point {x} -> {y} outside [0, 1]")
        spans = sorted((p.lo, p.hi) for p in self.pieces)
        cursor = 0.0
        for lo, hi in spans:
            if lo > cursor:
                raise ValueError(f"map pieces leave a gap ({cursor}, {lo})")
            if lo < cursor:
                raise ValueError("map pieces overlap")
            cursor = hi
        if cursor < 1.0:
            raise ValueError(f"map pieces leave a gap ({cursor}, 1]")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, np.nan)
        for p in reversed(self.pieces):
            inside = (x >= p.lo) & (x <= p.hi)
            out = np.where(inside, p(np.clip(x, p.lo, p.hi)), out)
        for px, py in self.jumps.items():
            out = np.where(x == px, py, out)
        return out

    def image_atoms(self, mu):
        if mu.atom_x.size == 0:
            return np.empty(0), np.empty(0)
        return self(mu.atom_x), mu.atom_w.copy()

    def continuous_cdf(self, mu, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for p in self.pieces:
            y0, y1 = float(p(p.lo)), float(p(p.hi))
            if p.increasing:
                cut = np.clip(p.inverse(np.clip(t, y0, y1)), p.lo, p.hi)
                out = out + mu.continuous_cdf(cut) - mu.continuous_cdf(p.lo)
            else:
                cut = np.clip(p.inverse(np.clip(t, y1, y0)), p.lo, p.hi)
                out = out + mu.continuous_cdf(p.hi) - mu.continuous_cdf(cut)
        return np.maximum(out, 0.0)

    def transition_prob(self, x, a, b, include_a=False, include_b=False):
        _check_point(x)
        _check_interval(a, b)
        return 1.0 if _contains(a, b, include_a, include_b, float(self(x))) else 0.0

    def apply_T(self, f, x):
        x = _check_point(x)
        out = f(self(x))
        return float(out) if np.ndim(out) == 0 else out

    def _value_at_zero_plus(self) -> float:
        for p in self.pieces:
            if p.lo == 0.0:
                return float(p(0.0))
        raise AssertionError("pieces cover 0")  # guaranteed by __init__

    def T_right_limit_at_zero(self, f):
        return float(f(np.array([self._value_at_zero_plus()]))[0])

    def pushforward_integral(self, mu, f):
        g = mu.grid
        total = float(np.dot(mu.atom_w, f(self(mu.atom_x)))) if mu.atom_x.size else 0.0
        total += mu.near_zero_mass * self.T_right_limit_at_zero(f)
        dens = mu.bins / g.widths
        e = g.edges
        for p in self.pieces:
            u = np.maximum(e[:-1], p.lo)
            v = np.minimum(e[1:], p.hi)
            keep = (v > u) & (dens > 0)
            if not np.any(keep):
                continue
            ya, yb = p(u[keep]), p(v[keep])
            lo, hi = np.minimum(ya, yb), np.maximum(ya, yb)
            d = dens[keep]
            # integrate in the image variable so this route differs from Tf
            half = 0.5 * (hi - lo)
            nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_NODES[None, :]
            vals = f(nodes) * p.inverse_slope(nodes)
            total += float(np.sum(d * half * (vals @ _GL_WEIGHTS)))
        return total

    def sample(self, x, u=None):
        x = np.asarray(x, dtype=float)
        return self(x), np.ones(x.shape, dtype=bool)

    def describe(self):
        return {"kernel": "deterministic", "pieces": [p.to_dict() for p in self.pieces],
                "jumps": [[x, y] for x, y in self.jumps.items()]}

    def __repr__(self):
        return f"DeterministicMap(name={self.name!r}, pieces={len(self.pieces)})"


class SquaringMap(DeterministicMap):
    """``x -> x**2`` on ``[0, 1)`` and ``1 -> 0``."""

    def __init__(self):
        super().__init__([MapPiece(0.0, 1.0, "power", 1.0, 2.0)], {1.0: 0.0}, name="squaring_map")

    def describe(self):
        return {"kernel": "squaring_map"}

    def __repr__(self):
        return "SquaringMap()"


# ---------------------------------------------------------------------------
# Grid-stochastic kernels
# ---------------------------------------------------------------------------


class GridStochastic(Kernel):
    """Row-stochastic matrix over the bins of a grid plus designated atoms.

    State ``i < N`` is bin ``i`` (target mass spread uniformly over the
    bin); state ``N + k`` is the point ``atom_locations[k]``.  Points in
    ``[0, epsilon_min]`` that are not designated atoms, and the near-zero
    bucket, use row 0.
    """

    name = "grid_stochastic"
    uniforms_per_step = 2

    def __init__(self, grid: Grid, matrix, atom_locations: Sequence[float] = (),
                 source: str | None = None):
        self.grid = grid
        self.atom_locations = np.array([float(a) for a in atom_locations])
        p = np.array(matrix, dtype=float)
        size = grid.bin_count + self.atom_locations.size
        if p.shape != (size, size):
            raise ValueError(f"transition matrix must be {size}x{size}, got {p.shape}")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("transition matrix entries must be finite and nonnegative")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition matrix rows must sum to 1 within 1e-12")
        if np.any((self.atom_locations < 0) | (self.atom_locations > 1)):
            raise ValueError("atom locations must lie in [0, 1]")
        if np.unique(self.atom_locations).size != self.atom_locations.size:
            raise ValueError("atom locations must be distinct")
        p.flags.writeable = False
        self.matrix = p
        self.source = source
        flat = (np.cumsum(p, axis=1) + np.arange(size)[:, None]).ravel()
        flat.flags.writeable = False
        self._flat_cum = flat

    @classmethod
    def from_csv(cls, path: str | Path, grid: Grid, atom_locations: Sequence[float] = ()):
        matrix = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(grid, matrix, atom_locations, source=str(path))

    def state_index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = np.clip(self.grid.bin_index(x), 0, self.grid.bin_count - 1)
        for k, loc in enumerate(self.atom_locations):
            idx = np.where(x == loc, self.grid.bin_count + k, idx)
        return idx

    def _check_grid(self, mu):
        if mu.grid != self.grid:
            raise GridMismatchError(f"kernel grid {self.grid} differs from measure grid {mu.grid}")

    def apply(self, mu):
        self._check_grid(mu)
        n = self.grid.bin_count
        v = np.zeros(self.matrix.shape[0])
        v[:n] = mu.bins
        v[0] += mu.near_zero_mass
        if mu.atom_x.size:
            np.add.at(v, self.state_index(mu.atom_x), mu.atom_w)
        out = np.maximum(v @ self.matrix, 0.0)
        return HybridMeasure._from_arrays(self.grid, self.atom_locations, out[n:], out[:n], 0.0)

    def image_atoms(self, mu):
        img = self.apply(mu)
        return img.atom_x.copy(), img.atom_w.copy()

    def continuous_cdf(self, mu, t):
        return self.apply(mu).continuous_cdf(t)

    def transition_prob(self, x, a, b, include_a=False, include_b=False):
        _check_point(x)
        _check_interval(a, b)
        return mass_of_interval(self.transition(x, self.grid), a, b, include_a, include_b)

    def _T_states(self, f):
        vals = np.concatenate([f.bin_averages(self.grid), f(self.atom_locations)])
        return self.matrix @ vals

    def apply_T(self, f, x):
        x = _check_point(x)
        out = self._T_states(f)[self.state_index(x)]
        return float(out) if out.ndim == 0 else out

    def T_right_limit_at_zero(self, f):
        return float(self._T_states(f)[0])

    def pushforward_integral(self, mu, f):
        # the projection is exact for this kernel
        return integrate(self.apply(mu), f)

    def sample(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float).reshape(x.shape[0], -1)
        rows = self.state_index(x)
        size = self.matrix.shape[0]
        pos = np.searchsorted(self._flat_cum, rows + u[:, 0], side="right")
        target = np.clip(pos - rows * size, 0, size - 1)
        # guard against rounding past the last positive entry of a row
        while True:
            bad = self.matrix[rows, target] == 0.0
            if not np.any(bad):
                break
            target = np.where(bad, target - 1, target)
        n = self.grid.bin_count
        is_atom = target >= n
        tb = np.minimum(target, n - 1)
        in_bin = self.grid.edges[tb] + u[:, 1] * self.grid.widths[tb]
        atom_val = self.atom_locations[np.maximum(target - n, 0)] if self.atom_locations.size else in_bin
        return np.where(is_atom, atom_val, in_bin), is_atom

    def describe(self):
        out = {"kernel": "grid_stochastic", "matrix_path": self.source}
        if self.atom_locations.size:
            out["atoms"] = self.atom_locations.tolist()
        return out

    def __repr__(self):
        return f"GridStochastic(states={self.matrix.shape[0]}, source={self.source!r})"


# ---------------------------------------------------------------------------
# module-level API
# ---------------------------------------------------------------------------


def transition(kernel: Kernel, x: float, grid: Grid) -> HybridMeasure:
    return kernel.transition(x, grid)


def transition_prob(kernel: Kernel, x: float, a: float, b: float,
                    include_a: bool = False, include_b: bool = False) -> float:
    return kernel.transition_prob(x, a, b, include_a, include_b)


def pushforward_cdf(kernel: Kernel, mu: HybridMeasure, t):
    return kernel.pushforward_cdf(mu, t)


def _piece_from_dict(d: dict) -> MapPiece:
    keys = set(d)
    kinds = keys & {"power", "affine"}
    if "domain" not in keys or len(kinds) != 1 or keys - {"domain", "power", "affine"}:
        raise ValueError(f"bad map piece {d!r}; expected domain plus power or affine")
    kind = kinds.pop()
    lo, hi = d["domain"]
    a, b = d[kind]
    return MapPiece(float(lo), float(hi), kind, float(a), float(b))


def kernel_from_config(desc: dict, grid: Grid, base_dir: str | Path | None = None) -> Kernel:
    """Build a kernel from its run-config descriptor."""
    if not isinstance(desc, dict) or "kernel" not in desc:
        raise ValueError("kernel descriptor must be an object with a 'kernel' key")
    kind = desc["kernel"]
    allowed = {
        "shrinking_uniform": {"kernel"},
        "squaring_map": {"kernel"},
        "deterministic": {"kernel", "pieces", "jumps"},
        "grid_stochastic": {"kernel", "matrix_path", "atoms"},
    }
    if kind not in allowed:
        raise ValueError(f"unknown kernel {kind!r}")
    extra = set(desc) - allowed[kind]
    if extra:
        raise ValueError(f"unknown keys for kernel {kind!r}: {sorted(extra)}")
    if kind == "shrinking_uniform":
        return ShrinkingUniform()
    if kind == "squaring_map":
        return SquaringMap()
    if kind == "deterministic":
        pieces = [_piece_from_dict(p) for p in desc.get("pieces", [])]
        jumps = {float(x): float(y) for x, y in desc.get("jumps", [])}
        return DeterministicMap(pieces, jumps)
    path = Path(desc.get("matrix_path") or "")
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    if not path.is_file():
        raise ValueError(f"transition matrix file not found: {path}")
    try:
        return GridStochastic.from_csv(path, grid, desc.get("atoms", []))
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot load transition matrix {path}: {exc}") from None


