"""Weak-topology diagnostics for Cesaro means.

The central check is :func:`pfa_signature`: Cesaro means that converge
against every test function (weak, ``tau_C``) while some open interval
keeps a mass gap (no setwise, ``tau_B``, convergence).  For a chain with
a countably additive limit that can only happen when invariant purely
finitely additive measures sit next to the limit.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .kernel import Kernel
from .measure import (
    Grid,
    HybridMeasure,
    TestFamily,
    TestFunction,
    integrate,
    mass_of_interval,
    mix,
    near_zero_modulus,
)
from .operator import iterate

DEFAULT_EPSILONS = (1e-9, 1e-6, 1e-3, 1e-2, 1e-1)
SCHEMA_VERSION = 1


def weak_distance(mu: HybridMeasure, nu: HybridMeasure, family: TestFamily) -> float:
    """``max_f |int f dmu - int f dnu| / sup|f|`` over the family."""
    return max(abs(integrate(mu, f) - integrate(nu, f)) / f.bound for f in family)


def invariance_residual(kernel: Kernel, mu: HybridMeasure, family: TestFamily,
                        route: str = "exact") -> float:
    """``max_f |int f d(A mu) - int f dmu| / sup|f|``.

    ``route='exact'`` integrates against the exact image of ``mu``;
    ``route='grid'`` uses the grid projection of ``A mu`` and so also
    carries its in-bin flattening error (about 2e-6 on the default grid).
    """
    if route == "grid":
        return weak_distance(kernel.apply(mu), mu, family)
    if route != "exact":
        raise ValueError(f"unknown route {route!r}")
    return max(abs(kernel.pushforward_integral(mu, f) - integrate(mu, f)) / f.bound for f in family)


def escape_profile(mu: HybridMeasure, epsilons: Sequence[float]) -> list[float]:
    """``mu((0, eps))`` for each ``eps``."""
    eps = list(epsilons)
    if any(b <= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly increasing")
    if any(not (0.0 < e < 1.0) for e in eps):
        raise ValueError("epsilons must lie in (0, 1)")
    return [mass_of_interval(mu, 0.0, e) for e in eps]


def witness_gap(lambda_n: HybridMeasure, target: HybridMeasure, a: float, b: float) -> float:
    """``lambda_n((a, b)) - target((a, b))`` on the open interval."""
    return mass_of_interval(lambda_n, a, b) - mass_of_interval(target, a, b)


# ---------------------------------------------------------------------------
# Feller scan
# ---------------------------------------------------------------------------


def one_sided_limit(g, x, direction: int, radius, q: float = 0.5, terms: int = 6) -> np.ndarray:
    """Limit of ``g`` at ``x`` from one side.

    Samples ``g(x + direction * radius * q**j)`` for ``j < terms`` and
    removes the first- and second-order terms by Richardson extrapolation.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    radius = np.broadcast_to(np.asarray(radius, dtype=float), x.shape)
    h = radius[:, None] * q ** np.arange(terms)[None, :]
    vals = np.asarray(g(x[:, None] + direction * h), dtype=float)
    r1 = (vals[:, 1:] - q * vals[:, :-1]) / (1.0 - q)
    r2 = (r1[:, 1:] - q**2 * r1[:, :-1]) / (1.0 - q**2)
    return r2[:, -1]


def feller_scan(kernel: Kernel, f: TestFunction, grid: Grid, suspects: Sequence[float] = (),
                tol: float = 1e-4, radius: float = 1e-3) -> list[tuple[float, float]]:
    """Points where ``Tf`` differs from its one-sided limits by more than ``tol``.

    Checked: the right limit at 0, the left limit at 1, and both limits at
    every interior grid edge and every extra ``suspects`` point.
    """
    g = lambda x: kernel.apply_T(f, x)  # noqa: E731
    found: list[tuple[float, float]] = []

    g0 = float(g(np.array([0.0]))[0])
    jump0 = abs(g0 - one_sided_limit(g, 0.0, +1, radius)[0])
    if jump0 > tol:
        found.append((0.0, float(jump0)))

    interior = np.union1d(grid.edges[(grid.edges > 0) & (grid.edges < 1)],
                          np.asarray([s for s in suspects if 0 < s < 1], dtype=float))
    if interior.size:
        r = np.minimum(radius, np.minimum(interior, 1.0 - interior) / 2.0)
        gx = np.asarray(g(interior), dtype=float)
        left = one_sided_limit(g, interior, -1, r)
        right = one_sided_limit(g, interior, +1, r)
        jumps = np.maximum(np.abs(gx - left), np.abs(gx - right))
        for x, j in zip(interior[jumps > tol], jumps[jumps > tol]):
            found.append((float(x), float(j)))

    g1 = float(g(np.array([1.0]))[0])
    jump1 = abs(g1 - one_sided_limit(g, 1.0, -1, radius)[0])
    if jump1 > tol:
        found.append((1.0, float(jump1)))
    return found


def feller_scan_family(kernel: Kernel, family: TestFamily, grid: Grid, **kw) -> dict[str, list]:
    return {f.name: feller_scan(kernel, f, grid, **kw) for f in family}


# ---------------------------------------------------------------------------
# Convergence report
# ---------------------------------------------------------------------------


class Verdict(str, Enum):
    CONVERGES_WEAKLY = "ConvergesWeakly"
    NO_TREND = "NoTrend"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class ConvergenceReport:
    kernel: dict
    eta: str
    candidate: str
    n_max: int
    family: list[str]
    witnesses: list[tuple[float, float]]
    epsilons: list[float]
    weak_distance: list[float]
    witness_gaps: list[list[float]]  # [n][witness]
    escape: list[list[float]]  # [n][epsilon]
    atom_at_zero: list[float]
    feller: list[tuple[float, float]]
    weak_slope: float
    verdict: Verdict
    pfa_signature: bool
    weak_threshold: float
    witness_threshold: float
    near_zero_modulus: dict[str, float] = field(default_factory=dict)

    @property
    def converges(self) -> bool:
        return self.verdict is Verdict.CONVERGES_WEAKLY

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        d["verdict"] = self.verdict.value
        d["witnesses"] = [list(w) for w in self.witnesses]
        d["feller"] = [list(p) for p in self.feller]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "weak_distance"]
                   + [f"gap_{i + 1}" for i in range(len(self.witnesses))]
                   + [f"escape_{i + 1}" for i in range(len(self.epsilons))])
        for n, (wd, gaps, esc) in enumerate(zip(self.weak_distance, self.witness_gaps, self.escape), 1):
            w.writerow([n, repr(wd)] + [repr(g) for g in gaps] + [repr(e) for e in esc])
        return buf.getvalue()


def _slope(ns: np.ndarray, ys: np.ndarray) -> float:
    if ns.size < 2:
        return 0.0
    return float(np.polyfit(ns.astype(float), ys, 1)[0])


def pfa_signature(kernel: Kernel, eta: HybridMeasure, n_max: int, family: TestFamily,
                  candidate_limit: HybridMeasure, witnesses: Sequence[tuple[float, float]],
                  epsilons: Sequence[float] = DEFAULT_EPSILONS, *,
                  weak_threshold: float = 1e-2, witness_threshold: float = 0.1,
                  eta_label: str = "eta", candidate_label: str = "candidate",
                  feller: bool = True) -> ConvergenceReport:
    """Run the Cesaro iteration and classify its weak/setwise behaviour.

    ``pfa_signature`` is set when the weak distance to ``candidate_limit``
    ends at or below ``weak_threshold`` with a non-increasing trend over
    the second half of the run, while at least one witness interval keeps
    ``|gap| >= witness_threshold`` throughout that half.
    """
    if n_max < 10:
        raise ValueError("n_max must be >= 10")
    for a, b in witnesses:
        if not (0.0 <= a < b <= 1.0):
            raise ValueError(f"witness interval ({a}, {b}) must satisfy 0 <= a < b <= 1")
    eps = list(epsilons)
    escape_profile(candidate_limit, eps)  # validates the ladder

    wd, gaps, esc, at0 = [], [], [], []
    for state in iterate(kernel, eta, n_max):
        lam = state.cesaro
        wd.append(weak_distance(lam, candidate_limit, family))
        gaps.append([witness_gap(lam, candidate_limit, a, b) for a, b in witnesses])
        esc.append(escape_profile(lam, eps))
        at0.append(lam.atom_mass(0.0))

    half = n_max // 2
    ns = np.arange(half + 1, n_max + 1)
    tail = np.asarray(wd[half:])
    slope = _slope(ns, tail)
    final = wd[-1]
    if final <= weak_threshold and slope <= 0.0:
        verdict = Verdict.CONVERGES_WEAKLY
    elif final > weak_threshold and slope >= 0.0:
        verdict = Verdict.NO_TREND
    else:
        verdict = Verdict.INCONCLUSIVE

    gap_arr = np.abs(np.asarray(gaps, dtype=float).reshape(n_max, len(witnesses)))
    persistent = bool(witnesses) and bool(np.any(gap_arr[half:].min(axis=0) >= witness_threshold))
    signature = verdict is Verdict.CONVERGES_WEAKLY and persistent

    findings: list[tuple[float, float]] = []
    if feller:
        merged: dict[float, float] = {}
        for f in family:
            for x, j in feller_scan(kernel, f, eta.grid):
                merged[x] = max(merged.get(x, 0.0), j)
        findings = sorted(merged.items())

    return ConvergenceReport(
        kernel=kernel.describe(),
        eta=eta_label,
        candidate=candidate_label,
        n_max=n_max,
        family=family.names,
        witnesses=[(float(a), float(b)) for a, b in witnesses],
        epsilons=eps,
        weak_distance=wd,
        witness_gaps=gaps,
        escape=esc,
        atom_at_zero=at0,
        feller=findings,
        weak_slope=slope,
        verdict=verdict,
        pfa_signature=signature,
        weak_threshold=weak_threshold,
        witness_threshold=witness_threshold,
        near_zero_modulus={f.name: near_zero_modulus(f, eta.grid.epsilon_min) for f in family},
    )


# ---------------------------------------------------------------------------
# Fixed-point search
# ---------------------------------------------------------------------------


def fixed_point_search(kernel: Kernel, start: HybridMeasure, steps: int = 1000,
                       damping: float = 0.5) -> HybridMeasure:
    """Damped power iteration ``mu <- (1 - damping) mu + damping A mu``.

    Fixed points are those of ``A``; the lazy step averages consecutive
    iterates and so suppresses periodic oscillation.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    mu = start
    for _ in range(steps):
        mu = mix([(1.0 - damping, mu), (damping, kernel.apply(mu))])
    return mu


def mass_collapsed_at_zero(mu: HybridMeasure, factor: float = 10.0) -> float:
    """Mass in the near-zero bucket plus ``(0, factor * epsilon_min)``."""
    return mass_of_interval(mu, 0.0, min(1.0, factor * mu.grid.epsilon_min))
