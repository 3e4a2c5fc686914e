"""Markov operators ``A`` (on measures) and ``T`` (on functions), iteration
``mu_n = A^n eta`` and the Cesaro means ``lambda_n = (1/n) sum_{k<=n} A^k eta``.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from .kernel import Kernel
from .measure import HybridMeasure, TestFamily, TestFunction, integrate, mix

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def apply_A(kernel: Kernel, mu: HybridMeasure) -> HybridMeasure:
    return kernel.apply(mu)


def apply_T(kernel: Kernel, f: TestFunction, x):
    return kernel.apply_T(f, x)


def integrate_T(kernel: Kernel, f: TestFunction, mu: HybridMeasure) -> float:
    """``int Tf dmu``: atoms pointwise, bins by Gauss-Legendre on the closed-form Tf."""
    g = mu.grid
    total = 0.0
    if mu.atom_x.size:
        total += float(np.dot(mu.atom_w, kernel.apply_T(f, mu.atom_x)))
    live = mu.bins > 0
    if np.any(live):
        tf = kernel.apply_T(f, g.quadrature_nodes[live]) @ (_GL_WEIGHTS / 2.0)
        total += float(np.dot(mu.bins[live], tf))
    return total + mu.near_zero_mass * kernel.T_right_limit_at_zero(f)


def duality_gap(kernel: Kernel, f: TestFunction, mu: HybridMeasure, route: str = "exact") -> float:
    """``|int Tf dmu - int f d(A mu)|``.

    ``route='exact'`` evaluates the right side on the exact image of ``mu``
    (closed-form pushforward density); ``route='grid'`` integrates the
    grid projection returned by :func:`apply_A`, so it also measures the
    projection error.
    """
    lhs = integrate_T(kernel, f, mu)
    if route == "exact":
        rhs = kernel.pushforward_integral(mu, f)
    elif route == "grid":
        rhs = integrate(kernel.apply(mu), f)
    else:
        raise ValueError(f"unknown route {route!r}")
    return abs(lhs - rhs)


@dataclass(frozen=True)
class IterationState:
    kernel: Kernel
    eta: HybridMeasure
    n: int
    current: HybridMeasure
    cesaro: HybridMeasure | None  # defined for n >= 1

    @classmethod
    def start(cls, kernel: Kernel, eta: HybridMeasure) -> "IterationState":
        return cls(kernel, eta, 0, eta, None)


def step(state: IterationState) -> IterationState:
    current = state.kernel.apply(state.current)
    n = state.n + 1
    if n == 1:
        cesaro = current
    else:
        cesaro = mix([((n - 1) / n, state.cesaro), (1.0 / n, current)])
    return replace(state, n=n, current=current, cesaro=cesaro)


def iterate(kernel: Kernel, eta: HybridMeasure, n_max: int) -> Iterator[IterationState]:
    """Yield the states after steps ``1..n_max``."""
    state = IterationState.start(kernel, eta)
    for _ in range(n_max):
        state = step(state)
        yield state


def cesaro_integrals(kernel: Kernel, eta: HybridMeasure, n_max: int,
                     family: TestFamily) -> list[tuple[int, str, float]]:
    """Rows ``(n, f-name, int f dlambda_n)`` for ``n = 1..n_max``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    rows = []
    for state in iterate(kernel, eta, n_max):
        for f in family:
            rows.append((state.n, f.name, integrate(state.cesaro, f)))
    return rows


def cesaro_integrals_batch(kernel: Kernel, etas: Sequence[HybridMeasure], n_max: int,
                           family: TestFamily, max_workers: int | None = None):
    """:func:`cesaro_integrals` for several initial measures, in input order."""
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda eta: cesaro_integrals(kernel, eta, n_max, family), etas))


def cesaro_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "function_name", "value"])
    for n, name, value in rows:
        w.writerow([n, name, repr(float(value))])
    return buf.getvalue()
