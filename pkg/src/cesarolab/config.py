"""Run configuration: one JSON document describing a chain and an experiment.

Example::

    {
      "kernel": {"kernel": "shrinking_uniform"},
      "initial": "delta(1)",
      "candidate_limit": "delta(0)",
      "grid": {"epsilon_min": 1e-12, "bin_count": 4096},
      "n_max": 500,
      "family": "default",
      "witnesses": [[0.0, 0.1]],
      "sim": {"replicas": 100000, "seed": 20240601, "horizon": 100}
    }

Measures are written as ``"delta(x)"``, ``"uniform"`` or an object with a
``kind`` of ``atom``, ``uniform``, ``mixture`` or ``file``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .diagnostics import DEFAULT_EPSILONS
from .kernel import Kernel, kernel_from_config
from .measure import Grid, HybridMeasure, TestFamily, mix, parse_test_function


class ConfigError(ValueError):
    pass


_TOP_KEYS = {"kernel", "initial", "candidate_limit", "grid", "n_max", "family", "witnesses",
             "epsilons", "sim", "thresholds", "feller", "out_dir"}
_DELTA_RE = re.compile(r"^\s*delta\s*\(\s*([^)]+?)\s*\)\s*$")


def _only(d: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    return d


def _number(v, where: str, lo=None, hi=None, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number")
    if integer and int(v) != v:
        raise ConfigError(f"{where} must be an integer")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"{where} must lie in [{lo}, {hi}], got {v}")
    return int(v) if integer else float(v)


def parse_measure(desc, grid: Grid, base_dir: Path) -> HybridMeasure:
    """Measure descriptor to :class:`HybridMeasure` on ``grid``."""
    if isinstance(desc, str):
        if desc.strip() == "uniform":
            return HybridMeasure.uniform(grid)
        m = _DELTA_RE.match(desc)
        if not m:
            raise ConfigError(f"cannot parse measure {desc!r}")
        try:
            x = float(m.group(1))
        except ValueError:
            raise ConfigError(f"cannot parse measure {desc!r}") from None
        return parse_measure({"kind": "atom", "x": x}, grid, base_dir)
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError("measure descriptor must be a string or an object with 'kind'")
    kind = desc["kind"]
    if kind == "atom":
        _only(desc, {"kind", "x"}, "atom measure")
        return HybridMeasure.dirac(_number(desc.get("x"), "atom x", 0.0, 1.0), grid)
    if kind == "uniform":
        _only(desc, {"kind"}, "uniform measure")
        return HybridMeasure.uniform(grid)
    if kind == "mixture":
        _only(desc, {"kind", "components"}, "mixture measure")
        comps = desc.get("components")
        if not isinstance(comps, list) or not comps:
            raise ConfigError("mixture needs a nonempty 'components' list")
        terms = []
        for c in comps:
            _only(c, {"weight", "measure"}, "mixture component")
            terms.append((_number(c.get("weight"), "mixture weight", 0.0),
                          parse_measure(c.get("measure"), grid, base_dir)))
        return mix(terms)
    if kind == "file":
        _only(desc, {"kind", "path"}, "file measure")
        path = Path(desc.get("path", ""))
        if not path.is_absolute():
            path = base_dir / path
        try:
            mu = HybridMeasure.from_json(path.read_text())
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load measure file {path}: {exc}") from None
        if mu.grid != grid:
            raise ConfigError(f"measure file {path} uses a different grid")
        return mu
    raise ConfigError(f"unknown measure kind {kind!r}")


def parse_family(desc) -> TestFamily:
    if desc == "default":
        return TestFamily.default()
    if desc == "monomials":
        return TestFamily.monomials()
    if isinstance(desc, list) and all(isinstance(s, str) for s in desc):
        return TestFamily.of(*(parse_test_function(s) for s in desc))
    raise ConfigError("family must be 'default', 'monomials' or a list of function strings")


@dataclass(frozen=True)
class SimSettings:
    replicas: int = 100_000
    seed: int = 0
    horizon: int | None = None
    dump_trajectories: bool = False


@dataclass(frozen=True)
class RunConfig:
    kernel: dict
    initial: Any = "delta(1)"
    candidate_limit: Any = "delta(0)"
    grid: Grid = field(default_factory=Grid)
    n_max: int = 200
    family: Any = "default"
    witnesses: tuple[tuple[float, float], ...] = ()
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    sim: SimSettings = field(default_factory=SimSettings)
    weak_threshold: float = 1e-2
    witness_threshold: float = 0.1
    feller_tolerance: float = 1e-4
    feller_radius: float = 1e-3
    feller_suspects: tuple[float, ...] = ()
    out_dir: Path = Path("out")
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "RunConfig":
        _only(data, _TOP_KEYS, "run config")
        if "kernel" not in data:
            raise ConfigError("run config needs a 'kernel' descriptor")
        kw: dict[str, Any] = {"kernel": data["kernel"], "base_dir": Path(base_dir)}
        g = _only(data.get("grid", {}), {"epsilon_min", "bin_count"}, "grid")
        try:
            kw["grid"] = Grid(_number(g.get("epsilon_min", 1e-12), "grid.epsilon_min"),
                              _number(g.get("bin_count", 4096), "grid.bin_count", 1, integer=True))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for key in ("initial", "candidate_limit", "family"):
            if key in data:
                kw[key] = data[key]
        if "n_max" in data:
            kw["n_max"] = _number(data["n_max"], "n_max", 1, integer=True)
        if "witnesses" in data:
            ws = data["witnesses"]
            if not isinstance(ws, list):
                raise ConfigError("witnesses must be a list of [a, b] pairs")
            pairs = []
            for w in ws:
                if not (isinstance(w, list) and len(w) == 2):
                    raise ConfigError("each witness must be a pair [a, b]")
                a, b = _number(w[0], "witness a", 0.0, 1.0), _number(w[1], "witness b", 0.0, 1.0)
                if not a < b:
                    raise ConfigError(f"witness ({a}, {b}) needs a < b")
                pairs.append((a, b))
            kw["witnesses"] = tuple(pairs)
        if "epsilons" in data:
            eps = data["epsilons"]
            if not isinstance(eps, list) or not eps:
                raise ConfigError("epsilons must be a nonempty list")
            eps = [_number(e, "epsilon", 0.0, 1.0) for e in eps]
            if any(e <= 0.0 or e >= 1.0 for e in eps) or any(b <= a for a, b in zip(eps, eps[1:])):
                raise ConfigError("epsilons must be strictly increasing within (0, 1)")
            kw["epsilons"] = tuple(eps)
        if "sim" in data:
            s = _only(data["sim"], {"replicas", "seed", "horizon", "dump_trajectories"}, "sim")
            horizon = s.get("horizon")
            kw["sim"] = SimSettings(
                replicas=_number(s.get("replicas", 100_000), "sim.replicas", 1, integer=True),
                seed=_number(s.get("seed", 0), "sim.seed", 0, 2**64 - 1, integer=True),
                horizon=None if horizon is None else _number(horizon, "sim.horizon", 1, integer=True),
                dump_trajectories=bool(s.get("dump_trajectories", False)),
            )
        if "thresholds" in data:
            t = _only(data["thresholds"], {"weak", "witness"}, "thresholds")
            kw["weak_threshold"] = _number(t.get("weak", 1e-2), "thresholds.weak", 0.0)
            kw["witness_threshold"] = _number(t.get("witness", 0.1), "thresholds.witness", 0.0)
        if "feller" in data:
            f = _only(data["feller"], {"tolerance", "radius", "suspects"}, "feller")
            kw["feller_tolerance"] = _number(f.get("tolerance", 1e-4), "feller.tolerance", 0.0)
            kw["feller_radius"] = _number(f.get("radius", 1e-3), "feller.radius", 0.0, 0.5)
            sus = f.get("suspects", [])
            if not isinstance(sus, list):
                raise ConfigError("feller.suspects must be a list")
            kw["feller_suspects"] = tuple(_number(x, "feller suspect", 0.0, 1.0) for x in sus)
        if "out_dir" in data:
            if not isinstance(data["out_dir"], str):
                raise ConfigError("out_dir must be a string")
            kw["out_dir"] = Path(data["out_dir"])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)

    def validate(self) -> None:
        """Build every derived object once so errors surface at load time."""
        self.build_kernel()
        self.eta()
        self.candidate()
        self.test_family()

    def with_overrides(self, *, n_max=None, seed=None, out_dir=None) -> "RunConfig":
        cfg = self
        if n_max is not None:
            if n_max < 1:
                raise ConfigError("--n-max must be >= 1")
            cfg = replace(cfg, n_max=int(n_max))
        if seed is not None:
            if not 0 <= seed < 2**64:
                raise ConfigError("--seed must be a 64-bit unsigned integer")
            cfg = replace(cfg, sim=replace(cfg.sim, seed=int(seed)))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=Path(out_dir))
        return cfg

    def build_kernel(self) -> Kernel:
        try:
            return kernel_from_config(self.kernel, self.grid, self.base_dir)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def eta(self) -> HybridMeasure:
        return self._measure(self.initial)

    def candidate(self) -> HybridMeasure:
        return self._measure(self.candidate_limit)

    def _measure(self, desc) -> HybridMeasure:
        try:
            return parse_measure(desc, self.grid, self.base_dir)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def test_family(self) -> TestFamily:
        try:
            return parse_family(self.family)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def horizon(self) -> int:
        return self.sim.horizon if self.sim.horizon is not None else self.n_max

    def initial_point(self) -> float | None:
        """The atom location when the initial measure is a single unit atom."""
        mu = self.eta()
        if mu.atom_x.size == 1 and mu.atom_w[0] == 1.0 and mu.total_mass == 1.0:
            return float(mu.atom_x[0])
        return None


def describe_measure(desc) -> str:
    return desc if isinstance(desc, str) else json.dumps(desc, sort_keys=True)
