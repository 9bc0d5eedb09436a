"""Run configuration: YAML parsing, validation, and spec-to-function builders."""

from dataclasses import dataclass, field

import numpy as np
import yaml

from .grid import oversampling_layers

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "make_scalar_field",
    "make_source",
    "source_is_static",
]

_TABLE_TIMES = tuple(round(0.1 * k, 10) for k in range(1, 11))


class ConfigError(ValueError):
    """A configuration value failed validation; the message names the field."""


@dataclass
class RunConfig:
    medium: dict
    nx: int = 400
    ny: int = 400
    M: int = 40
    layers: int = None
    orders: tuple = (1.5,)
    tau: float = 0.02
    T: float = 1.0
    source: dict = field(default_factory=lambda: {"kind": "gaussian"})
    initial: dict = field(default_factory=lambda: {"kind": "zero"})
    velocity: dict = field(default_factory=lambda: {"kind": "zero"})
    bc: str = "dirichlet0"
    snapshots: tuple = None
    out: str = "out"
    jobs: int = 1
    zero_order: dict = None

    @property
    def H(self):
        return 1.0 / self.M

    @property
    def n_steps(self):
        return int(round(self.T / self.tau))

    def effective_layers(self):
        return self.layers if self.layers is not None else oversampling_layers(self.H)

    def snapshot_times(self):
        """Explicit snapshot times, defaulting to the tenths used by the
        error tables (clipped to the final time)."""
        if self.snapshots is not None:
            return tuple(self.snapshots)
        return tuple(t for t in _TABLE_TIMES if t <= self.T + 1e-12)

    def validate(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigError(f"fine cell counts must be positive: nx={self.nx}")
        if self.M < 1 or self.nx % self.M or self.ny % self.M:
            raise ConfigError(f"M={self.M} must divide nx={self.nx} and ny={self.ny}")
        if self.layers is not None and self.layers < 0:
            raise ConfigError(f"layers must be nonnegative, got {self.layers}")
        for a in self.orders:
            if not 1.0 < a < 2.0:
                raise ConfigError(f"orders must lie strictly in (1, 2), got {a}")
        if len(self.orders) not in (1, 2):
            raise ConfigError("orders must hold one value or one per continuum")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.T <= 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if abs(self.n_steps * self.tau - self.T) > 1e-9:
            raise ConfigError(f"tau={self.tau} must divide T={self.T}")
        if self.bc not in ("dirichlet0", "neumann0"):
            raise ConfigError(f"bc must be dirichlet0 or neumann0, got {self.bc!r}")
        kind = self.medium.get("kind")
        if kind not in ("crossed", "layered", "raster"):
            raise ConfigError(f"medium.kind must be crossed/layered/raster, got {kind!r}")
        if kind == "raster" and not self.medium.get("path"):
            raise ConfigError("medium.kind=raster requires medium.path")
        for t in self.snapshot_times():
            k = round(t / self.tau)
            if t < 0 or t > self.T + 1e-12 or abs(k * self.tau - t) > 1e-9:
                raise ConfigError(f"snapshot time {t} incompatible with tau={self.tau}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be positive, got {self.jobs}")
        if self.zero_order is not None:
            zo = self.zero_order
            for a in zo.get("orders", []):
                if not 1.0 < a < 2.0:
                    raise ConfigError(f"zero_order.orders entry {a} outside (1, 2)")
        return self


def load_config(path) -> RunConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    known = {f for f in RunConfig.__dataclass_fields__}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    if "medium" not in raw:
        raise ConfigError("config must define a medium")
    cfg = RunConfig(**raw)
    if isinstance(cfg.orders, (int, float)):
        cfg.orders = (float(cfg.orders),)
    else:
        cfg.orders = tuple(float(a) for a in cfg.orders)
    if cfg.snapshots is not None:
        cfg.snapshots = tuple(float(t) for t in cfg.snapshots)
    return cfg.validate()


def make_scalar_field(spec):
    """Pointwise field builder for initial data: callable(points) -> values.

    Returns None for the zero field so solvers can skip the work.
    """
    kind = (spec or {"kind": "zero"}).get("kind", "zero")
    if kind == "zero":
        return None
    if kind == "constant":
        value = float(spec.get("value", 0.0))
        return lambda pts: np.full(len(pts), value)
    if kind == "gaussian":
        return _gaussian(spec)
    raise ConfigError(f"unknown field kind {kind!r}")


def make_source(spec):
    """Source builder: callable(points, t) -> values.

    A gaussian source may carry a separable time factor:
    none (default) or "linear" (multiplies by t).
    """
    kind = (spec or {"kind": "zero"}).get("kind", "zero")
    if kind == "zero":
        return lambda pts, t: np.zeros(len(pts))
    if kind == "gaussian":
        g = _gaussian(spec)
        tf = spec.get("time_factor")
        if tf is None:
            return lambda pts, t: g(pts)
        if tf == "linear":
            return lambda pts, t: t * g(pts)
        raise ConfigError(f"unknown source time_factor {tf!r}")
    if kind == "constant":
        value = float(spec.get("value", 0.0))
        return lambda pts, t: np.full(len(pts), value)
    raise ConfigError(f"unknown source kind {kind!r}")


def source_is_static(spec):
    kind = (spec or {}).get("kind", "zero")
    return kind != "gaussian" or spec.get("time_factor") is None


def _gaussian(spec):
    amp = float(spec.get("amplitude", 1.0))
    cx, cy = spec.get("center", (0.5, 0.5))
    decay = float(spec.get("decay", 40.0))

    def g(pts):
        pts = np.asarray(pts, dtype=float)
        r2 = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2
        return amp * np.exp(-decay * r2)

    return g
