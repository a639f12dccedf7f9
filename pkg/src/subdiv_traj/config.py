"""Solver and barrier parameters."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

MODES = ("exact", "inexact")

# JSON key -> field name, where they differ
_ALIASES = {"lambda": "lam"}


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and barrier parameters.

    Lengths are meters, times seconds.  ``spd_floor`` is relative: the
    eigenvalue clamp is ``spd_floor * max(1, |H|_inf)``.
    """

    lam: float = 10.0
    x0: float = 0.1
    d0: float = 0.1
    epsilon: float = 0.1
    epsilon_g: float = 1e-3
    gamma: float = 0.5
    c1: float = 1e-4
    v_max: float = 2.0
    a_max: float = 2.0
    epsilon_s: float = 1e-3
    eta: float = 0.3
    epsilon_alpha: float = 1e-2
    spd_floor: float = 1e-8
    max_outer_iters: int = 10_000
    rho: float = 1.0
    mollifier_ratio: float = 1e-3
    # separate subdivision thresholds for velocity/acceleration hulls
    epsilon_vel: float = math.inf
    epsilon_acc: float = math.inf
    # optional geometric continuation of lambda and x0 between solves
    continuation: bool = False
    beta: float = 0.5
    continuation_rounds: int = 0
    mode: str = "exact"
    degree: int = 8
    continuity: int = 2

    def __post_init__(self):
        positive = ("lam", "x0", "epsilon", "epsilon_g", "v_max", "a_max",
                    "epsilon_s", "epsilon_alpha", "spd_floor", "mollifier_ratio",
                    "epsilon_vel", "epsilon_acc")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.d0 < 0:
            raise ValueError("d0 must be non-negative")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        for name in ("gamma", "c1", "beta"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0 < self.eta < 1.0 / 3.0:
            raise ValueError("eta must lie strictly inside (0, 1/3)")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.continuation_rounds < 0:
            raise ValueError("continuation_rounds must be non-negative")

    @property
    def cutoff(self) -> float:
        """Distance beyond which every collision term vanishes."""
        return self.d0 + self.x0

    def psi(self, width: float) -> float:
        """Tightened clearance margin for the inexact safeguard."""
        return self.epsilon_s * width**self.eta

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        names = {f.name for f in fields(cls)}
        kw = {}
        for key, val in data.items():
            name = _ALIASES.get(key, key)
            if name not in names:
                raise ValueError(f"unknown configuration key {key!r}")
            kw[name] = val
        return cls(**kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def updated(self, **kw) -> "SolverConfig":
        return replace(self, **kw)
