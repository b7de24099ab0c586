"""Biological parameters, growth kinetics and the flocculation chemostat ODE.

State vector is ``(S, u, v)``: substrate, planktonic (isolated) biomass and
attached (floc) biomass.  Every growth function must satisfy

    f(0) = 0,  f'(s) > 0 for s > 0,

and have a finite supremum; :class:`Monod` is the concrete kinetics used
throughout, but anything implementing :class:`Kinetics` plugs in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Protocol, Sequence, runtime_checkable

import numpy as np


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


@runtime_checkable
class Kinetics(Protocol):
    sup: float

    def value(self, s): ...

    def deriv(self, s): ...

    def inverse(self, rate: float) -> float: ...


@dataclass(frozen=True)
class Monod:
    """m s / (k + s)."""

    m: float
    k: float

    @property
    def sup(self) -> float:
        return self.m

    def value(self, s):
        return self.m * s / (self.k + s)

    def deriv(self, s):
        return self.m * self.k / (self.k + s) ** 2

    def inverse(self, rate: float) -> float:
        """Concentration where the rate is reached; ``inf`` at or above the supremum."""
        if rate < 0:
            raise DomainError(f"negative rate {rate}")
        if rate >= self.m:
            return math.inf
        return self.k * rate / (self.m - rate)


@dataclass(frozen=True)
class BioParams:
    m1: float
    k1: float
    m2: float
    k2: float
    a: float
    b: float
    alpha: float
    beta: float
    m_u: float
    m_v: float
    y_u: float = 1.0
    y_v: float = 1.0
    # optional (f, g) override; Monod(m1, k1), Monod(m2, k2) otherwise
    kinetics: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("m1", "k1", "m2", "k2", "y_u", "y_v"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be > 0, got {val}")
        for name in ("a", "b", "alpha", "beta", "m_u", "m_v"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise DomainError(f"{name} must be >= 0, got {val}")

    @property
    def f(self) -> Kinetics:
        return self.kinetics[0] if self.kinetics else Monod(self.m1, self.k1)

    @property
    def g(self) -> Kinetics:
        return self.kinetics[1] if self.kinetics else Monod(self.m2, self.k2)

    @property
    def is_monod(self) -> bool:
        return self.kinetics is None

    def replace(self, **changes) -> "BioParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return BioParams(**values)

    def to_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self) if f.name != "kinetics"}

    def as_array(self) -> np.ndarray:
        """Flat float64 vector in field order, the layout the compiled kernels expect."""
        return np.array([getattr(self, n) for n in PARAM_ORDER], dtype=np.float64)


PARAM_ORDER = ("m1", "k1", "m2", "k2", "a", "b", "alpha", "beta", "m_u", "m_v", "y_u", "y_v")


@dataclass(frozen=True)
class OperatingPoint:
    s_in: float
    d: float

    def __post_init__(self):
        if not (math.isfinite(self.s_in) and self.s_in >= 0):
            raise DomainError(f"s_in must be >= 0, got {self.s_in}")
        if not (math.isfinite(self.d) and self.d >= 0):
            raise DomainError(f"d must be >= 0, got {self.d}")


class State(NamedTuple):
    s: float
    u: float
    v: float


def growth_rate(species: str, s, p: BioParams):
    """Specific growth rate of ``"planktonic"`` (f) or ``"attached"`` (g) bacteria."""
    if np.any(np.asarray(s) < 0):
        raise DomainError("substrate concentration must be >= 0")
    if species == "planktonic":
        return p.f.value(s)
    if species == "attached":
        return p.g.value(s)
    raise ValueError(f"unknown species {species!r}")


def removal_rates(d: float, p: BioParams) -> tuple[float, float]:
    if d < 0:
        raise DomainError("dilution rate must be >= 0")
    return p.alpha * d + p.m_u, p.beta * d + p.m_v


def _clamp(x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        if np.any(x < -1e-13):
            raise DomainError(f"state has negative components: {x}")
        x = np.maximum(x, 0.0)
    return x


def vector_field(x: Sequence[float], op: OperatingPoint, p: BioParams) -> np.ndarray:
    s, u, v = _clamp(x)
    d = op.d
    fs, gs = p.f.value(s), p.g.value(s)
    du, dv = removal_rates(d, p)
    floc = p.a * (u + v) * u - p.b * v
    return np.array([
        d * (op.s_in - s) - fs * u / p.y_u - gs * v / p.y_v,
        (fs - du) * u - floc,
        (gs - dv) * v + floc,
    ])


def jacobian(x: Sequence[float], op: OperatingPoint, p: BioParams) -> np.ndarray:
    s, u, v = _clamp(x)
    d = op.d
    fs, gs = p.f.value(s), p.g.value(s)
    fp, gp = p.f.deriv(s), p.g.deriv(s)
    du, dv = removal_rates(d, p)
    a, b = p.a, p.b
    return np.array([
        [-d - fp * u / p.y_u - gp * v / p.y_v, -fs / p.y_u, -gs / p.y_v],
        [fp * u, fs - du - a * (2 * u + v), b - a * u],
        [gp * v, a * (2 * u + v), gs - dv + a * u - b],
    ])
