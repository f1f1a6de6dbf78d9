"""Calculators for the pretraining generalization and test-error bounds.

All values are reported up to the universal constant ``C`` (default 1); the
shape of each formula, not its absolute level, is what these functions expose.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, model_validator

from icl_ts_lab.core.errors import ConditionError

logger = logging.getLogger(__name__)


class BoundInputs(BaseModel):
    B_x: float = Field(default=1.0, gt=0)
    B: float = Field(default=1.0, ge=0)
    R: float = Field(default=1.0, ge=0)
    B_w: float = Field(default=1.0, gt=0)
    sigma_eps: float = Field(default=0.0, ge=0)
    alpha: float = 0.0
    kappa: float = Field(default=1.0, gt=0)
    L: int = Field(default=1, ge=1)
    M: int = Field(default=1, ge=1)
    D: int = Field(default=1, ge=1)
    D_prime: int = Field(default=1, ge=0)
    n: int = Field(default=1, ge=1)
    T: int = Field(default=1, ge=1)
    d: int = Field(default=1, ge=1)
    epsilon: float = Field(default=0.05, gt=0, lt=1)
    delta: float = Field(default=0.5, ge=0, lt=1)  # confidence level of the AR(1) bound
    C: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _alpha_range(self) -> BoundInputs:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        return self


def _require_alpha(inp: BoundInputs) -> None:
    if inp.alpha >= 1:
        raise ConditionError(f"Dobrushin coefficient alpha={inp.alpha} must be < 1")


def zeta(inp: BoundInputs, *, include_T: bool = True) -> float:
    """log(2 + max{B, R, B_x, T, d}); the AR(1) variant drops T."""
    terms = [inp.B, inp.R, inp.B_x, inp.d] + ([inp.T] if include_T else [])
    return math.log(2 + max(terms))


def complexity(inp: BoundInputs, *, include_T: bool = True) -> float:
    """sqrt((L (M D^2 + D D') zeta + log(1/eps)) / n)."""
    z = zeta(inp, include_T=include_T)
    return math.sqrt((inp.L * (inp.M * inp.D**2 + inp.D * inp.D_prime) * z + math.log(1 / inp.epsilon)) / inp.n)


def gen_bound(inp: BoundInputs) -> float:
    """C * B_x^2 / (1 - alpha) * complexity."""
    _require_alpha(inp)
    return inp.C * inp.B_x**2 / (1 - inp.alpha) * complexity(inp)


@dataclass(slots=True)
class TestErrorBound:
    approximation: float
    generalization: float
    delta: float
    probability: float  # delta clamped to [0, 1] times (1 - eps)

    @property
    def value(self) -> float:
        return self.approximation + self.generalization

    def to_dict(self) -> dict[str, float]:
        return {**asdict(self), "value": self.value}


def test_error_bound(inp: BoundInputs) -> TestErrorBound:
    """B_x B_w exp(-L/kappa) + gen_bound, with Delta = 1 - (sigma / (B_x B_w e^{-L/2 kappa}))^2."""
    _require_alpha(inp)
    approx = inp.C * inp.B_x * inp.B_w * math.exp(-inp.L / inp.kappa)
    scale = inp.B_x * inp.B_w * math.exp(-inp.L / (2 * inp.kappa))
    delta = 1 - (inp.sigma_eps / scale) ** 2 if scale > 0 else -math.inf
    prob = float(np.clip(delta, 0.0, 1.0)) * (1 - inp.epsilon)
    if delta < 0:
        logger.warning("Delta=%.4g is negative; reported probability clamped to 0", delta)
    return TestErrorBound(approximation=approx, generalization=gen_bound(inp), delta=delta, probability=prob)


# not pytest items when imported into test modules
test_error_bound.__test__ = False  # type: ignore[attr-defined]
TestErrorBound.__test__ = False  # type: ignore[attr-defined]


def ar1_bound(inp: BoundInputs) -> dict[str, float]:
    """sigma/sqrt(1-delta) + sigma^2/B_x e^{-L/kappa} + sigma^2/(1-alpha) * complexity (zeta without T)."""
    _require_alpha(inp)
    s = inp.sigma_eps
    terms = {
        "noise": inp.C * s / math.sqrt(1 - inp.delta),
        "approximation": inp.C * s**2 / inp.B_x * math.exp(-inp.L / inp.kappa),
        "generalization": inp.C * s**2 / (1 - inp.alpha) * complexity(inp, include_T=False),
    }
    return {**terms, "value": sum(terms.values()), "probability": inp.delta * (1 - inp.epsilon)}


@dataclass(slots=True)
class Clause:
    name: str
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs < self.rhs

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "pass": self.passed, "margin": self.margin}


@dataclass(slots=True)
class ConditionReport:
    quantity: str
    value: float | None = None
    clauses: list[Clause] = field(default_factory=list)

    def clause(self, name: str) -> Clause:
        return next(c for c in self.clauses if c.name == name)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def to_dict(self) -> dict[str, Any]:
        return {"quantity": self.quantity, "value": self.value, "clauses": [c.to_dict() for c in self.clauses]}


def ar1_condition_check(w: np.ndarray, sigma_eps: float, B_x: float, B_w: float) -> ConditionReport:
    """Weak-dependence clauses of a stationary AR(1): B_x^2 and B_w B_x against ln(1/2) + sigma^2, and |w|_inf < 1."""
    if not sigma_eps > 0:
        raise ValueError(f"sigma_eps must be > 0, got {sigma_eps}")
    rhs = math.log(0.5) + sigma_eps**2
    w_inf = float(np.max(np.abs(w))) if np.size(w) else 0.0
    return ConditionReport(
        quantity="ar1_conditions",
        clauses=[
            Clause("bx_squared", B_x**2, rhs),
            Clause("bw_bx", B_w * B_x, rhs),
            Clause("stationarity", w_inf, 1.0),
        ],
    )
