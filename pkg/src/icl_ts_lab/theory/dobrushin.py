"""Brute-force dependency coefficients of small discrete joint distributions.

influence I_{j->i}: largest total-variation distance between the conditionals of
X_i given two values of X_j, over every assignment of the remaining variables.
Dobrushin coefficient alpha = max_i sum_{j != i} I_{j->i}; the log-influence
variant replaces the TV distance by a quarter of the four-term log-odds ratio.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from icl_ts_lab.core.config import settings
from icl_ts_lab.core.errors import PositivityError, SizeError, SupportWarning

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class DiscreteJoint:
    """prob[x_0, ..., x_{T-1}] over a product of finite domains."""

    prob: np.ndarray

    def __post_init__(self) -> None:
        prob = np.asarray(self.prob, dtype=np.float64)
        if prob.ndim < 1:
            raise ValueError("joint table needs at least one variable")
        if prob.size > settings.brute_force_max_entries:
            raise SizeError(f"joint has {prob.size} entries, cap is {settings.brute_force_max_entries}")
        if (prob < 0).any():
            raise ValueError("probabilities must be >= 0")
        if abs(prob.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {prob.sum():.15g}, expected 1")
        object.__setattr__(self, "prob", prob)

    @property
    def n_vars(self) -> int:
        return self.prob.ndim

    @property
    def domain_sizes(self) -> tuple[int, ...]:
        return self.prob.shape

    @classmethod
    def product(cls, *marginals: np.ndarray) -> DiscreteJoint:
        table = np.ones(())
        for m in marginals:
            table = np.multiply.outer(table, np.asarray(m, dtype=np.float64))
        return cls(table)

    @classmethod
    def markov_chain(cls, initial: np.ndarray, transition: np.ndarray, length: int) -> DiscreteJoint:
        """X_0 ~ initial, X_{t+1} | X_t ~ transition[X_t]."""
        table = np.asarray(initial, dtype=np.float64)
        P = np.asarray(transition, dtype=np.float64)
        for _ in range(length - 1):
            table = table[..., None] * P[(np.newaxis,) * (table.ndim - 1)]
        return cls(table)

    def _pair_view(self, i: int, j: int) -> np.ndarray:
        """Table with axes (x_i, x_j, rest) flattened to (k_i, k_j, R)."""
        if i == j:
            raise ValueError("influence needs two distinct variables")
        moved = np.moveaxis(self.prob, (i, j), (0, 1))
        return moved.reshape(moved.shape[0], moved.shape[1], -1)


def influence(joint: DiscreteJoint, j: int, i: int) -> float:
    """I_{j->i}, exact by enumeration; unsupported conditioning events are skipped."""
    P = joint._pair_view(i, j)  # (k_i, k_j, R)
    marg = P.sum(axis=0)  # (k_j, R)
    supported = marg > 0
    if not supported.all():
        warnings.warn(
            f"skipping {int((~supported).sum())} zero-probability conditioning events for I_{j}->{i}",
            SupportWarning,
            stacklevel=2,
        )
    cond = np.divide(P, marg, out=np.zeros_like(P), where=supported)
    tv = 0.5 * np.abs(cond[:, :, None, :] - cond[:, None, :, :]).sum(axis=0)  # (k_j, k_j, R)
    valid = supported[:, None, :] & supported[None, :, :]
    return float(tv[valid].max()) if valid.any() else 0.0


def dobrushin_coeff(joint: DiscreteJoint) -> float:
    """alpha = max_i sum_{j != i} I_{j->i}."""
    T = joint.n_vars
    return max((sum(influence(joint, j, i) for j in range(T) if j != i) for i in range(T)), default=0.0)


def influence_matrix(joint: DiscreteJoint) -> np.ndarray:
    T = joint.n_vars
    out = np.zeros((T, T))
    for i, j in itertools.permutations(range(T), 2):
        out[j, i] = influence(joint, j, i)
    return out


def log_influence(joint: DiscreteJoint, j: int, i: int) -> float:
    """1/4 sup log [P(a,b) P(a',b') / (P(a',b) P(a,b'))] with the rest held fixed."""
    if (joint.prob <= 0).any():
        raise PositivityError("log-influence needs a strictly positive joint")
    L = np.log(joint._pair_view(i, j))  # (k_i, k_j, R)
    four = (
        L[:, None, :, None, :]
        + L[None, :, None, :, :]
        - L[None, :, :, None, :]
        - L[:, None, None, :, :]
    )  # axes (a, a', b, b', rest)
    return float(0.25 * four.max())


def alpha_log(joint: DiscreteJoint) -> float:
    T = joint.n_vars
    return max((sum(log_influence(joint, j, i) for j in range(T) if j != i) for i in range(T)), default=0.0)


@dataclass(slots=True)
class PairwiseMrf:
    """P(x) proportional to exp(sum_i h_i(x_i) + sum_{i<j} theta_ij(x_i, x_j))."""

    domain_sizes: tuple[int, ...]
    potentials: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    fields: dict[int, np.ndarray] = field(default_factory=dict)

    def joint(self) -> DiscreteJoint:
        energy = np.zeros(self.domain_sizes)
        T = len(self.domain_sizes)
        for i, h in self.fields.items():
            shape = [1] * T
            shape[i] = -1
            energy = energy + np.asarray(h, dtype=np.float64).reshape(shape)
        for (i, j), theta in self.potentials.items():
            shape = [1] * T
            shape[i], shape[j] = self.domain_sizes[i], self.domain_sizes[j]
            table = np.asarray(theta, dtype=np.float64)
            energy = energy + (table if i < j else table.T).reshape(shape)
        p = np.exp(energy - energy.max())
        return DiscreteJoint(p / p.sum())

    def beta(self) -> float:
        """max_i sum_j |theta_ij|_inf, an upper bound on alpha_log."""
        T = len(self.domain_sizes)
        load = np.zeros(T)
        for (i, j), theta in self.potentials.items():
            s = float(np.abs(theta).max())
            load[i] += s
            load[j] += s
        return float(load.max()) if T else 0.0

    @classmethod
    def ising_chain(cls, length: int, coupling: float, field_strength: float = 0.0) -> PairwiseMrf:
        """Spins in {-1, +1} (index 0 <-> -1) with nearest-neighbour coupling."""
        spins = np.array([-1.0, 1.0])
        theta = coupling * np.outer(spins, spins)
        return cls(
            domain_sizes=(2,) * length,
            potentials={(t, t + 1): theta for t in range(length - 1)},
            fields={t: field_strength * spins for t in range(length)} if field_strength else {},
        )
