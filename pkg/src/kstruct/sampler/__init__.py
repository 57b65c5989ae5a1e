"""Metropolis sampling and simulated annealing over a model space.

The chain loop runs in a compiled Cython kernel when available and falls back
to an equivalent pure-Python loop otherwise (or when ``KSTRUCT_PURE_PYTHON=1``).
Both consume exactly two uniforms per step, proposal first, so a seeded run
is reproducible across backends.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..models import ModelSpace
from ..rng import STREAM_CHAIN, make_rng
from ..thermo import actions as _actions
from ..thermo import gibbs_weights
from . import _chain_py

if os.environ.get("KSTRUCT_PURE_PYTHON") == "1":
    _run_chain = _chain_py.run_chain
    BACKEND = "python"
else:
    try:
        from ._chain_ext import run_chain as _run_chain

        BACKEND = "cython"
    except ImportError:  # extension not built
        _run_chain = _chain_py.run_chain
        BACKEND = "python"

MAX_MATRIX_STATES = 1000


class ProposalKernel(enum.Enum):
    NEIGHBOR_STEP = _chain_py.NEIGHBOR_STEP
    UNIFORM_JUMP = _chain_py.UNIFORM_JUMP

    @classmethod
    def parse(cls, value) -> "ProposalKernel":
        if isinstance(value, ProposalKernel):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"neighbor": cls.NEIGHBOR_STEP, "neighbor_step": cls.NEIGHBOR_STEP,
                   "uniform": cls.UNIFORM_JUMP, "uniform_jump": cls.UNIFORM_JUMP}
        if key not in aliases:
            raise ValueError(f"unknown proposal kernel {value!r}")
        return aliases[key]

    def matrix(self, n: int) -> np.ndarray:
        """Proposal probabilities ``Q[i, j]``; symmetric for both kernels."""
        Q = np.zeros((n, n))
        if n == 1:
            Q[0, 0] = 1.0
            return Q
        if self is ProposalKernel.UNIFORM_JUMP:
            Q[:] = 1.0 / (n - 1)
            np.fill_diagonal(Q, 0.0)
            return Q
        idx = np.arange(n - 1)
        Q[idx, idx + 1] = 0.5
        Q[idx + 1, idx] = 0.5
        Q[0, 0] = Q[n - 1, n - 1] = 0.5
        return Q


@dataclass(frozen=True)
class AnnealingConfig:
    t0: float
    t_min: float
    gamma: float
    steps_per_temperature: int
    lam: float
    seed: int
    proposal: ProposalKernel = ProposalKernel.NEIGHBOR_STEP
    initial_index: int = 0

    def __post_init__(self):
        if not (self.t_min > 0.0 and self.t0 > self.t_min and math.isfinite(self.t0)):
            raise ValueError(f"need 0 < t_min < t0, got t0={self.t0}, t_min={self.t_min}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.steps_per_temperature < 1:
            raise ValueError("steps_per_temperature must be >= 1")
        if not self.lam >= 0.0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    def schedule(self) -> np.ndarray:
        """Temperature levels ``t0, gamma*t0, ...`` while above ``t_min``."""
        temps = []
        t = self.t0
        while t > self.t_min:
            temps.append(t)
            t *= self.gamma
        return np.array(temps)


@dataclass(frozen=True, eq=False)
class ChainTrace:
    temperatures: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    accepted: np.ndarray

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("step", "temperature", "state_index", "action", "accepted"))
            for k, (t, s, a, acc) in enumerate(
                zip(self.temperatures, self.states, self.actions, self.accepted)
            ):
                w.writerow((k, repr(float(t)), int(s), repr(float(a)), int(acc)))
        return path


@dataclass(frozen=True, eq=False)
class ChainStats:
    visits: np.ndarray
    acceptance_rate: float
    final_state_index: int
    trajectory_length: int
    trace: Optional[ChainTrace] = field(default=None, repr=False)


def _check_T(temperature: float) -> None:
    if not (temperature > 0.0 and math.isfinite(temperature)):
        raise ValueError(f"temperature must be finite and > 0, got {temperature}")


def metropolis_step(current_index, space, proposal, lam, temperature, rng):
    """One Metropolis update drawing exactly two uniforms from ``rng``.

    Returns ``(next_index, accepted)``; a self-proposal counts as accepted.
    """
    _check_T(temperature)
    if not 0 <= current_index < len(space):
        raise IndexError(f"state {current_index} outside a space of {len(space)} states")
    kind = ProposalKernel.parse(proposal).value
    u_prop, u_acc = rng.random(2)
    return _chain_py.step(_actions(space, lam).tolist(), current_index, kind, temperature, u_prop, u_acc)


def run_chain(space: ModelSpace, proposal, lam: float, temperatures, seed: int,
              start: int = 0, stream: int = STREAM_CHAIN):
    """Metropolis chain with one step per entry of ``temperatures``.

    Returns ``(states, accepted, best_index)`` where ``states[t]`` is the state
    after step ``t``.
    """
    temps = np.ascontiguousarray(temperatures, dtype=np.float64)
    if temps.ndim != 1:
        raise ValueError("temperatures must be 1-d")
    if len(temps) and not (np.all(temps > 0.0) and np.all(np.isfinite(temps))):
        raise ValueError("every temperature must be finite and > 0")
    if not 0 <= start < len(space):
        raise IndexError(f"start state {start} outside a space of {len(space)} states")
    kind = ProposalKernel.parse(proposal).value
    a = np.ascontiguousarray(_actions(space, lam))
    uniforms = make_rng(seed, stream).random((len(temps), 2))
    states = np.empty(len(temps), dtype=np.int64)
    accepted = np.empty(len(temps), dtype=np.uint8)
    best = _run_chain(a, int(start), kind, temps, uniforms, states, accepted)
    return states, accepted.astype(bool), int(best)


def transition_matrix(space: ModelSpace, proposal, lam: float, temperature: float) -> np.ndarray:
    """Exact Metropolis transition matrix.

    ``proposal`` is a :class:`ProposalKernel` or an explicit ``(n, n)``
    proposal matrix (the latter lets tests feed deliberately asymmetric kernels).
    """
    _check_T(temperature)
    n = len(space)
    if n > MAX_MATRIX_STATES:
        raise ValueError(f"{n} states is too many to materialize (limit {MAX_MATRIX_STATES})")
    if isinstance(proposal, np.ndarray):
        Q = np.asarray(proposal, dtype=np.float64)
        if Q.shape != (n, n):
            raise ValueError(f"proposal matrix has shape {Q.shape}, expected {(n, n)}")
    else:
        Q = ProposalKernel.parse(proposal).matrix(n)
    a = _actions(space, lam)
    delta = a[None, :] - a[:, None]
    accept = np.exp(np.minimum(0.0, -delta / temperature))
    P = Q * accept
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


def detailed_balance_check(space: ModelSpace, proposal, lam: float, temperature: float) -> float:
    """Largest ``|pi_i P_ij - pi_j P_ji|`` over all ordered pairs."""
    P = transition_matrix(space, proposal, lam, temperature)
    pi, _ = gibbs_weights(_actions(space, lam), temperature)
    flow = pi[:, None] * P
    return float(np.max(np.abs(flow - flow.T)))


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def stationary_distribution_empirical(space: ModelSpace, proposal, lam: float, temperature: float,
                                      n_steps: int, burn_in: int, seed: int,
                                      start: int = 0) -> np.ndarray:
    """Visit frequencies of a constant-temperature chain after ``burn_in`` steps."""
    _check_T(temperature)
    if not 0 <= burn_in < n_steps:
        raise ValueError(f"need 0 <= burn_in < n_steps, got burn_in={burn_in}, n_steps={n_steps}")
    states, _, _ = run_chain(space, proposal, lam, np.full(n_steps, float(temperature)), seed, start)
    counts = np.bincount(states[burn_in:], minlength=len(space))
    return counts / float(n_steps - burn_in)


def simulated_annealing(space: ModelSpace, config: AnnealingConfig, record: bool = False):
    """Geometric-cooling annealing; returns ``(best_index, ChainStats)``.

    Runs ``steps_per_temperature`` Metropolis steps per level and returns the
    lowest-action state ever visited rather than the final one. With
    ``record=True`` the full trace is attached to the stats.
    """
    if not 0 <= config.initial_index < len(space):
        raise IndexError(f"initial_index {config.initial_index} outside the space")
    temps = np.repeat(config.schedule(), config.steps_per_temperature)
    states, accepted, best = run_chain(
        space, config.proposal, config.lam, temps, config.seed, config.initial_index
    )
    n_steps = len(temps)
    trace = None
    if record:
        trace = ChainTrace(temps, states, _actions(space, config.lam)[states], accepted)
    stats = ChainStats(
        visits=np.bincount(states, minlength=len(space)),
        # no steps at all: nothing was rejected, report 1 by convention
        acceptance_rate=float(accepted.mean()) if n_steps else 1.0,
        final_state_index=int(states[-1]) if n_steps else config.initial_index,
        trajectory_length=n_steps,
        trace=trace,
    )
    return best, stats
