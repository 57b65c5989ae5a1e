"""Action, Gibbs measure, free energy and complexity susceptibility.

The action of a model is ``A = loss + lam * complexity``. At temperature zero
the free energy is the minimum action; at ``T > 0`` it is ``-T log Z`` with
``Z = sum exp(-A / T)``. The susceptibility is the variance of the complexity
under the Gibbs weights.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .models import ModelPoint, ModelSpace


@dataclass(frozen=True)
class ActionParams:
    lam: float
    temperature: float = 1.0

    def __post_init__(self):
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if not (self.temperature >= 0.0 and math.isfinite(self.temperature)):
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")


@dataclass(frozen=True, eq=False)
class GibbsDistribution:
    probabilities: np.ndarray
    log_Z: float
    params: ActionParams


@dataclass(frozen=True, eq=False)
class FreeEnergyCurve:
    lambdas: np.ndarray
    F: np.ndarray
    mean_comp: np.ndarray
    chi: np.ndarray
    temperature: float

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("lambda", "F", "mean_comp", "chi"))
            for row in zip(self.lambdas, self.F, self.mean_comp, self.chi):
                w.writerow(tuple(repr(float(v)) for v in row))
        return path


@dataclass(frozen=True)
class ResonanceReport:
    lambda_star: Optional[float]
    chi_peak: float
    peak_width_estimate: Optional[float]
    participating_complexities: frozenset


def _check_lam(lam: float) -> None:
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise ValueError(f"lambda must be finite and >= 0, got {lam}")


def _check_positive_T(temperature: float) -> None:
    if not (temperature > 0.0 and math.isfinite(temperature)):
        raise ValueError(f"temperature must be finite and > 0, got {temperature}")


def action(point: ModelPoint, lam: float) -> float:
    _check_lam(lam)
    return point.train_loss + lam * point.complexity


def actions(space: ModelSpace, lam: float) -> np.ndarray:
    _check_lam(lam)
    return lam * space.complexities + space.train_losses


def lower_envelope(lambdas, complexities, losses):
    """Minimum of the lines ``lam * c + loss`` at each ``lam``.

    ``complexities`` must be increasing so the first minimizer (what
    ``argmin`` returns) is the smallest complexity among ties. Returns the
    minimum values and the minimizing indices.
    """
    lam = np.atleast_1d(np.asarray(lambdas, dtype=np.float64))
    c = np.asarray(complexities, dtype=np.float64)
    ell = np.asarray(losses, dtype=np.float64)
    vals = lam[:, None] * c[None, :] + ell[None, :]
    idx = np.argmin(vals, axis=1)
    return vals[np.arange(len(lam)), idx], idx


def free_energy_zero_T(space: ModelSpace, lam: float):
    """Exact minimum action and the winning complexity (smaller complexity on ties)."""
    _check_lam(lam)
    F, idx = lower_envelope([lam], space.complexities, space.train_losses)
    return float(F[0]), space.points[int(idx[0])].complexity


def _gibbs_rows(A: np.ndarray, temperature: float):
    # A has shape (m, n); every row is one Gibbs system
    amin = A.min(axis=1, keepdims=True)
    w = np.exp(-(A - amin) / temperature)
    s = w.sum(axis=1, keepdims=True)
    p = w / s
    F = amin[:, 0] - temperature * np.log(s[:, 0])
    return p, F


def gibbs_weights(action_values, temperature: float):
    """Normalized Gibbs weights and ``log Z`` for raw action values (shifted exponentials)."""
    _check_positive_T(temperature)
    A = np.asarray(action_values, dtype=np.float64)[None, :]
    if A.shape[1] == 0:
        raise ValueError("need at least one state")
    p, F = _gibbs_rows(A, temperature)
    return p[0], float(-F[0] / temperature)


def gibbs(space: ModelSpace, params: ActionParams) -> GibbsDistribution:
    _check_positive_T(params.temperature)
    p, log_Z = gibbs_weights(actions(space, params.lam), params.temperature)
    return GibbsDistribution(p, log_Z, params)


def free_energy_T(space: ModelSpace, params: ActionParams) -> float:
    _check_positive_T(params.temperature)
    A = actions(space, params.lam)[None, :]
    _, F = _gibbs_rows(A, params.temperature)
    return float(F[0])


def variance(probabilities: np.ndarray, values: np.ndarray) -> float:
    m = float(probabilities @ values)
    d = values - m
    return float(probabilities @ (d * d))


def susceptibility(space: ModelSpace, params: ActionParams) -> float:
    """Variance of the complexity under the Gibbs distribution at ``params``."""
    g = gibbs(space, params)
    return variance(g.probabilities, space.complexities)


# Full width at half maximum of sech^2(u): cosh(u) = sqrt(2).
_SECH2_HALF = math.log(1.0 + math.sqrt(2.0))


def resonance_two_state(p1: ModelPoint, p2: ModelPoint) -> ResonanceReport:
    """Crossing of the two action lines and the susceptibility peak it produces (T=1).

    A resonance exists only when the more complex model also has the strictly
    smaller loss; otherwise one model wins for every positive lambda.
    """
    c1, c2 = p1.complexity, p2.complexity
    if c1 == c2:
        raise ValueError(f"two-state resonance needs distinct complexities, got {c1} twice")
    participating = frozenset((c1, c2))
    dl = p1.train_loss - p2.train_loss
    dc = c2 - c1
    if dl * dc <= 0.0:
        return ResonanceReport(None, 0.0, None, participating)
    lam_star = dl / dc
    gap = abs(dc)
    return ResonanceReport(
        lambda_star=lam_star,
        chi_peak=gap * gap / 4.0,
        peak_width_estimate=4.0 * _SECH2_HALF / gap,
        participating_complexities=participating,
    )


def _as_kstate(complexities) -> np.ndarray:
    c = np.asarray(complexities, dtype=np.float64)
    if c.ndim != 1 or len(c) < 2:
        raise ValueError(f"k-state analysis needs k >= 2 complexities, got {complexities!r}")
    return c


def kstate_chi_exact(complexities, epsilon: float) -> float:
    """Exact complexity variance of ``k`` tied states after shifting lambda by ``epsilon`` (T=1)."""
    c = _as_kstate(complexities)
    p, _ = gibbs_weights(epsilon * (c - c.mean()), 1.0)
    return variance(p, c)


def kstate_chi_expansion(complexities, epsilon: float) -> float:
    """Quadratic small-``epsilon`` expansion ``m2 - epsilon**2 * m4`` of the tied-state variance.

    ``m2`` and ``m4`` are the second and fourth central moments of the tied
    complexities. Only exact to O(epsilon**3) when the complexities are
    symmetric about their mean and, in addition, ``kappa4 = -2 m4``
    (e.g. two states); :func:`kstate_chi_cumulant_expansion` is exact to
    O(epsilon**3) in general.
    """
    c = _as_kstate(complexities)
    d = c - c.mean()
    k = len(c)
    return float(np.sum(d**2) / k - epsilon**2 * np.sum(d**4) / k)


def kstate_chi_cumulant_expansion(complexities, epsilon: float) -> float:
    """Second-order Taylor expansion of the tied-state variance: ``k2 - k3 e + k4 e^2 / 2``."""
    c = _as_kstate(complexities)
    d = c - c.mean()
    m2 = float(np.mean(d**2))
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    k4 = m4 - 3.0 * m2 * m2
    return m2 - m3 * epsilon + 0.5 * k4 * epsilon**2


def kstate_peak_fwhm(complexities) -> float:
    """Full width at half maximum of the exact tied-state ``chi(epsilon)`` curve."""
    c = _as_kstate(complexities)
    spread = float(c.max() - c.min())
    if spread == 0.0:
        raise ValueError("all complexities equal: chi is identically zero")
    f = lambda e: kstate_chi_exact(c, e)
    scale = 1.0 / spread
    grid = np.linspace(-20 * scale, 20 * scale, 4001)
    vals = np.array([f(e) for e in grid])
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda e: -f(e), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-14 * scale})
    e0, peak = float(res.x), -float(res.fun)
    half = 0.5 * peak
    g = lambda e: f(e) - half

    def crossing(direction: float) -> float:
        step = scale
        b = e0 + direction * step
        while g(b) > 0.0:
            step *= 2.0
            b = e0 + direction * step
        return optimize.brentq(g, *sorted((e0, b)), xtol=1e-15 * scale, rtol=4 * np.finfo(float).eps)

    return crossing(+1.0) - crossing(-1.0)


def sweep_lambda(space: ModelSpace, lambdas: Sequence[float], temperature: float) -> FreeEnergyCurve:
    """Free energy, mean complexity and susceptibility along a lambda grid.

    At ``temperature == 0`` the free energy is the exact lower envelope,
    ``mean_comp`` holds the winning complexity and ``chi`` is zero. Each
    lambda is handled independently of the others.
    """
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.ndim != 1 or len(lam) == 0:
        raise ValueError("lambdas must be a nonempty 1-d sequence")
    bad = np.flatnonzero(~np.isfinite(lam) | (lam < 0.0))
    if len(bad):
        raise ValueError(f"lambda[{bad[0]}] = {lam[bad[0]]} is not a finite nonnegative value")
    if np.any(np.diff(lam) <= 0.0):
        i = int(np.flatnonzero(np.diff(lam) <= 0.0)[0]) + 1
        raise ValueError(f"lambdas must be strictly increasing (violated at index {i})")
    if not (temperature >= 0.0 and math.isfinite(temperature)):
        raise ValueError(f"temperature must be finite and >= 0, got {temperature}")

    c = space.complexities
    ell = space.train_losses
    if temperature == 0.0:
        F, idx = lower_envelope(lam, c, ell)
        return FreeEnergyCurve(lam, F, c[idx], np.zeros_like(lam), 0.0)

    A = lam[:, None] * c[None, :] + ell[None, :]
    p, F = _gibbs_rows(A, temperature)
    mean = p @ c
    d = c[None, :] - mean[:, None]
    chi = np.sum(p * d * d, axis=1)
    return FreeEnergyCurve(lam, F, mean, chi, float(temperature))
