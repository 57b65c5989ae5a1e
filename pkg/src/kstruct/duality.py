"""Structure functions and their Legendre-Fenchel relation to the free energy."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import ModelSpace
from .thermo import FreeEnergyCurve, lower_envelope


@dataclass(frozen=True, eq=False)
class StructureFunction:
    alphas: np.ndarray
    h: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        if len(self.alphas) == 0 or len(self.alphas) != len(self.h):
            raise ValueError("alphas and h must be nonempty and of equal length")
        if np.any(np.diff(self.alphas) <= 0):
            raise ValueError("alphas must be strictly increasing")

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("alpha", "h"))
            for a, v in zip(self.alphas, self.h):
                w.writerow((int(a), repr(float(v))))
        return path


@dataclass(frozen=True)
class EnvelopeBreakpoint:
    lam: float
    slope_before: int
    slope_after: int


def structure_function(space: ModelSpace) -> StructureFunction:
    """Smallest train loss reachable within each complexity budget (running minimum)."""
    return StructureFunction(
        alphas=np.array([p.complexity for p in space.points], dtype=np.int64),
        h=np.minimum.accumulate(space.train_losses),
        source_tag=space.dataset_ref,
    )


def fenchel_h_to_F(sf: StructureFunction, lam: float) -> float:
    """``min_alpha [lam * alpha + h(alpha)]`` over the support of ``sf``."""
    if not lam >= 0.0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    F, _ = lower_envelope([lam], sf.alphas, sf.h)
    return float(F[0])


def fenchel_F_to_h(curve: FreeEnergyCurve, alpha: float) -> float:
    """``max_lam [F(lam) - lam * alpha]`` over the lambda grid of a zero-temperature curve.

    For a grid holding 0 and every breakpoint this is exact and returns the
    lower convex envelope of h at ``alpha``, which equals h only where
    ``(alpha, h(alpha))`` is a vertex of that envelope.
    """
    if curve.temperature != 0.0:
        raise ValueError(f"biconjugation needs a zero-temperature curve, got T={curve.temperature}")
    return float(np.max(curve.F - curve.lambdas * float(alpha)))


_TINY = float(np.nextafter(0.0, 1.0))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def envelope_vertices(space: ModelSpace) -> list:
    """Indices of the models that win the zero-temperature envelope for some lam >= 0.

    This is the lower convex hull of the (complexity, loss) points, from the
    smallest complexity up to the lowest-loss model (smallest complexity among
    equal losses), with collinear points dropped.
    """
    c = space.complexities
    ell = space.train_losses
    last = int(np.argmin(ell))
    hull: list = []
    for i in range(last + 1):
        p = (c[i], ell[i])
        while len(hull) >= 2 and _cross((c[hull[-2]], ell[hull[-2]]), (c[hull[-1]], ell[hull[-1]]), p) <= 0.0:
            hull.pop()
        hull.append(i)
    return hull


def detect_kinks(space: ModelSpace) -> list:
    """Breakpoints of the zero-temperature free energy, sorted by increasing lambda."""
    c = space.complexities
    ell = space.train_losses
    hull = envelope_vertices(space)
    out: list = []
    # walk from the lowest-loss vertex (wins near lam = 0) towards complexity minimum
    for hi, lo in zip(reversed(hull[1:]), reversed(hull[:-1])):
        # positive in exact arithmetic; clamp after underflow
        lam = max((ell[lo] - ell[hi]) / (c[hi] - c[lo]), _TINY)
        before = space.points[hi].complexity
        after = space.points[lo].complexity
        if out and lam <= out[-1].lam:
            # float round-off made two hull edges cross at the same lambda
            out[-1] = EnvelopeBreakpoint(out[-1].lam, out[-1].slope_before, after)
            continue
        out.append(EnvelopeBreakpoint(float(lam), before, after))
    return out


def exact_lambda_grid(space: ModelSpace) -> np.ndarray:
    """Zero plus every breakpoint: the grid on which biconjugation is exact."""
    return np.array([0.0] + [b.lam for b in detect_kinks(space)])


def write_breakpoints_csv(breakpoints, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("lambda", "slope_before", "slope_after"))
        for b in breakpoints:
            w.writerow((repr(float(b.lam)), b.slope_before, b.slope_after))
    return path


def elbow_from_test_loss(space: ModelSpace) -> int:
    """Complexity with the smallest noisy test loss (smaller complexity on ties)."""
    return space.points[int(np.argmin(space.test_losses_noisy))].complexity
