"""Noisy-sine datasets and the three enumerable regression families.

Each fit returns a :class:`ModelPoint` carrying the complexity proxy and the
raw sums of squared errors on the train set and on both test sets.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import legendre

from .rng import STREAM_TEST_NOISE, STREAM_TEST_X, STREAM_TRAIN_NOISE, make_rng


class Family(str, enum.Enum):
    POLYNOMIAL = "polynomial"
    FOURIER = "fourier"
    TREE = "tree"

    @classmethod
    def parse(cls, value: "str | Family") -> "Family":
        if isinstance(value, Family):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown family {value!r} (expected one of: {names})") from None


class FitError(ValueError):
    """A single model fit could not be carried out."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    xs: np.ndarray
    ys_train: np.ndarray
    ys_clean: np.ndarray
    xs_test: np.ndarray
    ys_test_clean: np.ndarray
    ys_test_noisy: np.ndarray
    freq_n: Optional[int]
    noise_sigma: Optional[float]
    seed: Optional[int]

    @property
    def n_train(self) -> int:
        return len(self.xs)

    @property
    def n_test(self) -> int:
        return len(self.xs_test)

    @property
    def ident(self) -> str:
        return (
            f"sine(freq_n={self.freq_n},sigma={self.noise_sigma},seed={self.seed},"
            f"n_train={self.n_train},n_test={self.n_test})"
        )

    def identical_to(self, other: "Dataset") -> bool:
        """Bitwise equality of every array and every scalar field."""
        arrays = ("xs", "ys_train", "ys_clean", "xs_test", "ys_test_clean", "ys_test_noisy")
        for name in arrays:
            a, b = getattr(self, name), getattr(other, name)
            if a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return (self.freq_n, self.noise_sigma, self.seed) == (
            other.freq_n,
            other.noise_sigma,
            other.seed,
        )


@dataclass(frozen=True)
class ModelPoint:
    complexity: int
    train_loss: float
    test_loss_clean: float
    test_loss_noisy: float
    family: Family
    param_index: int

    def __post_init__(self):
        if self.complexity < 0:
            raise ValueError(f"complexity must be nonnegative, got {self.complexity}")
        for name in ("train_loss", "test_loss_clean", "test_loss_noisy"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class ModelSpace:
    points: tuple
    dataset_ref: str = ""

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise ValueError("a model space needs at least one point")
        cs = [p.complexity for p in self.points]
        if any(b <= a for a, b in zip(cs, cs[1:])):
            raise ValueError(f"complexities must be strictly increasing, got {cs}")

    @classmethod
    def from_pairs(
        cls,
        complexities: Sequence[int],
        losses: Sequence[float],
        test_losses: Optional[Sequence[float]] = None,
        family: Family = Family.POLYNOMIAL,
        dataset_ref: str = "synthetic",
    ) -> "ModelSpace":
        """Build a space straight from (complexity, loss) pairs, sorted by complexity."""
        if len(complexities) != len(losses):
            raise ValueError("complexities and losses differ in length")
        if test_losses is None:
            test_losses = losses
        order = sorted(range(len(complexities)), key=lambda i: complexities[i])
        pts = [
            ModelPoint(
                complexity=int(complexities[i]),
                train_loss=float(losses[i]),
                test_loss_clean=float(test_losses[i]),
                test_loss_noisy=float(test_losses[i]),
                family=family,
                param_index=int(complexities[i]),
            )
            for i in order
        ]
        return cls(tuple(pts), dataset_ref)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def complexities(self) -> np.ndarray:
        return np.array([p.complexity for p in self.points], dtype=np.float64)

    @property
    def train_losses(self) -> np.ndarray:
        return np.array([p.train_loss for p in self.points], dtype=np.float64)

    @property
    def test_losses_noisy(self) -> np.ndarray:
        return np.array([p.test_loss_noisy for p in self.points], dtype=np.float64)

    @property
    def test_losses_clean(self) -> np.ndarray:
        return np.array([p.test_loss_clean for p in self.points], dtype=np.float64)


def generate_dataset(
    n_train: int,
    n_test: int,
    freq_n: int,
    noise_sigma: float,
    seed: int,
) -> Dataset:
    """Sample ``sin(2 n pi x)`` on an equispaced train grid plus a random test set.

    Train abscissae are ``n_train`` equally spaced points on [0, 1] with both
    endpoints; test abscissae are sorted uniform draws. Train noise, test
    abscissae and test noise come from independent ``(seed, stream)`` streams.
    """
    if n_train < 2:
        raise ValueError(f"n_train must be >= 2, got {n_train}")
    if n_test < 1:
        raise ValueError(f"n_test must be >= 1, got {n_test}")
    if freq_n < 1:
        raise ValueError(f"freq_n must be a positive integer, got {freq_n}")
    if not (noise_sigma >= 0.0 and math.isfinite(noise_sigma)):
        raise ValueError(f"noise_sigma must be finite and >= 0, got {noise_sigma}")

    omega = 2.0 * freq_n * np.pi
    xs = np.linspace(0.0, 1.0, n_train)
    ys_clean = np.sin(omega * xs)
    ys_train = ys_clean + noise_sigma * make_rng(seed, STREAM_TRAIN_NOISE).standard_normal(n_train)

    xs_test = np.sort(make_rng(seed, STREAM_TEST_X).random(n_test))
    ys_test_clean = np.sin(omega * xs_test)
    ys_test_noisy = ys_test_clean + noise_sigma * make_rng(seed, STREAM_TEST_NOISE).standard_normal(
        n_test
    )
    return Dataset(
        xs=xs,
        ys_train=ys_train,
        ys_clean=ys_clean,
        xs_test=xs_test,
        ys_test_clean=ys_test_clean,
        ys_test_noisy=ys_test_noisy,
        freq_n=int(freq_n),
        noise_sigma=float(noise_sigma),
        seed=int(seed),
    )


def _sse(residuals: np.ndarray) -> float:
    return float(np.dot(residuals, residuals))


def _point_from_predictions(
    dataset: Dataset,
    pred_train: np.ndarray,
    pred_test: np.ndarray,
    complexity: int,
    family: Family,
    index: int,
) -> ModelPoint:
    return ModelPoint(
        complexity=complexity,
        train_loss=_sse(dataset.ys_train - pred_train),
        test_loss_clean=_sse(dataset.ys_test_clean - pred_test),
        test_loss_noisy=_sse(dataset.ys_test_noisy - pred_test),
        family=family,
        param_index=index,
    )


def _least_squares(design: np.ndarray, y: np.ndarray, what: str) -> np.ndarray:
    try:
        coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"{what}: least-squares solver failed: {exc}") from exc
    if rank < design.shape[1]:
        warnings.warn(
            f"{what}: design matrix has rank {rank} < {design.shape[1]}; "
            "using the minimum-norm solution",
            RankDeficiencyWarning,
            stacklevel=3,
        )
    return coef


def polynomial_design(xs: np.ndarray, degree: int) -> np.ndarray:
    # Legendre basis on [-1, 1] spans the same space as the monomials up to
    # `degree` but keeps the SVD well conditioned.
    return legendre.legvander(2.0 * np.asarray(xs) - 1.0, degree)


def fourier_design(xs: np.ndarray, max_mode: int) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    cols = [np.ones_like(xs)]
    for k in range(1, max_mode + 1):
        arg = 2.0 * k * np.pi * xs
        cols.append(np.cos(arg))
        cols.append(np.sin(arg))
    return np.column_stack(cols)


def fit_polynomial(dataset: Dataset, degree: int) -> ModelPoint:
    if degree < 0:
        raise FitError(f"degree must be >= 0, got {degree}", degree)
    if degree + 1 > dataset.n_train:
        raise FitError(
            f"degree {degree} needs {degree + 1} coefficients but only "
            f"{dataset.n_train} train points are available",
            degree,
        )
    coef = _least_squares(polynomial_design(dataset.xs, degree), dataset.ys_train, f"degree {degree}")
    return _point_from_predictions(
        dataset,
        polynomial_design(dataset.xs, degree) @ coef,
        polynomial_design(dataset.xs_test, degree) @ coef,
        complexity=degree + 1,
        family=Family.POLYNOMIAL,
        index=degree,
    )


def fit_fourier(dataset: Dataset, max_mode: int) -> ModelPoint:
    if max_mode < 0:
        raise FitError(f"max_mode must be >= 0, got {max_mode}", max_mode)
    p = 2 * max_mode + 1
    if p > dataset.n_train:
        raise FitError(
            f"max_mode {max_mode} needs {p} coefficients but only "
            f"{dataset.n_train} train points are available",
            max_mode,
        )
    coef = _least_squares(fourier_design(dataset.xs, max_mode), dataset.ys_train, f"mode {max_mode}")
    return _point_from_predictions(
        dataset,
        fourier_design(dataset.xs, max_mode) @ coef,
        fourier_design(dataset.xs_test, max_mode) @ coef,
        complexity=p,
        family=Family.FOURIER,
        index=max_mode,
    )


def grow_tree(xs: np.ndarray, ys: np.ndarray, max_depth: int):
    """Greedy CART regression on sorted, distinct 1-d abscissae.

    Returns ``(thresholds, leaf_values)``: the tree as a piecewise-constant
    function with ``leaf_values[i]`` on ``(thresholds[i-1], thresholds[i]]``.
    A node is split at the midpoint threshold minimizing the children's summed
    squared error (lowest threshold on ties) unless the depth budget is spent,
    the node holds one sample, or no split lowers the error.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    thresholds: list = []
    leaves: list = []

    def grow(lo: int, hi: int, depth_left: int) -> None:
        seg = ys[lo:hi]
        n = hi - lo
        mean = float(seg.mean())
        if depth_left == 0 or n < 2:
            leaves.append(mean)
            return
        c = seg - mean
        parent = float(c @ c)
        if parent == 0.0:
            leaves.append(mean)
            return
        s = np.cumsum(c)[:-1]
        s2 = np.cumsum(c * c)[:-1]
        n_left = np.arange(1, n, dtype=np.float64)
        n_right = n - n_left
        tot = float(c.sum())
        children = (s2 - s * s / n_left) + ((parent - s2) - (tot - s) ** 2 / n_right)
        k = int(np.argmin(children))
        if parent - children[k] <= 0.0:
            leaves.append(mean)
            return
        grow(lo, lo + k + 1, depth_left - 1)
        thresholds.append(0.5 * (xs[lo + k] + xs[lo + k + 1]))
        grow(lo + k + 1, hi, depth_left - 1)

    grow(0, len(xs), max_depth)
    return np.array(thresholds), np.array(leaves)


def predict_tree(thresholds: np.ndarray, leaf_values: np.ndarray, x: np.ndarray) -> np.ndarray:
    # x <= threshold goes left
    return leaf_values[np.searchsorted(thresholds, x, side="left")]


def fit_tree(dataset: Dataset, depth: int) -> ModelPoint:
    if depth < 0:
        raise FitError(f"depth must be >= 0, got {depth}", depth)
    thr, vals = grow_tree(dataset.xs, dataset.ys_train, depth)
    return _point_from_predictions(
        dataset,
        predict_tree(thr, vals, dataset.xs),
        predict_tree(thr, vals, dataset.xs_test),
        complexity=depth,
        family=Family.TREE,
        index=depth,
    )


_FITTERS = {
    Family.POLYNOMIAL: fit_polynomial,
    Family.FOURIER: fit_fourier,
    Family.TREE: fit_tree,
}


def fit(dataset: Dataset, family: "Family | str", index: int) -> ModelPoint:
    return _FITTERS[Family.parse(family)](dataset, index)


def enumerate_space(dataset: Dataset, family: "Family | str", max_index: int) -> ModelSpace:
    """Fit indices ``0..max_index`` of one family; points come out sorted by complexity."""
    family = Family.parse(family)
    if max_index < 0:
        raise FitError(f"max_index must be >= 0, got {max_index}", max_index)
    points = []
    for d in range(max_index + 1):
        try:
            points.append(_FITTERS[family](dataset, d))
        except FitError as exc:
            raise FitError(f"{family.value} index {d}: {exc}", d) from exc
    points.sort(key=lambda p: p.complexity)
    return ModelSpace(tuple(points), dataset.ident)


DATASET_CSV_HEADER = ("split", "x", "y_noisy", "y_clean")


def write_dataset_csv(dataset: Dataset, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_CSV_HEADER)
        for x, yn, yc in zip(dataset.xs, dataset.ys_train, dataset.ys_clean):
            w.writerow(("train", repr(float(x)), repr(float(yn)), repr(float(yc))))
        for x, yn, yc in zip(dataset.xs_test, dataset.ys_test_noisy, dataset.ys_test_clean):
            w.writerow(("test", repr(float(x)), repr(float(yn)), repr(float(yc))))
    return path


def read_dataset_csv(
    path,
    freq_n: Optional[int] = None,
    noise_sigma: Optional[float] = None,
    seed: Optional[int] = None,
) -> Dataset:
    """Load a dataset written by :func:`write_dataset_csv`.

    The CSV carries no generation metadata, so ``freq_n``, ``noise_sigma``
    and ``seed`` are attached only if the caller supplies them.
    """
    rows = {"train": [], "test": []}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DATASET_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(DATASET_CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4 or row[0] not in rows:
                raise ValueError(f"{path}:{lineno}: malformed row {row}")
            rows[row[0]].append([float(v) for v in row[1:]])
    train = np.array(rows["train"], dtype=np.float64).reshape(-1, 3)
    test = np.array(rows["test"], dtype=np.float64).reshape(-1, 3)
    if len(train) < 2:
        raise ValueError(f"{path}: need at least 2 train rows")
    if np.any(np.diff(train[:, 0]) <= 0):
        raise ValueError(f"{path}: train abscissae must be strictly increasing")
    return Dataset(
        xs=train[:, 0].copy(),
        ys_train=train[:, 1].copy(),
        ys_clean=train[:, 2].copy(),
        xs_test=test[:, 0].copy(),
        ys_test_clean=test[:, 2].copy(),
        ys_test_noisy=test[:, 1].copy(),
        freq_n=freq_n,
        noise_sigma=noise_sigma,
        seed=seed,
    )
