"""End-to-end loss/complexity experiments on noisy sine data.

A run goes dataset -> model space -> structure function -> free-energy sweeps
(T = 0 and the configured T) -> envelope breakpoints -> test-loss elbow, and
writes every intermediate as CSV plus a plain-text summary.

Config files use one ``key = value`` pair per line; ``#`` starts a comment,
blank lines are ignored, keys are the :class:`ExperimentConfig` field names
(plus ``profile`` to pick the base profile) and may appear at most once.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .duality import (
    StructureFunction,
    detect_kinks,
    elbow_from_test_loss,
    structure_function,
    write_breakpoints_csv,
)
from .models import Family, ModelSpace, enumerate_space, generate_dataset, write_dataset_csv
from .thermo import FreeEnergyCurve, sweep_lambda


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` maps field name to message."""

    def __init__(self, errors: dict):
        self.errors = dict(errors)
        super().__init__("; ".join(f"{k}: {v}" for k, v in self.errors.items()))


@dataclass(frozen=True)
class ExperimentConfig:
    family: Family = Family.POLYNOMIAL
    freq_n: int = 3
    n_train: int = 256
    n_test: int = 512
    noise_sigma: float = 0.25
    max_index: int = 50
    lambda_min: float = 1e-3
    lambda_max: float = 1e3
    lambda_count: int = 241
    lambda_scale: str = "log"
    temperature: float = 1.0
    seed: int = 1
    divergence_factor: float = 1.1
    output_dir: Optional[str] = None

    def validate(self) -> "ExperimentConfig":
        errs = {}
        try:
            fam = Family.parse(self.family)
        except ValueError as exc:
            errs["family"] = str(exc)
            fam = None
        if self.freq_n < 1:
            errs["freq_n"] = f"must be >= 1, got {self.freq_n}"
        if self.n_train < 2:
            errs["n_train"] = f"must be >= 2, got {self.n_train}"
        if self.n_test < 1:
            errs["n_test"] = f"must be >= 1, got {self.n_test}"
        if not (self.noise_sigma >= 0.0 and math.isfinite(self.noise_sigma)):
            errs["noise_sigma"] = f"must be finite and >= 0, got {self.noise_sigma}"
        if self.max_index < 0:
            errs["max_index"] = f"must be >= 0, got {self.max_index}"
        elif fam is Family.POLYNOMIAL and self.max_index + 1 > self.n_train:
            errs["max_index"] = f"degree {self.max_index} needs more than n_train={self.n_train} points"
        elif fam is Family.FOURIER and 2 * self.max_index + 1 > self.n_train:
            errs["max_index"] = f"mode {self.max_index} needs more than n_train={self.n_train} points"
        if self.lambda_scale not in ("log", "linear"):
            errs["lambda_scale"] = f"must be 'log' or 'linear', got {self.lambda_scale!r}"
        if not (self.lambda_min >= 0.0 and math.isfinite(self.lambda_min)):
            errs["lambda_min"] = f"must be finite and >= 0, got {self.lambda_min}"
        elif self.lambda_scale == "log" and self.lambda_min <= 0.0:
            errs["lambda_min"] = "must be > 0 for a log-spaced grid"
        if not (self.lambda_max > self.lambda_min and math.isfinite(self.lambda_max)):
            errs["lambda_max"] = f"must be finite and > lambda_min, got {self.lambda_max}"
        if self.lambda_count < 2:
            errs["lambda_count"] = f"must be >= 2, got {self.lambda_count}"
        if not (self.temperature >= 0.0 and math.isfinite(self.temperature)):
            errs["temperature"] = f"must be finite and >= 0, got {self.temperature}"
        if not 0 <= self.seed < 2**64:
            errs["seed"] = f"must be an unsigned 64-bit integer, got {self.seed}"
        if not (self.divergence_factor >= 1.0 and math.isfinite(self.divergence_factor)):
            errs["divergence_factor"] = f"must be >= 1, got {self.divergence_factor}"
        if errs:
            raise ConfigError(errs)
        return replace(self, family=fam)

    def lambda_grid(self) -> np.ndarray:
        if self.lambda_scale == "log":
            return np.geomspace(self.lambda_min, self.lambda_max, self.lambda_count)
        return np.linspace(self.lambda_min, self.lambda_max, self.lambda_count)


PROFILES = {
    "poly6": ExperimentConfig(family=Family.POLYNOMIAL, freq_n=3, max_index=50),
    "fourier4": ExperimentConfig(family=Family.FOURIER, freq_n=2, max_index=48),
    "tree4": ExperimentConfig(family=Family.TREE, freq_n=2, max_index=12),
}

_FIELD_TYPES = {
    "family": Family.parse,
    "freq_n": int,
    "n_train": int,
    "n_test": int,
    "noise_sigma": float,
    "max_index": int,
    "lambda_min": float,
    "lambda_max": float,
    "lambda_count": int,
    "lambda_scale": str,
    "temperature": float,
    "seed": int,
    "divergence_factor": float,
    "output_dir": str,
}


def config_from_mapping(values: dict, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Override ``base`` (or the named ``profile``) with string-valued fields."""
    values = dict(values)
    errs = {}
    if base is None:
        name = values.pop("profile", "poly6")
        if name not in PROFILES:
            raise ConfigError({"profile": f"unknown profile {name!r} (known: {', '.join(PROFILES)})"})
        base = PROFILES[name]
    else:
        values.pop("profile", None)
    updates = {}
    for key, raw in values.items():
        if key not in _FIELD_TYPES:
            errs[key] = "unknown key"
            continue
        try:
            updates[key] = _FIELD_TYPES[key](raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            errs[key] = f"cannot parse {raw!r}: {exc}"
    if errs:
        raise ConfigError(errs)
    return replace(base, **updates).validate()


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError({f"line {lineno}": f"expected 'key = value', got {line!r}"})
        if key in out:
            raise ConfigError({key: f"duplicate key on line {lineno}"})
        out[key] = value
    return out


def load_config(path) -> ExperimentConfig:
    return config_from_mapping(parse_config_text(Path(path).read_text(encoding="utf-8")))


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for f in fields(config):
        v = getattr(config, f.name)
        # where outputs land is not part of the experiment
        if f.name == "output_dir" or v is None:
            continue
        if isinstance(v, Family):
            v = v.value
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class DivergenceTable:
    complexities: np.ndarray
    train_sse: np.ndarray
    test_sse: np.ndarray
    ratio: np.ndarray
    factor: float
    flagged_complexity: Optional[int]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("complexity", "train_sse", "test_sse", "ratio", "flagged"))
            for c, tr, te, r in zip(self.complexities, self.train_sse, self.test_sse, self.ratio):
                w.writerow((int(c), repr(float(tr)), repr(float(te)), repr(float(r)),
                            int(c == self.flagged_complexity)))
        return path


@dataclass(frozen=True, eq=False)
class RunReport:
    config: ExperimentConfig
    space: ModelSpace
    structure_function: StructureFunction
    free_energy_curve: FreeEnergyCurve
    thermal_curve: FreeEnergyCurve
    breakpoints: list
    resonance_lambdas: list
    chi_peak_lambdas: list
    elbow_alpha: int
    tool_version: str = __version__
    files: dict = field(default_factory=dict)

    def breakpoint_in_range(self, lam: float) -> bool:
        return self.config.lambda_min < lam < self.config.lambda_max


def _local_maxima(curve: FreeEnergyCurve) -> list:
    chi = curve.chi
    out = []
    for i in range(1, len(chi) - 1):
        if chi[i] > chi[i - 1] and chi[i] >= chi[i + 1]:
            out.append(float(curve.lambdas[i]))
    return out


def compare_train_test(report: RunReport, factor: Optional[float] = None) -> DivergenceTable:
    """Per-complexity train vs noisy-test SSE, flagging the first overfitting rise.

    The flag marks the first complexity whose test SSE exceeds ``factor``
    times the smallest test SSE seen at lower or equal complexity.
    """
    if factor is None:
        factor = report.config.divergence_factor
    space = report.space
    train = space.train_losses
    test = space.test_losses_noisy
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(train > 0.0, test / np.where(train > 0.0, train, 1.0), np.inf)
    running = np.minimum.accumulate(test)
    hits = np.flatnonzero(test > factor * running)
    flagged = space.points[int(hits[0])].complexity if len(hits) else None
    return DivergenceTable(space.complexities.astype(np.int64), train, test, ratio, float(factor), flagged)


def _g(v: float) -> str:
    return f"{float(v):.9g}"


def summary_text(report: RunReport) -> str:
    cfg = report.config
    div = compare_train_test(report)
    lines = [
        f"kstruct {report.tool_version}",
        "",
        "[config]",
        dump_config(cfg).rstrip("\n"),
        "",
        "[models]",
        "complexity  index  train_sse  test_sse_clean  test_sse_noisy  h",
    ]
    for p, h in zip(report.space.points, report.structure_function.h):
        lines.append(
            f"{p.complexity}  {p.param_index}  {_g(p.train_loss)}  {_g(p.test_loss_clean)}  "
            f"{_g(p.test_loss_noisy)}  {_g(h)}"
        )
    lines += ["", "[breakpoints]"]
    if not report.breakpoints:
        lines.append("none")
    for b in report.breakpoints:
        where = "in-range" if report.breakpoint_in_range(b.lam) else "out-of-range"
        lines.append(f"lambda={_g(b.lam)}  slope {b.slope_before} -> {b.slope_after}  {where}")
    lines += [
        "",
        "[susceptibility]",
        f"temperature={_g(report.thermal_curve.temperature)}",
        "chi_peaks=" + (", ".join(_g(v) for v in report.chi_peak_lambdas) or "none"),
        "",
        "[elbow]",
        f"alpha_star={report.elbow_alpha}",
        "divergence_flag="
        + ("none" if div.flagged_complexity is None else str(div.flagged_complexity))
        + f" (factor {_g(div.factor)})",
    ]
    return "\n".join(lines) + "\n"


def write_loss_vs_complexity(report: RunReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("complexity", "param_index", "train_sse", "test_sse_clean", "test_sse_noisy", "h"))
        for p, h in zip(report.space.points, report.structure_function.h):
            w.writerow((p.complexity, p.param_index, repr(p.train_loss), repr(p.test_loss_clean),
                        repr(p.test_loss_noisy), repr(float(h))))
    return path


def emit_plot_data(report: RunReport, out_dir) -> dict:
    """Write the per-figure CSVs (schemas in the README); returns name -> path."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return {
            "loss_vs_complexity": write_loss_vs_complexity(report, out / "loss_vs_complexity.csv"),
            "free_energy": report.free_energy_curve.write_csv(out / "free_energy.csv"),
            "susceptibility": report.thermal_curve.write_csv(out / "susceptibility.csv"),
            "breakpoints": write_breakpoints_csv(report.breakpoints, out / "breakpoints.csv"),
        }
    except OSError as exc:
        raise OSError(f"cannot write plot data under {out}: {exc}") from exc


def run_experiment(config: ExperimentConfig, output_dir=None) -> RunReport:
    config = config.validate()
    ds = generate_dataset(config.n_train, config.n_test, config.freq_n, config.noise_sigma, config.seed)
    space = enumerate_space(ds, config.family, config.max_index)
    sf = structure_function(space)
    lambdas = config.lambda_grid()
    curve0 = sweep_lambda(space, lambdas, 0.0)
    curve_t = curve0 if config.temperature == 0.0 else sweep_lambda(space, lambdas, config.temperature)
    kinks = detect_kinks(space)
    report = RunReport(
        config=config,
        space=space,
        structure_function=sf,
        free_energy_curve=curve0,
        thermal_curve=curve_t,
        breakpoints=kinks,
        resonance_lambdas=[b.lam for b in kinks],
        chi_peak_lambdas=_local_maxima(curve_t),
        elbow_alpha=elbow_from_test_loss(space),
    )
    out = output_dir if output_dir is not None else config.output_dir
    if out is not None:
        out = Path(out)
        files = emit_plot_data(report, out)
        files["dataset"] = write_dataset_csv(ds, out / "dataset.csv")
        files["structure_function"] = sf.write_csv(out / "structure_function.csv")
        files["divergence"] = compare_train_test(report).write_csv(out / "divergence.csv")
        (out / "config.txt").write_text(dump_config(config), encoding="utf-8")
        files["config"] = out / "config.txt"
        (out / "summary.txt").write_text(summary_text(report), encoding="utf-8")
        files["summary"] = out / "summary.txt"
        report.files.update(files)
    return report
