"""Command line entry point: ``kstruct run | sweep | check``.

Exit codes: 0 success, 1 a self-check or I/O failure, 2 invalid
configuration, 3 numerical failure.
"""

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .experiment import PROFILES, ConfigError, config_from_mapping, load_config, parse_config_text, run_experiment
from .models import FitError, enumerate_space, generate_dataset
from .sampler import BACKEND
from .thermo import sweep_lambda

log = logging.getLogger("kstruct")

# flag -> config field
_FIELD_FLAGS = {
    "family": "family",
    "freq_n": "freq_n",
    "n_train": "n_train",
    "n_test": "n_test",
    "sigma": "noise_sigma",
    "max_index": "max_index",
    "lambda_min": "lambda_min",
    "lambda_max": "lambda_max",
    "lambda_count": "lambda_count",
    "lambda_scale": "lambda_scale",
    "temperature": "temperature",
    "seed": "seed",
    "divergence_factor": "divergence_factor",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--profile", choices=sorted(PROFILES), help="base profile (default poly6)")
    for flag in _FIELD_FLAGS:
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, metavar=flag.upper())


def _config(args):
    values = {}
    if args.config:
        values.update(parse_config_text(open(args.config, encoding="utf-8").read()))
    if args.profile:
        values["profile"] = args.profile
    for flag, fld in _FIELD_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            values[fld] = v
    if getattr(args, "output_dir", None):
        values["output_dir"] = args.output_dir
    return config_from_mapping(values)


def cmd_run(args) -> int:
    cfg = _config(args)
    if cfg.output_dir is None:
        raise ConfigError({"output_dir": "required (pass --output-dir or set output_dir)"})
    report = run_experiment(cfg)
    print((report.files["summary"]).read_text(encoding="utf-8"), end="")
    for name, path in sorted(report.files.items()):
        log.info("wrote %s: %s", name, path)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    ds = generate_dataset(cfg.n_train, cfg.n_test, cfg.freq_n, cfg.noise_sigma, cfg.seed)
    space = enumerate_space(ds, cfg.family, cfg.max_index)
    curve = sweep_lambda(space, cfg.lambda_grid(), cfg.temperature)
    if args.output:
        curve.write_csv(args.output)
    else:
        print("lambda,F,mean_comp,chi")
        for row in zip(curve.lambdas, curve.F, curve.mean_comp, curve.chi):
            print(",".join(repr(float(v)) for v in row))
    return 0


def cmd_check(args) -> int:
    from .selfcheck import run_all

    ok = True
    for name, value, tol, passed in run_all():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: max violation {value:.3e} (tol {tol:.0e})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kstruct", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kstruct {__version__} ({BACKEND} kernel)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full experiment: CSVs and summary into --output-dir")
    _add_config_flags(p)
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="free-energy / susceptibility sweep as CSV")
    _add_config_flags(p)
    p.add_argument("--output", "-o", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="detailed-balance and duality self-tests")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for key, msg in exc.errors.items():
            print(f"config error: {key}: {msg}", file=sys.stderr)
        return 2
    except (FitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
