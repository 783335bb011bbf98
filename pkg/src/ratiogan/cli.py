"""Command-line experiments that write plot-ready CSV files.

Commands
--------
profile     ``profiles.csv``: divergence, u, f
fit         ``fit.csv``: divergence, mu, sigma, value, converged, n_iter
            ``fit_curves.csv``: x, q, then one model density column per divergence
train       ``metrics.csv``: step, d_objective, g_objective, modes_covered, hq_fraction, kde_divergence
            ``samples.csv``: 10k generator samples (x or x, y)
            ``checkpoint.json``: generator and discriminator weights
ratio-eval  ``ratio_eval.csv``: metric, value

Every command accepts ``--config FILE`` with ``key = value`` lines using the
flag names (dashes or underscores).  Explicit flags win over the file, which
wins over built-in defaults.  Output goes to ``--out``, else to
``$RATIOGAN_OUTPUT_DIR``, else the working directory.  Floats are written
with 17 significant digits.

Exit codes: 0 success (non-converged fits are flagged, not fatal), 1 usage
error, 2 numerical abort (partial outputs are still written).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import fdiv
from .densities import Gaussian1D, Mixture1D, NumericalError, QuadratureGrid, ring8, two_gaussians
from .fit import fit_gaussian
from .neural import save_checkpoint
from .train import GanConfig, TrainingAborted, clamp_fraction, generate, ratio_accuracy, train, train_ratio_estimator

OUTPUT_ENV = "RATIOGAN_OUTPUT_DIR"
N_SAMPLES = 10_000
log = logging.getLogger("ratiogan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x) + 0.0, ".17g")  # + 0.0 folds -0 into 0


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


# -- option handling -------------------------------------------------------

DEFAULTS = {
    "profile": dict(div="gan-alt,kl,rkl,js", u_min=0.01, u_max=10.0, n_points=200),
    "fit": dict(div="gan-alt,rkl,js,kl", weights="0.5,0.5", means="-2,2", stddevs="0.5,0.5", n_curve=801),
    "train": dict(data="mix1d", fd="gan-js", fg="gan-alt", steps=20000, seed=0, batch_size=128,
                  lr_d=1e-3, lr_g=1e-3, beta1=0.5, beta2=0.999, init_std=0.1, hidden="64,64",
                  disc_steps=1, log_every=1000, latent_dim=2),
    "ratio-eval": dict(fd="gan-js", q_mean=0.5, q_std=1.0, p_mean=-0.5, p_std=1.0, steps=5000, seed=0,
                       batch_size=128, lr_d=1e-3, init_std=0.1, hidden="64,64"),
}


def _read_config(path: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        text = Path(path).read_text()
        parser.read_string("[ratiogan]\n" + text)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    return {k.replace("-", "_"): v for k, v in parser["ratiogan"].items()}


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file and explicit flags, in increasing priority."""
    defaults = DEFAULTS[command]
    opts = dict(defaults)
    if args.config:
        for key, raw in _read_config(args.config).items():
            if key in ("out",):
                opts[key] = raw
                continue
            if key not in defaults:
                raise UsageError(f"unknown key {key!r} in config file for {command}")
            opts[key] = type(defaults[key])(raw) if not isinstance(defaults[key], str) else raw
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config"):
            opts[key] = value
    return opts


def output_dir(opts: dict) -> Path:
    out = Path(opts.get("out") or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _divergences(text: str) -> list[fdiv.FDivergence]:
    try:
        return [fdiv.divergence(name.strip()) for name in text.split(",") if name.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(s) for s in str(text).split(",")]
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of numbers, got {text!r}") from None


def _sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(s) for s in str(text).split(",") if s.strip())
    except ValueError:
        raise UsageError(f"hidden must be comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise UsageError("hidden needs at least one positive layer width")
    return sizes


# -- commands --------------------------------------------------------------

def cmd_profile(opts: dict) -> int:
    divs = _divergences(opts["div"])
    if not 0 < opts["u_min"] < opts["u_max"]:
        raise UsageError("need 0 < u-min < u-max")
    u = np.geomspace(opts["u_min"], opts["u_max"], int(opts["n_points"]))
    if opts["u_min"] <= 1.0 <= opts["u_max"]:
        u = np.union1d(u, [1.0])
    rows = [(d.name, ui, fi) for d in divs for ui, fi in zip(u, fdiv.f_eval(d, u))]
    write_csv(output_dir(opts) / "profiles.csv", ["divergence", "u", "f"], rows)
    return 0


def _mixture(opts) -> Mixture1D:
    try:
        return Mixture1D.from_params(_floats(opts["weights"], "weights"), _floats(opts["means"], "means"),
                                     _floats(opts["stddevs"], "stddevs"))
    except ValueError as exc:
        raise UsageError(f"invalid mixture: {exc}") from None


def cmd_fit(opts: dict) -> int:
    divs = _divergences(opts["div"])
    q = _mixture(opts)
    results = []
    for d in divs:
        res = fit_gaussian(d, q)
        if not res.converged:
            log.warning("%s fit did not converge", d.name)
        results.append(res)
    out = output_dir(opts)
    write_csv(out / "fit.csv", ["divergence", "mu", "sigma", "value", "converged", "n_iter"],
              [(r.divergence, r.mean, r.stddev, r.value, r.converged, len(r.trace)) for r in results])
    lo, hi = q.envelope(4.0)
    x = np.linspace(lo, hi, int(opts["n_curve"]))
    cols = [x, q.pdf(x)] + [r.density.pdf(x) for r in results]
    write_csv(out / "fit_curves.csv", ["x", "q"] + [r.divergence for r in results], zip(*cols))
    return 0


def _train_config(opts: dict) -> GanConfig:
    data = {"ring8": ring8, "mix1d": two_gaussians}.get(opts["data"])
    if data is None:
        raise UsageError(f"unknown data set {opts['data']!r}; expected ring8 or mix1d")
    hidden = _sizes(opts["hidden"])
    try:
        return GanConfig(f_d=opts["fd"], f_g=opts["fg"], data=data(), steps=int(opts["steps"]),
                         seed=int(opts["seed"]), batch_size=int(opts["batch_size"]), lr_d=float(opts["lr_d"]),
                         lr_g=float(opts["lr_g"]), beta1=float(opts["beta1"]), beta2=float(opts["beta2"]),
                         init_std=float(opts["init_std"]), gen_hidden=hidden, disc_hidden=hidden,
                         disc_steps=int(opts["disc_steps"]), log_every=int(opts["log_every"]),
                         latent_dim=int(opts["latent_dim"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


METRIC_COLUMNS = ["step", "d_objective", "g_objective", "modes_covered", "hq_fraction", "kde_divergence"]


def cmd_train(opts: dict) -> int:
    config = _train_config(opts)
    out = output_dir(opts)
    code = 0
    try:
        state, metrics = train(config)
    except TrainingAborted as exc:
        log.error("%s; writing partial outputs", exc)
        state, metrics, code = exc.state, exc.metrics, 2
    write_csv(out / "metrics.csv", METRIC_COLUMNS, ([row[k] for k in METRIC_COLUMNS] for row in metrics))
    samples = generate(state.generator, np.random.default_rng([config.seed, 2]), N_SAMPLES)
    write_csv(out / "samples.csv", ["x", "y"][: samples.shape[1]], samples.tolist())
    save_checkpoint(out / "checkpoint.json", generator=state.generator, discriminator=state.discriminator)
    return code


def cmd_ratio_eval(opts: dict) -> int:
    try:
        q = Gaussian1D(float(opts["q_mean"]), float(opts["q_std"]))
        p = Gaussian1D(float(opts["p_mean"]), float(opts["p_std"]))
        config = GanConfig(f_d=opts["fd"], steps=int(opts["steps"]), seed=int(opts["seed"]),
                           batch_size=int(opts["batch_size"]), lr_d=float(opts["lr_d"]),
                           init_std=float(opts["init_std"]), disc_hidden=_sizes(opts["hidden"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    disc, values = train_ratio_estimator(q, p, config)
    grid = QuadratureGrid.covering(q, p, n_points=2001)
    rows = [("ratio_error", ratio_accuracy(disc, config.fd, q, p, grid)),
            ("clamp_fraction", clamp_fraction(disc, config.fd, q, p, grid)),
            ("final_bound", values[-1] if values else math.nan)]
    write_csv(output_dir(opts) / "ratio_eval.csv", ["metric", "value"], rows)
    for name, value in rows:
        print(f"{name} {fmt(value)}")
    return 0


COMMANDS = {"profile": cmd_profile, "fit": cmd_fit, "train": cmd_train, "ratio-eval": cmd_ratio_eval}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ratiogan", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
        return p

    p = common(sub.add_parser("profile", help="tabulate f(u) for several divergences"))
    p.add_argument("--div", help="comma-separated divergence names")
    p.add_argument("--u-min", type=float)
    p.add_argument("--u-max", type=float)
    p.add_argument("--n-points", type=int)

    p = common(sub.add_parser("fit", help="fit one Gaussian to a 1D mixture per divergence"))
    p.add_argument("--div")
    p.add_argument("--weights")
    p.add_argument("--means", help="comma list; write --means=-2,2 when it starts with a minus")
    p.add_argument("--stddevs")
    p.add_argument("--n-curve", type=int)

    p = common(sub.add_parser("train", help="train a GAN on a toy data set"))
    p.add_argument("--data", choices=["ring8", "mix1d"])
    p.add_argument("--fd")
    p.add_argument("--fg")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr-d", type=float)
    p.add_argument("--lr-g", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--init-std", type=float)
    p.add_argument("--hidden", help="hidden layer widths, e.g. 64,64")
    p.add_argument("--disc-steps", type=int)
    p.add_argument("--log-every", type=int)
    p.add_argument("--latent-dim", type=int)

    p = common(sub.add_parser("ratio-eval", help="train a discriminator between two fixed Gaussians"))
    p.add_argument("--fd")
    for side in ("q", "p"):
        p.add_argument(f"--{side}-mean", type=float)
        p.add_argument(f"--{side}-std", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr-d", type=float)
    p.add_argument("--init-std", type=float)
    p.add_argument("--hidden")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    del args.verbose
    try:
        opts = resolve(args.command, args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"ratiogan: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, fdiv.DomainError, FloatingPointError, TrainingAborted) as exc:
        print(f"ratiogan: numerical error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
