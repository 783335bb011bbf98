"""Alternating GAN training: ratio estimation by the discriminator, f-divergence
descent by the generator.

The discriminator ascends the variational lower bound ``E_q[T] - E_p[f*(T)]``
with ``T = g_f(V)``.  Its raw output ``V`` then doubles as a log density-ratio
estimate, and the generator minimizes ``E_p[f_G(q/p)]`` evaluated through it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.stats import gaussian_kde

from . import fdiv
from .densities import Density, Mixture1D, Mixture2D, QuadratureGrid, integrate, two_gaussians
from .fdiv import DomainError, FDivergence
from .neural import AdamState, Mlp, NonFiniteGradient, adam_step

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    """A step produced a non-finite loss or gradient; training stopped."""

    def __init__(self, step: int, reason: str, state=None, metrics=None):
        super().__init__(f"step {step}: {reason}")
        self.step = step
        self.state = state
        self.metrics = metrics if metrics is not None else []


@dataclass
class GanConfig:
    f_d: str = "gan-js"
    f_g: str = "gan-alt"
    data: Density = field(default_factory=two_gaussians)
    latent_dim: int = 2
    gen_hidden: tuple[int, ...] = (64, 64)
    disc_hidden: tuple[int, ...] = (64, 64)
    hidden: str = "leaky_relu"
    slope: float = 0.1
    init_std: float = 0.1
    batch_size: int = 128
    lr_d: float = 1e-3
    lr_g: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    disc_steps: int = 1
    steps: int = 20000
    seed: int = 0
    log_every: int = 1000
    n_eval: int = 4000

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.disc_steps < 1:
            raise ValueError("disc_steps must be at least 1")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        fdiv.divergence(self.f_d), fdiv.divergence(self.f_g)

    @property
    def fd(self) -> FDivergence:
        return fdiv.divergence(self.f_d)

    @property
    def fg(self) -> FDivergence:
        return fdiv.divergence(self.f_g)

    @property
    def data_dim(self) -> int:
        return 2 if isinstance(self.data, Mixture2D) else 1


@dataclass
class GanState:
    generator: Mlp
    discriminator: Mlp
    gen_opt: AdamState
    disc_opt: AdamState
    rng: np.random.Generator
    step: int = 0


@dataclass
class ModeReport:
    fractions: list[float]
    covered: int
    hq_fraction: float


def init_state(config: GanConfig) -> GanState:
    rng = np.random.default_rng(config.seed)
    kw = dict(hidden=config.hidden, slope=config.slope)
    dim = config.data_dim
    gen = Mlp.init([config.latent_dim, *config.gen_hidden, dim], rng, config.init_std, **kw)
    disc = Mlp.init([dim, *config.disc_hidden, 1], rng, config.init_std, **kw)
    adam = dict(beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    return GanState(gen, disc,
                    AdamState.for_params(gen.params, lr=config.lr_g, **adam),
                    AdamState.for_params(disc.params, lr=config.lr_d, **adam),
                    rng)


def sample_data(density: Density, rng: np.random.Generator, n: int) -> np.ndarray:
    x = density.sample(rng, n)
    return x.reshape(n, -1)


def discriminator_gradients(state: GanState, config: GanConfig, data_batch, model_batch):
    """Lower-bound estimate and gradients of its negation; nothing is updated."""
    disc = state.discriminator
    vq, cache_q = disc.forward(data_batch)
    vp, cache_p = disc.forward(model_batch)
    with np.errstate(invalid="ignore", over="ignore"):
        t, _, dt, _ = fdiv.lower_bound_terms(config.fd, vq)
        _, ft, _, dft = fdiv.lower_bound_terms(config.fd, vp)
    value = float(t.mean() - ft.mean())
    gq, _ = disc.backward(cache_q, -dt / len(vq))
    gp, _ = disc.backward(cache_p, dft / len(vp))
    return value, [a + b for a, b in zip(gq, gp)]


def discriminator_step(state: GanState, config: GanConfig, data_batch, model_batch) -> float:
    """One Adam ascent step on the Monte Carlo lower bound; returns its pre-step value."""
    value, grads = discriminator_gradients(state, config, data_batch, model_batch)
    if not math.isfinite(value):
        raise TrainingAborted(state.step, "non-finite discriminator objective")
    try:
        adam_step(state.disc_opt, state.discriminator.params, grads)
    except NonFiniteGradient as exc:
        raise TrainingAborted(state.step, f"discriminator {exc}") from None
    return value


def generator_gradients(state: GanState, config: GanConfig, latent_batch):
    """Objective value and generator parameter gradients; the discriminator is read only."""
    x, cache_g = state.generator.forward(latent_batch)
    v, cache_d = state.discriminator.forward(x)
    with np.errstate(invalid="ignore", over="ignore"):
        value = float(fdiv.generator_objective_term(config.fd, config.fg, v).mean())
        dv = fdiv.generator_objective_grad(config.fd, config.fg, v) / len(v)
    _, dx = state.discriminator.backward(cache_d, dv)
    grads, _ = state.generator.backward(cache_g, dx)
    return value, grads


def generator_step(state: GanState, config: GanConfig, latent_batch) -> float:
    """One Adam descent step on mean f_G(ratio(V(G(z)))); returns the pre-step value."""
    value, grads = generator_gradients(state, config, latent_batch)
    if not math.isfinite(value):
        raise TrainingAborted(state.step, "non-finite generator objective")
    try:
        adam_step(state.gen_opt, state.generator.params, grads)
    except NonFiniteGradient as exc:
        raise TrainingAborted(state.step, f"generator {exc}") from None
    return value


def generate(generator: Mlp, rng: np.random.Generator, n: int) -> np.ndarray:
    return generator(rng.standard_normal((n, generator.sizes[0])))


def mode_report(samples, mixture: Union[Mixture1D, Mixture2D], cover_fraction: float = 0.02,
                n_sigma: float = 3.0) -> ModeReport:
    """Assign samples to the nearest mode when within ``n_sigma`` of its stddev."""
    x = np.asarray(samples, dtype=np.float64)
    means = mixture.means.reshape(len(mixture.weights), -1)
    x = x.reshape(len(x), means.shape[1])
    d = np.sqrt(((x[:, None, :] - means[None, :, :]) ** 2).sum(-1))
    nearest = d.argmin(axis=1)
    hit = d[np.arange(len(x)), nearest] <= n_sigma * mixture.stddevs[nearest]
    counts = np.bincount(nearest[hit], minlength=len(means))
    fractions = counts / len(x)
    return ModeReport(fractions.tolist(), int((fractions >= cover_fraction).sum()), float(hit.mean()))


def kde_divergence(f: FDivergence, samples, q: Mixture1D, n_points: int = 2001) -> float:
    """D_f(q || KDE of samples) by quadrature; used only for monitoring."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    kde = gaussian_kde(samples, bw_method="silverman")
    lo, hi = q.envelope()
    grid = QuadratureGrid(min(lo, samples.min()), max(hi, samples.max()), n_points)
    x = grid.x
    log_p = np.maximum(kde.logpdf(x), -700.0)
    return float(integrate(fdiv.perspective(f, q.logpdf(x), log_p), grid))


def evaluate(state: GanState, config: GanConfig) -> dict:
    rng = np.random.default_rng([config.seed, state.step, 1])
    samples = generate(state.generator, rng, config.n_eval)
    rep = mode_report(samples, config.data)
    row = {"modes_covered": rep.covered, "hq_fraction": rep.hq_fraction, "kde_divergence": None}
    if config.data_dim == 1 and np.ptp(samples) > 0:
        row["kde_divergence"] = kde_divergence(config.fg, samples, config.data)
    return row


def train(config: GanConfig, state: Optional[GanState] = None):
    """Run ``config.steps`` alternations; returns ``(state, metrics)``.

    ``metrics`` holds one dict per step; mode coverage and the KDE divergence
    are filled every ``config.log_every`` steps and at the last step.
    """
    state = state or init_state(config)
    metrics: list[dict] = []
    n = config.batch_size
    for _ in range(config.steps):
        try:
            for _ in range(config.disc_steps):
                real = sample_data(config.data, state.rng, n)
                fake = generate(state.generator, state.rng, n)
                d_val = discriminator_step(state, config, real, fake)
            g_val = generator_step(state, config, state.rng.standard_normal((n, config.latent_dim)))
        except TrainingAborted as exc:
            exc.state, exc.metrics = state, metrics
            log.error("training aborted: %s", exc)
            raise
        state.step += 1
        row = {"step": state.step, "d_objective": d_val, "g_objective": g_val,
               "modes_covered": None, "hq_fraction": None, "kde_divergence": None}
        if state.step % config.log_every == 0 or state.step == config.steps:
            row.update(evaluate(state, config))
            log.info("step %d: d=%.4f g=%.4f modes=%s", state.step, d_val, g_val, row["modes_covered"])
        metrics.append(row)
    return state, metrics


def ratio_accuracy(discriminator: Mlp, f_d: FDivergence, q: Density, p: Density,
                   grid: QuadratureGrid, threshold: float = 1e-4) -> float:
    """Mean |log recovered ratio - log q/p| where q + p exceeds ``threshold``."""
    x = grid.x
    lq, lp = q.logpdf(x), p.logpdf(x)
    mask = np.exp(lq) + np.exp(lp) > threshold
    if not mask.any():
        raise DomainError("no grid point has q + p above the threshold")
    v = discriminator(x[mask, None]).ravel()
    est = np.log(fdiv.ratio_from_logit(f_d, v))
    return float(np.abs(est - (lq[mask] - lp[mask])).mean())


def clamp_fraction(discriminator: Mlp, f_d: FDivergence, q: Density, p: Density,
                   grid: QuadratureGrid, threshold: float = 1e-4) -> float:
    """Share of the high-density region where the recovered ratio hits a clamp bound."""
    x = grid.x
    mask = q.pdf(x) + p.pdf(x) > threshold
    r = fdiv.ratio_from_logit(f_d, discriminator(x[mask, None]).ravel())
    return float(((r <= f_d.u_min) | (r >= f_d.u_max)).mean())


def train_ratio_estimator(q: Density, p: Density, config: GanConfig) -> tuple[Mlp, list[float]]:
    """Fit a discriminator between two fixed densities; returns it and the bound trace."""
    state = init_state(config)
    values = []
    for _ in range(config.steps):
        real = sample_data(q, state.rng, config.batch_size)
        fake = sample_data(p, state.rng, config.batch_size)
        values.append(discriminator_step(state, config, real, fake))
        state.step += 1
    return state.discriminator, values
