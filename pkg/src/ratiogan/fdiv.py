"""f-divergence calculus and the generator objective family.

Every divergence is described by its generator function ``f`` on the density
ratio ``u = q/p``.  Besides ``f`` itself we need ``f'`` (the optimal
discriminator is ``f'(q/p)``), its inverse (to read a density ratio back out of
a discriminator), and the Fenchel conjugate ``f*`` (which appears in the
variational lower bound the discriminator maximizes).

The discriminator output activation is chosen as ``g_f(v) = f'(e^v)`` for every
divergence.  For the standard GAN divergence that is ``-log(1 + e^{-v})``; in
general it means the raw network output ``v`` is an estimate of ``log(q/p)``
regardless of which divergence the discriminator targets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, xlogy

U_MIN = 1e-8
U_MAX = 1e8
LOGIT_CLAMP = 30.0
ALPHA_SNAP = 1e-6

LOG2 = math.log(2.0)


class DomainError(ValueError):
    """An argument lies outside the domain of the requested function."""


class DivergenceKind(enum.Enum):
    GAN_JS = "gan-js"
    KL = "kl"
    REVERSE_KL = "rkl"
    JS = "js"
    SQUARED_HELLINGER = "hellinger"
    ALPHA = "alpha"
    GAN_ALT = "gan-alt"


def _softplus(x):
    return np.logaddexp(0.0, x)


class _Calculus:
    """Closed forms for one divergence family member.

    Subclasses supply f, f', f'', (f')^{-1} and the conjugate.  The remaining
    methods are generic in terms of those and are overridden where a more
    stable closed form exists.
    """

    range_lo = -math.inf
    range_hi = math.inf

    def f(self, u):
        raise NotImplementedError

    def f1(self, u):
        raise NotImplementedError

    def f2(self, u):
        raise NotImplementedError

    def f1_inv(self, t):
        raise NotImplementedError

    def conj(self, t):
        u = self.f1_inv(t)
        return u * t - self.f(u)

    # Functions of the log-ratio s = log u.

    def f_log(self, s):
        return self.f(np.exp(s))

    def f_log_grad(self, s):
        u = np.exp(s)
        return u * self.f1(u)

    def f1_log(self, s):
        return self.f1(np.exp(s))

    # Discriminator terms as functions of the raw output v (T = f'(e^v)).

    def model_term(self, v):
        """f*(g_f(v)), i.e. u f'(u) - f(u) at u = e^v."""
        u = np.exp(v)
        return u * self.f1(u) - self.f(u)

    def data_term_grad(self, v):
        u = np.exp(v)
        return u * self.f2(u)

    def model_term_grad(self, v):
        u = np.exp(v)
        return u * u * self.f2(u)

    def perspective(self, log_q, log_p):
        """p f(q/p) evaluated from log-densities."""
        return np.exp(log_p) * self.f_log(log_q - log_p)

    needs_clamp = True


class _GanJs(_Calculus):
    range_hi = 0.0

    def f(self, u):
        return -u * np.log1p(1.0 / u) - np.log1p(u)

    def f1(self, u):
        return -np.log1p(1.0 / u)

    def f2(self, u):
        return 1.0 / (u * (u + 1.0))

    def f1_inv(self, t):
        return np.exp(t) / -np.expm1(t)

    def conj(self, t):
        return -np.log(-np.expm1(t))

    def f_log(self, s):
        return -np.exp(s) * _softplus(-s) - _softplus(s)

    def f_log_grad(self, s):
        return -np.exp(s) * _softplus(-s)

    def f1_log(self, s):
        return -_softplus(-s)

    def model_term(self, v):
        return _softplus(v)

    def data_term_grad(self, v):
        return expit(-v)

    def model_term_grad(self, v):
        return expit(v)

    def perspective(self, log_q, log_p):
        log_m = np.logaddexp(log_q, log_p)
        return np.exp(log_q) * (log_q - log_m) + np.exp(log_p) * (log_p - log_m)


class _Js(_GanJs):
    range_hi = LOG2

    def f(self, u):
        return super().f(u) + (u + 1.0) * LOG2

    def f1(self, u):
        return LOG2 - np.log1p(1.0 / u)

    def f1_inv(self, t):
        et = np.exp(t)
        return et / (2.0 - et)

    def conj(self, t):
        return -np.log(2.0 - np.exp(t))

    def f_log(self, s):
        return super().f_log(s) + (np.exp(s) + 1.0) * LOG2

    def f_log_grad(self, s):
        return np.exp(s) * (LOG2 - _softplus(-s))

    def f1_log(self, s):
        return LOG2 - _softplus(-s)

    def model_term(self, v):
        return _softplus(v) - LOG2

    def perspective(self, log_q, log_p):
        return super().perspective(log_q, log_p) + (np.exp(log_q) + np.exp(log_p)) * LOG2


class _Kl(_Calculus):
    def f(self, u):
        return xlogy(u, u)

    def f1(self, u):
        return np.log(u) + 1.0

    def f2(self, u):
        return 1.0 / u

    def f1_inv(self, t):
        return np.exp(t - 1.0)

    def conj(self, t):
        return np.exp(t - 1.0)

    def f_log(self, s):
        return s * np.exp(s)

    def f_log_grad(self, s):
        return (1.0 + s) * np.exp(s)

    def f1_log(self, s):
        return s + 1.0

    def model_term(self, v):
        return np.exp(v)

    def data_term_grad(self, v):
        return np.ones_like(v)

    def model_term_grad(self, v):
        return np.exp(v)

    def perspective(self, log_q, log_p):
        return np.exp(log_q) * (log_q - log_p)


class _ReverseKl(_Calculus):
    range_hi = 0.0
    needs_clamp = False

    def f(self, u):
        return -np.log(u)

    def f1(self, u):
        return -1.0 / u

    def f2(self, u):
        return 1.0 / (u * u)

    def f1_inv(self, t):
        return -1.0 / t

    def conj(self, t):
        return -1.0 - np.log(-t)

    def f_log(self, s):
        return -s

    def f_log_grad(self, s):
        return -np.ones_like(s)

    def f1_log(self, s):
        return -np.exp(-s)

    def model_term(self, v):
        return v - 1.0

    def data_term_grad(self, v):
        return np.exp(-v)

    def model_term_grad(self, v):
        return np.ones_like(v)

    def perspective(self, log_q, log_p):
        return np.exp(log_p) * (log_p - log_q)


class _SquaredHellinger(_Calculus):
    range_hi = 1.0

    def f(self, u):
        return (np.sqrt(u) - 1.0) ** 2

    def f1(self, u):
        return 1.0 - 1.0 / np.sqrt(u)

    def f2(self, u):
        return 0.5 * u**-1.5

    def f1_inv(self, t):
        return 1.0 / (1.0 - t) ** 2

    def conj(self, t):
        return t / (1.0 - t)

    def f_log(self, s):
        return np.expm1(0.5 * s) ** 2

    def f1_log(self, s):
        return -np.expm1(-0.5 * s)

    def model_term(self, v):
        return np.expm1(0.5 * v)

    def data_term_grad(self, v):
        return 0.5 * np.exp(-0.5 * v)

    def model_term_grad(self, v):
        return 0.5 * np.exp(0.5 * v)

    def perspective(self, log_q, log_p):
        return (np.exp(0.5 * log_q) - np.exp(0.5 * log_p)) ** 2


_SERIES_TERMS = 16
_SERIES_RADIUS = 0.1


class _Alpha(_Calculus):
    def __init__(self, alpha: float):
        self.a = alpha
        self.scale = 1.0 / (alpha * (alpha - 1.0))
        if alpha < 1.0:
            self.range_hi = 1.0 / (1.0 - alpha)
        else:
            self.range_lo = -1.0 / (alpha - 1.0)
        # power series of f(e^s) = sum_k c_k s^k, c_k = (1 + a + ... + a^(k-2)) / k!
        k = np.arange(2, _SERIES_TERMS + 2)
        partial = np.cumsum(alpha ** np.arange(_SERIES_TERMS))
        self.series = (partial / np.cumprod(np.arange(1.0, _SERIES_TERMS + 2))[1:])[::-1]
        self.series_radius = _SERIES_RADIUS / max(1.0, abs(alpha))

    def f(self, u):
        return self.f_log(np.log(u))

    def f1(self, u):
        return np.expm1((self.a - 1.0) * np.log(u)) / (self.a - 1.0)

    def f2(self, u):
        return u ** (self.a - 2.0)

    def f1_inv(self, t):
        return (1.0 + (self.a - 1.0) * t) ** (1.0 / (self.a - 1.0))

    def conj(self, t):
        w = 1.0 + (self.a - 1.0) * t
        return np.expm1(self.a / (self.a - 1.0) * np.log(w)) / self.a

    def f_log(self, s):
        # the closed form cancels to O(s^2) near s = 0, so switch to the series there
        a = self.a
        s = np.asarray(s, dtype=np.float64)
        out = (np.expm1(a * s) - a * np.expm1(s)) * self.scale
        small = np.abs(s) < self.series_radius
        if np.any(small):
            out = np.where(small, np.polyval(self.series, s) * s * s, out)
        return out

    def f_log_grad(self, s):
        return np.exp(s) * np.expm1((self.a - 1.0) * s) / (self.a - 1.0)

    def f1_log(self, s):
        return np.expm1((self.a - 1.0) * s) / (self.a - 1.0)

    def model_term(self, v):
        return np.expm1(self.a * v) / self.a

    def data_term_grad(self, v):
        return np.exp((self.a - 1.0) * v)

    def model_term_grad(self, v):
        return np.exp(self.a * v)

    def perspective(self, log_q, log_p):
        a = self.a
        cross = np.exp((1.0 - a) * log_p + a * log_q)
        return (cross - (1.0 - a) * np.exp(log_p) - a * np.exp(log_q)) * self.scale


class _GanAlt(_Calculus):
    range_hi = 0.0
    needs_clamp = False

    def f(self, u):
        return np.log1p(1.0 / u)

    def f1(self, u):
        return -1.0 / (u * (u + 1.0))

    def f2(self, u):
        return (2.0 * u + 1.0) / (u * u * (u + 1.0) ** 2)

    def f1_inv(self, t):
        # positive root of u^2 + u + 1/t = 0, written to avoid cancellation
        return -2.0 / (t * (1.0 + np.sqrt(1.0 - 4.0 / t)))

    def f_log(self, s):
        return _softplus(-s)

    def f_log_grad(self, s):
        return -expit(-s)

    def f1_log(self, s):
        return -np.exp(-s - _softplus(s))

    def model_term(self, v):
        return -expit(-v) - _softplus(-v)

    def perspective(self, log_q, log_p):
        return np.exp(log_p) * _softplus(log_p - log_q)


@dataclass(frozen=True)
class FDivergence:
    """A member of the f-divergence family together with its evaluation bounds.

    ``alpha`` is only meaningful for ``DivergenceKind.ALPHA``; values within
    ``ALPHA_SNAP`` of 0 or 1 are replaced by reverse KL and KL, whose limits
    they are.
    """

    kind: DivergenceKind
    alpha: Optional[float] = None
    u_min: float = U_MIN
    u_max: float = U_MAX

    def __post_init__(self):
        if self.kind is DivergenceKind.ALPHA:
            if self.alpha is None or not math.isfinite(self.alpha):
                raise ValueError("alpha divergence needs a finite alpha")
            if abs(self.alpha) < ALPHA_SNAP:
                object.__setattr__(self, "kind", DivergenceKind.REVERSE_KL)
                object.__setattr__(self, "alpha", None)
            elif abs(self.alpha - 1.0) < ALPHA_SNAP:
                object.__setattr__(self, "kind", DivergenceKind.KL)
                object.__setattr__(self, "alpha", None)
        elif self.alpha is not None:
            raise ValueError(f"{self.kind.value} takes no alpha parameter")
        if not 0.0 < self.u_min < self.u_max:
            raise ValueError("need 0 < u_min < u_max")
        object.__setattr__(self, "_calc", _make_calculus(self.kind, self.alpha))

    @property
    def normalized(self) -> bool:
        """Whether f(1) = 0."""
        return self.kind not in (DivergenceKind.GAN_JS, DivergenceKind.GAN_ALT)

    @property
    def name(self) -> str:
        if self.kind is DivergenceKind.ALPHA:
            return f"alpha={self.alpha:g}"
        return self.kind.value

    @property
    def fprime_range(self) -> tuple[float, float]:
        """Open interval covered by f' (equal to the conjugate domain)."""
        return (self._calc.range_lo, self._calc.range_hi)

    def __repr__(self):
        return f"FDivergence({self.name})"


def _make_calculus(kind: DivergenceKind, alpha: Optional[float]) -> _Calculus:
    if kind is DivergenceKind.ALPHA:
        return _Alpha(alpha)
    return {
        DivergenceKind.GAN_JS: _GanJs,
        DivergenceKind.KL: _Kl,
        DivergenceKind.REVERSE_KL: _ReverseKl,
        DivergenceKind.JS: _Js,
        DivergenceKind.SQUARED_HELLINGER: _SquaredHellinger,
        DivergenceKind.GAN_ALT: _GanAlt,
    }[kind]()


_ALIASES = {
    "gan": DivergenceKind.GAN_JS,
    "gan-js": DivergenceKind.GAN_JS,
    "kl": DivergenceKind.KL,
    "rkl": DivergenceKind.REVERSE_KL,
    "reverse-kl": DivergenceKind.REVERSE_KL,
    "js": DivergenceKind.JS,
    "hellinger": DivergenceKind.SQUARED_HELLINGER,
    "gan-alt": DivergenceKind.GAN_ALT,
}

VALID_NAMES = tuple(sorted(_ALIASES)) + ("alpha=<a>",)


def divergence(name: str, **bounds) -> FDivergence:
    """Build a divergence from its short name, e.g. ``"kl"`` or ``"alpha=-3"``."""
    key = name.strip().lower()
    for prefix in ("alpha=", "alpha:"):
        if key.startswith(prefix):
            try:
                a = float(key[len(prefix):])
            except ValueError:
                raise ValueError(f"bad alpha value in {name!r}") from None
            return FDivergence(DivergenceKind.ALPHA, a, **bounds)
    if key not in _ALIASES:
        raise ValueError(f"unknown divergence {name!r}; valid: {', '.join(VALID_NAMES)}")
    return FDivergence(_ALIASES[key], **bounds)


def _check_ratio(u):
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)) or np.any(u <= 0.0):
        raise DomainError("density ratio must be finite and positive")
    return u


def _check_range(d: FDivergence, t, what: str):
    t = np.asarray(t, dtype=np.float64)
    lo, hi = d.fprime_range
    bad = ~np.isfinite(t) | (t <= lo) | (t >= hi)
    if np.any(bad):
        first = t.flat[int(np.argmax(bad.ravel()))]
        raise DomainError(f"{what} of {d.name} is undefined at t={first!r}; domain is ({lo}, {hi})")
    return t


def f_eval(d: FDivergence, u):
    """Evaluate f(u); ``u`` must already be clamped into a positive range."""
    return d._calc.f(_check_ratio(u))


def f_prime(d: FDivergence, u):
    return d._calc.f1(_check_ratio(u))


def f_prime_inv(d: FDivergence, t):
    """Return u with f'(u) = t, clamped to ``[d.u_min, d.u_max]``."""
    t = _check_range(d, t, "(f')^-1")
    return np.clip(d._calc.f1_inv(t), d.u_min, d.u_max)


def fenchel_conjugate(d: FDivergence, t):
    """f*(t) = sup_u (u t - f(u))."""
    return d._calc.conj(_check_range(d, t, "conjugate"))


def activation(d: FDivergence, v):
    """Map a raw network output to the range of f' (T = f'(e^v))."""
    return d._calc.f1_log(np.asarray(v, dtype=np.float64))


def log_ratio_from_logit(f_d: FDivergence, v):
    """log of (f_D')^{-1}(g_f(v)); identically v under ``activation``."""
    return np.asarray(v, dtype=np.float64)


def ratio_from_logit(f_d: FDivergence, v):
    """Density ratio q/p implied by a raw discriminator output, clamped."""
    v = np.clip(np.asarray(v, dtype=np.float64), -LOGIT_CLAMP, LOGIT_CLAMP)
    return np.clip(np.exp(log_ratio_from_logit(f_d, v)), f_d.u_min, f_d.u_max)


def _clamped_log_ratio(f_d: FDivergence, f_g: FDivergence, v):
    s = log_ratio_from_logit(f_d, v)
    if f_g._calc.needs_clamp:
        return np.clip(s, -LOGIT_CLAMP, LOGIT_CLAMP), np.abs(s) <= LOGIT_CLAMP
    return s, None


def generator_objective_term(f_d: FDivergence, f_g: FDivergence, v):
    """f_G evaluated at the density ratio recovered from discriminator output v.

    Logits are clamped to [-30, 30] only for generator divergences whose
    closed form exponentiates the ratio.
    """
    s, _ = _clamped_log_ratio(f_d, f_g, np.asarray(v, dtype=np.float64))
    return f_g._calc.f_log(s)


def generator_objective_grad(f_d: FDivergence, f_g: FDivergence, v):
    """Derivative of ``generator_objective_term`` with respect to v."""
    s, inside = _clamped_log_ratio(f_d, f_g, np.asarray(v, dtype=np.float64))
    g = f_g._calc.f_log_grad(s)
    if inside is not None:
        g = np.where(inside, g, 0.0)
    return g


def lower_bound_terms(f_d: FDivergence, v):
    """Per-sample pieces of the variational bound as functions of raw output v.

    Returns ``(T, f*(T), dT/dv, d f*(T)/dv)`` with ``T = activation(f_d, v)``.
    The bound is ``mean_q(T) - mean_p(f*(T))``.
    """
    v = np.asarray(v, dtype=np.float64)
    c = f_d._calc
    if f_d.kind not in (DivergenceKind.GAN_JS, DivergenceKind.JS):
        v = np.clip(v, -LOGIT_CLAMP, LOGIT_CLAMP)
    return c.f1_log(v), c.model_term(v), c.data_term_grad(v), c.model_term_grad(v)


def perspective(d: FDivergence, log_q, log_p):
    """p f(q/p) computed from log-densities without forming the ratio."""
    return d._calc.perspective(np.asarray(log_q, dtype=np.float64), np.asarray(log_p, dtype=np.float64))
