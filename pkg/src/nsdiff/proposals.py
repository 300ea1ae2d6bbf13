"""Endpoint proposal densities, their couplings, and the one-step Euler law.

Proposals supply the endpoint values that the bridge filters condition on:
a joint density over both components (used at the horizon) and the two
single-component conditionals (used when one component is missing at an
interior time). The composite endpoint log-density stitches these together
by time class; at fully observed times its contribution is zero.

All distribution objects here are vectorized across particles: ``sample``
draws one value per particle and ``logpdf`` evaluates one density per
particle, each particle carrying its own conditioning state.
"""

from dataclasses import dataclass

import numpy as np

from .models import LOG_2PI, linear_sde_transition
from .observations import TimeClass


class VecNormal:
    """Independent-per-particle scalar Gaussians."""

    def __init__(self, mean, sd):
        self.mean = np.asarray(mean, dtype=float)
        self.sd = np.broadcast_to(np.asarray(sd, dtype=float), self.mean.shape)

    def sample(self, rng):
        return self.mean + self.sd * rng.standard_normal(self.mean.shape)

    def logpdf(self, v):
        z = (np.asarray(v, dtype=float) - self.mean) / self.sd
        return -0.5 * LOG_2PI - np.log(self.sd) - 0.5 * z * z


class VecNormal2:
    """Per-particle bivariate Gaussians; covariance shared or per-particle."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 2:
            cov = np.broadcast_to(cov, self.mean.shape[:-1] + (2, 2))
        self.cov = cov

    def _chol_parts(self):
        c = self.cov
        l11 = np.sqrt(c[..., 0, 0])
        l21 = c[..., 1, 0] / l11
        l22 = np.sqrt(c[..., 1, 1] - l21 * l21)
        return l11, l21, l22

    def sample(self, rng):
        z = rng.standard_normal(self.mean.shape)
        l11, l21, l22 = self._chol_parts()
        out = np.empty_like(self.mean)
        out[..., 0] = self.mean[..., 0] + l11 * z[..., 0]
        out[..., 1] = self.mean[..., 1] + l21 * z[..., 0] + l22 * z[..., 1]
        return out

    def logpdf(self, v):
        d = np.asarray(v, dtype=float) - self.mean
        c = self.cov
        det = c[..., 0, 0] * c[..., 1, 1] - c[..., 0, 1] * c[..., 1, 0]
        quad = (c[..., 1, 1] * d[..., 0] ** 2
                - (c[..., 0, 1] + c[..., 1, 0]) * d[..., 0] * d[..., 1]
                + c[..., 0, 0] * d[..., 1] ** 2) / det
        return -LOG_2PI - 0.5 * np.log(det) - 0.5 * quad

    def conditional(self, observed_component, value):
        """Exact Gaussian conditional of the other component."""
        o = observed_component
        m = 1 - o
        c = self.cov
        slope = c[..., m, o] / c[..., o, o]
        mean = self.mean[..., m] + slope * (value - self.mean[..., o])
        var = c[..., m, m] - c[..., m, o] ** 2 / c[..., o, o]
        return VecNormal(mean, np.sqrt(var))


class VecLogNormal:
    """Independent-per-particle scalar log-normals (log-scale mean/sd)."""

    def __init__(self, mu, sd):
        self.mu = np.asarray(mu, dtype=float)
        self.sd = np.broadcast_to(np.asarray(sd, dtype=float), self.mu.shape)

    def sample(self, rng):
        return np.exp(self.mu + self.sd * rng.standard_normal(self.mu.shape))

    def logpdf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lv = np.log(v)
            z = (lv - self.mu) / self.sd
            out = -0.5 * LOG_2PI - np.log(self.sd) - lv - 0.5 * z * z
        return np.where(v > 0.0, out, -np.inf)


class VecLogNormal2:
    """Two independent log-normal coordinates per particle."""

    def __init__(self, mu, sd):
        self.mu = np.asarray(mu, dtype=float)  # (..., 2)
        self.sd = np.broadcast_to(np.asarray(sd, dtype=float), self.mu.shape)

    def sample(self, rng):
        return np.exp(self.mu + self.sd * rng.standard_normal(self.mu.shape))

    def logpdf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lv = np.log(v)
            z = (lv - self.mu) / self.sd
            out = (-0.5 * LOG_2PI - np.log(self.sd) - lv - 0.5 * z * z).sum(axis=-1)
        return np.where(np.all(v > 0.0, axis=-1), out, -np.inf)

    def conditional(self, observed_component, value):
        m = 1 - observed_component
        return VecLogNormal(self.mu[..., m], self.sd[..., m])


# ---------------------------------------------------------------------------
# Endpoint proposal families


class GaussianEndpointProposal:
    """Gaussian random walk around the previous state, covariance
    ``scale * (Sigma Sigma^T) * gap`` (OU experiments use scale = 0.01)."""

    def __init__(self, scale=0.01):
        self.scale = float(scale)

    def joint(self, params, x_prev, gap):
        cov = self.scale * params.noise_cov * gap
        return VecNormal2(np.asarray(x_prev, dtype=float), cov)

    def conditional(self, params, x_prev, gap, observed_component, value):
        return self.joint(params, x_prev, gap).conditional(observed_component, value)


class ExactEndpointProposal:
    """The exact linear-SDE transition as an endpoint proposal (OU only).

    Used for degeneracy diagnostics: with the exact auxiliary this makes
    every bridge-filter weight constant.
    """

    def joint(self, params, x_prev, gap):
        m, c = linear_sde_transition(params.A, params.noise_cov, gap)
        return VecNormal2(np.asarray(x_prev, dtype=float) @ m.T, c)

    def conditional(self, params, x_prev, gap, observed_component, value):
        return self.joint(params, x_prev, gap).conditional(observed_component, value)


class LogNormalEndpointProposal:
    """Per-dimension log-normals with location log(x_prev) - sigma^2/2 and
    scale sigma; coordinates independent, so conditionals equal marginals.
    The interval length does not enter."""

    def joint(self, params, x_prev, gap):
        x_prev = np.asarray(x_prev, dtype=float)
        if not np.all(x_prev > 0.0):
            raise ValueError("log-normal proposal requires a positive state")
        sig = np.array([params.sigma1, params.sigma2])
        mu = np.log(x_prev) - sig ** 2 / 2.0
        return VecLogNormal2(mu, sig)

    def conditional(self, params, x_prev, gap, observed_component, value):
        return self.joint(params, x_prev, gap).conditional(observed_component, value)


def default_proposal(model, scale=0.01):
    if model.name == "ou":
        return GaussianEndpointProposal(scale=scale)
    return LogNormalEndpointProposal()


def endpoint_logpdf(proposal, params, time_class, x_prev, gap, x):
    """Composite endpoint proposal log-density for one merged time.

    ``x`` holds both components (for a partially observed time the observed
    one must already be filled in); the fully observed class contributes 0.
    """
    x = np.asarray(x, dtype=float)
    if time_class is TimeClass.BOTH_OBSERVED:
        return np.zeros(x.shape[:-1])
    if time_class is TimeClass.BOTH_MISSING:
        return proposal.joint(params, x_prev, gap).logpdf(x)
    if time_class is TimeClass.FIRST_MISSING:
        cond = proposal.conditional(params, x_prev, gap, 1, x[..., 1])
        return cond.logpdf(x[..., 0])
    cond = proposal.conditional(params, x_prev, gap, 0, x[..., 0])
    return cond.logpdf(x[..., 1])


# ---------------------------------------------------------------------------
# One-step Euler law (used by the Euler filter)


def euler_step_density(model, params, u, dt):
    """Gaussian law of one Euler step from ``u``: N(u + mu(u) dt, a(u) dt)."""
    u = np.asarray(u, dtype=float)
    if model.name == "ou":
        mean = u - (u @ params.A.T) * dt
        cov = params.noise_cov * dt
        return VecNormal2(mean, cov)
    x1 = u[..., 0]
    x2 = u[..., 1]
    mean = np.stack([x1 + x1 * (params.alpha - params.beta * x2) * dt,
                     x2 + x2 * (params.zeta * x1 - params.gamma) * dt], axis=-1)
    second = x1 if model.literal_diffusion else x2
    cov = np.zeros(u.shape[:-1] + (2, 2))
    cov[..., 0, 0] = (params.sigma1 * x1) ** 2 * dt
    cov[..., 1, 1] = (params.sigma2 * second) ** 2 * dt
    return VecNormal2(mean, cov)


# ---------------------------------------------------------------------------
# Maximal couplings


@dataclass(frozen=True)
class CoupledSample:
    x: np.ndarray
    y: np.ndarray
    met: bool


def maximal_coupling(p, q, rng, max_iters=10 ** 6):
    """Draw (X, Y) with X ~ p, Y ~ q meeting with probability 1 - TV(p, q).

    ``p`` and ``q`` expose ``sample(rng)`` for a single draw and
    ``logpdf(value)``; the standard rejection construction is used.
    """
    x = p.sample(rng)
    if np.log(rng.random()) <= float(q.logpdf(x)) - float(p.logpdf(x)):
        return CoupledSample(x=x, y=x, met=True)
    for _ in range(max_iters):
        y = q.sample(rng)
        if np.log(rng.random()) > float(p.logpdf(y)) - float(q.logpdf(y)):
            return CoupledSample(x=x, y=y, met=False)
    raise RuntimeError("maximal coupling rejection loop failed to terminate")


def maximal_coupling_vec(p, q, rng, max_rounds=10 ** 6):
    """Vectorized maximal coupling of per-particle distributions.

    Returns (x, y, met); marginally x ~ p and y ~ q per particle.
    """
    x = p.sample(rng)
    n = x.shape[0]
    log_u = np.log(rng.random(n))
    met = log_u <= (q.logpdf(x) - p.logpdf(x))
    y = np.where(met[..., None] if x.ndim > 1 else met, x, np.nan)
    pending = ~met
    rounds = 0
    while pending.any():
        cand = q.sample(rng)
        log_v = np.log(rng.random(n))
        accept = pending & (log_v > (p.logpdf(cand) - q.logpdf(cand)))
        if x.ndim > 1:
            y = np.where(accept[..., None], cand, y)
        else:
            y = np.where(accept, cand, y)
        pending &= ~accept
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError("vectorized maximal coupling failed to terminate")
    return x, y, met
