"""Bivariate diffusion models and their tractable auxiliary processes.

Two concrete models are provided:

* ``OrnsteinUhlenbeck``: dX = -A X dt + Sigma dW with constant symmetric
  Sigma parameterized by (sigma1, sigma2, rho);
* ``LotkaVolterra``: stochastic predator-prey dynamics with multiplicative
  noise.

Each model owns an unconstrained parameter vector encoding (the MCMC scale)
and one or more auxiliary processes with closed-form transition densities.
An auxiliary is *bound* to an interval ``[s1, s2]`` together with the bridge
start/end states; the bound object evaluates the transition log-density to
the bound endpoint, its state gradient and Hessian, and the auxiliary drift
and noise covariance. Gradients are taken at a fixed auxiliary process: for
the Lotka-Volterra auxiliary the interpolated growth rates are pinned by the
bound interval, not by the evaluation state.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

LOG_2PI = float(np.log(2.0 * np.pi))


def linear_sde_transition(A, Q, tau):
    """Transition moments of dX = -A X dt + noise with noise covariance Q.

    Returns the mean matrix ``M = expm(-A tau)`` and the covariance
    ``C = int_0^tau expm(-A s) Q expm(-A^T s) ds`` (van Loan block trick).
    """
    Z = np.zeros((4, 4))
    Z[:2, :2] = -A
    Z[:2, 2:] = Q
    Z[2:, 2:] = A.T
    F = expm(Z * tau)
    M = F[:2, :2]
    C = F[:2, 2:] @ M.T
    return M, 0.5 * (C + C.T)


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck


@dataclass(frozen=True)
class OUParams:
    A: np.ndarray
    sigma1: float
    sigma2: float
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float).reshape(2, 2))
        if not (self.sigma1 > 0.0 and self.sigma2 > 0.0):
            raise ValueError("sigma1 and sigma2 must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")

    @property
    def sigma_matrix(self):
        s1, s2, r = self.sigma1, self.sigma2, self.rho
        off = r * s1 * s2
        return np.array([[s1 * s1, off], [off, s2 * s2]])

    @property
    def noise_cov(self):
        s = self.sigma_matrix
        return s @ s.T


class OrnsteinUhlenbeck:
    """dX = -A X dt + Sigma dW, Sigma = [[s1^2, r s1 s2], [r s1 s2, s2^2]]."""

    name = "ou"
    n_params = 7
    param_names = ("A11", "A12", "A21", "A22", "log_sigma1", "log_sigma2", "rho_z")
    positive_state = False
    aux_names = ("driftless", "exact")
    default_aux = "driftless"
    default_x0 = (1.0, 1.0)

    def decode(self, vector):
        v = np.asarray(vector, dtype=float)
        if v.shape != (7,) or not np.all(np.isfinite(v)):
            raise ValueError("OU parameter vector must be 7 finite values")
        A = v[:4].reshape(2, 2)
        return OUParams(A=A, sigma1=float(np.exp(v[4])), sigma2=float(np.exp(v[5])),
                        rho=float(np.tanh(0.5 * v[6])))

    def encode(self, params):
        rho_z = np.log1p(params.rho) - np.log1p(-params.rho)
        return np.concatenate([
            params.A.ravel(),
            [np.log(params.sigma1), np.log(params.sigma2), rho_z],
        ])

    def drift(self, params, x):
        return -(np.asarray(x, dtype=float) @ params.A.T)

    def diffusion(self, params, x=None):
        return params.sigma_matrix

    def noise_cov(self, params, x=None):
        return params.noise_cov

    def make_aux(self, name=None):
        name = name or self.default_aux
        if name == "driftless":
            return DriftlessGaussianAux()
        if name == "exact":
            return ExactLinearAux()
        raise ValueError(f"unknown OU auxiliary {name!r}")


class _BoundLinearGaussianAux:
    """Linear-Gaussian auxiliary bound to an interval and endpoint.

    The transition from (t, x) to the bound endpoint is Gaussian with mean
    ``M(tau) x`` and covariance ``C(tau)``, tau = s2 - t.
    """

    def __init__(self, moments, drift_matrix, cov, s1, s2, x_end):
        self._moments = moments  # tau -> (M, C)
        self._B = drift_matrix
        self._a = cov
        self.s1 = float(s1)
        self.s2 = float(s2)
        self.x_end = np.asarray(x_end, dtype=float)

    def transition_logpdf(self, t, x):
        M, C = self._moments(self.s2 - t)
        d = self.x_end - np.asarray(x, dtype=float) @ M.T
        Cinv = np.linalg.inv(C)
        _, logdet = np.linalg.slogdet(C)
        quad = np.einsum("...i,ij,...j->...", d, Cinv, d)
        return -LOG_2PI - 0.5 * logdet - 0.5 * quad

    def grad_log(self, t, x):
        M, C = self._moments(self.s2 - t)
        d = self.x_end - np.asarray(x, dtype=float) @ M.T
        return d @ np.linalg.inv(C) @ M

    def hess_log(self, t, x):
        M, C = self._moments(self.s2 - t)
        return -(M.T @ np.linalg.inv(C) @ M)

    def drift(self, t, x):
        return np.asarray(x, dtype=float) @ self._B.T

    def noise_cov(self, t, x):
        return self._a


class DriftlessGaussianAux:
    """Auxiliary dX~ = Sigma dW: Gaussian transition around the current state."""

    name = "driftless"

    def bind(self, model, params, s1, s2, x_start, x_end):
        a = params.noise_cov
        eye = np.eye(2)

        def moments(tau):
            return eye, a * tau

        return _BoundLinearGaussianAux(moments, np.zeros((2, 2)), a, s1, s2, x_end)


class ExactLinearAux:
    """Auxiliary equal to the full linear dynamics (exact model transition)."""

    name = "exact"

    def bind(self, model, params, s1, s2, x_start, x_end):
        a = params.noise_cov
        A = params.A
        cache = {}

        def moments(tau):
            got = cache.get(tau)
            if got is None:
                got = cache[tau] = linear_sde_transition(A, a, tau)
            return got

        return _BoundLinearGaussianAux(moments, -A, a, s1, s2, x_end)


# ---------------------------------------------------------------------------
# Stochastic Lotka-Volterra


@dataclass(frozen=True)
class LVParams:
    alpha: float
    beta: float
    gamma: float
    zeta: float
    sigma1: float
    sigma2: float

    def __post_init__(self):
        for field in ("alpha", "beta", "gamma", "zeta", "sigma1", "sigma2"):
            if not getattr(self, field) > 0.0:
                raise ValueError(f"{field} must be positive")


class LotkaVolterra:
    """Stochastic predator-prey model on the positive quadrant.

    Drift (x1 (alpha - beta x2), x2 (zeta x1 - gamma)); diffusion is
    diagonal with entries sigma1 x1 and sigma2 x2. With
    ``literal_diffusion`` the second entry is sigma2 x1 instead, which
    breaks the endpoint-matching property of the auxiliary and is kept only
    as a configuration toggle.
    """

    name = "lotka-volterra"
    n_params = 6
    param_names = ("log_alpha", "log_beta", "log_gamma", "log_zeta",
                   "log_sigma1", "log_sigma2")
    positive_state = True
    aux_names = ("loglinear",)
    default_aux = "loglinear"
    default_x0 = (1.0, 1.0)

    def __init__(self, literal_diffusion=False):
        self.literal_diffusion = bool(literal_diffusion)

    def decode(self, vector):
        v = np.asarray(vector, dtype=float)
        if v.shape != (6,) or not np.all(np.isfinite(v)):
            raise ValueError("LV parameter vector must be 6 finite values")
        a, b, g, z, s1, s2 = np.exp(v)
        return LVParams(alpha=float(a), beta=float(b), gamma=float(g),
                        zeta=float(z), sigma1=float(s1), sigma2=float(s2))

    def encode(self, params):
        return np.log([params.alpha, params.beta, params.gamma, params.zeta,
                       params.sigma1, params.sigma2])

    def drift(self, params, x):
        x = np.asarray(x, dtype=float)
        self._check_state(x)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([x1 * (params.alpha - params.beta * x2),
                         x2 * (params.zeta * x1 - params.gamma)], axis=-1)

    def diffusion(self, params, x):
        x = np.asarray(x, dtype=float).reshape(2)
        self._check_state(x)
        second = x[0] if self.literal_diffusion else x[1]
        return np.diag([params.sigma1 * x[0], params.sigma2 * second])

    def noise_cov(self, params, x):
        s = self.diffusion(params, x)
        return s @ s.T

    def _check_state(self, x):
        if not np.all(x > 0.0):
            raise DegenerateStateError("Lotka-Volterra state left (0, inf)^2")

    def make_aux(self, name=None):
        name = name or self.default_aux
        if name != "loglinear":
            raise ValueError(f"unknown Lotka-Volterra auxiliary {name!r}")
        return LogLinearAux()


class DegenerateStateError(ValueError):
    """A positive-quadrant model was evaluated at a non-positive state."""


class _BoundLogLinearAux:
    """Per-dimension geometric BM whose growth rate is linear in time.

    Rates interpolate between the model's per-dimension growth rates
    evaluated with the other component pinned at the interval start and end
    states; the transition to the bound endpoint is log-normal in each
    dimension.
    """

    def __init__(self, params, s1, s2, x_start, x_end):
        self.params = params
        self.s1 = float(s1)
        self.s2 = float(s2)
        x_start = np.asarray(x_start, dtype=float)
        x_end = np.asarray(x_end, dtype=float)
        if not (np.all(x_start > 0.0) and np.all(x_end > 0.0)):
            raise DegenerateStateError("auxiliary interval states must be positive")
        self.x_end = x_end
        p = params
        self.r0 = np.stack([p.alpha - p.beta * x_start[..., 1],
                            p.zeta * x_start[..., 0] - p.gamma], axis=-1)
        self.r1 = np.stack([p.alpha - p.beta * x_end[..., 1],
                            p.zeta * x_end[..., 0] - p.gamma], axis=-1)
        self.sig = np.array([p.sigma1, p.sigma2])

    def _rate(self, t):
        u = (t - self.s1) / (self.s2 - self.s1)
        return self.r0 * (1.0 - u) + self.r1 * u

    def _m(self, t, x):
        tau = self.s2 - t
        integ = tau * (self._rate(t) + self.r1) * 0.5
        return np.log(self.x_end) - np.log(x) - integ + self.sig ** 2 * tau * 0.5

    def transition_logpdf(self, t, x):
        x = np.asarray(x, dtype=float)
        tau = self.s2 - t
        v = self.sig ** 2 * tau
        m = self._m(t, x)
        terms = -np.log(self.x_end) - 0.5 * np.log(2.0 * np.pi * v) - m ** 2 / (2.0 * v)
        return terms.sum(axis=-1)

    def grad_log(self, t, x):
        x = np.asarray(x, dtype=float)
        tau = self.s2 - t
        return self._m(t, x) / (x * self.sig ** 2 * tau)

    def hess_log(self, t, x):
        x = np.asarray(x, dtype=float)
        tau = self.s2 - t
        d = -(1.0 + self._m(t, x)) / (x ** 2 * self.sig ** 2 * tau)
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = d[..., 0]
        out[..., 1, 1] = d[..., 1]
        return out

    def drift(self, t, x):
        return np.asarray(x, dtype=float) * self._rate(t)

    def noise_cov(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = (self.sig[0] * x[..., 0]) ** 2
        out[..., 1, 1] = (self.sig[1] * x[..., 1]) ** 2
        return out


class LogLinearAux:
    name = "loglinear"

    def bind(self, model, params, s1, s2, x_start, x_end):
        return _BoundLogLinearAux(params, s1, s2, x_start, x_end)


# ---------------------------------------------------------------------------
# Registry and single-call convenience wrappers


def get_model(name, lv_diffusion="consistent"):
    if name == "ou":
        return OrnsteinUhlenbeck()
    if name in ("lotka-volterra", "lv"):
        if lv_diffusion not in ("consistent", "literal"):
            raise ValueError("lv_diffusion must be 'consistent' or 'literal'")
        return LotkaVolterra(literal_diffusion=(lv_diffusion == "literal"))
    raise ValueError(f"unknown model {name!r}")


def bind_interval(model, aux, params, s1, s2, x_start, x_end):
    return aux.bind(model, params, s1, s2, np.asarray(x_start, dtype=float),
                    np.asarray(x_end, dtype=float))


def aux_logpdf(model, aux, params, t, s2, x, x_end):
    """Auxiliary transition log-density over [t, s2] (interval bound at t)."""
    return bind_interval(model, aux, params, t, s2, x, x_end).transition_logpdf(t, x)


def aux_grad_log(model, aux, params, t, s2, x, x_end):
    return bind_interval(model, aux, params, t, s2, x, x_end).grad_log(t, x)


def aux_hess_log(model, aux, params, t, s2, x, x_end):
    return bind_interval(model, aux, params, t, s2, x, x_end).hess_log(t, x)
