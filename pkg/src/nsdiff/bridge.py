"""Brownian increment grids, coarsening, guided bridge paths and weights.

The dyadic grid over an interval ``[s1, s2]`` at level ``l`` has ``2^l``
sub-steps. Guided paths follow an Euler recursion whose drift adds
``a(x) * grad log f~(x_end | x)`` to the model drift, pulling the path to a
fixed endpoint; the associated importance weight is

    sum_j L(t_j, X_j) * dt  +  log f~(x_end | x_start)

where ``L`` is the Girsanov-type correction integrand built from the
drift/diffusion mismatch between model and auxiliary. The intractable model
transition density cancels in every weight the filters use, so only this
combination is ever computed.

Hot loops are delegated to ``nsdiff._kernels`` through per-interval plans;
the public path/weight functions here are thin single-path wrappers that the
test-suite cross-checks against the kernels.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .models import (LOG_2PI, LotkaVolterra, OrnsteinUhlenbeck, bind_interval,
                     linear_sde_transition)


@dataclass(frozen=True)
class IncrementPath:
    """Brownian increments of one inter-observation interval at one level."""

    t_start: float
    t_end: float
    level: int
    values: np.ndarray  # (2^level, 2)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (2 ** self.level, 2):
            raise ValueError("increment array must have shape (2^level, 2)")
        if not self.t_end > self.t_start:
            raise ValueError("interval must have positive length")

    @property
    def dt(self):
        return (self.t_end - self.t_start) / 2 ** self.level


@dataclass(frozen=True)
class BridgePath:
    """States of a guided path on the dyadic grid, endpoints included."""

    t_start: float
    t_end: float
    level: int
    states: np.ndarray  # (2^level + 1, 2)

    def __post_init__(self):
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        if self.states.shape != (2 ** self.level + 1, 2):
            raise ValueError("state array must have shape (2^level + 1, 2)")


def sample_increments(t_start, t_end, level, rng):
    if level < 0:
        raise ValueError("level must be nonnegative")
    k = 2 ** level
    dt = (t_end - t_start) / k
    values = rng.standard_normal((k, 2)) * np.sqrt(dt)
    return IncrementPath(t_start=float(t_start), t_end=float(t_end),
                         level=int(level), values=values)


def coarsen_values(values):
    """Sum adjacent increment pairs: (..., 2k, 2) -> (..., k, 2)."""
    values = np.asarray(values)
    k = values.shape[-2]
    if k < 2 or k % 2:
        raise ValueError("need an even number of increments to coarsen")
    return values[..., 0::2, :] + values[..., 1::2, :]


def coarsen(path):
    """One level up the dyadic hierarchy; exact on the total displacement."""
    if path.level < 1:
        raise ValueError("cannot coarsen a level-0 increment path")
    return IncrementPath(t_start=path.t_start, t_end=path.t_end,
                         level=path.level - 1, values=coarsen_values(path.values))


def total_displacement(values):
    """Pairwise-tree sum of the increments (equals repeated coarsening)."""
    v = np.asarray(values, dtype=float)
    while v.shape[-2] > 1:
        k = v.shape[-2]
        if k % 2:
            v = np.concatenate([v[..., :-1, :][..., 0::2, :] + v[..., :-1, :][..., 1::2, :],
                                v[..., -1:, :]], axis=-2)
        else:
            v = v[..., 0::2, :] + v[..., 1::2, :]
    return v[..., 0, :]


# ---------------------------------------------------------------------------
# Per-interval kernel plans


class _LinearBridgePlan:
    """OU model with a linear-Gaussian auxiliary (driftless or exact)."""

    def __init__(self, params, aux_name, gap, level):
        self.gap = float(gap)
        self.level = int(level)
        k = 2 ** level
        self.n_steps = k
        self.dt = self.gap / k
        self.A = np.ascontiguousarray(params.A)
        self.a = np.ascontiguousarray(params.noise_cov)
        self.sig = np.ascontiguousarray(params.sigma_matrix)
        taus = self.gap - np.arange(k) * self.dt
        if aux_name == "driftless":
            self.B = np.zeros((2, 2))
            eye = np.eye(2)
            a_inv = np.linalg.inv(self.a)
            self.M = np.ascontiguousarray(np.broadcast_to(eye, (k, 2, 2)).copy())
            self.Sinv = np.ascontiguousarray(a_inv[None, :, :] / taus[:, None, None])
            full_m, full_c = eye, self.a * self.gap
        elif aux_name == "exact":
            self.B = np.ascontiguousarray(-self.A)
            Ms = np.empty((k, 2, 2))
            Sinvs = np.empty((k, 2, 2))
            for j, tau in enumerate(taus):
                m, c = linear_sde_transition(self.A, self.a, tau)
                Ms[j] = m
                Sinvs[j] = np.linalg.inv(c)
            self.M = Ms
            self.Sinv = Sinvs
            full_m, full_c = linear_sde_transition(self.A, self.a, self.gap)
        else:
            raise ValueError(f"no linear plan for auxiliary {aux_name!r}")
        self._full_m = full_m
        self._full_cinv = np.linalg.inv(full_c)
        self._full_logdet = float(np.linalg.slogdet(full_c)[1])

    def correction_logsum(self, x0, x1, d_w, paths_out=None):
        lsum = _kernels.ou_bridge(self.A, self.a, self.sig, self.B, self.M,
                                  self.Sinv, x0, x1, d_w, self.dt, paths_out)
        return lsum, np.ones(x0.shape[0], dtype=bool)

    def endpoint_logpdf(self, x0, x1):
        d = x1 - x0 @ self._full_m.T
        quad = np.einsum("ni,ij,nj->n", d, self._full_cinv, d)
        return -LOG_2PI - 0.5 * self._full_logdet - 0.5 * quad


class _LVBridgePlan:
    """Lotka-Volterra model with the log-linear auxiliary."""

    def __init__(self, params, literal, gap, level):
        self.p = params
        self.literal = bool(literal)
        self.gap = float(gap)
        self.level = int(level)
        self.n_steps = 2 ** level
        self.dt = self.gap / self.n_steps

    def _rates(self, x0, x1):
        p = self.p
        r10 = np.ascontiguousarray(p.alpha - p.beta * x0[:, 1])
        r11 = np.ascontiguousarray(p.alpha - p.beta * x1[:, 1])
        r20 = np.ascontiguousarray(p.zeta * x0[:, 0] - p.gamma)
        r21 = np.ascontiguousarray(p.zeta * x1[:, 0] - p.gamma)
        return r10, r11, r20, r21

    def correction_logsum(self, x0, x1, d_w, paths_out=None):
        p = self.p
        r10, r11, r20, r21 = self._rates(x0, x1)
        return _kernels.lv_bridge(p.alpha, p.beta, p.gamma, p.zeta,
                                  p.sigma1, p.sigma2, self.literal,
                                  r10, r11, r20, r21, x0, x1, d_w,
                                  self.dt, self.gap, paths_out)

    def endpoint_logpdf(self, x0, x1):
        p = self.p
        r10, r11, r20, r21 = self._rates(x0, x1)
        sig_sq = np.array([p.sigma1 ** 2, p.sigma2 ** 2])
        integ = np.stack([(r10 + r11) * 0.5, (r20 + r21) * 0.5], axis=1) * self.gap
        v = sig_sq * self.gap
        with np.errstate(invalid="ignore", divide="ignore"):
            m = np.log(x1) - np.log(x0) - integ + v * 0.5
            out = (-np.log(x1) - 0.5 * np.log(2.0 * np.pi * v) - m ** 2 / (2.0 * v))
        return out.sum(axis=1)


def make_plan(model, aux, params, gap, level):
    """Build the kernel plan for one interval length at one level."""
    if isinstance(model, OrnsteinUhlenbeck):
        return _LinearBridgePlan(params, aux.name, gap, level)
    if isinstance(model, LotkaVolterra):
        if aux.name != "loglinear":
            raise ValueError(f"no plan for Lotka-Volterra auxiliary {aux.name!r}")
        return _LVBridgePlan(params, model.literal_diffusion, gap, level)
    raise ValueError(f"no kernel plan for model {model.name!r}")


# ---------------------------------------------------------------------------
# Single-path public operations


def guided_drift(model, aux, params, t, x, s2, x_end, interval=None):
    """Model drift plus the auxiliary pull term a(x) grad log f~(x_end|x).

    ``interval`` optionally carries a bound auxiliary (fixing the process to
    an enclosing interval); by default the auxiliary is bound at (t, x).
    """
    bound = interval
    if bound is None:
        bound = bind_interval(model, aux, params, t, s2, x, x_end)
    g = bound.grad_log(t, x)
    return model.drift(params, x) + model.noise_cov(params, x) @ g


def bridge_path(model, aux, params, t_start, t_end, level, x_start, increments,
                x_end):
    """Run the guided Euler recursion for a single particle (the path map)."""
    if isinstance(increments, IncrementPath):
        increments = increments.values
    increments = np.asarray(increments, dtype=float)
    k = 2 ** level
    if increments.shape != (k, 2):
        raise ValueError("increments do not match the requested level")
    plan = make_plan(model, aux, params, t_end - t_start, level)
    x0 = np.asarray(x_start, dtype=float).reshape(1, 2)
    x1 = np.asarray(x_end, dtype=float).reshape(1, 2)
    paths = np.empty((1, k + 1, 2))
    plan.correction_logsum(x0, x1, increments.reshape(1, k, 2), paths_out=paths)
    return BridgePath(t_start=float(t_start), t_end=float(t_end),
                      level=int(level), states=paths[0])


def log_bridge_weight(model, aux, params, path):
    """Log weight of a guided path: correction sum plus auxiliary endpoint term.

    Evaluated from the path states alone with the generic mismatch formula
    (drift dot product and trace term); serves as the slow reference for the
    fused kernels. Returns -inf for degenerate paths.
    """
    states = path.states
    x_start = states[0]
    x_end = states[-1]
    if getattr(model, "positive_state", False) and not np.all(states > 0.0):
        return -np.inf
    bound = bind_interval(model, aux, params, path.t_start, path.t_end,
                          x_start, x_end)
    k = 2 ** path.level
    dt = (path.t_end - path.t_start) / k
    total = 0.0
    for j in range(k):
        t = path.t_start + j * dt
        x = states[j]
        g = bound.grad_log(t, x)
        hess = bound.hess_log(t, x)
        mu_diff = model.drift(params, x) - bound.drift(t, x)
        a_diff = model.noise_cov(params, x) - bound.noise_cov(t, x)
        curv = -hess - np.outer(g, g)
        ell = float(mu_diff @ g) - 0.5 * float(np.trace(a_diff @ curv))
        total += ell * dt
    total += float(bound.transition_logpdf(path.t_start, x_start))
    if not np.isfinite(total):
        return -np.inf
    return total
