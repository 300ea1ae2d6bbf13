"""Pseudo-marginal particle MCMC and the multilevel estimator.

Chains run on the unconstrained parameter vector with a Gaussian random-walk
proposal whose global scale is adapted toward a target acceptance rate
during burn-in and frozen afterwards (adaptation stops, so the chain is an
exact pseudo-marginal kernel from the freeze onward). The coupled chain
targets the extended two-level posterior; its per-iteration telescoping
reweights convert extended-target averages into fine- and coarse-level
posterior averages inside the multilevel identity.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .bridge import coarsen_values, make_plan
from .filters import (CoupledFilterResult, bridge_filter, coupled_bridge_filter,
                      euler_filter, missing_values)
from .proposals import default_proposal, endpoint_logpdf


@dataclass(frozen=True)
class PriorSpec:
    """Independent Gaussians on the transformed (unconstrained) scale."""

    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "sds", np.asarray(self.sds, dtype=float))
        if self.means.shape != self.sds.shape or self.means.ndim != 1:
            raise ValueError("prior means and sds must be equal-length vectors")
        if not np.all(self.sds > 0.0):
            raise ValueError("prior sds must be positive")

    @property
    def dim(self):
        return self.means.size

    def logpdf(self, theta):
        z = (np.asarray(theta, dtype=float) - self.means) / self.sds
        return float(np.sum(-0.5 * z * z - np.log(self.sds)
                            - 0.5 * np.log(2.0 * np.pi)))

    def sample(self, rng):
        return self.means + self.sds * rng.standard_normal(self.dim)


def default_prior(model):
    d = model.n_params
    return PriorSpec(means=np.zeros(d), sds=np.ones(d))


@dataclass
class ChainResult:
    """One pseudo-marginal chain, iteration 0 included."""

    thetas: np.ndarray
    log_liks: np.ndarray
    accepts: np.ndarray
    missing: np.ndarray
    level: int
    n_particles: int
    missing_coarse: np.ndarray | None = None
    tw_fine: np.ndarray | None = None
    tw_coarse: np.ndarray | None = None
    n_filter_failures: int = 0
    final_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def n_iterations(self):
        return self.thetas.shape[0] - 1

    @property
    def acceptance_rate(self):
        return float(self.accepts[1:].mean()) if self.n_iterations else 0.0


def _run_pseudo_marginal(loglik_fn, prior, n_iterations, rw_scales, rng,
                         adapt_frac=0.1, target_accept=0.25,
                         max_init_tries=200):
    """Generic pseudo-marginal random-walk chain.

    ``loglik_fn(theta, rng) -> (float, payload)``; a -inf value marks filter
    failure (the proposal is rejected; at initialization a fresh prior draw
    is taken).
    """
    d = prior.dim
    rw_scales = np.broadcast_to(np.asarray(rw_scales, dtype=float), (d,))
    theta = prior.sample(rng)
    ll, payload = loglik_fn(theta, rng)
    tries = 1
    while not np.isfinite(ll):
        if tries >= max_init_tries:
            raise RuntimeError("could not initialize chain: filter kept failing")
        theta = prior.sample(rng)
        ll, payload = loglik_fn(theta, rng)
        tries += 1
    lp = prior.logpdf(theta)

    thetas = np.empty((n_iterations + 1, d))
    log_liks = np.empty(n_iterations + 1)
    accepts = np.zeros(n_iterations + 1, dtype=bool)
    payloads = [None] * (n_iterations + 1)
    thetas[0] = theta
    log_liks[0] = ll
    payloads[0] = payload

    scale = 1.0
    adapt_until = int(round(adapt_frac * n_iterations))
    window = 25
    window_accepts = 0
    n_failures = 0
    for k in range(1, n_iterations + 1):
        prop = theta + scale * rw_scales * rng.standard_normal(d)
        ll_prop, payload_prop = loglik_fn(prop, rng)
        if not np.isfinite(ll_prop):
            n_failures += 1
            log_alpha = -np.inf
        else:
            lp_prop = prior.logpdf(prop)
            log_alpha = (ll_prop + lp_prop) - (ll + lp)
        if np.log(rng.random()) < log_alpha:
            theta = prop
            ll = ll_prop
            lp = lp_prop
            payload = payload_prop
            accepts[k] = True
            window_accepts += 1
        thetas[k] = theta
        log_liks[k] = ll
        payloads[k] = payload
        if k <= adapt_until and k % window == 0:
            rate = window_accepts / window
            scale = float(np.clip(scale * math.exp(rate - target_accept),
                                  1e-3, 1e3))
            window_accepts = 0
    return thetas, log_liks, accepts, payloads, scale, n_failures


def pmcmc(model, schedule, data, *, level, n_iterations, filter_kind="bridge",
          aux=None, proposal=None, prior=None, rw_scales=0.1,
          n_particles=None, rng=None, seed=None, adapt_frac=0.1,
          target_accept=0.25):
    """Single-level particle MCMC driven by the Euler or bridge filter."""
    if rng is None:
        rng = np.random.default_rng(seed)
    if prior is None:
        prior = default_prior(model)
    if filter_kind not in ("euler", "bridge"):
        raise ValueError("filter_kind must be 'euler' or 'bridge'")
    if filter_kind == "bridge":
        if aux is None:
            aux = model.make_aux()
        if proposal is None:
            proposal = default_proposal(model)
    n_part = int(n_particles) if n_particles else max(schedule.n_interior, 1)

    def loglik(theta, chain_rng):
        try:
            params = model.decode(theta)
        except ValueError:
            return -np.inf, None
        if filter_kind == "euler":
            res = euler_filter(model, params, schedule, data, level,
                               n_part, chain_rng)
        else:
            res = bridge_filter(model, aux, proposal, params, schedule, data,
                                level, n_part, chain_rng)
        if res.failed:
            return -np.inf, None
        return res.log_likelihood, missing_values(schedule, res.trajectory)

    thetas, log_liks, accepts, payloads, scale, fails = _run_pseudo_marginal(
        loglik_fn=loglik, prior=prior, n_iterations=n_iterations,
        rw_scales=rw_scales, rng=rng, adapt_frac=adapt_frac,
        target_accept=target_accept)
    miss = np.stack(payloads)
    return ChainResult(thetas=thetas, log_liks=log_liks, accepts=accepts,
                       missing=miss, level=level, n_particles=n_part,
                       n_filter_failures=fails, final_scale=scale,
                       meta={"filter": filter_kind})


def coupled_pmcmc(model, schedule, data, *, level, n_iterations, aux=None,
                  proposal=None, prior=None, rw_scales=0.1, n_particles=None,
                  rng=None, seed=None, adapt_frac=0.1, target_accept=0.25,
                  coarse_level=None):
    """Particle MCMC on the extended two-level target (coupled filter)."""
    if rng is None:
        rng = np.random.default_rng(seed)
    if prior is None:
        prior = default_prior(model)
    if aux is None:
        aux = model.make_aux()
    if proposal is None:
        proposal = default_proposal(model)
    n_part = int(n_particles) if n_particles else max(schedule.n_interior, 1)

    def loglik(theta, chain_rng):
        try:
            params = model.decode(theta)
        except ValueError:
            return -np.inf, None
        res = coupled_bridge_filter(model, aux, proposal, params, schedule,
                                    data, level, n_part, chain_rng,
                                    coarse_level=coarse_level)
        if res.failed:
            return -np.inf, None
        payload = (missing_values(schedule, res.trajectory),
                   missing_values(schedule, res.trajectory_coarse),
                   res.tw_fine, res.tw_coarse)
        return res.log_likelihood, payload

    thetas, log_liks, accepts, payloads, scale, fails = _run_pseudo_marginal(
        loglik_fn=loglik, prior=prior, n_iterations=n_iterations,
        rw_scales=rw_scales, rng=rng, adapt_frac=adapt_frac,
        target_accept=target_accept)
    miss = np.stack([p[0] for p in payloads])
    miss_c = np.stack([p[1] for p in payloads])
    twf = np.array([p[2] for p in payloads])
    twc = np.array([p[3] for p in payloads])
    return ChainResult(thetas=thetas, log_liks=log_liks, accepts=accepts,
                       missing=miss, missing_coarse=miss_c, tw_fine=twf,
                       tw_coarse=twc, level=level, n_particles=n_part,
                       n_filter_failures=fails, final_scale=scale,
                       meta={"filter": "coupled",
                             "coarse_level": level - 1 if coarse_level is None
                             else coarse_level})


def telescoping_weights(model, aux, proposal, params, schedule, data, level,
                        trajectory_fine, trajectory_coarse, increments,
                        coarse_level=None):
    """Recompute the two telescoping reweights from a stored coupled sample.

    Each interval contributes (fine term / averaged term) to the fine
    reweight and (coarse term / averaged term) to the coarse one; the terms
    are the same f-cancelled bridge weights the coupled filter used. Returns
    NaNs if both terms of some interval vanished (flagged sample).
    """
    if coarse_level is None:
        coarse_level = level - 1
    same = coarse_level == level
    grid = schedule.grid
    n = schedule.n_interior
    log_v = 0.0
    log_vbar = 0.0
    plans_f = {}
    plans_c = {}
    x_f = schedule.x0.reshape(1, 2)
    x_c = x_f
    for k in range(1, n + 2):
        gap = grid[k] - grid[k - 1]
        plan_f = plans_f.get(gap)
        if plan_f is None:
            plan_f = plans_f[gap] = make_plan(model, aux, params, gap, level)
            plans_c[gap] = (plan_f if same else
                            make_plan(model, aux, params, gap, coarse_level))
        plan_c = plans_c[gap]
        cls = schedule.classify(k)
        s_f = trajectory_fine[k - 1].reshape(1, 2)
        s_c = trajectory_coarse[k - 1].reshape(1, 2)
        d_wf = increments[k - 1].reshape(1, -1, 2)
        d_wc = d_wf if same else coarsen_values(d_wf)
        lsum_f, alive_f = plan_f.correction_logsum(x_f, s_f, d_wf)
        lsum_c, alive_c = plan_c.correction_logsum(x_c, s_c, d_wc)
        h_f = endpoint_logpdf(proposal, params, cls, x_f, gap, s_f)
        h_c = endpoint_logpdf(proposal, params, cls, x_c, gap, s_c)
        ltf = float(lsum_f[0] + plan_f.endpoint_logpdf(x_f, s_f)[0] - h_f[0])
        ltc = float(lsum_c[0] + plan_c.endpoint_logpdf(x_c, s_c)[0] - h_c[0])
        if not alive_f[0]:
            ltf = -np.inf
        if not alive_c[0]:
            ltc = -np.inf
        lr = np.logaddexp(ltf, ltc) - np.log(2.0)
        if not np.isfinite(lr):
            return np.nan, np.nan
        log_v += ltf - lr
        log_vbar += ltc - lr
        x_f = s_f
        x_c = s_c
    return float(np.exp(log_v)), float(np.exp(log_vbar))


# ---------------------------------------------------------------------------
# Multilevel estimator


def _phi_matrix(phi, thetas, missing):
    if phi is None:
        return thetas
    rows = [np.atleast_1d(np.asarray(phi(thetas[i], missing[i]), dtype=float))
            for i in range(thetas.shape[0])]
    return np.stack(rows)


def batch_means_se(values, n_batches=None):
    """Batch-means standard error of the mean of a (possibly vector) series."""
    values = np.atleast_2d(np.asarray(values, dtype=float).T).T
    n = values.shape[0]
    if n_batches is None:
        n_batches = int(np.clip(np.sqrt(n), 4, 30))
    edges = np.linspace(0, n, n_batches + 1, dtype=int)
    means = np.stack([values[a:b].mean(axis=0) for a, b in zip(edges, edges[1:])])
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def batch_ratio_se(weights, values, n_batches=None):
    """Batch-means SE of a self-normalized (ratio) estimator."""
    values = np.atleast_2d(np.asarray(values, dtype=float).T).T
    weights = np.asarray(weights, dtype=float)
    n = values.shape[0]
    if n_batches is None:
        n_batches = int(np.clip(np.sqrt(n), 4, 30))
    edges = np.linspace(0, n, n_batches + 1, dtype=int)
    ratios = []
    for a, b in zip(edges, edges[1:]):
        wsum = weights[a:b].sum()
        if wsum <= 0.0:
            continue
        ratios.append(weights[a:b] @ values[a:b] / wsum)
    if len(ratios) < 2:
        return np.full(values.shape[1], np.nan)
    ratios = np.stack(ratios)
    return ratios.std(axis=0, ddof=1) / np.sqrt(len(ratios))


@dataclass
class MLEstimate:
    estimate: np.ndarray
    base_term: np.ndarray
    corrections: dict
    se: np.ndarray
    level_valid: dict
    n_excluded: dict
    costs: dict


def multilevel_estimate(base_chain, coupled_chains, phi=None, burn_frac=0.1,
                        n_particles=None, n_intervals=None):
    """Telescoped multilevel estimate of a posterior functional.

    ``base_chain`` is a single-level chain at the minimum level;
    ``coupled_chains`` maps fine level -> coupled chain. The estimate is the
    plain base average plus, per level, the difference of the self-normalized
    fine and coarse reweighted averages. Iterations with non-finite reweights
    are excluded and counted; a level whose reweight sums vanish is flagged
    invalid and skipped.
    """
    burn = int(round(burn_frac * base_chain.n_iterations))
    phi_base = _phi_matrix(phi, base_chain.thetas[burn:],
                           base_chain.missing[burn:])
    base = phi_base.mean(axis=0)
    se_sq = batch_means_se(phi_base) ** 2
    corrections = {}
    level_valid = {}
    n_excluded = {}
    costs = {_chain_cost_key(base_chain): _chain_cost(base_chain, n_particles,
                                                      n_intervals)}
    total = base.copy()
    for level in sorted(coupled_chains):
        chain = coupled_chains[level]
        burn_l = int(round(burn_frac * chain.n_iterations))
        fine = _phi_matrix(phi, chain.thetas[burn_l:], chain.missing[burn_l:])
        coarse = _phi_matrix(phi, chain.thetas[burn_l:],
                             chain.missing_coarse[burn_l:])
        twf = chain.tw_fine[burn_l:]
        twc = chain.tw_coarse[burn_l:]
        good = np.isfinite(twf) & np.isfinite(twc)
        n_excluded[level] = int((~good).sum())
        twf, twc = twf[good], twc[good]
        fine, coarse = fine[good], coarse[good]
        costs[level] = _chain_cost(chain, n_particles, n_intervals)
        if twf.sum() <= 0.0 or twc.sum() <= 0.0 or good.sum() == 0:
            level_valid[level] = False
            corrections[level] = np.full_like(base, np.nan)
            continue
        level_valid[level] = True
        corr = (twf @ fine) / twf.sum() - (twc @ coarse) / twc.sum()
        corrections[level] = corr
        total = total + corr
        se_sq = se_sq + batch_ratio_se(twf, fine) ** 2 \
            + batch_ratio_se(twc, coarse) ** 2
    return MLEstimate(estimate=total, base_term=base, corrections=corrections,
                      se=np.sqrt(se_sq), level_valid=level_valid,
                      n_excluded=n_excluded, costs=costs)


def _chain_cost_key(chain):
    return chain.level


def _chain_cost(chain, n_particles=None, n_intervals=None):
    n_part = n_particles or chain.n_particles
    if n_intervals is None:
        return float(chain.n_iterations * n_part * 2 ** chain.level)
    return float(chain.n_iterations * n_part * 2 ** chain.level * n_intervals)


# ---------------------------------------------------------------------------
# Sample-size allocation across levels


@dataclass(frozen=True)
class LevelAllocation:
    level_min: int
    level_max: int
    iterations: dict
    regime: str

    def cost(self, n_particles, n_intervals):
        return float(sum(s * n_particles * 2 ** lev * n_intervals
                         for lev, s in self.iterations.items()))


def allocate_levels(epsilon, level_min, regime="general", base_iterations=1000.0,
                    min_iterations=100):
    """Level count and per-level iteration counts for a target accuracy.

    The deepest level grows like log2(1/epsilon); iteration counts shrink
    geometrically in the level (rate 2 in the general regime, 2^1.5 when the
    diffusion coefficient is constant).
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if regime not in ("general", "constant-diffusion"):
        raise ValueError("regime must be 'general' or 'constant-diffusion'")
    level_max = level_min + max(1, math.ceil(math.log2(1.0 / epsilon)))
    n_levels = level_max - level_min + 1
    iterations = {}
    for lev in range(level_min, level_max + 1):
        j = lev - level_min
        if regime == "general":
            s = base_iterations * epsilon ** -2 * 2.0 ** -j * n_levels
        else:
            s = base_iterations * epsilon ** -2 * 2.0 ** (-1.5 * j)
        iterations[lev] = int(round(s))
    if iterations[level_max] < min_iterations:
        raise ValueError(
            f"allocation gives only {iterations[level_max]} iterations at the "
            f"deepest level (< {min_iterations}); increase base_iterations or "
            "epsilon")
    return LevelAllocation(level_min=level_min, level_max=level_max,
                           iterations=iterations, regime=regime)


# ---------------------------------------------------------------------------
# Chain diagnostics


def integrated_autocorr_time(x):
    """IACT by Geyer's initial positive sequence (FFT autocorrelation)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    var = x @ x / n
    if var == 0.0 or n < 4:
        return 1.0
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acf = np.fft.irfft(f * np.conj(f), m)[:n].real / (n * var)
    tau = 1.0
    for k in range(1, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    return float(tau)


def effective_sample_size(x):
    x = np.asarray(x, dtype=float)
    return float(x.size / integrated_autocorr_time(x))
