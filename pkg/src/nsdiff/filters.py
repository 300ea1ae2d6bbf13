"""Particle filters: Euler, guided-bridge, and the coupled two-level filter.

All three filters share the same skeleton: propagate every particle across
one inter-observation interval, fill in the components that are missing at
the interval's right endpoint, weight, update the running likelihood
estimate with the mean unnormalized weight, and resample with replacement.
Trajectories are tracked through ancestor indices and reconstructed for the
single selected particle at the end.

The likelihood estimate is unbiased for the level-l posterior normalizer;
weights live in log space throughout. A particle whose state degenerates
(positive-quadrant models) carries weight zero; if every particle dies the
filter reports failure and a -inf log-likelihood.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .bridge import coarsen_values, make_plan
from .observations import TimeClass
from .proposals import default_proposal, euler_step_density, maximal_coupling_vec


class FilterFailure(RuntimeError):
    """Raised when resampling is impossible because all weights vanished."""


def _logmeanexp(lw):
    m = np.max(lw)
    if not np.isfinite(m):
        return -np.inf
    return float(m + np.log(np.mean(np.exp(lw - m))))


def _normalized_weights(lw):
    m = np.max(lw)
    if not np.isfinite(m):
        return None
    w = np.exp(lw - m)
    return w / w.sum()


def _resample_indices(weights, rng, n=None):
    n = len(weights) if n is None else n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(n), side="right")


def resample_multinomial(weights, items, rng):
    """Sample items with replacement proportionally to the given weights."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0.0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and nonnegative")
    total = weights.sum()
    if total <= 0.0:
        raise FilterFailure("all resampling weights are zero")
    idx = _resample_indices(weights / total, rng)
    items = np.asarray(items)
    return items[idx]


def missing_values(schedule, trajectory):
    """Missing-data vector of a trajectory: component 1 values at its missing
    times plus its horizon value, then the same for component 2."""
    t = np.asarray(trajectory)
    part1 = t[:-1, 0][~schedule.observed1]
    part2 = t[:-1, 1][~schedule.observed2]
    return np.concatenate([part1, [t[-1, 0]], part2, [t[-1, 1]]])


@dataclass
class FilterResult:
    log_likelihood: float
    trajectory: np.ndarray | None
    ess: np.ndarray
    deaths: int
    failed: bool
    weight_error: float


@dataclass
class CoupledFilterResult(FilterResult):
    trajectory_coarse: np.ndarray | None = None
    increments: list = field(default_factory=list)
    tw_fine: float = np.nan
    tw_coarse: float = np.nan
    coarse_level: int = -1


def _failed_result(schedule, coupled=False, coarse_level=-1):
    ess = np.zeros(schedule.n_intervals)
    if coupled:
        return CoupledFilterResult(log_likelihood=-np.inf, trajectory=None,
                                   ess=ess, deaths=0, failed=True,
                                   weight_error=np.nan, trajectory_coarse=None,
                                   increments=[], coarse_level=coarse_level)
    return FilterResult(log_likelihood=-np.inf, trajectory=None, ess=ess,
                        deaths=0, failed=True, weight_error=np.nan)


def _finite_or_dead(lw):
    return np.where(np.isfinite(lw), lw, -np.inf)


def _lineage(ancestors, pick):
    """Indices of the selected particle at every step, walking back in time."""
    n = len(ancestors)
    idx = np.empty(n, dtype=np.int64)
    cur = pick
    for k in range(n - 1, -1, -1):
        idx[k] = cur
        cur = ancestors[k][cur]
    return idx


def _euler_propagate(model, params, x, d_w, dt):
    if model.name == "ou":
        out = _kernels.ou_euler(params.A, params.sigma_matrix, x, d_w, dt)
        return out, np.ones(x.shape[0], dtype=bool)
    return _kernels.lv_euler(params.alpha, params.beta, params.gamma,
                             params.zeta, params.sigma1, params.sigma2,
                             model.literal_diffusion, x, d_w, dt)


def euler_filter(model, params, schedule, data, level, n_particles=None,
                 rng=None):
    """Particle filter on the Euler discretization (blind proposals).

    At a time with one missing component the missing coordinate is drawn
    from the one-step Euler marginal and the weight is the Euler conditional
    density of the observed coordinate given the draw; at fully observed
    times the weight is the joint one-step density. The final interval draws
    a free endpoint with uniform weights.
    """
    if rng is None:
        rng = np.random.default_rng()
    n = schedule.n_interior
    n_part = int(n_particles) if n_particles else max(n, 1)
    grid = schedule.grid
    k_sub = 2 ** level
    x = np.tile(schedule.x0, (n_part, 1))
    log_lik = 0.0
    ess = np.empty(schedule.n_intervals)
    deaths = 0
    weight_err = 0.0
    states_hist = []
    ancestors = []

    for k in range(1, n + 1):
        gap = grid[k] - grid[k - 1]
        dt = gap / k_sub
        d_w = rng.standard_normal((n_part, k_sub - 1, 2)) * np.sqrt(dt)
        u, alive = _euler_propagate(model, params, x, d_w, dt)
        step = euler_step_density(model, params, u, dt)
        cls = schedule.classify(k)
        if cls is TimeClass.BOTH_OBSERVED:
            obs = np.array([data.y1[k - 1], data.y2[k - 1]])
            states = np.tile(obs, (n_part, 1))
            lw = step.logpdf(states)
        elif cls is TimeClass.FIRST_MISSING:
            obs = data.y2[k - 1]
            mean0 = step.mean[:, 0]
            sd0 = np.sqrt(step.cov[..., 0, 0])
            draw = mean0 + sd0 * rng.standard_normal(n_part)
            lw = step.conditional(0, draw).logpdf(obs)
            states = np.stack([draw, np.full(n_part, obs)], axis=1)
        else:  # SECOND_MISSING
            obs = data.y1[k - 1]
            mean1 = step.mean[:, 1]
            sd1 = np.sqrt(step.cov[..., 1, 1])
            draw = mean1 + sd1 * rng.standard_normal(n_part)
            lw = step.conditional(1, draw).logpdf(obs)
            states = np.stack([np.full(n_part, obs), draw], axis=1)
        lw = _finite_or_dead(np.where(alive, lw, -np.inf))
        deaths += int((~alive).sum())
        w = _normalized_weights(lw)
        if w is None:
            return _failed_result(schedule)
        log_lik += _logmeanexp(lw)
        ess[k - 1] = 1.0 / np.sum(w ** 2)
        weight_err = max(weight_err, abs(1.0 - float(w.sum())))
        idx = _resample_indices(w, rng)
        states_hist.append(states)
        ancestors.append(idx)
        x = states[idx]

    # final interval: free Euler endpoint, uniform weights over live particles
    gap = grid[n + 1] - grid[n]
    dt = gap / k_sub
    d_w = rng.standard_normal((n_part, k_sub, 2)) * np.sqrt(dt)
    x_end, alive = _euler_propagate(model, params, x, d_w, dt)
    deaths += int((~alive).sum())
    if not alive.any():
        return _failed_result(schedule)
    w = alive / alive.sum()
    ess[n] = 1.0 / np.sum(w ** 2)
    pick = int(_resample_indices(w, rng, 1)[0])
    states_hist.append(x_end)
    ancestors.append(np.arange(n_part))
    lineage = _lineage(ancestors, pick)
    trajectory = np.stack([states_hist[k][lineage[k]] for k in range(n + 1)])
    return FilterResult(log_likelihood=float(log_lik), trajectory=trajectory,
                        ess=ess, deaths=deaths, failed=False,
                        weight_error=weight_err)


def _endpoint_case(cls, data, k, proposal, params, x_prev, gap, rng, n_part):
    """Sample missing endpoint components and return (states, hlog)."""
    if cls is TimeClass.BOTH_OBSERVED:
        obs = np.array([data.y1[k - 1], data.y2[k - 1]])
        return np.tile(obs, (n_part, 1)), np.zeros(n_part)
    if cls is TimeClass.FIRST_MISSING:
        obs = data.y2[k - 1]
        cond = proposal.conditional(params, x_prev, gap, 1, obs)
        draw = cond.sample(rng)
        states = np.stack([draw, np.full(n_part, obs)], axis=1)
        return states, cond.logpdf(draw)
    obs = data.y1[k - 1]
    cond = proposal.conditional(params, x_prev, gap, 0, obs)
    draw = cond.sample(rng)
    states = np.stack([np.full(n_part, obs), draw], axis=1)
    return states, cond.logpdf(draw)


def bridge_filter(model, aux, proposal, params, schedule, data, level,
                  n_particles=None, rng=None):
    """Particle filter using discretized guided bridges.

    Missing endpoint components come from the endpoint proposal; each weight
    is the f-cancelled bridge weight divided by the proposal contribution.
    The final interval proposes a joint endpoint and weights by the full
    bridge/proposal ratio, and the returned trajectory is selected with the
    final weights.
    """
    if rng is None:
        rng = np.random.default_rng()
    if proposal is None:
        proposal = default_proposal(model)
    n = schedule.n_interior
    n_part = int(n_particles) if n_particles else max(n, 1)
    grid = schedule.grid
    k_sub = 2 ** level
    x = np.tile(schedule.x0, (n_part, 1))
    log_lik = 0.0
    ess = np.empty(schedule.n_intervals)
    deaths = 0
    weight_err = 0.0
    states_hist = []
    ancestors = []
    plans = {}

    for k in range(1, n + 2):
        gap = grid[k] - grid[k - 1]
        plan = plans.get(gap)
        if plan is None:
            plan = plans[gap] = make_plan(model, aux, params, gap, level)
        d_w = rng.standard_normal((n_part, k_sub, 2)) * np.sqrt(plan.dt)
        if k <= n:
            cls = schedule.classify(k)
            states, hlog = _endpoint_case(cls, data, k, proposal, params, x,
                                          gap, rng, n_part)
        else:
            joint = proposal.joint(params, x, gap)
            states = joint.sample(rng)
            hlog = joint.logpdf(states)
        lsum, alive = plan.correction_logsum(x, states, d_w)
        lw = lsum + plan.endpoint_logpdf(x, states) - hlog
        lw = _finite_or_dead(np.where(alive, lw, -np.inf))
        deaths += int((~alive).sum())
        w = _normalized_weights(lw)
        if w is None:
            return _failed_result(schedule)
        log_lik += _logmeanexp(lw)
        ess[k - 1] = 1.0 / np.sum(w ** 2)
        weight_err = max(weight_err, abs(1.0 - float(w.sum())))
        states_hist.append(states)
        if k <= n:
            idx = _resample_indices(w, rng)
            ancestors.append(idx)
            x = states[idx]
        else:
            pick = int(_resample_indices(w, rng, 1)[0])
            ancestors.append(np.arange(n_part))
    lineage = _lineage(ancestors, pick)
    trajectory = np.stack([states_hist[k][lineage[k]] for k in range(n + 1)])
    return FilterResult(log_likelihood=float(log_lik), trajectory=trajectory,
                        ess=ess, deaths=deaths, failed=False,
                        weight_error=weight_err)


def coupled_bridge_filter(model, aux, proposal, params, schedule, data, level,
                          n_particles=None, rng=None, coarse_level=None):
    """Coupled two-level bridge filter (fine level ``level``, coarse one
    level below) targeting the extended two-level posterior.

    Fine and coarse chains share Brownian increments (pair-summed for the
    coarse chain) and draw missing endpoint components from a maximal
    coupling of the endpoint proposals at the two resolutions. Weights
    average the fine and coarse f-cancelled bridge terms; resampling carries
    both trajectories and the increment history jointly. The selected
    particle's telescoping reweights (products of fine resp. coarse terms
    over the averaged term) are returned along with its increments.

    ``coarse_level=level`` is allowed as a degenerate diagnostic: both
    chains then share the same increments and the filter reduces to the
    single-level bridge filter.
    """
    if rng is None:
        rng = np.random.default_rng()
    if proposal is None:
        proposal = default_proposal(model)
    if coarse_level is None:
        coarse_level = level - 1
    if coarse_level not in (level, level - 1):
        raise ValueError("coarse level must be level-1 (or level, degenerate)")
    if coarse_level < 0:
        raise ValueError("no coarser level exists below level 0")
    same_level = coarse_level == level
    n = schedule.n_interior
    n_part = int(n_particles) if n_particles else max(n, 1)
    grid = schedule.grid
    k_sub = 2 ** level
    xf = np.tile(schedule.x0, (n_part, 1))
    xc = xf.copy()
    log_lik = 0.0
    ess = np.empty(schedule.n_intervals)
    deaths = 0
    weight_err = 0.0
    hist_f, hist_c, hist_w, hist_ltf, hist_ltc, hist_lr = [], [], [], [], [], []
    ancestors = []
    plans_f = {}
    plans_c = {}

    for k in range(1, n + 2):
        gap = grid[k] - grid[k - 1]
        plan_f = plans_f.get(gap)
        if plan_f is None:
            plan_f = plans_f[gap] = make_plan(model, aux, params, gap, level)
            plans_c[gap] = (plan_f if same_level else
                            make_plan(model, aux, params, gap, coarse_level))
        plan_c = plans_c[gap]
        d_wf = rng.standard_normal((n_part, k_sub, 2)) * np.sqrt(plan_f.dt)
        d_wc = d_wf if same_level else coarsen_values(d_wf)
        if k <= n:
            cls = schedule.classify(k)
        else:
            cls = TimeClass.BOTH_MISSING
        if cls is TimeClass.BOTH_OBSERVED:
            obs = np.array([data.y1[k - 1], data.y2[k - 1]])
            sf = np.tile(obs, (n_part, 1))
            sc = sf
            hf = np.zeros(n_part)
            hc = hf
        elif cls is TimeClass.BOTH_MISSING:
            pf = proposal.joint(params, xf, gap)
            pc = proposal.joint(params, xc, gap)
            sf, sc, _ = maximal_coupling_vec(pf, pc, rng)
            hf = pf.logpdf(sf)
            hc = pc.logpdf(sc)
        else:
            if cls is TimeClass.FIRST_MISSING:
                given, obs = 1, data.y2[k - 1]
            else:
                given, obs = 0, data.y1[k - 1]
            pf = proposal.conditional(params, xf, gap, given, obs)
            pc = proposal.conditional(params, xc, gap, given, obs)
            vf, vc, _ = maximal_coupling_vec(pf, pc, rng)
            hf = pf.logpdf(vf)
            hc = pc.logpdf(vc)
            fill = np.full(n_part, obs)
            if cls is TimeClass.FIRST_MISSING:
                sf = np.stack([vf, fill], axis=1)
                sc = np.stack([vc, fill], axis=1)
            else:
                sf = np.stack([fill, vf], axis=1)
                sc = np.stack([fill, vc], axis=1)
        lsum_f, alive_f = plan_f.correction_logsum(xf, sf, d_wf)
        lsum_c, alive_c = plan_c.correction_logsum(xc, sc, d_wc)
        ltf = lsum_f + plan_f.endpoint_logpdf(xf, sf) - hf
        ltc = lsum_c + plan_c.endpoint_logpdf(xc, sc) - hc
        ltf = _finite_or_dead(np.where(alive_f, ltf, -np.inf))
        ltc = _finite_or_dead(np.where(alive_c, ltc, -np.inf))
        deaths += int((~alive_f).sum() + (~alive_c).sum())
        with np.errstate(invalid="ignore"):
            lw = np.logaddexp(ltf, ltc) - np.log(2.0)
        lw = _finite_or_dead(lw)
        w = _normalized_weights(lw)
        if w is None:
            return _failed_result(schedule, coupled=True, coarse_level=coarse_level)
        log_lik += _logmeanexp(lw)
        ess[k - 1] = 1.0 / np.sum(w ** 2)
        weight_err = max(weight_err, abs(1.0 - float(w.sum())))
        hist_f.append(sf)
        hist_c.append(sc)
        hist_w.append(d_wf)
        hist_ltf.append(ltf)
        hist_ltc.append(ltc)
        hist_lr.append(lw)
        if k <= n:
            idx = _resample_indices(w, rng)
            ancestors.append(idx)
            xf = sf[idx]
            xc = sc[idx]
        else:
            pick = int(_resample_indices(w, rng, 1)[0])
            ancestors.append(np.arange(n_part))
    lineage = _lineage(ancestors, pick)
    traj_f = np.stack([hist_f[k][lineage[k]] for k in range(n + 1)])
    traj_c = np.stack([hist_c[k][lineage[k]] for k in range(n + 1)])
    incs = [np.ascontiguousarray(hist_w[k][lineage[k]]) for k in range(n + 1)]
    log_v = 0.0
    log_vbar = 0.0
    for k in range(n + 1):
        j = lineage[k]
        log_v += hist_ltf[k][j] - hist_lr[k][j]
        log_vbar += hist_ltc[k][j] - hist_lr[k][j]
    return CoupledFilterResult(log_likelihood=float(log_lik), trajectory=traj_f,
                               ess=ess, deaths=deaths, failed=False,
                               weight_error=weight_err,
                               trajectory_coarse=traj_c, increments=incs,
                               tw_fine=float(np.exp(log_v)),
                               tw_coarse=float(np.exp(log_vbar)),
                               coarse_level=coarse_level)
