"""Experiment drivers behind the command-line interface.

Every command is a pure function of (config, seed): reruns produce
byte-identical output files. Random streams are spawned per work unit from
the root seed, so fanning replicates out across worker processes does not
change any result. Outputs are tidy CSV plus a provenance JSON carrying the
exact config and its hash.
"""

import concurrent.futures
import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .filters import bridge_filter, euler_filter
from .mcmc import (PriorSpec, allocate_levels, coupled_pmcmc, default_prior,
                   effective_sample_size, multilevel_estimate, pmcmc)
from .models import get_model
from .observations import load_dataset, save_dataset, simulate_dataset
from .proposals import default_proposal

__version__ = "0.1.0"


@dataclass
class RunConfig:
    """Declarative description of one experiment run."""

    command: str = "run-mcmc"
    model: str = "ou"
    lv_diffusion: str = "consistent"
    # data source: either a simulation spec or a file path
    data: dict = field(default_factory=dict)
    filter: str = "bridge"          # euler | bridge | delta
    aux: str | None = None
    proposal_scale: float = 0.01
    level: int = 5
    level_min: int = 5
    level_max: int | None = None
    levels: list | None = None      # variance-compare level grid
    n_particles: int | None = None
    iterations: int = 1000
    epsilon: float | None = None
    regime: str = "general"
    base_iterations: float = 1000.0
    prior_means: list | None = None
    prior_sds: list | None = None
    rw_scales: float | list = 0.1
    burn_frac: float = 0.1
    replications: int = 100         # variance-compare repetitions per cell
    budgets: list | None = None     # rate-study ladder
    replicates: int = 20            # rate-study replicates per budget
    reference: str = "truth"        # rate-study MSE reference
    seed: int = 0
    output_dir: str | None = None
    workers: int = 1

    def validate(self):
        if self.model not in ("ou", "lotka-volterra", "lv"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.filter not in ("euler", "bridge", "delta"):
            raise ValueError("filter must be euler, bridge or delta")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if not self.data:
            raise ValueError("config needs a data section (simulate spec or file)")
        kind = self.data.get("kind")
        if kind not in ("simulate", "file"):
            raise ValueError("data.kind must be 'simulate' or 'file'")
        if kind == "simulate" and "theta_true" not in self.data:
            raise ValueError("simulate spec needs data.theta_true "
                             "(transformed parameter vector)")
        if kind == "file" and "path" not in self.data:
            raise ValueError("file spec needs data.path")
        if self.burn_frac < 0 or self.burn_frac >= 1:
            raise ValueError("burn_frac must lie in [0, 1)")
        return self

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def config_hash(cfg):
    blob = json.dumps(asdict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def output_root():
    return os.environ.get("NSDIFF_OUTPUT_ROOT", "runs")


def _resolve_outdir(cfg, default_name):
    out = cfg.output_dir or os.path.join(output_root(), default_name)
    os.makedirs(out, exist_ok=True)
    return out


def _write_provenance(cfg, outdir, extra=None):
    doc = {
        "config": asdict(cfg),
        "config_hash": config_hash(cfg),
        "kernel_backend": _kernels.backend_name,
        "package_version": __version__,
    }
    if extra:
        doc.update(extra)
    path = os.path.join(outdir, "provenance.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _model_from(cfg):
    return get_model(cfg.model, lv_diffusion=cfg.lv_diffusion)


def _prior_from(cfg, model):
    if cfg.prior_means is None and cfg.prior_sds is None:
        return default_prior(model)
    means = np.asarray(cfg.prior_means if cfg.prior_means is not None
                       else np.zeros(model.n_params), dtype=float)
    sds = np.asarray(cfg.prior_sds if cfg.prior_sds is not None
                     else np.ones(model.n_params), dtype=float)
    return PriorSpec(means=means, sds=sds)


def _dataset_from(cfg, model):
    d = cfg.data
    if d["kind"] == "file":
        return load_dataset(d["path"], meta_path=d.get("meta_path"),
                            x0=d.get("x0"), horizon=d.get("horizon"))
    params = model.decode(np.asarray(d["theta_true"], dtype=float))
    return simulate_dataset(
        model, params,
        n_obs=int(d.get("n_obs", 50)),
        omit=tuple(d.get("omit", (0, 0))),
        spacing=float(d.get("spacing", 1.0)),
        spacing_kind=d.get("spacing_kind", "fixed"),
        x0=d.get("x0"),
        fine_level=int(d.get("fine_level", 12)),
        seed=int(d.get("seed", cfg.seed)))


def _theta_true(cfg):
    if cfg.data.get("kind") == "simulate":
        return np.asarray(cfg.data["theta_true"], dtype=float)
    return None


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg):
    cfg.validate()
    if cfg.data.get("kind") != "simulate":
        raise ValueError("simulate command needs a simulate data spec")
    model = _model_from(cfg)
    schedule, dataset = _dataset_from(cfg, model)
    outdir = _resolve_outdir(cfg, f"simulate-{config_hash(cfg)}")
    csv_path = os.path.join(outdir, "dataset.csv")
    meta_path = os.path.join(outdir, "dataset.meta.json")
    save_dataset(schedule, dataset, csv_path, meta_path)
    _write_provenance(cfg, outdir, extra={
        "n_interior": schedule.n_interior,
        "n_observed_1": int(schedule.observed1.sum()),
        "n_observed_2": int(schedule.observed2.sum()),
    })
    return outdir


# ---------------------------------------------------------------------------
# variance-compare


def _variance_cell(args):
    cfg_dict, level, filter_kind, seeds = args
    cfg = RunConfig.from_dict(cfg_dict)
    model = _model_from(cfg)
    schedule, dataset = _dataset_from(cfg, model)
    params = model.decode(_theta_true(cfg))
    aux = model.make_aux(cfg.aux) if filter_kind == "bridge" else None
    proposal = (default_proposal(model, cfg.proposal_scale)
                if filter_kind == "bridge" else None)
    values = []
    n_fail = 0
    for s in seeds:
        rng = np.random.default_rng(np.random.SeedSequence(s))
        if filter_kind == "euler":
            res = euler_filter(model, params, schedule, dataset, level,
                               cfg.n_particles, rng)
        else:
            res = bridge_filter(model, aux, proposal, params, schedule,
                                dataset, level, cfg.n_particles, rng)
        if res.failed:
            n_fail += 1
        else:
            values.append(res.log_likelihood)
    var = float(np.var(values, ddof=1)) if len(values) > 1 else float("nan")
    return level, filter_kind, var, n_fail


def cmd_variance_compare(cfg):
    """Variance of the log-likelihood estimate per level for both filters."""
    cfg.validate()
    levels = cfg.levels or list(range(2, 9))
    if _theta_true(cfg) is None:
        raise ValueError("variance-compare needs simulated data (theta_true)")
    jobs = []
    for li, level in enumerate(levels):
        for fi, filter_kind in enumerate(("euler", "bridge")):
            child = np.random.SeedSequence(entropy=cfg.seed,
                                           spawn_key=(li, fi))
            seeds = [int(s.generate_state(1)[0])
                     for s in child.spawn(cfg.replications)]
            jobs.append((asdict(cfg), level, filter_kind, seeds))
    results = _run_jobs(_variance_cell, jobs, cfg.workers)
    rows = [(lvl, kind, var, nf) for lvl, kind, var, nf in results]
    rows.sort(key=lambda r: (r[0], r[1]))
    outdir = _resolve_outdir(cfg, f"variance-{config_hash(cfg)}")
    _write_csv(os.path.join(outdir, "variance_compare.csv"),
               ["level", "filter", "var_log_likelihood", "n_failed"], rows)
    _write_provenance(cfg, outdir)
    return outdir


# ---------------------------------------------------------------------------
# run-mcmc


def _chain_rows(chain):
    d = chain.thetas.shape[1]
    for k in range(chain.thetas.shape[0]):
        row = [k] + [float(v) for v in chain.thetas[k]]
        row += [float(chain.log_liks[k]), int(chain.accepts[k])]
        if chain.tw_fine is not None:
            row += [float(chain.tw_fine[k]), float(chain.tw_coarse[k])]
        yield row


def _write_chain(chain, model, path):
    header = ["iteration"] + list(model.param_names) + ["log_likelihood",
                                                        "accept"]
    if chain.tw_fine is not None:
        header += ["tw_fine", "tw_coarse"]
    _write_csv(path, header, _chain_rows(chain))


def _run_single_chain(cfg, model, schedule, dataset, level, n_iterations,
                      seed_seq, filter_kind=None, coarse_level=None):
    prior = _prior_from(cfg, model)
    rng = np.random.default_rng(seed_seq)
    kind = filter_kind or cfg.filter
    kwargs = dict(level=level, n_iterations=n_iterations, prior=prior,
                  rw_scales=cfg.rw_scales, n_particles=cfg.n_particles,
                  rng=rng, adapt_frac=cfg.burn_frac)
    if kind == "delta":
        return coupled_pmcmc(model, schedule, dataset,
                             aux=model.make_aux(cfg.aux),
                             proposal=default_proposal(model, cfg.proposal_scale),
                             coarse_level=coarse_level, **kwargs)
    if kind == "bridge":
        return pmcmc(model, schedule, dataset, filter_kind="bridge",
                     aux=model.make_aux(cfg.aux),
                     proposal=default_proposal(model, cfg.proposal_scale),
                     **kwargs)
    return pmcmc(model, schedule, dataset, filter_kind="euler", **kwargs)


def cmd_run_mcmc(cfg):
    cfg.validate()
    model = _model_from(cfg)
    schedule, dataset = _dataset_from(cfg, model)
    seed_seq = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0,))
    chain = _run_single_chain(cfg, model, schedule, dataset, cfg.level,
                              cfg.iterations, seed_seq)
    outdir = _resolve_outdir(cfg, f"mcmc-{config_hash(cfg)}")
    _write_chain(chain, model, os.path.join(outdir, f"chain_l{cfg.level}.csv"))
    burn = int(round(cfg.burn_frac * chain.n_iterations))
    post = chain.thetas[burn:]
    summary = {
        "acceptance_rate": chain.acceptance_rate,
        "n_filter_failures": chain.n_filter_failures,
        "posterior_means": {n: float(post[:, i].mean())
                            for i, n in enumerate(model.param_names)},
        "posterior_sds": {n: float(post[:, i].std(ddof=1))
                          for i, n in enumerate(model.param_names)},
        "ess": {n: effective_sample_size(post[:, i])
                for i, n in enumerate(model.param_names)},
        "final_proposal_scale": chain.final_scale,
    }
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_provenance(cfg, outdir)
    return outdir


# ---------------------------------------------------------------------------
# estimate (multilevel estimator over existing chains)


def load_chain_csv(path, n_params):
    thetas, log_liks, accepts, twf, twc = [], [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        has_tw = "tw_fine" in header
        for row in reader:
            thetas.append([float(v) for v in row[1:1 + n_params]])
            log_liks.append(float(row[1 + n_params]))
            accepts.append(bool(int(row[2 + n_params])))
            if has_tw:
                twf.append(float(row[3 + n_params]))
                twc.append(float(row[4 + n_params]))
    from .mcmc import ChainResult
    thetas = np.asarray(thetas)
    m = np.zeros((thetas.shape[0], 0))
    return ChainResult(
        thetas=thetas, log_liks=np.asarray(log_liks),
        accepts=np.asarray(accepts, dtype=bool), missing=m, level=-1,
        n_particles=0,
        tw_fine=np.asarray(twf) if twf else None,
        tw_coarse=np.asarray(twc) if twc else None,
        missing_coarse=m if twf else None)


def cmd_estimate(cfg, base_chain_path, coupled_paths):
    """Multilevel estimate of the posterior parameter means from chain files.

    ``coupled_paths`` maps fine level -> chain CSV path.
    """
    model = _model_from(cfg)
    base = load_chain_csv(base_chain_path, model.n_params)
    coupled = {int(level): load_chain_csv(p, model.n_params)
               for level, p in coupled_paths.items()}
    est = multilevel_estimate(base, coupled, burn_frac=cfg.burn_frac)
    outdir = _resolve_outdir(cfg, f"estimate-{config_hash(cfg)}")
    doc = {
        "estimate": {n: float(est.estimate[i])
                     for i, n in enumerate(model.param_names)},
        "base_term": {n: float(est.base_term[i])
                      for i, n in enumerate(model.param_names)},
        "corrections": {str(lvl): [float(v) for v in corr]
                        for lvl, corr in est.corrections.items()},
        "se": {n: float(est.se[i]) for i, n in enumerate(model.param_names)},
        "level_valid": {str(k): bool(v) for k, v in est.level_valid.items()},
        "n_excluded": {str(k): int(v) for k, v in est.n_excluded.items()},
    }
    with open(os.path.join(outdir, "estimate.json"), "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_provenance(cfg, outdir)
    return outdir


# ---------------------------------------------------------------------------
# rate-study


def run_multilevel(cfg, model, schedule, dataset, epsilon, seed_seq):
    """One full multilevel run; returns (estimate vector, cost)."""
    alloc = allocate_levels(epsilon, cfg.level_min, regime=cfg.regime,
                            base_iterations=cfg.base_iterations)
    children = seed_seq.spawn(alloc.level_max - alloc.level_min + 1)
    base_chain = _run_single_chain(
        cfg, model, schedule, dataset, alloc.level_min,
        alloc.iterations[alloc.level_min], children[0], filter_kind="bridge")
    coupled = {}
    for i, level in enumerate(range(alloc.level_min + 1, alloc.level_max + 1)):
        coupled[level] = _run_single_chain(
            cfg, model, schedule, dataset, level, alloc.iterations[level],
            children[i + 1], filter_kind="delta")
    est = multilevel_estimate(base_chain, coupled, burn_frac=cfg.burn_frac)
    n_part = cfg.n_particles or max(schedule.n_interior, 1)
    cost = alloc.cost(n_part, schedule.n_intervals)
    return est.estimate, cost


def run_single_level(cfg, model, schedule, dataset, n_iterations, seed_seq):
    chain = _run_single_chain(cfg, model, schedule, dataset, cfg.level,
                              int(n_iterations), seed_seq,
                              filter_kind=cfg.filter)
    burn = int(round(cfg.burn_frac * chain.n_iterations))
    n_part = cfg.n_particles or max(schedule.n_interior, 1)
    cost = float(chain.n_iterations * n_part * 2 ** cfg.level
                 * schedule.n_intervals)
    return chain.thetas[burn:].mean(axis=0), cost


def _rate_job(args):
    cfg_dict, budget_idx, budget, rep, state = args
    cfg = RunConfig.from_dict(cfg_dict)
    model = _model_from(cfg)
    schedule, dataset = _dataset_from(cfg, model)
    seed_seq = np.random.SeedSequence(entropy=cfg.seed,
                                      spawn_key=(1, budget_idx, rep))
    if cfg.filter == "delta":
        est, cost = run_multilevel(cfg, model, schedule, dataset, budget,
                                   seed_seq)
    else:
        est, cost = run_single_level(cfg, model, schedule, dataset, budget,
                                     seed_seq)
    return budget_idx, rep, est, cost


def fit_loglog_slope(costs, mses):
    x = np.log10(np.asarray(costs, dtype=float))
    y = np.log10(np.asarray(mses, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def cmd_rate_study(cfg, reference=None):
    """MSE-versus-cost rates over a ladder of budgets.

    Budgets are accuracy targets (epsilon) for the multilevel estimator or
    iteration counts for a single-level chain. The MSE reference defaults to
    the data-generating parameters; pass ``reference`` (or set
    cfg.reference to a JSON path) to use e.g. a long-run posterior mean.
    """
    cfg.validate()
    budgets = cfg.budgets
    if not budgets or len(budgets) < 4:
        raise ValueError("rate study needs at least 4 budget points")
    model = _model_from(cfg)
    if reference is None:
        if cfg.reference == "truth":
            reference = _theta_true(cfg)
            if reference is None:
                raise ValueError("reference='truth' requires simulated data")
        else:
            with open(cfg.reference) as fh:
                doc = json.load(fh)
            reference = np.array([doc[n] for n in model.param_names])
    reference = np.asarray(reference, dtype=float)

    jobs = [(asdict(cfg), bi, budget, rep, None)
            for bi, budget in enumerate(budgets)
            for rep in range(cfg.replicates)]
    results = _run_jobs(_rate_job, jobs, cfg.workers)

    d = model.n_params
    n_b = len(budgets)
    est = np.full((n_b, cfg.replicates, d), np.nan)
    costs = np.zeros((n_b, cfg.replicates))
    for bi, rep, e, c in results:
        est[bi, rep] = e
        costs[bi, rep] = c
    mse = np.nanmean((est - reference) ** 2, axis=1)  # (n_b, d)
    mean_cost = costs.mean(axis=1)

    rows = []
    for bi, budget in enumerate(budgets):
        for pi, name in enumerate(model.param_names):
            rows.append((budget, float(mean_cost[bi]), name,
                         float(mse[bi, pi])))
    outdir = _resolve_outdir(cfg, f"rate-{config_hash(cfg)}")
    _write_csv(os.path.join(outdir, "rate_study.csv"),
               ["budget", "cost", "parameter", "mse"], rows)
    slopes = {name: fit_loglog_slope(mean_cost, mse[:, pi])
              for pi, name in enumerate(model.param_names)}
    doc = {"slopes": slopes,
           "reference": {n: float(reference[i])
                         for i, n in enumerate(model.param_names)},
           "replicates": cfg.replicates,
           "budgets": list(budgets)}
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_provenance(cfg, outdir)
    return outdir


# ---------------------------------------------------------------------------
# worker fan-out


def _run_jobs(fn, jobs, workers):
    if workers and workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(job) for job in jobs]
