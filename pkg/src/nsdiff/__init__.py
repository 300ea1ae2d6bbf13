"""Bayesian inference for non-synchronously observed bivariate diffusions."""

from . import _kernels
from .bridge import (BridgePath, IncrementPath, bridge_path, coarsen,
                     guided_drift, log_bridge_weight, sample_increments,
                     total_displacement)
from .filters import (CoupledFilterResult, FilterFailure, FilterResult,
                      bridge_filter, coupled_bridge_filter, euler_filter,
                      missing_values, resample_multinomial)
from .mcmc import (ChainResult, LevelAllocation, MLEstimate, PriorSpec,
                   allocate_levels, coupled_pmcmc, default_prior,
                   effective_sample_size, multilevel_estimate, pmcmc,
                   telescoping_weights)
from .models import (DegenerateStateError, LotkaVolterra, LVParams,
                     OrnsteinUhlenbeck, OUParams, aux_grad_log, aux_hess_log,
                     aux_logpdf, bind_interval, get_model)
from .observations import (Dataset, ObservationSchedule, TimeClass,
                           classify_time, load_dataset, save_dataset,
                           simulate_dataset)
from .proposals import (CoupledSample, ExactEndpointProposal,
                        GaussianEndpointProposal, LogNormalEndpointProposal,
                        default_proposal, endpoint_logpdf, euler_step_density,
                        maximal_coupling, maximal_coupling_vec)

__version__ = "0.1.0"

kernel_backend = _kernels.backend_name
