"""Phase-type frailty models for survival data.

Closed-form survival, density and hazard functions through matrix
resolvents, maximum-likelihood fitting by nested EM under right censoring
and covariates, and shared and correlated multivariate extensions.
"""

from ._errors import (
    AmbiguityError,
    ConstructionError,
    DataError,
    DimensionError,
    DomainError,
    NumericError,
    PHFrailtyError,
    StateStarvationError,
    TruncationError,
    UnsupportedDataError,
)
from .data import Dataset, read_csv, write_csv
from .estimation import FitOptions, FitResult, WeightedSample, fit
from .frailty import (
    BaselineHazard,
    FrailtyModel,
    baseline_eval,
    cond_frailty_mean_event,
    cond_frailty_mean_surv,
    frailty_density,
    frailty_hazard,
    frailty_survival,
    laplace_tail,
    loglikelihood,
    residual_model,
    tail_index,
)
from .multivariate import (
    BivariatePH,
    CorrelatedFrailtyModel,
    SharedFrailtyModel,
    fit_shared,
)
from .phase_type import PhaseType, coxian, erlang, hyperexponential, make_structure
from .serialization import from_json, load_model, save_model, to_json
from .simulation import CensoringScheme, kaplan_meier, nelson_aalen, simulate_dataset

__version__ = "0.1.0"
