"""misspeclab: a desk-scale numerical laboratory for Bayesian posterior
concentration under model misspecification.

Layers, bottom up: mixed-measure densities and quadrature (``measures``),
divergence and affinity functionals (``divergences``, ``finite``), KL
projection onto finite families (``projection``), the sequential posterior
engine (``posterior``), assumption checkers and minimax verification
(``checkers``), packaged counterexample and model scenarios
(``scenarios``), the non-identically-distributed design extension
(``inid``), and a command-line front door (``cli``).
"""

from .divergences import (
    AffinityCurve,
    DivergenceEstimate,
    alpha_affinity,
    affinity_curve,
    inf_alpha_affinity,
    kl,
    kl_excess,
    l1,
    l1_metric,
    sup_metric,
    weighted_l1,
    weighted_l1_metric,
)
from .errors import MisspecLabError
from .measures import (
    BaseMeasure,
    Density,
    SampleBatch,
    Support,
    WeightedMeasure,
    catalog,
    example2_measure,
    integrate,
    make_ald,
)
from .posterior import (
    PosteriorState,
    RegionQuery,
    make_weak_query,
    posterior_init,
    posterior_update,
    region_mass,
    run_trajectory,
)
from .projection import FiniteFamily, ProjectionResult, kl_minimizer, kl_profile
from .report import ExperimentReport
from .streams import stream

__version__ = "0.1.0"
