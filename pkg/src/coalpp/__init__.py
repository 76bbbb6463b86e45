"""coalpp: coalescent point processes for birth-death and Feller genealogies.

Node-height distribution families, exact coalescent-time laws under several
conditionings, Bernoulli/Poisson/k-sampling transforms, expected waiting-time
recursions and hypergeometric closed forms, tree simulators with a compiled
forward birth-death oracle, and a Monte Carlo verification harness.
"""

__version__ = "0.1.0"

from ._backend import HAVE_COMPILED, backend_name
from .analytics import (
    FellerSetting,
    FixedStem,
    RootAtInfinity,
    UniformPrior,
)
from .models import (
    BernoulliThinned,
    BirthDeath,
    BirthDeathSingleAncestor,
    NodeHeightModel,
    PoissonFeller,
    WiufForm,
    feller_prelimit_rates,
    symmetric_partner,
    to_wiuf_form,
)
from .numerics import QuadratureSpec, beta_fn, hyp2f1_b1, integrate, mu_fn
from .sampling import IndexChain, sample_index_chain
from .simulate import (
    BdGenealogy,
    RngState,
    simulate_bd_oracle,
    simulate_cpp,
    simulate_cpp_given_n,
    simulate_feller_ksample,
    simulate_root_infinity,
    simulate_unif_prior,
    simulate_yule_transform,
)
from .trees import CoalescentTree, parse_newick, plot_coordinates, to_newick

__all__ = [
    "__version__",
    "HAVE_COMPILED",
    "backend_name",
    "QuadratureSpec",
    "beta_fn",
    "mu_fn",
    "hyp2f1_b1",
    "integrate",
    "NodeHeightModel",
    "BirthDeath",
    "BirthDeathSingleAncestor",
    "WiufForm",
    "BernoulliThinned",
    "PoissonFeller",
    "to_wiuf_form",
    "symmetric_partner",
    "feller_prelimit_rates",
    "FellerSetting",
    "FixedStem",
    "UniformPrior",
    "RootAtInfinity",
    "IndexChain",
    "sample_index_chain",
    "RngState",
    "BdGenealogy",
    "simulate_cpp",
    "simulate_cpp_given_n",
    "simulate_root_infinity",
    "simulate_unif_prior",
    "simulate_yule_transform",
    "simulate_bd_oracle",
    "simulate_feller_ksample",
    "CoalescentTree",
    "to_newick",
    "parse_newick",
    "plot_coordinates",
]
