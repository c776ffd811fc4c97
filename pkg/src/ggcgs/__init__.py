"""Workbench for the generic G+G convoluted Gaussian signature scheme,
the ratio key-recovery attack on it, and the analysis experiments for the
revised module variant."""

from ggcgs.ring import (
    ring_mul,
    skew_circulant,
    zeta_mul,
    zeta_star_mul,
    inf_norm,
    l2_norm,
)
from ggcgs.params import SchemeParams, ParamSet, builtin_param_sets, load_param_file
from ggcgs.sampling import (
    NotPositiveDefiniteError,
    CovarianceMatrix,
    build_covariance,
    worker_rng,
)
from ggcgs.scheme import PublicKey, SecretKey, Signature, keygen, sign, verify, forge_signature
from ggcgs.attack import (
    AttackPlan,
    AttackReport,
    RatioAccumulator,
    alpha_star,
    make_plan,
    recover,
    run_attack,
)

__version__ = "0.1.0"
