"""Numerical laboratory for Musielak-Orlicz modulars: integrands, conjugates,
regularity witnesses, Luxemburg norms and mollification pipelines."""
from .conjugate import EnvelopeTable, legendre_conjugate, local_inf_envelope, second_conjugate, verify_envelope_bound
from .convergence import (
    detect_modular_convergence,
    dyadic_convexity_check,
    lavrentiev_experiment,
    segment_approximation,
    verify_modular_domination,
    verify_sup_bound,
    weak_pairing_check,
)
from .grid import GridDomain, GridFunction, gradient, lp_norm, luxemburg_norm, modular
from .mollify import build_segment_cover, friedrichs_kernel, partition_of_unity, shifted_mollify, translate, truncate
from .phi import PhiFunction, check_delta2, check_n_function, evaluate, make_family
from .regularity import (
    RegularityWitness,
    check_local_integrability,
    check_pointwise_domination,
    check_scaling_limsup,
    phi_witness,
    sharp_range_predicate,
)

__version__ = "0.1.0"
