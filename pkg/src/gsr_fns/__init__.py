"""False-negative detection of gunshot-residue particles on a pixel grid."""

__version__ = "0.1.0"

from .grid_model import GridSpec, Offset, Particle, Registration, register, register_dimensionless
from .sizedist import LogTParams, logt_density, logt_sample
from .likelihood import LikelihoodTable, build_table, p_b0, likelihood_slice, mean_curve, posterior_slice
from .inference import ObservedDataset, PosteriorDraws, fit, goodness_of_fit, marginal_b_pmf
from .fns import CountDistribution, fns_curve, fns_probability, p_b0_marginal, validate_multiresolution

__all__ = [
    "GridSpec", "Offset", "Particle", "Registration", "register", "register_dimensionless",
    "LogTParams", "logt_density", "logt_sample",
    "LikelihoodTable", "build_table", "p_b0", "likelihood_slice", "mean_curve", "posterior_slice",
    "ObservedDataset", "PosteriorDraws", "fit", "goodness_of_fit", "marginal_b_pmf",
    "CountDistribution", "fns_curve", "fns_probability", "p_b0_marginal", "validate_multiresolution",
]
