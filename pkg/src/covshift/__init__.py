"""Additive least squares under covariate shift: risks, transfer bounds,
empirical-process tools, rate formulas and Gaussian examples."""
from . import distmodel, empproc, erm, funclass, gaussexamples, rates, rng, shift
from .errors import (CapabilityError, ConfigError, CovShiftError, DomainError, InputError,
                     NumericError, ShapeError)

__version__ = "0.1.0"
