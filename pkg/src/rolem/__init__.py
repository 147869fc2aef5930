"""Bayesian robust longitudinal envelope models."""
from .corrstruct import CorrelationSpec, corr_inverse_logdet, corr_matrix
from .errors import DataError, FrameError, InvalidParameterError, NumericalError, RolemError
from .model import LongitudinalDataset, ParameterState, assemble, loglik_conditional, loglik_marginal
from .sampler import ChainOutput, PriorSpec, TuningSpec, initialize, run_chain
from .simgen import SimDesign, generate

__version__ = "0.1.0"
