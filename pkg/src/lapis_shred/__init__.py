"""Sparse-sensor spatiotemporal reconstruction lab.

Pipeline: SHRED spatial models (LSTM encoder + shallow decoder) trained on
simulation ensembles, latent-space temporal models (Seq2Seq backward/forward
and autoregressive) for inferring unobserved trajectory segments from short
sensor windows, plus the simulators, metrics and CLI needed to reproduce the
desk-scale experiments.
"""

__version__ = "0.1.0"

from .errors import ConfigError, NumericsError  # noqa: F401
