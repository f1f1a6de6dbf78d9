"""icl_ts_lab: transformer in-context learning for autoregressive time series.

Architecture:
    core/        config, errors, numerics, serialization, worker pool
    model/       attention / any-variate attention / MLP stack and norms
    data/        any-variate encoding, synthetic AR datasets
    construct/   explicit weights: reformat, in-context GD, MLE variance
    theory/      Dobrushin coefficients and generalization bounds
    train/       torch pretraining, gradients and finite-difference checks
    experiments/ construction verification and lookback sweeps
"""

__version__ = "0.1.0"
