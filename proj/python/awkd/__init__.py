"""Adaptive weighted knowledge distillation."""

from ._awkd import (
    AwkdError,
    __version__,
    clip_normalize,
    cross_entropy,
    entropy,
    inverse_entropy_weights,
    kl_divergence,
    list_kinds,
    run,
    unified_weight,
    validate,
    weighted_ensemble,
)

__all__ = [
    "AwkdError",
    "__version__",
    "clip_normalize",
    "cross_entropy",
    "entropy",
    "inverse_entropy_weights",
    "kl_divergence",
    "list_kinds",
    "run",
    "unified_weight",
    "validate",
    "weighted_ensemble",
]
