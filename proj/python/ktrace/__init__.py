"""Knowledge tracing toolkit: dkt, dkvmn, sakt and rkt over a small autodiff core."""

from ._core import (
    compute_acc,
    compute_auc,
    decode_interaction,
    encode_interaction,
    forget_coefficients,
    generate_synthetic_csv,
    phi,
    run,
    softmax,
)

__all__ = [
    "compute_acc",
    "compute_auc",
    "decode_interaction",
    "encode_interaction",
    "forget_coefficients",
    "generate_synthetic_csv",
    "phi",
    "run",
    "softmax",
]
