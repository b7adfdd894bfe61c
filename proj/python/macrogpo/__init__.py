"""Nonmyopic macro-action GP planning (C++ core)."""

from ._core import (
    CapabilityError,
    Catalog,
    Grid,
    InvalidInput,
    KernelParams,
    NumericalError,
    ParseError,
    cardinal_actions,
    info_gain,
    kernel_cov,
    lambda_for_samples,
    plan_anytime,
    plan_epsilon,
    posterior,
    run_suite,
    sample_size,
)

__all__ = [
    "CapabilityError",
    "Catalog",
    "Grid",
    "InvalidInput",
    "KernelParams",
    "NumericalError",
    "ParseError",
    "cardinal_actions",
    "info_gain",
    "kernel_cov",
    "lambda_for_samples",
    "plan_anytime",
    "plan_epsilon",
    "posterior",
    "run_suite",
    "sample_size",
]
