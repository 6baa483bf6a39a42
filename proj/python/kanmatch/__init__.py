# SPDX-License-Identifier: Apache-2.0
# Copyright Contributors to the kanmatch Project.
"""Spline colour transforms for camera-to-camera matching.

Images are float64 arrays of shape (H, W, 3) with values in [0, 1].
Colour samples are arrays of shape (N, 3). A transform is a flat vector of
90 parameters in the order u(9), v(9), c(72).
"""

from ._kanmatch import (
    BASIS_COUNT,
    PARAM_COUNT,
    Baseline,
    ColorSpace,
    ContractError,
    DomainError,
    Error,
    FormatError,
    GeneratorProfile,
    GeneratorWeights,
    Interp,
    IoError,
    ParamMap,
    SolverError,
    basis_vector,
    correspondence_loss,
    evaluate_metrics,
    finetune_paired,
    fit_baseline,
    fit_global_gd,
    fit_global_ls,
    fit_tiled,
    generator_forward,
    identity_params,
    kan_eval,
    linear_to_srgb,
    make_pair,
    psnr,
    read_png,
    srgb_to_linear,
    ssim,
    write_png,
)

__all__ = [
    "BASIS_COUNT",
    "PARAM_COUNT",
    "Baseline",
    "ColorSpace",
    "ContractError",
    "DomainError",
    "Error",
    "FormatError",
    "GeneratorProfile",
    "GeneratorWeights",
    "Interp",
    "IoError",
    "ParamMap",
    "SolverError",
    "basis_vector",
    "correspondence_loss",
    "evaluate_metrics",
    "finetune_paired",
    "fit_baseline",
    "fit_global_gd",
    "fit_global_ls",
    "fit_tiled",
    "generator_forward",
    "identity_params",
    "kan_eval",
    "linear_to_srgb",
    "make_pair",
    "psnr",
    "read_png",
    "srgb_to_linear",
    "ssim",
    "write_png",
]

__version__ = "0.1.0"
