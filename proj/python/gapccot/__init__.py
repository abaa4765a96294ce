"""Snapshot compressive imaging: CASSI/video forward models, GAP-TV and GAP-CCoT."""

from ._core import (
    Network,
    Operator,
    adjoint,
    forward,
    gap_tv,
    normalized_adjoint,
    project,
    psnr,
    read_cube,
    ssim,
    synthetic_cube,
    tv_denoise,
    write_cube,
)

__all__ = [
    "Network",
    "Operator",
    "adjoint",
    "forward",
    "gap_tv",
    "normalized_adjoint",
    "project",
    "psnr",
    "read_cube",
    "ssim",
    "synthetic_cube",
    "tv_denoise",
    "write_cube",
]
