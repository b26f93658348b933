"""Process-wide numeric environment for torch compute."""

from __future__ import annotations

import torch


def flush_subnormals() -> None:
    """Flush x86 subnormal floats to zero.

    Long plateaus produce gradient chains full of subnormals, which drop
    CPU conv kernels into microcode assists and slow steps by an order of
    magnitude. No-op on hardware without FTZ/DAZ support.
    """
    torch.set_flush_denormal(True)
