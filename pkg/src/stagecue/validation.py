"""Input validation helpers shared by the training and evaluation entry points."""

from __future__ import annotations

import numpy as np


def check_instance(inst) -> None:
    if len(inst.options) < 2:
        raise ValueError(f"instance {inst.id!r}: needs at least 2 options, "
                         f"got {len(inst.options)}")
    if len(set(inst.options)) != len(inst.options):
        raise ValueError(f"instance {inst.id!r}: options are not distinct")
    if not 0 <= inst.gold < len(inst.options):
        raise ValueError(f"instance {inst.id!r}: gold index {inst.gold} out of range")
    if not all(isinstance(o, str) and o for o in inst.options):
        raise ValueError(f"instance {inst.id!r}: options must be non-empty strings")


def check_instances(instances, require_unique_ids: bool = True) -> None:
    seen = set()
    for inst in instances:
        check_instance(inst)
        if require_unique_ids:
            if inst.id in seen:
                raise ValueError(f"duplicate instance id {inst.id!r}")
            seen.add(inst.id)


def check_label_vector(values, n_options: int, atol: float = 1e-9) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (n_options,):
        raise ValueError(f"label vector shape {values.shape} does not match "
                         f"{n_options} options")
    if not np.isfinite(values).all():
        raise ValueError("label vector has non-finite entries")
    if (values < 0).any():
        raise ValueError("label vector has negative entries")
    total = float(values.sum())
    if abs(total - 1.0) > atol:
        raise ValueError(f"label vector sums to {total!r}, not 1 within {atol}")
    return values
