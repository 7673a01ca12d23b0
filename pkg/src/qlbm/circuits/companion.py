"""Noise-estimation companion: the step circuit with the collision removed."""
from __future__ import annotations

from .base import CircuitSpec

COLLISION_TAGS = ("prep", "unprep")


def noise_estimation_circuit(step: CircuitSpec) -> CircuitSpec:
    """Drop PREP/UNPREP; with the collision gone streaming acts on |0>_D as identity."""
    tags = {g.tag for g in step.gates}
    if not tags & set(COLLISION_TAGS):
        raise ValueError("step circuit carries no prep/unprep-tagged gates")
    return step.without(*COLLISION_TAGS)
