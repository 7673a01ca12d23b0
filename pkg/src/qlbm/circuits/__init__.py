from .base import CircuitSpec, Marker
from .companion import COLLISION_TAGS, noise_estimation_circuit
from .costs import cnx_cost, controlled_rotation_cost, ladder_cost, rung_cost
from .mps import MPSApprox, mps_fit, mps_loader_circuit
from .prep import prep_circuit, prep_nonuniform_circuit
from .resources import SynthesisReport, resource_report, table_rows
from .streaming import (
    ENCODINGS,
    direction_streaming,
    flag_check_circuit,
    make_layout,
    shift_gates,
    streaming_circuit,
)

__all__ = [
    "CircuitSpec", "Marker", "cnx_cost", "controlled_rotation_cost", "ladder_cost", "rung_cost",
    "prep_circuit", "prep_nonuniform_circuit", "ENCODINGS", "direction_streaming",
    "flag_check_circuit", "make_layout", "shift_gates", "streaming_circuit", "COLLISION_TAGS",
    "noise_estimation_circuit", "MPSApprox", "mps_fit", "mps_loader_circuit", "SynthesisReport",
    "resource_report", "table_rows",
]
