from .ecm import (
    BatteryState,
    CellParams,
    OcvTable,
    PackTopology,
    cell_step,
    clamp_current,
    r0_of_soc,
    scale_to_pack,
    BatteryPack,
    build_pack,
)
from .aging import AgingParams, AgingState, calendar_increment, cycle_increment, update_capacity
from .sysid import (
    ExperimentData,
    GaConfig,
    OcvCorrection,
    estimate_r0_bounds,
    fitness,
    ga_fit,
    ocv_correct,
)

__all__ = [
    "BatteryState", "CellParams", "OcvTable", "PackTopology", "cell_step",
    "clamp_current", "r0_of_soc", "scale_to_pack", "BatteryPack", "build_pack",
    "AgingParams", "AgingState", "calendar_increment", "cycle_increment",
    "update_capacity", "ExperimentData", "GaConfig", "OcvCorrection",
    "estimate_r0_bounds", "fitness", "ga_fit", "ocv_correct",
]
