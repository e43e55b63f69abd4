"""Python bindings for the tclreg simulator."""

from ._tclreg import (
    HouseParams,
    TclregError,
    __version__,
    aging_rate,
    bias_threshold,
    distflow_voltage,
    feeder_summary,
    find_peak_hour,
    natural_duty_cycle,
    randomization_study,
    run_case,
    simulate_house,
    switching_probabilities,
    validate_feeder,
    voltage_sensitivity,
)

__all__ = [
    "HouseParams",
    "TclregError",
    "__version__",
    "aging_rate",
    "bias_threshold",
    "distflow_voltage",
    "feeder_summary",
    "find_peak_hour",
    "natural_duty_cycle",
    "randomization_study",
    "run_case",
    "simulate_house",
    "switching_probabilities",
    "validate_feeder",
    "voltage_sensitivity",
]
