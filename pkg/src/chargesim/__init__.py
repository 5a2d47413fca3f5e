"""Co-simulation of DER-integrated EV fast-charging stations.

Couples an equivalent-circuit battery plant (with identification and aging),
transformer thermal dynamics, solar and EVSE load models, a radial
distribution power flow, and an optimization-based dispatch controller, and
quantifies electricity cost, levelized cost of energy, transformer life, and
voltage violations across sizing sweeps.
"""

__version__ = "0.1.0"

from .config import ScenarioConfig, ScenarioInputs, load_scenario
from .scenario import ScenarioResult, SweepResult, run_scenario, run_sweep

__all__ = [
    "__version__", "ScenarioConfig", "ScenarioInputs", "load_scenario",
    "ScenarioResult", "SweepResult", "run_scenario", "run_sweep",
]
