import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chargesim.battery.ecm import CellParams, OcvTable


@pytest.fixture
def flat_ocv_cell() -> CellParams:
    """Constant-OCV cell: isolates circuit dynamics from the OCV curve."""
    table = OcvTable([0.0, 1.0], [3.6, 3.6 + 1e-9])
    return CellParams(r1=0.005, c1=1000.0, r2=0.002, c2=10000.0,
                      a_r0=0.0, b_r0=0.01, c_r0=0.0, ocv_table=table,
                      nominal_capacity_ah=10.0, v_min=2.5, v_max=4.5)


@pytest.fixture
def nmc_cell() -> CellParams:
    from chargesim.demo import default_cell
    return default_cell()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
