"""Simulated passive RRAM crossbars used as a true random number generator and a PUF."""
from .crossbar import Crossbar, DriveVector, ReadResult, solve
from .device import DEFAULT_MODEL, DeviceModel, DeviceParams, DeviceState, PulseSpec
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    ParseError,
    RRAMError,
    SearchError,
    StateError,
    ValidationError,
)
from .puf import CRPSet, CrossbarPUF
from .stattests import SuiteReport, TestResult, run_suite, run_test
from .trng import BitStream, find_half_pulse, harvest
from .variation import ParamSchedule, VariationSpec

__version__ = "0.1.0"
