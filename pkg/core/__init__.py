"""
Core module for the half-harmonic flow simulator
Contains the spectral grid, sphere-valued fields, norms, dynamics and run records
"""

from .errors import *
from .records import *
from .state_machine import *
from .event_handlers import *

__all__ = [
    'HalfFlowError',
    'ParameterError',
    'DataError',
    'Equation',
    'Scheme',
    'CheckStatus',
    'ThresholdClass',
    'EventType',
    'DiagnosticsRow',
    'RatioReport',
    'LedgerReport',
    'CheckReport',
    'ExperimentSummary',
    'EventProcessor',
    'MemorySink',
    'RunStateMachine',
    'RunState'
]
