"""
Services module for the simulator
Contains analysis checks, file formats, single runs and scripted experiments
"""

from .simulation_service import SimulationService

__all__ = [
    'SimulationService'
]
