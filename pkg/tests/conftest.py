"""Shared fixtures: small periodic grids and smooth sphere-valued data"""

import numpy as np
import pytest

import config.settings as settings
from core.dynamics import SimParams, Trajectory
from core.field import constant_field, make_great_circle, make_perturbation
from core.records import DiagnosticsRow, Equation
from core.spectral import DealiasPolicy, SpectralGrid
from core.state_machine import RunStateMachine

NORTH = (0.0, 0.0, 1.0)


def synthetic(grid, times, seminorms=None, final=None, **columns):
    """Trajectory with hand-written diagnostics rows"""
    rows = []
    for i, t in enumerate(times):
        values = {name: float(series[i]) for name, series in columns.items()}
        rows.append(DiagnosticsRow(
            t=float(t), E=values.pop("E", 1.0), E_eps=values.pop("E_eps", 1.0),
            seminorms={s: float(series[i]) for s, series in (seminorms or {}).items()},
            **values,
        ))
    initial = constant_field(grid, NORTH)
    return Trajectory(run_id="synthetic", params=SimParams(), initial=initial,
                      orders=tuple(sorted(seminorms or {})), machine=RunStateMachine("synthetic"),
                      rows=rows, final=final if final is not None else initial)


@pytest.fixture
def grid1():
    return SpectralGrid.create(1, 64, 2 * np.pi)


@pytest.fixture
def grid2():
    return SpectralGrid.create(2, 32, 2 * np.pi)


@pytest.fixture
def small_u(grid1):
    """Resolved small perturbation of the north pole in one dimension"""
    u, _ = make_perturbation(grid1, NORTH, 0.05, 2, seed=7)
    return u


@pytest.fixture
def small_u2(grid2):
    u, _ = make_perturbation(grid2, NORTH, 0.05, 2, seed=11)
    return u


@pytest.fixture
def rotation_map(grid1):
    """Degree-one equator map x -> (cos x, sin x, 0)"""
    return make_great_circle(grid1, grid1.coordinates()[0])


@pytest.fixture
def hllg_params():
    return SimParams(equation=Equation.HLLG, damping=1.0, dt=1e-3, T=0.05, sample_every=1)


@pytest.fixture
def exact_products():
    """No truncation of products, for algebraic identities"""
    return DealiasPolicy.NONE


@pytest.fixture(autouse=True)
def calibration_file(tmp_path, monkeypatch):
    """Keep reference calibrations out of the working tree"""
    path = tmp_path / "calibration.json"
    monkeypatch.setattr(settings, "CALIBRATION_FILE", str(path))
    monkeypatch.setattr(settings, "AGMON_CALIBRATION", None)
    return path
