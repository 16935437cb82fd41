"""
Simulation service
Builds initial data from a run configuration, drives one trajectory with its
sinks attached, applies the configured checks and writes the artifacts
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union
import logging

import numpy as np

from config.sim_config import Config, InitialDataSection
from core.dynamics import SimParams, Trajectory, run
from core.event_handlers import EventProcessor, MemorySink
from core.field import SphereField, constant_field, make_great_circle, make_perturbation
from core.records import CheckReport, CheckStatus, ExperimentSummary
from core.spectral import SpectralGrid
from services.analysis_service import apply_checks, check_stability, worst_status
from services.io_service import SnapshotSink, TimeseriesSink, content_hash, write_snapshot

logger = logging.getLogger(__name__)


def equator_profile(grid: SpectralGrid, degree: int, amplitude: float, mode: int = 1) -> np.ndarray:
    """theta = 2 pi degree x/L + a sin(2 pi mode x/L) along the first axis"""
    x = grid.coordinates()[0]
    phase = 2 * np.pi * x / grid.box_lengths[0]
    return degree * phase + amplitude * np.sin(mode * phase)


def build_initial_data(grid: SpectralGrid, spec: InitialDataSection, params: SimParams,
                       seed: Optional[int] = None) -> SphereField:
    """Initial field for one of the configured generators; seed overrides spec.seed"""
    seed = spec.seed if seed is None else seed
    base_point = spec.base_point
    if base_point is None:
        base_point = np.zeros(spec.components)
        base_point[-1] = 1.0
    if spec.kind == "constant":
        return constant_field(grid, base_point)
    if spec.kind == "great_circle":
        return make_great_circle(grid, equator_profile(grid, spec.degree, spec.amplitude, spec.kmax))
    u, size = make_perturbation(grid, base_point, spec.amplitude, spec.kmax, seed, params.dealias)
    logger.info(f"initial perturbation: |u0|_H^(n/2) = {size:.6g}")
    return u


@dataclass
class SimulationResult:
    """Trajectory, check reports and written artifacts of one configured run"""
    trajectory: Trajectory
    reports: List[Any] = field(default_factory=list)
    artifacts: Dict[str, Path] = field(default_factory=dict)

    @property
    def status(self) -> CheckStatus:
        if self.trajectory.error is not None:
            return CheckStatus.FAIL
        return worst_status(self.reports)

    def summary(self) -> ExperimentSummary:
        summary = ExperimentSummary(name=f"simulate {self.trajectory.run_id}")
        for report in self.reports:
            summary.rows.append(report.to_dict())
        if self.trajectory.error is not None:
            summary.rows.append(CheckReport("run", CheckStatus.FAIL,
                                            {"t": self.trajectory.t_final},
                                            message=str(self.trajectory.error)).to_dict())
        for name, path in self.artifacts.items():
            summary.notes.append(f"{name}: {path} sha256={content_hash(path)}")
        return summary


class SimulationService:
    """Runs a validated configuration end to end"""

    def __init__(self, config: Config, out_dir: Optional[Union[str, Path]] = None,
                 seed: Optional[int] = None):
        self.config = config
        self.out_dir = Path(out_dir if out_dir is not None else config.output.directory)
        self.seed = seed

    def initial_data(self) -> SphereField:
        return build_initial_data(self.config.grid, self.config.initial_data,
                                  self.config.params, self.seed)

    def _processor(self) -> EventProcessor:
        output = self.config.output
        processor = EventProcessor()
        processor.register_sink(MemorySink())
        if output.timeseries:
            processor.register_sink(TimeseriesSink(self.out_dir / f"{output.prefix}.csv",
                                                   self.config.params.seminorm_orders))
        if self.config.params.snapshot_every:
            processor.register_sink(SnapshotSink(self.out_dir, output.prefix))
        return processor

    def run(self) -> SimulationResult:
        """Run the trajectory, then every enabled check on it"""
        params = self.config.params
        output = self.config.output
        u0 = self.initial_data()
        run_id = output.prefix if self.seed is None else f"{output.prefix}-s{self.seed}"
        trajectory = run(u0, params, sink=self._processor(), raise_errors=False, run_id=run_id)
        result = SimulationResult(trajectory)

        if output.timeseries:
            result.artifacts["timeseries"] = self.out_dir / f"{output.prefix}.csv"
        if output.snapshot_final:
            result.artifacts["snapshot"] = write_snapshot(
                trajectory.final, trajectory.t_final, self.out_dir / f"{output.prefix}_final.hllg")
        if trajectory.error is not None:
            logger.error(f"[{run_id}] checks skipped: {trajectory.error}")
            return result

        checks = self.config.checks
        result.reports.extend(apply_checks(trajectory, checks.enabled()))
        if checks.stability:
            result.reports.append(check_stability(u0, checks.stability_delta0, params,
                                                  seed=(self.seed or 0) + 1))
        for report in result.reports:
            if report.status is not CheckStatus.PASS:
                label = getattr(report, "name", None) or "energy_identity"
                logger.warning(f"[{run_id}] check {label}: {report.status.value}")
        logger.info(f"[{run_id}] overall status: {result.status.value}")
        return result
