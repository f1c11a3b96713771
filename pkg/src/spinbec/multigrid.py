"""Cascadic multigrid: PCG solves chained from coarse to fine grids.

Each level's converged state is interpolated to the next (doubled) grid by
zero-padding its Fourier coefficients, renormalized, and used as the initial
guess there. There is no restriction back to coarse grids.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument, UnsupportedDiagnostic
from .optimizer import ConvergenceRecord, SolverConfig, pcg_solve
from .physics import EnergyBreakdown, EnergyFunctional, PhysicsParams, energy, phase_align, virial_residual
from .spectral import GridSpec, SpinorField, normalize, prolongate

log = logging.getLogger(__name__)


@dataclass
class MultigridPlan:
    levels: list[GridSpec]
    configs: list[SolverConfig]

    def __post_init__(self):
        if not self.levels:
            raise InvalidArgument("a multigrid plan needs at least one level")
        if len(self.configs) != len(self.levels):
            raise InvalidArgument("one solver config per level is required")
        for lo, hi in zip(self.levels, self.levels[1:]):
            if not lo.same_domain(hi):
                raise InvalidArgument("all levels must share the same domain")
            if tuple(hi.shape) != tuple(2 * n for n in lo.shape):
                raise InvalidArgument(f"points must double between levels: {lo.shape} -> {hi.shape}")

    @classmethod
    def cascade(cls, finest: GridSpec, coarsest_points: int | Sequence[int],
                config: Optional[SolverConfig] = None,
                coarse_tol: Optional[float] = None) -> "MultigridPlan":
        """Levels from ``coarsest_points`` up to ``finest`` by doubling.

        Every level uses ``config``; ``coarse_tol`` optionally loosens the
        tolerance on all but the finest level.
        """
        config = config or SolverConfig()
        if isinstance(coarsest_points, int):
            coarsest_points = [coarsest_points] * finest.dim
        levels = [finest]
        while tuple(levels[0].shape) != tuple(coarsest_points):
            pts = levels[0].shape
            if any(n % 2 or n // 2 < c for n, c in zip(pts, coarsest_points)):
                raise InvalidArgument(f"cannot reach {tuple(coarsest_points)} points by halving {finest.shape}")
            levels.insert(0, GridSpec(finest.dim, finest.half_widths, tuple(n // 2 for n in pts)))
        configs = [replace(config) for _ in levels]
        if coarse_tol is not None:
            for c in configs[:-1]:
                c.tol = coarse_tol
        return cls(levels, configs)


@dataclass
class CascadeResult:
    phi: SpinorField
    energy: EnergyBreakdown
    records: list[ConvergenceRecord] = field(default_factory=list)
    level_energies: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return bool(self.records) and self.records[-1].converged

    @property
    def record(self) -> ConvergenceRecord:
        return self.records[-1]

    def __iter__(self):
        return iter((self.phi, self.energy, self.records))


def cm_pcg_solve(phi0_coarse: SpinorField, params: PhysicsParams, plan: MultigridPlan) -> CascadeResult:
    if phi0_coarse.grid != plan.levels[0]:
        raise InvalidArgument("initial guess must live on the coarsest level of the plan")
    out = CascadeResult(phi0_coarse, None)
    phi = phi0_coarse
    for i, (grid, config) in enumerate(zip(plan.levels, plan.configs)):
        if i > 0:
            phi = normalize(prolongate(phi, grid))
            start = pcg_energy_estimate(phi, params)
            prev = out.level_energies[-1]
            if abs(start - prev) > 0.1 * abs(prev):
                log.warning("level %d starts %.3g away from the coarse energy", i, abs(start - prev))
        res = pcg_solve(phi, params, config)
        log.info("level %d %s: %s, %d its, E = %.15g", i, grid.shape, res.record.message,
                 res.record.iterations, res.energy.total)
        out.records.append(res.record)
        out.level_energies.append(res.energy.total)
        phi = res.phi
        out.energy = res.energy
    out.phi = phi
    return out


def pcg_energy_estimate(phi: SpinorField, params: PhysicsParams) -> float:
    ef = EnergyFunctional(phi.grid, params)
    return ef.total_energy(phi.data)


def restrict_to_coarse(fine: SpinorField, coarse: GridSpec) -> SpinorField:
    """Sample a fine-grid field at the points of a nested coarse grid."""
    g = fine.grid
    if not g.same_domain(coarse):
        raise InvalidArgument("grids cover different domains")
    steps = []
    for nf, nc in zip(g.shape, coarse.shape):
        if nf % nc or nf < nc:
            raise InvalidArgument(f"{coarse.shape} is not nested in {g.shape}")
        steps.append(nf // nc)
    sl = (slice(None),) + tuple(slice(None, None, s) for s in steps)
    return SpinorField(coarse, np.ascontiguousarray(fine.data[sl]), check=False)


@dataclass
class StudyRow:
    h: float
    points: int
    wavefn_error: float
    energy_error: float
    mu_error: float
    virial: Optional[float]
    energy: float
    iterations: int


@dataclass
class StudyResult:
    rows: list[StudyRow]
    reference: SpinorField
    reference_energy: EnergyBreakdown

    CSV_COLUMNS = ("h", "points", "wavefn_error", "energy_error", "mu_error", "virial", "energy", "iterations")

    def write_csv(self, fh) -> None:
        fh.write(",".join(self.CSV_COLUMNS) + "\n")
        for r in self.rows:
            vir = "" if r.virial is None else repr(r.virial)
            fh.write(f"{r.h!r},{r.points},{r.wavefn_error!r},{r.energy_error!r},{r.mu_error!r},"
                     f"{vir},{r.energy!r},{r.iterations}\n")


def convergence_study(phi0_coarse: SpinorField, params: PhysicsParams, plan: MultigridPlan,
                      reference: Optional[SpinorField] = None) -> StudyResult:
    """Errors of every level of a cascade against its finest level.

    One cascade is run through all levels of ``plan``; each level's converged
    state is the same one a separate cascade stopping at that level would
    produce. Without an explicit ``reference`` the last level serves as the
    reference and is not itself reported.
    """
    levels: list[tuple[SpinorField, EnergyBreakdown, int]] = []

    phi = phi0_coarse
    for i, (grid, config) in enumerate(zip(plan.levels, plan.configs)):
        if i > 0:
            phi = normalize(prolongate(phi, grid))
        res = pcg_solve(phi, params, config)
        log.info("study level %s: %s, %d its", grid.shape, res.record.message, res.record.iterations)
        phi = res.phi
        levels.append((phi, res.energy, res.record.iterations))

    if reference is None:
        ref, ref_e, _ = levels.pop()
    else:
        ref, ref_e = reference, energy(reference, params)
    rows = []
    for fld, e, its in levels:
        sub = restrict_to_coarse(ref, fld.grid)
        _, err = phase_align(fld, sub)
        try:
            vir = virial_residual(fld, params, e)
        except UnsupportedDiagnostic:
            vir = None
        rows.append(StudyRow(fld.grid.h[0], fld.grid.shape[0], err, abs(ref_e.total - e.total),
                             abs(ref_e.mu - e.mu), vir, e.total, its))
    return StudyResult(rows, ref, ref_e)
