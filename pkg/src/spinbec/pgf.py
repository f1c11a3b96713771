"""Projected gradient flow baseline.

Backward/forward Euler Fourier-spectral step on the projected flow
``dPhi/dt = -(H(Phi) - mu(Phi) Phi)``: the Laplacian plus a constant
stabilization shift ``alpha`` is implicit, all other terms (including the
Lagrange multiplier ``mu = <H(Phi), Phi>``) are explicit, and the result is
renormalized to unit total mass::

    (1 + dt (alpha - Lap/2)) Phi* = (1 + dt alpha) Phi - dt (B(Phi) - mu Phi)
    Phi^{n+1} = Phi* / ||Phi*||

where ``B(Phi) = H(Phi) + Lap(Phi)/2``. Keeping ``mu`` in the explicit part
makes every fixed point an exact stationary state; without it the fixed
points depend on ``dt``.
"""

from __future__ import annotations

import logging
import math
import time
from typing import Optional, Union

import numpy as np

from .errors import InvalidArgument
from .optimizer import ConvergenceRecord, IterationRow, SolveResult, SolverConfig, check_stop
from .physics import EnergyFunctional, PhysicsParams, _apply_S_hat
from .spectral import SpinorField, normalize

log = logging.getLogger(__name__)


def auto_stabilization(ef: EnergyFunctional, phi: np.ndarray) -> float:
    """``(max b + min b) / 2`` with ``b = V + c0 rho`` (nonnegative)."""
    rho = (phi * phi.conj()).real.sum(axis=0)
    b = ef.V + ef.params.c0 * rho
    return max(0.5 * (float(b.max()) + float(b.min())), 0.0)


class _Stepper:
    def __init__(self, ef: EnergyFunctional, dt: float, stabilization: Union[str, float]):
        if not dt > 0:
            raise InvalidArgument("dt must be positive")
        self.ef = ef
        self.dt = dt
        self.stabilization = stabilization

    def alpha(self, phi):
        if self.stabilization == "auto":
            return auto_stabilization(self.ef, phi)
        a = float(self.stabilization)
        if a < 0:
            raise InvalidArgument("stabilization shift must be >= 0")
        return a

    def __call__(self, phi: np.ndarray, want_diagnostics: bool = True):
        """One step. Returns ``(new_phi, energy(phi), residual_inf(phi))``."""
        ef, dt = self.ef, self.dt
        ops, p = ef.ops, ef.params
        alpha = self.alpha(phi)
        a_hat = ops.fft(phi)
        nl = ef.nonlinear(phi)
        expl = ef.V * phi + nl
        lz = None
        if p.omega != 0.0:
            lz = ops.lz(phi, a_hat)
            expl -= p.omega * lz
        s_hat = _apply_S_hat(ops, a_hat) if p.gamma_soc != 0.0 else None

        kin_spec = 0.5 * ops.k2 * a_hat
        if s_hat is not None:
            kin_spec = kin_spec - p.gamma_soc * s_hat
        hphi = ops.ifft(kin_spec) + expl
        mu = ops.inner(hphi, phi).real
        E = res = math.nan
        if want_diagnostics:
            res = float(np.abs(hphi - mu * phi).max())
            E = ops.inner(hphi - nl, phi).real + ef.interaction_energy(phi)

        rhs = ops.fft((1.0 + dt * (alpha + mu)) * phi - dt * expl)
        if s_hat is not None:
            rhs += dt * p.gamma_soc * s_hat
        rhs /= 1.0 + dt * (alpha + 0.5 * ops.k2)
        new = ops.ifft(rhs)
        new /= math.sqrt(ops.norm2(new))
        return new, E, res


def pgf_step(phi: SpinorField, params: PhysicsParams, dt: float,
             stabilization: Union[str, float] = "auto") -> SpinorField:
    ef = EnergyFunctional(phi.grid, params)
    new, _, _ = _Stepper(ef, dt, stabilization)(phi.data, want_diagnostics=False)
    return SpinorField(phi.grid, new, check=False)


def pgf_solve(phi0: SpinorField, params: PhysicsParams, dt: float = 0.1,
              config: Optional[SolverConfig] = None,
              stabilization: Union[str, float] = "auto") -> SolveResult:
    """Run the gradient flow until the configured stopping criterion holds.

    Rows use the same columns as the PCG record; ``theta`` holds ``dt`` and
    ``beta`` is always 0. The energy and residual in row ``n`` belong to the
    iterate after ``n + 1`` steps.
    """
    config = config or SolverConfig()
    ef = EnergyFunctional(phi0.grid, params)
    step = _Stepper(ef, dt, stabilization)
    phi = normalize(phi0).data.copy()
    record = ConvergenceRecord()
    t0 = time.perf_counter()

    new, E_prev, res_prev = step(phi)
    for it in range(config.max_iters):
        wdiff = float(np.abs(new - phi).max())
        phi = new
        new, E, res = step(phi)
        if not math.isfinite(E):
            record.message = "diverged"
            break
        row = IterationRow(it, E, abs(E - E_prev), res, wdiff, dt, 0.0, 0, time.perf_counter() - t0)
        record.rows.append(row)
        E_prev = E
        if check_stop(row, config):
            record.converged = True
            record.message = "converged"
            break
    else:
        record.message = f"max_iters = {config.max_iters} reached"
    log.info("pgf: %s after %d steps", record.message, record.iterations)
    return SolveResult(SpinorField(phi0.grid, phi, check=False), ef.breakdown(phi), record)
