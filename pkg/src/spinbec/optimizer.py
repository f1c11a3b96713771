"""Preconditioned nonlinear conjugate gradient on the unit-norm manifold.

Each iteration builds a PR+ conjugate direction from the preconditioned
residual, projects it onto the tangent space at ``Phi``, and moves along the
great circle ``cos(theta) Phi + sin(theta) P_hat``. The step comes from a
quadratic model of the energy along that curve, with backtracking until the
energy decreases.

The energy along the curve is evaluated in closed form from a handful of
pointwise arrays (``_Curve``), so backtracking costs no transforms and the
energy *difference* is computed directly rather than by subtracting two
nearly equal energies.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import InvalidArgument, PreconditionerBreakdown
from .physics import EnergyBreakdown, EnergyFunctional, PhysicsParams, spin_densities
from .spectral import SpinorField, normalize, spectral_ops

log = logging.getLogger(__name__)

PRECONDITIONERS = ("kinetic", "potential", "combined", "none")
STOP_KINDS = ("wavefn_diff", "residual_inf", "energy_diff")
SHIFT_FLOOR = 1e-8
SHIFT_MODES = ("integral", "per_mass")


@dataclass
class SolverConfig:
    preconditioner: str = "combined"
    stop_kind: str = "energy_diff"
    tol: float = 1e-14
    theta_trial: float = 0.1
    backtrack_factor: float = 0.5
    max_iters: int = 100_000
    max_backtracks: int = 20
    # "integral" uses the raw per-component integrals; "per_mass" divides each by
    # the component mass so an emptying component keeps a sensible scale.
    shift: str = "integral"
    # A(Phi) is carried along by linearity between steps and recomputed this often.
    refresh_every: int = 20

    def __post_init__(self):
        if self.preconditioner not in PRECONDITIONERS:
            raise InvalidArgument(f"unknown preconditioner {self.preconditioner!r}; expected one of {PRECONDITIONERS}")
        if self.stop_kind not in STOP_KINDS:
            raise InvalidArgument(f"unknown stop_kind {self.stop_kind!r}; expected one of {STOP_KINDS}")
        if self.shift not in SHIFT_MODES:
            raise InvalidArgument(f"unknown shift {self.shift!r}; expected one of {SHIFT_MODES}")
        if not self.tol > 0:
            raise InvalidArgument("tol must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise InvalidArgument("backtrack_factor must lie in (0, 1)")
        if not self.theta_trial > 0:
            raise InvalidArgument("theta_trial must be positive")
        if self.max_iters < 1 or self.max_backtracks < 1 or self.refresh_every < 1:
            raise InvalidArgument("iteration caps must be >= 1")


CSV_COLUMNS = (
    "iter", "energy", "energy_diff", "residual_inf", "wavefn_diff_inf",
    "theta", "beta", "backtracks", "elapsed_seconds",
)


class IterationRow(NamedTuple):
    iter: int
    energy: float
    energy_diff: float
    residual_inf: float
    wavefn_diff_inf: float
    theta: float
    beta: float
    backtracks: int
    elapsed_seconds: float


@dataclass
class ConvergenceRecord:
    rows: list[IterationRow] = field(default_factory=list)
    converged: bool = False
    stalled: bool = False
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        i = CSV_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def write_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.iter, repr(r.energy), repr(r.energy_diff), repr(r.residual_inf),
                        repr(r.wavefn_diff_inf), repr(r.theta), repr(r.beta), r.backtracks,
                        f"{r.elapsed_seconds:.6f}"])


@dataclass
class IterationState:
    phi: np.ndarray
    r_prev: Optional[np.ndarray]
    p_prev: Optional[np.ndarray]
    precond_r_prev_dot: Optional[float]
    iter: int
    energy: float


@dataclass
class SolveResult:
    phi: SpinorField
    energy: EnergyBreakdown
    record: ConvergenceRecord

    @property
    def converged(self) -> bool:
        return self.record.converged

    def __iter__(self):
        return iter((self.phi, self.energy, self.record))


# -- preconditioners ---------------------------------------------------------

def _component_shifts(ef: EnergyFunctional, phi: np.ndarray, phi_hat: np.ndarray, rho: np.ndarray,
                      mode: str = "integral") -> np.ndarray:
    kin = ef.ops.kinetic_density_sum(phi_hat)
    dens = (phi * phi.conj()).real
    w = ef.V + ef.params.c0 * rho
    pot = (dens * w).reshape(3, -1).sum(axis=1) * ef.dv
    s = kin + pot
    if mode == "per_mass":
        mass = dens.reshape(3, -1).sum(axis=1) * ef.dv
        whole = s.sum() / max(mass.sum(), 1e-300)
        s = np.where(mass > 1e-14, s / np.maximum(mass, 1e-300), whole)
    return np.maximum(s, SHIFT_FLOOR)


def compute_shift(field: SpinorField, params: PhysicsParams, mode: str = "integral") -> np.ndarray:
    """Per-component shifts ``int 1/2|grad phi_l|^2 + V|phi_l|^2 + c0 rho |phi_l|^2``, floored at 1e-8.

    With ``mode="per_mass"`` each integral is divided by ``int |phi_l|^2``;
    an empty component takes the whole-spinor quotient instead.
    """
    if mode not in SHIFT_MODES:
        raise InvalidArgument(f"unknown shift mode {mode!r}")
    ef = EnergyFunctional(field.grid, params)
    phi = field.data
    rho = (phi * phi.conj()).real.sum(axis=0)
    return _component_shifts(ef, phi, ef.ops.fft(phi), rho, mode)


def _expand(shifts, dim):
    return np.asarray(shifts, dtype=np.float64).reshape((3,) + (1,) * dim)


def _precondition(ef: EnergyFunctional, r: np.ndarray, kind: str, shifts, rho) -> np.ndarray:
    if kind == "none":
        return r.copy()
    ops = ef.ops
    alpha = _expand(shifts, ef.grid.dim)
    if kind == "kinetic":
        return ops.ifft(ops.fft(r) / (alpha + 0.5 * ops.k2))
    div = alpha + (ef.V + ef.params.c0 * rho)
    if not np.all(div > 0):
        raise PreconditionerBreakdown(f"potential preconditioner divisor min {float(div.min()):.3e} <= 0")
    if kind == "potential":
        return r / div
    s = 1.0 / np.sqrt(div)
    return s * ops.ifft(ops.fft(s * r) / (alpha + 0.5 * ops.k2))


def apply_preconditioner(r: SpinorField, kind: str, shifts, params: PhysicsParams, density) -> SpinorField:
    """Apply ``P_Delta``, ``P_V`` or ``P_V^1/2 P_Delta P_V^1/2`` to a residual.

    ``density`` is the total density ``rho`` of the current iterate; the
    divisor of the potential part is ``shift + V + c0 rho``.
    """
    if kind not in PRECONDITIONERS:
        raise InvalidArgument(f"unknown preconditioner {kind!r}")
    shifts = np.asarray(shifts, dtype=np.float64)
    if np.any(shifts <= 0):
        raise InvalidArgument("preconditioner shifts must be positive")
    ef = EnergyFunctional(r.grid, params)
    return SpinorField(r.grid, _precondition(ef, r.data, kind, shifts, np.asarray(density)), check=False)


# -- direction helpers -------------------------------------------------------

def project_tangent(d: SpinorField, phi: SpinorField) -> SpinorField:
    """``D - Re<D, Phi> Phi``."""
    ops = spectral_ops(phi.grid)
    return SpinorField(phi.grid, d.data - ops.inner(d.data, phi.data).real * phi.data, check=False)


def beta_pr(r: SpinorField, r_prev: SpinorField, pr: SpinorField, prev_dot: float) -> float:
    """Polak-Ribiere-Polyak coefficient clipped at zero; 0 (restart) when ``prev_dot <= 0``."""
    if not prev_dot > 0:
        return 0.0
    ops = spectral_ops(r.grid)
    return _beta(ops, r.data, r_prev.data, pr.data, prev_dot)


def _beta(ops, r, r_prev, pr, prev_dot) -> float:
    num = ops.inner(r - r_prev, pr).real
    return max(num / prev_dot, 0.0)


class StepChoice(NamedTuple):
    theta: float
    mode: str  # "quadratic", "trial" or "restart"


def choose_step(a: float, b: float, theta_trial: float) -> StepChoice:
    if b > 0 or (b == 0 and a >= 0):
        return StepChoice(0.0, "restart")
    if a > 0 and b < 0:
        return StepChoice(-b / (2.0 * a), "quadratic")
    return StepChoice(theta_trial, "trial")


class _Curve:
    """Energy along ``theta -> cos(theta) Phi + sin(theta) P`` for unit tangent ``P``.

    Built from ``A Phi`` and ``A P`` (the linear operator images) plus pointwise
    densities; ``delta(theta) = E(theta) - E(0)``.
    """

    def __init__(self, ef: EnergyFunctional, phi, aphi, hphi, p, ap):
        ops = ef.ops
        self.dv = ef.dv
        self.c0 = ef.params.c0
        self.c1 = ef.params.c1
        self.lin_ff = ops.inner(aphi, phi).real
        self.lin_pp = ops.inner(ap, p).real
        self.lin_fp = ops.inner(aphi, p).real
        self.rho_f = (phi * phi.conj()).real.sum(axis=0)
        self.rho_p = (p * p.conj()).real.sum(axis=0)
        self.cross = (phi.conj() * p).real.sum(axis=0)
        self.F_f = self.F_p = self.X = None
        if self.c1 != 0.0:
            self.F_f = np.array(spin_densities(phi))
            self.F_p = np.array(spin_densities(p))
            fplus = np.array(spin_densities(phi + p))
            fminus = np.array(spin_densities(phi - p))
            self.X = 0.25 * (fplus - fminus)  # Re(Phi^H f_alpha P)
        mu = ops.inner(hphi, phi).real
        self.b = 2.0 * ops.inner(hphi, p).real
        quad = self.lin_pp + self.dv * float(
            (self.c0 * self.rho_f * self.rho_p + 2.0 * self.c0 * self.cross ** 2).sum()
        )
        if self.c1 != 0.0:
            quad += self.dv * self.c1 * float(
                (self.F_f * self.F_p).sum() + 2.0 * (self.X ** 2).sum()
            )
        self.a = quad - mu

    def delta(self, theta: float) -> float:
        s, c = math.sin(theta), math.cos(theta)
        s2, sc2 = s * s, 2.0 * s * c
        dlin = s2 * (self.lin_pp - self.lin_ff) + sc2 * self.lin_fp
        drho = s2 * (self.rho_p - self.rho_f) + sc2 * self.cross
        dq = 0.5 * self.c0 * float((drho * (2.0 * self.rho_f + drho)).sum())
        if self.c1 != 0.0:
            dF = s2 * (self.F_p - self.F_f) + sc2 * self.X
            dq += 0.5 * self.c1 * float((dF * (2.0 * self.F_f + dF)).sum())
        return dlin + self.dv * dq


def line_coeffs(phi: SpinorField, p_hat: SpinorField, params: PhysicsParams) -> tuple[float, float, float]:
    """Quadratic model ``E(theta) ~ a theta^2 + b theta + c`` along the retraction curve."""
    ef = EnergyFunctional(phi.grid, params)
    aphi, _ = ef.linear(phi.data)
    hphi = aphi + ef.nonlinear(phi.data)
    ap, _ = ef.linear(p_hat.data)
    curve = _Curve(ef, phi.data, aphi, hphi, p_hat.data, ap)
    c = curve.lin_ff + ef.interaction_energy(phi.data)
    return curve.a, curve.b, c


def _backtrack(curve: _Curve, theta: float, config: SolverConfig):
    """Return ``(theta, dE, n_backtracks)``; ``theta`` is ``None`` when exhausted."""
    for k in range(config.max_backtracks + 1):
        dE = curve.delta(theta)
        if dE < 0.0:
            return theta, dE, k
        theta *= config.backtrack_factor
    return None, 0.0, config.max_backtracks


class StepResult(NamedTuple):
    phi: SpinorField
    theta: float
    backtracks: int
    stalled: bool


def accept_or_backtrack(phi: SpinorField, p_hat: SpinorField, theta: float,
                        config: SolverConfig, params: PhysicsParams) -> StepResult:
    """Move to ``cos(theta) Phi + sin(theta) P_hat`` once the energy decreases.

    ``theta = 0`` is the identity. When ``max_backtracks`` reductions do not
    produce a decrease, the original field comes back with ``stalled=True``.
    """
    if theta == 0.0:
        return StepResult(phi, 0.0, 0, False)
    ef = EnergyFunctional(phi.grid, params)
    aphi, _ = ef.linear(phi.data)
    hphi = aphi + ef.nonlinear(phi.data)
    ap, _ = ef.linear(p_hat.data)
    curve = _Curve(ef, phi.data, aphi, hphi, p_hat.data, ap)
    t, _, k = _backtrack(curve, theta, config)
    if t is None:
        return StepResult(phi, 0.0, k, True)
    new = math.cos(t) * phi.data + math.sin(t) * p_hat.data
    return StepResult(SpinorField(phi.grid, new, check=False), t, k, False)


def check_stop(row: IterationRow, config: SolverConfig) -> bool:
    if config.stop_kind == "energy_diff":
        v = row.energy_diff
    elif config.stop_kind == "residual_inf":
        v = row.residual_inf
    else:
        v = row.wavefn_diff_inf
    return bool(v < config.tol)


# -- driver ------------------------------------------------------------------

class _Direction(NamedTuple):
    p: np.ndarray  # unnormalized tangent projection
    p_hat: np.ndarray
    ap: np.ndarray
    p_hat_fft: np.ndarray
    curve: _Curve


def _make_direction(ef, phi, aphi, hphi, d) -> Optional[_Direction]:
    ops = ef.ops
    p = d - ops.inner(d, phi).real * phi
    pn = math.sqrt(ops.norm2(p))
    if not pn > 0 or not math.isfinite(pn):
        return None
    p_hat = p / pn
    ap, p_hat_fft = ef.linear(p_hat)
    curve = _Curve(ef, phi, aphi, hphi, p_hat, ap)
    return _Direction(p, p_hat, ap, p_hat_fft, curve)


def pcg_solve(phi0: SpinorField, params: PhysicsParams, config: Optional[SolverConfig] = None,
              callback: Optional[Callable[[IterationState, IterationRow], None]] = None) -> SolveResult:
    """Minimize the energy over unit-norm spinors starting from ``phi0``."""
    config = config or SolverConfig()
    grid = phi0.grid
    ef = EnergyFunctional(grid, params)
    ops = ef.ops
    phi = normalize(phi0).data.copy()
    aphi, phi_hat = ef.linear(phi)
    energy = ops.inner(aphi, phi).real + ef.interaction_energy(phi)
    record = ConvergenceRecord()
    state = IterationState(phi, None, None, None, 0, energy)
    t0 = time.perf_counter()
    r_prev = p_prev = None
    prev_dot = None

    for it in range(config.max_iters):
        hphi = aphi + ef.nonlinear(phi)
        mu = ops.inner(hphi, phi).real
        r = hphi - mu * phi
        res_inf = float(np.abs(r).max())
        if config.stop_kind == "residual_inf" and res_inf < config.tol:
            row = IterationRow(it, energy, 0.0, res_inf, 0.0, 0.0, 0.0, 0, time.perf_counter() - t0)
            record.rows.append(row)
            record.converged = True
            break

        rho = (phi * phi.conj()).real.sum(axis=0)
        kind = config.preconditioner
        try:
            shifts = _component_shifts(ef, phi, phi_hat, rho, config.shift)
            pr = _precondition(ef, r, kind, shifts, rho)
            dot = ops.inner(r, pr).real
            if not dot > 0:
                raise PreconditionerBreakdown(f"Re<Pr, r> = {dot:.3e} is not positive")
        except PreconditionerBreakdown as exc:
            log.info("iteration %d: %s; steepest descent for this step", it, exc)
            pr = r
            dot = ops.norm2(r)
            r_prev = p_prev = None

        beta = 0.0
        if r_prev is not None and prev_dot is not None and prev_dot > 0:
            beta = _beta(ops, r, r_prev, pr, prev_dot)
        d = -pr + beta * p_prev if beta > 0 else -pr

        direction = _make_direction(ef, phi, aphi, hphi, d)
        step = None
        if direction is not None:
            choice = choose_step(direction.curve.a, direction.curve.b, config.theta_trial)
            if choice.mode == "restart" and beta > 0:
                beta = 0.0
                direction = _make_direction(ef, phi, aphi, hphi, -pr)
                choice = choose_step(direction.curve.a, direction.curve.b, config.theta_trial) if direction else None
            if direction is not None and choice is not None and choice.mode != "restart":
                step = _backtrack(direction.curve, choice.theta, config)
                if step[0] is None:
                    step = None
        if step is None and pr is not r:
            # stalled or no descent: one plain steepest-descent step
            beta = 0.0
            direction = _make_direction(ef, phi, aphi, hphi, -r)
            if direction is not None:
                choice = choose_step(direction.curve.a, direction.curve.b, config.theta_trial)
                if choice.mode != "restart":
                    step = _backtrack(direction.curve, choice.theta, config)
                    if step[0] is None:
                        step = None
        if step is None:
            row = IterationRow(it, energy, 0.0, res_inf, 0.0, 0.0, beta, config.max_backtracks,
                               time.perf_counter() - t0)
            record.rows.append(row)
            record.stalled = True
            record.converged = check_stop(row, config)
            record.message = "no energy-decreasing step found"
            break

        theta, dE, nback = step
        c, s = math.cos(theta), math.sin(theta)
        wdiff = float(np.abs((c - 1.0) * phi + s * direction.p_hat).max())
        phi = c * phi + s * direction.p_hat
        if (it + 1) % config.refresh_every == 0:
            nrm = math.sqrt(ops.norm2(phi))
            phi /= nrm
            aphi, phi_hat = ef.linear(phi)
        else:
            aphi = c * aphi + s * direction.ap
            phi_hat = c * phi_hat + s * direction.p_hat_fft
            nrm = math.sqrt(ops.norm2(phi))
            phi /= nrm
            aphi /= nrm
            phi_hat /= nrm
        energy = ops.inner(aphi, phi).real + ef.interaction_energy(phi)
        row = IterationRow(it, energy, abs(dE), res_inf, wdiff, theta, beta, nback, time.perf_counter() - t0)
        record.rows.append(row)
        r_prev, p_prev, prev_dot = r, direction.p, dot
        if callback is not None:
            state.phi, state.r_prev, state.p_prev = phi, r_prev, p_prev
            state.precond_r_prev_dot, state.iter, state.energy = prev_dot, it + 1, energy
            callback(state, row)
        if config.stop_kind != "residual_inf" and check_stop(row, config):
            record.converged = True
            break
    else:
        record.message = f"max_iters = {config.max_iters} reached"

    if record.converged and not record.message:
        record.message = "converged"
    field_out = SpinorField(grid, phi, check=False)
    parts = ef.breakdown(phi)
    log.info("pcg: %s after %d iterations, E = %.15g", record.message, record.iterations, parts.total)
    return SolveResult(field_out, parts, record)
