"""Energy functional, Hamiltonian and ground-state diagnostics for spin-1 condensates.

The energy per particle is

    E(Phi) = int sum_l conj(phi_l) (-1/2 Lap + V - Omega Lz) phi_l
             + c0/2 rho^2 + c1/2 |F|^2 - gamma Phi^H S Phi

with ``S = [[0, L0, 0], [L1, 0, L0], [0, L1, 0]]``. ``EnergyFunctional`` holds
the per-grid precomputation and works on raw ``(3, *shape)`` arrays; the
module-level functions are the field-level API built on top of it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateInput, InvalidArgument, UnsupportedDiagnostic
from .spectral import GridSpec, SpinorField, spectral_ops

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
TRAP_KINDS = ("harmonic", "harmonic_plus_quartic", "tabulated")


@dataclass(frozen=True, eq=False)
class TrapPotential:
    """External trap.

    ``harmonic``: ``V = 1/2 sum gamma_i^2 x_i^2``.
    ``harmonic_plus_quartic``: ``V = a2 r^2 + a4 r^4`` with ``r^2 = x^2 + y^2``.
    ``tabulated``: values given on the grid directly.
    """

    kind: str = "harmonic"
    frequencies: tuple[float, ...] = (1.0, 1.0, 1.0)
    quartic: tuple[float, float] = (-0.2, 0.5)
    table: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in TRAP_KINDS:
            raise InvalidArgument(f"unknown trap kind {self.kind!r}; expected one of {TRAP_KINDS}")
        if self.kind == "harmonic":
            if any(not (g > 0 and math.isfinite(g)) for g in self.frequencies):
                raise InvalidArgument("harmonic trap frequencies must be positive")
        if self.kind == "harmonic_plus_quartic":
            if not all(math.isfinite(c) for c in self.quartic):
                raise InvalidArgument("quartic coefficients must be finite")
        if self.kind == "tabulated":
            if self.table is None:
                raise InvalidArgument("tabulated trap needs a table of values")
            tab = np.asarray(self.table)
            if np.iscomplexobj(tab) or not np.all(np.isfinite(tab)):
                raise InvalidArgument("tabulated potential must be finite and real")

    @classmethod
    def harmonic(cls, *gammas: float) -> "TrapPotential":
        if not gammas:
            gammas = (1.0, 1.0, 1.0)
        g = tuple(float(x) for x in gammas) + (1.0,) * (3 - len(gammas))
        return cls("harmonic", frequencies=g)

    @classmethod
    def harmonic_plus_quartic(cls, a2: float = -0.2, a4: float = 0.5) -> "TrapPotential":
        return cls("harmonic_plus_quartic", quartic=(float(a2), float(a4)))

    @classmethod
    def tabulated(cls, values) -> "TrapPotential":
        return cls("tabulated", table=np.asarray(values, dtype=np.float64))

    def is_radially_symmetric(self, dim: int) -> bool:
        """Symmetric under rotations about the z axis."""
        if self.kind == "harmonic":
            return self.frequencies[0] == self.frequencies[1]
        return self.kind == "harmonic_plus_quartic"


@dataclass(frozen=True)
class PhysicsParams:
    c0: float
    c1: float
    omega: float = 0.0
    gamma_soc: float = 0.0
    trap: TrapPotential = field(default_factory=TrapPotential)

    def __post_init__(self):
        for name in ("c0", "c1", "omega", "gamma_soc"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgument(f"{name} must be finite")

    @property
    def is_linear(self) -> bool:
        return self.c0 == 0 and self.c1 == 0


@dataclass(frozen=True)
class SpinVectorField:
    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray


@dataclass(frozen=True)
class EnergyBreakdown:
    kin: float
    pot: float
    spin: float
    rot: float
    soc: float
    total: float
    mu: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("kin", "pot", "spin", "rot", "soc", "total", "mu")}


def eval_potential(trap: TrapPotential, grid: GridSpec) -> np.ndarray:
    coords = grid.coords()
    if trap.kind == "harmonic":
        V = np.zeros(grid.shape)
        for c, g in zip(coords, trap.frequencies):
            V = V + 0.5 * g * g * c * c
        return V
    if trap.kind == "harmonic_plus_quartic":
        a2, a4 = trap.quartic
        r2 = coords[0] ** 2 + coords[1] ** 2
        V = a2 * r2 + a4 * r2 * r2
        return np.broadcast_to(V, grid.shape).copy()
    table = np.asarray(trap.table, dtype=np.float64)
    if table.shape != grid.shape:
        raise InvalidArgument(f"tabulated potential has shape {table.shape}, grid is {grid.shape}")
    return table.copy()


def spin_densities(a: np.ndarray):
    """Real-valued ``(Fx, Fy, Fz)`` from an array of components."""
    p1, p0, m1 = a[0], a[1], a[2]
    c0 = np.conj(p0)
    fx = SQRT2 * (c0 * (p1 + m1)).real
    fy = SQRT2 * (c0 * (m1 - p1)).imag
    fz = (p1 * np.conj(p1)).real - (m1 * np.conj(m1)).real
    return fx, fy, fz


def spin_vector(field: SpinorField) -> SpinVectorField:
    p1, p0, m1 = field.comp
    c1, c0, cm1 = np.conj(p1), np.conj(p0), np.conj(m1)
    fx = (c1 * p0 + c0 * (p1 + m1) + cm1 * p0) / SQRT2
    fy = 1j * (-c1 * p0 + c0 * (p1 - m1) + cm1 * p0) / SQRT2
    fz = c1 * p1 - cm1 * m1
    scale = max(1.0, float(np.max(np.abs(field.data))) ** 2)
    for name, f in (("Fx", fx), ("Fy", fy), ("Fz", fz)):
        res = float(np.max(np.abs(f.imag))) if f.size else 0.0
        if res > 1e-12 * scale:
            raise AssertionError(f"{name} has imaginary residue {res:.3e}")
    return SpinVectorField(fx.real.copy(), fy.real.copy(), fz.real.copy())


def _assert_real(name: str, value: complex, scale: float, tol: float = 1e-10) -> float:
    if abs(value.imag) > tol * max(1.0, scale):
        raise AssertionError(f"{name} has imaginary residue {value.imag:.3e}")
    return value.real


class EnergyFunctional:
    """Discretized energy on one grid.

    ``linear(a)`` applies ``A = -1/2 Lap + V - Omega Lz - gamma S`` to every
    component; the Hamiltonian is ``H(a) = A a + N(a)`` with the pointwise
    interaction part ``N``.
    """

    def __init__(self, grid: GridSpec, params: PhysicsParams, potential: Optional[np.ndarray] = None):
        self.grid = grid
        self.params = params
        self.ops = spectral_ops(grid)
        self.V = eval_potential(params.trap, grid) if potential is None else np.asarray(potential, dtype=np.float64)
        self.dv = self.ops.dv

    # -- linear part -------------------------------------------------------
    def linear(self, a: np.ndarray, a_hat: Optional[np.ndarray] = None):
        """Return ``(A a, fft(a))``."""
        ops, p = self.ops, self.params
        if a_hat is None:
            a_hat = ops.fft(a)
        spec = 0.5 * ops.k2 * a_hat
        if p.gamma_soc != 0.0:
            g = p.gamma_soc
            spec[0] -= g * ops.soc0 * a_hat[1]
            spec[1] -= g * (ops.soc0 * a_hat[2] + ops.soc1 * a_hat[0])
            spec[2] -= g * ops.soc1 * a_hat[1]
        out = ops.ifft(spec)
        out += self.V * a
        if p.omega != 0.0:
            out -= p.omega * ops.lz(a, a_hat)
        return out, a_hat

    # -- interaction part --------------------------------------------------
    def nonlinear(self, a: np.ndarray) -> np.ndarray:
        p1, p0, m1 = a[0], a[1], a[2]
        r1 = (p1 * p1.conj()).real
        r0 = (p0 * p0.conj()).real
        rm = (m1 * m1.conj()).real
        rho = r1 + r0 + rm
        c0, c1 = self.params.c0, self.params.c1
        out = np.empty_like(a)
        out[0] = c0 * rho * p1
        out[1] = c0 * rho * p0
        out[2] = c0 * rho * m1
        if c1 != 0.0:
            p0sq = p0 * p0
            out[0] += c1 * ((r0 + r1 - rm) * p1 + m1.conj() * p0sq)
            out[1] += c1 * ((r1 + rm) * p0 + 2.0 * m1 * p0.conj() * p1)
            out[2] += c1 * ((r0 + rm - r1) * m1 + p0sq * p1.conj())
        return out

    def frozen(self, phi: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Interaction part linearized at ``phi`` with densities frozen: ``c0 rho p + c1 (F.f) p``."""
        rho = (phi * phi.conj()).real.sum(axis=0)
        out = self.params.c0 * rho * p
        c1 = self.params.c1
        if c1 != 0.0:
            p1, p0, m1 = phi[0], phi[1], phi[2]
            fz = (p1 * p1.conj()).real - (m1 * m1.conj()).real
            fm = p0.conj() * p1 + m1.conj() * p0  # F_- / sqrt2
            fp = fm.conj()  # F_+ / sqrt2
            out[0] += c1 * (fz * p[0] + fm * p[1])
            out[1] += c1 * (fp * p[0] + fm * p[2])
            out[2] += c1 * (fp * p[1] - fz * p[2])
        return out

    def hamiltonian(self, a: np.ndarray) -> np.ndarray:
        lin, _ = self.linear(a)
        return lin + self.nonlinear(a)

    def interaction_energy_density(self, a: np.ndarray) -> np.ndarray:
        rho = (a * a.conj()).real.sum(axis=0)
        e = 0.5 * self.params.c0 * rho * rho
        if self.params.c1 != 0.0:
            fx, fy, fz = spin_densities(a)
            e = e + 0.5 * self.params.c1 * (fx * fx + fy * fy + fz * fz)
        return e

    def interaction_energy(self, a: np.ndarray) -> float:
        return float(self.interaction_energy_density(a).sum()) * self.dv

    def total_energy(self, a: np.ndarray, lin: Optional[np.ndarray] = None) -> float:
        if lin is None:
            lin, _ = self.linear(a)
        return self.ops.inner(lin, a).real + self.interaction_energy(a)

    # -- breakdown ---------------------------------------------------------
    def breakdown(self, a: np.ndarray) -> EnergyBreakdown:
        ops, p = self.ops, self.params
        a_hat = ops.fft(a)
        scale = ops.norm2(a)
        kin = float(ops.kinetic_density_sum(a_hat).sum())
        rho = (a * a.conj()).real.sum(axis=0)
        pot = float((self.V * rho).sum()) * self.dv
        spin = self.interaction_energy(a)
        rot = 0.0
        if p.omega != 0.0:
            lz = ops.lz(a, a_hat)
            rot = -p.omega * _assert_real("rotation energy", ops.inner(lz, a), scale * self.grid.h[0] ** -1)
        soc = 0.0
        if p.gamma_soc != 0.0:
            s = _apply_S_hat(ops, a_hat)
            soc = -p.gamma_soc * _assert_real("SOC energy", ops.inner(ops.ifft(s), a), scale * self.grid.h[0] ** -1)
        h = self.hamiltonian(a)
        mu = _assert_real("chemical potential", ops.inner(h, a), scale * self.grid.h[0] ** -2)
        total = kin + pot + spin + rot + soc
        return EnergyBreakdown(kin=kin, pot=pot, spin=spin, rot=rot, soc=soc, total=total, mu=mu)


def _apply_S_hat(ops, a_hat: np.ndarray) -> np.ndarray:
    s = np.empty_like(a_hat)
    s[0] = ops.soc0 * a_hat[1]
    s[1] = ops.soc0 * a_hat[2] + ops.soc1 * a_hat[0]
    s[2] = ops.soc1 * a_hat[1]
    return s


def apply_S(field: SpinorField) -> SpinorField:
    """The spin-orbit coupling matrix operator ``S`` applied to a spinor."""
    ops = spectral_ops(field.grid)
    return SpinorField(field.grid, ops.ifft(_apply_S_hat(ops, ops.fft(field.data))), check=False)


def apply_hamiltonian(field: SpinorField, params: PhysicsParams) -> SpinorField:
    ef = EnergyFunctional(field.grid, params)
    return SpinorField(field.grid, ef.hamiltonian(field.data), check=False)


def energy(field: SpinorField, params: PhysicsParams) -> EnergyBreakdown:
    return EnergyFunctional(field.grid, params).breakdown(field.data)


def chemical_potential(field: SpinorField, params: PhysicsParams) -> float:
    ef = EnergyFunctional(field.grid, params)
    h = ef.hamiltonian(field.data)
    scale = ef.ops.norm2(field.data)
    return _assert_real("chemical potential", ef.ops.inner(h, field.data), scale * field.grid.h[0] ** -2)


def residual(field: SpinorField, params: PhysicsParams) -> SpinorField:
    """``H(Phi) - mu Phi`` with ``mu = Re<H Phi, Phi> / ||Phi||^2``."""
    ef = EnergyFunctional(field.grid, params)
    h = ef.hamiltonian(field.data)
    n2 = ef.ops.norm2(field.data)
    if n2 == 0.0:
        return SpinorField(field.grid, h, check=False)
    mu = ef.ops.inner(h, field.data).real / n2
    return SpinorField(field.grid, h - mu * field.data, check=False)


def virial_residual(field: SpinorField, params: PhysicsParams, parts: Optional[EnergyBreakdown] = None) -> float:
    """``2 E_kin - 2 E_pot + d E_spin + E_soc``; vanishes at ground states in harmonic traps."""
    if params.trap.kind != "harmonic":
        raise UnsupportedDiagnostic("the virial identity holds for harmonic traps only")
    if parts is None:
        parts = energy(field, params)
    d = field.grid.dim
    return 2.0 * parts.kin - 2.0 * parts.pot + d * parts.spin + parts.soc


def phase_align(a: SpinorField, b: SpinorField) -> tuple[complex, float]:
    """Phase factor ``kappa = <a,b>/<b,b>`` and ``||conj(kappa) a - b||_inf / ||b||_inf``."""
    from .spectral import inner_product

    bb = inner_product(b, b)
    if bb.real == 0.0:
        raise DegenerateInput("reference field is zero")
    kappa = inner_product(a, b) / bb
    err = float(np.max(np.abs(np.conj(kappa) * a.data - b.data)) / np.max(np.abs(b.data)))
    return kappa, err


def rotate_quarter_turn(field: SpinorField) -> SpinorField:
    """``Phi(R(pi/2) x)`` sampled exactly on a square grid.

    Needs equal points and half-widths along x and y. Grid point ``(x_m, y_n)``
    maps to ``(-y_n, x_m)``; the index reflection is exact up to the periodic
    wrap of ``-L`` onto itself.
    """
    g = field.grid
    if g.shape[0] != g.shape[1] or g.half_widths[0] != g.half_widths[1]:
        raise InvalidArgument("quarter-turn rotation needs a square x-y grid")
    a = field.data
    # new[m, n] = old[(-n) mod N, m]
    n = g.shape[0]
    idx = (-np.arange(n)) % n
    out = np.swapaxes(a, 1, 2)[:, :, idx, ...]
    return SpinorField(g, np.ascontiguousarray(out), check=False)


@dataclass(frozen=True)
class ExistenceReport:
    status: str  # "pass", "warn" or "indeterminate"
    messages: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status == "pass"


def check_existence_conditions(params: PhysicsParams, dim: int) -> ExistenceReport:
    """Advisory check of the sufficient conditions for a ground state to exist."""
    msgs = []
    status = "pass"
    trap = params.trap
    if trap.kind == "harmonic":
        gmin = min(trap.frequencies[0], trap.frequencies[1])
        if abs(params.omega) >= gmin:
            msgs.append(
                f"rotation exceeds trap frequency: |Omega| = {abs(params.omega):g} >= min(gamma_x, gamma_y) = {gmin:g}"
            )
            status = "warn"
    else:
        msgs.append(f"rotation condition not checked for {trap.kind} trap")
        status = "indeterminate"
    c0, c1 = params.c0, params.c1
    if dim == 3:
        if not ((c0 >= 0 and c1 >= 0) or (c1 <= 0 and c0 + c1 >= 0)):
            msgs.append(f"interaction condition fails in 3D: c0 = {c0:g}, c1 = {c1:g}")
            status = "warn"
    else:
        if not (c0 >= 0 and c0 + c1 >= 0):
            msgs.append(
                "2D interaction condition indeterminate: c0 < 0 or c0 + c1 < 0 needs the "
                "Gagliardo-Nirenberg constant, which is not computed"
            )
            if status == "pass":
                status = "indeterminate"
    for m in msgs:
        log.warning(m)
    return ExistenceReport(status, tuple(msgs))
