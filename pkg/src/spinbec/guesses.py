"""Initial states: the single-component family (a)-(f), conjugates, and spinor assembly."""

from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, SweepFailed
from .physics import PhysicsParams, eval_potential
from .spectral import GridSpec, SpinorField

log = logging.getLogger(__name__)

TAGS = ("a", "b", "bbar", "c", "cbar", "d", "dbar", "e", "ebar", "f")
_ALIASES = {"b̄": "bbar", "c̄": "cbar", "d̄": "dbar", "ē": "ebar",
            "b_bar": "bbar", "c_bar": "cbar", "d_bar": "dbar", "e_bar": "ebar"}


def parse_tag(tag: str) -> str:
    t = _ALIASES.get(tag.strip(), tag.strip())
    if t not in TAGS:
        raise InvalidArgument(f"unknown initial guess {tag!r}; expected one of {TAGS}")
    return t


def _unit(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(np.sum(np.abs(f) ** 2)) * grid.cell_volume)
    if not n > 0:
        raise InvalidArgument("initial guess vanishes on the grid")
    return f / n


def thomas_fermi_mu(params: PhysicsParams, dim: int) -> float:
    trap = params.trap
    if trap.kind != "harmonic":
        raise InvalidArgument("the Thomas-Fermi guess is defined for harmonic traps only")
    if not params.c0 > 0:
        raise InvalidArgument("the Thomas-Fermi guess needs c0 > 0")
    gx, gy, gz = trap.frequencies
    if dim == 2:
        return 0.5 * math.sqrt(4.0 * params.c0 * gx * gy / math.pi)
    return 0.5 * (15.0 * params.c0 * gx * gy * gz / (4.0 * math.pi)) ** 0.4


def thomas_fermi(grid: GridSpec, params: PhysicsParams) -> np.ndarray:
    """Unnormalized ``sqrt((mu_TF - V)/c0)`` inside ``V < mu_TF``, zero elsewhere."""
    mu = thomas_fermi_mu(params, grid.dim)
    V = eval_potential(params.trap, grid)
    return np.sqrt(np.maximum(mu - V, 0.0) / params.c0)


def make_guess(kind: str, grid: GridSpec, params: PhysicsParams) -> np.ndarray:
    """One unit-norm complex component of the given kind."""
    kind = parse_tag(kind)
    coords = grid.coords()
    r2 = sum(c * c for c in coords)
    x, y = coords[0], coords[1]
    phi_a = np.broadcast_to(np.exp(-0.5 * r2) / math.pi ** (grid.dim / 4.0), grid.shape).astype(np.complex128)
    if kind == "a":
        return _unit(grid, phi_a)
    if kind == "f":
        return _unit(grid, thomas_fermi(grid, params).astype(np.complex128))
    phi_b = (x + 1j * y) * phi_a
    base = kind[0]
    om = params.omega
    if base == "b":
        f = phi_b
    elif base == "c":
        f = phi_a + phi_b
    elif base == "d":
        f = (1.0 - om) * phi_a + om * phi_b
    else:
        f = om * phi_a + (1.0 - om) * phi_b
    f = _unit(grid, f)
    return np.conj(f) if kind.endswith("bar") else f


def make_spinor_guess(tags: Sequence[str], grid: GridSpec, params: PhysicsParams) -> SpinorField:
    """``(phi_1, phi_0, phi_-1) / sqrt(3)`` from three unit-norm components."""
    if len(tags) != 3:
        raise InvalidArgument("need exactly three guess tags")
    comps = [make_guess(t, grid, params) / math.sqrt(3.0) for t in tags]
    return SpinorField(grid, np.stack(comps))


def identical_triples(tags: Iterable[str] = TAGS) -> list[tuple[str, str, str]]:
    return [(t, t, t) for t in (parse_tag(s) for s in tags)]


def all_triples(tags: Iterable[str] = TAGS) -> list[tuple[str, str, str]]:
    tags = [parse_tag(t) for t in tags]
    return list(itertools.product(tags, repeat=3))


@dataclass
class SweepEntry:
    tags: tuple[str, str, str]
    energy: float
    iterations: int
    converged: bool
    seconds: float
    error: Optional[str] = None


@dataclass
class SweepResult:
    best: object  # SolveResult or CascadeResult
    best_tags: tuple[str, str, str]
    entries: list[SweepEntry] = field(default_factory=list)

    def table(self) -> str:
        lines = ["tags,energy,iterations,converged,seconds"]
        for e in self.entries:
            lines.append(f"{'-'.join(e.tags)},{e.energy!r},{e.iterations},{int(e.converged)},{e.seconds:.3f}")
        return "\n".join(lines) + "\n"


def _run_one(args):
    tags, grid, params, config, plan = args
    from .multigrid import cm_pcg_solve
    from .optimizer import pcg_solve

    t0 = time.perf_counter()
    try:
        if plan is not None:
            phi0 = make_spinor_guess(tags, plan.levels[0], params)
            res = cm_pcg_solve(phi0, params, plan)
            iters = sum(r.iterations for r in res.records)
        else:
            phi0 = make_spinor_guess(tags, grid, params)
            res = pcg_solve(phi0, params, config)
            iters = res.record.iterations
    except Exception as exc:  # noqa: BLE001 - a failing guess must not end the sweep
        return tags, None, SweepEntry(tags, math.nan, 0, False, time.perf_counter() - t0, repr(exc))
    entry = SweepEntry(tags, res.energy.total, iters, res.converged, time.perf_counter() - t0)
    return tags, res, entry


def sweep_guesses(triples: Sequence[Sequence[str]], grid: GridSpec, params: PhysicsParams,
                  config=None, plan=None, jobs: int = 1) -> SweepResult:
    """Solve from every tag triple and keep the lowest-energy stationary state.

    With a ``plan`` each solve is a cascade starting on the plan's coarsest
    level; otherwise a fixed-grid PCG solve on ``grid``.
    """
    triples = [tuple(parse_tag(t) for t in tr) for tr in triples]
    if not triples:
        raise InvalidArgument("empty guess set")
    work = [(tr, grid, params, config, plan) for tr in triples]
    entries, best, best_tags = [], None, None
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_one, work))
    else:
        results = map(_run_one, work)
    for tags, res, entry in results:
        entries.append(entry)
        log.info("guess %s: E = %.10g (%d its)", "-".join(tags), entry.energy, entry.iterations)
        if res is not None and (best is None or res.energy.total < best.energy.total):
            best, best_tags = res, tags
    if best is None:
        raise SweepFailed("every solve in the sweep failed: " + "; ".join(e.error or "" for e in entries))
    return SweepResult(best, best_tags, entries)
