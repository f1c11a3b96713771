"""Run configuration, binary field files, and text outputs for plotting."""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, FieldFileError, InvalidArgument
from .guesses import TAGS, all_triples, identical_triples, parse_tag
from .optimizer import PRECONDITIONERS, SHIFT_MODES, STOP_KINDS, SolverConfig
from .physics import EnergyBreakdown, PhysicsParams, TrapPotential
from .spectral import GridSpec, SpinorField

# -- field files -------------------------------------------------------------

MAGIC = b"SPGS"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<4sII")
_CHECKSUM_BYTES = 8


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=_CHECKSUM_BYTES).digest()


def header_size(dim: int) -> int:
    return _HEAD.size + 16 * dim


def encode_field(fld: SpinorField) -> bytes:
    g = fld.grid
    head = _HEAD.pack(MAGIC, FORMAT_VERSION, g.dim)
    head += struct.pack(f"<{g.dim}Q", *g.shape)
    head += struct.pack(f"<{g.dim}d", *g.half_widths)
    payload = np.ascontiguousarray(fld.data, dtype="<c16").tobytes()
    return head + payload + _checksum(payload)


def decode_field(buf: bytes, source: str = "<bytes>") -> SpinorField:
    if len(buf) < _HEAD.size:
        raise FieldFileError(f"{source}: truncated header")
    magic, version, dim = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FieldFileError(f"{source}: not a field file (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise FieldFileError(f"{source}: unsupported format version {version} (expected {FORMAT_VERSION})")
    if dim not in (2, 3):
        raise FieldFileError(f"{source}: invalid dimension {dim}")
    off = _HEAD.size
    if len(buf) < header_size(dim):
        raise FieldFileError(f"{source}: truncated header")
    shape = struct.unpack_from(f"<{dim}Q", buf, off)
    half = struct.unpack_from(f"<{dim}d", buf, off + 8 * dim)
    off = header_size(dim)
    nbytes = 3 * int(np.prod(shape)) * 16
    if len(buf) != off + nbytes + _CHECKSUM_BYTES:
        raise FieldFileError(f"{source}: size {len(buf)} does not match header (expected {off + nbytes + _CHECKSUM_BYTES})")
    payload = buf[off:off + nbytes]
    if _checksum(payload) != buf[off + nbytes:]:
        raise FieldFileError(f"{source}: checksum mismatch")
    try:
        grid = GridSpec(dim, tuple(half), tuple(int(n) for n in shape))
    except InvalidArgument as exc:
        raise FieldFileError(f"{source}: {exc}") from exc
    data = np.frombuffer(payload, dtype="<c16").reshape((3,) + tuple(shape)).astype(np.complex128)
    return SpinorField(grid, data, check=False)


def write_field(path, fld: SpinorField) -> None:
    Path(path).write_bytes(encode_field(fld))


def read_field(path) -> SpinorField:
    return decode_field(Path(path).read_bytes(), str(path))


# -- text outputs ------------------------------------------------------------

ISO_LEVELS = (1e-4, 2e-5)
COMPONENT_NAMES = ("p1", "0", "m1")


def write_densities(outdir: Path, fld: SpinorField) -> list[Path]:
    """Per-component densities ``|phi_l|^2``.

    2D: text matrices, one row per x grid line (``rho[i, j]`` at ``(x_i, y_j)``).
    3D: one binary volume in the field-file format whose three components carry
    the densities as real parts, plus the isosurface levels in a text file.
    """
    outdir.mkdir(parents=True, exist_ok=True)
    rho = (fld.data * fld.data.conj()).real
    written = []
    if fld.grid.dim == 2:
        for name, r in zip(COMPONENT_NAMES, rho):
            p = outdir / f"density_{name}.txt"
            np.savetxt(p, r, fmt="%.10e")
            written.append(p)
        p = outdir / "axes.txt"
        with p.open("w") as fh:
            for i in range(2):
                fh.write(" ".join(f"{v:.12g}" for v in fld.grid.axis(i)) + "\n")
        written.append(p)
    else:
        p = outdir / "density.spgs"
        write_field(p, SpinorField(fld.grid, rho.astype(np.complex128), check=False))
        written.append(p)
        p = outdir / "isosurface_levels.txt"
        p.write_text("".join(f"{v:g}\n" for v in ISO_LEVELS))
        written.append(p)
    return written


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_summary(path: Path, breakdown: EnergyBreakdown, extra: dict) -> None:
    d = breakdown.as_dict()
    d.update(extra)
    d = {k: _json_safe(v) for k, v in d.items()}
    path.write_text(json.dumps(d, indent=2, sort_keys=False) + "\n")


# -- configuration -----------------------------------------------------------

METHODS = ("pcg", "cm_pcg", "pgf")

_KEYS = {
    "grid": {"dim", "half_width", "points", "coarsest_points"},
    "physics": {"c0", "c1", "omega", "gamma", "trap", "trap_frequencies", "quartic"},
    "solver": {"method", "preconditioner", "stop", "tol", "theta_trial", "backtrack_factor",
               "max_iters", "max_backtracks", "shift", "coarse_tol", "dt", "stabilization"},
    "guesses": {"initial", "tags"},
    "output": {"directory", "density", "field"},
    "compare": {"pgf", "pgf_dt", "pgf_stop", "pgf_tol", "pgf_max_iters"},
    "study": {"points", "reference_points", "stop", "tol"},
}
_REQUIRED = {"grid": ("dim", "half_width", "points"), "physics": ("c0", "c1")}
_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


@dataclass
class StudySettings:
    points: list[int]
    reference_points: int
    stop: str = "residual_inf"
    tol: float = 1e-12


@dataclass
class RunConfig:
    grid: GridSpec
    params: PhysicsParams
    solver: SolverConfig
    method: str = "pcg"
    coarsest_points: Optional[int] = None
    coarse_tol: Optional[float] = None
    dt: float = 0.1
    stabilization: object = "auto"
    guesses: list[tuple[str, str, str]] = field(default_factory=lambda: [("a", "a", "a")])
    guess_mode: str = "single"  # single | list | sweep-identical | sweep-all
    output_dir: Path = Path("out")
    emit_density: bool = True
    emit_field: bool = True
    compare_pgf: bool = False
    pgf_dt: float = 0.1
    pgf_config: Optional[SolverConfig] = None
    study: Optional[StudySettings] = None
    source: Optional[str] = None

    def plan(self):
        from .multigrid import MultigridPlan

        if self.coarsest_points is None:
            return MultigridPlan([self.grid], [self.solver])
        return MultigridPlan.cascade(self.grid, self.coarsest_points, self.solver, self.coarse_tol)


class _Reader:
    """configparser wrapper that remembers the line of every section and key."""

    def __init__(self, text: str, path: Optional[str]):
        self.path = path
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        try:
            self.cp.read_string(text, source=path or "<config>")
        except configparser.ParsingError as exc:
            lineno = exc.errors[0][0] if exc.errors else None
            raise ConfigError(f"cannot parse line: {exc.errors[0][1] if exc.errors else exc}", lineno, path) from exc
        except configparser.DuplicateOptionError as exc:
            raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, path) from exc
        except configparser.DuplicateSectionError as exc:
            raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, path) from exc
        except configparser.Error as exc:
            raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None), path) from exc
        self.lines: dict[tuple[str, Optional[str]], int] = {}
        section = None
        for i, line in enumerate(text.splitlines(), 1):
            m = _SECTION_RE.match(line)
            if m:
                section = m.group(1).strip()
                self.lines[(section, None)] = i
                continue
            m = _KEY_RE.match(line)
            if m and section is not None and not line[:1].isspace():
                self.lines.setdefault((section, m.group(1).strip().lower()), i)

    def error(self, msg, section, key=None):
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        return ConfigError(msg, line, self.path)

    def check_known(self):
        for sec in self.cp.sections():
            if sec not in _KEYS:
                raise self.error(f"unknown section [{sec}]", sec)
            for key in self.cp[sec]:
                if key not in _KEYS[sec]:
                    raise self.error(f"unknown key {key!r} in [{sec}]", sec, key)
        for sec, keys in _REQUIRED.items():
            if not self.cp.has_section(sec):
                raise ConfigError(f"missing section [{sec}]", None, self.path)
            for key in keys:
                if not self.cp.has_option(sec, key):
                    raise self.error(f"missing required key {key!r} in [{sec}]", sec)

    def has(self, sec, key):
        return self.cp.has_option(sec, key)

    def raw(self, sec, key, default=None):
        if not self.has(sec, key):
            return default
        return self.cp.get(sec, key).strip()

    def _conv(self, sec, key, default, conv, what):
        s = self.raw(sec, key)
        if s is None:
            return default
        try:
            return conv(s)
        except (ValueError, InvalidArgument) as exc:
            raise self.error(f"[{sec}] {key} = {s!r}: expected {what}", sec, key) from exc

    def float(self, sec, key, default=None):
        def conv(s):
            v = float(s)
            if not math.isfinite(v):
                raise ValueError(s)
            return v
        return self._conv(sec, key, default, conv, "a finite number")

    def int(self, sec, key, default=None):
        return self._conv(sec, key, default, int, "an integer")

    def bool(self, sec, key, default=None):
        def conv(s):
            t = s.lower()
            if t in ("1", "yes", "true", "on"):
                return True
            if t in ("0", "no", "false", "off"):
                return False
            raise ValueError(s)
        return self._conv(sec, key, default, conv, "yes or no")

    def floats(self, sec, key, default=None):
        return self._conv(sec, key, default, lambda s: [float(x) for x in s.split(",")], "comma-separated numbers")

    def ints(self, sec, key, default=None):
        return self._conv(sec, key, default, lambda s: [int(x) for x in s.split(",")], "comma-separated integers")

    def choice(self, sec, key, options, default):
        s = self.raw(sec, key)
        if s is None:
            return default
        if s not in options:
            raise self.error(f"[{sec}] {key} = {s!r}: expected one of {', '.join(options)}", sec, key)
        return s


def _parse_guesses(r: _Reader):
    spec = r.raw("guesses", "initial", "a,a,a")
    tags = r.raw("guesses", "tags")
    try:
        pool = [parse_tag(t) for t in tags.split(",")] if tags else list(TAGS)
        if spec in ("sweep-identical", "sweep-all"):
            triples = identical_triples(pool) if spec == "sweep-identical" else all_triples(pool)
            return triples, spec
        triples = []
        for item in spec.split(";"):
            parts = [t.strip() for t in item.split(",")]
            if len(parts) != 3:
                raise InvalidArgument(f"guess {item.strip()!r} needs three comma-separated tags")
            triples.append(tuple(parse_tag(t) for t in parts))
    except InvalidArgument as exc:
        raise r.error(str(exc), "guesses", "tags" if tags and "tags" in str(exc) else "initial") from exc
    return triples, ("single" if len(triples) == 1 else "list")


def parse_config(text: str, path: Optional[str] = None) -> RunConfig:
    r = _Reader(text, path)
    r.check_known()

    dim = r.int("grid", "dim")
    if dim not in (2, 3):
        raise r.error(f"[grid] dim must be 2 or 3, got {dim}", "grid", "dim")
    half = r.floats("grid", "half_width")
    pts = r.ints("grid", "points")
    try:
        from .spectral import make_grid

        grid = make_grid(dim, half if len(half) > 1 else half[0], pts if len(pts) > 1 else pts[0])
    except InvalidArgument as exc:
        raise r.error(str(exc), "grid", "points") from exc
    coarsest = r.int("grid", "coarsest_points")

    trap_kind = r.choice("physics", "trap", ("harmonic", "harmonic_plus_quartic"), "harmonic")
    try:
        if trap_kind == "harmonic":
            trap = TrapPotential.harmonic(*r.floats("physics", "trap_frequencies", [1.0, 1.0, 1.0]))
        else:
            trap = TrapPotential.harmonic_plus_quartic(*r.floats("physics", "quartic", [-0.2, 0.5]))
        params = PhysicsParams(r.float("physics", "c0"), r.float("physics", "c1"),
                               r.float("physics", "omega", 0.0), r.float("physics", "gamma", 0.0), trap)
    except (InvalidArgument, TypeError) as exc:
        raise r.error(str(exc), "physics", "trap") from exc

    method = r.choice("solver", "method", METHODS, "pcg")
    defaults = SolverConfig()
    try:
        solver = SolverConfig(
            preconditioner=r.choice("solver", "preconditioner", PRECONDITIONERS, defaults.preconditioner),
            stop_kind=r.choice("solver", "stop", STOP_KINDS, defaults.stop_kind),
            tol=r.float("solver", "tol", defaults.tol),
            theta_trial=r.float("solver", "theta_trial", defaults.theta_trial),
            backtrack_factor=r.float("solver", "backtrack_factor", defaults.backtrack_factor),
            max_iters=r.int("solver", "max_iters", defaults.max_iters),
            max_backtracks=r.int("solver", "max_backtracks", defaults.max_backtracks),
            shift=r.choice("solver", "shift", SHIFT_MODES, defaults.shift),
        )
    except InvalidArgument as exc:
        named = [k for k in ("tol", "theta_trial", "backtrack_factor", "max_iters", "max_backtracks")
                 if k in str(exc) and r.has("solver", k)]
        raise r.error(str(exc), "solver", named[0] if named else None) from exc
    dt = r.float("solver", "dt", 0.1)
    if not dt > 0:
        raise r.error("[solver] dt must be positive", "solver", "dt")
    stab = r.raw("solver", "stabilization", "auto")
    if stab != "auto":
        stab = r.float("solver", "stabilization")
        if stab < 0:
            raise r.error("[solver] stabilization must be >= 0 or 'auto'", "solver", "stabilization")
    if method == "cm_pcg" and coarsest is None:
        raise r.error("method cm_pcg needs [grid] coarsest_points", "grid")

    triples, mode = _parse_guesses(r)
    if any("f" in t for t in triples) and (params.c0 <= 0 or trap_kind != "harmonic"):
        raise r.error("guess f needs c0 > 0 and a harmonic trap", "guesses", "initial")

    outdir = Path(r.raw("output", "directory", "out"))

    cfg = RunConfig(grid, params, solver, method, coarsest, r.float("solver", "coarse_tol"), dt, stab,
                    triples, mode, outdir, r.bool("output", "density", True), r.bool("output", "field", True),
                    source=path)
    if cfg.coarsest_points is not None:
        try:
            cfg.plan()
        except InvalidArgument as exc:
            raise r.error(str(exc), "grid", "coarsest_points") from exc

    cfg.compare_pgf = r.bool("compare", "pgf", False)
    cfg.pgf_dt = r.float("compare", "pgf_dt", dt)
    if not cfg.pgf_dt > 0:
        raise r.error("[compare] pgf_dt must be positive", "compare", "pgf_dt")
    try:
        cfg.pgf_config = SolverConfig(
            stop_kind=r.choice("compare", "pgf_stop", STOP_KINDS, solver.stop_kind),
            tol=r.float("compare", "pgf_tol", solver.tol),
            max_iters=r.int("compare", "pgf_max_iters", solver.max_iters),
        )
    except InvalidArgument as exc:
        raise r.error(str(exc), "compare") from exc

    if r.cp.has_section("study"):
        pts = r.ints("study", "points")
        ref = r.int("study", "reference_points")
        if not pts or ref is None:
            raise r.error("[study] needs points and reference_points", "study")
        seq = sorted(pts) + [ref]
        if any(b != 2 * a for a, b in zip(seq, seq[1:])):
            raise r.error("[study] points and reference_points must double from one level to the next", "study", "points")
        cfg.study = StudySettings(sorted(pts), ref, r.choice("study", "stop", STOP_KINDS, "residual_inf"),
                                  r.float("study", "tol", 1e-12))
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from exc
    return parse_config(text, str(path))
