"""Experiment configuration: strict INI text in, validated pieces out.

The grammar is deliberately small.  Every section and key is whitelisted
and anything unrecognized is an error, so a typo cannot silently run the
wrong experiment.  Fractions like `h = 1/64` are accepted wherever a
spacing is expected.  Paths named by a config must exist at parse time.
"""

import configparser
import hashlib
import os
from dataclasses import dataclass
from typing import Optional

from .decompose import DecompositionConfig
from .errors import ConfigError
from .grid import Grid, read_snapshot
from . import shapes

_SHAPE_KINDS = (
    "ball",
    "ellipsoid",
    "perturbed_sphere",
    "two_ball_neck",
    "three_ball_chain",
    "snapshot",
)

_ALLOWED = {
    "shape": {
        "kind",
        "radius",
        "center",
        "semiaxes",
        "ell",
        "m",
        "amplitude",
        "waist",
        "path",
        "exact_sdf",
    },
    "grid": {"origin", "extents", "h"},
    "family": {"param", "values"},
    "pipeline": {
        "torsion",
        "identities",
        "decompose",
        "capillarity",
        "montiel_ros",
        "montiel_ros_p",
    },
    "decomposition": {
        "alpha",
        "beta",
        "c0",
        "c1",
        "c3",
        "epsilon_override",
        "rho_override",
    },
    "capillarity": {"g", "r0"},
    "output": {"dir"},
    "run": {"seed", "workers"},
}

# which knob a family may turn, per shape kind
_FAMILY_PARAMS = {
    "ball": {"radius"},
    "ellipsoid": {"t"},
    "perturbed_sphere": {"amplitude"},
    "two_ball_neck": {"waist"},
    "three_ball_chain": {"waist"},
    "snapshot": set(),
}


def _number(text: str, what: str) -> float:
    """Float literal or a p/q fraction."""
    text = text.strip()
    if "/" in text:
        num, _, den = text.partition("/")
        try:
            return float(num) / float(den)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad fraction for {what}: {text!r}") from exc
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad number for {what}: {text!r}") from exc


def _numbers(text: str, what: str) -> tuple:
    toks = text.replace(",", " ").split()
    if not toks:
        raise ConfigError(f"{what} is empty")
    return tuple(_number(t, what) for t in toks)


def _integer(text: str, what: str) -> int:
    try:
        return int(text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad integer for {what}: {text!r}") from exc


def _boolean(text: str, what: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean for {what}: {text!r}")


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    radius: float = 1.0
    center: Optional[tuple] = None
    semiaxes: tuple = (1.0, 1.0, 1.0)
    ell: int = 2
    m: int = 0
    amplitude: float = 0.0
    waist: float = 0.15
    path: Optional[str] = None
    exact_sdf: bool = False


@dataclass(frozen=True)
class PipelineToggles:
    torsion: bool = True
    identities: bool = False
    decompose: bool = True
    capillarity: bool = False
    montiel_ros: bool = False
    montiel_ros_ps: tuple = (2.0,)


@dataclass(frozen=True)
class ExperimentConfig:
    shape: ShapeSpec
    origin: tuple
    extents: tuple
    h: float
    family_param: Optional[str]
    family_values: tuple
    toggles: PipelineToggles
    decomp: DecompositionConfig
    potential: Optional[str]
    potential_r0: Optional[float]
    outdir: str
    seed: int
    workers: int
    config_hash: str
    source_path: str

    def grid(self) -> Grid:
        return Grid(origin=self.origin, extents=self.extents, h=self.h)

    def members(self) -> tuple:
        """Family parameter values, ascending; a lone member if no family."""
        if self.family_values:
            return tuple(sorted(self.family_values))
        return (self._default_param(),)

    def _default_param(self) -> float:
        kind = self.shape.kind
        if kind == "ball":
            return self.shape.radius
        if kind == "ellipsoid":
            return 0.0
        if kind == "perturbed_sphere":
            return self.shape.amplitude
        if kind in ("two_ball_neck", "three_ball_chain"):
            return self.shape.waist
        return 0.0

    def build_domain(self, param: float) -> shapes.ImplicitDomain:
        grid = self.grid()
        s = self.shape
        if s.kind == "ball":
            center = s.center if s.center is not None else (0.0,) * grid.d
            return shapes.make_ball(grid, center, param)
        if s.kind == "ellipsoid":
            a = list(s.semiaxes)
            a[-1] += param
            return shapes.make_ellipsoid(grid, tuple(a), center=s.center)
        if s.kind == "perturbed_sphere":
            return shapes.make_perturbed_sphere(
                grid, s.radius, [(s.ell, s.m, param)], center=s.center
            )
        if s.kind == "two_ball_neck":
            return shapes.two_ball_neck(grid, waist=param, radius=s.radius)
        if s.kind == "three_ball_chain":
            return shapes.three_ball_chain(grid, waist=param, radius=s.radius)
        # snapshot: param is carried in the row but shapes nothing
        return shapes.domain_from_snapshot(read_snapshot(s.path), exact_sdf=s.exact_sdf)


def _check_whitelist(cp: configparser.ConfigParser) -> None:
    for section in cp.sections():
        if section not in _ALLOWED:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _ALLOWED[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")


def _parse_shape(cp: configparser.ConfigParser) -> ShapeSpec:
    if not cp.has_section("shape"):
        raise ConfigError("missing [shape] section")
    sec = cp["shape"]
    kind = sec.get("kind", "").strip()
    if kind not in _SHAPE_KINDS:
        raise ConfigError(f"shape kind must be one of {_SHAPE_KINDS}, got {kind!r}")
    spec = {"kind": kind}
    if "radius" in sec:
        spec["radius"] = _number(sec["radius"], "shape.radius")
    if "center" in sec:
        spec["center"] = _numbers(sec["center"], "shape.center")
    if "semiaxes" in sec:
        spec["semiaxes"] = _numbers(sec["semiaxes"], "shape.semiaxes")
    if "ell" in sec:
        spec["ell"] = _integer(sec["ell"], "shape.ell")
    if "m" in sec:
        spec["m"] = _integer(sec["m"], "shape.m")
    if "amplitude" in sec:
        spec["amplitude"] = _number(sec["amplitude"], "shape.amplitude")
    if "waist" in sec:
        spec["waist"] = _number(sec["waist"], "shape.waist")
    if "exact_sdf" in sec:
        spec["exact_sdf"] = _boolean(sec["exact_sdf"], "shape.exact_sdf")
    if kind == "snapshot":
        path = sec.get("path", "").strip()
        if not path:
            raise ConfigError("snapshot shape needs a path")
        if not os.path.isfile(path):
            raise ConfigError(f"snapshot file not found: {path}")
        spec["path"] = path
    elif "path" in sec:
        raise ConfigError("path is only valid for snapshot shapes")
    return ShapeSpec(**spec)


def _parse_family(cp, shape: ShapeSpec):
    if not cp.has_section("family"):
        return None, ()
    sec = cp["family"]
    if "param" not in sec or "values" not in sec:
        raise ConfigError("[family] needs both param and values")
    param = sec["param"].strip()
    allowed = _FAMILY_PARAMS[shape.kind]
    if param not in allowed:
        raise ConfigError(
            f"family param {param!r} not valid for {shape.kind} "
            f"(allowed: {sorted(allowed) or 'none'})"
        )
    values = _numbers(sec["values"], "family.values")
    if len(set(values)) != len(values):
        raise ConfigError("family values contain duplicates")
    return param, values


def _parse_toggles(cp) -> PipelineToggles:
    if not cp.has_section("pipeline"):
        return PipelineToggles()
    sec = cp["pipeline"]
    kw = {}
    for key in ("torsion", "identities", "decompose", "capillarity", "montiel_ros"):
        if key in sec:
            kw[key] = _boolean(sec[key], f"pipeline.{key}")
    if "montiel_ros_p" in sec:
        kw["montiel_ros_ps"] = _numbers(sec["montiel_ros_p"], "pipeline.montiel_ros_p")
    return PipelineToggles(**kw)


def _parse_decomposition(cp) -> DecompositionConfig:
    if not cp.has_section("decomposition"):
        return DecompositionConfig()
    sec = cp["decomposition"]
    kw = {}
    for key in ("alpha", "beta", "c1", "c3", "epsilon_override", "rho_override"):
        if key in sec:
            kw[key] = _number(sec[key], f"decomposition.{key}")
    if "c0" in sec:
        raw = sec["c0"].strip()
        kw["c0"] = raw if raw == "empirical" else _number(raw, "decomposition.c0")
    return DecompositionConfig(**kw)


def _parse_capillarity(cp, toggles: PipelineToggles):
    if not cp.has_section("capillarity"):
        if toggles.capillarity:
            raise ConfigError("capillarity enabled but no [capillarity] g given")
        return None, None
    sec = cp["capillarity"]
    g = sec.get("g", "").strip()
    if not g:
        raise ConfigError("[capillarity] needs g")
    if os.path.sep in g or g.endswith(".csv"):
        if not os.path.isfile(g):
            raise ConfigError(f"potential snapshot not found: {g}")
    else:
        # validate the expression now; the closure itself is rebuilt per member
        from .capillarity import potential_from_string

        potential_from_string(g)
    r0 = _number(sec["r0"], "capillarity.r0") if "r0" in sec else None
    return g, r0


def parse_config(
    path: str,
    h_override: Optional[float] = None,
    out_override: Optional[str] = None,
) -> ExperimentConfig:
    """Read, whitelist-check, and type-check one experiment file."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cp = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";")
    )
    try:
        cp.read_string(raw.decode("utf-8"))
    except (UnicodeDecodeError, configparser.Error) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    _check_whitelist(cp)

    shape = _parse_shape(cp)
    if not cp.has_section("grid"):
        raise ConfigError("missing [grid] section")
    gsec = cp["grid"]
    for key in ("origin", "extents", "h"):
        if key not in gsec:
            raise ConfigError(f"[grid] needs {key}")
    origin = _numbers(gsec["origin"], "grid.origin")
    extents = tuple(
        _integer(t, "grid.extents") for t in gsec["extents"].replace(",", " ").split()
    )
    h = h_override if h_override is not None else _number(gsec["h"], "grid.h")
    try:
        grid = Grid(origin=origin, extents=extents, h=h)
    except ValueError as exc:
        raise ConfigError(f"bad grid: {exc}") from exc

    family_param, family_values = _parse_family(cp, shape)
    toggles = _parse_toggles(cp)
    decomp = _parse_decomposition(cp)
    try:
        decomp.exponents(grid.d)
    except ValueError as exc:
        raise ConfigError(f"bad decomposition exponents: {exc}") from exc
    potential, potential_r0 = _parse_capillarity(cp, toggles)

    outdir = "out"
    if cp.has_section("output") and "dir" in cp["output"]:
        outdir = cp["output"]["dir"].strip()
    if out_override is not None:
        outdir = out_override

    seed = 12345
    workers = 1
    if cp.has_section("run"):
        sec = cp["run"]
        if "seed" in sec:
            seed = _integer(sec["seed"], "run.seed")
        if "workers" in sec:
            workers = _integer(sec["workers"], "run.workers")
            if workers < 1:
                raise ConfigError("run.workers must be at least 1")

    return ExperimentConfig(
        shape=shape,
        origin=origin,
        extents=extents,
        h=h,
        family_param=family_param,
        family_values=family_values,
        toggles=toggles,
        decomp=decomp,
        potential=potential,
        potential_r0=potential_r0,
        outdir=outdir,
        seed=seed,
        workers=workers,
        config_hash=hashlib.sha256(raw).hexdigest()[:12],
        source_path=path,
    )
