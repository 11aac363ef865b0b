"""Experiment configuration: TOML documents to a validated :class:`ExperimentSpec`.

Minimal document::

    seed = 7
    [target]
    K = 3
    d = 2
    [schedule]
    T = [8, 16, 32]

Any of ``schedule.T``, ``target.d``, ``target.K``, ``oracle.amplitude`` and
``target.delta`` may be a list; the sweep runs their Cartesian product.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .errors import ParseError, ValidationError
from .gmm import GaussianMixture, load_gmm, new_gmm
from .oracles import DEFAULT_C_CLIP
from .schedule import DEFAULT_C0, DEFAULT_C1

PLACEMENTS = ("simplex", "random-ball", "file")
PERTURB_MODELS = ("none", "gaussian-field", "mean-jitter")


@dataclass
class TargetSpec:
    K: list = field(default_factory=lambda: [3])
    d: list = field(default_factory=lambda: [2])
    placement: str = "simplex"
    separation: float = 4.0
    radius: float = 4.0
    embed_dim: int = 0
    weights: str = "equal"
    placement_seed: int = 0
    file: str = ""
    c_R: float = 1.0
    delta: list = field(default_factory=lambda: [0.0])
    contaminant_mean: float = 0.0
    contaminant_scale: float = 2.0


@dataclass
class ScheduleSpec:
    T: list = field(default_factory=lambda: [64])
    c0: float = DEFAULT_C0
    c1: float = DEFAULT_C1


@dataclass
class OracleSpec:
    perturb: str = "none"
    amplitude: list = field(default_factory=lambda: [0.0])
    perturb_seed: int = 1
    clip: bool = False
    C_clip: float = DEFAULT_C_CLIP


@dataclass
class MetricSpec:
    projections: int = 32
    bins: int = 200
    pair_directions: bool = True
    null_floor: bool = True
    moments: bool = True
    mmd: bool = False
    mmd_n: int = 2000
    score_error: bool = False
    score_error_n: int = 10000


@dataclass
class ProbeSpec:
    enabled: bool = False
    n: int = 10000
    C1: float = 8.0
    C2: float = 8.0
    C_clip: float = DEFAULT_C_CLIP
    steps: list = field(default_factory=list)


@dataclass
class ExperimentSpec:
    seed: int
    n: int = 100_000
    target: TargetSpec = field(default_factory=TargetSpec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    oracle: OracleSpec = field(default_factory=OracleSpec)
    metrics: MetricSpec = field(default_factory=MetricSpec)
    probes: ProbeSpec = field(default_factory=ProbeSpec)
    base_dir: str = field(default=".", compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()[:12]

    def axes(self) -> dict:
        return {"T": self.schedule.T, "d": self.target.d, "K": self.target.K,
                "amplitude": self.oracle.amplitude, "delta": self.target.delta}


_SECTIONS = {"target": TargetSpec, "schedule": ScheduleSpec, "oracle": OracleSpec,
             "metrics": MetricSpec, "probes": ProbeSpec}
_LIST_FIELDS = {("target", "K"), ("target", "d"), ("target", "delta"), ("schedule", "T"),
                ("oracle", "amplitude"), ("probes", "steps")}


def _coerce(section, name, value, proto):
    where = f"{section}.{name}" if section else name
    if (section, name) in _LIST_FIELDS:
        value = value if isinstance(value, list) else [value]
        if not value and name != "steps":
            raise ValidationError(f"{where} must be a nonempty list")
        elem = int if name in ("K", "d", "T", "steps") else float
        try:
            out = [elem(v) for v in value]
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad list element: {exc}", field=where) from exc
        if elem is int and any(float(a) != b for a, b in zip(value, out)):
            raise ParseError("expected integers", field=where)
        return out
    kind = type(proto)
    if kind is bool:
        if not isinstance(value, bool):
            raise ParseError("expected true/false", field=where)
        return value
    try:
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError(value)
            return int(value)
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"expected {kind.__name__}, got {value!r}", field=where) from exc


def spec_from_dict(doc: dict, base_dir=".") -> ExperimentSpec:
    if "seed" not in doc:
        raise ValidationError("seed is required (no wall-clock default)")
    known = {"seed", "n"} | set(_SECTIONS)
    for key in doc:
        if key not in known:
            raise ParseError("unknown key", field=key)
    kwargs = {"seed": _coerce("", "seed", doc["seed"], 0), "base_dir": str(base_dir)}
    if "n" in doc:
        kwargs["n"] = _coerce("", "n", doc["n"], 0)
    for sec, cls in _SECTIONS.items():
        body = doc.get(sec, {})
        if not isinstance(body, dict):
            raise ParseError("expected a table", field=sec)
        proto = cls()
        names = {f.name for f in fields(cls)}
        vals = {}
        for key, value in body.items():
            if key not in names:
                raise ParseError("unknown key", field=f"{sec}.{key}")
            vals[key] = _coerce(sec, key, value, getattr(proto, key))
        kwargs[sec] = cls(**vals)
    spec = ExperimentSpec(**kwargs)
    validate_spec(spec)
    return spec


def validate_spec(spec: ExperimentSpec) -> None:
    if not (0 <= spec.seed < 2 ** 64):
        raise ValidationError("seed must be a 64-bit unsigned integer")
    if spec.n < 1:
        raise ValidationError("n must be >= 1")
    s, t, o = spec.schedule, spec.target, spec.oracle
    if min(s.T) < 2:
        raise ValidationError("every T must be >= 2")
    if not (s.c0 > 0 and s.c1 > 0):
        raise ValidationError("schedule constants c0, c1 must be positive")
    if not s.c1 / s.c0 > 4:
        raise ValidationError(f"schedule rule c1/c0 > 4 violated (c1/c0 = {s.c1 / s.c0:g})")
    if min(t.K) < 1 or min(t.d) < 1:
        raise ValidationError("K and d must be >= 1")
    if t.placement not in PLACEMENTS:
        raise ValidationError(f"placement must be one of {PLACEMENTS}")
    if t.placement == "file" and not t.file:
        raise ValidationError("placement 'file' needs target.file")
    if any(not (0 <= dl < 1) for dl in t.delta):
        raise ValidationError("every delta must lie in [0, 1)")
    if t.contaminant_scale <= 0:
        raise ValidationError("contaminant_scale must be positive")
    if o.perturb not in PERTURB_MODELS:
        raise ValidationError(f"perturb must be one of {PERTURB_MODELS}")
    if any(a < 0 for a in o.amplitude):
        raise ValidationError("amplitudes must be >= 0")
    if o.C_clip <= 0 or spec.probes.C_clip <= 0:
        raise ValidationError("C_clip must be positive")
    if spec.metrics.projections < 1 or spec.metrics.bins < 50:
        raise ValidationError("need projections >= 1 and bins >= 50")
    # generating every target checks the mean-norm cap for each (K, d)
    for K in t.K:
        for d in t.d:
            build_target_gmm(spec, K, d)


def _simplex(K: int, separation: float) -> np.ndarray:
    if K == 1:
        return np.zeros((1, 1))
    centred = np.eye(K) - 1.0 / K
    u, sv, _ = np.linalg.svd(centred)
    coords = u[:, :K - 1] * sv[:K - 1]
    # fix the sign of each axis so the layout is reproducible
    signs = np.sign(coords[np.argmax(np.abs(coords), axis=0), np.arange(K - 1)])
    return coords * signs * (separation / math.sqrt(2.0))


def _random_ball(K: int, dim: int, radius: float, seed: int) -> np.ndarray:
    gen = np.random.default_rng([int(seed), K, dim, 0xBA11])
    g = gen.standard_normal((K, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * gen.random(K) ** (1.0 / dim)
    return g * r[:, None]


def _embed(means: np.ndarray, d: int) -> np.ndarray:
    K, k = means.shape
    out = np.zeros((K, d))
    out[:, :min(k, d)] = means[:, :min(k, d)]
    return out


def build_target_gmm(spec: ExperimentSpec, K: int, d: int) -> GaussianMixture:
    """Mixture for one (K, d) cell; raises if a mean exceeds ``min(T)**c_R``."""
    t = spec.target
    if t.placement == "file":
        path = Path(t.file)
        if not path.is_absolute():
            path = Path(spec.base_dir) / path
        base = load_gmm(path)
        if base.d > d:
            raise ValidationError(f"mixture file has d={base.d} > cell d={d}")
        weights, means = base.weights, _embed(base.means, d)
    else:
        if t.placement == "simplex":
            raw = _simplex(K, t.separation)
        else:
            raw = _random_ball(K, t.embed_dim or d, t.radius, t.placement_seed)
        means = _embed(raw, d)
        if t.weights == "equal":
            weights = np.full(K, 1.0 / K)
        elif t.weights == "random":
            weights = np.random.default_rng([t.placement_seed, K, 0xD1]).dirichlet(np.ones(K) * 2)
        else:
            raise ValidationError("weights must be 'equal' or 'random'")
    gmm = new_gmm(weights, means)
    cap = float(min(spec.schedule.T)) ** t.c_R
    if gmm.max_mean_norm > cap:
        raise ValidationError(
            f"mean norm bound violated: max ||mu_k|| = {gmm.max_mean_norm:.4g} "
            f"exceeds T^c_R = {cap:.4g} (T = {min(spec.schedule.T)}, c_R = {t.c_R})")
    return gmm


def parse_config(path) -> ExperimentSpec:
    path = Path(path)
    text = path.read_text()
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(str(exc), line=getattr(exc, "lineno", None)) from exc
    return spec_from_dict(doc, base_dir=path.parent)


def parse_config_text(text: str, base_dir=".") -> ExperimentSpec:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(str(exc), line=getattr(exc, "lineno", None)) from exc
    return spec_from_dict(doc, base_dir=base_dir)


def serialize_config(spec: ExperimentSpec) -> str:
    """Canonical TOML with every default materialised."""
    return tomli_w.dumps(spec.to_dict())
