"""Citation probability per engine architecture and architecture-weighted targets.

Each architecture scores a normalized feature vector with a logistic model.
The default weights put the three magnitudes of each architecture's row of
the published weight table onto feature dimensions:

    STS  meta-structure clarity 0.45 -> balance_score
         upfront density 0.30       -> D
         hierarchical depth 0.25    -> d_h
    IR   cross-reference richness 0.41 -> L_d 0.205, R_d 0.205
         hierarchical breadth-depth 0.35 -> d_h 0.175, balance_score 0.175
         query-triggering keywords 0.24  -> K_p
    ISG  chunk independence 0.38 -> V_p, negated (even chunk sizes)
         format diversity 0.35   -> F_d
         aggressive chunking 0.27 -> R

Every other weight is 0 and all biases are 0. Everything here can be
replaced from a JSON file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import BadAlpha, DimensionMismatch
from .features import DIMENSIONS, CorpusStats, FeatureVector

ARCHITECTURES = ("STS", "IR", "ISG")
ALPHA_TOLERANCE = 1e-9
UNBOUNDED_SIGMAS = 3.0

_DEFAULT_WEIGHTS = {
    "STS": {"balance_score": 0.45, "D": 0.30, "d_h": 0.25},
    "IR": {"L_d": 0.205, "R_d": 0.205, "d_h": 0.175, "balance_score": 0.175, "K_p": 0.24},
    "ISG": {"V_p": -0.38, "F_d": 0.35, "R": 0.27},
}
_DEFAULT_DEVIATIONS = {"STS": {"d_h": 0.5}, "IR": {"d_h": 0.0}, "ISG": {"d_h": -0.5}}

# Midpoints and feasibility ranges of the five structural principles.
PRINCIPLES = {
    "d_h": (4.0, 3.0, 5.0),
    "balance_score": (0.95, 0.9, 1.0),
    "L_d": (0.175, 0.15, 0.20),
    "F_d": (0.30, 0.25, 0.35),
    "E_d": (0.075, 0.05, 0.10),
}
PARAGRAPH_LENGTH = (225.0, 150.0, 300.0)


def _vector(values: Mapping[str, float] | Sequence[float], what: str) -> tuple[float, ...]:
    if isinstance(values, Mapping):
        unknown = set(values) - set(DIMENSIONS)
        if unknown:
            raise DimensionMismatch(f"{what}: unknown dimensions {sorted(unknown)}")
        return tuple(float(values.get(k, 0.0)) for k in DIMENSIONS)
    if len(values) != len(DIMENSIONS):
        raise DimensionMismatch(f"{what}: expected {len(DIMENSIONS)} values, got {len(values)}")
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class ArchitectureProfile:
    id: str
    weights: tuple[float, ...]
    bias: float = 0.0
    deviation: tuple[float, ...] = (0.0,) * len(DIMENSIONS)

    def __post_init__(self):
        if len(self.weights) != len(DIMENSIONS) or len(self.deviation) != len(DIMENSIONS):
            raise DimensionMismatch(f"profile {self.id} must have {len(DIMENSIONS)} weights and deviations")

    @classmethod
    def from_dict(cls, arch: str, data: Mapping) -> ArchitectureProfile:
        return cls(
            arch,
            _vector(data.get("weights", {}), f"{arch} weights"),
            float(data.get("bias", 0.0)),
            _vector(data.get("deviation", {}), f"{arch} deviation"),
        )

    def to_dict(self) -> dict:
        return {
            "weights": dict(zip(DIMENSIONS, self.weights)),
            "bias": self.bias,
            "deviation": dict(zip(DIMENSIONS, self.deviation)),
        }


def default_profiles() -> dict[str, ArchitectureProfile]:
    return {
        a: ArchitectureProfile(a, _vector(_DEFAULT_WEIGHTS[a], a), 0.0, _vector(_DEFAULT_DEVIATIONS[a], a))
        for a in ARCHITECTURES
    }


def load_profiles(path: str | Path) -> dict[str, ArchitectureProfile]:
    """Profiles from JSON ``{"STS": {"weights": {...}, "bias": 0, "deviation": {...}}, ...}``.

    Architectures missing from the file keep their defaults.
    """
    data = json.loads(Path(path).read_text())
    data = data.get("profiles", data)
    profiles = default_profiles()
    for arch, entry in data.items():
        if arch not in ARCHITECTURES:
            raise DimensionMismatch(f"unknown architecture {arch!r}")
        profiles[arch] = ArchitectureProfile.from_dict(arch, entry)
    return profiles


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def predict(sf_normalized: FeatureVector | Sequence[float], arch: ArchitectureProfile) -> float:
    """Logistic citation probability of a normalized feature vector."""
    values = sf_normalized.as_list() if isinstance(sf_normalized, FeatureVector) else list(sf_normalized)
    if len(values) != len(arch.weights):
        raise DimensionMismatch(f"vector has {len(values)} dimensions, profile {len(arch.weights)}")
    z = math.fsum(w * x for w, x in zip(arch.weights, values)) + arch.bias
    return _sigmoid(z)


def validate_alpha(alpha: Mapping[str, float]) -> dict[str, float]:
    unknown = set(alpha) - set(ARCHITECTURES)
    if unknown:
        raise BadAlpha(f"unknown architectures {sorted(unknown)}")
    if any(not math.isfinite(v) or v < 0 for v in alpha.values()):
        raise BadAlpha("alpha weights must be finite and non-negative")
    if abs(math.fsum(alpha.values()) - 1.0) > ALPHA_TOLERANCE:
        raise BadAlpha(f"alpha must sum to 1, got {math.fsum(alpha.values())}")
    return {a: float(alpha.get(a, 0.0)) for a in ARCHITECTURES}


def parse_arch_weights(text: str) -> dict[str, float]:
    """``"STS=0.4,IR=0.3,ISG=0.3"`` to a validated mix; omitted keys are 0."""
    mix: dict[str, float] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise BadAlpha(f"expected KEY=VALUE, got {part!r}")
        try:
            mix[key.strip().upper()] = float(value)
        except ValueError as exc:
            raise BadAlpha(f"bad weight {value!r} for {key}") from exc
    return validate_alpha(mix)


UNIFORM_ALPHA = {a: 1.0 / 3.0 for a in ARCHITECTURES}


@dataclass(frozen=True)
class TargetProfile:
    """Per-dimension targets in raw feature units, with feasibility bounds.

    ``target`` is ``sf_base`` shifted by the alpha-weighted architecture
    deviations (clamped to the bounds unless built with ``clamp=False``).
    Dimensions no principle constrains are unbounded (``±inf``) unless
    corpus statistics supply mean ± 3 std.
    """

    sf_base: tuple[float, ...]
    sf_min: tuple[float, ...]
    sf_max: tuple[float, ...]
    target: tuple[float, ...]
    alpha: dict[str, float] = field(default_factory=lambda: dict(UNIFORM_ALPHA))
    paragraph_length: float = PARAGRAPH_LENGTH[0]
    paragraph_min: float = PARAGRAPH_LENGTH[1]
    paragraph_max: float = PARAGRAPH_LENGTH[2]

    def value(self, dim: str) -> float:
        return self.target[DIMENSIONS.index(dim)]

    def bounds(self, dim: str) -> tuple[float, float]:
        i = DIMENSIONS.index(dim)
        return self.sf_min[i], self.sf_max[i]

    def to_dict(self) -> dict:
        def enc(vec):
            return {k: (v if math.isfinite(v) else None) for k, v in zip(DIMENSIONS, vec)}

        return {
            "sf_base": enc(self.sf_base),
            "sf_min": enc(self.sf_min),
            "sf_max": enc(self.sf_max),
            "target": enc(self.target),
            "alpha": dict(self.alpha),
            "paragraph_length": [self.paragraph_length, self.paragraph_min, self.paragraph_max],
        }


def compute_targets(
    alpha: Mapping[str, float] | None = None,
    profiles: Mapping[str, ArchitectureProfile] | None = None,
    stats: CorpusStats | None = None,
    *,
    overrides: Mapping | None = None,
    clamp: bool = True,
) -> TargetProfile:
    """Base principle targets plus the alpha-weighted architecture deviations.

    ``overrides`` may replace entries of ``sf_base``, ``sf_min`` and
    ``sf_max`` (maps of dimension to value) and ``paragraph_length``
    (``[target, min, max]``).
    """
    mix = validate_alpha(alpha if alpha is not None else UNIFORM_ALPHA)
    profiles = profiles or default_profiles()
    overrides = overrides or {}

    base, lo, hi = [], [], []
    for i, dim in enumerate(DIMENSIONS):
        if dim in PRINCIPLES:
            b, mn, mx = PRINCIPLES[dim]
        elif stats is not None and stats.n:
            m, s = stats.means[i], stats.stds[i]
            b, mn, mx = m, m - UNBOUNDED_SIGMAS * s, m + UNBOUNDED_SIGMAS * s
        else:
            b, mn, mx = 0.0, -math.inf, math.inf
        base.append(b)
        lo.append(mn)
        hi.append(mx)
    for key, vec in (("sf_base", base), ("sf_min", lo), ("sf_max", hi)):
        for dim, v in (overrides.get(key) or {}).items():
            if dim not in DIMENSIONS:
                raise DimensionMismatch(f"{key}: unknown dimension {dim!r}")
            vec[DIMENSIONS.index(dim)] = math.inf * (1 if key == "sf_max" else -1) if v is None else float(v)

    target = [
        b + math.fsum(mix[a] * profiles[a].deviation[i] for a in ARCHITECTURES) for i, b in enumerate(base)
    ]
    if clamp:
        target = [min(mx, max(mn, t)) for t, mn, mx in zip(target, lo, hi)]
    lp = overrides.get("paragraph_length") or PARAGRAPH_LENGTH
    return TargetProfile(
        tuple(base), tuple(lo), tuple(hi), tuple(target), mix, float(lp[0]), float(lp[1]), float(lp[2])
    )


def predict_mixed(
    sf_normalized: FeatureVector | Sequence[float],
    targets: TargetProfile | Mapping[str, float],
    profiles: Mapping[str, ArchitectureProfile] | None = None,
) -> float:
    """Alpha-weighted sum of per-architecture citation probabilities."""
    alpha = targets.alpha if isinstance(targets, TargetProfile) else targets
    mix = validate_alpha(alpha)
    profiles = profiles or default_profiles()
    return math.fsum(w * predict(sf_normalized, profiles[a]) for a, w in mix.items() if w)
