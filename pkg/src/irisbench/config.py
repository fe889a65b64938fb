"""Layered configuration: documented defaults, overridden by a flat
key-value config file (`section.key = value`, '#' comments), overridden by
command-line `--set` pairs. Unknown keys are rejected before anything runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .encoding import LogGaborParams
from .errors import ConfigError
from .segmentation import SegmentationConfig
from .spoofsim import CHAIN_PRESETS, RECAPTURE_PRESETS, EyeDistribution, RecaptureParams


@dataclass(frozen=True)
class AppConfig:
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    radial_res: int = 20
    angular_res: int = 240
    gabor: LogGaborParams = field(default_factory=LogGaborParams)
    shift_budget: int = 8
    recapture: RecaptureParams = field(default_factory=RecaptureParams)
    chain: str = "none"
    distribution: EyeDistribution = field(default_factory=EyeDistribution)
    protocol_seed: int = 0
    far_targets: tuple[float, ...] = (0.1, 1.0, 2.0, 5.0)
    jobs: int = 1


def _float(s: str) -> float:
    return float(s)


def _int(s: str) -> int:
    if not s.lstrip("+-").isdigit():
        raise ValueError(f"not an integer: {s!r}")
    return int(s)


def _chain_name(s: str) -> str:
    if s not in CHAIN_PRESETS:
        raise ValueError(f"unknown chain preset {s!r} (have: {', '.join(sorted(CHAIN_PRESETS))})")
    return s


def _recapture_name(s: str) -> str:
    if s not in RECAPTURE_PRESETS:
        raise ValueError(
            f"unknown recapture preset {s!r} (have: {', '.join(sorted(RECAPTURE_PRESETS))})"
        )
    return s


def _far_targets(s: str) -> tuple[float, ...]:
    vals = tuple(float(part) for part in s.split(",") if part.strip())
    if not vals or any(not 0 <= v <= 100 for v in vals):
        raise ValueError("far targets must be percentages in [0, 100]")
    return vals


# key -> (caster, (sub-config attr, field name) or top-level field name)
_SCHEMA: dict[str, tuple] = {
    "segmentation.canny_sigma": (_float, ("segmentation", "canny_sigma")),
    "segmentation.canny_low": (_float, ("segmentation", "canny_low")),
    "segmentation.canny_high": (_float, ("segmentation", "canny_high")),
    "segmentation.pupil_r_min": (_int, ("segmentation", "pupil_r_min")),
    "segmentation.pupil_r_max": (_int, ("segmentation", "pupil_r_max")),
    "segmentation.iris_r_min": (_int, ("segmentation", "iris_r_min")),
    "segmentation.iris_r_max": (_int, ("segmentation", "iris_r_max")),
    "segmentation.min_peak": (_float, ("segmentation", "min_peak")),
    "segmentation.min_line_frac": (_float, ("segmentation", "min_line_frac")),
    "normalization.radial_res": (_int, "radial_res"),
    "normalization.angular_res": (_int, "angular_res"),
    "encoding.wavelength": (_float, ("gabor", "wavelength")),
    "encoding.sigma_over_f": (_float, ("gabor", "sigma_over_f")),
    "encoding.min_amplitude": (_float, ("gabor", "min_amplitude")),
    "matching.shift_budget": (_int, "shift_budget"),
    "recapture.preset": (_recapture_name, None),  # handled first
    "recapture.dot_pitch": (_int, ("recapture", "dot_pitch")),
    "recapture.blur_sigma": (_float, ("recapture", "blur_sigma")),
    "recapture.contrast": (_float, ("recapture", "contrast")),
    "recapture.noise_sigma": (_float, ("recapture", "noise_sigma")),
    "synth.chain": (_chain_name, "chain"),
    "synth.width": (_int, ("distribution", "width")),
    "synth.height": (_int, ("distribution", "height")),
    "synth.iris_r_min": (_float, None),  # paired into a range below
    "synth.iris_r_max": (_float, None),
    "synth.eyelid_min": (_float, None),
    "synth.eyelid_max": (_float, None),
    "protocol.seed": (_int, "protocol_seed"),
    "protocol.far_targets": (_far_targets, "far_targets"),
    "protocol.jobs": (_int, "jobs"),
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat `key = value` lines into a dict; rejects malformed lines."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def build_config(overrides: dict[str, str]) -> AppConfig:
    """Apply overrides onto the defaults; every key is validated against the
    schema and the target dataclass invariants."""
    unknown = sorted(set(overrides) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    cfg = AppConfig()
    # preset first so explicit recapture.* keys override it
    if "recapture.preset" in overrides:
        name = _recapture_name(overrides["recapture.preset"])
        cfg = replace(cfg, recapture=RECAPTURE_PRESETS[name])

    sub_updates: dict[str, dict] = {}
    top_updates: dict = {}
    range_keys: dict[str, float] = {}
    for key, raw in overrides.items():
        caster, target = _SCHEMA[key]
        try:
            value = caster(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        if key == "recapture.preset":
            continue
        if target is None:
            range_keys[key] = value
        elif isinstance(target, tuple):
            sub_updates.setdefault(target[0], {})[target[1]] = value
        else:
            top_updates[target] = value

    dist_updates = sub_updates.setdefault("distribution", {})
    if "synth.iris_r_min" in range_keys or "synth.iris_r_max" in range_keys:
        lo = range_keys.get("synth.iris_r_min", cfg.distribution.iris_r[0])
        hi = range_keys.get("synth.iris_r_max", cfg.distribution.iris_r[1])
        dist_updates["iris_r"] = (lo, hi)
    if "synth.eyelid_min" in range_keys or "synth.eyelid_max" in range_keys:
        lo = range_keys.get("synth.eyelid_min", cfg.distribution.eyelid_coverage[0])
        hi = range_keys.get("synth.eyelid_max", cfg.distribution.eyelid_coverage[1])
        dist_updates["eyelid_coverage"] = (lo, hi)

    try:
        for attr, updates in sub_updates.items():
            if updates:
                cfg = replace(cfg, **{attr: replace(getattr(cfg, attr), **updates)})
        if top_updates:
            cfg = replace(cfg, **top_updates)
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None

    if cfg.radial_res < 2 or cfg.angular_res < 8 or cfg.angular_res % 2:
        raise ConfigError("normalization needs radial_res >= 2 and even angular_res >= 8")
    if cfg.shift_budget < 0:
        raise ConfigError("matching.shift_budget must be >= 0")
    if cfg.jobs < 1:
        raise ConfigError("protocol.jobs must be >= 1")
    return cfg


def load_config(path: str | None, sets: list[str] = ()) -> AppConfig:
    """Config file (optional) + `key=value` override pairs -> AppConfig."""
    overrides: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        overrides.update(parse_config_text(text, source=str(path)))
    for pair in sets:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = (part.strip() for part in pair.split("=", 1))
        overrides[key] = value
    return build_config(overrides)
