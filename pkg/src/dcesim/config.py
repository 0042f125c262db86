"""Experiment configuration: a YAML document whose key names carry their units."""

from __future__ import annotations

import dataclasses
import difflib
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError


@dataclass(frozen=True)
class OpticsConfig:
    pump_strength_sq: float = 4.1
    detuning: float = 3.2
    dispersion_d2_mhz: float = 1.5246
    grid_points: int = 1024
    step: float = 1.0e-3
    steady_tolerance: float = 1.0e-8
    max_time: float = 1000.0
    split_order: int = 4
    ring_radius_um: float = 200.0
    base_index: float = 1.9
    group_index: float = 2.1
    pump_wavelength_nm: float = 1550.0
    nonlinear_index_m2_per_w: float = 2.4e-19
    loaded_q: float = 5.0e5
    overlap: float = 0.1
    mask: str = "uniform"
    coupling_boost: float = 1.0


@dataclass(frozen=True)
class MwConfig:
    base_index: float = 2.1
    mode_harmonics: tuple = (1, 2, 3)
    time_samples: int = 256
    doublet_selection: str = "driving"
    basis_cutoff: int = 64

    @property
    def n_modes(self):
        return len(self.mode_harmonics)


@dataclass(frozen=True)
class QuantumConfig:
    levels: int = 9
    decay_rate_per_s: float = 1.0e5
    pure_window_us: float = 5.0
    pure_samples: int = 501
    decay_window_us: float = 3.0
    decay_samples: int = 301
    rtol: float = 1.0e-8
    atol: float = 1.0e-10
    max_dim: int = 20000
    truncation_threshold: float = 1.0e-4
    snapshot_times_us: tuple = ()


@dataclass(frozen=True)
class AnalysisConfig:
    measured_modes: tuple = (0, 1, 2)
    measurement_time_us: float = 5.0
    max_fock: int = 8
    display_levels: int = 4


@dataclass(frozen=True)
class IoConfig:
    output_dir: str = "results"
    cache_dir: str = ".dcesim-cache"
    columnar_format: str = "csv"
    matrix_format: str = "text"
    figures: bool = True
    abort_on_invariant_failure: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    mw: MwConfig = field(default_factory=MwConfig)
    quantum: QuantumConfig = field(default_factory=QuantumConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    io: IoConfig = field(default_factory=IoConfig)

    def to_dict(self):
        return _jsonable(dataclasses.asdict(self))

    @property
    def config_hash(self):
        """Digest of every scientific setting (the io section is excluded)."""
        doc = self.to_dict()
        doc.pop("io")
        return digest(doc)


SECTIONS = {
    "optics": OpticsConfig,
    "mw": MwConfig,
    "quantum": QuantumConfig,
    "analysis": AnalysisConfig,
    "io": IoConfig,
}

_POSITIVE = {
    "optics": ["pump_strength_sq", "dispersion_d2_mhz", "step", "steady_tolerance", "max_time",
               "ring_radius_um", "base_index", "group_index", "pump_wavelength_nm",
               "nonlinear_index_m2_per_w", "loaded_q", "coupling_boost"],
    "mw": ["base_index"],
    "quantum": ["pure_window_us", "decay_window_us", "rtol", "atol", "truncation_threshold"],
}

_CHOICES = {
    ("optics", "mask"): ("uniform", "half_ring"),
    ("optics", "split_order"): (2, 4),
    ("mw", "doublet_selection"): ("driving", "symmetric"),
    ("io", "columnar_format"): ("csv", "json"),
    ("io", "matrix_format"): ("text", "binary"),
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def digest(obj):
    """sha256 over canonical JSON."""
    text = json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _qualified_keys():
    return {f.name: section for section, cls in SECTIONS.items() for f in dataclasses.fields(cls)}


def _suggest(key, options, *, global_keys=False):
    """Nearest valid name, else a key of the same spelling in another section, else the full list."""
    close = difflib.get_close_matches(str(key), list(options), n=1, cutoff=0.6)
    if close:
        return f" (did you mean {close[0]!r}?)"
    if global_keys:
        everywhere = _qualified_keys()
        close = difflib.get_close_matches(str(key), list(everywhere), n=1, cutoff=0.8)
        if close:
            return f" (did you mean {everywhere[close[0]]}.{close[0]}?)"
    return f" (valid: {', '.join(sorted(options))})"


def _coerce(section, name, default, value, problems):
    where = f"{section}.{name}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{where}: expected true/false, got {value!r}")
            return default
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            problems.append(f"{where}: expected an integer, got {value!r}")
            return default
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}: expected a number, got {value!r}")
            return default
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            problems.append(f"{where}: expected a string, got {value!r}")
            return default
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            problems.append(f"{where}: expected a list, got {value!r}")
            return default
        bad = [v for v in value if isinstance(v, bool) or not isinstance(v, (int, float))]
        if bad:
            problems.append(f"{where}: list entries must be numbers, got {bad!r}")
            return default
        return tuple(value)
    return value


def _range_checks(cfg, problems):
    for section, names in _POSITIVE.items():
        obj = getattr(cfg, section)
        for name in names:
            if not getattr(obj, name) > 0:
                problems.append(f"{section}.{name}: must be positive, got {getattr(obj, name)!r}")
    for (section, name), options in _CHOICES.items():
        value = getattr(getattr(cfg, section), name)
        if value not in options:
            problems.append(f"{section}.{name}: must be one of {list(options)}, got {value!r}")
    o, mw, q, a = cfg.optics, cfg.mw, cfg.quantum, cfg.analysis
    n = o.grid_points
    if n < 256 or n & (n - 1):
        problems.append(f"optics.grid_points: must be a power of two >= 256, got {n}")
    if not 0.0 <= o.overlap <= 1.0:
        problems.append(f"optics.overlap: must lie in [0, 1], got {o.overlap}")
    if mw.time_samples < 64 or mw.time_samples % 4:
        problems.append(f"mw.time_samples: must be a multiple of 4 and >= 64, got {mw.time_samples}")
    if not mw.mode_harmonics or any(int(h) != h or h < 1 for h in mw.mode_harmonics):
        problems.append(f"mw.mode_harmonics: must be positive integers, got {list(mw.mode_harmonics)}")
    elif len(set(mw.mode_harmonics)) != len(mw.mode_harmonics):
        problems.append("mw.mode_harmonics: entries must be distinct")
    if mw.basis_cutoff < 4:
        problems.append(f"mw.basis_cutoff: must be >= 4, got {mw.basis_cutoff}")
    if q.levels < 2:
        problems.append(f"quantum.levels: must be >= 2, got {q.levels}")
    if q.decay_rate_per_s < 0:
        problems.append(f"quantum.decay_rate_per_s: must be non-negative, got {q.decay_rate_per_s}")
    for name in ("pure_samples", "decay_samples"):
        if getattr(q, name) < 2:
            problems.append(f"quantum.{name}: must be >= 2")
    if any(t < 0 for t in q.snapshot_times_us):
        problems.append("quantum.snapshot_times_us: times must be non-negative")
    n_modes = len(mw.mode_harmonics)
    if not 0 <= a.measurement_time_us <= q.pure_window_us:
        problems.append(
            f"analysis.measurement_time_us: must lie in [0, quantum.pure_window_us], got {a.measurement_time_us}"
        )
    if any(int(m) != m or not 0 <= m < n_modes for m in a.measured_modes):
        problems.append(f"analysis.measured_modes: must be mode indices below {n_modes}")
    if not 0 <= a.max_fock < q.levels:
        problems.append(f"analysis.max_fock: must lie in [0, levels - 1], got {a.max_fock}")
    if not 1 <= a.display_levels <= q.levels:
        problems.append(f"analysis.display_levels: must lie in [1, levels], got {a.display_levels}")


def config_from_mapping(doc):
    problems = []
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(["top level must be a mapping of sections"])
    sections = {}
    for key in doc:
        if key not in SECTIONS:
            problems.append(f"unknown section {key!r}{_suggest(key, SECTIONS)}")
    for section, cls in SECTIONS.items():
        raw = doc.get(section) or {}
        if not isinstance(raw, dict):
            problems.append(f"{section}: expected a mapping")
            raw = {}
        defaults = cls()
        names = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for key, value in raw.items():
            if key not in names:
                problems.append(f"unknown key {section}.{key}{_suggest(key, names, global_keys=True)}")
                continue
            values[key] = _coerce(section, key, getattr(defaults, key), value, problems)
        sections[section] = cls(**values)
    cfg = ExperimentConfig(**sections)
    _range_checks(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def validate_config(raw_text):
    """Parse YAML text into an :class:`ExperimentConfig`, reporting every problem at once."""
    try:
        doc = yaml.safe_load(raw_text) if raw_text and raw_text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"YAML syntax error: {exc}"]) from exc
    return config_from_mapping(doc)


def load_config(path=None):
    if path is None:
        return ExperimentConfig()
    with open(path, encoding="utf-8") as fh:
        return validate_config(fh.read())


def dump_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def with_overrides(cfg, **sections):
    """Copy of ``cfg`` with per-section field overrides, e.g. ``optics={"overlap": 0}``."""
    doc = cfg.to_dict()
    for section, updates in sections.items():
        doc[section].update(updates)
    return config_from_mapping(doc)
