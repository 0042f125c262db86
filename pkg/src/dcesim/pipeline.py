"""Staged pipeline: soliton -> modulation -> hamiltonian -> evolution -> analysis.

Every stage result is cached as an ``.npz`` array bundle plus a JSON
metadata file, both named by a stage hash.  The hash covers the config keys
the stage reads and the hash of the stage upstream of it, so changing any
upstream key invalidates everything downstream.
"""

from __future__ import annotations

import hashlib
import io as _io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as dio
from .config import ExperimentConfig, digest
from .entanglement import (
    concurrence,
    partial_trace,
    persistency_table,
    project_mode,
    remaining_concurrence,
)
from .errors import DependencyError, InvariantError
from .fock import (
    build_space,
    evolve_lindblad,
    evolve_pure,
    hamiltonian_matrix,
    mean_photon_numbers,
    odd_parity_probability,
    pure_state,
    top_level_occupation,
    uniform_decay,
    vacuum,
)
from .lle import (
    LleParams,
    ModulationProfile,
    PhysicalParams,
    SolitonField,
    find_steady_soliton,
    normalized_dispersion,
    sample_modulation_period,
    theta_grid,
)
from .mw_spectrum import (
    RWAHamiltonian,
    build_mode_basis,
    coupling_series,
    frequency_response_mismatch,
    rwa_hamiltonian,
)

log = logging.getLogger(__name__)

STAGES = ("soliton", "modulation", "hamiltonian", "evolution", "analysis")
CACHE_VERSION = 1

# config keys read by each stage (section, key)
_LLE_KEYS = ("pump_strength_sq", "detuning", "dispersion_d2_mhz", "grid_points", "step",
             "steady_tolerance", "max_time", "split_order", "loaded_q", "pump_wavelength_nm")
STAGE_KEYS = {
    "soliton": {"optics": _LLE_KEYS},
    "modulation": {"optics": None, "mw": ("base_index", "time_samples")},
    "hamiltonian": {"mw": ("mode_harmonics", "doublet_selection", "basis_cutoff")},
    "evolution": {"quantum": None},
    "analysis": {"analysis": None},
}

TOLERANCES = {
    "power_balance": 1e-6,
    "peak_ratio_window": [0.85, 1.15],
    "half_period_deviation": 1e-10,
    "path_length_consistency": 1e-12,
    "orthonormality": 1e-10,
    "hermiticity": 1e-10,
    "coupling_structure": 1e-12,
    "frequency_response": 1e-2,
    "gauge_overlap": 0.99,
    "pure_norm": 1e-9,
    "odd_parity": 1e-10,
    "energy_drift": 1e-9,
    "density_trace": 1e-8,
    "density_hermiticity": 1e-10,
    "density_positivity": 1e-8,
    "decay_ordering": 1e-12,
    "persistency_probability": 1e-6,
}


# ----------------------------------------------------------------------------
# checks


@dataclass(frozen=True)
class Check:
    """One invariant check.  ``severity`` is "error" (aborts) or "warn"."""

    name: str
    value: float
    limit: object
    passed: bool
    severity: str = "error"

    def to_dict(self):
        v = self.value
        return {
            "name": self.name,
            "value": None if v is None or (isinstance(v, float) and np.isnan(v)) else v,
            "limit": self.limit,
            "passed": bool(self.passed),
            "severity": self.severity,
        }


def _below(name, value, limit, severity="error"):
    value = float(value)
    return Check(name, value, limit, bool(value < limit), severity)


# ----------------------------------------------------------------------------
# artifacts


@dataclass(frozen=True, eq=False)
class PipelineArtifact:
    """A cached stage result."""

    stage: str
    config_hash: str
    payload_path: Path
    metadata: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict, repr=False)

    @property
    def checks(self):
        return [Check(**c) for c in self.metadata.get("checks", [])]

    @property
    def failures(self):
        return [c.name for c in self.checks if c.severity == "error" and not c.passed]

    @property
    def warnings(self):
        return [c.name for c in self.checks if c.severity == "warn" and not c.passed]

    @property
    def payload_digest(self):
        return self.metadata["payload_digest"]


def arrays_digest(arrays):
    """sha256 over array names, dtypes, shapes and raw bytes (independent of the zip container)."""
    h = hashlib.sha256()
    for key in sorted(arrays):
        a = np.ascontiguousarray(arrays[key])
        h.update(key.encode())
        h.update(str(a.dtype.str).encode())
        h.update(repr(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def _save_npz(path, arrays):
    buf = _io.BytesIO()
    np.savez(buf, **arrays)
    dio.atomic_write(path, buf.getvalue())


def stage_hash(config, stage):
    """Hash of the keys ``stage`` reads, chained with the upstream stage hash."""
    i = STAGES.index(stage)
    upstream = stage_hash(config, STAGES[i - 1]) if i else None
    doc = config.to_dict()
    keys = {}
    for section, names in STAGE_KEYS[stage].items():
        sec = doc[section]
        keys[section] = sec if names is None else {k: sec[k] for k in names}
    return digest({"stage": stage, "upstream": upstream, "keys": keys, "cache_version": CACHE_VERSION})


# ----------------------------------------------------------------------------
# stage builders (config -> domain objects)


def lle_params(config):
    o = config.optics
    d2 = normalized_dispersion(o.dispersion_d2_mhz * 1e6, o.loaded_q, o.pump_wavelength_nm * 1e-9)
    return LleParams(o.pump_strength_sq, o.detuning, d2, o.grid_points, o.step)


def physical_params(config):
    o = config.optics
    mask = None
    if o.mask == "half_ring":
        # overlap confined to the half of the ring centred on theta = 0
        mask = (np.cos(theta_grid(o.grid_points)) > 0).astype(float)
    return PhysicalParams(
        ring_radius=o.ring_radius_um * 1e-6,
        base_index=o.base_index,
        group_index=o.group_index,
        pump_wavelength=o.pump_wavelength_nm * 1e-9,
        nonlinear_index=o.nonlinear_index_m2_per_w,
        loaded_q=o.loaded_q,
        overlap=o.overlap,
        mask=mask,
        coupling_boost=o.coupling_boost,
    )


def pure_times(config):
    q = config.quantum
    return np.linspace(0.0, q.pure_window_us * 1e-6, q.pure_samples)


def decay_times(config):
    q = config.quantum
    return np.linspace(0.0, q.decay_window_us * 1e-6, q.decay_samples)


def _nearest(times, t):
    return int(np.argmin(np.abs(times - t)))


def snapshot_indices(times, requested_us):
    """Grid indices nearest to the requested times that fall inside the window."""
    if not requested_us:
        return [len(times) - 1]
    out = sorted({_nearest(times, t * 1e-6) for t in requested_us if t * 1e-6 <= times[-1] * (1 + 1e-12)})
    return out or [len(times) - 1]


# ----------------------------------------------------------------------------
# stage computations: each returns (arrays, meta, checks)


def compute_soliton(config):
    o = config.optics
    params = lle_params(config)
    sol = find_steady_soliton(params, tol=o.steady_tolerance, max_time=o.max_time, order=o.split_order)
    power = sol.power()
    balance = abs(power - sol.pump_work()) / power
    lo, hi = TOLERANCES["peak_ratio_window"]
    checks = [
        _below("power_balance", balance, TOLERANCES["power_balance"]),
        Check("peak_ratio", sol.peak_ratio, [lo, hi], bool(lo <= sol.peak_ratio <= hi), "warn"),
    ]
    meta = {
        "dispersion_d2": params.dispersion,
        "peak_intensity": sol.peak_intensity,
        "peak_ratio": sol.peak_ratio,
        "residual": float(sol.residual),
        "power": power,
        "relaxation_time": sol.elapsed,
    }
    return {"envelope": sol.envelope}, meta, checks


def soliton_from(config, art):
    return SolitonField(art.arrays["envelope"], lle_params(config), art.metadata["residual"], True)


def compute_modulation(config, soliton):
    phys = physical_params(config)
    mod = sample_modulation_period(soliton, phys, config.mw.time_samples, config.mw.base_index)
    diag = mod.check()
    L = mod.path_lengths
    quarter = mod.n_samples // 4
    drop = float((L[0] - L[quarter]) / L.mean())
    checks = [
        _below("half_period_deviation", diag["half_period_deviation"], TOLERANCES["half_period_deviation"]),
        _below("path_length_consistency", diag["path_length_consistency"], TOLERANCES["path_length_consistency"]),
        Check("min_index_positive", diag["min_index"], 0.0, diag["min_index"] > 0),
        Check("path_length_quarter_drop", drop, 0.0, drop > 0, "warn"),
    ]
    meta = {
        "fundamental_rad_per_s": mod.fundamental_freq,
        "fsr_hz": phys.fsr,
        "radius_m": mod.radius,
        "coupling_boost": mod.coupling_boost,
        "relative_modulation_depth": float((L.max() - L.min()) / L.mean()),
        **diag,
    }
    arrays = {"times": mod.times, "index_profiles": mod.index_profiles, "path_lengths": mod.path_lengths}
    return arrays, meta, checks


def modulation_from(art):
    a, m = art.arrays, art.metadata
    return ModulationProfile(
        a["times"], a["index_profiles"], a["path_lengths"], m["fundamental_rad_per_s"], m["radius_m"], m["coupling_boost"]
    )


def compute_hamiltonian(config, modulation):
    mw = config.mw
    basis = build_mode_basis(modulation, mw.mode_harmonics, selection=mw.doublet_selection, cutoff=mw.basis_cutoff)
    coeffs = coupling_series(basis)
    h = rwa_hamiltonian(coeffs, modulation.fundamental_freq, mw.mode_harmonics)
    ortho = basis.orthonormality_deviation()
    mismatch = frequency_response_mismatch(modulation, 1, mw.basis_cutoff)
    checks = [
        _below("orthonormality", ortho, TOLERANCES["orthonormality"]),
        _below("rwa_hermiticity", h.hermiticity_deviation, TOLERANCES["hermiticity"]),
        _below("c_antisymmetry", coeffs.antisymmetry_deviation(), TOLERANCES["coupling_structure"]),
        _below("d_symmetry", coeffs.symmetry_deviation(), TOLERANCES["coupling_structure"]),
        _below("frequency_response", mismatch, TOLERANCES["frequency_response"]),
        Check("gauge_overlap", basis.min_overlap, TOLERANCES["gauge_overlap"],
              bool(basis.min_overlap > TOLERANCES["gauge_overlap"]), "warn"),
    ]
    h = RWAHamiltonian(
        h.beamsplitter, h.pair, h.mode_freqs, h.fundamental, h.harmonics, h.hermiticity_deviation, h.detuning,
        {"sector": basis.sector, "coupling_boost": modulation.coupling_boost,
         "selection_scores": {k: float(v) for k, v in basis.selection_scores.items()}},
    )
    meta = {
        "rwa": h.to_dict(),
        "orthonormality_deviation": ortho,
        "frequency_response_mismatch": mismatch,
        "min_gauge_overlap": float(basis.min_overlap),
    }
    arrays = {"times": basis.times, "mode_freqs": basis.freqs, "G": coeffs.G}
    return arrays, meta, checks


def hamiltonian_from(art):
    return RWAHamiltonian.from_dict(art.metadata["rwa"])


def compute_evolution(config, h):
    q = config.quantum
    space = build_space(len(h.harmonics) or h.n_modes, q.levels, max_dim=q.max_dim)
    H = hamiltonian_matrix(h, space)

    tp = pure_times(config)
    states = evolve_pure(H, vacuum(space), tp)
    psi = np.array([s.data for s in states])
    pure_n = np.array([mean_photon_numbers(s) for s in states])
    pure_top = np.array([top_level_occupation(s) for s in states])
    pure_odd = np.array([odd_parity_probability(s) for s in states])
    energy = np.real(np.sum(psi.conj() * (psi @ H.T), axis=1))
    h_scale = max(np.linalg.norm(H), 1e-300)
    norm_dev = np.abs(np.linalg.norm(psi, axis=1) - 1.0).max()

    td = decay_times(config)
    snaps = snapshot_indices(td, q.snapshot_times_us)
    channels = uniform_decay(space.n_modes, q.decay_rate_per_s)
    decay_n, decay_top, decay_snap = [], [], []
    trace_dev = herm_dev = 0.0
    min_eig = np.inf
    eig_every = max(1, len(td) // 10)
    for i, rho in enumerate(evolve_lindblad(H, channels, vacuum(space, kind="density"), td, rtol=q.rtol, atol=q.atol)):
        m = rho.data
        decay_n.append(mean_photon_numbers(rho))
        decay_top.append(top_level_occupation(rho))
        trace_dev = max(trace_dev, abs(np.trace(m) - 1.0))
        herm_dev = max(herm_dev, np.abs(m - m.conj().T).max())
        if i % eig_every == 0 or i == len(td) - 1:
            min_eig = min(min_eig, np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
        if i in snaps:
            decay_snap.append(m.copy())
    decay_n = np.array(decay_n)

    # compare the two runs on the shared time samples
    match = [(i, j) for i, t in enumerate(td) for j in [_nearest(tp, t)] if abs(tp[j] - t) <= 1e-9 * max(t, 1e-12)]
    excess = max((np.max(decay_n[i] - pure_n[j]) for i, j in match), default=0.0)
    top = max(pure_top.max(), np.max(decay_top))
    checks = [
        _below("pure_norm", norm_dev, TOLERANCES["pure_norm"]),
        _below("odd_parity", pure_odd.max(), TOLERANCES["odd_parity"]),
        _below("energy_drift", np.abs(energy - energy[0]).max() / h_scale, TOLERANCES["energy_drift"]),
        _below("density_trace", trace_dev, TOLERANCES["density_trace"]),
        _below("density_hermiticity", herm_dev, TOLERANCES["density_hermiticity"]),
        Check("density_positivity", float(min_eig), -TOLERANCES["density_positivity"],
              bool(min_eig >= -TOLERANCES["density_positivity"])),
        _below("truncation", top, q.truncation_threshold, "warn"),
        _below("decay_below_pure", excess, TOLERANCES["decay_ordering"], "warn"),
    ]
    pure_snaps = snapshot_indices(tp, q.snapshot_times_us)
    arrays = {
        "pure_times": tp,
        "pure_states": psi,
        "pure_photons": pure_n,
        "pure_top": pure_top,
        "pure_odd": pure_odd,
        "pure_snapshot_index": np.array(pure_snaps),
        "decay_times": td,
        "decay_photons": decay_n,
        "decay_top": np.array(decay_top),
        "decay_snapshot_index": np.array(snaps),
        "decay_snapshots": np.array(decay_snap),
    }
    meta = {
        "dim": space.dim,
        "levels": space.levels,
        "n_modes": space.n_modes,
        "decay_rate_per_s": q.decay_rate_per_s,
        "max_top_level": float(top),
        "max_odd_parity": float(pure_odd.max()),
        "final_pure_photons": [float(x) for x in pure_n[-1]],
        "final_decay_photons": [float(x) for x in decay_n[-1]],
    }
    return arrays, meta, checks


def compute_analysis(config, evo):
    a = config.analysis
    space = build_space(evo.metadata["n_modes"], evo.metadata["levels"], max_dim=config.quantum.max_dim)
    times = evo.arrays["pure_times"]
    psi = evo.arrays["pure_states"]
    n = space.n_modes
    full = np.empty(len(times))
    reduced = np.zeros((len(times), n))
    for i, t in enumerate(times):
        rep = concurrence(pure_state(psi[i], space, float(t)))
        full[i] = rep.full
        for k, v in rep.reduced.items():
            reduced[i, k] = v

    it = _nearest(times, a.measurement_time_us * 1e-6)
    state = pure_state(psi[it], space, float(times[it]))
    table = persistency_table(state, a.measured_modes, a.max_fock)

    d = a.display_levels
    kinds = ("zero", "nonzero")
    proj_prob = np.zeros((len(a.measured_modes), 2))
    proj_conc = np.full((len(a.measured_modes), 2), np.nan)
    block = d ** (n - 1)
    proj_tomo = np.zeros((len(a.measured_modes), 2, block, block), complex)
    for i, mode in enumerate(a.measured_modes):
        rest = [k for k in range(n) if k != mode]
        occ = np.array(np.unravel_index(np.arange(space.levels ** len(rest)), (space.levels,) * len(rest))).T
        keep = np.flatnonzero((occ < d).all(axis=1))
        for j, kind in enumerate(kinds):
            out = project_mode(state, mode, kind)
            proj_prob[i, j] = out.probability
            if out.possible and rest:
                proj_conc[i, j] = remaining_concurrence(out)
                rho = partial_trace(out.collapsed, rest)
                proj_tomo[i, j] = rho[np.ix_(keep, keep)]

    bound = 2.0 ** (1 - n / 2) * np.sqrt(2.0**n - 2) if n > 1 else 0.0
    floor = TOLERANCES["persistency_probability"]
    likely = table.probabilities > floor
    nonpersistent = int(np.sum(likely & ~(np.nan_to_num(table.values) > 0)))
    checks = [
        Check("concurrence_range", float(full.max()), float(bound), bool(full.min() >= 0 and full.max() <= bound + 1e-12)),
        Check("concurrence_initial", float(full[0]), 1e-10, bool(abs(full[0]) < 1e-10), "warn"),
        _below("concurrence_dominates_pairs", float(max(0.0, (reduced.max(axis=1) - full).max())), 1e-12, "warn"),
        Check("persistency", float(nonpersistent), 0, nonpersistent == 0, "warn"),
    ]
    arrays = {
        "times": times,
        "full": full,
        "reduced": reduced,
        "persistency_values": table.values,
        "persistency_probabilities": table.probabilities,
        "projection_probabilities": proj_prob,
        "projection_concurrence": proj_conc,
        "projection_tomography": proj_tomo,
    }
    meta = {
        "measurement_time_s": float(times[it]),
        "measured_modes": [int(m) for m in a.measured_modes],
        "projection_kinds": list(kinds),
        "display_levels": d,
        "final_concurrence": float(full[-1]),
        "final_reduced": [float(x) for x in reduced[-1]],
    }
    return arrays, meta, checks


# ----------------------------------------------------------------------------
# runner


class Pipeline:
    """Runs stages against a cache directory.

    ``force`` recomputes every stage that is run.  With ``abort`` set, an
    error-level check failure raises :class:`InvariantError` (the artifact
    is still cached so its diagnostics can be inspected).
    """

    def __init__(self, config=None, cache_dir=None, *, force=False, abort=None):
        self.config = config or ExperimentConfig()
        self.cache_dir = Path(cache_dir or self.config.io.cache_dir)
        self.force = force
        self.abort = self.config.io.abort_on_invariant_failure if abort is None else abort
        self.computed = []
        self.reused = []
        self._loaded = {}

    def hash(self, stage):
        return stage_hash(self.config, stage)

    def _paths(self, stage):
        stem = f"{stage}-{self.hash(stage)[:20]}"
        return self.cache_dir / f"{stem}.npz", self.cache_dir / f"{stem}.json"

    def cached(self, stage):
        """Load a cached artifact or return None."""
        if stage in self._loaded:
            return self._loaded[stage]
        npz, meta_path = self._paths(stage)
        if not (npz.exists() and meta_path.exists()):
            return None
        meta = json.loads(meta_path.read_text())
        if meta.get("config_hash") != self.hash(stage):
            return None
        with np.load(npz) as data:
            arrays = {k: data[k] for k in data.files}
        if arrays_digest(arrays) != meta.get("payload_digest"):
            log.warning("cached %s artifact is corrupt; recomputing", stage)
            return None
        art = PipelineArtifact(stage, meta["config_hash"], npz, meta, arrays)
        self._loaded[stage] = art
        return art

    def require(self, stage):
        art = self.cached(stage)
        if art is None:
            raise DependencyError(stage, f"no cached artifact with hash {self.hash(stage)[:12]} in {self.cache_dir}")
        return art

    def _compute(self, stage):
        cfg = self.config
        if stage == "soliton":
            return compute_soliton(cfg)
        if stage == "modulation":
            return compute_modulation(cfg, soliton_from(cfg, self.require("soliton")))
        if stage == "hamiltonian":
            return compute_hamiltonian(cfg, modulation_from(self.require("modulation")))
        if stage == "evolution":
            return compute_evolution(cfg, hamiltonian_from(self.require("hamiltonian")))
        if stage == "analysis":
            return compute_analysis(cfg, self.require("evolution"))
        raise ValueError(f"unknown stage {stage!r}")

    def run_stage(self, stage):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        art = None if self.force else self.cached(stage)
        if art is not None:
            self.reused.append(stage)
            log.info("%s: cache hit %s", stage, art.config_hash[:12])
        else:
            start = time.perf_counter()
            try:
                arrays, meta, checks = self._compute(stage)
            except Exception as exc:
                # the CLI reports the failing stage alongside the message
                if not hasattr(exc, "stage"):
                    exc.stage = stage
                raise
            npz, meta_path = self._paths(stage)
            meta = {
                "stage": stage,
                "config_hash": self.hash(stage),
                "upstream_hash": self.hash(STAGES[STAGES.index(stage) - 1]) if STAGES.index(stage) else None,
                "package_version": __version__,
                "payload_digest": arrays_digest(arrays),
                **meta,
                "checks": [c.to_dict() for c in checks],
            }
            _save_npz(npz, arrays)
            dio.write_json(meta_path, meta)
            art = PipelineArtifact(stage, meta["config_hash"], npz, meta, arrays)
            self._loaded[stage] = art
            self.computed.append(stage)
            log.info("%s: computed in %.1f s", stage, time.perf_counter() - start)
        for name in art.warnings:
            log.warning("%s: check %r outside its tolerance", stage, name)
        if art.failures and self.abort:
            raise InvariantError(stage, art.failures)
        return art

    def run(self, stages=STAGES):
        return {s: self.run_stage(s) for s in stages}

    def artifacts(self):
        """All cached artifacts for the current config (missing stages omitted)."""
        return {s: a for s in STAGES if (a := self.cached(s)) is not None}


def run_pipeline(config=None, cache_dir=None, *, force=False, abort=None):
    """Run every stage, reusing cached artifacts whose hash matches."""
    pipe = Pipeline(config, cache_dir, force=force, abort=abort)
    pipe.run()
    return pipe


# ----------------------------------------------------------------------------
# manifest


def build_manifest(pipe, files, out_dir):
    out_dir = Path(out_dir)
    stages = {}
    for stage, art in pipe.artifacts().items():
        stages[stage] = {
            "hash": art.config_hash,
            "payload_digest": art.payload_digest,
            "checks": art.metadata.get("checks", []),
        }
    listed = []
    for f in sorted({Path(f) for f in files}):
        listed.append({"path": f.relative_to(out_dir).as_posix(), "sha256": dio.file_digest(f)})
    return {
        "format": "dcesim.manifest/1",
        "package_version": __version__,
        "config_hash": pipe.config.config_hash,
        # io settings (paths, formats) do not affect results and are left out
        # so that runs into different directories give identical manifests
        "config": {k: v for k, v in pipe.config.to_dict().items() if k != "io"},
        "tolerances": TOLERANCES,
        "stages": stages,
        "files": listed,
    }


def write_manifest(pipe, files, out_dir):
    path = Path(out_dir) / "manifest.json"
    doc = build_manifest(pipe, files, out_dir)
    # merge with entries from earlier exports into the same directory
    if path.exists():
        try:
            old = json.loads(path.read_text())
        except json.JSONDecodeError:
            old = {}
        if old.get("config_hash") == doc["config_hash"]:
            have = {f["path"] for f in doc["files"]}
            for f in old.get("files", []):
                p = Path(out_dir) / f["path"]
                if f["path"] not in have and p.exists():
                    doc["files"].append({"path": f["path"], "sha256": dio.file_digest(p)})
            doc["files"].sort(key=lambda f: f["path"])
    return dio.write_json(path, doc)
