"""Plot-ready data files (and PNG renderings) from cached pipeline artifacts."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import io as dio
from . import plotting
from .errors import DependencyError
from .entanglement import PersistencyTable
from .fock import FockSpace, density_state, pure_state, tomography_subset

# export group -> stages it reads
EXPORTS = {
    "soliton": ("soliton",),
    "modulation": ("modulation",),
    "hamiltonian": ("hamiltonian",),
    "fig3": ("evolution", "analysis"),
    "snapshots": ("evolution",),
    "fig4": ("analysis",),
    "fig5": ("analysis",),
    "table1": ("analysis",),
}
# groups written when a single stage verb runs
STAGE_EXPORTS = {
    "soliton": ("soliton",),
    "modulation": ("modulation",),
    "hamiltonian": ("hamiltonian",),
    "evolution": ("snapshots",),
    "analysis": ("fig3", "fig4", "fig5", "table1"),
}


def _labels(occupations):
    return ["".join(str(int(n)) for n in occ) for occ in occupations]


def _snapshot_name(kind, t):
    # "p" for the decimal point keeps the stem free of extra suffixes
    return f"density_{kind}_t{t * 1e6:.3f}us".replace(".", "p")


def _pair_label(n_modes, traced):
    return "".join(str(k) for k in range(n_modes) if k != traced)


class Exporter:
    def __init__(self, pipe, out_dir, *, fmt="csv", matrix_format="text", figures=True):
        self.pipe = pipe
        self.out = Path(out_dir)
        self.fmt = fmt
        self.matrix_format = matrix_format
        self.figures = figures
        self.written = []

    def _art(self, stage):
        art = self.pipe.cached(stage)
        if art is None:
            raise DependencyError(stage, "export needs it")
        return art

    def _cols(self, name, columns):
        self.written.append(dio.write_columns(self.out / name, columns, self.fmt))

    def _json(self, name, doc):
        self.written.append(dio.write_json(self.out / name, doc))

    def _png(self, name, fig):
        if self.figures:
            self.written.append(plotting.save(fig, self.out / name))

    # -- groups --------------------------------------------------------

    def soliton(self):
        art = self._art("soliton")
        psi = art.arrays["envelope"]
        theta = 2 * np.pi * np.arange(psi.size) / psi.size
        self._cols("soliton", {"theta_rad": theta, "re": psi.real, "im": psi.imag, "intensity": np.abs(psi) ** 2})
        detuning = self.pipe.config.optics.detuning
        self._png("soliton.png", plotting.soliton_figure(theta, psi, 2 * detuning))

    def modulation(self):
        art = self._art("modulation")
        a = art.arrays
        t, L = a["times"], a["path_lengths"]
        self._cols("modulation_path_length", {"t_s": t, "L_m": L})
        self.written += dio.write_real_matrix(self.out / "modulation_index", a["index_profiles"], self.matrix_format, rows=t)
        theta = 2 * np.pi * np.arange(a["index_profiles"].shape[1]) / a["index_profiles"].shape[1]
        self._png("modulation.png", plotting.modulation_figure(t, L, a["index_profiles"], theta))

    def hamiltonian(self):
        art = self._art("hamiltonian")
        self._json("rwa_hamiltonian.json", art.metadata["rwa"])
        freqs = art.arrays["mode_freqs"]
        cols = {"t_s": art.arrays["times"]}
        cols.update({f"omega{k}_rad_per_s": freqs[k] for k in range(freqs.shape[0])})
        self._cols("mode_frequencies", cols)

    def _space(self, evo):
        return FockSpace(evo.metadata["n_modes"], evo.metadata["levels"])

    def fig3(self):
        evo = self._art("evolution")
        ana = self._art("analysis")
        a = evo.arrays
        space = self._space(evo)
        n = space.n_modes
        d = ana.metadata["display_levels"]
        for tag, tkey, nkey, topkey in (("pure", "pure_times", "pure_photons", "pure_top"),
                                        ("decay", "decay_times", "decay_photons", "decay_top")):
            cols = {"t_s": a[tkey]}
            cols.update({f"n{k}": a[nkey][:, k] for k in range(n)})
            cols.update({f"top{k}": a[topkey][:, k] for k in range(n)})
            if tag == "pure":
                cols["odd_parity"] = a["pure_odd"]
            self._cols(f"fig3_photons_{tag}", cols)
        it = int(np.argmin(np.abs(a["pure_times"] - ana.metadata["measurement_time_s"])))
        pure = tomography_subset(pure_state(a["pure_states"][it], space, float(a["pure_times"][it])), d)
        decay = tomography_subset(density_state(a["decay_snapshots"][-1], space), d)
        t_decay = float(a["decay_times"][a["decay_snapshot_index"][-1]])
        tomos = []
        for tag, sub, t in (("pure", pure, float(a["pure_times"][it])), ("decay", decay, t_decay)):
            self._cols(f"fig3_tomography_{tag}", dio.tomography_rows(sub))
            tomos.append((f"{tag}, t = {t * 1e6:.2f} us, mass {sub.probability_mass:.6f}", sub.matrix, _labels(sub.labels)))
        self._png("fig3.png", plotting.photon_figure(a["pure_times"], a["pure_photons"], a["decay_times"], a["decay_photons"], tomos))

    def snapshots(self):
        evo = self._art("evolution")
        a = evo.arrays
        space = self._space(evo)
        labels = _labels(space.occupation_table())
        for i in a["pure_snapshot_index"]:
            t = float(a["pure_times"][i])
            rho = np.outer(a["pure_states"][i], a["pure_states"][i].conj())
            name = _snapshot_name("pure", t)
            self.written.append(dio.write_complex_matrix(self.out / name, rho, labels=labels, time_s=t, kind="pure"))
        for rho, i in zip(a["decay_snapshots"], a["decay_snapshot_index"]):
            t = float(a["decay_times"][i])
            name = _snapshot_name("decay", t)
            self.written.append(dio.write_complex_matrix(
                self.out / name, rho, labels=labels, time_s=t, kind="decay",
                decay_rate_per_s=evo.metadata["decay_rate_per_s"],
            ))

    def fig4(self):
        ana = self._art("analysis")
        a = ana.arrays
        n = a["reduced"].shape[1]
        cols = {"t_s": a["times"], "C3" if n == 3 else f"C{n}": a["full"]}
        pairs = [_pair_label(n, k) for k in range(n)]
        cols.update({f"C2_{pairs[k]}" if n == 3 else f"reduced_without_{k}": a["reduced"][:, k] for k in range(n)})
        self._cols("fig4_concurrence", cols)
        self._png("fig4.png", plotting.concurrence_figure(a["times"], a["full"], a["reduced"], pairs))

    def fig5(self):
        ana = self._art("analysis")
        a, m = ana.arrays, ana.metadata
        levels = self.pipe.config.quantum.levels
        d = m["display_levels"]
        records, doc_rows = [], []
        rest = a["reduced"].shape[1] - 1
        labels = _labels(np.array(np.unravel_index(np.arange(d**rest), (d,) * rest)).T) if rest else []
        for i, mode in enumerate(m["measured_modes"]):
            for j, kind in enumerate(m["projection_kinds"]):
                p = float(a["projection_probabilities"][i, j])
                c = a["projection_concurrence"][i, j]
                possible = not np.isnan(c)
                block = a["projection_tomography"][i, j] if possible else None
                records.append({"mode": mode, "kind": kind, "probability": p,
                                "concurrence": float(c) if possible else np.nan, "block": block, "labels": labels})
                row = {"mode": mode, "outcome": kind, "probability": p,
                       "remaining_concurrence": float(c) if possible else None, "possible": possible}
                if possible:
                    row["tomography"] = dio.complex_matrix_doc(block, labels=[tuple(l) for l in labels])
                doc_rows.append(row)
        self._json("fig5_projections.json", {
            "format": "dcesim.projections/1",
            "time_s": m["measurement_time_s"],
            "levels": levels,
            "display_levels": d,
            "outcomes": doc_rows,
        })
        self._png("fig5.png", plotting.projection_figure(records))

    def table1(self):
        ana = self._art("analysis")
        a, m = ana.arrays, ana.metadata
        table = PersistencyTable(tuple(m["measured_modes"]), a["persistency_values"],
                                 a["persistency_probabilities"], m["measurement_time_s"])
        self._json("table1_persistency.json", table.to_dict())
        for name, grid in (("table1_values", table.values), ("table1_probabilities", table.probabilities)):
            cols = {"mode": np.array(table.modes)}
            cols.update({f"n{j}": grid[:, j] for j in range(grid.shape[1])})
            self._cols(name, cols)
        self._png("table1.png", plotting.persistency_figure(table.values, table.modes))

    def run(self, groups):
        self.out.mkdir(parents=True, exist_ok=True)
        for g in groups:
            if g not in EXPORTS:
                raise ValueError(f"unknown export {g!r}; choose from {sorted(EXPORTS)}")
            getattr(self, g)()
        return self.written


def export_figures(pipe, which, out_dir, *, fmt="csv", matrix_format="text", figures=True):
    """Write the data files for ``which`` (a group name, a list of them, or "all")."""
    if which == "all":
        groups = list(EXPORTS)
    elif isinstance(which, str):
        groups = [which]
    else:
        groups = list(which)
    return Exporter(pipe, out_dir, fmt=fmt, matrix_format=matrix_format, figures=figures).run(groups)

