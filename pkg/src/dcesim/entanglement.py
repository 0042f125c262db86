"""Purity-based multipartite concurrence, projective measurements and persistency.

For a pure N-partite state

    C_N = 2^(1 - N/2) * sqrt((2^N - 2) - sum_S Tr(rho_S^2)),

with S running over all proper non-empty subsets of the modes.  Reduced
("pairwise") values apply the same expression with N - 1 parties to the
marginal obtained by tracing one mode out.  For a mixed marginal this is a
purity-based indicator, not a convex-roof concurrence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import StateError
from .fock import FockSpace, QuantumState, pure_state

PROBABILITY_FLOOR = 1e-12


def proper_subsets(n_modes):
    """All proper, non-empty subsets of ``range(n_modes)`` as sorted tuples."""
    modes = range(n_modes)
    return [s for r in range(1, n_modes) for s in combinations(modes, r)]


def _check_partition(space, keep):
    keep = tuple(sorted(set(int(k) for k in keep)))
    if not keep or len(keep) >= space.n_modes or keep[0] < 0 or keep[-1] >= space.n_modes:
        raise ValueError(f"invalid subset {keep} for {space.n_modes} modes")
    return keep


def partial_trace(state, keep):
    """Density matrix of the modes in ``keep`` (ascending order)."""
    space = state.space
    keep = _check_partition(space, keep)
    n = space.n_modes
    rest = [k for k in range(n) if k not in keep]
    d_keep = space.levels ** len(keep)
    if state.is_pure:
        psi = state.data.reshape(space.shape).transpose(list(keep) + rest).reshape(d_keep, -1)
        return psi @ psi.conj().T
    rho = state.data.reshape(space.shape * 2)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[k] for k in range(n)]
    col = [letters[k] if k in rest else letters[n + k] for k in range(n)]
    out = [letters[k] for k in keep] + [letters[n + k] for k in keep]
    spec = "".join(row) + "".join(col) + "->" + "".join(out)
    return np.einsum(spec, rho).reshape(d_keep, d_keep)


def purity(rho):
    return float(np.real(np.vdot(rho, rho)))


def linear_entropy_from_weights(weights):
    """1 - sum(w^2)/sum(w)^2 for non-negative spectral weights, free of cancellation.

    Written as 2 sum_i w_i sum_{j>i} w_j / (sum w)^2 with the weights sorted in
    descending order, so a pure marginal gives a value at the rounding level
    of the small weights rather than of 1.
    """
    w = np.sort(np.clip(np.asarray(weights, dtype=float), 0.0, None))[::-1]
    total = w.sum()
    if total == 0:
        return 0.0
    tails = np.cumsum(w[::-1])[::-1]
    cross = np.sum(w[:-1] * tails[1:])
    return float(2.0 * cross / total**2)


def linear_entropy(rho):
    """1 - Tr(rho^2)/Tr(rho)^2 of a density matrix via its eigenvalues."""
    return linear_entropy_from_weights(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)))


def marginal_entropies(state):
    """1 - Tr(rho_S^2) for every proper subset S of a pure state (via Schmidt values)."""
    if not state.is_pure:
        raise StateError("Schmidt-value marginals need a pure state")
    space = state.space
    n = space.n_modes
    tensor = state.data.reshape(space.shape)
    out = {}
    for s in proper_subsets(n):
        if s in out:
            continue
        rest = tuple(k for k in range(n) if k not in s)
        m = tensor.transpose(list(s) + list(rest)).reshape(space.levels ** len(s), -1)
        sv = np.linalg.svd(m, compute_uv=False)
        out[s] = out[rest] = linear_entropy_from_weights(sv**2)
    return out


def marginal_purities(state):
    """Tr(rho_S^2) for every proper subset S of a pure state."""
    return {s: 1.0 - e for s, e in marginal_entropies(state).items()}


def concurrence_from_entropies(entropies, n_parties):
    """2^(1 - N/2) sqrt(sum over proper subsets of 1 - Tr(rho_S^2))."""
    return float(2.0 ** (1.0 - n_parties / 2.0) * np.sqrt(max(float(sum(entropies)), 0.0)))


def concurrence_from_purities(purities, n_parties):
    """2^(1 - N/2) sqrt((2^N - 2) - sum of subset purities), clipped at zero."""
    inside = (2**n_parties - 2) - float(sum(purities))
    return float(2.0 ** (1.0 - n_parties / 2.0) * np.sqrt(max(inside, 0.0)))


def reduced_concurrence(entropies, n_modes, traced):
    """Purity-based concurrence of the marginal on all modes except ``traced``.

    ``entropies`` maps subsets to 1 - Tr(rho_S^2), as from :func:`marginal_entropies`.
    """
    remaining = [k for k in range(n_modes) if k != traced]
    if len(remaining) < 2:
        return 0.0
    values = [entropies[s] for r in range(1, len(remaining)) for s in combinations(remaining, r)]
    return concurrence_from_entropies(values, len(remaining))


def mixed_state_concurrence(rho, dims):
    """Purity-based concurrence of a density matrix on len(dims) parties.

    Exact for pure states; for mixed states it is the same indicator used
    for the reduced values.
    """
    n = len(dims)
    tensor = rho.reshape(tuple(dims) * 2)
    letters = "abcdefghijklmnopqrstuvwxyz"
    values = []
    for s in proper_subsets(n):
        row = [letters[k] for k in range(n)]
        col = [letters[k] if k not in s else letters[n + k] for k in range(n)]
        out = [letters[k] for k in s] + [letters[n + k] for k in s]
        d = int(np.prod([dims[k] for k in s]))
        marg = np.einsum("".join(row) + "".join(col) + "->" + "".join(out), tensor).reshape(d, d)
        values.append(linear_entropy(marg))
    return concurrence_from_entropies(values, n)


@dataclass(frozen=True)
class ConcurrenceReport:
    """Full concurrence plus reduced values keyed by the traced-out mode."""

    full: float
    reduced: dict = field(default_factory=dict)
    time: float = 0.0


def concurrence(state, *, norm_tol=1e-9):
    if not state.is_pure:
        raise StateError("concurrence is defined here for pure states only")
    norm = np.linalg.norm(state.data)
    if abs(norm - 1.0) > norm_tol:
        raise StateError(f"state is not normalized (norm {norm:.12f})")
    n = state.space.n_modes
    if n == 1:
        return ConcurrenceReport(0.0, {}, state.time)
    ent = marginal_entropies(state)
    full = concurrence_from_entropies([ent[s] for s in proper_subsets(n)], n)
    reduced = {k: reduced_concurrence(ent, n, k) for k in range(n)} if n >= 3 else {}
    return ConcurrenceReport(full, reduced, state.time)


def concurrence_trace(states):
    return [concurrence(s) for s in states]


# ----------------------------------------------------------------------------
# measurement


@dataclass(frozen=True, eq=False)
class MeasurementOutcome:
    """Result of projecting one mode; ``collapsed`` is None for impossible outcomes."""

    mode: int
    kind: object  # int photon number, "zero" or "nonzero"
    probability: float
    collapsed: QuantumState | None

    @property
    def possible(self):
        return self.collapsed is not None


def _projector_diagonal(space, mode, kind):
    occ = space.occupation_table()[:, mode]
    if kind == "zero":
        return occ == 0
    if kind == "nonzero":
        return occ != 0
    j = int(kind)
    if not 0 <= j < space.levels:
        raise ValueError(f"photon number {j} outside the truncated space")
    return occ == j


def project_mode(state, mode, kind, *, floor=PROBABILITY_FLOOR):
    """Ideal projective measurement on one mode.

    ``kind`` is a photon number ``j`` (projector |j><j|), ``"zero"`` or
    ``"nonzero"`` (I - |0><0|).
    """
    if not state.is_pure:
        raise StateError("project_mode needs a pure state")
    if not 0 <= mode < state.space.n_modes:
        raise IndexError(f"mode {mode} out of range")
    mask = _projector_diagonal(state.space, mode, kind)
    projected = np.where(mask, state.data, 0.0)
    prob = float(np.real(np.vdot(projected, projected)))
    if prob <= floor:
        return MeasurementOutcome(mode, kind, prob, None)
    return MeasurementOutcome(mode, kind, prob, pure_state(projected / np.sqrt(prob), state.space, state.time))


def remaining_concurrence(outcome):
    """Purity-based concurrence of the unmeasured modes after a collapse."""
    if outcome.collapsed is None:
        return np.nan
    space = outcome.collapsed.space
    rest = [k for k in range(space.n_modes) if k != outcome.mode]
    if len(rest) < 2:
        return 0.0
    rho = partial_trace(outcome.collapsed, rest)
    return mixed_state_concurrence(rho, [space.levels] * len(rest))


@dataclass(frozen=True, eq=False)
class PersistencyTable:
    """Remaining-pair concurrence after measuring ``modes[i]`` in |j>.

    ``values[i, j]`` is NaN where the outcome is impossible.
    """

    modes: tuple
    values: np.ndarray
    probabilities: np.ndarray
    time: float = 0.0

    @property
    def max_fock(self):
        return self.values.shape[1] - 1

    def to_dict(self):
        rows = []
        for i, mode in enumerate(self.modes):
            cells = []
            for j in range(self.values.shape[1]):
                v = self.values[i, j]
                cells.append({
                    "n": j,
                    "value": None if np.isnan(v) else float(v),
                    "probability": float(self.probabilities[i, j]),
                    "possible": bool(not np.isnan(v)),
                })
            rows.append({"mode": int(mode), "cells": cells})
        return {"format": "dcesim.persistency-table/1", "time_s": float(self.time), "columns": [f"n={j}" for j in range(self.values.shape[1])], "rows": rows}

    @classmethod
    def from_dict(cls, doc):
        modes = tuple(r["mode"] for r in doc["rows"])
        values = np.array([[np.nan if c["value"] is None else c["value"] for c in r["cells"]] for r in doc["rows"]])
        probs = np.array([[c["probability"] for c in r["cells"]] for r in doc["rows"]])
        return cls(modes, values, probs, doc.get("time_s", 0.0))


def persistency_table(state, modes=None, max_fock=None, *, floor=PROBABILITY_FLOOR):
    space = state.space
    modes = tuple(range(space.n_modes)) if modes is None else tuple(modes)
    max_fock = space.levels - 1 if max_fock is None else int(max_fock)
    values = np.full((len(modes), max_fock + 1), np.nan)
    probs = np.zeros((len(modes), max_fock + 1))
    for i, mode in enumerate(modes):
        for j in range(max_fock + 1):
            outcome = project_mode(state, mode, j, floor=floor)
            probs[i, j] = outcome.probability
            if outcome.possible:
                values[i, j] = remaining_concurrence(outcome)
    return PersistencyTable(modes, values, probs, state.time)


def local_phase_rotation(state, mode, phi):
    """exp(i phi a_k^+ a_k) applied to a pure state."""
    occ = state.space.occupation_table()[:, mode]
    return pure_state(np.exp(1j * phi * occ) * state.data, state.space, state.time)


def local_unitary(state, mode, U):
    """Apply a single-mode unitary (levels x levels) to a pure state."""
    space = state.space
    t = np.moveaxis(state.data.reshape(space.shape), mode, 0)
    t = np.tensordot(U, t, axes=(1, 0))
    return pure_state(np.moveaxis(t, 0, mode).reshape(-1), space, state.time)


def ghz_state(space, n_terms=2):
    vec = np.zeros(space.dim, complex)
    for j in range(n_terms):
        vec[space.index((j,) * space.n_modes)] = 1.0
    return pure_state(vec / np.linalg.norm(vec), space)


def w_state(space):
    vec = np.zeros(space.dim, complex)
    for k in range(space.n_modes):
        occ = [0] * space.n_modes
        occ[k] = 1
        vec[space.index(occ)] = 1.0
    return pure_state(vec / np.linalg.norm(vec), space)
