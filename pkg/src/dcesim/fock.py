"""Truncated multimode Fock space, effective Hamiltonian and state evolution."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.integrate import DOP853
from scipy.linalg import LinAlgError, eigh

from .errors import CapacityError, EigenSolverError, HermiticityError, StateError, StiffnessError
from .mw_spectrum import hermiticity_deviation

log = logging.getLogger(__name__)

DEFAULT_MAX_DIM = 20_000


@dataclass(frozen=True)
class FockSpace:
    """Tensor product of ``n_modes`` oscillators truncated at ``levels`` states.

    Flat indices are row-major with mode 0 most significant.
    """

    n_modes: int = 3
    levels: int = 9

    @property
    def dim(self):
        return self.levels**self.n_modes

    @property
    def shape(self):
        return (self.levels,) * self.n_modes

    def index(self, occupations):
        return int(np.ravel_multi_index(tuple(occupations), self.shape))

    def occupations(self, index):
        return tuple(int(n) for n in np.unravel_index(index, self.shape))

    def occupation_table(self):
        """(dim, n_modes) array of photon numbers for every flat index."""
        return np.array(np.unravel_index(np.arange(self.dim), self.shape)).T


def build_space(n_modes=3, levels=9, *, max_dim=DEFAULT_MAX_DIM):
    if n_modes < 1 or levels < 2:
        raise ValueError("need n_modes >= 1 and levels >= 2")
    space = FockSpace(n_modes, levels)
    if space.dim > max_dim:
        raise CapacityError(f"Fock dimension {space.dim} exceeds the cap {max_dim}")
    return space


def _single_mode_lowering(levels):
    return sparse.diags(np.sqrt(np.arange(1, levels)), 1, format="csr")


def ladder_operators(space, mode):
    """Sparse (a, a^dagger) for ``mode``; the truncation keeps a^dagger|top> = 0."""
    if not 0 <= mode < space.n_modes:
        raise IndexError(f"mode {mode} out of range")
    left = sparse.identity(space.levels**mode, format="csr")
    right = sparse.identity(space.levels ** (space.n_modes - mode - 1), format="csr")
    a = sparse.kron(sparse.kron(left, _single_mode_lowering(space.levels)), right, format="csr")
    return a, a.conj().T.tocsr()


def number_operator(space, mode):
    diag = space.occupation_table()[:, mode].astype(float)
    return sparse.diags(diag, format="csr")


def parity_operator(space):
    """(-1)^(total photon number) as a diagonal sparse matrix."""
    total = space.occupation_table().sum(axis=1)
    return sparse.diags(np.where(total % 2, -1.0, 1.0), format="csr")


def hamiltonian_matrix(h, space, *, tol=1e-10):
    """Dense H = i(sum A a_k^+ a_l + 1/2 sum B a_k^+ a_l^+ - 1/2 sum B* a_k a_l), hbar = 1."""
    if h.n_modes != space.n_modes:
        raise ValueError("Hamiltonian and Fock space disagree on the number of modes")
    A = np.asarray(h.beamsplitter, dtype=complex)
    B = np.asarray(h.pair, dtype=complex)
    dev = hermiticity_deviation(A, B)
    if dev > tol:
        raise HermiticityError(f"RWA coefficients are not Hermitian-consistent (deviation {dev:.2e})")
    ops = [ladder_operators(space, k) for k in range(space.n_modes)]
    H = sparse.csr_matrix((space.dim, space.dim), dtype=complex)
    for k, (ak, adk) in enumerate(ops):
        for l, (al, adl) in enumerate(ops):
            if A[k, l] != 0:
                H = H + A[k, l] * (adk @ al)
            if B[k, l] != 0:
                H = H + 0.5 * B[k, l] * (adk @ adl) - 0.5 * np.conj(B[k, l]) * (ak @ al)
    H = (1j * H).toarray()
    scale = np.linalg.norm(H)
    if scale > 0:
        herm = np.linalg.norm(H - H.conj().T) / scale
        if herm > tol:
            raise HermiticityError(f"assembled Hamiltonian deviates from Hermitian by {herm:.2e}")
    return H


# ----------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure state vector or density matrix on a :class:`FockSpace`."""

    kind: str
    data: np.ndarray
    space: FockSpace
    time: float = 0.0

    def __post_init__(self):
        if self.kind not in ("pure", "density"):
            raise ValueError("kind must be 'pure' or 'density'")
        want = (self.space.dim,) if self.kind == "pure" else (self.space.dim, self.space.dim)
        if self.data.shape != want:
            raise ValueError(f"{self.kind} data must have shape {want}, got {self.data.shape}")

    @property
    def is_pure(self):
        return self.kind == "pure"

    def density_matrix(self):
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def probabilities(self):
        """Diagonal in the Fock basis."""
        if self.is_pure:
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).copy()

    def validate(self, *, norm_tol=1e-9, herm_tol=1e-10, trace_tol=1e-8, pos_tol=1e-8):
        """Raise :class:`StateError` if the state violates its invariants."""
        if self.is_pure:
            dev = abs(np.linalg.norm(self.data) - 1.0)
            if dev > norm_tol:
                raise StateError(f"pure state norm deviates from 1 by {dev:.2e}")
            return self
        rho = self.data
        herm = np.abs(rho - rho.conj().T).max()
        if herm > herm_tol:
            raise StateError(f"density matrix not Hermitian ({herm:.2e})")
        tr = abs(np.trace(rho) - 1.0)
        if tr > trace_tol:
            raise StateError(f"density matrix trace deviates from 1 by {tr:.2e}")
        low = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
        if low < -pos_tol:
            raise StateError(f"density matrix has eigenvalue {low:.2e}")
        return self


def pure_state(vector, space, time=0.0):
    return QuantumState("pure", np.asarray(vector, dtype=complex), space, time)


def density_state(matrix, space, time=0.0):
    return QuantumState("density", np.asarray(matrix, dtype=complex), space, time)


def fock_state(space, occupations, *, kind="pure"):
    vec = np.zeros(space.dim, complex)
    vec[space.index(occupations)] = 1.0
    if kind == "pure":
        return pure_state(vec, space)
    return density_state(np.outer(vec, vec), space)


def vacuum(space, *, kind="pure"):
    return fock_state(space, (0,) * space.n_modes, kind=kind)


def as_density(state):
    return density_state(state.density_matrix(), state.space, state.time)


# ----------------------------------------------------------------------------
# evolution


def evolve_pure(H, psi0, times):
    """psi(t) = exp(-i H t) psi0 through the eigendecomposition of H."""
    if not psi0.is_pure:
        raise StateError("evolve_pure needs a pure state")
    psi0.validate()
    try:
        energies, vecs = eigh(H)
    except LinAlgError as exc:
        raise EigenSolverError(f"eigendecomposition of H failed: {exc}") from exc
    coeffs = vecs.conj().T @ psi0.data
    times = np.asarray(times, dtype=float)
    out = []
    for t in times:
        if t == psi0.time:
            # skip the eigenbasis round trip, which is exact only to rounding
            out.append(pure_state(psi0.data.copy(), psi0.space, float(t)))
            continue
        vec = vecs @ (np.exp(-1j * energies * (t - psi0.time)) * coeffs)
        state = pure_state(vec, psi0.space, float(t))
        out.append(state.validate())
    return out


@dataclass(frozen=True)
class CollapseChannel:
    """Amplitude damping of ``mode`` at ``rate`` (1/s): C = sqrt(rate) a."""

    mode: int
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("decay rate must be non-negative")


def uniform_decay(n_modes, rate):
    return [CollapseChannel(k, rate) for k in range(n_modes)]


def _lindblad_generator(H, channels, space):
    Hs = sparse.csr_matrix(H)
    Hs.eliminate_zeros()
    jumps = []
    h_eff = Hs.astype(complex)
    for ch in channels:
        if ch.rate == 0:
            continue
        a, ad = ladder_operators(space, ch.mode)
        c = np.sqrt(ch.rate) * a
        jumps.append(c.tocsr())
        h_eff = h_eff - 0.5j * (ch.rate * (ad @ a))
    h_eff = sparse.csr_matrix(h_eff)
    dim = space.dim

    def rhs(_t, y):
        rho = y.reshape(dim, dim)
        x = h_eff @ rho
        # rho H_eff^dagger computed as (H_eff rho^dagger)^dagger keeps the exact form
        y_dot = -1j * x + 1j * (h_eff @ rho.conj().T).conj().T
        for c in jumps:
            y_dot += c @ (c @ rho.conj().T).conj().T
        return y_dot.ravel()

    return rhs


def evolve_lindblad(H, channels, rho0, times, *, rtol=1e-8, atol=1e-10):
    """Integrate the zero-temperature Lindblad equation; yields states at ``times``.

    An adaptive eighth-order Dormand-Prince integrator is stepped manually
    and its dense output evaluated at the requested times, so only one
    density matrix per requested time is ever materialized.
    """
    state0 = rho0 if not rho0.is_pure else as_density(rho0)
    state0.validate()
    space = state0.space
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be non-decreasing")
    t0 = state0.time
    if times.size and times[0] < t0:
        raise ValueError("requested times precede the initial state")
    rhs = _lindblad_generator(H, channels, space)
    pending = list(times)
    y0 = np.ascontiguousarray(state0.data, dtype=complex).ravel()
    while pending and pending[0] == t0:
        yield density_state(state0.data.copy(), space, t0)
        pending.pop(0)
    if not pending:
        return
    solver = DOP853(rhs, t0, y0, pending[-1], rtol=rtol, atol=atol)
    while pending:
        msg = solver.step()
        if solver.status == "failed":
            raise StiffnessError(
                f"Lindblad integration failed at t={solver.t:.4g} s (step {solver.step_size!r}): {msg}"
            )
        interp = solver.dense_output() if solver.t_old is not None else None
        while pending and (pending[0] <= solver.t or solver.status == "finished"):
            t = pending.pop(0)
            y = solver.y if t == solver.t or interp is None else interp(t)
            rho = y.reshape(space.dim, space.dim).copy()
            yield density_state(rho, space, float(t))


# ----------------------------------------------------------------------------
# observables


def mean_photon_numbers(state):
    """<a_k^+ a_k> for every mode."""
    p = state.probabilities()
    occ = state.space.occupation_table()
    return occ.T @ p


def level_populations(state):
    """(n_modes, levels) marginal occupation probabilities."""
    p = state.probabilities().reshape(state.space.shape)
    n = state.space.n_modes
    return np.array([p.sum(axis=tuple(j for j in range(n) if j != k)) for k in range(n)])


def top_level_occupation(state):
    """Probability of the highest retained level, per mode."""
    return level_populations(state)[:, -1]


def odd_parity_probability(state):
    total = state.space.occupation_table().sum(axis=1)
    return float(state.probabilities()[total % 2 == 1].sum())


def trace_distance(rho, sigma):
    diff = rho - sigma
    return float(0.5 * np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


@dataclass(frozen=True, eq=False)
class TomographySubset:
    """Block of the density matrix with every mode below ``display_levels`` photons."""

    matrix: np.ndarray
    labels: list
    probability_mass: float
    display_levels: int


def tomography_subset(state, display_levels):
    space = state.space
    if not 1 <= display_levels <= space.levels:
        raise ValueError("display_levels must lie in [1, levels]")
    occ = space.occupation_table()
    keep = np.flatnonzero((occ < display_levels).all(axis=1))
    rho = state.density_matrix()
    block = rho[np.ix_(keep, keep)]
    labels = [tuple(int(x) for x in occ[i]) for i in keep]
    mass = float(np.real(np.trace(block)))
    return TomographySubset(block.copy(), labels, mass, display_levels)
