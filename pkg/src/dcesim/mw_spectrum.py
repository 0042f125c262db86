"""Instantaneous microwave modes and the rotating-wave effective Hamiltonian.

At every time sample the ring's modes solve the periodic Sturm-Liouville
problem

    -psi''(theta) = (omega/c)^2 * n(theta)^2 * R^2 * psi(theta),

normalized as R * integral(n^2 psi_n psi_m) = delta_nm.  The problem is
discretized with a Fourier-Galerkin (spectral) basis truncated at ``cutoff``
angular harmonics, with every inner product evaluated by the periodic
trapezoid rule on the shared angular grid.  For an index profile that is even
in theta (always the case for identical counter-propagating solitons with a
uniform mask) the cos and sin families decouple exactly, so each family is
solved on its own and the near-degenerate doublets never mix numerically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants
from scipy.linalg import LinAlgError, eigh

from .errors import AliasingError, EigenSolverError, HermiticityError, ResonanceError, TimeResolutionError

log = logging.getLogger(__name__)

DEFAULT_CUTOFF = 64


# ----------------------------------------------------------------------------
# single-instant eigenproblem


def _galerkin_basis(n_grid, sector, cutoff):
    """Basis functions on the grid, their harmonic numbers and trapezoid norms."""
    theta = 2.0 * np.pi * np.arange(n_grid) / n_grid
    cutoff = min(cutoff, n_grid // 2 - 1)
    cos_k = np.arange(0, cutoff + 1)
    sin_k = np.arange(1, cutoff + 1)
    if sector == "even":
        ks, kinds = cos_k, np.zeros(cos_k.size, bool)
    elif sector == "odd":
        ks, kinds = sin_k, np.ones(sin_k.size, bool)
    elif sector == "full":
        ks = np.concatenate([cos_k, sin_k])
        kinds = np.concatenate([np.zeros(cos_k.size, bool), np.ones(sin_k.size, bool)])
    else:
        raise ValueError(f"unknown sector {sector!r}")
    phase = np.outer(theta, ks)
    phi = np.where(kinds, np.sin(phase), np.cos(phase))
    norms = np.where(ks == 0, 2.0 * np.pi, np.pi)
    return phi, ks, kinds, norms


def _reflect(profile):
    """n(-theta) on the uniform grid (last axis)."""
    return np.roll(profile[..., ::-1], 1, axis=-1)


def is_even_profile(profile, rtol=1e-9):
    profile = np.asarray(profile, dtype=float)
    spread = np.ptp(profile, axis=-1).max() if profile.size else 0.0
    dev = np.abs(profile - _reflect(profile)).max()
    return dev <= rtol * spread + 1e-14 * np.abs(profile).max()


def _eigen_index(sector, harmonic):
    if sector == "even":
        return harmonic
    if sector == "odd":
        return harmonic - 1
    return 2 * harmonic  # doublet occupies (2h - 1, 2h) after the constant mode


def instantaneous_modes(
    profile,
    radius,
    n_modes=None,
    *,
    harmonics=None,
    sector="auto",
    cutoff=DEFAULT_CUTOFF,
    reference=None,
):
    """Eigenfrequencies (rad/s) and grid eigenfunctions of a frozen index profile.

    Parameters
    ----------
    profile : (N,) array
        Refractive index on the theta grid.
    radius : float
        Ring radius in metres.
    n_modes : int, optional
        Number of retained modes; defaults to ``len(harmonics)``.
    harmonics : sequence of int, optional
        Angular harmonic of each retained mode (default ``1..n_modes``).
    sector : {"auto", "even", "odd", "full"}
        Parity family to solve in.  ``"auto"`` picks ``"even"`` for a
        theta-symmetric profile and ``"full"`` otherwise.
    reference : (n_modes, N) array, optional
        Previous eigenfunctions; in the ``"full"`` sector the doublet member
        with the larger overlap is kept.  Without it the member closest to
        cos(h theta) is kept.

    Returns
    -------
    freqs : (n_modes,) array
    eigenfunctions : (n_modes, N) array
        Real, normalized so that R * sum(n^2 psi_n psi_m) dtheta = delta_nm.
    """
    profile = np.asarray(profile, dtype=float)
    if np.any(profile <= 0):
        raise ValueError("index profile must be positive")
    if harmonics is None:
        if n_modes is None or n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        harmonics = tuple(range(1, n_modes + 1))
    harmonics = tuple(int(h) for h in harmonics)
    if n_modes is not None and n_modes != len(harmonics):
        raise ValueError("n_modes does not match the number of harmonics")
    if min(harmonics) < 1:
        raise ValueError("harmonics must be >= 1")

    n_grid = profile.size
    weight = profile**2
    if sector == "auto":
        sector = "even" if is_even_profile(profile) else "full"
    if sector in ("even", "odd"):
        weight = 0.5 * (weight + _reflect(weight))
    if max(harmonics) > min(cutoff, n_grid // 2 - 1) // 2:
        cutoff = 2 * max(harmonics) + 8
    phi, ks, kinds, norms = _galerkin_basis(n_grid, sector, cutoff)
    dtheta = 2.0 * np.pi / n_grid

    wmat = dtheta * phi.T @ (weight[:, None] * phi)
    stiff = ks.astype(float) ** 2 * norms
    top = max(_eigen_index(sector, h) for h in harmonics)
    try:
        _, vecs = eigh(np.diag(stiff), wmat, subset_by_index=[0, top])
    except (LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"generalized eigenproblem failed: {exc}") from exc

    freqs = np.empty(len(harmonics))
    funcs = np.empty((len(harmonics), n_grid))
    for i, h in enumerate(harmonics):
        j = _eigen_index(sector, h)
        candidates = [j - 1, j] if sector == "full" else [j]
        if len(candidates) > 1:
            grids = [phi @ vecs[:, c] for c in candidates]
            if reference is not None:
                score = [abs(dtheta * np.sum(weight * g * reference[i])) for g in grids]
            else:
                target = (ks == h) & ~kinds
                score = [abs(vecs[target, c][0]) for c in candidates]
            j = candidates[int(np.argmax(score))]
        c = vecs[:, j]
        # sign convention: the component along the nominal harmonic is positive
        own = np.flatnonzero(ks == h)
        lead = own[np.argmax(np.abs(c[own]))]
        if c[lead] < 0:
            c = -c
        # Rayleigh quotient keeps full relative precision in the frequency
        lam = np.sum(stiff * c**2) / (c @ wmat @ c)
        freqs[i] = constants.c * np.sqrt(lam) / radius
        funcs[i] = phi @ c / np.sqrt(radius)
    return freqs, funcs


# ----------------------------------------------------------------------------
# time series of modes


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Instantaneous modes sampled over one modulation period."""

    times: np.ndarray
    freqs: np.ndarray  # (n_modes, K)
    eigenfunctions: np.ndarray  # (K, n_modes, N)
    weight: np.ndarray  # (K, N), n^2
    radius: float
    harmonics: tuple
    sector: str
    min_overlap: float = np.nan
    selection_scores: dict = field(default_factory=dict)

    @property
    def n_modes(self):
        return self.freqs.shape[0]

    @property
    def n_samples(self):
        return len(self.times)

    def inner(self, k, a, b):
        """n^2-weighted inner product at time sample ``k`` (last axis)."""
        n_grid = self.weight.shape[1]
        return self.radius * (2.0 * np.pi / n_grid) * np.sum(self.weight[k] * a * b, axis=-1)

    def gram(self):
        """(K, n, n) matrices R * integral(n^2 psi_n psi_m)."""
        n_grid = self.weight.shape[1]
        psi = self.eigenfunctions
        return self.radius * (2.0 * np.pi / n_grid) * np.einsum("kt,knt,kmt->knm", self.weight, psi, psi)

    def orthonormality_deviation(self):
        return float(np.abs(self.gram() - np.eye(self.n_modes)).max())

    def consecutive_overlaps(self):
        """(K, n) weighted overlaps <psi_n(t_k), psi_n(t_k+1)>, wrapping at the end."""
        n_grid = self.weight.shape[1]
        nxt = np.roll(self.eigenfunctions, -1, axis=0)
        w = np.roll(self.weight, -1, axis=0)
        return self.radius * (2.0 * np.pi / n_grid) * np.einsum("kt,knt,knt->kn", w, self.eigenfunctions, nxt)


def solve_mode_series(modulation, harmonics, *, sector="auto", cutoff=DEFAULT_CUTOFF):
    """Solve the eigenproblem independently at every time sample (no gauge fixing)."""
    profiles = modulation.index_profiles
    if sector == "auto":
        sector = "even" if is_even_profile(profiles) else "full"
    K = len(modulation.times)
    freqs = np.empty((len(harmonics), K))
    funcs = np.empty((K, len(harmonics), profiles.shape[1]))
    ref = None
    for k in range(K):
        freqs[:, k], funcs[k] = instantaneous_modes(
            profiles[k], modulation.radius, harmonics=harmonics, sector=sector, cutoff=cutoff,
            reference=ref if sector == "full" else None,
        )
        ref = funcs[k]
    return ModeBasis(
        np.asarray(modulation.times), freqs, funcs, profiles**2, modulation.radius, tuple(harmonics), sector
    )


def fix_gauge(basis, min_overlap=0.5):
    """Make consecutive weighted overlaps of each mode positive.

    Signs are flipped sequentially in time.  Raises
    :class:`TimeResolutionError` if any consecutive |overlap| (including the
    wrap from the last sample back to the first) falls below ``min_overlap``.
    """
    psi = basis.eigenfunctions.copy()
    K = psi.shape[0]
    n_grid = basis.weight.shape[1]
    scale = basis.radius * 2.0 * np.pi / n_grid
    for k in range(1, K):
        ov = scale * np.einsum("t,nt,nt->n", basis.weight[k], psi[k - 1], psi[k])
        psi[k, ov < 0] *= -1.0
    fixed = replace(basis, eigenfunctions=psi)
    ov = fixed.consecutive_overlaps()
    worst = float(np.abs(ov).min())
    if worst < min_overlap:
        raise TimeResolutionError(
            f"consecutive mode overlap {worst:.3f} < {min_overlap}; increase the number of time samples"
        )
    if np.any(ov[-1] < 0):
        raise TimeResolutionError("mode sign does not return to itself after one period")
    return replace(fixed, min_overlap=float(ov.min()))


def time_derivative(series, dt):
    """Fourth-order centred periodic finite difference along axis 0."""
    f = np.asarray(series)
    # grouped as differences so that a constant series gives exactly zero
    near = np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)
    far = np.roll(f, -2, axis=0) - np.roll(f, 2, axis=0)
    return (8.0 * near - far) / (12.0 * dt)


def _time_step(times):
    return float(times[1] - times[0])


def coupling_G(basis):
    """G_nm(t_k) = sqrt(omega_m/omega_n) * R * integral(n^2 dpsi_n/dt psi_m), shape (K, n, n)."""
    if basis.n_samples < 64:
        log.warning("only %d time samples; finite differences may be inaccurate", basis.n_samples)
    dpsi = time_derivative(basis.eigenfunctions, _time_step(basis.times))
    n_grid = basis.weight.shape[1]
    raw = basis.radius * (2.0 * np.pi / n_grid) * np.einsum("kt,knt,kmt->knm", basis.weight, dpsi, basis.eigenfunctions)
    w = basis.freqs.T  # (K, n)
    ratio = np.sqrt(w[:, None, :] / w[:, :, None])
    return raw * ratio


@dataclass(frozen=True, eq=False)
class CouplingSeries:
    """Coupling matrices over one period, each of shape (K, n, n)."""

    times: np.ndarray
    G: np.ndarray
    C: np.ndarray
    D: np.ndarray
    freqs: np.ndarray  # (n, K)
    freq_derivatives: np.ndarray  # (n, K)

    @property
    def c_tilde(self):
        """C with the free-rotation diagonal removed: 1/2 (G - G^T)."""
        return self.C + 1j * np.einsum("nk,nm->knm", self.freqs, np.eye(self.freqs.shape[0]))

    def antisymmetry_deviation(self):
        ct = self.c_tilde
        scale = max(np.abs(ct).max(), 1e-300)
        return float(np.abs(ct + np.swapaxes(ct, 1, 2)).max() / scale)

    def symmetry_deviation(self):
        scale = max(np.abs(self.D).max(), 1e-300)
        return float(np.abs(self.D - np.swapaxes(self.D, 1, 2)).max() / scale)


def assemble_CD(G, freqs, freq_derivatives, times=None):
    """C_nm = -i w_n d_nm + (G_nm - G_mn)/2 and D_nm = ((w'_n/w_n) d_nm - G_nm - G_mn)/2."""
    G = np.asarray(G, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    freq_derivatives = np.asarray(freq_derivatives, dtype=float)
    K, n, _ = G.shape
    if freqs.shape != (n, K) or freq_derivatives.shape != (n, K):
        raise ValueError("freqs and freq_derivatives must have shape (n_modes, K)")
    eye = np.eye(n)
    Gt = np.swapaxes(G, 1, 2)
    C = -1j * np.einsum("nk,nm->knm", freqs, eye) + 0.5 * (G - Gt)
    D = 0.5 * (np.einsum("nk,nm->knm", freq_derivatives / freqs, eye) - G - Gt)
    if times is None:
        times = np.arange(K, dtype=float)
    return CouplingSeries(np.asarray(times), G, C, D, freqs, freq_derivatives)


def coupling_series(basis):
    G = coupling_G(basis)
    dw = time_derivative(basis.freqs.T, _time_step(basis.times)).T
    return assemble_CD(G, basis.freqs, dw, basis.times)


# ----------------------------------------------------------------------------
# Fourier selection and RWA


def fourier_coefficients(series, times, fundamental, orders):
    """X^(mu) = (1/K) sum_k X(t_k) exp(-i mu omega0 t_k) for each ``mu`` in ``orders``.

    ``times`` must sample exactly one period 2 pi/omega0 uniformly.  Returns
    an array of shape ``(len(orders),) + series.shape[1:]``.
    """
    series = np.asarray(series)
    times = np.asarray(times, dtype=float)
    orders = np.atleast_1d(np.asarray(orders, dtype=int))
    K = len(times)
    if series.shape[0] != K:
        raise ValueError("series and times disagree in length")
    period = 2.0 * np.pi / fundamental
    expected = times[0] + period * np.arange(K) / K
    if np.abs(times - expected).max() > 1e-9 * period:
        raise ValueError("times must sample one full period uniformly")
    if np.any(np.abs(orders) >= K / 2):
        raise AliasingError(f"Fourier orders must satisfy |mu| < K/2 = {K // 2}")
    phase = np.exp(-1j * fundamental * np.outer(orders, times))  # (M, K)
    flat = series.reshape(K, -1)
    return (phase @ flat / K).reshape((len(orders),) + series.shape[1:])


@dataclass(frozen=True, eq=False)
class RWAHamiltonian:
    """Time-independent rotating-frame coefficients.

    H = i (sum A_kl a_k^+ a_l + 1/2 sum B_kl a_k^+ a_l^+ - 1/2 sum B*_kl a_k a_l)
    """

    beamsplitter: np.ndarray
    pair: np.ndarray
    mode_freqs: np.ndarray
    fundamental: float
    harmonics: tuple = ()
    hermiticity_deviation: float = 0.0
    detuning: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_modes(self):
        return self.beamsplitter.shape[0]

    def scaled(self, factor):
        return replace(self, beamsplitter=self.beamsplitter * factor, pair=self.pair * factor)

    def to_dict(self):
        def cm(a):
            return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(a, dtype=complex)]

        return {
            "format": "dcesim.rwa-hamiltonian/1",
            "n_modes": int(self.n_modes),
            "fundamental_rad_per_s": float(self.fundamental),
            "harmonics": [int(h) for h in self.harmonics],
            "mode_freqs_rad_per_s": [float(w) for w in self.mode_freqs],
            "beamsplitter": cm(self.beamsplitter),
            "pair": cm(self.pair),
            "hermiticity_deviation": float(self.hermiticity_deviation),
            "detuning_rad_per_s": None if self.detuning is None else [float(d) for d in self.detuning],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc):
        def cm(rows):
            arr = np.asarray(rows, dtype=float)
            return arr[..., 0] + 1j * arr[..., 1]

        det = doc.get("detuning_rad_per_s")
        return cls(
            beamsplitter=cm(doc["beamsplitter"]),
            pair=cm(doc["pair"]),
            mode_freqs=np.asarray(doc["mode_freqs_rad_per_s"], dtype=float),
            fundamental=float(doc["fundamental_rad_per_s"]),
            harmonics=tuple(doc.get("harmonics", ())),
            hermiticity_deviation=float(doc.get("hermiticity_deviation", 0.0)),
            detuning=None if det is None else np.asarray(det, dtype=float),
            metadata=dict(doc.get("metadata", {})),
        )


def hermiticity_deviation(A, B):
    """Relative anti-Hermitian defect of the assembled operator's coefficients."""
    scale = np.linalg.norm(A) + np.linalg.norm(B)
    if scale == 0:
        return 0.0
    return float((np.linalg.norm(A + A.conj().T) + np.linalg.norm(B - B.T)) / scale)


def rwa_hamiltonian(coeffs, fundamental, harmonics=None, *, tol=1e-6, resonance_tol=0.01):
    """Keep the exactly resonant Fourier terms of C~ and D.

    A_kl is the coefficient of C~_kl at order (h_l - h_k) and B_kl that of
    D_kl at order -(h_k + h_l), where h_k is the harmonic of mode k on the
    integer ladder h_k * omega0.
    """
    n = coeffs.G.shape[1]
    if harmonics is None:
        harmonics = tuple(range(1, n + 1))
    h = np.asarray(harmonics, dtype=int)
    if h.size != n:
        raise ValueError("one harmonic per mode required")
    nominal = h * fundamental
    mean_w = coeffs.freqs.mean(axis=1)
    rel = np.abs(mean_w - nominal) / nominal
    if np.any(rel > resonance_tol):
        raise ResonanceError(
            f"mean mode frequencies deviate from the harmonic ladder by up to {rel.max():.2%}"
        )
    orders = sorted({int(o) for o in np.concatenate([(h[None, :] - h[:, None]).ravel(), -(h[:, None] + h[None, :]).ravel()])})
    ct = fourier_coefficients(coeffs.c_tilde, coeffs.times, fundamental, orders)
    dd = fourier_coefficients(coeffs.D, coeffs.times, fundamental, orders)
    index = {o: i for i, o in enumerate(orders)}
    A = np.empty((n, n), complex)
    B = np.empty((n, n), complex)
    for k in range(n):
        for l in range(n):
            A[k, l] = ct[index[h[l] - h[k]], k, l]
            B[k, l] = dd[index[-(h[k] + h[l])], k, l]
    dev = hermiticity_deviation(A, B)
    if dev > tol:
        raise HermiticityError(f"RWA operator deviates from Hermitian by {dev:.2e} (gauge or sampling fault)")
    if dev > 0:
        log.debug("symmetrizing RWA coefficients (deviation %.2e)", dev)
    A = 0.5 * (A - A.conj().T)
    B = 0.5 * (B + B.T)
    return RWAHamiltonian(
        beamsplitter=A,
        pair=B,
        mode_freqs=nominal.astype(float),
        fundamental=float(fundamental),
        harmonics=tuple(int(x) for x in h),
        hermiticity_deviation=dev,
        detuning=mean_w - nominal,
    )


def driving_score(coeffs, harmonics, fundamental):
    """Sum over modes of |D_kk| at the parametric order -2 h_k."""
    total = 0.0
    for k, hk in enumerate(harmonics):
        total += abs(fourier_coefficients(coeffs.D[:, k, k], coeffs.times, fundamental, [-2 * hk])[0])
    return total


def build_mode_basis(modulation, harmonics, *, selection="driving", cutoff=DEFAULT_CUTOFF):
    """Gauge-fixed mode basis with one member per doublet.

    For theta-even profiles the whole cos family (``selection="symmetric"``)
    or whichever family is driven harder (``"driving"``) is retained, so all
    retained modes can couple.  Other profiles fall back to the symmetric
    member of each doublet.
    """
    if selection not in ("driving", "symmetric"):
        raise ValueError("selection must be 'driving' or 'symmetric'")
    if not is_even_profile(modulation.index_profiles):
        log.warning("index profile is not theta-even; keeping the symmetric doublet members")
        return fix_gauge(solve_mode_series(modulation, harmonics, sector="full", cutoff=cutoff))
    sectors = ["even"] if selection == "symmetric" else ["even", "odd"]
    best = None
    scores = {}
    for sector in sectors:
        basis = fix_gauge(solve_mode_series(modulation, harmonics, sector=sector, cutoff=cutoff))
        scores[sector] = driving_score(coupling_series(basis), harmonics, modulation.fundamental_freq)
        if best is None or scores[sector] > scores[best.sector]:
            best = basis
    return replace(best, selection_scores=scores)


def _eigenfrequencies(profile, radius, sector, cutoff, top):
    weight = np.asarray(profile, dtype=float) ** 2
    if sector in ("even", "odd"):
        weight = 0.5 * (weight + _reflect(weight))
    phi, ks, _, norms = _galerkin_basis(weight.size, sector, cutoff)
    wmat = (2.0 * np.pi / weight.size) * phi.T @ (weight[:, None] * phi)
    lam = eigh(np.diag(ks.astype(float) ** 2 * norms), wmat, eigvals_only=True, subset_by_index=[0, top])
    return constants.c * np.sqrt(np.clip(lam, 0.0, None)) / radius


def doublet_mean_frequency(profile, radius, harmonic, cutoff=DEFAULT_CUTOFF):
    """Average of the two near-degenerate frequencies belonging to ``harmonic``."""
    if is_even_profile(profile):
        w_cos = _eigenfrequencies(profile, radius, "even", cutoff, harmonic)[harmonic]
        w_sin = _eigenfrequencies(profile, radius, "odd", cutoff, harmonic - 1)[harmonic - 1]
        return 0.5 * (w_cos + w_sin)
    w = _eigenfrequencies(profile, radius, "full", cutoff, 2 * harmonic)
    return 0.5 * (w[2 * harmonic - 1] + w[2 * harmonic])


def frequency_response_mismatch(modulation, harmonic=1, cutoff=DEFAULT_CUTOFF):
    """max_k |dw/w + dL/L| / max_k |dL/L| for the doublet-mean frequency of ``harmonic``."""
    mean = np.array([
        doublet_mean_frequency(p, modulation.radius, harmonic, cutoff) for p in modulation.index_profiles
    ])
    dw = mean / mean.mean() - 1.0
    L = modulation.path_lengths
    dl = L / L.mean() - 1.0
    scale = np.abs(dl).max()
    if scale == 0:
        return 0.0
    return float(np.abs(dw + dl).max() / scale)
