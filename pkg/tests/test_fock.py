import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcesim.errors import CapacityError, HermiticityError, StateError
from dcesim.fock import (
    CollapseChannel,
    FockSpace,
    build_space,
    density_state,
    evolve_lindblad,
    evolve_pure,
    fock_state,
    hamiltonian_matrix,
    ladder_operators,
    level_populations,
    mean_photon_numbers,
    number_operator,
    odd_parity_probability,
    parity_operator,
    pure_state,
    tomography_subset,
    top_level_occupation,
    trace_distance,
    uniform_decay,
    vacuum,
)
from dcesim.mw_spectrum import RWAHamiltonian


def _rwa(A=None, B=None, n=1):
    given = A if A is not None else B
    n = n if given is None else len(given)
    A = np.zeros((n, n), complex) if A is None else np.asarray(A, complex)
    B = np.zeros((n, n), complex) if B is None else np.asarray(B, complex)
    return RWAHamiltonian(A, B, np.arange(1, A.shape[0] + 1, dtype=float), 1.0, tuple(range(1, A.shape[0] + 1)))


# ----------------------------------------------------------------------------
# space and operators


def test_space_dimensions_and_capacity():
    assert build_space(3, 9).dim == 729
    assert build_space(2, 4).shape == (4, 4)
    with pytest.raises(CapacityError):
        build_space(3, 30)
    assert build_space(3, 30, max_dim=27000).dim == 27000
    with pytest.raises(ValueError):
        build_space(0, 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(2, 6), st.data())
def test_index_round_trip(n_modes, levels, data):
    space = FockSpace(n_modes, levels)
    i = data.draw(st.integers(0, space.dim - 1))
    occ = space.occupations(i)
    assert space.index(occ) == i
    assert tuple(space.occupation_table()[i]) == occ


def test_mode_zero_is_most_significant():
    space = FockSpace(3, 4)
    assert space.index((1, 0, 0)) == 16
    assert space.index((0, 0, 1)) == 1


def test_ladder_algebra():
    space = FockSpace(2, 5)
    for mode in range(2):
        a, ad = ladder_operators(space, mode)
        comm = (a @ ad - ad @ a).toarray()
        occ = space.occupation_table()[:, mode]
        # [a, a^+] = 1 except on the truncated top level
        expected = np.where(occ == 4, -4.0, 1.0)
        assert np.allclose(np.diag(comm), expected)
        assert np.allclose((ad @ a).toarray(), number_operator(space, mode).toarray())
    a0, _ = ladder_operators(space, 0)
    a1, _ = ladder_operators(space, 1)
    assert np.abs((a0 @ a1 - a1 @ a0).toarray()).max() == 0
    with pytest.raises(IndexError):
        ladder_operators(space, 2)


def test_pair_hamiltonian_commutes_with_parity():
    space = FockSpace(3, 4)
    B = np.array([[0.3, 0.1j, 0], [0.1j, 0, 0.2], [0, 0.2, 0.5]])
    A = np.array([[0, 0.4, 0], [-0.4, 0, 0.1j], [0, 0.1j, 0]])
    H = hamiltonian_matrix(_rwa(A, B), space)
    P = parity_operator(space).toarray()
    assert np.abs(H @ P - P @ H).max() < 1e-14
    assert np.abs(H - H.conj().T).max() < 1e-14


def test_hamiltonian_rejects_bad_coefficients():
    space = FockSpace(2, 3)
    with pytest.raises(HermiticityError):
        hamiltonian_matrix(_rwa(np.eye(2), None), space)
    with pytest.raises(ValueError):
        hamiltonian_matrix(_rwa(n=3), space)


# ----------------------------------------------------------------------------
# pure evolution oracles


@pytest.mark.parametrize("lam", [1.0, 0.25])
def test_single_mode_squeezing(lam):
    space = build_space(1, 9)
    H = hamiltonian_matrix(_rwa(B=[[lam]]), space)
    times = np.linspace(0, 0.5 / lam, 26)
    states = evolve_pure(H, vacuum(space), times)
    n = np.array([mean_photon_numbers(s)[0] for s in states])
    assert np.abs(n - np.sinh(lam * times) ** 2).max() < 1e-3
    assert max(odd_parity_probability(s) for s in states) < 1e-14


def test_single_mode_squeezing_converges_with_levels():
    t = np.array([0.5])
    errs = []
    for levels in (5, 9, 13):
        space = build_space(1, levels)
        s = evolve_pure(hamiltonian_matrix(_rwa(B=[[1.0]]), space), vacuum(space), t)[0]
        errs.append(abs(mean_photon_numbers(s)[0] - np.sinh(0.5) ** 2))
    assert errs[2] < errs[1] < errs[0]


def test_two_mode_squeezer():
    space = build_space(2, 9)
    lam = 1.0
    H = hamiltonian_matrix(_rwa(B=[[0, lam], [lam, 0]]), space)
    times = np.linspace(0, 0.5, 21)
    states = evolve_pure(H, vacuum(space), times)
    n = np.array([mean_photon_numbers(s) for s in states])
    assert np.abs(n[:, 0] - n[:, 1]).max() < 1e-9
    assert np.abs(n[:, 0] - np.sinh(lam * times) ** 2).max() < 1e-3


def test_beamsplitter_exchange():
    space = build_space(2, 3)
    g = 0.7
    H = hamiltonian_matrix(_rwa(A=[[0, g], [-g, 0]]), space)
    times = np.linspace(0, 3, 31)
    states = evolve_pure(H, fock_state(space, (1, 0)), times)
    n = np.array([mean_photon_numbers(s) for s in states])
    assert np.allclose(n.sum(axis=1), 1, atol=1e-13)
    assert np.allclose(n[:, 0], np.cos(g * times) ** 2, atol=1e-12)


def test_evolve_pure_rejects_density():
    space = build_space(1, 3)
    with pytest.raises(StateError):
        evolve_pure(np.zeros((3, 3)), vacuum(space, kind="density"), [0.0])


# ----------------------------------------------------------------------------
# open-system evolution


def test_amplitude_damping_of_one_photon():
    space = build_space(1, 4)
    gamma = 1e5
    times = np.linspace(0, 5 / gamma, 51)
    out = list(evolve_lindblad(np.zeros((4, 4)), [CollapseChannel(0, gamma)], fock_state(space, (1,)), times))
    n = np.array([mean_photon_numbers(r)[0] for r in out])
    assert np.abs(n - np.exp(-gamma * times)).max() < 1e-6
    assert [r.time for r in out] == list(times)


def test_damping_acts_per_mode():
    space = build_space(2, 3)
    rates = [CollapseChannel(0, 2.0), CollapseChannel(1, 0.5)]
    t = np.array([0.0, 1.0])
    rho = list(evolve_lindblad(np.zeros((9, 9)), rates, fock_state(space, (1, 1)), t))[-1]
    assert mean_photon_numbers(rho) == pytest.approx([np.exp(-2.0), np.exp(-0.5)], abs=1e-7)


def test_zero_rate_lindblad_matches_pure_evolution():
    space = build_space(3, 4)
    B = np.array([[0.3, 0.2, 0], [0.2, 0, 0.25], [0, 0.25, 0.4]])
    H = hamiltonian_matrix(_rwa(B=B, A=[[0, 0.1, 0], [-0.1, 0, 0], [0, 0, 0]]), space)
    times = np.linspace(0, 3, 13)
    pure = evolve_pure(H, vacuum(space), times)
    mixed = evolve_lindblad(H, uniform_decay(3, 0.0), vacuum(space), times)
    for p, r in zip(pure, mixed):
        assert trace_distance(p.density_matrix(), r.data) < 1e-7


def test_lindblad_preserves_trace_hermiticity_and_positivity():
    space = build_space(2, 4)
    H = hamiltonian_matrix(_rwa(B=[[0.5, 0.3], [0.3, 0]]), space)
    for rho in evolve_lindblad(H, uniform_decay(2, 0.7), vacuum(space), np.linspace(0, 4, 9)):
        rho.validate(trace_tol=1e-8, herm_tol=1e-12, pos_tol=1e-9)


def test_decay_never_exceeds_lossless_photon_number():
    space = build_space(2, 6)
    H = hamiltonian_matrix(_rwa(B=[[0, 0.4], [0.4, 0]]), space)
    times = np.linspace(0, 2, 11)
    lossless = evolve_pure(H, vacuum(space), times)
    lossy = evolve_lindblad(H, uniform_decay(2, 0.3), vacuum(space), times)
    for p, r in zip(lossless, lossy):
        assert np.all(mean_photon_numbers(r) <= mean_photon_numbers(p) + 1e-9)


def test_lindblad_time_validation():
    space = build_space(1, 3)
    with pytest.raises(ValueError):
        list(evolve_lindblad(np.zeros((3, 3)), [], vacuum(space), [1.0, 0.5]))
    with pytest.raises(ValueError):
        CollapseChannel(0, -1.0)


# ----------------------------------------------------------------------------
# states and observables


def test_state_validation():
    space = build_space(1, 3)
    with pytest.raises(StateError):
        pure_state(np.array([1.0, 1.0, 0]), space).validate()
    with pytest.raises(StateError):
        density_state(np.diag([0.5, 0.7, -0.2]), space).validate()
    with pytest.raises(StateError):
        density_state(np.array([[0.5, 0.1, 0], [0.3, 0.5, 0], [0, 0, 0]]), space).validate()
    with pytest.raises(ValueError):
        pure_state(np.ones(4), space)


def test_populations_and_top_level():
    space = build_space(2, 3)
    vec = np.zeros(9, complex)
    vec[space.index((2, 0))] = np.sqrt(0.25)
    vec[space.index((1, 1))] = np.sqrt(0.75)
    s = pure_state(vec, space)
    assert mean_photon_numbers(s) == pytest.approx([1.25, 0.75])
    pops = level_populations(s)
    assert pops.sum(axis=1) == pytest.approx([1, 1])
    assert top_level_occupation(s) == pytest.approx([0.25, 0.0])
    assert odd_parity_probability(s) == 0


def test_tomography_subset():
    space = build_space(2, 4)
    vec = np.zeros(16, complex)
    vec[space.index((0, 0))] = np.sqrt(0.5)
    vec[space.index((1, 1))] = np.sqrt(0.3)
    vec[space.index((3, 0))] = np.sqrt(0.2)
    sub = tomography_subset(pure_state(vec, space), 2)
    assert sub.labels == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert sub.probability_mass == pytest.approx(0.8)
    assert sub.matrix[0, 3] == pytest.approx(np.sqrt(0.15))
    with pytest.raises(ValueError):
        tomography_subset(pure_state(vec, space), 5)


def test_trace_distance_values():
    space = build_space(1, 2)
    a = fock_state(space, (0,)).density_matrix()
    b = fock_state(space, (1,)).density_matrix()
    assert trace_distance(a, b) == pytest.approx(1.0)
    assert trace_distance(a, a) == 0
    assert trace_distance(a, 0.5 * (a + b)) == pytest.approx(0.5)
