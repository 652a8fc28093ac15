import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import sqrtm
from scipy.stats import unitary_group

from freqbin.errors import ConvergenceError, IncompleteDataError
from freqbin.fixtures import data_path, parse_fixture, read_matrix
from freqbin.tomography import (
    SETTINGS,
    TomographyData,
    bell_state,
    build_projection_set,
    check_density_matrix,
    fidelity,
    likelihood,
    linear_inversion,
    mle_fit,
    negativity,
    params_from_rho,
    partial_transpose,
    projection_probabilities,
    rho_from_params,
    synthetic_data,
    tally_projection_counts,
)

from oracles import REFERENCE_RHO, random_density, random_pure

H = 0.5
R = 1 / np.sqrt(2)


@pytest.fixture(scope="module")
def table1():
    return parse_fixture(data_path("table1.csv"), "table1")


def test_projection_rows():
    P = {p.label: p for p in build_projection_set()}
    assert len(P) == 16
    np.testing.assert_allclose(P[1].coefficients, [1, 0, 0, 0])
    assert P[1].phase_configs == (0, 1, 2, 3)
    np.testing.assert_allclose(P[8].coefficients, [H, H, 1j * H, 1j * H])
    assert P[8].phase_configs == (2,)
    np.testing.assert_allclose(P[11].coefficients, [H, 1j * H, 1j * H, -H])
    assert P[11].phase_configs == (3,)
    np.testing.assert_allclose(P[9].coefficients, [R, 0, 1j * R, 0])
    assert sum(len(p.phase_configs) for p in P.values()) == 36


def test_projection_vectors_are_products():
    for p in build_projection_set():
        assert np.linalg.norm(p.coefficients) == pytest.approx(1)
        np.testing.assert_allclose(
            p.coefficients, np.kron(SETTINGS[p.signal_setting], SETTINGS[p.idler_setting])
        )
        n_super = sum(s in "+L" for s in (p.signal_setting, p.idler_setting))
        assert len(p.phase_configs) == {0: 4, 1: 2, 2: 1}[n_super]


def test_tally(table1):
    data = tally_projection_counts(table1.raw())
    assert data.counts[0] == 153
    assert data.normalization == 328
    np.testing.assert_array_equal(data.counts, table1.data().counts)


def test_tally_incomplete(table1):
    raw = table1.raw()
    del raw[(7, 0)]
    with pytest.raises(IncompleteDataError):
        tally_projection_counts(raw)
    raw = table1.raw()
    raw[(7, 1)] = 3
    with pytest.raises(IncompleteDataError):
        tally_projection_counts(raw)


def test_all_zero_counts_rejected_downstream(table1):
    zero = tally_projection_counts({k: 0 for k in table1.raw()})
    assert zero.normalization == 0
    with pytest.raises(ValueError):
        mle_fit(zero)


def test_likelihood_examples(table1):
    data = table1.data()
    rho = bell_state()
    exact = synthetic_data(rho, 1000.0)
    assert likelihood(rho, exact) == pytest.approx(0, abs=1e-9)
    mixed = likelihood(np.eye(4) / 4, data)
    assert mixed > 0
    assert np.isfinite(likelihood(REFERENCE_RHO, data))
    assert likelihood(REFERENCE_RHO, data) < mixed


def test_reference_matrix_file_matches_listing():
    np.testing.assert_allclose(read_matrix(data_path("qubit_rho_reference.txt")), REFERENCE_RHO, atol=0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=16, max_size=16))
def test_parameterization_is_physical(t):
    if np.allclose(t[:4], 0) and np.allclose(t[4:], 0):
        return
    check_density_matrix(rho_from_params(np.array(t)))


def test_params_round_trip():
    rho = random_density(np.random.default_rng(3), 4)
    back = rho_from_params(params_from_rho(rho, eps=0.0))
    np.testing.assert_allclose(back, rho, atol=1e-12)


def test_linear_inversion_exact_data():
    rho = random_density(np.random.default_rng(4), 4)
    est = linear_inversion(synthetic_data(rho, 1.0))
    np.testing.assert_allclose(est, rho, atol=1e-10)


def test_mle_bell_synthetic():
    rng = np.random.default_rng(5)
    fit = mle_fit(synthetic_data(bell_state(), 1e6, rng=rng), restarts=2)
    assert fit.converged
    assert fidelity(fit.rho, bell_state()) >= 0.999
    check_density_matrix(fit.rho)


def test_mle_mixed_synthetic():
    rng = np.random.default_rng(6)
    fit = mle_fit(synthetic_data(np.eye(4) / 4, 1e6, rng=rng), restarts=2)
    assert np.max(np.abs(fit.rho - np.eye(4) / 4)) <= 0.02


def test_mle_scale_invariance(table1):
    data = table1.data()
    a = mle_fit(data, restarts=2, seed=1)
    b = mle_fit(data.scaled(10), restarts=2, seed=1)
    np.testing.assert_allclose(a.rho, b.rho, atol=1e-4)
    assert b.likelihood == pytest.approx(10 * a.likelihood, rel=1e-6)


def test_mle_reports_non_convergence(table1):
    with pytest.raises(ConvergenceError) as err:
        mle_fit(table1.data(), restarts=1, max_evals=50)
    best = err.value.best
    assert best is not None and not best.converged
    check_density_matrix(best.rho)


def test_label_convention_gives_conjugate(table1):
    shaper = mle_fit(table1.data(), restarts=2, seed=2).rho
    label = mle_fit(table1.data(), convention="label", restarts=2, seed=2).rho
    np.testing.assert_allclose(label, shaper.conj(), atol=2e-3)
    # the listed estimate follows the shaper convention
    assert np.max(np.abs(shaper - REFERENCE_RHO)) < np.max(np.abs(label - REFERENCE_RHO))


def test_negativity_examples():
    assert negativity(bell_state()) == pytest.approx(0.5, abs=1e-12)
    assert negativity(REFERENCE_RHO) == pytest.approx(0.34, abs=0.01)
    rng = np.random.default_rng(7)
    prod = np.kron(random_density(rng, 2), random_density(rng, 2))
    assert negativity(prod) <= 1e-12
    with pytest.raises(ValueError):
        negativity(np.eye(4) / 4, dims=(3, 2))


def test_negativity_side_independent():
    rho = random_density(np.random.default_rng(8), 4)
    w_i = np.linalg.eigvalsh(partial_transpose(rho, side="idler"))
    w_s = np.linalg.eigvalsh(partial_transpose(rho, side="signal"))
    np.testing.assert_allclose(w_i, w_s, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_negativity_local_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, 4)
    U = np.kron(unitary_group.rvs(2, random_state=rng), unitary_group.rvs(2, random_state=rng))
    assert negativity(U @ rho @ U.conj().T) == pytest.approx(negativity(rho), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_partial_transpose_involution(seed):
    rho = random_density(np.random.default_rng(seed), 6)
    np.testing.assert_array_equal(partial_transpose(partial_transpose(rho, (2, 3)), (2, 3)), rho)


def test_fidelity_examples():
    rng = np.random.default_rng(9)
    rho = random_density(rng, 4)
    assert fidelity(rho, rho) == pytest.approx(1, abs=1e-9)
    a = np.diag([1, 0, 0, 0]).astype(complex)
    b = np.diag([0, 1, 0, 0]).astype(complex)
    assert fidelity(a, b) == pytest.approx(0, abs=1e-12)
    assert 0.7 < fidelity(REFERENCE_RHO, bell_state()) < 0.95
    with pytest.raises(ValueError):
        fidelity(a, np.eye(2))
    pure = random_pure(rng, 4)
    assert fidelity(pure, rho) == pytest.approx(np.trace(pure @ rho).real, abs=1e-12)
    # matrix square-root route
    s = sqrtm(rho)
    other = random_density(rng, 4)
    assert fidelity(rho, other) == pytest.approx(np.trace(sqrtm(s @ other @ s)).real ** 2, abs=1e-9)


def test_check_density_matrix_rejects():
    with pytest.raises(ValueError):
        check_density_matrix(np.diag([0.5, 0.6, -0.1, 0.0]))
    with pytest.raises(ValueError):
        check_density_matrix(np.eye(4))
    with pytest.raises(ValueError):
        check_density_matrix(np.array([[0.5, 1], [0, 0.5]]))


def test_projection_probabilities_sum():
    # rows 1-4 form a complete basis
    rho = random_density(np.random.default_rng(10), 4)
    p = projection_probabilities(rho, build_projection_set())
    assert p[:4].sum() == pytest.approx(1)
    assert np.all(p >= -1e-12)


def test_tomography_data_validation():
    with pytest.raises(ValueError):
        TomographyData(np.zeros(15), 1.0)
    with pytest.raises(ValueError):
        TomographyData(-np.ones(16), 1.0)
