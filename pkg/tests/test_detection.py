import numpy as np
import pytest
from hypothesis import given, strategies as st

from freqbin.detection import (
    CoincidenceRecord,
    CoincidenceTable,
    DetectionConfig,
    build_table,
    coincidence_to_accidental,
    compute_jsi,
    dip_metrics,
    expected_counts,
    fit_fringe,
    fringe_scan,
    sample_counts,
    schmidt_bound,
    subtract_background,
    visibility,
)
from freqbin.errors import LatticeRangeError
from freqbin.lattice import BiphotonState, FrequencyLattice, make_comb_state
from freqbin.optics import ModulatorDrive, SpectralMask, apply_mask, apply_modulator, best_single_order_index

from oracles import schmidt_diagonal

LAT = FrequencyLattice(subdivision=2, max_index=84)


def test_config_validation():
    with pytest.raises(ValueError):
        DetectionConfig(eta_signal=0)
    with pytest.raises(ValueError):
        DetectionConfig(eta_idler=1.5)
    with pytest.raises(ValueError):
        DetectionConfig(pair_flux=-1)


def test_expected_counts_model():
    st_ = make_comb_state(LAT, {5: 1.0})
    cfg = DetectionConfig(0.5, 0.2, 1000.0, 10.0, 0.3)
    assert expected_counts(st_, 10, -10, cfg) == pytest.approx(1000 * 10 * 0.1 + 3.0)
    assert expected_counts(st_, 10, -12, cfg) == pytest.approx(3.0)
    with pytest.raises(LatticeRangeError):
        expected_counts(st_, -10, 10, cfg)


@given(st.floats(0.0, 1e5), st.floats(0.0, 1.0), st.floats(0.1, 10.0))
def test_expected_counts_linear(flux, p, factor):
    a = DetectionConfig(pair_flux=flux)
    b = DetectionConfig(pair_flux=flux * factor)
    lat = FrequencyLattice(subdivision=1, max_index=2)
    state = BiphotonState(lat, {(1, -1): np.sqrt(p)})
    assert expected_counts(state, 1, -1, b) == pytest.approx(factor * expected_counts(state, 1, -1, a), rel=1e-12)
    assert expected_counts(state, 1, -1, a) == pytest.approx(flux * p, rel=1e-12, abs=1e-300)


def test_with_car():
    cfg = DetectionConfig(pair_flux=100.0, integration_time=2.0).with_car(10.0, 0.5)
    assert cfg.accidental_counts == pytest.approx(100 * 2 * 0.5 / 10)


def test_seeded_sampling_reproducible():
    cfg = DetectionConfig(rng_seed=42)
    a = sample_counts(np.full(20, 30.0), cfg)
    b = sample_counts(np.full(20, 30.0), cfg)
    np.testing.assert_array_equal(a, b)
    c = sample_counts(np.full(20, 30.0), DetectionConfig(rng_seed=43))
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        sample_counts(-1.0)


def test_build_table_reproducible():
    st_ = make_comb_state(LAT, {k: 1.0 for k in range(3, 8)})
    cfg = DetectionConfig(pair_flux=1e4, integration_time=1.0, accidental_rate=5.0, rng_seed=9)
    ch = [(2 * k, -2 * k) for k in range(3, 8)]
    t1, t2 = build_table(st_, ch, cfg), build_table(st_, ch, cfg)
    assert t1 == t2
    assert len(t1) == 5 and t1.records[0].accidentals == 5.0


def test_subtract_background_examples():
    table = CoincidenceTable([
        CoincidenceRecord(1, -1, 40, 20.0),
        CoincidenceRecord(2, -2, 5, 9.0),
        CoincidenceRecord(3, -3, 7, 0.0),
    ])
    out = subtract_background(table).records
    assert out[0].counts == 20 and not out[0].clipped
    assert out[1].counts == 0 and out[1].clipped
    assert out[2] == table.records[2]


def test_jsi_examples():
    pairs = range(3, 41)
    st_ = make_comb_state(LAT, {k: 1.0 for k in pairs})
    sig = [2 * k for k in pairs]
    idl = [-2 * k for k in pairs]
    jsi = compute_jsi(st_, sig, idl, DetectionConfig(pair_flux=38.0))
    np.testing.assert_allclose(jsi, np.eye(38), atol=1e-12)

    cfg = DetectionConfig(pair_flux=38.0).with_car(10.0, 1 / 38)
    noisy = compute_jsi(st_, sig, idl, cfg)
    floor = cfg.accidental_counts
    off = noisy[~np.eye(38, dtype=bool)]
    np.testing.assert_allclose(off, floor)
    assert coincidence_to_accidental(noisy, floor) == pytest.approx(10.0)

    single = compute_jsi(make_comb_state(LAT, {4: 1.0}), sig[:3], idl[:3], DetectionConfig())
    assert np.count_nonzero(single) == 1
    with pytest.raises(ValueError):
        compute_jsi(st_, [], idl, DetectionConfig())


def test_schmidt_examples():
    assert schmidt_bound(np.eye(38)) == pytest.approx(38, abs=1e-9)
    u = np.random.default_rng(0).random(12)
    assert schmidt_bound(np.outer(u, u[::-1])) == pytest.approx(1, abs=1e-9)
    p = np.random.default_rng(1).random(20)
    assert schmidt_bound(np.diag(p)) == pytest.approx(schmidt_diagonal(p), abs=1e-9)
    with pytest.raises(ValueError):
        schmidt_bound(np.zeros((3, 3)))


def test_schmidt_background_subtraction():
    noisy = np.eye(10) * 10 + 1.0
    assert schmidt_bound(noisy, background=1.0) == pytest.approx(10, abs=1e-9)
    assert schmidt_bound(noisy) < 10


@given(st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=12), st.floats(1e-3, 1e3))
def test_schmidt_scale_invariant_and_bounded(weights, scale):
    m = np.diag(weights) + 0.01
    k = schmidt_bound(m)
    assert k == pytest.approx(schmidt_bound(scale * m), rel=1e-9)
    assert 1 - 1e-9 <= k <= len(weights) + 1e-9


def test_visibility_examples():
    assert visibility(100, 0) == 1.0
    assert visibility(193, 7) == pytest.approx(0.93)
    assert visibility(50, 50) == 0.0
    with pytest.raises(ValueError):
        visibility(0, 0)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_visibility_antisymmetric(a, b):
    if a + b > 0:
        assert visibility(a, b) == -visibility(b, a)
        assert -1 <= visibility(a, b) <= 1


def _qubit_builder(lat):
    base = make_comb_state(lat, {6: 1.0, 7: 1.0})

    def build(phi):
        return apply_mask(base, SpectralMask.pair_phases(lat, {7: phi}, "signal"))

    return build


def test_fringe_scan_ideal_qubit():
    lat = FrequencyLattice(subdivision=4, max_index=40)
    build = _qubit_builder(lat)
    drive = ModulatorDrive(1, best_single_order_index(2))
    scan = fringe_scan(lambda p: apply_modulator(build(p), drive), [0.0, np.pi], (26, -26), DetectionConfig())
    assert scan[0][1] > 0.1 and scan[1][1] < 1e-20
    with pytest.raises(ValueError):
        fringe_scan(build, [], (26, -26), DetectionConfig())


def test_fit_fringe_exact_model():
    phi = np.linspace(0, 2 * np.pi, 13, endpoint=False)
    y = 80 * (1 + 0.7 * np.cos(phi + 0.4)) / 2 + 5
    fit = fit_fringe(phi, y, floor=5)
    assert fit.amplitude == pytest.approx(80)
    assert fit.visibility == pytest.approx(0.7)
    assert fit.offset == pytest.approx(0.4)
    assert fit.residual < 1e-9


def test_fit_fringe_half_peak_floor():
    phi = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    y = (1 + np.cos(phi)) / 2 + 0.5
    assert fit_fringe(phi, y).visibility == pytest.approx(0.5)
    assert fit_fringe(phi, y, floor=0.5).visibility == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_fringe([0, 1], [1, 2])


def test_dip_metrics_triangle():
    x = np.linspace(-2, 2, 401)
    y = np.minimum(1, np.abs(x))
    m = dip_metrics(list(zip(x, y)))
    assert m["x_min"] == pytest.approx(0)
    assert m["fwhm"] == pytest.approx(1.0)
    assert m["visibility"] == pytest.approx(1.0)
