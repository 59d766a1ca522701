import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogradar.spectrum import (
    MHZ,
    Catalog,
    ChannelGrid,
    CostWeights,
    Waveform,
    bits_key,
    bits_to_str,
    build_catalog,
    catalog_costs,
    collision_bw,
    cost,
    distortion,
    fit_lipschitz_constants,
    key_to_bits,
    lipschitz_metric,
    missed_bw,
    read_catalog_csv,
    str_to_bits,
    widest_clean_id,
)


@pytest.fixture(scope="module")
def grid():
    return ChannelGrid()


@pytest.fixture(scope="module")
def catalog(grid):
    return build_catalog(grid, 10 * MHZ, 100 * MHZ, 10 * MHZ)


@pytest.fixture(scope="module")
def weights(catalog):
    return CostWeights.for_catalog(catalog)


def _bits(S, on):
    s = np.zeros(S, dtype=bool)
    s[list(on)] = True
    return s


def _enumerate_bands(B, bws, step):
    """Brute-force list of (fc, bw) whose band fits [-B/2, B/2] on an fc grid."""
    out = []
    for bw in bws:
        # candidate centres on a fine 1 MHz lattice, keep those aligned to step
        for fc_mhz in range(-int(B / MHZ), int(B / MHZ) + 1):
            fc = fc_mhz * MHZ
            lo, hi = fc - bw / 2, fc + bw / 2
            if lo < -B / 2 - 1 or hi > B / 2 + 1:
                continue
            if round((lo + B / 2) / step, 6) % 1 == 0:
                out.append((fc, bw))
    return out


# -- catalog -----------------------------------------------------------------


def test_default_catalog_has_55_waveforms(catalog):
    assert len(catalog) == 55
    assert catalog.bw.min() == 10 * MHZ and catalog.bw.max() == 100 * MHZ
    assert catalog.fc.min() == -45 * MHZ and catalog.fc.max() == 45 * MHZ


def test_default_catalog_matches_enumeration(catalog):
    bws = [k * 10 * MHZ for k in range(1, 11)]
    expected = sorted(_enumerate_bands(100 * MHZ, bws, 10 * MHZ))
    got = sorted((w.fc, w.bw) for w in catalog)
    assert got == pytest.approx(expected)


def test_single_fullband_waveform(grid):
    cat = build_catalog(grid, 100 * MHZ, 100 * MHZ, 10 * MHZ)
    assert len(cat) == 1
    assert cat[0].fc == 0 and cat[0].bw == 100 * MHZ


def test_small_channel_catalog():
    g = ChannelGrid(B=40 * MHZ, S=4)
    cat = build_catalog(g, 10 * MHZ, 40 * MHZ, 10 * MHZ)
    assert len(cat) == 10
    assert sorted(np.unique(cat.bw, return_counts=True)[1]) == [1, 2, 3, 4]


def test_catalog_ids_and_fit(catalog, grid):
    assert [w.id for w in catalog] == list(range(len(catalog)))
    for w in catalog:
        lo, hi = w.band
        assert lo >= -grid.B / 2 - 1 and hi <= grid.B / 2 + 1


def test_catalog_rejects_bad_waveforms(grid):
    with pytest.raises(ValueError):
        Catalog([Waveform(0, 40 * MHZ, 30 * MHZ)], grid)
    with pytest.raises(ValueError):
        Catalog([Waveform(1, 0.0, 10 * MHZ)], grid)
    with pytest.raises(ValueError):
        Waveform(0, 0.0, -1.0)


def test_fullband_lookup(catalog):
    w = catalog[catalog.fullband_id]
    assert w.bw == 100 * MHZ and w.fc == 0
    assert catalog.find(0, 100 * MHZ) is w
    with pytest.raises(KeyError):
        catalog.find(0, 50 * MHZ)


def test_catalog_csv_round_trip(catalog, grid):
    buf = io.StringIO()
    from cogradar.spectrum import write_catalog_csv

    write_catalog_csv(catalog, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "id,fc_hz,bw_hz,duration_s,amplitude"
    assert len(text.splitlines()) == 56
    assert read_catalog_csv(io.StringIO(text), grid) == catalog


# -- cost terms --------------------------------------------------------------


def test_collision_disjoint_is_zero(grid):
    w = Waveform(0, 40 * MHZ, 20 * MHZ)
    assert collision_bw(w, _bits(10, [0, 1]), grid) == 0


def test_collision_all_ones_counts_support(grid, catalog):
    ones = np.ones(10, dtype=bool)
    for w in catalog:
        assert collision_bw(w, ones, grid) == pytest.approx(w.bw / grid.B)


def test_collision_example(grid):
    w = Waveform(0, -40 * MHZ, 20 * MHZ)
    assert collision_bw(w, _bits(10, [0, 1]), grid) == pytest.approx(0.2)


def test_collision_rejects_wrong_length(grid):
    with pytest.raises(ValueError):
        collision_bw(Waveform(0, 0, 10 * MHZ), np.zeros(3), grid)


def test_missed_zero_for_widest_clean(catalog):
    s = _bits(10, [0, 1])
    best = widest_clean_id(catalog, s)
    assert catalog[best].bw == 80 * MHZ
    assert missed_bw(catalog[best], s, catalog) == 0


def test_missed_all_ones_is_zero(catalog):
    ones = np.ones(10, dtype=bool)
    assert widest_clean_id(catalog, ones) is None
    assert all(missed_bw(w, ones, catalog) == 0 for w in catalog)


def test_missed_example(catalog):
    s = _bits(10, [9])
    # brute-force oracle: widest waveform whose band avoids the top sub-channel
    widest = max(w.bw for w in catalog if w.band[1] <= 40 * MHZ + 1)
    assert widest == 90 * MHZ
    w = Waveform(-1, 0.0, 10 * MHZ)
    assert missed_bw(w, s, catalog) == pytest.approx(0.8)


def test_distortion_basics(catalog, weights):
    w = catalog[7]
    assert distortion(w, w, weights) == 0
    assert distortion(w, None, weights) == 0


def test_distortion_normalised_to_one(catalog, weights):
    # oracle: brute-force max over all catalog pairs
    best = max(
        weights.gamma1 * (a.fc - b.fc) ** 2 + weights.gamma2 * (a.bw - b.bw) ** 2
        for a, b in itertools.product(catalog, catalog)
    )
    assert best == pytest.approx(1.0, abs=1e-12)
    assert weights.gamma1 == pytest.approx(1 / 10125 / MHZ**2)
    assert weights.gamma2 == pytest.approx(1 / 10125 / MHZ**2)


def test_cost_zero_when_everything_ideal(catalog, weights):
    s = _bits(10, [0, 1])
    w = catalog[widest_clean_id(catalog, s)]
    assert cost(w, s, w, catalog, weights) == 0


def test_cost_all_ones_fullband(catalog, weights):
    w = catalog[catalog.fullband_id]
    ones = np.ones(10, dtype=bool)
    assert cost(w, ones, w, catalog, weights) == pytest.approx(weights.beta1)


def test_cost_weighted_sum_example(catalog):
    # collision 0.2 (bits 0,1 under a band over sub-channels 0..4),
    # missed (80 - 50) / 100 = 0.3, distortion 0.06 from a 10 MHz fc step
    w = Waveform(-1, -25 * MHZ, 50 * MHZ)
    w_prev = Waveform(-2, -15 * MHZ, 50 * MHZ)
    weights = CostWeights(gamma1=0.06 / (10 * MHZ) ** 2, gamma2=1e-18)
    s = _bits(10, [0, 1])
    assert collision_bw(w, s, catalog.grid) == pytest.approx(0.2)
    assert missed_bw(w, s, catalog) == pytest.approx(0.3)
    assert distortion(w, w_prev, weights) == pytest.approx(0.06)
    assert cost(w, s, w_prev, catalog, weights) == pytest.approx(0.18667, abs=1e-5)
    assert cost(w, s, w_prev, catalog, weights) == pytest.approx(0.56 / 3, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(key=st.integers(0, 2**10 - 1), prev=st.integers(0, 54))
def test_catalog_costs_match_scalar_cost(catalog, weights, key, prev):
    s = key_to_bits(key, 10)
    w_prev = catalog[prev]
    terms = catalog_costs(catalog, s, w_prev, weights)
    scalar = [cost(w, s, w_prev, catalog, weights) for w in catalog]
    np.testing.assert_allclose(terms.total, scalar, atol=1e-12)
    assert np.all((terms.collision >= 0) & (terms.collision <= 1))
    assert np.all((terms.missed >= 0) & (terms.missed <= 1))
    assert np.all((terms.distortion >= 0) & (terms.distortion <= 1 + 1e-12))
    assert np.all((terms.total >= 0) & (terms.total <= 1 + 1e-12))


def test_cost_weights_validation():
    with pytest.raises(ValueError):
        CostWeights(beta1=0.5, beta2=0.5, beta3=0.5)
    with pytest.raises(ValueError):
        CostWeights(gamma1=-1.0)


# -- Lipschitz ---------------------------------------------------------------


def test_lipschitz_metric_examples(catalog):
    a = Waveform(0, 0.0, 20 * MHZ)
    b = Waveform(1, 10 * MHZ, 20 * MHZ)
    assert lipschitz_metric(a, a, 1e-8, 1e-8) == 0
    assert lipschitz_metric(a, b, 1e-8, 1e-8) == pytest.approx(0.1)
    for x, y in itertools.combinations(catalog, 2):
        assert lipschitz_metric(x, y, 2e-9, 3e-9) == lipschitz_metric(y, x, 2e-9, 3e-9)
    with pytest.raises(ValueError):
        lipschitz_metric(a, b, 0.0, 1.0)


def test_fitted_lipschitz_constants_bound_cost_gaps(catalog, weights):
    rng = np.random.default_rng(3)
    states = [rng.random(10) < 0.3 for _ in range(12)]
    L1, L2 = fit_lipschitz_constants(catalog, weights, states, catalog[20])
    assert L1 > 0 and L2 > 0
    for s in states:
        c = catalog_costs(catalog, s, catalog[20], weights).total
        for i, j in itertools.combinations(range(len(catalog)), 2):
            assert abs(c[i] - c[j]) <= lipschitz_metric(catalog[i], catalog[j], L1, L2) + 1e-12


# -- bit vectors -------------------------------------------------------------


def test_bit_string_order():
    s = _bits(10, [0])
    assert bits_to_str(s) == "1000000000"
    assert bits_key(s) == 2**9
    assert np.array_equal(str_to_bits("1000000000"), s)
    with pytest.raises(ValueError):
        str_to_bits("10a")


@given(st.integers(0, 2**10 - 1))
def test_bits_key_round_trip(key):
    assert bits_key(key_to_bits(key, 10)) == key
