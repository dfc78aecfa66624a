import numpy as np
import pytest
from hypothesis import given, strategies as st

from smlsbm.generators import (
    InfeasibleParameters,
    PlantedParams,
    derive_p_in,
    derive_p_out,
    detectability_gap,
    expected_mean_degree,
    fig3_spec,
    fig4_spec,
    params_from_gap,
    sample_sbm,
    sample_smlsbm,
)
from smlsbm.network import validate_adjacency


def test_fig3_strata_have_mean_degree_20():
    # the third stratum uses p_in = 0.125
    for p_in, p_out in [(0.6, 0.0083), (0.4, 0.075), (0.125, 0.167)]:
        c = expected_mean_degree(PlantedParams(128, 4, p_in, p_out))
        assert c == pytest.approx(20, abs=0.05)


def test_fig4_gap_ten_parameters():
    p_in, p_out = params_from_gap(16, 128, 4, 10)
    assert p_in == pytest.approx(0.18359375, abs=1e-12)
    assert p_out == pytest.approx(0.10546875, abs=1e-12)
    assert round(p_in, 4) == 0.1836 and round(p_out, 4) == 0.1055
    params = PlantedParams(128, 4, p_in, p_out)
    assert expected_mean_degree(params) == pytest.approx(16)
    assert detectability_gap(params) == pytest.approx(10)


def test_infeasible_parameters():
    with pytest.raises(InfeasibleParameters):
        derive_p_out(20, 128, 4, 0.9)
    with pytest.raises(InfeasibleParameters):
        params_from_gap(16, 128, 4, 80)
    with pytest.raises(InfeasibleParameters):
        PlantedParams(10, 2, 1.2, 0.1)


@given(st.floats(1, 40), st.integers(2, 8), st.floats(0, 1))
def test_p_in_p_out_inverse(c, k, frac):
    n = 128
    total = c * k / n
    p_out = frac * min(total / (k - 1), 1.0)
    try:
        p_in = derive_p_in(c, n, k, p_out)
    except InfeasibleParameters:
        return
    assert derive_p_out(c, n, k, p_in) == pytest.approx(p_out, abs=1e-12)


def test_sampling_is_seed_deterministic():
    a1, t1 = sample_smlsbm(fig3_spec(seed=4))
    a2, t2 = sample_smlsbm(fig3_spec(seed=4))
    a3, _ = sample_smlsbm(fig3_spec(seed=5))
    assert a1 == a2 and np.array_equal(t1.y, t2.y)
    assert a1 != a3


def test_fig3_layers_concentrate_at_c():
    net, truth = sample_smlsbm(fig3_spec(seed=0))
    assert net.n_layers == 30 and net.n_nodes == 128
    # each layer's mean degree is an average of 128 dependent counts; its sd is
    # about sqrt(2 c / N) for sparse layers
    se = np.sqrt(2 * 20 * (1 - 20 / 127) / 128)
    assert np.all(np.abs(net.mean_degrees() - 20) < 4 * se)
    assert [len(np.unique(z)) for z in truth.z] == [4, 4, 4]
    assert not np.array_equal(truth.z[0], truth.z[1])


def test_fig4_shares_assignment_and_splits_layers():
    net, truth = sample_smlsbm(fig4_spec(14, 10, seed=1))
    assert truth.y.tolist() == [0] * 5 + [1] * 5
    assert np.array_equal(truth.z[0], truth.z[1])
    with pytest.raises(ValueError):
        fig4_spec(14, 11)


@given(st.integers(0, 2**31), st.integers(2, 30), st.floats(0, 1), st.floats(0, 1))
def test_samples_are_valid_adjacency(seed, n, p_in, p_out):
    z = np.arange(n) % 2
    pi = np.array([[p_in, p_out], [p_out, p_in]])
    a = sample_sbm(pi, z, seed)
    validate_adjacency(a)
    if p_in == 0 and p_out == 0:
        assert a.sum() == 0


def test_sample_edge_frequency_matches_pi():
    z = np.repeat([0, 1], 100)
    pi = np.array([[0.3, 0.05], [0.05, 0.3]])
    a = sample_sbm(pi, z, 11)
    within = a[:100, :100][np.triu_indices(100, 1)].mean()
    across = a[:100, 100:].mean()
    assert within == pytest.approx(0.3, abs=0.02) and across == pytest.approx(0.05, abs=0.01)
