import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import stochnet as sn
from stochnet.inference import (
    ClampSet,
    NonErgodicError,
    StateSpaceTooLarge,
    enumerate_posterior,
    gibbs_clamped,
    iou,
    marginal_to_gray,
    marginal_to_pgm,
    max_marginal_decide,
    mc_marginals,
)
from stochnet.pnm import read_pnm

from conftest import identity_delta_chain, tiny_sigmoid_net


class TestEnumeration:
    def test_single_sigmoid_output_balanced(self):
        spec = sn.NetworkSpec(1, (sn.LayerSpec(sn.SIGMOID, 1, sn.Dense((0,))),))
        net = sn.Network(spec)
        table = enumerate_posterior(net, np.array([0.3]))
        assert table.output_marginals()[0] == pytest.approx(0.5)

    def test_probabilities_sum_to_one(self):
        net = tiny_sigmoid_net(sizes=(2, 3, 2), seed=77, scale=1.5)
        table = enumerate_posterior(net, np.array([1.0, -0.5]))
        assert table.total_probability == pytest.approx(1.0, abs=1e-12)

    def test_frozen_2_3_2_fixture(self):
        # fixture recomputed independently with 40-digit arithmetic from
        # the same parameters; see the joint values below
        net = tiny_sigmoid_net(sizes=(2, 3, 2), seed=232, scale=1.2)
        table = enumerate_posterior(net, np.array([0.4, -1.3]))
        marg = table.output_marginals()
        assert marg[0] == pytest.approx(0.5856494119350537360747, abs=1e-14)
        assert marg[1] == pytest.approx(0.3627213865153176476825, abs=1e-14)
        joint = table.joint_distribution()
        assert joint[((0.0, 0.0, 0.0), (0.0, 0.0))] == pytest.approx(
            0.02686746029556296015993, abs=1e-15)
        assert joint[((1.0, 0.0, 1.0), (1.0, 0.0))] == pytest.approx(
            0.01207146005178040655651, abs=1e-15)
        assert joint[((1.0, 1.0, 1.0), (1.0, 1.0))] == pytest.approx(
            0.01132867647756439874853, abs=1e-15)

    def test_state_space_guard(self):
        net = tiny_sigmoid_net(sizes=(2, 24, 1), seed=1)
        with pytest.raises(StateSpaceTooLarge):
            enumerate_posterior(net, np.zeros(2))

    def test_log_likelihood_matches_output_joint(self):
        net = tiny_sigmoid_net(sizes=(2, 2, 2), seed=6)
        table = enumerate_posterior(net, np.array([0.2, 0.8]))
        y = np.array([1.0, 0.0])
        direct = table.output_joint()[(1.0, 0.0)]
        assert table.log_likelihood(y) == pytest.approx(math.log(direct), abs=1e-12)


class TestMcMarginals:
    def test_matches_enumeration_within_three_sigma(self):
        net = tiny_sigmoid_net(sizes=(3, 3, 2), seed=41, scale=1.2)
        x = np.array([0.3, -0.9, 1.1])
        exact = enumerate_posterior(net, x).output_marginals()
        field = mc_marginals(net, x, 100_000, sn.RngStream(4))
        assert np.abs(field.outputs - exact).max() < 0.005

    def test_all_delta_marginals_are_zero_or_one(self):
        net = identity_delta_chain(width=2, depth=2)
        field = mc_marginals(net, np.array([1.0, 0.0]), 100, sn.RngStream(2))
        assert set(field.outputs.tolist()) <= {0.0, 1.0}
        assert np.array_equal(field.outputs, [1.0, 0.0])

    def test_fixed_seed_reproducible(self):
        net = tiny_sigmoid_net(seed=3)
        x = np.array([0.5, 0.5])
        a = mc_marginals(net, x, 5000, sn.RngStream(77))
        b = mc_marginals(net, x, 5000, sn.RngStream(77))
        assert np.array_equal(a.outputs, b.outputs)

    def test_sample_count_recorded(self):
        net = tiny_sigmoid_net(seed=3)
        field = mc_marginals(net, np.array([0.1, 0.1]), 1234, sn.RngStream(0))
        assert field.sample_count == 1234


class TestDecide:
    def test_above_half_positive(self):
        assert max_marginal_decide(np.array([0.7]))[0] == 1.0

    def test_tie_goes_negative(self):
        assert max_marginal_decide(np.array([0.5]))[0] == 0.0
        assert max_marginal_decide(np.array([0.5]), sn.TANH)[0] == -1.0

    def test_elementwise(self):
        got = max_marginal_decide(np.array([0.2, 0.8, 0.5001]))
        assert np.array_equal(got, [0.0, 1.0, 1.0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8),
           st.floats(0.1, 4.0))
    def test_invariant_under_monotone_transform(self, probs, power):
        # argmax over the two event scores is unchanged by any strictly
        # monotone transform applied to both
        p = np.asarray(probs)
        direct = max_marginal_decide(p)
        transformed = np.where(p**power > (1 - p)**power, 1.0, 0.0)
        ties = p == 0.5
        assert np.array_equal(direct[~ties], transformed[~ties])


class TestGibbs:
    def test_zero_weight_net_all_half(self):
        net = tiny_sigmoid_net(sizes=(2, 3, 2), seed=1, scale=0.0)
        field = gibbs_clamped(net, np.array([0.4, -0.2]), ClampSet({}),
                              burn_in=50, n_sweeps=500, thinning=5,
                              rng=sn.RngStream(3))
        assert np.allclose(field.outputs, 0.5, atol=1e-12)
        for h in field.hidden:
            assert np.allclose(h, 0.5, atol=1e-12)

    def test_zero_weight_net_half_even_with_clamps(self):
        net = tiny_sigmoid_net(sizes=(2, 3, 2), seed=1, scale=0.0)
        field = gibbs_clamped(net, np.array([0.4, -0.2]), ClampSet({0: 1.0}),
                              burn_in=50, n_sweeps=500, thinning=5,
                              rng=sn.RngStream(3))
        assert field.outputs[0] == 1.0
        assert field.outputs[1] == pytest.approx(0.5, abs=1e-12)

    def test_empty_clamp_matches_enumeration(self):
        net = tiny_sigmoid_net(sizes=(2, 3, 2), seed=15, scale=1.1)
        x = np.array([0.6, -0.4])
        exact = enumerate_posterior(net, x).output_marginals()
        field = gibbs_clamped(net, x, ClampSet({}), burn_in=200,
                              n_sweeps=20_000, thinning=5, rng=sn.RngStream(8))
        assert np.abs(field.outputs - exact).max() < 0.01

    def test_clamp_all_outputs_hidden_match_conditional(self):
        net = tiny_sigmoid_net(sizes=(2, 3, 2), seed=15, scale=1.1)
        x = np.array([0.6, -0.4])
        clamp = ClampSet({0: 1.0, 1: 0.0})
        exact_out, exact_hidden = enumerate_posterior(net, x).conditional_marginals(clamp)
        field = gibbs_clamped(net, x, clamp, burn_in=200, n_sweeps=20_000,
                              thinning=5, rng=sn.RngStream(9))
        assert np.array_equal(field.outputs, exact_out)  # clamps exact
        for got, want in zip(field.hidden, exact_hidden):
            assert np.abs(got - want).max() < 0.01

    def test_delta_pinned_by_impossible_clamp_is_non_ergodic(self):
        # output delta wired to copy a stochastic hidden unit; clamping the
        # output to a value outside the unit's event set kills every move
        spec = sn.NetworkSpec(1, (
            sn.LayerSpec(sn.SIGMOID, 1, sn.Dense((0,))),
            sn.LayerSpec(sn.DELTA, 1, sn.Dense((1,))),
        ))
        net = sn.Network(spec)
        net.set_unit_params(2, 0, [1.0, 0.0])
        with pytest.raises(NonErgodicError):
            gibbs_clamped(net, np.array([0.2]), ClampSet({0: 0.5}),
                          burn_in=1, n_sweeps=10, thinning=1,
                          rng=sn.RngStream(1))

    def test_clamp_validation(self):
        net = tiny_sigmoid_net()
        with pytest.raises(ValueError):
            gibbs_clamped(net, np.array([0.0, 0.0]), ClampSet({5: 1.0}),
                          burn_in=1, n_sweeps=2, rng=sn.RngStream(0))
        with pytest.raises(ValueError):
            gibbs_clamped(net, np.array([0.0, 0.0]), ClampSet({0: 0.7}),
                          burn_in=1, n_sweeps=2, rng=sn.RngStream(0))


class TestIou:
    def test_identical_masks(self):
        m = np.array([[1, 0], [1, 1]])
        assert iou(m, m) == 1.0

    def test_disjoint(self):
        assert iou(np.array([1, 0]), np.array([0, 1])) == 0.0

    def test_half_overlap(self):
        assert iou(np.array([1, 1]), np.array([1, 0])) == 0.5

    def test_both_empty(self):
        assert iou(np.zeros(4), np.zeros(4)) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            iou(np.zeros(3), np.zeros(4))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**9 - 1), st.integers(0, 2**9 - 1))
    def test_bounds_and_symmetry(self, a_bits, b_bits):
        a = np.array([(a_bits >> i) & 1 for i in range(9)])
        b = np.array([(b_bits >> i) & 1 for i in range(9)])
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou(b, a)


class TestMarginalPgm:
    def test_quantization_rule(self):
        assert marginal_to_gray(np.array([0.0, 0.5, 1.0])).tolist() == [0, 128, 255]

    def test_roundtrip_file(self, tmp_path):
        field = sn.MarginalField(outputs=np.linspace(0, 1, 6),
                                 sample_count=10, grid=(2, 3))
        path = tmp_path / "marg.pgm"
        marginal_to_pgm(field, str(path))
        img = read_pnm(str(path))
        assert img.shape == (2, 3)
        assert img.dtype == np.uint8
        assert img[0, 0] == 0 and img[1, 2] == 255
