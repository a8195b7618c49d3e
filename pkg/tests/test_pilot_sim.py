import numpy as np
import pytest

from csilab.pilot_sim import Observation, PilotBlock, ls_estimate, quantize_observation, transmit_pilots


def _channel(rng, n_b=8, n_u=2):
    return rng.standard_normal((n_b, n_u)) + 1j * rng.standard_normal((n_b, n_u))


def test_pilot_power_checked():
    with pytest.raises(ValueError):
        PilotBlock(np.ones((2, 4)), 2.0)
    assert PilotBlock.qpsk(2, 8, power=3.0, rng=0).power == 3.0


def test_noiseless_observation(rng):
    h = _channel(rng)
    x = PilotBlock.qpsk(2, 6, rng=rng)
    obs = transmit_pilots(h, x, 0.0)
    np.testing.assert_array_equal(obs.received, h @ x.symbols)
    assert obs.quantizer_bits == 0


def test_identity_pilots_return_channel(rng):
    h = _channel(rng)
    x = PilotBlock(np.eye(2), 0.5)
    np.testing.assert_array_equal(transmit_pilots(h, x, 0.0).received, h)
    np.testing.assert_allclose(ls_estimate(transmit_pilots(h, x, 0.0), x), h)


def test_pure_noise_variance(rng):
    x = PilotBlock.orthogonal(1, 100)
    obs = transmit_pilots(np.zeros((100, 1)), x, 0.3, rng)
    assert np.mean(np.abs(obs.received) ** 2) == pytest.approx(0.3, rel=0.05)


def test_noise_preserves_mean(rng):
    h = _channel(rng, 4, 1)
    x = PilotBlock.orthogonal(1, 4)
    mean = np.mean([transmit_pilots(h, x, 1.0, rng).received for _ in range(4000)], axis=0)
    np.testing.assert_allclose(mean, h @ x.symbols, atol=0.05)


def test_shape_mismatch(rng):
    with pytest.raises(ValueError):
        transmit_pilots(_channel(rng, 4, 3), PilotBlock.orthogonal(2, 4), 0.0)
    with pytest.raises(ValueError):
        transmit_pilots(_channel(rng), PilotBlock.orthogonal(2, 4), -1.0)


class TestQuantizer:
    def test_one_bit_sign(self):
        obs = Observation(np.array([[0.3 - 2j]]), 0.0)
        assert quantize_observation(obs, 1).received[0, 0] == 1 - 1j

    def test_one_bit_idempotent(self, rng):
        obs = Observation(_channel(rng), 0.0)
        once = quantize_observation(obs, 1)
        np.testing.assert_array_equal(quantize_observation(once, 1).received, once.received)

    def test_one_bit_scale_invariant(self, rng):
        y = _channel(rng)
        a = quantize_observation(Observation(y, 0.0), 1).received
        b = quantize_observation(Observation(7.5 * y, 0.0), 1).received
        np.testing.assert_array_equal(a, b)
        assert set(np.unique(a.real)) <= {-1.0, 1.0}

    def test_eight_bit_error_matches_uniform_model(self, rng):
        y = (rng.standard_normal(20_000) + 1j * rng.standard_normal(20_000)) / np.sqrt(2)
        out = quantize_observation(Observation(y[None], 0.0), 8).received[0]
        sigma = np.sqrt(np.mean(np.abs(y) ** 2))
        step = 6 * sigma / 2**8
        err = np.mean(np.concatenate([(out - y).real, (out - y).imag]) ** 2)
        assert err == pytest.approx(step**2 / 12, rel=0.2)

    def test_levels_are_bounded(self, rng):
        y = 10 * _channel(rng, 50, 4)
        out = quantize_observation(Observation(y, 0.0), 3)
        assert len(np.unique(out.received.real)) <= 8 and out.quantizer_bits == 3

    @pytest.mark.parametrize("bits", [0, -1, 1.5])
    def test_invalid_bits(self, bits, rng):
        with pytest.raises(ValueError):
            quantize_observation(Observation(_channel(rng), 0.0), bits)


class TestLeastSquares:
    def test_full_rank_recovers_channel(self, rng):
        for _ in range(20):
            h = _channel(rng, 8, 3)
            sym = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
            x = PilotBlock(sym, float(np.mean(np.abs(sym) ** 2)))
            assert np.max(np.abs(ls_estimate(transmit_pilots(h, x, 0.0), x) - h)) < 1e-9

    def test_short_pilots_give_row_space_solution(self, rng):
        h = _channel(rng, 6, 4)
        x = PilotBlock.qpsk(4, 2, rng=rng)
        est = ls_estimate(transmit_pilots(h, x, 0.0), x)
        # projector onto the span the pseudo-inverse maps into
        proj = x.symbols @ np.linalg.pinv(x.symbols)
        np.testing.assert_allclose(est @ proj, est, atol=1e-10)
        assert np.linalg.matrix_rank(est) <= 2
