import numpy as np
import pytest
import torch

from cprlab.baselines import (
    NlmsConfig,
    VanillaAeConfig,
    VanillaAutoencoder,
    nlms_denoise,
    nlms_session,
    vanilla_ae_denoise,
    vanilla_ae_fit,
)
from cprlab.errors import InvalidInputError
from cprlab.layers import DTYPE, mae_loss
from cprlab.metrics import snr_db
from cprlab.preprocessor import SignalPreprocessor

SMALL_VANILLA = VanillaAeConfig(window=64, hidden=16, epochs=2, stride=32, seed=3)


class TestNlms:
    def test_constant_input_converges(self):
        c = 2.5
        out = nlms_denoise(np.full(4000, c))
        assert np.abs(out[-1000:] - c).max() < 1e-3 * abs(c) + 1e-6

    def test_zero_step_is_pure_delay(self, rng):
        x = rng.standard_normal(300)
        cfg = NlmsConfig(mu=0.0)
        out = nlms_denoise(x, cfg)
        warm_up = cfg.order + cfg.delay - 1
        np.testing.assert_array_equal(out[warm_up:], x[cfg.order - 1:-cfg.delay])
        np.testing.assert_array_equal(out[:warm_up], x[:warm_up])

    def test_defaults_predict_one_cycle_ahead(self):
        cfg = NlmsConfig()
        assert (cfg.order, cfg.mu, cfg.eps, cfg.delay) == (64, 0.1, 1e-6, 60)

    def test_cycle_delay_averages_out_gain_runs(self):
        rng = np.random.default_rng(8)
        n, period = 12000, 60
        clean = np.sin(2 * np.pi * np.arange(n) / period)
        gain = np.ones(n)
        for start in rng.integers(0, n - 10, size=600):
            gain[start:start + 10] = rng.uniform(0.2, 1.8)
        noisy = clean * gain
        tail = slice(n // 2, None)
        cycle = nlms_denoise(noisy)
        assert snr_db(clean[tail], cycle[tail]) > snr_db(clean[tail], noisy[tail])

    def test_sinusoid_tracking(self):
        t = np.arange(4000) / 100.0
        x = np.sin(2 * np.pi * 1.5 * t)
        out = nlms_denoise(x, NlmsConfig(order=16, delay=1, mu=0.05))
        assert snr_db(x[-1000:], out[-1000:]) > 20.0

    def test_causal(self, rng):
        x = rng.standard_normal(500)
        y = x.copy()
        y[400:] += 10.0
        np.testing.assert_array_equal(nlms_denoise(x)[:401], nlms_denoise(y)[:401])

    def test_rejects_gaps(self):
        x = np.ones(100)
        x[50] = np.nan
        with pytest.raises(InvalidInputError):
            nlms_denoise(x)

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            NlmsConfig(order=0)
        with pytest.raises(InvalidInputError):
            NlmsConfig(mu=3.0)

    def test_session_path(self, short_noisy_sessions):
        stats = SignalPreprocessor().fit(short_noisy_sessions)
        out = nlms_session(short_noisy_sessions[0], stats)
        assert out.length == short_noisy_sessions[0].length
        assert np.isfinite(out.to_array()).all()
        assert out.metadata["method"] == "nlms"


class TestVanillaAutoencoder:
    def test_identity_capacity(self, rng):
        net = VanillaAutoencoder(32, 32).identity_()
        x = torch.tensor(rng.standard_normal((8, 32)), dtype=DTYPE)
        assert mae_loss(net(x), x).item() < 1e-12

    def test_identity_needs_full_width(self):
        with pytest.raises(InvalidInputError):
            VanillaAutoencoder(32, 8).identity_()

    def test_config_requires_undercomplete(self):
        with pytest.raises(InvalidInputError):
            VanillaAeConfig(window=64, hidden=64)

    def test_deterministic(self, short_noisy_sessions):
        a = vanilla_ae_fit(short_noisy_sessions, SMALL_VANILLA)
        b = vanilla_ae_fit(short_noisy_sessions, SMALL_VANILLA)
        assert a.history == b.history
        for name, tensor in a.state_dict().items():
            assert torch.equal(tensor, b.state_dict()[name]), name

    def test_denoise_uses_shared_preprocessing(self, short_noisy_sessions):
        stats = SignalPreprocessor().fit(short_noisy_sessions)
        model = vanilla_ae_fit(short_noisy_sessions, SMALL_VANILLA, stats)
        session = short_noisy_sessions[1]
        out = vanilla_ae_denoise(model, session)
        ref = nlms_session(session, stats)
        assert out.length == session.length
        assert np.isfinite(out.to_array()).all()
        assert out.metadata["method"] == "vanilla"
        assert out.metadata["preprocessing_digest"] == ref.metadata["preprocessing_digest"]
