import math

import numpy as np
import pytest

from cprlab.dataset import CHANNELS
from cprlab.errors import InvalidInputError, SchemaError
from cprlab.preprocessor import (
    STD_FLOOR,
    NormStats,
    SignalPreprocessor,
    denormalize,
    extract_windows,
    fit_stats,
    impute,
    normalize,
    overlap_add,
    training_starts,
    window_starts,
)
from tests.conftest import make_session


class TestImpute:
    def test_midpoint(self):
        filled, mask = impute([1.0, math.nan, 3.0])
        np.testing.assert_array_equal(filled, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(mask, [True, False, True])

    def test_no_gaps(self):
        x = np.array([4.0, 5.0, 6.0])
        filled, mask = impute(x)
        np.testing.assert_array_equal(filled, x)
        assert mask.all()

    def test_edges_take_nearest(self):
        filled, _ = impute([math.nan, math.nan, 5.0])
        np.testing.assert_array_equal(filled, [5.0, 5.0, 5.0])
        filled, _ = impute([2.0, math.nan, math.nan])
        np.testing.assert_array_equal(filled, [2.0, 2.0, 2.0])

    def test_all_missing(self):
        with pytest.raises(InvalidInputError):
            impute([math.nan, math.nan])


class TestNormalization:
    def test_round_trip(self, rng):
        data = rng.normal(5.0, 3.0, size=(5, 400))
        stats = fit_stats([data])
        np.testing.assert_allclose(denormalize(normalize(data, stats), stats), data, rtol=1e-12)

    def test_fitted_set_is_standardized(self, rng):
        arrays = [rng.normal(2.0, 7.0, size=(5, 300)) for _ in range(3)]
        stats = fit_stats(arrays)
        z = normalize(np.concatenate(arrays, axis=1), stats)
        assert np.abs(z.mean(axis=1)).max() < 1e-9
        assert np.abs(z.std(axis=1) - 1).max() < 1e-9

    def test_constant_channel_floor(self, rng):
        data = rng.standard_normal((5, 100))
        data[2] = 7.0
        with pytest.warns(UserWarning, match="velocity"):
            stats = fit_stats([data])
        assert stats.std[2] == STD_FLOOR
        assert np.isfinite(normalize(data, stats)).all()

    def test_stats_dict(self):
        stats = NormStats(tuple(range(5)), (1.0,) * 5)
        assert NormStats.from_dict(stats.to_dict()) == stats
        with pytest.raises(SchemaError):
            NormStats.from_dict({"compression": [0, 1]})


class TestWindowing:
    def test_training_window_count(self):
        assert len(training_starts(6000, 512, 64)) == 86
        assert len(training_starts(100, 512, 64)) == 0

    def test_inference_windows_cover_end(self):
        starts = window_starts(1000, 256, 128)
        assert starts[0] == 0
        assert starts[-1] == 1000 - 256
        assert window_starts(1024, 256, 128)[-1] == 768

    def test_too_short(self):
        with pytest.raises(InvalidInputError):
            window_starts(100, 256, 128)

    def test_overlap_add_averages(self, rng):
        data = rng.standard_normal((5, 1000))
        starts = window_starts(1000, 256, 100)
        windows = extract_windows(data, starts, 256)
        assert windows.shape == (len(starts), 5, 256)
        np.testing.assert_allclose(overlap_add(windows, starts, 1000), data, atol=1e-12)

    def test_overlap_add_uniform_weights(self):
        windows = np.stack([np.full((1, 4), 1.0), np.full((1, 4), 3.0)])
        out = overlap_add(windows, np.array([0, 2]), 6)
        np.testing.assert_array_equal(out[0], [1, 1, 2, 2, 3, 3])


class TestSignalPreprocessor:
    def test_prepare_requires_stats(self, default_session):
        with pytest.raises(InvalidInputError):
            SignalPreprocessor().prepare(default_session)

    def test_prepare_and_restore(self, short_noisy_sessions):
        pre = SignalPreprocessor()
        pre.fit(short_noisy_sessions)
        session = short_noisy_sessions[0]
        prepared = pre.prepare(session)
        assert prepared.values.shape == (5, session.length)
        assert np.isfinite(prepared.values).all()
        np.testing.assert_array_equal(prepared.mask, np.isfinite(session.to_array()))

        restored = pre.restore(prepared.values, session, method="identity")
        assert restored.is_clean is False
        assert restored.metadata["method"] == "identity"
        observed = prepared.mask
        np.testing.assert_allclose(restored.to_array()[observed], session.to_array()[observed], rtol=1e-12)

    def test_digest_tracks_content(self, short_noisy_sessions):
        pre = SignalPreprocessor()
        pre.fit(short_noisy_sessions)
        a = pre.prepare(short_noisy_sessions[0])
        b = pre.prepare(short_noisy_sessions[0])
        c = pre.prepare(short_noisy_sessions[1])
        assert a.digest == b.digest
        assert a.digest != c.digest

    def test_impute_session(self):
        data = np.tile(np.arange(10.0), (5, 1))
        data[:, 4] = np.nan
        filled, mask = SignalPreprocessor.impute_session(make_session(data, is_clean=False))
        np.testing.assert_array_equal(filled[:, 4], np.full(len(CHANNELS), 4.0))
        assert not mask[:, 4].any()
