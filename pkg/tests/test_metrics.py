import json
import math

import numpy as np
import pytest

from cprlab.corruption import CorruptionConfig, corrupt_session
from cprlab.dataset import CHANNELS, dumps_json
from cprlab.errors import (
    DegenerateChannelError,
    DegenerateMatrixError,
    InvalidInputError,
    ShapeError,
    UndefinedSignalError,
)
from cprlab.metrics import EvalReport, correlation_matrix, evaluate, matrix_similarity, psnr_db, snr_db
from tests.conftest import make_session


def random_corr(rng):
    a = rng.uniform(-1, 1, size=(5, 5))
    m = np.triu(a, 1)
    m = m + m.T
    np.fill_diagonal(m, 1.0)
    return m


class TestSnr:
    def test_perfect_estimate(self, rng):
        x = rng.standard_normal(100)
        assert snr_db(x, x) == math.inf

    def test_twenty_db(self):
        clean = np.array([10.0, 0.0, 0.0, 0.0])
        estimate = clean + np.array([0.0, 1.0, 0.0, 0.0])
        assert snr_db(clean, estimate) == pytest.approx(20.0, abs=1e-12)

    def test_matches_direct_sum(self, rng):
        t = np.arange(10**4)
        clean = np.sin(2 * np.pi * t / 250)
        estimate = clean + 0.1 * rng.standard_normal(t.size)
        signal = sum(float(v) ** 2 for v in clean)
        noise = sum(float(e - c) ** 2 for c, e in zip(clean, estimate))
        assert snr_db(clean, estimate) == pytest.approx(10 * math.log10(signal / noise), abs=1e-9)

    def test_all_zero_clean(self):
        with pytest.raises(UndefinedSignalError):
            snr_db(np.zeros(10), np.ones(10))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            snr_db(np.ones(10), np.ones(11))


class TestPsnr:
    def test_twenty_db(self):
        clean = np.array([1.0, -1.0] * 50)
        assert psnr_db(clean, clean + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_perfect_estimate(self):
        assert psnr_db(np.ones(5), np.ones(5)) == math.inf

    def test_scale_invariant(self, rng):
        clean = rng.standard_normal(200)
        estimate = clean + 0.3 * rng.standard_normal(200)
        assert psnr_db(10 * clean, 10 * estimate) == pytest.approx(psnr_db(clean, estimate), abs=1e-9)


class TestCorrelationMatrix:
    def test_structure(self, rng):
        a = rng.standard_normal(10**4)
        session = make_session({
            "compression": a,
            "pressure": a.copy(),
            "velocity": -a,
            "force": rng.standard_normal(10**4),
            "pmouth": rng.standard_normal(10**4),
        })
        corr = correlation_matrix(session)
        assert list(corr.columns) == list(CHANNELS)
        np.testing.assert_array_equal(np.diag(corr), 1.0)
        np.testing.assert_array_equal(corr.to_numpy(), corr.to_numpy().T)
        assert corr.loc["compression", "pressure"] == pytest.approx(1.0)
        assert corr.loc["compression", "velocity"] == pytest.approx(-1.0)
        assert abs(corr.loc["force", "pmouth"]) < 0.05

    def test_constant_channel_named(self, rng):
        data = rng.standard_normal((5, 50))
        data[3] = 1.0
        with pytest.raises(DegenerateChannelError, match="force"):
            correlation_matrix(make_session(data))

    def test_pairwise_complete(self, rng):
        data = rng.standard_normal((5, 200))
        data[0, 10:20] = np.nan
        corr = correlation_matrix(make_session(data, is_clean=False))
        assert np.isfinite(corr.to_numpy()).all()


class TestMatrixSimilarity:
    def test_self_similarity(self, rng):
        m = random_corr(rng)
        assert matrix_similarity(m, m) == pytest.approx(1.0)

    def test_negated(self, rng):
        m = random_corr(rng)
        neg = -m
        np.fill_diagonal(neg, 1.0)
        assert matrix_similarity(m, neg) == pytest.approx(-1.0)

    def test_matches_direct_pearson(self, rng):
        a, b = random_corr(rng), random_corr(rng)
        iu = np.triu_indices(5, k=1)
        expected = np.corrcoef(a[iu], b[iu])[0, 1]
        assert matrix_similarity(a, b) == pytest.approx(expected, abs=1e-12)
        assert matrix_similarity(a, b) == matrix_similarity(b, a)

    def test_zero_variance_triangle(self, rng):
        with pytest.raises(DegenerateMatrixError):
            matrix_similarity(np.eye(5), random_corr(rng))

    def test_rejects_non_correlation_matrix(self, rng):
        bad = random_corr(rng)
        bad[0, 1] += 0.1
        with pytest.raises(InvalidInputError):
            matrix_similarity(bad, random_corr(rng))


class TestEvaluate:
    def test_perfect_estimate_report(self, default_session):
        noisy = corrupt_session(default_session, CorruptionConfig(seed=0))
        report = evaluate("proposed", default_session, noisy, default_session)
        assert report.aggregate_snr_db == math.inf
        assert report.similarity_clean_denoised == pytest.approx(1.0)
        assert report.corr_similarity <= 1.0

        data = json.loads(dumps_json(report.to_dict()))
        assert data["aggregate_snr_db"] == "inf"
        assert data["per_channel"]["pressure"]["psnr_db"] == "inf"
        restored = EvalReport.from_dict(data)
        assert restored.aggregate_psnr_db == math.inf
        np.testing.assert_array_equal(restored.corr_after.to_numpy(), report.corr_after.to_numpy())

    def test_stand_in_flag(self, default_session):
        report = evaluate("nlms", default_session, default_session, default_session)
        assert report.stand_in is True
        assert evaluate("proposed", default_session, default_session, default_session).stand_in is False

    def test_length_mismatch(self, default_session, rng):
        short = make_session(rng.standard_normal((5, 100)))
        with pytest.raises(ShapeError):
            evaluate("proposed", default_session, default_session, short)


def pearson_loop(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


@pytest.mark.parametrize("seed", range(100))
class TestMetricsAgainstDirectSums:
    def test_snr_and_psnr(self, seed):
        rng = np.random.default_rng(seed)
        clean = rng.uniform(0.1, 10) * rng.standard_normal(300)
        estimate = clean + rng.uniform(0.01, 2) * rng.standard_normal(300)
        squared = [float(e - c) ** 2 for c, e in zip(clean, estimate)]
        signal = sum(float(c) ** 2 for c in clean)
        peak = max(abs(float(c)) for c in clean)
        assert snr_db(clean, estimate) == pytest.approx(10 * math.log10(signal / sum(squared)), abs=1e-9)
        mse = sum(squared) / len(squared)
        assert psnr_db(clean, estimate) == pytest.approx(10 * math.log10(peak**2 / mse), abs=1e-9)

    def test_correlation_matrix(self, seed):
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((5, 5)) @ rng.standard_normal((5, 400))
        corr = correlation_matrix(make_session(data)).to_numpy()
        for i in range(5):
            for j in range(5):
                expected = 1.0 if i == j else pearson_loop(data[i].tolist(), data[j].tolist())
                assert corr[i, j] == pytest.approx(expected, abs=1e-12)

    def test_matrix_similarity(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_corr(rng), random_corr(rng)
        iu = np.triu_indices(5, k=1)
        expected = pearson_loop(a[iu].tolist(), b[iu].tolist())
        assert matrix_similarity(a, b) == pytest.approx(expected, abs=1e-12)
