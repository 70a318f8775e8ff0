from __future__ import annotations

import math

import numpy as np
import pytest

from mcgae.constraints import (
    BallConfig,
    SatisfactionRatios,
    check_anomalous,
    check_normal,
    compute_directions,
    dir_anomalous,
    dir_mono,
    dir_normal,
    mono_directions,
    monotone_pairs,
    satisfaction_ratio,
)
from mcgae.errors import ConfigError
from mcgae.models import Label

from tests.conftest import make_batch

BALL = BallConfig(r1=1.0, r2=2.0)
N, U, A = Label.NORMAL, Label.UNLABELED, Label.ANOMALOUS


def _along_norms(norms: list[float]) -> np.ndarray:
    """Encodings on the first axis with the given norms."""
    return np.column_stack([norms, np.zeros(len(norms))])


# -- Membership --


def test_ball_boundaries() -> None:
    assert check_normal(np.array([1.0, 0.0]), BALL)
    assert check_normal(np.zeros(2), BALL)
    assert not check_anomalous(np.array([0.0, 2.0]), BALL)
    assert check_anomalous(np.array([0.0, 2.0 + 1e-9]), BALL)


def test_ball_validate() -> None:
    BALL.validate()
    with pytest.raises(ConfigError):
        BallConfig(r1=2.0, r2=1.0).validate()
    with pytest.raises(ConfigError):
        BallConfig(r1=0.0, r2=1.0).validate()


# -- Ball directions --


def test_dir_normal_examples() -> None:
    rng = np.random.default_rng(0)
    assert np.allclose(dir_normal(np.array([3.0, 4.0]), BALL, rng), [0.6, 0.8])
    assert np.array_equal(dir_normal(np.array([0.5, 0.0]), BALL, rng), [0.0, 0.0])
    fallback = dir_normal(np.zeros(3), BallConfig(r1=0.0, r2=1.0), rng)
    assert math.isclose(np.linalg.norm(fallback), 1.0)


def test_dir_anomalous_examples() -> None:
    rng = np.random.default_rng(0)
    far = BallConfig(r1=1.0, r2=10.0)
    assert np.allclose(dir_anomalous(np.array([3.0, 4.0]), far, rng), [-0.6, -0.8])
    assert np.array_equal(dir_anomalous(np.array([11.0, 0.0]), far, rng), [0.0, 0.0])
    fallback = dir_anomalous(np.zeros(2), BallConfig(r1=0.5, r2=1.0), rng)
    assert math.isclose(np.linalg.norm(fallback), 1.0)


def test_dir_normal_scale_invariant() -> None:
    rng = np.random.default_rng(0)
    z = np.array([1.5, -2.0, 0.5])
    assert np.allclose(dir_normal(z, BALL, rng), dir_normal(7.0 * z, BALL, rng))


# -- Monotonicity direction --


def test_dir_mono_examples() -> None:
    assert np.array_equal(dir_mono(_along_norms([0.2, 0.5, 0.9])), [0.0, 0.0, 0.0])
    expected = np.array([1.0, -1.0, 0.0]) / math.sqrt(2)
    assert np.allclose(dir_mono(_along_norms([0.5, 0.2, 0.9])), expected)
    reversed_ = dir_mono(_along_norms([0.9, 0.7, 0.5, 0.1]))
    assert np.allclose(reversed_, np.array([3.0, 1.0, -1.0, -3.0]) / math.sqrt(20))


def test_dir_mono_ties_follow_time() -> None:
    assert not np.any(dir_mono(_along_norms([0.3, 0.3, 0.3])))


def test_dir_mono_needs_two_samples(caplog) -> None:
    with caplog.at_level("WARNING"):
        out = dir_mono(_along_norms([0.4]))
    assert out.tolist() == [0.0]
    assert "needs >= 2 samples" in caplog.text


def test_direction_properties_randomized() -> None:
    rng = np.random.default_rng(2024)
    eps = 1e-6
    for _ in range(10_000):
        dim = int(rng.integers(1, 5))
        z = rng.normal(size=dim) * rng.uniform(0.1, 3.0)
        norm = np.linalg.norm(z)

        d_n = dir_normal(z, BALL, rng)
        if norm <= BALL.r1:
            assert not np.any(d_n)
        else:
            assert abs(np.linalg.norm(d_n) - 1.0) <= 1e-9
            assert np.linalg.norm(z - eps * d_n) < norm

        d_a = dir_anomalous(z, BALL, rng)
        if norm > BALL.r2:
            assert not np.any(d_a)
        else:
            assert abs(np.linalg.norm(d_a) - 1.0) <= 1e-9
            assert np.linalg.norm(z - eps * d_a) > norm

        m = int(rng.integers(2, 7))
        Z = rng.normal(size=(m, dim))
        coeffs = dir_mono(Z)
        assert abs(coeffs.sum()) <= 1e-9
        sq = np.sum(Z**2, axis=1)
        if np.all(np.diff(sq) >= 0):
            assert not np.any(coeffs)
        else:
            assert abs(np.linalg.norm(coeffs) - 1.0) <= 1e-9
        moves = mono_directions(Z, rng)
        for i in range(m):
            before = np.linalg.norm(Z[i])
            after = np.linalg.norm(Z[i] - eps * moves[i])
            if coeffs[i] > 0:
                assert after < before
            elif coeffs[i] < 0:
                assert after > before


# -- Bundles --


def test_compute_directions_respects_families() -> None:
    batch = make_batch(
        ["a", "a", "a", "b"],
        [0, 1, 2, 0],
        [N, U, A, N],
    )
    Z = np.array([[3.0, 0.0], [0.5, 0.0], [1.0, 0.0], [0.0, 0.2]])
    rng = np.random.default_rng(0)

    cgae = compute_directions(Z, batch, BALL, rng, ("normal", "anomalous"))
    assert cgae.normal[0].tolist() == [1.0, 0.0]
    assert not np.any(cgae.normal[1:])
    assert cgae.anomalous[2].tolist() == [-1.0, 0.0]
    assert not np.any(cgae.mono)
    assert cgae.normal_ok.tolist() == [False, True, True, True]
    assert cgae.anomalous_ok.tolist() == [True, True, False, True]

    mcgae = compute_directions(Z, batch, BALL, rng)
    # run a: only the N and U samples are before the first anomaly
    assert mcgae.mono_coefficients["a"].tolist() == pytest.approx(
        [1 / math.sqrt(2), -1 / math.sqrt(2)],
    )
    assert mcgae.mono[0, 0] > 0 and mcgae.mono[1, 0] < 0
    assert not np.any(mcgae.mono[2])
    assert np.allclose(mcgae.total(), mcgae.normal + mcgae.anomalous + mcgae.mono)


def test_compute_directions_agrees_with_per_sample_directions() -> None:
    rng = np.random.default_rng(17)
    labels = [N, U, A]
    for _ in range(200):
        n = int(rng.integers(1, 12))
        Z = rng.normal(size=(n, 3)) * rng.uniform(0.1, 3.0)
        batch = make_batch(
            ["r"] * n,
            list(range(n)),
            [labels[i] for i in rng.integers(0, 3, size=n)],
            dim=3,
        )
        bundle = compute_directions(Z, batch, BALL, rng, ("normal", "anomalous"))
        for i in range(n):
            z, label = Z[i], batch.labels[i]
            expected_n = dir_normal(z, BALL, rng) if label == N else np.zeros(3)
            expected_a = dir_anomalous(z, BALL, rng) if label == A else np.zeros(3)
            assert np.array_equal(bundle.normal[i], expected_n)
            assert np.array_equal(bundle.anomalous[i], expected_a)
            assert bundle.normal_ok[i] == (label != N or check_normal(z, BALL))
            assert bundle.anomalous_ok[i] == (label != A or check_anomalous(z, BALL))


# -- Satisfaction --


def test_monotone_pairs_example() -> None:
    norms = np.array([0.5, 0.2, 0.9])
    assert monotone_pairs(norms, np.array([0, 1, 2])) == (2, 3)


def test_satisfaction_ratio_per_family() -> None:
    batch = make_batch(
        ["a", "a", "a", "a"],
        [0, 1, 2, 3],
        [N, N, U, A],
    )
    Z = _along_norms([0.5, 1.5, 1.0, 2.5])
    ratios = satisfaction_ratio(Z, batch, BALL)
    assert ratios.normal == 0.5
    assert ratios.anomalous == 1.0
    assert ratios.monotonicity == pytest.approx(2 / 3)
    assert ratios.combined == pytest.approx((0.5 + 1.0 + 2 / 3) / 3)


def test_satisfaction_ratio_skips_absent_families() -> None:
    batch = make_batch(["a", "a"], [0, 1], [N, N])
    ratios = satisfaction_ratio(_along_norms([0.2, 0.4]), batch, BALL, ("normal",))
    assert ratios == SatisfactionRatios(normal=1.0)
    assert ratios.combined == 1.0


def test_satisfaction_ratio_rejects_empty_slice() -> None:
    batch = make_batch([], [], [])
    with pytest.raises(ValueError):
        satisfaction_ratio(np.zeros((0, 2)), batch, BALL)


def test_ratios_from_dict_ignores_combined() -> None:
    ratios = SatisfactionRatios(normal=0.9, monotonicity=0.5)
    assert SatisfactionRatios.from_dict(ratios.to_dict()) == ratios
