import math

import numpy as np
import pytest
from scipy import integrate

from iterreg.exceptions import ParameterError
from iterreg.kernel import GaussianKernel
from iterreg.loss import Absolute, EpsInsensitive, EpsInsensitiveP, Hinge, Logistic, PLoss, Square
from iterreg.synth import (FlipClassification, LinearDecision, MarginClassification,
                           MedianRegression, RegressionRKHS, bayes_rule, dist_from_spec,
                           read_csv, write_csv)

LINE = LinearDecision((1.0, 1.0), -1.0)


def rkhs_dist(noise=0.3):
    return RegressionRKHS.random(GaussianKernel(0.3, dim=2), 5, noise, dim=2, norm=2.0, seed=4)


def test_sample_size_validation():
    with pytest.raises(ParameterError):
        FlipClassification(LINE, 0.1, dim=2).sample(0, seed=0)


def test_noiseless_flip_labels_are_bayes():
    X, y = FlipClassification(LINE, 0.0, dim=2).sample(500, seed=1)
    np.testing.assert_array_equal(y, bayes_rule(X.sum(axis=1) - 1))


def test_noiseless_regression_hits_target():
    d = rkhs_dist(noise=0.0)
    X, y = d.sample(200, seed=2)
    np.testing.assert_array_equal(y, d.target(X))


def test_inputs_uniform_on_cube():
    X, _ = FlipClassification(LINE, 0.1, dim=2).sample(100_000, seed=3)
    assert X.min() >= 0 and X.max() < 1
    np.testing.assert_allclose(X.mean(axis=0), 0.5, atol=4 * math.sqrt(1 / 12 / 1e5))


def test_sampling_deterministic_per_seed():
    d = rkhs_dist()
    a, b = d.sample(50, seed=9), d.sample(50, seed=9)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    c = d.sample(50, seed=10)
    assert not np.array_equal(a[0], c[0])


def test_disjoint_seeds_look_independent():
    d = FlipClassification(LINE, 0.3, dim=2)
    n = 200_000
    _, y1 = d.sample(n, seed=np.random.SeedSequence(5).spawn(2)[0])
    _, y2 = d.sample(n, seed=np.random.SeedSequence(5).spawn(2)[1])
    # correlation of independent +-1 streams is about N(0, 1/n)
    assert abs(np.corrcoef(y1, y2)[0, 1]) < 4 / math.sqrt(n)


def test_flip_frequency_matches_p():
    p = 0.2
    d = FlipClassification(LINE, p, dim=2)
    n = 1_000_000
    X, y = d.sample(n, seed=11)
    freq = np.mean(y != bayes_rule(X.sum(axis=1) - 1))
    assert abs(freq - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_flip_target_risks():
    d = FlipClassification(LINE, 0.2, dim=2)
    assert d.target_risk("misclassification") == 0.2
    assert d.target_risk(Hinge()) == pytest.approx(0.4, rel=1e-15)
    h = -(0.2 * math.log(0.2) + 0.8 * math.log(0.8))
    assert d.target_risk(Logistic()) == pytest.approx(h, rel=1e-14)
    with pytest.raises(ParameterError):
        d.target_risk(Square())
    with pytest.raises(ParameterError):
        FlipClassification(LINE, 0.5, dim=2)


def test_flip_variable_probability_precompute():
    # p(x) = 0.4 x0 on the unit square: E p = 0.2
    d = FlipClassification(LINE, lambda X: 0.4 * X[:, 0], dim=2)
    assert d.bayes_risk() == pytest.approx(0.2, abs=4 * 0.4 / math.sqrt(12e7))
    h, _ = integrate.quad(lambda u: -(0.4 * u * math.log(0.4 * u) + (1 - 0.4 * u) * math.log(1 - 0.4 * u)) if u > 0 else 0.0, 0, 1)
    assert d.target_risk(Logistic()) == pytest.approx(h, abs=1e-4)


def test_logistic_target_is_log_odds():
    d = FlipClassification(LINE, 0.2, dim=2)
    X = np.array([[0.9, 0.9], [0.1, 0.1]])
    np.testing.assert_allclose(d.target_predictor(Logistic())(X), [math.log(4), -math.log(4)],
                               rtol=1e-14)


@pytest.mark.parametrize("loss", [Square(), Absolute(), PLoss(p=1), PLoss(p=2), PLoss(p=3),
                                  PLoss(p=4), EpsInsensitive(eps=0.2)],
                         ids=["square", "abs", "p1", "p2", "p3", "p4", "eps"])
@pytest.mark.parametrize("make", [lambda: rkhs_dist(0.4),
                                  lambda: MedianRegression(LinearDecision((1.0,), 0.0), 0.4)],
                         ids=["gauss", "laplace"])
def test_closed_form_noise_risk_matches_quadrature(loss, make):
    d = make()
    assert d.target_risk(loss) == pytest.approx(d.noise_risk_quad(loss), rel=1e-8)


def test_gaussian_square_risk_is_variance():
    assert rkhs_dist(0.3).target_risk(Square()) == pytest.approx(0.09, rel=1e-15)


def test_quadrature_only_loss():
    d = rkhs_dist(0.5)
    loss = EpsInsensitiveP(eps=0.1, p=1.5)
    X, y = d.sample(400_000, seed=12)
    mc = loss.value(y, d.target(X))
    assert d.target_risk(loss) == pytest.approx(mc.mean(), abs=4 * mc.std() / math.sqrt(mc.size))


def test_regression_rejects_classification_loss():
    with pytest.raises(ParameterError):
        rkhs_dist().target_risk(Hinge())


def test_random_target_norm():
    assert rkhs_dist().target.norm() == pytest.approx(2.0, rel=1e-12)


def test_median_regression_target_is_median():
    d = MedianRegression(LinearDecision((2.0,), -1.0), 0.3)
    X, y = d.sample(200_000, seed=13)
    assert abs(np.median(y - d.target(X))) < 0.01


@pytest.mark.parametrize("s", [0.5, 1.0, 3.0])
def test_margin_mass_matches_samples(s):
    d = MarginClassification(s)
    n = 400_000
    X, _ = d.sample(n, seed=14)
    eta = d.prob_pos(X)
    for delta in (0.02, 0.05, 0.1, 0.2, 0.4):
        want = d.margin_mass(delta)
        freq = np.mean(np.abs(eta - 0.5) <= delta)
        assert abs(freq - want) <= 4 * math.sqrt(max(want * (1 - want), 1e-12) / n) + 1e-12


def test_margin_mass_examples():
    d = MarginClassification(2.0)
    assert d.margin_mass(0.1) == pytest.approx(2 * 0.2 ** 2)
    assert d.margin_mass(0.5) == 1.0
    assert d.margin_mass(1e-12) < 1e-20
    with pytest.raises(ParameterError):
        d.margin_mass(0.0)


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
def test_margin_bayes_and_entropy_risks(s):
    d = MarginClassification(s, dim=2)
    eta = lambda u: 0.5 + math.copysign(abs(u) ** (1 / s), u) / 2
    bayes, _ = integrate.quad(lambda u: min(eta(u), 1 - eta(u)), -0.5, 0.5, points=[0])
    assert d.bayes_risk() == pytest.approx(bayes, rel=1e-9)
    assert d.target_risk(Hinge()) == pytest.approx(2 * bayes, rel=1e-9)
    n = 400_000
    X, y = d.sample(n, seed=15)
    v = Logistic().value(y, d.target_predictor(Logistic())(X))
    assert d.target_risk(Logistic()) == pytest.approx(v.mean(), abs=4 * v.std() / math.sqrt(n))


def test_bayes_rule_zero_is_positive():
    np.testing.assert_array_equal(bayes_rule([0.0, -1e-300, 2.0]), [1.0, -1.0, 1.0])


def test_dist_from_spec_round_trip():
    for d in (FlipClassification(LINE, 0.1, dim=2), MarginClassification(2.0, dim=3), rkhs_dist()):
        e = dist_from_spec(d.to_spec())
        a, b = d.sample(20, seed=1), e.sample(20, seed=1)
        np.testing.assert_array_equal(a[1], b[1])
    with pytest.raises(ParameterError):
        dist_from_spec({"type": "nope"})


def test_csv_round_trip(tmp_path):
    X, y = rkhs_dist().sample(30, seed=16)
    path = tmp_path / "s.csv"
    write_csv(path, X, y)
    raw = path.read_bytes()
    assert raw.startswith(b"x0,x1,y\n") and b"\r" not in raw
    X2, y2 = read_csv(path)
    np.testing.assert_array_equal(X, X2)
    np.testing.assert_array_equal(y, y2)
