import math

import numpy as np
import pytest

from qgeom import montecarlo as mc
from qgeom.range_bn import (
    BnParams, DegenerateFeatureError, c_of_n, range_bn_backward, range_bn_forward,
    range_bn_forward_quantized, range_scale, standard_bn_backward, standard_bn_forward,
)


def test_c_of_n():
    assert c_of_n(256) == pytest.approx(0.30028, abs=1e-5)
    assert c_of_n(3) == pytest.approx(1 / math.sqrt(2 * math.log(3)))
    assert c_of_n(2) == pytest.approx(0.84932, abs=1e-5)
    for bad in (1, 0):
        with pytest.raises(ValueError):
            c_of_n(bad)


def test_range_forward_hand_example(backend):
    out = range_bn_forward([-1.0, 0.0, 1.0]).ravel()
    expected = 1 / (c_of_n(3) * 2.0)
    np.testing.assert_allclose(out, [-expected, 0.0, expected], rtol=1e-14)
    assert expected == pytest.approx(0.7412, abs=1e-4)


def test_range_forward_invariant_to_column_scale(backend):
    base = range_bn_forward([-1.0, 0.0, 1.0])
    for c in (0.01, 2.0, 1e5):
        np.testing.assert_allclose(range_bn_forward(c * np.array([-1.0, 0.0, 1.0])), base, atol=1e-12)


def test_degenerate_column_named():
    x = np.array([[1.0, 2.0], [3.0, 2.0], [0.0, 2.0]])
    with pytest.raises(DegenerateFeatureError) as err:
        range_bn_forward(x)
    assert err.value.column == 1
    with pytest.raises(DegenerateFeatureError):
        standard_bn_forward(x)


def test_batch_validation():
    with pytest.raises(ValueError):
        range_bn_forward([[1.0, 2.0]])
    with pytest.raises(ValueError):
        BnParams([1.0], [0.0], 0.5)
    with pytest.raises(ValueError):
        range_bn_forward(np.ones((4, 2)) + np.arange(4)[:, None], BnParams.identity(3))


def test_standard_forward():
    np.testing.assert_allclose(standard_bn_forward([-1.0, 0.0, 1.0]).ravel(),
                               [-1.2247448714, 0.0, 1.2247448714], atol=1e-10)
    p = BnParams(np.zeros(1), np.full(1, 0.7))
    np.testing.assert_allclose(standard_bn_forward([-1.0, 0.0, 1.0], p, use_affine=True), 0.7)


@pytest.mark.parametrize("fwd", [range_bn_forward, standard_bn_forward])
def test_positive_scale_invariance(fwd, rng):
    x = rng.standard_normal((64, 5)) * 2 + 1
    base = fwd(x)
    for c in (0.5, 3.0, 100.0):
        np.testing.assert_allclose(fwd(c * x), base, atol=1e-9, rtol=0)


def test_range_and_standard_correlate(rng):
    x = rng.standard_normal((256, 8))
    a, b = range_bn_forward(x), standard_bn_forward(x)
    for j in range(8):
        assert np.corrcoef(a[:, j], b[:, j])[0, 1] >= 0.99


def test_expectation_sandwich():
    rng = mc.trial_rng(31)
    for n in (32, 256, 2048):
        for sigma in (0.5, 1.0, 3.0):
            x = sigma * mc.box_muller(rng, n * 2000).reshape(n, 2000)
            ratio = range_scale(x).mean() / sigma
            assert 0.325 <= ratio <= 2.0


def test_sandwich_small_n_exact():
    # n = 2: range = |X1 - X2| with mean 2/sqrt(pi)
    assert 0.325 <= c_of_n(2) * 2 / math.sqrt(math.pi) <= 2.0


def _fd(fwd, x, g, h=1e-6):
    out = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        out[idx] = (np.sum(g * fwd(xp)) - np.sum(g * fwd(xm))) / (2 * h)
    return out


def _has_tie(x):
    c = x - x.mean(axis=0)
    for j in range(x.shape[1]):
        s = np.sort(c[:, j])
        if s[-1] - s[-2] < 1e-4 or s[1] - s[0] < 1e-4:
            return True
    return False


def test_range_backward_toy_column():
    x = np.array([[-1.0], [0.0], [1.0]])
    g = np.ones_like(x)
    dx, _, _ = range_bn_backward(x, g)
    np.testing.assert_allclose(dx, _fd(range_bn_forward, x, g), atol=1e-8)


def test_range_backward_zero_upstream(rng):
    x = rng.standard_normal((5, 3))
    p = BnParams(rng.standard_normal(3), rng.standard_normal(3))
    for arr in range_bn_backward(x, np.zeros_like(x), p, use_affine=True):
        assert not np.any(arr)


def test_range_backward_ties_go_to_first_row():
    x = np.array([[2.0], [2.0], [0.0], [1.0]])
    g = np.array([[1.0], [0.0], [0.5], [0.2]])
    dx, _, _ = range_bn_backward(x, g)
    # only row 0 carries the max subgradient; rows 0 and 1 differ by that term
    centred = x - x.mean()
    denom = c_of_n(4) * 2.0
    xhat = centred / denom
    spread_term = float(np.sum(g * xhat)) * c_of_n(4) / denom
    base = (g - g.mean()) / denom
    assert dx[0, 0] == pytest.approx(base[0, 0] - spread_term)
    assert dx[1, 0] == pytest.approx(base[1, 0])


@pytest.mark.parametrize("affine", [False, True])
def test_range_backward_finite_differences(affine):
    rng = np.random.default_rng(123)
    checked = 0
    while checked < 100:
        n, d = int(rng.integers(2, 9)), int(rng.integers(1, 5))
        x = rng.standard_normal((n, d))
        if _has_tie(x):
            continue
        g = rng.standard_normal((n, d))
        p = BnParams(rng.standard_normal(d), rng.standard_normal(d))
        dx, dgam, dbet = range_bn_backward(x, g, p, affine)
        fd = _fd(lambda z: range_bn_forward(z, p, affine), x, g)
        assert np.max(np.abs(dx - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))
        if affine:
            xhat = range_bn_forward(x)
            np.testing.assert_allclose(dgam, np.sum(g * xhat, axis=0))
            np.testing.assert_allclose(dbet, np.sum(g, axis=0))
        checked += 1


def test_standard_backward_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n, d = int(rng.integers(2, 9)), int(rng.integers(1, 5))
        x = rng.standard_normal((n, d))
        g = rng.standard_normal((n, d))
        p = BnParams(rng.standard_normal(d), rng.standard_normal(d), 1e-3)
        dx, _, _ = standard_bn_backward(x, g, p, True)
        fd = _fd(lambda z: standard_bn_forward(z, p, True), x, g)
        assert np.max(np.abs(dx - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_backward_shape_mismatch():
    with pytest.raises(ValueError):
        range_bn_backward(np.eye(3), np.ones((2, 3)))


def test_quantized_forward_close_to_float(rng):
    x = rng.standard_normal((256, 4))
    diff = np.abs(range_bn_forward_quantized(x, 8) - range_bn_forward(x))
    assert diff.max() < 0.05
