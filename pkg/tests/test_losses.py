import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subsetquery import ClasswiseLoss, LabelSubset, parse_loss
from subsetquery.errors import ConfigurationError, DomainError

from conftest import random_probs

# frozen from a high-precision evaluation of the loss displays
GCE_VALUE_AT_HALF = 0.549182561896488  # (1 - 0.5**0.7) / 0.7
GCE_GRAD_AT_HALF = -1.231144413344916  # -0.5**(0.7 - 1)


def one_hot(k, j):
    p = np.zeros(k)
    p[j - 1] = 1.0
    return p


def test_mae_values():
    mae = ClasswiseLoss("mae")
    assert mae.value(one_hot(5, 3), 3) == 0.0
    assert mae.value(np.full(10, 0.1), 4) == pytest.approx(1.8)


def test_mse_values():
    mse = ClasswiseLoss("mse")
    assert mse.value(one_hot(4, 2), 2) == pytest.approx(0.0)
    # uniform k=2: 1 - 1 + 0.5 = 0.5
    assert mse.value(np.array([0.5, 0.5]), 1) == pytest.approx(0.5)


def test_gce_value_frozen():
    gce = ClasswiseLoss("gce")
    p = np.array([0.5, 0.25, 0.25])
    assert gce.value(p, 1) == pytest.approx(GCE_VALUE_AT_HALF, rel=1e-12)


def test_bounds_per_kind():
    assert ClasswiseLoss("mae").bound == 2.0
    assert ClasswiseLoss("mse").bound == 2.0
    gce = ClasswiseLoss("gce", gce_q=0.7, gce_eps=1e-6)
    assert gce.bound == pytest.approx((1 - 1e-6**0.7) / 0.7, rel=1e-12)


def test_boundedness_random_points(rng):
    P = random_probs(10_000, 6, rng)
    for kind in ("mae", "mse", "gce"):
        loss = ClasswiseLoss(kind)
        values = loss.value_matrix(P)
        assert values.min() >= 0.0
        assert values.max() <= loss.bound + 1e-12


def test_grad_examples():
    mae = ClasswiseLoss("mae")
    np.testing.assert_allclose(mae.grad(np.array([0.2, 0.3, 0.5]), 1), [-2.0, 0.0, 0.0])
    mse = ClasswiseLoss("mse")
    np.testing.assert_allclose(mse.grad(np.array([0.5, 0.5]), 1), [-1.0, 1.0])
    gce = ClasswiseLoss("gce")
    g = gce.grad(np.array([0.5, 0.5]), 1)
    assert g[0] == pytest.approx(GCE_GRAD_AT_HALF, rel=1e-12)
    assert g[1] == 0.0


def test_gce_clamped_branch_has_zero_grad():
    gce = ClasswiseLoss("gce", gce_eps=1e-3)
    p = np.array([5e-4, 0.9995])
    np.testing.assert_array_equal(gce.grad(p, 1), np.zeros(2))


def central_difference(fn, p, h=1e-5):
    g = np.zeros_like(p)
    for i in range(p.size):
        up, down = p.copy(), p.copy()
        up[i] += h
        down[i] -= h
        g[i] = (fn(up) - fn(down)) / (2 * h)
    return g


@pytest.mark.parametrize("kind", ["mae", "mse", "gce"])
def test_grad_matches_finite_differences(kind, rng):
    loss = ClasswiseLoss(kind)
    for _ in range(10):
        p = random_probs(1, 5, rng)[0]
        j = int(rng.integers(1, 6))
        if kind == "gce" and p[j - 1] < 0.01:  # stay away from the clamp
            continue
        analytic = loss.grad(p, j)
        numeric = central_difference(lambda q: loss.value(q, j), p)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


def test_subset_loss_examples():
    mae = ClasswiseLoss("mae")
    assert mae.subset_value(np.full(4, 0.25), LabelSubset.of(1, 2)) == pytest.approx(1.5)
    p = np.array([0.4, 0.3, 0.2, 0.1])
    out = mae.subset_value(p, LabelSubset.of(1, 3))
    assert out == pytest.approx(1.4)
    for kind in ("mae", "mse", "gce"):
        loss = ClasswiseLoss(kind)
        assert loss.subset_value(p, LabelSubset.of(2)) == pytest.approx(loss.value(p, 2))


def test_subset_grad_examples():
    mae = ClasswiseLoss("mae")
    np.testing.assert_allclose(
        mae.subset_grad(np.array([0.2, 0.3, 0.5]), LabelSubset.of(1, 2)), [-1.0, -1.0, 0.0]
    )
    mse = ClasswiseLoss("mse")
    np.testing.assert_allclose(
        mse.subset_grad(np.array([0.5, 0.5]), LabelSubset.of(1)), [-1.0, 1.0]
    )


def test_subset_grad_gce_finite_differences(rng):
    gce = ClasswiseLoss("gce")
    p = random_probs(1, 6, rng)[0]
    L = LabelSubset.of(1, 4, 5)
    numeric = central_difference(lambda q: gce.subset_value(q, L), p)
    np.testing.assert_allclose(gce.subset_grad(p, L), numeric, rtol=1e-6, atol=1e-9)


def test_subset_linearity(rng):
    # the loss over a disjoint union is the size-weighted average of the parts
    p = random_probs(1, 8, rng)[0]
    a, b = LabelSubset.of(1, 3), LabelSubset.of(2, 5, 7)
    union = LabelSubset.of(1, 2, 3, 5, 7)
    for kind in ("mae", "mse", "gce"):
        loss = ClasswiseLoss(kind)
        expected = (2 * loss.subset_value(p, a) + 3 * loss.subset_value(p, b)) / 5
        assert loss.subset_value(p, union) == pytest.approx(expected, rel=1e-12)


@given(st.integers(min_value=2, max_value=8), st.data())
@settings(max_examples=50, deadline=None)
def test_mae_affine_identity(k, data):
    # subset-average mae equals 2 - (2/m) * sum of member probabilities
    raw = np.array(
        data.draw(
            st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)
        )
    )
    p = raw / raw.sum()
    m = data.draw(st.integers(min_value=1, max_value=k - 1))
    members = data.draw(
        st.lists(st.integers(1, k), min_size=m, max_size=m, unique=True)
    )
    L = LabelSubset.of(*members)
    mae = ClasswiseLoss("mae")
    expected = 2.0 - (2.0 / m) * sum(p[j - 1] for j in L)
    assert mae.subset_value(p, L) == pytest.approx(expected, abs=1e-12)


def test_batch_forms_match_scalar(rng):
    P = random_probs(16, 6, rng)
    mask = np.zeros((16, 6), dtype=bool)
    for i in range(16):
        idx = rng.choice(6, size=3, replace=False)
        mask[i, idx] = True
    for kind in ("mae", "mse", "gce"):
        loss = ClasswiseLoss(kind)
        values = loss.subset_value_batch(P, mask)
        grads = loss.subset_grad_batch(P, mask)
        for i in range(16):
            L = LabelSubset.of(*(np.flatnonzero(mask[i]) + 1))
            assert values[i] == pytest.approx(loss.subset_value(P[i], L), rel=1e-12)
            np.testing.assert_allclose(grads[i], loss.subset_grad(P[i], L), rtol=1e-12)


def test_label_domain_errors():
    loss = ClasswiseLoss("mae")
    with pytest.raises(DomainError):
        loss.value(np.full(4, 0.25), 5)
    with pytest.raises(DomainError):
        loss.grad(np.full(4, 0.25), 0)


def test_parse_loss():
    assert parse_loss("mae").kind == "mae"
    assert parse_loss("MSE").kind == "mse"
    gce = parse_loss("gce:q=0.5,eps=1e-4")
    assert gce.gce_q == 0.5 and gce.gce_eps == 1e-4
    assert parse_loss("gce").gce_q == 0.7
    with pytest.raises(ConfigurationError):
        parse_loss("hinge")
    with pytest.raises(ConfigurationError):
        parse_loss("gce:zap=1")
    with pytest.raises(ConfigurationError):
        ClasswiseLoss("gce", gce_q=1.5)
