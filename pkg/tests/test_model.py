import numpy as np
import pytest
from scipy.special import softmax as scipy_softmax

from subsetquery import (
    GradientBuffer,
    backward,
    forward,
    init_scorer,
    load_checkpoint,
    make_rng,
    predict_labels,
    save_checkpoint,
)
from subsetquery.errors import ConfigurationError, DomainError


def test_zero_weight_linear_gives_uniform_probs():
    scorer = init_scorer("linear", 4, 5, make_rng(0))
    for p in scorer.params.values():
        p[:] = 0.0
    _, probs, _ = forward(scorer, np.array([1.0, -2.0, 0.5, 3.0]))
    np.testing.assert_allclose(probs, np.full(5, 0.2), atol=1e-15)


def test_softmax_shift_invariance(rng):
    scorer = init_scorer("linear", 3, 4, rng)
    x = rng.standard_normal(3)
    scores, probs, _ = forward(scorer, x)
    shifted = scorer.params["b1"] + 7.5
    scorer.params["b1"][:] = shifted
    _, probs2, _ = forward(scorer, x)
    np.testing.assert_allclose(probs, probs2, atol=1e-12)


def test_probs_match_independent_softmax(rng):
    scorer = init_scorer("mlp", 6, 5, rng, hidden_width=8)
    X = rng.standard_normal((10, 6))
    scores, probs, _ = forward(scorer, X)
    np.testing.assert_allclose(probs, scipy_softmax(scores, axis=1), atol=1e-12)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-10)


def test_forward_dimension_mismatch(rng):
    scorer = init_scorer("linear", 4, 3, rng)
    with pytest.raises(DomainError):
        forward(scorer, np.zeros(5))


def test_init_determinism_and_param_count():
    a = init_scorer("mlp", 5, 3, make_rng(11), hidden_width=8)
    b = init_scorer("mlp", 5, 3, make_rng(11), hidden_width=8)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])
    assert a.param_count == 5 * 8 + 8 + 8 * 3 + 3 == 75
    lin = init_scorer("linear", 7, 4, make_rng(1))
    assert lin.param_count == 7 * 4 + 4
    np.testing.assert_array_equal(lin.params["b1"], np.zeros(4))


def test_init_validation():
    with pytest.raises(ConfigurationError):
        init_scorer("mlp", 4, 3, make_rng(0), hidden_width=0)
    with pytest.raises(ConfigurationError):
        init_scorer("tree", 4, 3, make_rng(0))


def test_backward_zero_upstream(rng):
    scorer = init_scorer("mlp", 4, 3, rng, hidden_width=6)
    X = rng.standard_normal((5, 4))
    _, _, cache = forward(scorer, X)
    grads = backward(scorer, cache, np.zeros((5, 3)))
    for g in grads.grads.values():
        np.testing.assert_array_equal(g, np.zeros_like(g))


def _objective(scorer, X, upstream):
    _, probs, _ = forward(scorer, X)
    return float((upstream * probs).sum())


@pytest.mark.parametrize("arch,hidden", [("linear", 0), ("mlp", 6)])
def test_backward_matches_finite_differences(arch, hidden, rng):
    scorer = init_scorer(arch, 4, 3, rng, hidden_width=hidden)
    X = rng.standard_normal((7, 4))
    upstream = rng.standard_normal((7, 3))
    _, _, cache = forward(scorer, X)
    grads = backward(scorer, cache, upstream)
    h = 1e-6
    for name, p in scorer.params.items():
        flat = p.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = _objective(scorer, X, upstream)
            flat[i] = orig - h
            down = _objective(scorer, X, upstream)
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            analytic = grads.grads[name].ravel()[i]
            assert analytic == pytest.approx(numeric, rel=1e-5, abs=1e-9)


def test_mlp_dead_relu_region(rng):
    scorer = init_scorer("mlp", 4, 3, rng, hidden_width=6)
    scorer.params["W1"][:] = 0.0
    scorer.params["b1"][:] = 0.0  # pre-activations all 0 -> dead
    X = rng.standard_normal((5, 4))
    _, _, cache = forward(scorer, X)
    grads = backward(scorer, cache, rng.standard_normal((5, 3)))
    np.testing.assert_array_equal(grads.grads["W1"], np.zeros((6, 4)))
    np.testing.assert_array_equal(grads.grads["b1"], np.zeros(6))


def test_gradient_buffer_ops(rng):
    scorer = init_scorer("linear", 3, 2, rng)
    buf = GradientBuffer.zeros_like(scorer)
    other = GradientBuffer({k: np.ones_like(v) for k, v in scorer.params.items()})
    buf.add(other)
    buf.scale(2.0)
    np.testing.assert_array_equal(buf.grads["W1"], 2 * np.ones((2, 3)))


def test_predict_labels_tie_break():
    scorer = init_scorer("linear", 2, 4, make_rng(0))
    for p in scorer.params.values():
        p[:] = 0.0  # uniform probs: argmax tie resolves to label 1
    labels = predict_labels(scorer, np.zeros((3, 2)))
    np.testing.assert_array_equal(labels, [1, 1, 1])


def test_checkpoint_roundtrip_bitwise(tmp_path, rng):
    for arch, hidden in (("linear", 0), ("mlp", 9)):
        scorer = init_scorer(arch, 6, 4, rng, hidden_width=hidden)
        path = tmp_path / f"{arch}.json"
        save_checkpoint(scorer, path)
        loaded = load_checkpoint(path)
        assert loaded.architecture == arch
        assert loaded.input_dim == 6 and loaded.output_dim == 4
        for name in scorer.params:
            np.testing.assert_array_equal(loaded.params[name], scorer.params[name])


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{\"format\": \"something-else\"}")
    with pytest.raises(ConfigurationError):
        load_checkpoint(path)
    path.write_text("not json")
    with pytest.raises(ConfigurationError):
        load_checkpoint(path)


def test_checkpoint_rejects_wrong_version(tmp_path, rng):
    scorer = init_scorer("linear", 2, 2, rng)
    path = tmp_path / "ck.json"
    save_checkpoint(scorer, path)
    doc = path.read_text().replace('"version": 1', '"version": 99')
    path.write_text(doc)
    with pytest.raises(ConfigurationError):
        load_checkpoint(path)
