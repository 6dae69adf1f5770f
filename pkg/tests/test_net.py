import numpy as np
import pytest

from tabvfm import net
from tabvfm.expfam import Categorical, Gaussian


def small_params(schema, hidden=(2,), seed=0, time_dim=4, randomize_output=True):
    p = net.init_params(schema, hidden=hidden, time_dim=time_dim, seed=seed, dtype=np.float64)
    if randomize_output:
        # a zero output layer hides half the gradient paths
        r = np.random.default_rng(seed + 100)
        p.weights[-1][...] = r.normal(scale=0.5, size=p.weights[-1].shape)
        p.biases[-1][...] = r.normal(scale=0.5, size=p.biases[-1].shape)
        for b in p.biases[:-1]:
            b[...] = r.normal(scale=0.3, size=b.shape)
    return p


def test_heads_layout(mixed_schema):
    heads = net.heads_for_schema(mixed_schema)
    assert [h.name for h in heads] == ["a", "c", "b", "d"]
    assert [h.param_offset for h in heads] == [0, 1, 3, 4]
    assert [h.enc_offset for h in heads] == [0, 1, 4, 5]
    assert sum(h.param_dim for h in heads) == 5


def test_time_embed():
    e = net.time_embed(0.0, 8)
    assert e.tolist() == [0.0, 1.0] * 4
    np.testing.assert_array_equal(net.time_embed(0.37, 64), net.time_embed(0.37, 64))
    with pytest.raises(ValueError):
        net.time_embed(0.1, 7)
    batch = net.time_embed(np.array([0.1, 0.5]), 16)
    np.testing.assert_array_equal(batch[1], net.time_embed(0.5, 16))


def test_zero_output_layer_gives_uniform_and_zero_mean(mixed_schema):
    p = net.init_params(mixed_schema, hidden=(16, 16), seed=0)
    out = net.forward(p, np.random.default_rng(0).normal(size=(5, mixed_schema.encoded_dim)), 0.3)
    np.testing.assert_array_equal(out.eta, 0.0)
    np.testing.assert_allclose(out.mean[:, 0], 0.0)
    np.testing.assert_allclose(out.mean[:, 1:4], 1 / 3, atol=1e-7)
    np.testing.assert_allclose(out.mean[:, 5:7], 0.5, atol=1e-7)


def test_forward_deterministic_and_batch_equals_rows(mixed_schema):
    p = small_params(mixed_schema, hidden=(8, 8))
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, mixed_schema.encoded_dim))
    t = rng.random(6)
    a = net.forward(p, x, t)
    b = net.forward(p, x, t)
    assert np.array_equal(a.eta, b.eta)
    for i in range(6):
        row = net.forward(p, x[i], t[i])
        np.testing.assert_allclose(row.eta, a.eta[i], atol=1e-13)
        np.testing.assert_allclose(row.mean, a.mean[i], atol=1e-13)


def test_mu_consistent_with_eta(mixed_schema):
    p = small_params(mixed_schema, hidden=(8,))
    out = net.forward(p, np.random.default_rng(2).normal(size=(50, mixed_schema.encoded_dim)), 0.7)
    for h in p.heads:
        ps = slice(h.param_offset, h.param_offset + h.param_dim)
        np.testing.assert_allclose(out.mu[:, ps], h.family.mean_from_natural(out.eta[:, ps]), atol=1e-6)
        block = out.mean[:, h.enc_offset:h.enc_offset + h.enc_width]
        if isinstance(h.family, Categorical):
            np.testing.assert_allclose(block.sum(axis=1), 1.0, atol=1e-12)


def test_forward_finite_on_large_inputs(mixed_schema):
    p = net.init_params(mixed_schema, seed=3)
    p.weights[-1][...] = np.random.default_rng(3).normal(scale=0.1, size=p.weights[-1].shape)
    x = np.random.default_rng(4).uniform(-100, 100, size=(200, mixed_schema.encoded_dim))
    out = net.forward(p, x, np.linspace(0, 0.999, 200))
    assert np.all(np.isfinite(out.eta)) and np.all(np.isfinite(out.mean))


def fd_gradients(params, x, t, grad_eta, h=1e-6):
    def objective():
        return float(np.sum(net.forward(params, x, t).eta * grad_eta))

    out = []
    for tensor in params.tensors():
        g = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = tensor[idx]
            tensor[idx] = old + h
            up = objective()
            tensor[idx] = old - h
            down = objective()
            tensor[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


@pytest.mark.parametrize("hidden", [(2,), (2, 2), (3, 4)])
def test_backward_matches_finite_differences(mixed_schema, hidden):
    p = small_params(mixed_schema, hidden=hidden, seed=len(hidden))
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, mixed_schema.encoded_dim))
    t = rng.random(3)
    g_eta = rng.normal(size=(3, p.param_dim))
    analytic = net.backward(p, net.forward(p, x, t), g_eta)
    numeric = fd_gradients(p, x, t, g_eta)
    for a, n in zip(analytic, numeric):
        rel = np.abs(a - n) / (np.abs(a) + 1e-8)
        assert np.all((rel < 1e-4) | (np.abs(a - n) < 1e-9))


def test_backward_zero_upstream(mixed_schema):
    p = small_params(mixed_schema)
    out = net.forward(p, np.ones((2, mixed_schema.encoded_dim)), 0.5)
    for g in net.backward(p, out, np.zeros((2, p.param_dim))):
        assert not np.any(g)


def test_backward_batch_is_sum_of_rows(mixed_schema):
    p = small_params(mixed_schema, hidden=(5, 5))
    rng = np.random.default_rng(6)
    x = rng.normal(size=(4, mixed_schema.encoded_dim))
    t = rng.random(4)
    g = rng.normal(size=(4, p.param_dim))
    batch = net.backward(p, net.forward(p, x, t), g)
    rows = [net.backward(p, net.forward(p, x[i], t[i]), g[i]) for i in range(4)]
    for j, total in enumerate(batch):
        np.testing.assert_allclose(total, sum(r[j] for r in rows), atol=1e-12)


def test_backward_rejects_stale_cache(mixed_schema):
    p = small_params(mixed_schema)
    out = net.forward(p, np.ones((1, mixed_schema.encoded_dim)), 0.1)
    grads = net.backward(p, out, np.ones((1, p.param_dim)))
    net.adam_step(p, grads)
    with pytest.raises(net.StaleCacheError):
        net.backward(p, out, np.ones((1, p.param_dim)))
    other = p.copy()
    with pytest.raises(net.StaleCacheError):
        net.backward(other, net.forward(p, np.ones((1, mixed_schema.encoded_dim)), 0.1), np.ones((1, p.param_dim)))


def test_adam_zero_grads_and_zero_lr(mixed_schema):
    p = small_params(mixed_schema)
    before = [a.copy() for a in p.tensors()]
    net.adam_step(p, [np.zeros_like(a) for a in p.tensors()], lr=1e-3)
    for a, b in zip(p.tensors(), before):
        np.testing.assert_array_equal(a, b)
    rng = np.random.default_rng(7)
    net.adam_step(p, [rng.normal(size=a.shape) for a in p.tensors()], lr=0.0)
    for a, b in zip(p.tensors(), before):
        np.testing.assert_array_equal(a, b)
    assert p.step == 2


def test_adam_first_steps_by_hand():
    heads = [net.Head("g", Gaussian(), 0, 0, 1)]
    p = net.init_params(heads, encoded_dim=1, hidden=(), time_dim=2, dtype=np.float64)
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    ones = [np.ones_like(a) for a in p.tensors()]
    start = p.biases[0].copy()
    net.adam_step(p, ones, lr, b1, b2, eps)
    # m_hat = v_hat = 1 after bias correction
    np.testing.assert_allclose(p.biases[0] - start, -lr / (1 + eps), rtol=1e-12)
    net.adam_step(p, ones, lr, b1, b2, eps)
    np.testing.assert_allclose(p.biases[0] - start, -2 * lr / (1 + eps), rtol=1e-12)


def test_init_is_seeded(mixed_schema):
    a = net.init_params(mixed_schema, seed=11)
    b = net.init_params(mixed_schema, seed=11)
    for x, y in zip(a.tensors(), b.tensors()):
        np.testing.assert_array_equal(x, y)
    assert a.layer_sizes == [mixed_schema.encoded_dim + 64, 256, 256, 5]
    assert a.dtype == np.float32
    np.testing.assert_array_equal(a.weights[-1], 0)
