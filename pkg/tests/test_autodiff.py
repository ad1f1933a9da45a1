from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import fd_relative_error, path_graph
from graphdr import autodiff as ad
from graphdr.errors import ContractError, ShapeError
from graphdr.graph import normalized_adjacency
from graphdr.nn import AdamState, GcnEncoder, adam_step, dbn_forward, gcn_forward, init_weights
from graphdr.numerics import make_rng, spd_inverse_sqrt_small


def grad_of(fn, x0):
    p = ad.Parameter(np.array(x0, dtype=np.float64))
    loss = fn(p)
    ad.backward(loss, [p])
    return p.grad


def value_of(fn, x):
    return fn(ad.constant(x)).item()


# ---------------------------------------------------------------------------
# primitives


def test_relu_and_log():
    p = ad.Parameter(np.array([-1.0, 2.0]))
    out = ad.record("relu", p)
    assert out.numpy().tolist() == [0.0, 2.0]
    ad.backward(ad.tsum(out), [p])
    assert p.grad.tolist() == [0.0, 1.0]
    q = ad.Parameter(np.array([1.0, 4.0]))
    out = ad.record("log", q)
    assert out.numpy()[0] == 0.0
    ad.backward(ad.tsum(out), [q])
    assert np.allclose(q.grad, [1.0, 0.25])


def test_unknown_primitive():
    with pytest.raises(ContractError):
        ad.record("softplus", ad.constant([1.0]))


def test_x_sigmoid_x_matches_fd():
    x = np.array([-2.0, -0.3, 0.0, 0.7, 3.0])
    f = lambda t: ad.tsum(ad.mul(t, ad.sigmoid(t)))
    g = grad_of(f, x)
    assert fd_relative_error(lambda v: value_of(f, v), x, g) < 1e-6


def test_sum_and_half_square():
    w = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(grad_of(ad.tsum, w), np.ones((2, 3)))
    assert np.allclose(grad_of(lambda t: ad.mul(ad.tsum(ad.mul(t, t)), 0.5), w), w)


PRIMITIVE_CASES = {
    "matmul": lambda t: ad.tsum(ad.matmul(t, ad.constant(np.array([[1.0, -2.0], [0.5, 3.0], [2.0, 1.0]])))),
    "sparse_matmul": lambda t: ad.tsum(ad.mul(ad.matmul(sp.csr_matrix(np.array([[1.0, 0.0], [0.5, 2.0]])), t), t)),
    "exp": lambda t: ad.tsum(ad.exp(t)),
    "pow": lambda t: ad.tsum(ad.power(ad.add(ad.mul(t, t), 1.0), 0.7)),
    "mean_axis": lambda t: ad.tsum(ad.mul(ad.mean(t, axis=0), np.array([1.0, 2.0, 3.0]))),
    "sum_keepdims": lambda t: ad.tsum(ad.mul(ad.tsum(t, axis=1, keepdims=True), t)),
    "transpose": lambda t: ad.tsum(ad.mul(ad.transpose(t), np.arange(6.0).reshape(3, 2))),
    "row_normalize": lambda t: ad.tsum(ad.mul(ad.row_normalize(t), np.arange(6.0).reshape(2, 3))),
    "pairwise_sq_dist": lambda t: ad.tsum(ad.power(ad.add(ad.pairwise_sq_dist(t), 1.0), -1.0)),
    "gather_pairs": lambda t: ad.tsum(ad.mul(ad.gather_pairs(t, np.array([0, 1, 0]), np.array([1, 0, 1])),
                                             ad.gather_pairs(t, np.array([0, 1, 0]), np.array([1, 0, 1])))),
    "batch_center": lambda t: ad.tsum(ad.mul(ad.batch_center(t), ad.batch_center(t))),
    "sub_broadcast": lambda t: ad.tsum(ad.mul(ad.sub(t, ad.mean(t, axis=0, keepdims=True)), t)),
    "clamp": lambda t: ad.tsum(ad.mul(ad.clamp(t, -1.0, 1.0), t)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_adjoints(name):
    f = PRIMITIVE_CASES[name]
    x = np.array([[0.3, -1.2, 0.8], [1.5, 0.4, -0.6]])
    g = grad_of(f, x)
    assert fd_relative_error(lambda v: value_of(f, v), x, g) < 1e-7


def test_trace_normalize_and_ns_step_adjoints():
    s0 = np.array([[2.0, 0.3], [0.3, 1.0]])

    def f(t):
        sym = ad.mul(ad.add(t, ad.transpose(t)), 0.5)
        sn = ad.trace_normalize(sym)
        p = ad.ns_iteration_step(ad.constant(np.eye(2)), sn)
        p = ad.ns_iteration_step(p, sn)
        return ad.tsum(ad.mul(p, np.array([[1.0, 2.0], [3.0, 4.0]])))

    g = grad_of(f, s0)
    assert fd_relative_error(lambda v: value_of(f, v), s0, g) < 1e-7


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 2))))


def test_backward_requires_scalar():
    with pytest.raises(ContractError):
        ad.backward(ad.Parameter(np.ones(3)))


def test_unused_parameter_gets_zero_grad():
    used = ad.Parameter(np.ones((2, 2)))
    unused = ad.Parameter(np.ones((3, 1)))
    ad.backward(ad.tsum(used), [used, unused])
    assert np.array_equal(unused.grad, np.zeros((3, 1)))
    assert used.grad.shape == used.value.shape


def test_backward_visits_in_reverse_topological_order():
    visits = []

    def node(name, *parents):
        def bw(g):
            visits.append(name)
            return [g for _ in parents]
        return ad.Tensor(parents[0].value, parents=parents, backward_fn=bw, op=name)

    x = ad.Parameter(np.array(1.0))
    a = node("a", x)
    b = node("b", a)
    c = node("c", a, b)
    d = node("d", b, c)
    ad.backward(d, [x])
    order = {n: k for k, n in enumerate(visits)}
    consumers = {"a": ["b", "c"], "b": ["c", "d"], "c": ["d"], "d": []}
    for n, users in consumers.items():
        assert all(order[u] < order[n] for u in users)
    assert visits == ["d", "c", "b", "a"]
    # x feeds a once; d = b + c = 3a along all paths
    assert x.grad == pytest.approx(3.0)


def test_replay_is_identical():
    rng = make_rng(0)
    enc = GcnEncoder(path_graph(5), 3, 4, 2, rng=rng)
    x = make_rng(1).normal(size=(5, 3))
    assert np.array_equal(gcn_forward(enc, x).numpy(), gcn_forward(enc, x).numpy())


# ---------------------------------------------------------------------------
# GCN


def test_gcn_zero_weights():
    enc = GcnEncoder(path_graph(4), 3, 5, 2, rng=make_rng(0))
    enc.w0.value = np.zeros_like(enc.w0.value)
    enc.w1.value = np.zeros_like(enc.w1.value)
    assert np.array_equal(gcn_forward(enc, np.ones((4, 3))).numpy(), np.zeros((4, 2)))


def test_gcn_single_node_limit():
    enc = GcnEncoder(np.array([[1.0]]), 3, 4, 2, rng=make_rng(0))
    x = np.array([[0.5, -1.0, 2.0]])
    expected = np.maximum(x @ enc.w0.value, 0) @ enc.w1.value
    assert np.allclose(gcn_forward(enc, x).numpy(), expected)


def test_gcn_path_graph_dense_chain():
    g = path_graph(3)
    enc = GcnEncoder(g, 2, 3, 2, rng=make_rng(4))
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    # dense oracle: degrees with self loops (2, 3, 2)
    d = np.array([2.0, 3.0, 2.0])
    a = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float) / np.sqrt(np.outer(d, d))
    assert np.allclose(a, normalized_adjacency(g, True))
    expected = a @ np.maximum(a @ x @ enc.w0.value, 0) @ enc.w1.value
    assert np.allclose(gcn_forward(enc, x).numpy(), expected, atol=1e-14)
    assert gcn_forward(enc, x).shape == (3, 2)


def test_gcn_feature_shape_error():
    enc = GcnEncoder(path_graph(3), 2, 3, 2, rng=make_rng(0))
    with pytest.raises(ShapeError):
        gcn_forward(enc, np.ones((3, 4)))


def test_gcn_cross_entropy_gradient_fd():
    """Two-layer GCN plus binary cross-entropy on an 8-node toy graph."""
    rng = make_rng(3)
    g = path_graph(8)
    x = rng.normal(size=(8, 3))
    enc = GcnEncoder(g, 3, 4, 2, rng=rng)
    target = (np.arange(8) % 2).astype(float)

    def loss_at(w0, w1):
        enc.w0.value, enc.w1.value = w0, w1
        z = gcn_forward(enc, x)
        s = ad.sigmoid(ad.tsum(z, axis=1))
        ll = ad.add(ad.mul(ad.log(s), target), ad.mul(ad.log(ad.sub(1.0, s)), 1.0 - target))
        return ad.mul(ad.tsum(ll), -1.0)

    w0, w1 = enc.w0.value.copy(), enc.w1.value.copy()
    loss = loss_at(w0, w1)
    ad.backward(loss, enc.parameters())
    g0, g1 = enc.w0.grad.copy(), enc.w1.grad.copy()
    assert fd_relative_error(lambda v: loss_at(v, w1).item(), w0, g0) < 1e-4
    assert fd_relative_error(lambda v: loss_at(w0, v).item(), w1, g1) < 1e-4


# ---------------------------------------------------------------------------
# whitening


def _cov(y):
    yc = y - y.mean(axis=0)
    return yc.T @ yc / y.shape[0]


def test_dbn_fixed_point():
    rng = make_rng(0)
    y = rng.normal(size=(200, 2))
    y = (y - y.mean(0)) @ spd_inverse_sqrt_small(_cov(y))
    assert np.allclose(dbn_forward(y, eps=0.0).numpy(), y, atol=1e-5)


def test_dbn_diag_cov():
    rng = make_rng(1)
    z = rng.normal(size=(400, 2))
    z = (z - z.mean(0)) @ spd_inverse_sqrt_small(_cov(z))
    y = z * np.array([2.0, 1.0])  # covariance diag(4, 1)
    out = dbn_forward(y, eps=0.0, iters=8).numpy()
    assert np.abs(_cov(out) - np.eye(2)).max() < 1e-4
    # oracle: direct eigendecomposition whitening
    assert np.allclose(out, (y - y.mean(0)) @ spd_inverse_sqrt_small(_cov(y)), atol=1e-4)


def test_dbn_constant_column_finite():
    y = np.stack([np.linspace(0, 1, 20), np.full(20, 3.0)], axis=1)
    assert np.all(np.isfinite(dbn_forward(y, eps=1e-4).numpy()))


def test_dbn_needs_two_rows():
    with pytest.raises(ContractError):
        dbn_forward(np.ones((1, 2)))


@given(st.integers(0, 10_000))
def test_dbn_whitens_random_inputs(seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(64, 2)) @ rng.uniform(0.5, 1.5, size=(2, 2)) + rng.normal(size=2)
    if np.linalg.cond(_cov(y)) > 20:
        y = rng.normal(size=(64, 2))
    out = dbn_forward(y).numpy()
    assert np.abs(out.mean(axis=0)).max() < 1e-8
    assert np.linalg.norm(_cov(out) - np.eye(2)) < 1e-3


def test_dbn_gradient_fd():
    y0 = make_rng(2).normal(size=(8, 2)) @ np.array([[1.0, 0.3], [0.0, 0.8]])
    wts = make_rng(5).normal(size=(8, 2))
    f = lambda t: ad.tsum(ad.mul(dbn_forward(t), wts))
    g = grad_of(f, y0)
    assert fd_relative_error(lambda v: value_of(f, v), y0, g) < 1e-4


# ---------------------------------------------------------------------------
# init and Adam


def test_xavier_uniform_bound():
    w = init_weights((4, 4), "xavier_uniform", make_rng(0))
    assert np.abs(w).max() <= np.sqrt(6 / 8)


def test_xavier_normal_variance():
    w = np.concatenate([init_weights((2, 2), "xavier_normal", make_rng(s)).ravel() for s in range(2500)])
    assert w.size == 10_000
    assert abs(w.var() - 0.5) < 0.05


def test_init_golden_and_errors():
    w = init_weights((2, 2), "normal", make_rng(0))
    assert np.allclose(w, GOLDEN_NORMAL_INIT)
    with pytest.raises(ContractError):
        init_weights((2, 2), "xavier_ones", make_rng(0))


GOLDEN_NORMAL_INIT = [[0.001257302210933933, -0.0013210486329130189],
                      [0.006404226504432821, 0.001049001171530397]]


def test_adam_zero_gradient_no_change():
    p = ad.Parameter(np.array([1.0, -2.0]))
    p.grad = np.zeros(2)
    adam_step(AdamState(), [p])
    assert np.array_equal(p.value, [1.0, -2.0])


def test_adam_first_step():
    p = ad.Parameter(np.array([0.0]))
    p.grad = np.array([1.0])
    st_ = AdamState(lr=0.01)
    adam_step(st_, [p])
    # m_hat = 1, v_hat = 1 after bias correction
    assert p.value[0] == pytest.approx(-0.01 / (1 + 1e-8), rel=1e-12)


def test_adam_bookkeeping():
    p = ad.Parameter(np.array([0.5, 0.5]))
    st_ = AdamState()
    for k in range(1, 4):
        p.grad = np.array([1.0, -1.0])
        adam_step(st_, [p])
        assert st_.t == k
        assert np.all(np.isfinite(st_.m[0])) and np.all(st_.v[0] > 0)
        assert st_.m[0].shape == p.value.shape
