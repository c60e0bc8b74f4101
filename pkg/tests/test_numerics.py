import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import sceneorder.numerics as nx
from sceneorder.numerics import AdamW, ShapeError, Tensor, check_gradients, parameter
from sceneorder.numerics import checkpoint

TOL = 1e-4


def _p(rng, *shape, positive=False):
    d = rng.normal(size=shape)
    return parameter(np.abs(d) + 0.5 if positive else d)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def _cases(rng):
    x, z, pos = _p(rng, 3, 4), _p(rng, 1, 4), _p(rng, 3, 4, positive=True)
    y, b3 = _p(rng, 4, 2), _p(rng, 2, 3, 4)
    emb = _p(rng, 5, 4)
    w = rng.normal(size=(3, 4))
    idx = np.array([[0], [2], [1]])
    return {
        "add": (lambda: ((x + z) * w).sum(), [x, z]),
        "sub": (lambda: ((x - z) * w).sum(), [x, z]),
        "mul": (lambda: ((x * z) * w).sum(), [x, z]),
        "div": (lambda: ((x / pos) * w).sum(), [x, pos]),
        "power": (lambda: ((pos ** 1.5) * w).sum(), [pos]),
        "matmul": (lambda: ((x @ y) ** 2).sum(), [x, y]),
        "batched_matmul": (lambda: ((b3 @ y) ** 2).sum(), [b3, y]),
        "exp": (lambda: (nx.exp(x) * w).sum(), [x]),
        "log": (lambda: (nx.log(pos) * w).sum(), [pos]),
        "tanh": (lambda: (nx.tanh(x) * w).sum(), [x]),
        "sigmoid": (lambda: (nx.sigmoid(x) * w).sum(), [x]),
        "log_sigmoid": (lambda: (nx.log_sigmoid(x * 5) * w).sum(), [x]),
        "log1mexp": (lambda: (nx.log1mexp(pos) * w).sum(), [pos]),
        "gelu": (lambda: (nx.gelu(x) * w).sum(), [x]),
        "reduce_sum": (lambda: (x.sum(axis=0) ** 2).sum(), [x]),
        "reduce_mean": (lambda: (x.mean(axis=1, keepdims=True) ** 2).sum(), [x]),
        "softmax": (lambda: (nx.softmax(x) * w).sum(), [x]),
        "log_softmax": (lambda: (nx.log_softmax(x) * w).sum(), [x]),
        "logsumexp": (lambda: (nx.logsumexp(x, axis=1) ** 2).sum(), [x]),
        "layer_norm": (lambda: (nx.layer_norm(x) * w).sum(), [x]),
        "dropout": (lambda: (nx.dropout(x, 0.3, np.random.default_rng(1)) * w).sum(), [x]),
        "reshape": (lambda: (x.reshape(4, 3) ** 2 * w.reshape(4, 3)).sum(), [x]),
        "transpose": (lambda: ((x.T @ x) * np.arange(16.0).reshape(4, 4)).sum(), [x]),
        "slice": (lambda: (x[1:, ::2] ** 3).sum(), [x]),
        "gather_rows": (lambda: (x[np.array([0, 0, 2])] ** 3).sum(), [x]),
        "concat": (lambda: (nx.concat([x, z], axis=0) ** 3).sum(), [x, z]),
        "embedding": (lambda: (nx.embedding(emb, np.array([[1, 1], [4, 0]])) ** 3).sum(), [emb]),
        "take_along_axis": (lambda: (nx.take_along_axis(x, idx, 1) ** 3).sum(), [x]),
        "where": (lambda: (nx.where(w > 0, x, z) ** 3).sum(), [x, z]),
        "masked_fill": (lambda: (nx.softmax(nx.masked_fill(x, w > 0.5, -np.inf)) * w).sum(), [x]),
        "clamp_min": (lambda: (nx.clamp_min(x, 0.1) ** 2).sum(), [x]),
    }


@pytest.mark.parametrize("name", sorted(_cases(np.random.default_rng(0))))
def test_op_gradient(name):
    f, inputs = _cases(np.random.default_rng(0))[name]
    assert check_gradients(f, inputs) < TOL


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-3, 3)),
       arrays(np.float64, (3, 3), elements=st.floats(-3, 3)))
def test_matmul_gradient_property(a, b):
    x, y = parameter(a), parameter(b)
    w = np.arange(1.0, 10.0).reshape(3, 3)
    assert check_gradients(lambda: ((x @ y) * w).sum(), [x, y]) < TOL


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=st.floats(-50, 50)))
def test_softmax_sums_to_one(a):
    s = nx.softmax(Tensor(a)).data
    assert np.allclose(s.sum(axis=-1), 1.0, atol=1e-9)
    assert (s >= 0).all()


def test_softmax_uniform():
    assert np.allclose(nx.softmax(Tensor(np.zeros(3))).data, 1 / 3)


@given(st.floats(-100, 100), st.integers(1, 8))
def test_layer_norm_constant_is_zero(c, n):
    assert np.allclose(nx.layer_norm(Tensor(np.full(n, c))).data, 0.0)


def test_dropout_identity_cases(rng):
    x = Tensor(rng.normal(size=(4, 5)))
    assert np.array_equal(nx.dropout(x, 0.0, rng).data, x.data)
    assert np.array_equal(nx.dropout(x, 0.7, training=False).data, x.data)
    d = nx.dropout(Tensor(np.ones((200, 200))), 0.25, rng).data
    assert set(np.unique(d)) <= {0.0, 1 / 0.75}
    assert abs(d.mean() - 1.0) < 0.02


def test_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((4, 5)))
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4,\)"):
        Tensor(np.zeros((2, 3))) + Tensor(np.zeros(4))


class TestBackward:
    def test_sum_gives_ones(self, rng):
        x = _p(rng, 3, 2)
        x.sum().backward()
        assert np.array_equal(x.grad, np.ones((3, 2)))

    def test_square(self, rng):
        x = _p(rng, 5)
        (x * x).sum().backward()
        assert np.allclose(x.grad, 2 * x.data)

    def test_twice_doubles(self, rng):
        x = _p(rng, 4)
        loss = (x * x).sum()
        loss.backward()
        loss.backward()
        assert np.allclose(x.grad, 4 * x.data)

    def test_non_scalar(self, rng):
        with pytest.raises(ShapeError):
            (_p(rng, 3) * 2).backward()

    def test_no_grad(self, rng):
        x = _p(rng, 3)
        with nx.no_grad():
            y = x * 2
            assert not nx.is_grad_enabled()
        assert nx.is_grad_enabled()
        assert not y.requires_grad and y._backward is None


class TestAdamW:
    def test_zero_grad_no_decay_unchanged(self, rng):
        w = _p(rng, 3)
        before = w.data.copy()
        w.grad = np.zeros(3)
        AdamW([w], lr=0.1).step()
        assert np.array_equal(w.data, before)

    def test_descent(self):
        w = parameter(np.array([1.0]))
        opt = AdamW([w], lr=0.1)
        (w * w).sum().backward()
        opt.step()
        assert w.data[0] < 1.0

    def test_quadratic_converges(self):
        w = parameter(np.array([1.5, -2.0]))
        opt = AdamW([w], lr=0.05)
        target = np.array([0.3, 0.7])
        for _ in range(200):
            opt.zero_grad()
            loss = (((w - target) ** 2) * np.array([1.0, 3.0])).sum()
            loss.backward()
            opt.step()
        final = float((((w.data - target) ** 2) * np.array([1.0, 3.0])).sum())
        assert final < 1e-6

    def test_decay_is_decoupled(self):
        w = parameter(np.array([2.0]))
        w.grad = np.zeros(1)
        opt = AdamW([w], lr=0.1, weight_decay=0.5)
        opt.step()
        assert w.data[0] == pytest.approx(2.0 * (1 - 0.05))
        assert np.all(opt.m[0] == 0) and np.all(opt.v[0] == 0)


class TestCheckpoint:
    def test_roundtrip_and_bytes(self, tmp_path, rng):
        arrays = {"b": rng.normal(size=(2, 3)), "a": rng.normal(size=4), "s": np.array(1.5)}
        meta = {"z": 1, "a": [1, 2]}
        checkpoint.save(tmp_path / "x.ckpt", arrays, meta)
        back, m = checkpoint.load(tmp_path / "x.ckpt")
        assert m == meta
        for k in arrays:
            assert np.array_equal(back[k], arrays[k])
        assert checkpoint.dumps(back, m) == (tmp_path / "x.ckpt").read_bytes()

    def test_bad_magic(self):
        with pytest.raises(checkpoint.CheckpointError):
            checkpoint.loads(b"nonsense" * 4)

    def test_truncated(self, rng):
        buf = checkpoint.dumps({"w": rng.normal(size=100)})
        with pytest.raises(checkpoint.CheckpointError):
            checkpoint.loads(buf[:-16])
