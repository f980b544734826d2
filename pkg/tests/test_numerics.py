import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from saff import numerics as nx
from saff.errors import ContractError, DimensionError, NonFiniteError, ParseError
from saff.numerics import Tensor


def test_matmul_identity():
    out = nx.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[2], [3]]))
    np.testing.assert_array_equal(out.data, [[2], [3]])


def test_matmul_dot():
    assert nx.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).data.tolist() == [[11.0]]


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        nx.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_grad_of_sum_is_ones_bT():
    rng = np.random.default_rng(0)
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = rng.standard_normal((4, 2))
    nx.backward(nx.matmul(a, Tensor(b)).sum())
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.T, rtol=0, atol=1e-14)

    # and the same thing by central differences, h = 1e-5
    h = 1e-5
    fd = np.zeros((3, 4))
    for i in range(3):
        for j in range(4):
            ap, am = a.data.copy(), a.data.copy()
            ap[i, j] += h
            am[i, j] -= h
            fd[i, j] = ((ap @ b).sum() - (am @ b).sum()) / (2 * h)
    np.testing.assert_allclose(a.grad, fd, rtol=1e-8)


def test_channel_mean_var_examples():
    mu, var = nx.channel_mean_var(Tensor([[[1.0], [3.0]]]))
    assert mu.data.tolist() == [[2.0]]
    assert var.data.tolist() == [[1.0]]

    const = np.full((2, 5, 3), 0.7)
    mu, var = nx.channel_mean_var(Tensor(const))
    np.testing.assert_array_equal(var.data, 0.0)
    np.testing.assert_array_equal(mu.data, 0.7)

    single = np.random.default_rng(1).standard_normal((4, 1, 6))
    mu, var = nx.channel_mean_var(Tensor(single))
    np.testing.assert_array_equal(mu.data, single[:, 0, :])
    np.testing.assert_array_equal(var.data, 0.0)


@given(arrays(np.float64, (3, 1, 4), elements=st.floats(-1e6, 1e6)), st.integers(1, 7))
def test_constant_token_axis_has_zero_variance(row, n):
    f = np.repeat(row, n, axis=1)
    _, var = nx.channel_mean_var(Tensor(f))
    assert np.all(var.data == 0.0)


def test_softmax_examples():
    np.testing.assert_array_equal(nx.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    s = nx.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(s)) and s[0] == pytest.approx(1.0) and s[1] < 1e-300 + 1e-12
    mpmath.mp.dps = 50
    den = sum(mpmath.e ** k for k in (1, 2, 3))
    ref = [float(mpmath.e ** k / den) for k in (1, 2, 3)]
    np.testing.assert_allclose(nx.softmax(Tensor([1.0, 2.0, 3.0])).data, ref, rtol=0, atol=1e-12)


@settings(max_examples=200)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 9)),
              elements=st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False)))
def test_softmax_sums_to_one(x):
    s = nx.softmax(Tensor(x), axis=-1).data
    assert np.all(s >= 0)
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, rtol=0, atol=1e-12)


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        nx.backward(x * 2.0)


def test_backward_accumulates_without_reset():
    x = Tensor([1.0, 2.0], requires_grad=True)
    nx.backward((x * 3.0).sum())
    nx.backward((x * 3.0).sum())
    np.testing.assert_array_equal(x.grad, [6.0, 6.0])


def test_backward_is_linear():
    rng = np.random.default_rng(3)
    w0 = rng.standard_normal((3, 3))

    def losses(w):
        return (nx.tanh(w) * w).sum(), nx.exp(w * 0.1).mean()

    w = Tensor(w0, requires_grad=True)
    a, b = losses(w)
    nx.backward(a + b)
    joint = w.grad

    w = Tensor(w0, requires_grad=True)
    a, _ = losses(w)
    nx.backward(a)
    ga = w.grad
    w = Tensor(w0, requires_grad=True)
    _, b = losses(w)
    nx.backward(b)
    np.testing.assert_allclose(joint, ga + w.grad, rtol=1e-14, atol=1e-15)


def test_shared_subexpression_visited_once():
    x = Tensor([2.0], requires_grad=True)
    y = x * x
    nx.backward((y + y).sum())
    assert x.grad.tolist() == [8.0]


def test_non_finite_forward_is_an_error():
    with pytest.raises(NonFiniteError):
        nx.log(Tensor([0.0]))


# -- gradient checks on every differentiable op --------------------------------

def _cases():
    ops = {
        "add": (lambda a, b: (a + b).sum() * 1.3, [(3, 4), (4,)]),
        "sub": (lambda a, b: ((a - b) * a).sum(), [(2, 3), (2, 3)]),
        "mul": (lambda a, b: (a * b).sum(), [(2, 1, 3), (2, 4, 3)]),
        "div": (lambda a, b: (a / (nx.square(b) + 1.0)).sum(), [(3, 2), (3, 2)]),
        "exp_log": (lambda a: nx.log(nx.exp(a) + 1.0).sum(), [(5,)]),
        "tanh": (lambda a: (nx.tanh(a) * a).sum(), [(2, 5)]),
        "sqrt": (lambda a: nx.sqrt(nx.square(a) + 0.5).sum(), [(4, 2)]),
        "matmul": (lambda a, b: nx.tanh(nx.matmul(a, b)).sum(), [(2, 3, 4), (4, 5)]),
        "reshape": (lambda a: (nx.reshape(a, (3, 4)) * np.arange(12.0).reshape(3, 4)).sum(), [(2, 6)]),
        "sum_axis": (lambda a: nx.square(a.sum(axis=1)).sum(), [(3, 4)]),
        "mean_axis": (lambda a: nx.square(a.mean(axis=0)).sum(), [(3, 4)]),
        "max": (lambda a: nx.square(nx.max_axis(a, 1)).sum(), [(2, 4, 3)]),
        "softmax": (lambda a: (nx.softmax(a) * np.arange(4.0)).sum(), [(3, 4)]),
        "log_softmax": (lambda a: (nx.log_softmax(a) * np.arange(4.0)).sum(), [(3, 4)]),
        "channel_stats": (lambda a: sum(t.sum() for t in nx.channel_mean_var(nx.square(a))), [(2, 3, 4)]),
        "take_concat": (lambda a, b: nx.square(nx.take_rows(nx.concat([a, b]), [3, 0, 0, 2])).sum(),
                        [(2, 3), (3, 3)]),
        "index": (lambda a: nx.square(a[1:, ::2]).sum(), [(3, 4)]),
    }
    return ops


@pytest.mark.parametrize("name", sorted(_cases()))
@pytest.mark.parametrize("seed", range(2))
def test_grad_check_ops(name, seed):
    fn, shapes = _cases()[name]
    rng = np.random.default_rng(seed)
    inputs = [rng.standard_normal(s) for s in shapes]
    report = nx.grad_check(fn, inputs, tolerance=1e-5)
    assert report.passed, report


def test_grad_check_linear_layer():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((5, 3))
    report = nx.grad_check(lambda w, b: nx.square(nx.matmul(Tensor(x), w) + b).sum(),
                           [rng.standard_normal((3, 2)), rng.standard_normal(2)], tolerance=1e-6)
    assert report.passed, report


def test_grad_check_softmax_cross_entropy():
    rng = np.random.default_rng(8)
    onehot = np.eye(4)[[0, 3, 1]]
    report = nx.grad_check(lambda z: -(nx.log_softmax(z) * onehot).sum() / 3,
                           [rng.standard_normal((3, 4))], tolerance=1e-6)
    assert report.passed, report


def test_grad_check_flags_a_wrong_gradient():
    # a deliberately broken op: forward squares, backward claims the identity
    def broken(a):
        return Tensor._result(a.data ** 2, (a,), lambda g: (g,), "broken").sum()

    assert not nx.grad_check(broken, [np.array([1.5, -2.0])], tolerance=1e-5).passed


# -- optimizer ------------------------------------------------------------------

def test_sgd_momentum_update():
    p = Tensor([1.0, -1.0], requires_grad=True)
    opt = nx.SGD([p], lr=0.1, momentum=0.9)
    p.grad = np.array([1.0, 2.0])
    opt.step()
    np.testing.assert_allclose(p.data, [0.9, -1.2])
    assert p.grad is None
    p.grad = np.array([1.0, 2.0])
    opt.step()
    # v = 0.9 * [1, 2] + [1, 2] = [1.9, 3.8]
    np.testing.assert_allclose(p.data, [0.9 - 0.19, -1.2 - 0.38])


def test_functional_sgd_step_matches_class():
    a = Tensor([0.5, 0.25], requires_grad=True)
    b = Tensor([0.5, 0.25], requires_grad=True)
    opt = nx.SGD([a], lr=0.05, momentum=0.9)
    state = None
    for g in ([1.0, -1.0], [0.5, 0.5], [2.0, 0.0]):
        a.grad, b.grad = np.array(g), np.array(g)
        opt.step()
        state = nx.sgd_step([b], 0.05, 0.9, state)
    np.testing.assert_array_equal(a.data, b.data)


# -- checkpoint -----------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"tokenizer": rng.standard_normal((5, 8)), "head": rng.standard_normal(3),
              "bank.mu_k": np.array([[1e-300, -0.0, np.pi]]), "scalar": np.array(2.5)}
    path = tmp_path / "ck.bin"
    nx.save_checkpoint(path, arrays)
    loaded = nx.load_checkpoint(path)
    assert list(loaded) == list(arrays)
    for k in arrays:
        assert loaded[k].shape == arrays[k].shape
        assert loaded[k].tobytes() == np.asarray(arrays[k], dtype=np.float64).tobytes()


def test_checkpoint_layout(tmp_path):
    path = tmp_path / "ck.bin"
    nx.save_checkpoint(path, {"ab": np.array([[1.0, 2.0]])})
    blob = path.read_bytes()
    expected = (b"SAFF" + (1).to_bytes(4, "little") + (2).to_bytes(4, "little") + b"ab"
                + (2).to_bytes(4, "little") + (1).to_bytes(8, "little") + (2).to_bytes(8, "little")
                + np.array([1.0, 2.0], dtype="<f8").tobytes())
    assert blob == expected


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE\x01\x00\x00\x00")
    with pytest.raises(ParseError):
        nx.load_checkpoint(path)
    path.write_bytes(b"SAFF\x01\x00\x00\x00\x05\x00\x00\x00ab")
    with pytest.raises(ParseError):
        nx.load_checkpoint(path)
