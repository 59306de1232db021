import numpy as np
import pytest
from scipy import linalg
from scipy import special
from apiae import graph
from apiae.exceptions import ShapeError, NonFiniteError, CholeskyError


def test_matmul_forward_and_grads():
    tape = graph.Tape()
    A = tape.leaf([[1.0, 2.0], [3.0, 4.0]])
    b = tape.leaf([1.0, 1.0])
    y = A @ b
    assert np.allclose(y.value, [3.0, 7.0])
    grads = graph.backward(tape, graph.sum(y))
    assert np.allclose(grads[A.id], [[1.0, 1.0], [1.0, 1.0]])
    assert np.allclose(grads[b.id], [4.0, 6.0])


def test_shape_mismatch_names_op():
    tape = graph.Tape()
    a = tape.leaf(np.ones((2, 3)))
    b = tape.leaf(np.ones((2, 3)))
    with pytest.raises(ShapeError) as e:
        a @ b
    assert "matmul" in str(e.value)
    with pytest.raises(ShapeError):
        a + tape.leaf(np.ones(2))


def test_suffix_broadcast():
    tape = graph.Tape()
    M = tape.leaf(np.zeros((3, 2)))
    v = tape.leaf([1.0, 2.0])
    out = M + v
    assert out.shape == (3, 2)
    grads = graph.backward(tape, graph.sum(out))
    assert np.allclose(grads[v.id], [3.0, 3.0])


def test_backward_needs_scalar_root():
    tape = graph.Tape()
    x = tape.leaf([1.0, 2.0])
    with pytest.raises(ShapeError):
        graph.backward(tape, graph.tanh(x))


def test_unreachable_leaf_gets_zero_gradient():
    tape = graph.Tape()
    x = tape.leaf([1.0, 2.0])
    y = tape.leaf([3.0])
    grads = graph.backward(tape, graph.sum(graph.square(x)))
    assert np.all(grads[y.id] == 0)
    assert np.allclose(grads[x.id], [2.0, 4.0])


def test_nonfinite_names_op():
    tape = graph.Tape()
    x = tape.leaf([1000.0])
    with pytest.raises(NonFiniteError) as e:
        graph.exp(x)
    assert "exp" in str(e.value)
    with pytest.raises(NonFiniteError):
        tape.leaf([np.nan])
    with pytest.raises(NonFiniteError):
        graph.log(tape.leaf([-1.0]))


def test_relu_gradient_at_zero():
    tape = graph.Tape()
    x = tape.leaf([0.0, 1.0, -1.0])
    grads = graph.backward(tape, graph.sum(graph.relu(x)))
    assert np.array_equal(grads[x.id], [0.0, 1.0, 0.0])


def test_softmax_and_logsumexp_are_stable():
    tape = graph.Tape()
    x = tape.leaf([1000.0, 1000.0])
    assert np.allclose(graph.softmax(x).value, [0.5, 0.5])
    assert np.isclose(graph.logsumexp(x).value, 1000.0 + np.log(2))


def test_softmax_and_logsumexp_match_scipy_on_rows():
    tape = graph.Tape()
    x = np.array([[-800.0, 0.0, 3.0], [1e-3, 2e-3, -1e-3], [700.0, 710.0, 690.0]])
    node = tape.leaf(x)
    assert np.allclose(graph.softmax(node).value, special.softmax(x, axis=-1), atol=1e-15)
    assert np.allclose(graph.logsumexp(node).value, special.logsumexp(x, axis=-1), rtol=1e-15)
    assert np.allclose(graph.softmax(node).value.sum(axis=-1), 1.0)


def test_stop_gradient():
    tape = graph.Tape()
    x = tape.leaf([2.0])
    y = graph.sum(x * tape.stop_gradient(x))
    grads = graph.backward(tape, y)
    assert np.allclose(grads[x.id], [2.0])


def test_backward_leaves_values_untouched():
    tape = graph.Tape()
    x = tape.leaf([0.3, -0.2])
    y = graph.sum(graph.tanh(x) * x)
    before = [n.value.copy() for n in tape.nodes]
    graph.backward(tape, y)
    for b, n in zip(before, tape.nodes):
        assert np.array_equal(b, n.value)


def test_numpy_on_the_left_defers_to_node():
    tape = graph.Tape()
    x = tape.leaf([1.0, 2.0])
    y = np.array([3.0, 4.0]) - x
    assert isinstance(y, graph.Node)
    assert np.allclose(y.value, [2.0, 2.0])


@pytest.mark.parametrize(
    "name,f,shape",
    [
        ("tanh", lambda t, x: graph.sum(graph.tanh(x)), (4,)),
        ("sigmoid", lambda t, x: graph.sum(graph.sigmoid(x) * x), (4,)),
        ("softplus", lambda t, x: graph.sum(graph.softplus(x)), (4,)),
        ("exp", lambda t, x: graph.sum(graph.exp(x)), (4,)),
        ("softmax", lambda t, x: graph.sum(graph.softmax(x) * t.constant([1.0, 2, 3, 4])), (4,)),
        ("softmax-rows", lambda t, x: graph.sum(graph.square(graph.softmax(x))), (3, 4)),
        ("logsumexp", lambda t, x: graph.logsumexp(x), (4,)),
        ("logsumexp-rows", lambda t, x: graph.sum(graph.logsumexp(x)), (3, 4)),
        ("matmul", lambda t, x: graph.sum(x @ x.T), (3, 2)),
        ("concat", lambda t, x: graph.sum(graph.square(graph.concat([x, x * 2.0]))), (3,)),
        ("stack", lambda t, x: graph.sum(graph.square(graph.stack([x, graph.tanh(x)]))), (3,)),
        ("take", lambda t, x: graph.sum(graph.square(graph.take(x, [0, 0, 2]))), (3, 2)),
        ("reshape", lambda t, x: graph.sum(graph.reshape(x, (2, 3)) @ t.constant([1.0, 2, 3])), (6,)),
        ("slice", lambda t, x: graph.sum(graph.square(x[1:, :1])), (3, 2)),
        ("sum-axis", lambda t, x: graph.sum(graph.square(graph.sum(x, axis=-1))), (3, 2)),
        ("mean", lambda t, x: graph.mean(graph.square(x)), (3, 2)),
        ("quadform", lambda t, x: graph.quadform(x, t.constant([[2.0, 1.0], [0.0, 3.0]])), (2,)),
        ("sqrt", lambda t, x: graph.sqrt(graph.sum(graph.square(x))), (3,)),
        ("diagflat", lambda t, x: graph.sum(graph.diagflat(x) @ t.constant([1.0, 2, 3])), (3,)),
        ("tril_fill", lambda t, x: graph.sum(graph.square(graph.tril_fill(x, 3, strict=True))), (3,)),
    ],
)
def test_grad_check_ops(name, f, shape):
    point = np.random.default_rng(len(name)).standard_normal(shape)
    assert graph.grad_check(f, point) < 1e-4


def test_grad_check_cholesky_and_trisolve():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3))
    S = A @ A.T + 3 * np.eye(3)

    def f(tape, x):
        L = graph.cholesky(x @ x.T + tape.constant(np.eye(3)))
        b = tape.constant([1.0, -2.0, 0.5])
        return graph.sum(graph.trisolve(L, b)) + graph.sum(
            graph.trisolve(L, tape.constant(np.ones((3, 2))), trans=True)
        )

    assert graph.grad_check(f, linalg.cholesky(S, lower=True)) < 1e-4


def test_cholesky_rejects_indefinite():
    tape = graph.Tape()
    with pytest.raises(CholeskyError):
        graph.cholesky(tape.leaf([[1.0, 2.0], [2.0, 1.0]]))


def test_trisolve_matches_scipy():
    rng = np.random.default_rng(4)
    L = np.tril(rng.standard_normal((3, 3))) + 3 * np.eye(3)
    b = rng.standard_normal(3)
    tape = graph.Tape()
    out = graph.trisolve(tape.leaf(L), tape.leaf(b), trans=True)
    assert np.allclose(out.value, linalg.solve(L.T, b))


def test_clip_gradient_is_zero_outside():
    tape = graph.Tape()
    x = tape.leaf([-10.0, 0.0, 10.0])
    grads = graph.backward(tape, graph.sum(graph.clip(x, -5, 3)))
    assert np.array_equal(grads[x.id], [0.0, 1.0, 0.0])


def test_pack_unpack():
    params = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([7.0])}
    vector, layout = graph.pack(params)
    assert vector.shape == (7,)
    tape = graph.Tape()
    out = graph.unpack(tape, tape.leaf(vector), layout)
    assert np.array_equal(out["a"].value, params["a"])
    assert np.array_equal(out["b"].value, params["b"])


def test_grad_check_skips_structural_zeros():
    # the second coordinate never influences the output
    f = lambda tape, x: graph.square(x[0])
    assert graph.grad_check(f, [1.5, 0.0]) < 1e-6


def test_grad_check_is_relative_to_small_gradients(monkeypatch):
    # a vjp that is 1% off on a gradient of size 1e-6
    monkeypatch.setitem(
        graph.OPS,
        "tiny_scale",
        graph.Op(
            "tiny_scale",
            lambda v, at: 1e-6 * v[0],
            lambda g, out, v, at: (1.01e-6 * g,),
        ),
    )
    f = lambda tape, x: graph.sum(tape.record("tiny_scale", [x]))
    err = graph.grad_check(f, [0.3, -0.7])
    assert 5e-3 < err < 2e-2
