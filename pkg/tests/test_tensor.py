import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from corgan.errors import GraphStateError, NumericError, ShapeError
from corgan.tensor import (Graph, Tensor, concat, no_grad, sample_noise, straight_through_round,
                           topological_order)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_addition_example():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = (x + x).sum()
    y.backward()
    assert y.item() == 6.0
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])


def test_reused_node_accumulates():
    x = Tensor(3.0, requires_grad=True)
    y = x * x * x
    y.backward()
    assert x.grad == pytest.approx(27.0)


def test_backward_needs_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2).backward()


def test_backward_twice_accumulates():
    x = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    (x * 3).sum().backward()
    (x * 3).sum().backward()
    np.testing.assert_array_equal(x.grad, [6.0, 6.0])


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2).sum()
    assert not y.requires_grad and y._parents == ()
    z = (x * 2).sum()
    assert z.requires_grad


def test_constants_get_no_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    c = Tensor(np.arange(3.0))
    (x * c).sum().backward()
    assert c.grad is None
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 2.0])


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_raises():
    x = Tensor(np.array([0.0]), requires_grad=True)
    with pytest.raises(NumericError):
        x.log().sum().backward()


def test_topological_order_parents_first():
    a = Tensor(1.0, requires_grad=True)
    b = a * 2
    c = a + b
    d = c * b
    order = topological_order(d)
    pos = {t.id: i for i, t in enumerate(order)}
    for t in order:
        for p in t._parents:
            assert pos[p.id] < pos[t.id]
    assert order[-1] is d


def test_straight_through_round_forward_and_backward():
    x = Tensor(np.array([0.49, 0.5, 0.51, -0.5, 1.7]), requires_grad=True)
    r = straight_through_round(x)
    np.testing.assert_array_equal(r.data, [0.0, 1.0, 1.0, 0.0, 2.0])
    g = np.array([1.0, -2.0, 3.0, 0.5, 4.0])
    (r * g).sum().backward()
    np.testing.assert_array_equal(x.grad, g)


def test_concat_splits_gradient():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((2, 3)), requires_grad=True)
    (concat([a, b], axis=1) * np.arange(5.0)).sum().backward()
    np.testing.assert_array_equal(a.grad, [[0, 1], [0, 1]])
    np.testing.assert_array_equal(b.grad, [[2, 3, 4], [2, 3, 4]])
    with pytest.raises(ShapeError):
        concat([a, Tensor(np.ones((3, 1)))], axis=1)


def test_sample_noise():
    z = sample_noise(4, 3, 0)
    assert z.shape == (4, 3)
    np.testing.assert_array_equal(z.data, sample_noise(4, 3, 0).data)
    with pytest.raises(ValueError):
        sample_noise(0, 3, 0)
    with pytest.raises(ValueError):
        sample_noise(4, -1, 0)


def test_graph_forward_backward():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    g = Graph(lambda x: (x * w).sum(), input_shapes=[(None, 2)])
    with pytest.raises(GraphStateError):
        g.backward()
    out = g.forward(np.array([[1.0, 1.0], [2.0, 0.0]]))
    assert out.item() == 5.0
    assert {n.op for n in g.nodes} >= {"mul", "sum"}
    g.backward()
    np.testing.assert_array_equal(w.grad, [3.0, 1.0])
    Graph.zero_grad([w])
    assert w.grad is None


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_graph_checks_shapes_and_finiteness():
    g = Graph(lambda x: x.sum(), input_shapes=[(None, 2)])
    with pytest.raises(ShapeError):
        g.forward(np.ones((3, 3)))
    g = Graph(lambda x: (x / 0.0).sum())
    with pytest.raises(NumericError):
        g.forward(np.ones(2))


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=finite))
def test_linear_functional_gradient_is_its_weights(a):
    # d/dx sum(x * W) = W for any x
    rng = np.random.default_rng(0)
    W = rng.standard_normal(a.shape)
    x = Tensor(a, requires_grad=True)
    (x * W).sum().backward()
    np.testing.assert_array_equal(x.grad, W)


@given(arrays(np.float64, st.integers(1, 8), elements=finite))
def test_sigmoid_stable_and_bounded(a):
    s = Tensor(a * 100).sigmoid().data
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(s))


@settings(max_examples=50)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 3)), elements=finite),
       st.sampled_from([(1, 1), (1, 3), (3, 1), (3,), ()]))
def test_broadcast_gradient_shapes(a, bshape):
    x = Tensor(a, requires_grad=True)
    b = Tensor(np.ones(bshape), requires_grad=True)
    try:
        out = x + b
    except ValueError:
        return
    out.sum().backward()
    assert x.grad.shape == x.shape and b.grad.shape == b.shape
    assert b.grad.sum() == pytest.approx(out.size)
