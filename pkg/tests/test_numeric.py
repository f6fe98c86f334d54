"""Engine tests: forward oracles, gradient checks per op, tensor IO."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gnnrec.numeric as nm
from gnnrec.errors import DataError, DimensionError, SnapshotError
from gnnrec.numeric import Parameter, backward, grad_check


def test_affine_hand_values():
    w = Parameter(np.array([[1.0, 2.0], [3.0, 4.0]]), "w")
    b = Parameter(np.zeros(2), "b")
    out = nm.affine(w, nm.as_node([1.0, 1.0]), b)
    assert np.array_equal(out.value, [3.0, 7.0])


def test_affine_identity_and_bias_only():
    w = Parameter(np.eye(3), "w")
    b = Parameter(np.zeros(3), "b")
    x = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(nm.affine(w, nm.as_node(x), b).value, x)
    w0 = Parameter(np.zeros((1, 3)), "w0")
    b5 = Parameter(np.array([5.0]), "b5")
    assert np.array_equal(nm.affine(w0, nm.as_node(x), b5).value, [5.0])


def test_affine_shape_mismatch():
    w = Parameter(np.eye(2), "w")
    b = Parameter(np.zeros(2), "b")
    with pytest.raises(DimensionError):
        nm.affine(w, nm.as_node([1.0, 2.0, 3.0]), b)


def test_activations_hand_values():
    assert nm.relu(nm.as_node([-2.0, 3.0])).value.tolist() == [0.0, 3.0]
    assert nm.leaky_relu(nm.as_node([-1.0]), 0.01).value.tolist() == [-0.01]
    assert nm.sigmoid(nm.as_node([0.0])).value.tolist() == [0.5]


def test_sigmoid_overflow_safe():
    out = nm.sigmoid(nm.as_node([-1000.0, 1000.0])).value
    assert np.all(np.isfinite(out))
    assert out[0] == 0.0 and out[1] == 1.0


def test_softmax_hand_values():
    assert np.allclose(nm.softmax(nm.as_node([0.0, 0.0])).value, [0.5, 0.5])
    out = nm.softmax(nm.as_node([1.0, 2.0])).value
    assert np.allclose(out, [0.26894, 0.73106], atol=1e-5)
    assert np.allclose(nm.softmax(nm.as_node([4.2] * 3)).value, [1 / 3] * 3)


def test_softmax_empty_rejected():
    with pytest.raises(DataError):
        nm.softmax(nm.as_node(np.empty(0)))


@settings(max_examples=200)
@given(
    st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=12),
    st.floats(min_value=-100, max_value=100),
)
def test_softmax_sum_and_shift_invariance(values, shift):
    x = np.array(values)
    out = nm.softmax(nm.as_node(x)).value
    assert abs(out.sum() - 1.0) <= 1e-9
    assert np.all(out > 0)
    shifted = nm.softmax(nm.as_node(x + shift)).value
    assert np.allclose(out, shifted, atol=1e-12)


def test_concat_hand_values():
    assert nm.concat(nm.as_node([1.0]), nm.as_node([2.0])).value.tolist() == [1.0, 2.0]
    assert nm.concat(nm.as_node(np.empty(0)), nm.as_node([3.0])).value.tolist() == [3.0]
    assert nm.concat(nm.as_node([1.0, 2.0]), nm.as_node([3.0])).value.tolist() == [1.0, 2.0, 3.0]


def test_grad_check_quadratic():
    x = Parameter(np.array([3.0]), "x")
    err = grad_check(lambda: nm.dot(x, x), [x], epsilon=1e-5)
    assert err < 1e-8
    x.zero_grad()
    out = nm.dot(x, x)
    backward(out)
    assert np.allclose(x.grad, [6.0])


def test_grad_check_constant_function():
    x = Parameter(np.array([1.0, 2.0]), "x")
    err = grad_check(lambda: nm.as_node(np.asarray(0.0)), [x], epsilon=1e-5)
    assert err == 0.0
    assert np.array_equal(x.grad, np.zeros(2))


def test_grad_accumulation_additive():
    x = Parameter(np.array([1.0, -2.0]), "x")
    w = Parameter(np.array([[0.5, 1.5], [2.0, 0.25]]), "w")
    b = Parameter(np.zeros(2), "b")

    def run():
        return nm.total(nm.relu(nm.affine(w, x, b)))

    x.zero_grad(), w.zero_grad(), b.zero_grad()
    backward(run())
    once = (x.grad.copy(), w.grad.copy(), b.grad.copy())
    backward(run())
    assert np.array_equal(x.grad, 2 * once[0])
    assert np.array_equal(w.grad, 2 * once[1])
    assert np.array_equal(b.grad, 2 * once[2])


def _rng_vec(rng, n):
    # keep away from relu/clip kinks so finite differences stay clean
    v = rng.uniform(0.1, 1.0, n) * rng.choice([-1.0, 1.0], n)
    return v


def _op_cases(rng):
    d = 4
    x = Parameter(_rng_vec(rng, d), "x")
    y = Parameter(_rng_vec(rng, d), "y")
    w = Parameter(rng.uniform(-1, 1, (d, d)) + np.eye(d), "w")
    b = Parameter(_rng_vec(rng, d), "b")
    mat = Parameter(rng.uniform(0.2, 1.0, (3, d)), "mat")
    wv = Parameter(rng.uniform(0.1, 1.0, 3), "wv")
    s = Parameter(np.asarray(rng.uniform(0.2, 0.8)), "s")
    seg = np.array([0, 0, 2])
    return {
        "add": (lambda: nm.total(nm.add(x, y)), [x, y]),
        "scale": (lambda: nm.total(nm.scale(x, -1.7)), [x]),
        "one_minus": (lambda: nm.total(nm.one_minus(x)), [x]),
        "affine": (lambda: nm.total(nm.affine(w, x, b)), [w, x, b]),
        "affine_rows": (lambda: nm.total(nm.affine(w, mat, b)), [w, mat, b]),
        "relu": (lambda: nm.total(nm.relu(x)), [x]),
        "leaky_relu": (lambda: nm.total(nm.leaky_relu(x, 0.01)), [x]),
        "sigmoid": (lambda: nm.total(nm.sigmoid(x)), [x]),
        "softmax": (lambda: nm.dot(nm.softmax(x), y), [x, y]),
        "concat": (lambda: nm.total(nm.concat(x, y)), [x, y]),
        "dot": (lambda: nm.dot(x, y), [x, y]),
        "stack": (lambda: nm.total(nm.stack([nm.dot(x, y), nm.dot(x, x)])), [x, y]),
        "weighted_sum": (lambda: nm.total(nm.weighted_sum([x, y, x], wv)), [x, y, wv]),
        "max_elements": (lambda: nm.total(nm.max_elements([x, y])), [x, y]),
        "log": (lambda: nm.total(nm.log(nm.sigmoid(x))), [x]),
        "clip": (lambda: nm.total(nm.clip(x, -0.9, 0.9)), [x]),
        "l2sq": (lambda: nm.l2sq(w), [w]),
        "row": (lambda: nm.total(nm.row(mat, 1)), [mat]),
        "gather_rows": (lambda: nm.total(nm.gather_rows(mat, np.array([0, 2, 0]))), [mat]),
        "rows_dot": (lambda: nm.total(nm.rows_dot(mat, nm.gather_rows(mat, np.array([2, 1, 0])))), [mat]),
        "matvec": (lambda: nm.total(nm.matvec(mat, x)), [mat, x]),
        "add_scalar": (lambda: nm.total(nm.add_scalar(x, s)), [x, s]),
        "mask_rows": (lambda: nm.total(nm.mask_rows(mat, np.array([1.0, 0.0, 1.0]))), [mat]),
        "segment_softmax": (
            lambda: nm.total(nm.segment_weighted_rows(mat, nm.segment_softmax(nm.matvec(mat, x), seg, 3), seg, 3)),
            [mat, x],
        ),
        "segment_weighted_rows": (
            lambda: nm.total(nm.segment_weighted_rows(mat, wv, seg, 3)),
            [mat, wv],
        ),
        "segment_max_rows": (lambda: nm.total(nm.segment_max_rows(mat, seg, 3)), [mat]),
    }


@pytest.mark.parametrize("op_name", sorted(_op_cases(np.random.default_rng(0))))
def test_backward_matches_finite_differences(op_name):
    """Every op's backward rule agrees with central differences, 100+ seeds."""
    for seed in range(100):
        cases = _op_cases(np.random.default_rng(seed))
        f, params = cases[op_name]
        err = grad_check(f, params, epsilon=1e-5)
        assert err < 1e-4, f"{op_name} seed {seed}: rel err {err}"


def test_forward_ops_finite_on_finite_input():
    rng = np.random.default_rng(3)
    for f, _ in _op_cases(rng).values():
        assert np.all(np.isfinite(f().value))


def test_xavier_bound():
    rng = np.random.default_rng(0)
    arr = nm.xavier_uniform((40, 10), rng)
    bound = np.sqrt(6.0 / 50)
    assert np.all(np.abs(arr) <= bound)
    vec = nm.xavier_uniform((10,), rng)
    assert np.all(np.abs(vec) <= np.sqrt(6.0 / 11))


def test_tensor_roundtrip(tmp_path):
    tensors = {
        "a.w": np.arange(6, dtype=np.float64).reshape(2, 3),
        "b": np.array([1.5, -2.5]),
        "c.scalar": np.asarray(7.0),
    }
    path = tmp_path / "t.bin"
    nm.save_tensors(path, tensors)
    loaded = nm.load_tensors(path)
    assert set(loaded) == set(tensors)
    for name in tensors:
        assert loaded[name].shape == tensors[name].shape
        assert np.array_equal(loaded[name], tensors[name])


def test_tensor_bad_magic():
    with pytest.raises(SnapshotError):
        nm.load_tensors(io.BytesIO(b"not a snapshot\n"))


def test_tensor_truncated():
    buf = io.BytesIO()
    nm.save_tensors(buf, {"x": np.ones(4)})
    data = buf.getvalue()[:-8]
    with pytest.raises(SnapshotError):
        nm.load_tensors(io.BytesIO(data))
