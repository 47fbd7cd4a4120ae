import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmerc import numerics as nx
from mmerc.numerics import ShapeError, Tensor

TOL = 1e-4


def leaf(rng, *shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def assert_grads(fn, inputs, tol=TOL):
    errs = nx.check_gradients(fn, inputs)
    assert max(errs) < tol, errs


# -- forward values against explicit loops ---------------------------------

def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    ref = np.zeros((4, 3))
    for i in range(4):
        for j in range(3):
            for k in range(5):
                ref[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(nx.matmul(Tensor(a), Tensor(b)).data, ref, atol=1e-12)


def test_matmul_shape_error():
    with pytest.raises(ShapeError, match="matmul shape mismatch"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_softmax_example():
    out = nx.softmax(Tensor(np.array([[1.0, 2.0, 3.0]])), axis=1).data
    e = np.exp([1.0, 2.0, 3.0])
    np.testing.assert_allclose(out[0], e / e.sum(), atol=1e-15)
    np.testing.assert_allclose(out[0], [0.09003057, 0.24472847, 0.66524096], atol=1e-8)


def test_softmax_is_shift_invariant_and_stable():
    x = np.array([[1000.0, 1001.0, 1002.0]])
    out = nx.softmax(Tensor(x), axis=1).data
    np.testing.assert_allclose(out, nx.softmax(Tensor(x - 1000.0), axis=1).data, atol=1e-15)
    assert np.all(np.isfinite(out))


def test_softmax_bad_axis():
    with pytest.raises(ShapeError):
        nx.softmax(Tensor(np.ones((2, 2))), axis=3)


def test_masked_softmax_zeroes_masked_and_empty_rows():
    x = Tensor(np.array([[1.0, 2.0, 3.0], [0.5, 0.1, 0.2]]))
    mask = np.array([[True, False, True], [False, False, False]])
    out = nx.masked_softmax(x, mask).data
    assert out[0, 1] == 0.0
    np.testing.assert_allclose(out[0, [0, 2]], nx.softmax(Tensor(np.array([[1.0, 3.0]]))).data[0])
    assert np.all(out[1] == 0.0)


def test_layer_norm_example():
    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    out = nx.layer_norm(Tensor(x), Tensor(np.ones(4)), Tensor(np.zeros(4)), eps=1e-5).data
    ref = (x - 2.5) / np.sqrt(1.25 + 1e-5)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_layer_norm_affine(rng):
    x = rng.normal(size=(3, 5))
    gamma, beta = rng.normal(size=5), rng.normal(size=5)
    out = nx.layer_norm(Tensor(x), Tensor(gamma), Tensor(beta), eps=1e-5).data
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    np.testing.assert_allclose(out, gamma * (x - mu) / np.sqrt(var + 1e-5) + beta, atol=1e-12)


def test_cross_entropy_matches_direct_formula(rng):
    z = rng.normal(size=(5, 4))
    y = np.array([0, 3, 1, 1, 2])
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    ref = -np.mean(np.log(p[np.arange(5), y]))
    assert abs(float(nx.cross_entropy(Tensor(z), y).data) - ref) < 1e-12


def test_cross_entropy_survives_huge_logits():
    z = Tensor(np.array([[1e4, 0.0], [0.0, 1e4]]))
    assert float(nx.cross_entropy(z, [0, 1]).data) == pytest.approx(0.0, abs=1e-12)
    assert float(nx.cross_entropy(z, [1, 0]).data) == pytest.approx(1e4)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(IndexError):
        nx.cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])


def test_embedding_lookup_out_of_range():
    with pytest.raises(IndexError):
        nx.embedding_lookup(Tensor(np.zeros((2, 3))), [0, 2])


def test_concat_shape_error():
    with pytest.raises(ShapeError):
        nx.concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))], axis=1)


def test_dropout_eval_is_identity_and_train_is_inverted(rng):
    x = Tensor(np.ones((200, 50)))
    assert nx.dropout(x, 0.5, False, None) is x
    out = nx.dropout(x, 0.5, True, np.random.default_rng(0)).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert abs(out.mean() - 1.0) < 0.05


def test_backward_requires_scalar():
    with pytest.raises(ShapeError):
        nx.backward(Tensor(np.ones(3), requires_grad=True) * 2.0)


def test_gradients_accumulate_across_backward_calls(rng):
    w = leaf(rng, 3)
    for _ in range(2):
        nx.backward((w * w).sum())
    np.testing.assert_allclose(w.grad, 4.0 * w.data)


def test_shared_subexpression_gradient(rng):
    # y = x*x used twice: d/dx sum(y + y) = 4x
    x = leaf(rng, 4)
    y = x * x
    nx.backward((y + y).sum())
    np.testing.assert_allclose(x.grad, 4.0 * x.data, atol=1e-12)


# -- finite-difference checks, one per op -----------------------------------

def test_grad_add_broadcast(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 4)
    assert_grads(lambda: ((a + b) * (a + b)).sum(), [a, b])


def test_grad_sub_neg(rng):
    a, b = leaf(rng, 3, 2), leaf(rng, 3, 2)
    assert_grads(lambda: ((a - b) * (-a)).sum(), [a, b])


def test_grad_mul_broadcast(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 1, 4)
    assert_grads(lambda: (a * b * a).sum(), [a, b])


def test_grad_div_scalar(rng):
    a = leaf(rng, 3)
    assert_grads(lambda: ((a / 3.0) * a).sum(), [a])


def test_grad_exp_log(rng):
    a = Tensor(rng.uniform(0.5, 2.0, size=(3, 3)), requires_grad=True)
    assert_grads(lambda: (nx.exp(a) * nx.log(a)).sum(), [a])


def test_grad_relu(rng):
    a = Tensor(rng.normal(size=(4, 4)) + np.sign(rng.normal(size=(4, 4))) * 0.1, requires_grad=True)
    assert_grads(lambda: (nx.relu(a) * a).sum(), [a])


def test_grad_transpose_reshape(rng):
    a, w = leaf(rng, 2, 6), leaf(rng, 3, 4)
    assert_grads(lambda: (a.reshape(3, 4) * w).sum() + (a.T @ a).sum(), [a, w])


def test_grad_getitem(rng):
    a = leaf(rng, 5, 3)
    idx = np.array([0, 2, 2, 4])
    assert_grads(lambda: (a[idx] * a[idx]).sum() + a[1:3].sum(), [a])


def test_grad_concat(rng):
    a, b = leaf(rng, 2, 3), leaf(rng, 2, 2)
    w = Tensor(rng.normal(size=(2, 5)))
    assert_grads(lambda: (nx.concat([a, b], axis=1) * w).sum(), [a, b])
    c = leaf(rng, 1, 3)
    v = Tensor(rng.normal(size=(3, 3)))
    assert_grads(lambda: (nx.concat([a, c], axis=0) * v).sum(), [a, c])


def test_grad_sum_mean_axes(rng):
    a = leaf(rng, 3, 4)
    w = Tensor(rng.normal(size=3))
    assert_grads(lambda: (a.sum(axis=1) * w).sum() + (a.mean(axis=0) * a.mean(axis=0)).sum(), [a])


def test_grad_matmul(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 4, 2)
    assert_grads(lambda: ((a @ b) * (a @ b)).sum(), [a, b])


def test_grad_sparse_matmul(rng):
    m = sp.random(5, 4, density=0.5, random_state=3, format="csr")
    x = leaf(rng, 4, 3)
    assert_grads(lambda: (nx.sparse_matmul(m, x) * nx.sparse_matmul(m, x)).sum(), [x])


def test_grad_segment_sum(rng):
    x = leaf(rng, 6, 2)
    seg = np.array([0, 2, 2, 1, 0, 2])
    w = Tensor(rng.normal(size=(3, 2)))
    assert_grads(lambda: (nx.segment_sum(x, seg, 3) * w * nx.segment_sum(x, seg, 3)).sum(), [x])


def test_grad_softmax(rng):
    a = leaf(rng, 3, 4)
    w = Tensor(rng.normal(size=(3, 4)))
    assert_grads(lambda: (nx.softmax(a, axis=1) * w).sum(), [a])
    assert_grads(lambda: (nx.softmax(a, axis=0) * w).sum(), [a])


def test_grad_masked_softmax(rng):
    a = leaf(rng, 3, 4)
    mask = np.array([[1, 0, 1, 1], [0, 1, 0, 0], [0, 0, 0, 0]], dtype=bool)
    w = Tensor(rng.normal(size=(3, 4)))
    assert_grads(lambda: (nx.masked_softmax(a, mask) * w).sum(), [a])


def test_grad_segment_softmax(rng):
    s = leaf(rng, 7)
    seg = np.array([0, 0, 1, 2, 2, 2, 0])
    w = Tensor(rng.normal(size=7))
    assert_grads(lambda: (nx.segment_softmax(s, seg, 4) * w).sum(), [s])


def test_grad_layer_norm(rng):
    x, g, b = leaf(rng, 3, 5), leaf(rng, 5), leaf(rng, 5)
    w = Tensor(rng.normal(size=(3, 5)))
    assert_grads(lambda: (nx.layer_norm(x, g, b) * w).sum(), [x, g, b])


def test_grad_embedding_lookup(rng):
    t = leaf(rng, 4, 3)
    w = Tensor(rng.normal(size=(5, 3)))
    assert_grads(lambda: (nx.embedding_lookup(t, [1, 0, 1, 3, 1]) * w).sum(), [t])


def test_grad_dropout_fixed_mask(rng):
    x = leaf(rng, 4, 4)
    # same seed on every call -> same mask, so the function is deterministic
    assert_grads(lambda: (nx.dropout(x, 0.3, True, np.random.default_rng(5)) * x).sum(), [x])


def test_grad_log_softmax_and_cross_entropy(rng):
    z = leaf(rng, 5, 3)
    w = Tensor(rng.normal(size=(5, 3)))
    assert_grads(lambda: (nx.log_softmax(z) * w).sum(), [z])
    assert_grads(lambda: nx.cross_entropy(z, [0, 2, 1, 1, 0]), [z])


# -- properties --------------------------------------------------------------

finite = st.floats(-20, 20, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_softmax_rows_are_distributions(x):
    p = nx.softmax(Tensor(x), axis=1).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 6)), elements=finite))
def test_layer_norm_rows_standardised(x):
    x = x + np.arange(x.shape[1])  # keep rows non-constant
    out = nx.layer_norm(Tensor(x), Tensor(np.ones(x.shape[1])), Tensor(np.zeros(x.shape[1])),
                        eps=1e-12).data
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-9)
    np.testing.assert_allclose((out ** 2).mean(axis=1), 1.0, atol=1e-6)


def test_layer_norm_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        nx.layer_norm(Tensor(np.ones((1, 2))), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)


# -- Adam --------------------------------------------------------------------

def test_adam_first_step_moves_by_lr():
    # bias correction makes the first step exactly lr * sign(g) (up to eps)
    p = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    state = nx.AdamState()
    nx.adam_step({"p": p}, {"p": np.array([0.3, -4.0, 1e-3])}, state, lr=0.1, eps=1e-12)
    np.testing.assert_allclose(p.data, [0.9, -1.9, 0.4], atol=1e-9)


def test_adam_matches_reference_loop(rng):
    p = Tensor(rng.normal(size=4), requires_grad=True)
    ref = p.data.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    state = nx.AdamState()
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    for t in range(1, 6):
        g = rng.normal(size=4)
        nx.adam_step({"p": p}, {"p": g}, state, lr, b1, b2, eps)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref = ref - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    np.testing.assert_allclose(p.data, ref, atol=1e-12)


def test_adam_minimises_quadratic():
    w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = nx.Adam({"w": w}, lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        nx.backward((w * w).sum())
        opt.step()
    assert np.abs(w.data).max() < 1e-2


def test_adam_rejects_bad_betas_and_shapes():
    p = Tensor(np.zeros(2))
    with pytest.raises(ValueError):
        nx.adam_step({"p": p}, {"p": np.zeros(2)}, nx.AdamState(), beta1=1.0)
    with pytest.raises(ShapeError):
        nx.adam_step({"p": p}, {"p": np.zeros(3)}, nx.AdamState())


# -- checkpoints ---------------------------------------------------------------

@pytest.mark.parametrize("name", ["ck.bin", "ck.json"])
def test_checkpoint_roundtrip(tmp_path, rng, name):
    params = {"b.w": rng.normal(size=(3, 2)), "a": rng.normal(size=4), "s": np.array(2.5)}
    nx.save_checkpoint(tmp_path / name, params, {"epoch": 3})
    loaded, meta = nx.load_checkpoint(tmp_path / name)
    assert meta == {"epoch": 3}
    assert set(loaded) == set(params)
    for k in params:
        assert loaded[k].shape == params[k].shape
        np.testing.assert_array_equal(loaded[k], params[k])


def test_checkpoint_bytes_are_deterministic(tmp_path, rng):
    params = {"x": rng.normal(size=(5, 5)), "y": rng.normal(size=3)}
    nx.save_checkpoint(tmp_path / "a.bin", params, {"k": 1})
    nx.save_checkpoint(tmp_path / "b.bin", dict(reversed(list(params.items()))), {"k": 1})
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "junk.bin").write_bytes(b"\x00\x01not a checkpoint")
    with pytest.raises(ValueError):
        nx.load_checkpoint(tmp_path / "junk.bin")
