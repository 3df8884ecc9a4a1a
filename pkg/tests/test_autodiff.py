import math

import numpy as np
import pytest

from greybox import autodiff as ad
from greybox.autodiff import Rng, Tensor, backward


def finite_diff(fn, tensors, h=1e-5):
    """Central-difference gradients of scalar fn w.r.t. each tensor's data."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = fn().item()
            flat[i] = orig - h
            lo = fn().item()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * h)
        grads.append(g)
    return grads


def check_grads(fn, tensors, h=1e-5, tol=1e-4):
    out = fn()
    backward(out)
    numeric = finite_diff(fn, tensors, h=h)
    for t, num in zip(tensors, numeric):
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1.0)
        rel = np.abs(ana - num) / denom
        assert rel.max() < tol, f"gradient mismatch: rel error {rel.max():.3g}"


def leaf(rng, shape, scale=1.0, shift=0.0):
    return Tensor(rng.uniform(size=shape, low=-scale, high=scale) + shift,
                  requires_grad=True)


# --- forward-op examples -----------------------------------------------------

def test_softmax_symmetry():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)


def test_cosine_identity():
    rng = Rng(0)
    v = Tensor(rng.uniform(size=8, low=-1, high=1))
    assert abs(ad.cosine(v, v).item() - 1.0) < 1e-12


def test_cross_entropy_hand_value():
    # -0.6*ln 0.6 - 0.4*ln 0.4 = 0.6730...
    ce = ad.cross_entropy(Tensor([0.6, 0.4]), [0.6, 0.4])
    expected = -0.6 * math.log(0.6) - 0.4 * math.log(0.4)
    assert abs(ce.item() - expected) < 1e-9
    assert abs(ce.item() - 0.6730) < 5e-5


def test_cross_entropy_rejects_bad_target():
    with pytest.raises(ValueError):
        ad.cross_entropy(Tensor([0.6, 0.4]), [0.9, 0.4])


def test_shape_mismatch_names_both_shapes():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((4, 2)))
    with pytest.raises(ad.ShapeError) as err:
        ad.matmul(a, b)
    assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)


# --- backward trivials --------------------------------------------------------

def test_grad_of_sum_is_ones():
    x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
    backward(ad.sum_(x))
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_grad_of_dot_xx():
    x = Tensor([1.0, 2.0], requires_grad=True)
    backward(ad.sum_(ad.mul(x, x)))
    assert np.allclose(x.grad, [2.0, 4.0])


def test_backward_rejects_nonscalar_root():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ad.ShapeError):
        backward(ad.mul(x, x))


def test_fanout_accumulates():
    x = Tensor([3.0], requires_grad=True)
    y = ad.add(x, x)  # dy/dx = 2
    backward(ad.sum_(y))
    assert np.allclose(x.grad, [2.0])


def test_backward_returns_leaf_gradient_map():
    x = Tensor([1.0, 2.0], requires_grad=True)
    grads = backward(ad.sum_(ad.mul(x, x)))
    assert x in grads
    assert np.allclose(grads[x], [2.0, 4.0])


# --- finite-difference sweep over every op ------------------------------------

N_CASES = 50


@pytest.mark.parametrize("case", range(N_CASES))
def test_elementwise_ops_gradcheck(case):
    rng = Rng(1000 + case)
    a = leaf(rng, (3, 4))
    b = leaf(rng, (3, 4))
    c = leaf(rng, (4,))  # broadcast operand
    ops = [
        lambda: ad.sum_(ad.mul(ad.add(a, b), ad.sub(a, b))),
        lambda: ad.sum_(ad.div(a, ad.add(b, Tensor(3.0)))),
        lambda: ad.sum_(ad.tanh(ad.add(a, c))),
        lambda: ad.sum_(ad.sigmoid(ad.mul(a, b))),
        lambda: ad.sum_(ad.relu(ad.add(a, Tensor(0.3)))),
        lambda: ad.sum_(ad.exp(ad.mul(a, Tensor(0.5)))),
        lambda: ad.sum_(ad.log(ad.add(ad.mul(a, a), Tensor(0.5)))),
        lambda: ad.sum_(ad.pow_(ad.add(ad.mul(a, a), Tensor(1.0)), 1.5)),
        lambda: ad.sum_(ad.clamp_min(a, 0.1)),
    ]
    for fn in ops:
        for t in (a, b, c):
            t.grad = None
        check_grads(fn, [a, b, c])


@pytest.mark.parametrize("case", range(N_CASES))
def test_structural_ops_gradcheck(case):
    rng = Rng(2000 + case)
    a = leaf(rng, (2, 3))
    b = leaf(rng, (3, 4))
    x3 = leaf(rng, (2, 5, 3))
    m = leaf(rng, (6, 3))
    ids = np.array([[0, 5, 2], [1, 1, 4]])
    w6 = Tensor(rng.uniform(size=(2, 6)))
    w15 = Tensor(rng.uniform(size=(2, 15)))
    w233 = Tensor(rng.uniform(size=(2, 3, 3)))
    w246 = Tensor(rng.uniform(size=(2, 4, 6)))
    ops = [
        (lambda: ad.sum_(ad.matmul(a, b)), [a, b]),
        (lambda: ad.sum_(ad.matmul(x3, b)), [x3, b]),
        (lambda: ad.sum_(ad.mul(ad.concat([a, a], axis=1), w6)), [a]),
        (lambda: ad.sum_(ad.mul(a[:, 1:3], Tensor([[1.0, 2.0], [3.0, 4.0]]))), [a]),
        (lambda: ad.sum_(ad.mul(ad.reshape(x3, (2, 15)), w15)), [x3]),
        (lambda: ad.sum_(ad.mul(ad.take_rows(m, ids), w233)), [m]),
        (lambda: ad.sum_(ad.mul(ad.unfold(x3, 2), w246)), [x3]),
    ]
    for fn, tensors in ops:
        for t in tensors:
            t.grad = None
        check_grads(fn, tensors)


@pytest.mark.parametrize("case", range(N_CASES))
def test_reduction_and_prob_ops_gradcheck(case):
    rng = Rng(3000 + case)
    a = leaf(rng, (3, 5))
    u = leaf(rng, (4,), shift=0.2)
    v = leaf(rng, (4,), shift=-0.1)
    valid = np.ones((3, 5), dtype=bool)
    valid[0, 3:] = False
    valid[2, 4] = False
    weights = rng.uniform(size=(3, 5))
    target = np.full((3, 5), 0.2)
    ops = [
        (lambda: ad.sum_(ad.mul(ad.softmax(a), Tensor(weights))), [a]),
        (lambda: ad.sum_(ad.mul(ad.log_softmax(a), Tensor(weights))), [a]),
        (lambda: ad.sum_(ad.mul(ad.masked_softmax(a, valid), Tensor(weights))), [a]),
        (lambda: ad.mean_(ad.max_(a, axis=1)), [a]),
        (lambda: ad.mean_(a, axis=None), [a]),
        (lambda: ad.cosine(u, v), [u, v]),
        (lambda: ad.sum_(ad.cross_entropy(ad.softmax(a), target)), [a]),
    ]
    for fn, tensors in ops:
        for t in tensors:
            t.grad = None
        check_grads(fn, tensors)


def test_masked_softmax_exact_zeros_and_sum():
    rng = Rng(7)
    a = leaf(rng, (2, 4))
    valid = np.array([[True, True, False, False], [True, True, True, False]])
    s = ad.masked_softmax(a, valid)
    assert np.all(s.data[~valid] == 0.0)
    assert np.allclose(s.data.sum(axis=-1), 1.0, atol=1e-12)


# --- gumbel-softmax ------------------------------------------------------------

def test_gumbel_rows_are_distributions():
    rng = Rng(11)
    logits = Tensor(rng.uniform(size=(8, 40), low=-2, high=2))
    out = ad.gumbel_softmax(logits, 0.7, rng.child("noise"))
    assert np.all(out.data >= 0.0)
    assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)


def test_gumbel_rejects_nonpositive_tau():
    with pytest.raises(ValueError):
        ad.gumbel_softmax(Tensor([0.0, 1.0]), 0.0, Rng(0))


def test_gumbel_peaked_logit_dominates_at_low_tau():
    # one logit +20 above the rest, tau=0.1: argmax wins >99% of seeded draws
    logits = np.zeros(30)
    logits[4] = 20.0
    hits = 0
    draws = 1000
    for i in range(draws):
        out = ad.gumbel_softmax(Tensor(logits), 0.1, Rng(50_000 + i))
        if out.data.max() > 0.999 and out.data.argmax() == 4:
            hits += 1
    assert hits >= 0.99 * draws


def test_gumbel_same_seed_same_sample():
    logits = Tensor(np.linspace(-1, 1, 16))
    a = ad.gumbel_softmax(logits, 0.5, Rng(99))
    b = ad.gumbel_softmax(logits, 0.5, Rng(99))
    assert np.array_equal(a.data, b.data)


def test_gumbel_differentiable_wrt_logits():
    rng = Rng(13)
    logits = leaf(rng, (3, 6))
    weights = rng.uniform(size=(3, 6))

    def fn():
        return ad.sum_(ad.mul(ad.gumbel_softmax(logits, 1.0, Rng(4242)), Tensor(weights)))

    check_grads(fn, [logits])


# --- rng / optimizer -----------------------------------------------------------

def test_rng_same_seed_same_stream():
    a = Rng(123).uniform(size=100)
    b = Rng(123).uniform(size=100)
    assert np.array_equal(a, b)


def test_rng_child_streams_differ():
    r = Rng(5)
    assert r.child("a").seed != r.child("b").seed
    assert r.child("a").seed == Rng(5).child("a").seed


def test_adam_minimizes_quadratic():
    x = Tensor([4.0, -3.0], requires_grad=True)
    opt = ad.Adam([x], lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        backward(ad.sum_(ad.mul(x, x)))
        opt.step()
    assert np.all(np.abs(x.data) < 1e-2)


def test_no_grad_builds_no_graph():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with ad.no_grad():
        y = ad.mul(x, x)
    assert not y.requires_grad and y._backward is None
