import numpy as np
import pytest

from fbsde import autodiff as ad
from fbsde.errors import ParameterError, ShapeError
from fbsde.oracles import finite_diff_grad


def rel_err(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return np.max(np.abs(a - b)) / scale


def grad_of(build, x0):
    """Autodiff gradient of a scalar-valued tape function of one array."""
    tape = ad.Tape()
    p = tape.parameter("p", x0)
    out = build(p)
    return tape.gradients(out)["p"]


class TestMatmul:
    def test_identity(self):
        out = ad.matmul(ad.constant(np.eye(2)), ad.constant([[3.0], [4.0]]))
        assert np.array_equal(out.value, [[3.0], [4.0]])

    def test_hand_product(self):
        out = ad.matmul(ad.constant([[1.0, 2.0]]), ad.constant([[3.0], [4.0]]))
        assert out.item() == 11.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(-2, 2, (3, 4))
        b = rng.uniform(-2, 2, (4, 2))

        ga = grad_of(lambda p: ad.sum_all(ad.matmul(p, ad.constant(b))), a)
        fa = finite_diff_grad(lambda x: float((x @ b).sum()), a.copy())
        assert rel_err(ga, fa) < 1e-6

        gb = grad_of(lambda p: ad.sum_all(ad.matmul(ad.constant(a), p)), b)
        fb = finite_diff_grad(lambda x: float((a @ x).sum()), b.copy())
        assert rel_err(gb, fb) < 1e-6


class TestElementwise:
    def test_tanh_odd_and_saturating(self):
        assert ad.tanh(ad.constant(0.0)).item() == 0.0
        big = ad.tanh(ad.constant(50.0)).item()
        assert -1.0 < big < 1.0

    def test_tanh_backward_at_half(self):
        g = grad_of(lambda p: ad.sum_all(ad.tanh(p)), np.array([[0.5]]))
        f = finite_diff_grad(lambda x: float(np.tanh(x).sum()), np.array([[0.5]]))
        assert rel_err(g, f) < 1e-6

    def test_incompatible_shapes(self):
        with pytest.raises(ShapeError):
            ad.add(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 2))))

    def test_scalar_broadcast(self):
        out = ad.add(ad.constant(np.ones((3, 2))), ad.constant(5.0))
        assert np.all(out.value == 6.0)

    def test_row_broadcast_gradient(self):
        bias = np.array([[0.3, -0.7]])
        g = grad_of(lambda p: ad.sum_squares(ad.add(ad.constant(np.ones((4, 2))), p)), bias)
        f = finite_diff_grad(lambda x: float(((np.ones((4, 2)) + x) ** 2).sum()), bias.copy())
        assert rel_err(g, f) < 1e-6


class TestSig:
    def test_zero(self):
        assert ad.sig(ad.constant(0.0)).item() == 0.0

    def test_odd_symmetry(self):
        for v in (0.3, 1.7, 9.0, 40.0):
            assert ad.sig(ad.constant(v)).item() + ad.sig(ad.constant(-v)).item() == pytest.approx(0.0, abs=1e-15)

    def test_round_trip_through_inverse(self):
        # sig(log((1+mu)/(1-mu))) recovers mu
        mu = 0.5
        v = np.log((1 + mu) / (1 - mu))
        assert ad.sig(ad.constant(v)).item() == pytest.approx(mu, abs=1e-12)

    def test_open_interval_even_when_saturated(self):
        for v in (100.0, 1e6, -1e6):
            out = ad.sig(ad.constant(v)).item()
            assert abs(out) < 1.0


class TestSumSquares:
    def test_zeros(self):
        assert ad.sum_squares(ad.constant([0.0, 0.0])).item() == 0.0

    def test_hand_value(self):
        assert ad.sum_squares(ad.constant([3.0, 4.0])).item() == 25.0

    def test_analytic_gradient(self):
        g = grad_of(ad.sum_squares, np.array([[3.0, 4.0]]))
        assert np.array_equal(g, [[6.0, 8.0]])


class TestGradients:
    def test_unused_parameter_gets_zero(self):
        tape = ad.Tape()
        used = tape.parameter("used", [[2.0]])
        tape.parameter("unused", [[1.0, 1.0]])
        grads = tape.gradients(ad.sum_squares(used))
        assert np.array_equal(grads["used"], [[4.0]])
        assert np.array_equal(grads["unused"], [[0.0, 0.0]])

    def test_loss_must_be_scalar(self):
        tape = ad.Tape()
        p = tape.parameter("p", np.ones((2, 2)))
        with pytest.raises(ParameterError):
            tape.gradients(ad.square(p))

    def test_linear_layer_matches_finite_difference(self):
        rng = np.random.default_rng(11)
        W = rng.uniform(-2, 2, (3, 3))
        x = rng.uniform(-2, 2, (3, 1))
        g = grad_of(lambda p: ad.sum_squares(ad.matmul(p, ad.constant(x))), W)
        f = finite_diff_grad(lambda w: float(((w @ x) ** 2).sum()), W.copy())
        assert rel_err(g, f) < 1e-5

    def test_ten_step_unroll_matches_finite_difference(self):
        # chained matmuls + tanh over 10 steps exercises backprop through time
        rng = np.random.default_rng(3)
        W = rng.uniform(-0.8, 0.8, (4, 4))
        x0 = rng.uniform(-1, 1, (1, 4))

        def run(w):
            h = x0
            for _ in range(10):
                h = np.tanh(h @ w)
            return float((h ** 2).sum())

        def build(p):
            h = ad.constant(x0)
            for _ in range(10):
                h = ad.tanh(ad.matmul(h, p))
            return ad.sum_squares(h)

        g = grad_of(build, W)
        f = finite_diff_grad(run, W.copy())
        assert rel_err(g, f) < 1e-5


UNARY_CASES = [
    ("tanh", ad.tanh, np.tanh),
    ("square", ad.square, np.square),
    ("neg", ad.neg, np.negative),
    ("sin", ad.sin, np.sin),
    ("cos", ad.cos, np.cos),
    ("exp", ad.exp, np.exp),
    ("sigmoid", ad.sigmoid, lambda x: 1 / (1 + np.exp(-x))),
    ("sig", ad.sig, lambda x: 2 / (1 + np.exp(-x)) - 1),
]


@pytest.mark.parametrize("name,op,ref", UNARY_CASES, ids=[c[0] for c in UNARY_CASES])
def test_unary_gradients_random_trials(name, op, ref):
    # 100 random draws in [-2, 2] per operation, relative error < 1e-5
    rng = np.random.default_rng(hash(name) % 2**32)
    for _ in range(100):
        x = rng.uniform(-2, 2, (2, 3))
        g = grad_of(lambda p: ad.sum_all(op(p)), x)
        f = finite_diff_grad(lambda a: float(ref(a).sum()), x.copy())
        assert np.all(np.abs(g - f) <= 1e-8 + 1e-5 * np.abs(f)), name


def test_binary_gradients_random_trials():
    rng = np.random.default_rng(123)
    for _ in range(100):
        a = rng.uniform(-2, 2, (3, 2))
        b = rng.uniform(-2, 2, (3, 2))
        for op, ref in ((ad.add, np.add), (ad.sub, np.subtract), (ad.mul, np.multiply)):
            g = grad_of(lambda p: ad.sum_all(op(p, ad.constant(b))), a)
            f = finite_diff_grad(lambda x: float(ref(x, b).sum()), a.copy())
            assert rel_err(g, f) < 1e-5


def test_layout_ops_roundtrip_gradients():
    rng = np.random.default_rng(5)
    x = rng.uniform(-2, 2, (4, 6))

    def build(p):
        left = ad.columns(p, 0, 2)
        right = ad.columns(p, 2, 6)
        glued = ad.hcat([ad.square(left), right])
        return ad.sum_squares(glued)

    def run(a):
        glued = np.concatenate([a[:, :2] ** 2, a[:, 2:]], axis=1)
        return float((glued ** 2).sum())

    assert rel_err(grad_of(build, x), finite_diff_grad(run, x.copy())) < 1e-5


def test_rowsum_and_reciprocal_gradients():
    rng = np.random.default_rng(9)
    x = rng.uniform(0.5, 2.0, (3, 4))
    g = grad_of(lambda p: ad.sum_squares(ad.rowsum(ad.reciprocal(p))), x)
    f = finite_diff_grad(lambda a: float(((1 / a).sum(axis=1) ** 2).sum()), x.copy())
    assert rel_err(g, f) < 1e-5


def test_wrap_angles_values():
    x = np.array([[0.0, np.pi, -np.pi, 2.5 * np.pi, -0.5]])
    out = ad.wrap_angles(ad.constant(x)).value
    assert out[0, 0] == 0.0
    assert out[0, 1] == pytest.approx(np.pi)
    assert out[0, 2] == pytest.approx(np.pi)      # -pi maps into (-pi, pi]
    assert out[0, 3] == pytest.approx(0.5 * np.pi)
    assert out[0, 4] == -0.5
    assert np.all(out > -np.pi) and np.all(out <= np.pi)


def test_wrap_angles_selected_columns_and_gradient():
    x = np.array([[7.0, 2.5 * np.pi]])
    out = ad.wrap_angles(ad.constant(x), indices=[1]).value
    assert out[0, 0] == 7.0                        # untouched column
    assert out[0, 1] == pytest.approx(0.5 * np.pi)

    # gradient of sum_squares(wrapped) is 2*wrapped passed straight through
    g = grad_of(lambda p: ad.sum_squares(ad.wrap_angles(p, indices=[1])), x)
    assert np.allclose(g, 2 * out)


def test_tape_replay_is_deterministic():
    rng = np.random.default_rng(21)
    W = rng.uniform(-1, 1, (3, 3))
    x = rng.uniform(-1, 1, (1, 3))

    def once():
        tape = ad.Tape()
        p = tape.parameter("W", W.copy())
        out = ad.sum_squares(ad.tanh(ad.matmul(ad.constant(x), p)))
        return out.item(), tape.gradients(out)["W"]

    v1, g1 = once()
    v2, g2 = once()
    assert v1 == v2
    assert np.array_equal(g1, g2)


def test_gradient_linearity():
    # grad of (loss1 + loss2) equals grad(loss1) + grad(loss2)
    rng = np.random.default_rng(2)
    W = rng.uniform(-1, 1, (2, 2))
    tape = ad.Tape()
    p = tape.parameter("W", W)
    l1 = ad.sum_squares(ad.tanh(p))
    l2 = ad.sum_squares(ad.matmul(p, ad.constant(np.ones((2, 1)))))
    both = tape.gradients(ad.add(l1, l2))["W"]
    separate = tape.gradients(l1)["W"] + tape.gradients(l2)["W"]
    assert np.allclose(both, separate, atol=1e-14)


def test_constant_ops_stay_off_tape():
    tape = ad.Tape()
    tape.parameter("p", [[1.0]])
    before = len(tape)
    out = ad.tanh(ad.add(ad.constant(1.0), ad.constant(2.0)))
    assert out.tape is None
    assert len(tape) == before


def test_mixed_tapes_rejected():
    t1, t2 = ad.Tape(), ad.Tape()
    a = t1.parameter("a", [[1.0]])
    b = t2.parameter("b", [[1.0]])
    with pytest.raises(ParameterError):
        ad.add(a, b)
