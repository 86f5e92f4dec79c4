import math

import numpy as np
import pytest

from getral import autodiff as ad


def test_matmul_hand_case():
    out = ad.matmul(ad.constant([[1.0, 2.0], [3.0, 4.0]]), ad.constant([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.values, [[3.0], [7.0]])


def test_sigmoid_at_zero():
    assert ad.sigmoid(ad.constant([[0.0]])).values[0, 0] == 0.5


def test_softmax_symmetry():
    np.testing.assert_array_equal(
        ad.softmax_last(ad.constant([[0.0, 0.0]])).values, [[0.5, 0.5]]
    )


def test_softmax_rows_are_distributions():
    gen = np.random.default_rng(0)
    for _ in range(20):
        x = gen.normal(size=(4, 6)) * gen.uniform(0.1, 30)
        out = ad.softmax_last(ad.constant(x)).values
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)


def test_softmax_shift_invariance():
    gen = np.random.default_rng(1)
    x = gen.normal(size=(3, 5))
    base = ad.softmax_last(ad.constant(x)).values
    shifted = ad.softmax_last(ad.constant(x + 17.3)).values
    np.testing.assert_allclose(shifted, base, atol=1e-12)


def test_backward_square_sum():
    with ad.Tape() as tape:
        x = tape.watch([[1.0, 2.0, 3.0]])
        loss = ad.sum_all(ad.mul(x, x))
    grads = ad.backward(tape, loss)
    np.testing.assert_allclose(grads.of(x), [[2.0, 4.0, 6.0]], atol=1e-12)


def test_backward_sigmoid_at_zero():
    with ad.Tape() as tape:
        w = tape.watch([[0.0]])
        loss = ad.sigmoid(w)
    grads = ad.backward(tape, loss)
    assert grads.of(w)[0, 0] == 0.25


def test_backward_accumulates_shared_node():
    # one node consumed twice: loss = sum(x*x) + sum(3x); d/dx = 2x + 3
    point = np.array([[0.7, -1.1, 0.4]])

    def f(x):
        return ad.add(ad.sum_all(ad.mul(x, x)), ad.scalar_mul(ad.sum_all(x), 3.0))

    report = ad.grad_check(f, point)
    assert report.passed
    with ad.Tape() as tape:
        x = tape.watch(point)
        loss = f(x)
    grads = ad.backward(tape, loss)
    np.testing.assert_allclose(grads.of(x), 2 * point + 3.0, atol=1e-12)


def test_backward_gradient_at_intermediate():
    with ad.Tape() as tape:
        x = tape.watch([[1.0, 2.0]])
        mid = ad.scalar_mul(x, 3.0)
        loss = ad.sum_all(ad.mul(mid, mid))
    grads = ad.backward(tape, loss)
    np.testing.assert_allclose(grads.of(mid), 2 * 3.0 * np.array([[1.0, 2.0]]), atol=1e-12)


def test_backward_requires_scalar_loss():
    with ad.Tape() as tape:
        x = tape.watch([[1.0, 2.0]])
        y = ad.mul(x, x)
    with pytest.raises(ad.TapeError, match="scalar"):
        ad.backward(tape, y)


def test_backward_rejects_foreign_loss():
    with ad.Tape() as tape:
        tape.watch([[1.0]])
    with pytest.raises(ad.TapeError):
        ad.backward(tape, ad.constant([[1.0]]))


def test_backward_repeatable_bitwise():
    gen = np.random.default_rng(3)
    point = gen.normal(size=(3, 3))

    def run():
        with ad.Tape() as tape:
            x = tape.watch(point.copy())
            loss = ad.sum_all(ad.tanh(ad.matmul(x, x)))
        return ad.backward(tape, loss).of(x)

    first, second = run(), run()
    assert np.array_equal(first, second)


def test_grad_check_tanh_passes():
    report = ad.grad_check(lambda x: ad.sum_all(ad.tanh(x)), np.array([[0.3, -0.7]]))
    assert report.passed


def test_grad_check_linear_is_exact():
    # dyadic point and power-of-two step keep every FD operation exact
    report = ad.grad_check(lambda x: ad.sum_all(x), np.array([[0.5, 2.0, -3.0]]),
                           step=2.0 ** -17)
    assert report.max_rel_err == 0.0


def test_grad_check_cosine_rows():
    gen = np.random.default_rng(11)
    fixed = ad.constant(gen.normal(size=(1, 8)))

    def f(x):
        return ad.sum_all(ad.cosine_rows(x, fixed))

    assert ad.grad_check(f, gen.normal(size=(1, 8))).passed


def test_grad_check_detects_nondeterminism():
    state = {"count": 0}

    def f(x):
        state["count"] += 1
        return ad.scalar_mul(ad.sum_all(x), float(state["count"]))

    with pytest.raises(ad.AutodiffError, match="deterministic"):
        ad.grad_check(f, np.array([[1.0]]))


@pytest.mark.parametrize("kind", sorted(ad.PRIMITIVE_KINDS))
def test_every_primitive_grad_checks_on_random_shapes(kind):
    """Spec invariant: >=10 random inputs across >=2 distinct shapes per kind."""
    gen = np.random.default_rng(hash(kind) % 2**32)
    shapes = [(2, 3), (4, 5)]
    for trial in range(10):
        rows, cols = shapes[trial % 2]
        if kind == "matmul":
            pts = {"a": gen.normal(size=(rows, cols)), "b": gen.normal(size=(cols, rows))}
            f = lambda ts: ad.sum_all(ad.matmul(ts["a"], ts["b"]))
        elif kind in ("add", "sub", "elementwise-mul"):
            op = {"add": ad.add, "sub": ad.sub, "elementwise-mul": ad.mul}[kind]
            w = gen.normal(size=(rows, cols))
            pts = {"a": gen.normal(size=(rows, cols)), "b": gen.normal(size=(rows, cols))}
            f = lambda ts: ad.sum_all(ad.mul(op(ts["a"], ts["b"]), ad.constant(w)))
        elif kind == "scalar-mul":
            pts = {"a": gen.normal(size=(rows, cols))}
            f = lambda ts: ad.sum_all(ad.scalar_mul(ts["a"], -2.3))
        elif kind in ("sigmoid", "tanh", "exp", "softmax-over-last-axis", "row-mean"):
            op = {"sigmoid": ad.sigmoid, "tanh": ad.tanh, "exp": ad.exp,
                  "softmax-over-last-axis": ad.softmax_last, "row-mean": ad.row_mean}[kind]
            w = gen.normal(size=(1, cols) if kind == "row-mean" else (rows, cols))
            pts = {"a": gen.normal(size=(rows, cols))}
            f = lambda ts: ad.sum_all(ad.mul(op(ts["a"]), ad.constant(w)))
        elif kind == "log":
            w = gen.normal(size=(rows, cols))
            pts = {"a": gen.uniform(0.2, 3.0, size=(rows, cols))}
            f = lambda ts: ad.sum_all(ad.mul(ad.log(ts["a"]), ad.constant(w)))
        elif kind == "concat-last-axis":
            w = gen.normal(size=(rows, cols + 2))
            pts = {"a": gen.normal(size=(rows, cols)), "b": gen.normal(size=(rows, 2))}
            f = lambda ts: ad.sum_all(ad.mul(ad.concat_cols(ts["a"], ts["b"]), ad.constant(w)))
        elif kind == "row-select/gather":
            idx = gen.integers(0, rows, size=rows + 1)
            w = gen.normal(size=(rows + 1, cols))
            pts = {"a": gen.normal(size=(rows, cols))}
            f = lambda ts: ad.sum_all(ad.mul(ad.gather_rows(ts["a"], idx), ad.constant(w)))
        elif kind == "masked-fill":
            mask = gen.random((rows, cols)) < 0.3
            w = gen.normal(size=(rows, cols))
            pts = {"a": gen.normal(size=(rows, cols))}
            f = lambda ts: ad.sum_all(ad.mul(ad.masked_fill(ts["a"], mask, 1.5), ad.constant(w)))
        elif kind == "cosine-similarity-rows":
            w = gen.normal(size=(rows, rows))
            pts = {"a": gen.normal(size=(rows, cols)), "b": gen.normal(size=(rows, cols))}
            f = lambda ts: ad.sum_all(ad.mul(ad.cosine_rows(ts["a"], ts["b"]), ad.constant(w)))
        elif kind == "l2-norm":
            pts = {"a": gen.normal(size=(rows, cols)) + 0.1}
            f = lambda ts: ad.l2_norm(ts["a"])
        elif kind == "clamp":
            x = gen.normal(size=(rows, cols))
            x = np.where(np.abs(np.abs(x) - 1.0) < 0.05, x * 1.5, x)
            w = gen.normal(size=(rows, cols))
            pts = {"a": x}
            f = lambda ts: ad.sum_all(ad.mul(ad.clamp(ts["a"], -1.0, 1.0), ad.constant(w)))
        else:
            raise AssertionError(f"unhandled kind {kind}")
        report = ad.grad_check_inputs(f, pts, step=1e-5, tol=1e-4)
        assert report.passed, f"{kind} trial {trial}: {report.max_rel_err:.2e}"


def test_primitive_dispatcher_covers_spec_kinds():
    expected = {
        "matmul", "add", "sub", "elementwise-mul", "scalar-mul", "sigmoid", "tanh",
        "exp", "log", "softmax-over-last-axis", "row-mean", "concat-last-axis",
        "row-select/gather", "masked-fill", "cosine-similarity-rows", "l2-norm", "clamp",
    }
    assert set(ad.PRIMITIVE_KINDS) == expected
    out = ad.primitive("matmul", ad.constant([[2.0]]), ad.constant([[3.0]]))
    assert out.values[0, 0] == 6.0
    with pytest.raises(ad.AutodiffError, match="unknown primitive kind"):
        ad.primitive("convolve", ad.constant([[1.0]]))


def test_shape_errors_name_kind_and_shapes():
    with pytest.raises(ad.ShapeError) as err:
        ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))
    assert "matmul" in str(err.value) and "(2, 3)" in str(err.value)
    with pytest.raises(ad.ShapeError, match="add"):
        ad.add(ad.constant(np.ones((2, 3))), ad.constant(np.ones((3, 4))))


def test_log_domain_error():
    with pytest.raises(ad.DomainError, match="clamp"):
        ad.log(ad.constant([[0.0]]))


def test_clamp_values_and_flat_gradient():
    with ad.Tape() as tape:
        x = tape.watch([[-2.0, 0.3, 5.0]])
        loss = ad.sum_all(ad.clamp(x, -1.0, 1.0))
    np.testing.assert_array_equal(
        ad.clamp(ad.constant([[-2.0, 0.3, 5.0]]), -1.0, 1.0).values, [[-1.0, 0.3, 1.0]]
    )
    grads = ad.backward(tape, loss)
    np.testing.assert_array_equal(grads.of(x), [[0.0, 1.0, 0.0]])


def test_cosine_rows_zero_norm_convention():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[1.0, 1.0]])
    out = ad.cosine_rows(ad.constant(a), ad.constant(b)).values
    assert out[0, 0] == 0.0
    assert out[1, 0] == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_values_stay_finite_on_extreme_inputs():
    x = ad.constant([[700.0, -700.0]])
    assert np.all(np.isfinite(ad.sigmoid(x).values))
    assert np.all(np.isfinite(ad.softmax_last(x).values))
    assert np.all(np.isfinite(ad.tanh(x).values))


def test_gather_rejects_bad_indices():
    with pytest.raises(ad.ShapeError):
        ad.gather_rows(ad.constant(np.ones((2, 2))), [0, 5])


def test_untracked_ops_record_nothing():
    with ad.Tape() as tape:
        _ = ad.mul(ad.constant([[1.0]]), ad.constant([[2.0]]))
        assert len(tape) == 0
        x = tape.watch([[1.0]])
        _ = ad.mul(x, ad.constant([[2.0]]))
        assert len(tape) == 1
