import numpy as np
import pytest

from sania.datasets import generate_synthetic, scale_columns
from sania.objectives import LogisticLoss
from sania.preconditioners import (
    AdaGrad,
    AdaGradSqr,
    Adam,
    AdamSqr,
    FixedDiag,
    Hutchinson,
    Identity,
    enumerate_rademacher_diag,
    rademacher_diag_estimate,
)

EPS = 1e-8


def test_adagrad_first_update():
    m, B = AdaGrad(eps=EPS).update(np.array([1.0, 2.0]))
    assert np.allclose(B, [1.0 + EPS, 2.0 + EPS])
    assert np.array_equal(m, [1.0, 2.0])


def test_adagrad_zero_gradient_keeps_accumulator():
    state = AdaGrad(eps=EPS)
    _, B1 = state.update(np.array([1.0, 2.0]))
    _, B2 = state.update(np.zeros(2))
    assert np.array_equal(B1, B2)


def test_adagrad_accumulates_squares():
    state = AdaGrad(eps=EPS)
    state.update(np.array([3.0, 0.0]))
    _, B = state.update(np.array([4.0, 0.0]))
    assert B[0] == pytest.approx(5.0 + EPS)


def test_adagrad_sqr_first_update():
    m, B = AdaGradSqr(eps=EPS).update(np.array([1.0, 2.0]))
    assert np.allclose(B, [1.0 + EPS, 4.0 + EPS])


def test_adagrad_sqr_zero_update():
    state = AdaGradSqr(eps=EPS)
    _, B1 = state.update(np.array([1.0, 2.0]))
    _, B2 = state.update(np.zeros(2))
    assert np.array_equal(B1, B2)


def test_adam_first_update_is_unbiased():
    g = np.array([0.3, -1.7, 0.0])
    m, B = Adam(eps=EPS).update(g)
    assert np.allclose(m, g)
    assert np.allclose(B, np.abs(g) + EPS)


def test_adam_first_update_metric():
    _, B = Adam(eps=EPS).update(np.array([2.0, 0.0]))
    assert B[0] == pytest.approx(2.0 + EPS)


def test_adam_sqr_first_update_metric():
    g = np.array([2.0, 0.0])
    m, B = AdamSqr(eps=EPS).update(g)
    assert B[0] == pytest.approx(4.0 + EPS)
    assert np.allclose(m, g)


def test_adam_constant_gradient_tracks_unrolled_recursion():
    # with constant g the bias-corrected moments sit on (g, |g|) for every t,
    # so the distance to the limit can never grow beyond roundoff
    g = np.array([0.5, -2.0])
    state = Adam(beta1=0.9, beta2=0.999, eps=0.0)
    mm, vv = np.zeros(2), np.zeros(2)
    for t in range(1, 11):
        m, B = state.update(g)
        mm = 0.9 * mm + 0.1 * g
        vv = 0.999 * vv + 0.001 * g * g
        assert np.allclose(m, mm / (1 - 0.9**t), rtol=1e-15)
        assert np.allclose(B, np.sqrt(vv / (1 - 0.999**t)), rtol=1e-15)
        assert np.allclose(m, g, atol=1e-12)
        assert np.allclose(B, np.abs(g), atol=1e-12)


@pytest.mark.parametrize("cls", [AdaGradSqr, AdamSqr])
def test_sqr_accumulator_scaling_transport(cls):
    # running the same GLM on V-scaled columns maps the metric as V^T B V
    ds = generate_synthetic(30, 6, seed=0)
    scaled, sv = scale_columns(ds, 2.0, seed=1)
    f = LogisticLoss(ds.X, ds.labels)
    g = LogisticLoss(scaled.X, scaled.labels)
    sx, sy = cls(eps=0.0), cls(eps=0.0)
    rng = np.random.default_rng(2)
    w = rng.standard_normal(6)
    for _ in range(5):
        _, Bx = sx.update(f.gradient(w))
        _, By = sy.update(g.gradient(w / sv.v))
        assert np.allclose(By, sv.v**2 * Bx, rtol=1e-12)
        w = w + 0.1 * rng.standard_normal(6)


def test_classical_adagrad_not_scale_invariant():
    # the square root halves the exponent: B maps as V^T B, not V^T B V
    ds = generate_synthetic(30, 6, seed=3)
    scaled, sv = scale_columns(ds, 2.0, seed=4)
    f = LogisticLoss(ds.X, ds.labels)
    g = LogisticLoss(scaled.X, scaled.labels)
    w = np.zeros(6)
    _, Bx = AdaGrad(eps=0.0).update(f.gradient(w))
    _, By = AdaGrad(eps=0.0).update(g.gradient(w))
    transported = sv.v**2 * Bx
    rel = np.max(np.abs(By - transported) / np.abs(transported))
    assert rel > 1e-3


def test_adagrad_sqr_is_square_of_adagrad():
    gs = [np.array([0.5, -1.5]), np.array([2.0, 0.25]), np.array([-1.0, 3.0])]
    a, b = AdaGrad(eps=0.0), AdaGradSqr(eps=0.0)
    for g in gs:
        _, Bs = a.update(g)
        _, Bq = b.update(g)
        assert np.allclose(Bq, Bs**2, rtol=1e-15)


def test_published_metric_entrywise_positive():
    rng = np.random.default_rng(5)
    states = [AdaGrad(), AdaGradSqr(), Adam(), AdamSqr()]
    for _ in range(10):
        g = rng.standard_normal(4) * 10.0 ** rng.integers(-6, 3)
        for st in states:
            _, B = st.update(g)
            assert np.all(B >= 1e-8)


def test_identity_and_fixed_diag():
    g = np.array([1.0, -2.0])
    m, B = Identity().update(g)
    assert np.array_equal(m, g)
    assert np.array_equal(B, np.ones(2))
    m, B = FixedDiag(np.array([2.0, 3.0])).update(g)
    assert np.array_equal(B, [2.0, 3.0])
    with pytest.raises(ValueError):
        FixedDiag(np.array([1.0, 0.0]))


def test_hutchinson_diagonal_matrix_is_exact_per_draw():
    H = np.diag([2.0, 3.0])
    for bits in range(4):
        z = np.array([1.0 if bits & 1 else -1.0, 1.0 if bits & 2 else -1.0])
        assert np.allclose(z * (H @ z), [2.0, 3.0])


def test_hutchinson_enumeration_recovers_diagonal():
    H = np.array([[2.0, 1.0], [1.0, 3.0]])
    est = enumerate_rademacher_diag(lambda z: H @ z, 2)
    assert np.allclose(est, [2.0, 3.0], atol=1e-15)


def test_hutchinson_floor_rule():
    st = Hutchinson(beta=0.5, mu_floor=0.01)
    st.ema = np.array([-0.001, 0.5])
    assert np.allclose(st._publish(), [0.01, 0.5])


def test_hutchinson_enumeration_matches_hessian_diag():
    ds = generate_synthetic(20, 8, seed=6)
    obj = LogisticLoss(ds.X, ds.labels)
    w = np.random.default_rng(7).standard_normal(8) * 0.3
    est = enumerate_rademacher_diag(lambda z: obj.hvp(w, None, z), 8)
    assert np.allclose(est, obj.hessian_diag(w), atol=1e-12)


def test_hutchinson_init_and_update_state():
    ds = generate_synthetic(25, 5, seed=8)
    obj = LogisticLoss(ds.X, ds.labels)
    st = Hutchinson(beta=0.9, mu_floor=1e-4, k_init=3)
    rng = np.random.default_rng(9)
    B0 = st.init_estimate(obj, np.zeros(5), batch_size=10, rng=rng)
    assert len(st.init_batches) == 3
    assert np.all(B0 >= 1e-4)
    B1 = st.update(lambda z: obj.hvp(np.zeros(5), None, z), rng)
    assert st.t == 1
    assert np.all(B1 >= 1e-4)


def test_hutchinson_update_requires_init():
    with pytest.raises(RuntimeError):
        Hutchinson().update(lambda z: z, np.random.default_rng(0))


def test_montecarlo_estimate_close_on_fixed_matrix():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((6, 6))
    H = A @ A.T + 6 * np.eye(6)
    est = rademacher_diag_estimate(lambda z: H @ z, 6, n_samples=10_000, rng=np.random.default_rng(12))
    assert np.all(np.abs(est - np.diag(H)) <= 0.05 * np.abs(np.diag(H)))
