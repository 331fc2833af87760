import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hinf_observer import (NonvanishingOrigin, elementwise_margin, hadamard_bound_holds,
                           norm_margin, verify_uncertain_nonlinearity)
from hinf_observer.errors import PreconditionViolated
from hinf_observer.robustness import sample_admissible


def test_norm_margin_arithmetic():
    m = norm_margin(0.2, 0.3016)
    assert m.delta_gamma == pytest.approx(0.1016, abs=1e-12)
    assert m.guaranteed
    assert norm_margin(0.25, 0.25).delta_gamma == 0.0
    assert norm_margin(0.0, 0.3).delta_gamma == 0.3


def test_negative_margin_reported():
    d = norm_margin(0.2, 0.14).to_dict()
    assert not d["guaranteed"]
    assert d["note"] == "no guaranteed margin"


def test_hadamard_scalar_and_identity():
    assert hadamard_bound_holds([[1.0]], [[1.0]]).min_eigenvalue == 0.0
    h = hadamard_bound_holds(np.eye(2), np.eye(2))
    assert h.holds
    assert np.allclose(h.witness, np.eye(2))


def test_hadamard_precondition():
    with pytest.raises(PreconditionViolated):
        hadamard_bound_holds([[2.0]], [[1.0]])


def test_hadamard_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        T = rng.standard_normal((n, n))
        U = np.abs(T) + np.abs(rng.standard_normal((n, n)))
        assert hadamard_bound_holds(T, U).min_eigenvalue >= -1e-10


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 8), seed=st.integers(0, 2**32 - 1), tight=st.booleans())
def test_hadamard_property(n, seed, tight):
    rng = np.random.default_rng(seed)
    U = np.abs(rng.standard_normal((n, n)))
    T = U * rng.choice([-1.0, 1.0], size=(n, n))
    if not tight:
        T = T * rng.random((n, n))
    assert hadamard_bound_holds(T, U).holds


def test_interval_scalar_case():
    m = elementwise_margin([[0.2]], [[0.3]])
    assert m.lo[0, 0] == pytest.approx(-0.5)
    assert m.hi[0, 0] == pytest.approx(0.1)


def test_interval_two_states():
    m = elementwise_margin(np.zeros((2, 2)), np.ones((2, 2)))
    assert np.allclose(m.hi, 2 ** -0.75) and np.allclose(m.lo, -(2 ** -0.75))
    assert m.hi[0, 0] == pytest.approx(0.5946, abs=1e-4)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_interval_symmetry(n, seed):
    rng = np.random.default_rng(seed)
    G, Gs = np.abs(rng.standard_normal((n, n))), np.abs(rng.standard_normal((n, n)))
    m = elementwise_margin(G, Gs, trials=5, seed=seed)
    assert np.all(m.hi >= m.lo)
    assert np.allclose(m.lo + m.hi, -2 * G, rtol=0, atol=4 * np.finfo(float).eps * (1 + G.max() + Gs.max()))


def test_sampled_perturbation_norm_bounded():
    rng = np.random.default_rng(0)
    for _ in range(500):
        n = int(rng.integers(2, 7))
        Gs = np.abs(rng.standard_normal((n, n)))
        Gd = sample_admissible(Gs, rng)
        assert np.all(np.abs(Gd) <= n ** -0.75 * Gs + 1e-15)
        assert np.linalg.norm(Gd, 2) <= np.linalg.norm(Gs, 2) + 1e-10


def test_interval_csv():
    m = elementwise_margin([[0.0, 0.0], [0.2, 0.0]], np.full((2, 2), 0.3))
    lines = m.to_csv().strip().splitlines()
    assert lines[0] == "i,j,gamma,gamma_star,lower,upper"
    assert len(lines) == 5
    i, j, g, gs, lo, hi = lines[3].split(",")
    assert (i, j) == ("2", "1")
    assert float(lo) == m.lo[1, 0] and float(hi) == m.hi[1, 0]


def test_certified_perturbation(example):
    margin = norm_margin(0.2, 0.3016)
    cert = verify_uncertain_nonlinearity(example, lambda x, u: np.array([0.0, 0.05 * np.sin(x[1])]),
                                         margin)
    assert cert.certified
    assert 0.049 <= cert.estimate <= 0.05


def test_rejected_perturbation(example):
    margin = norm_margin(0.2, 0.3016)
    cert = verify_uncertain_nonlinearity(example, lambda x, u: np.array([0.0, 0.2 * x[0]]), margin)
    assert not cert.certified
    assert 0.199 <= cert.estimate <= 0.2 + 1e-12
    assert cert.violating_pair is not None


def test_zero_perturbation_always_certified(example):
    for g in (0.0, 0.1):
        assert verify_uncertain_nonlinearity(example, lambda x, u: np.zeros(2),
                                             norm_margin(0.2, 0.2 + g), samples=500)


def test_perturbation_must_vanish(example):
    with pytest.raises(NonvanishingOrigin):
        verify_uncertain_nonlinearity(example, lambda x, u: np.ones(2), norm_margin(0.2, 0.3))


def test_elementwise_certification(example):
    Gs = np.full((2, 2), 0.6)
    margin = elementwise_margin(example.Gamma_actual, Gs)
    ok = verify_uncertain_nonlinearity(example, lambda x, u: np.array([0.0, 0.05 * np.sin(x[1])]),
                                       margin, samples=2000)
    assert ok.certified
    bad = verify_uncertain_nonlinearity(example, lambda x, u: np.array([0.0, 0.5 * np.sin(x[1])]),
                                        margin, samples=2000)
    assert not bad.certified
    assert bad.violating_pair is not None
