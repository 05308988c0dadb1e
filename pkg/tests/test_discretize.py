import numpy as np
import pytest

from evssm.discretize import (
    DiscretizationError,
    bilinear,
    effective_step,
    zoh,
)
from evssm.scan import scan_sequential


def test_bilinear_real_pole():
    lam_bar, b_bar = bilinear(np.array([-1.0 + 0j]), np.array([[1.0 + 0j]]), np.array([0.1]))
    assert lam_bar[0] == pytest.approx(0.95 / 1.05, abs=1e-12)
    assert b_bar[0, 0] == pytest.approx(0.1 / 1.05, abs=1e-12)


def test_bilinear_integrator():
    lam_bar, b_bar = bilinear(np.array([0.0 + 0j]), np.array([[2.0 + 0j]]), np.array([0.3]))
    assert lam_bar[0] == pytest.approx(1.0, abs=1e-15)
    assert b_bar[0, 0] == pytest.approx(0.6, abs=1e-15)


def test_bilinear_complex_pole():
    lam = np.array([-0.5 + 0.8660254j])
    lam_bar, _ = bilinear(lam, np.array([[1.0 + 0j]]), np.array([0.1]))
    want = (1 + 0.05 * lam[0]) / (1 - 0.05 * lam[0])
    assert lam_bar[0] == pytest.approx(want, abs=1e-12)
    assert lam_bar[0] == pytest.approx(0.94774 + 0.08228j, abs=5e-5)


def test_bilinear_pole_error():
    with pytest.raises(DiscretizationError):
        bilinear(np.array([2.0 + 0j]), np.array([[1.0 + 0j]]), np.array([1.0]))


def test_zoh_real_pole():
    lam_bar, b_bar = zoh(np.array([-1.0 + 0j]), np.array([[1.0 + 0j]]), np.array([0.1]))
    assert lam_bar[0] == pytest.approx(np.exp(-0.1), abs=1e-12)
    assert b_bar[0, 0] == pytest.approx(1.0 - np.exp(-0.1), abs=1e-12)


def test_zoh_zero_pole_limit():
    lam_bar, b_bar = zoh(np.array([0.0 + 0j]), np.array([[3.0 + 0j]]), np.array([0.25]))
    assert lam_bar[0] == 1.0
    assert b_bar[0, 0] == pytest.approx(0.75, abs=1e-15)


def test_zoh_taylor_expansion():
    lam = np.array([-0.7 + 0.3j])
    step = np.array([1e-6])
    lam_bar, _ = zoh(lam, np.array([[1.0 + 0j]]), step)
    assert lam_bar[0] == pytest.approx(1.0 + lam[0] * 1e-6, abs=1e-11)


def test_effective_step():
    np.testing.assert_allclose(effective_step(np.log([0.05]), 1.0), [0.05], rtol=1e-12)
    np.testing.assert_allclose(effective_step(np.log([0.05]), 0.5), [0.025], rtol=1e-12)
    np.testing.assert_allclose(effective_step(np.log([0.04]), 0.25), [0.01], rtol=1e-12)
    with pytest.raises(DiscretizationError):
        effective_step(np.zeros(2), 0.0)


@pytest.mark.parametrize("rule", [bilinear, zoh])
def test_stability_map(rule):
    rng = np.random.default_rng(0)
    lam = -np.abs(rng.standard_normal(40)) - 0.01 + 1j * rng.standard_normal(40) * 5
    b = np.ones((40, 1), dtype=complex)
    for step in np.geomspace(1e-6, 10.0, 25):
        lam_bar, _ = rule(lam, b, np.full(40, step))
        assert np.all(np.abs(lam_bar) < 1.0)


def test_bilinear_zoh_consistency_order():
    # |bilinear - zoh| on the state map shrinks like O(step^3)
    lam = np.array([-0.8 + 1.3j])
    b = np.ones((1, 1), dtype=complex)
    steps = np.array([0.2 / 2**i for i in range(6)])
    diffs = []
    for s in steps:
        lb, _ = bilinear(lam, b, np.array([s]))
        lz, _ = zoh(lam, b, np.array([s]))
        diffs.append(abs(lb[0] - lz[0]))
    rates = np.log2(np.array(diffs[:-1]) / np.array(diffs[1:]))
    assert np.all(rates > 2.5)  # third-order agreement


def closed_form_state(t):
    # x' = -x + sin t, x(0) = 0
    return (np.sin(t) - np.cos(t) + np.exp(-t)) / 2.0


def simulate_bilinear(step, t_final=10.0):
    n = int(round(t_final / step))
    lam = np.array([-1.0 + 0j])
    lam_bar, b_bar = bilinear(lam, np.array([[1.0 + 0j]]), np.array([step]))
    # midpoint input samples expose the rule's second-order accuracy
    k = np.arange(1, n + 1)
    u = np.sin((k - 0.5) * step)
    a = np.broadcast_to(lam_bar, (n, 1))
    bu = u[:, None] * b_bar[0, 0]
    states = scan_sequential(a, bu)
    return np.abs(states[:, 0].real - closed_form_state(k * step)).max()


def test_bilinear_second_order_convergence():
    errs = [simulate_bilinear(0.1 / 2**i) for i in range(5)]
    for coarse, fine in zip(errs, errs[1:]):
        assert coarse / fine >= 3.5
