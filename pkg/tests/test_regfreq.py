import numpy as np
import pytest

from evssm.hippo import ContinuousDiagSSM, init_ssm
from evssm.regfreq import (
    H2Config,
    default_omega_max,
    frequency_response_sq,
    h2_tail_norm,
    transfer_fn,
    trapezoid_weights,
)


def scalar_pole(lam=-1.0, b=1.0, c=1.0):
    return ContinuousDiagSSM(
        lam=np.array([lam + 0j]),
        b_tilde=np.array([[b + 0j]]),
        c_tilde=np.array([[c + 0j]]),
        d=np.zeros(1),
        log_delta=np.array([np.log(0.01)]),
    )


def closed_form_tail(omega_min):
    # (1/pi) * integral_{omega_min}^{inf} dw / (1 + w^2)
    return np.sqrt((np.pi / 2 - np.arctan(omega_min)) / np.pi)


def test_transfer_fn_scalar_values():
    system = scalar_pole()
    assert transfer_fn(system, 0.0)[0, 0] == pytest.approx(1.0, abs=1e-12)
    g1 = transfer_fn(system, 1.0)[0, 0]
    assert abs(g1) ** 2 == pytest.approx(0.5, abs=1e-12)


def test_transfer_fn_zero_c():
    system = scalar_pole(c=0.0)
    grid = np.geomspace(0.1, 100.0, 16)
    assert np.abs(transfer_fn(system, grid)).max() == 0.0


def test_transfer_fn_matches_dense_resolvent():
    system = init_ssm(6, 3, seed=2)
    omega = 2.5
    dense = system.c_tilde @ np.linalg.solve(
        1j * omega * np.eye(6) - np.diag(system.lam), system.b_tilde
    )
    np.testing.assert_allclose(transfer_fn(system, omega), dense, atol=1e-12)


def test_tail_norm_closed_form_defaults():
    system = scalar_pole()
    val = h2_tail_norm(system, H2Config(omega_min=1.0, omega_max=1e6))
    assert abs(val - 0.5) / 0.5 <= 1e-3


def test_tail_norm_closed_form_fine_grid():
    system = scalar_pole()
    val = h2_tail_norm(system, H2Config(omega_min=1.0, omega_max=1e6, n_points=10**6))
    assert abs(val - 0.5) / 0.5 <= 1e-5


def test_tail_norm_omega_min_to_zero():
    system = scalar_pole()
    want = np.sqrt(0.5)
    coarse = h2_tail_norm(system, H2Config(omega_min=1e-8, omega_max=1e6))
    fine = h2_tail_norm(system, H2Config(omega_min=1e-8, omega_max=1e6, n_points=10**6))
    assert abs(coarse - want) / want <= 1e-3
    assert abs(fine - want) / want <= 1e-5


def test_tail_norm_zero_c():
    assert h2_tail_norm(scalar_pole(c=0.0), H2Config(omega_min=1.0, omega_max=1e4)) == 0.0


def test_scaling_in_c():
    system = init_ssm(8, 2, seed=5)
    cfg = H2Config(omega_min=0.5, omega_max=1e5)
    base = h2_tail_norm(system, cfg)
    scaled = ContinuousDiagSSM(
        lam=system.lam,
        b_tilde=system.b_tilde,
        c_tilde=3.5 * system.c_tilde,
        d=system.d,
        log_delta=system.log_delta,
    )
    assert h2_tail_norm(scaled, cfg) == pytest.approx(3.5 * base, rel=1e-12)


def test_monotone_in_omega_min():
    system = scalar_pole()
    vals = [
        h2_tail_norm(system, H2Config(omega_min=m, omega_max=1e6))
        for m in (0.1, 0.5, 1.0, 5.0, 20.0)
    ]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_truncation_monotone_and_converged():
    system = scalar_pole()
    omax = 4096.0
    prev = h2_tail_norm(system, H2Config(omega_min=1.0, omega_max=omax))
    for _ in range(4):
        omax *= 2
        cur = h2_tail_norm(system, H2Config(omega_min=1.0, omega_max=omax))
        assert cur >= prev
        assert cur - prev < 1e-4
        prev = cur


def test_config_validation():
    with pytest.raises(ValueError):
        H2Config(omega_min=0.0, omega_max=1.0)
    with pytest.raises(ValueError):
        H2Config(omega_min=2.0, omega_max=1.0)
    with pytest.raises(ValueError):
        H2Config(omega_min=1.0, omega_max=10.0, n_points=1)


def test_default_omega_max():
    system = scalar_pole()
    assert default_omega_max(system.lam) == pytest.approx(100.0)


def test_trapezoid_weights_match_numpy():
    grid = np.geomspace(0.3, 47.0, 257)
    f = np.exp(-grid) * grid
    assert trapezoid_weights(grid) @ f == pytest.approx(np.trapezoid(f, grid), rel=1e-12)


def test_quadrature_random_diagonal_systems():
    # sum of independent scalar poles has an analytic tail integral
    rng = np.random.default_rng(3)
    for _ in range(4):
        p = int(rng.integers(1, 5))
        lam_re = -np.abs(rng.uniform(0.5, 3.0, p))
        c = rng.standard_normal(p)
        system = ContinuousDiagSSM(
            lam=lam_re.astype(complex),
            b_tilde=np.ones((p, 1), dtype=complex),
            c_tilde=np.diag(c).astype(complex) if p > 1 else np.array([[c[0] + 0j]]),
            d=np.zeros(p if p > 1 else 1),
            log_delta=np.zeros(p),
        )
        # with diagonal C each output channel m sees only pole m:
        # ||G||_F^2 = sum_m c_m^2 / (w^2 + a_m^2)
        omega_min = 0.7
        want_sq = 0.0
        for a_m, c_m in zip(-lam_re, c):
            want_sq += c_m**2 / a_m * (np.pi / 2 - np.arctan(omega_min / a_m)) / np.pi
        got = h2_tail_norm(system, H2Config(omega_min=omega_min, omega_max=1e7, n_points=200_000))
        assert got == pytest.approx(np.sqrt(want_sq), rel=1e-4)
