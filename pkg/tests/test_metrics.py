"""Rate, amplification power, and MSE functionals."""
import numpy as np
import pytest

import mcris as M
from mcris.metrics import NoisePowers

from conftest import rand_complex, random_network, random_state


def make_channels(rng, n_t=3, m=4, n_r=2, **kwargs):
    s = random_network(rng, n_t, m, n_r, **kwargs)
    st = random_state(rng, m)
    return M.reduced_channels(s, st), s, st


def test_rate_zero_beamformer(rng):
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 1e-3)
    assert M.achievable_rate(ch, np.zeros((3, 2)), noise) == pytest.approx(0.0)

def test_rate_siso_closed_form(rng):
    ch, s, st = make_channels(rng, n_t=1, m=1, n_r=1)
    noise = NoisePowers(2e-3, 1e-30)
    w = np.array([[0.3 + 0.4j]])
    expected = np.log2(1 + abs(ch.h_e[0, 0] * w[0, 0]) ** 2 / 2e-3)
    assert M.achievable_rate(ch, w, noise) == pytest.approx(expected, rel=1e-9)

def test_rate_eigenvalue_oracle(rng):
    # independent determinant route through the eigenvalues of the SNR matrix
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 5e-4)
    w = rand_complex(rng, 3, 2, scale=0.4)
    n_cov = noise.sigma2_ris * ch.h_n @ ch.h_n.conj().T + noise.sigma2_rx * np.eye(2)
    snr = ch.h_e @ w @ w.conj().T @ ch.h_e.conj().T @ np.linalg.inv(n_cov)
    expected = np.log2(np.prod(np.abs(1 + np.linalg.eigvals(snr)))).real
    assert M.achievable_rate(ch, w, noise) == pytest.approx(expected, rel=1e-9)

def test_rate_monotone_in_power(rng):
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 1e-3)
    w = rand_complex(rng, 3, 2, scale=0.4)
    rates = [M.achievable_rate(ch, c * w, noise) for c in (1.0, 1.5, 2.0, 4.0)]
    assert all(b >= a for a, b in zip(rates, rates[1:]))


def test_amplification_power_zero(rng):
    ch, _, _ = make_channels(rng)
    p = M.ris_amplification_power(ch, np.zeros((3, 2)), NoisePowers(1e-3, 1e-30))
    assert p == pytest.approx(0.0, abs=1e-25)

def test_amplification_power_no_coupling_closed_form(rng):
    n_t, m, n_r = 3, 4, 2
    s = random_network(rng, n_t, m, n_r).with_coupling_zeroed()
    g = 2.0
    st = M.ReflectionState(np.full(m, g), np.zeros(m), 1.0, 5.0)
    ch = M.reduced_channels(s, st)
    w = rand_complex(rng, n_t, n_r, scale=0.4)
    noise = NoisePowers(1e-3, 7e-4)
    expected = g ** 2 * (np.linalg.norm(s.s_at @ w) ** 2 + noise.sigma2_ris * m)
    assert M.ris_amplification_power(ch, w, noise) == pytest.approx(expected, rel=1e-10)

def test_amplification_power_monte_carlo(rng):
    # the trace identity equals the average squared surface output wave
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 5e-4)
    w = rand_complex(rng, 3, 2, scale=0.4)
    n_samples = 100_000
    s_draw = rand_complex(rng, 2, n_samples, scale=np.sqrt(0.5))
    n_draw = rand_complex(rng, 4, n_samples, scale=np.sqrt(0.5 * noise.sigma2_ris))
    out = ch.h_out_e @ (w @ s_draw) + ch.h_out_n @ n_draw
    mc = np.mean(np.sum(np.abs(out) ** 2, axis=0))
    assert M.ris_amplification_power(ch, w, noise) == pytest.approx(mc, rel=0.02)

def test_amplification_power_quadratic_in_w(rng):
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 5e-4)
    w = rand_complex(rng, 3, 2, scale=0.4)
    base = M.ris_amplification_power(ch, np.zeros_like(w), noise)
    p1 = M.ris_amplification_power(ch, w, noise) - base
    p3 = M.ris_amplification_power(ch, 3.0 * w, noise) - base
    assert p3 == pytest.approx(9.0 * p1, rel=1e-10)


def test_mse_identity_detector_zero(rng):
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 1e-3)
    u = M.mse_matrix(ch, np.zeros((3, 2)), np.zeros((2, 2)), noise)
    assert np.allclose(u, np.eye(2))

def test_mse_psd_and_hermitian(rng):
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 1e-3)
    w = rand_complex(rng, 3, 2, scale=0.4)
    d = rand_complex(rng, 2, 2, scale=0.5)
    u = M.mse_matrix(ch, w, d, noise)
    assert np.allclose(u, u.conj().T)
    assert np.min(np.linalg.eigvalsh(u)) >= -1e-12

def test_mse_monte_carlo(rng):
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 5e-4)
    w = rand_complex(rng, 3, 2, scale=0.4)
    d = M.optimal_detector(ch, w, noise)
    n_samples = 100_000
    sym = rand_complex(rng, 2, n_samples, scale=np.sqrt(0.5))
    n_ris = rand_complex(rng, 4, n_samples, scale=np.sqrt(0.5 * noise.sigma2_ris))
    n_rx = rand_complex(rng, 2, n_samples, scale=np.sqrt(0.5 * noise.sigma2_rx))
    y = ch.h_e @ w @ sym + ch.h_n @ n_ris + n_rx
    err = d.conj().T @ y - sym
    sample_cov = err @ err.conj().T / n_samples
    assert np.allclose(M.mse_matrix(ch, w, d, noise), sample_cov, rtol=0.02, atol=1e-8)


def test_detector_siso_wiener(rng):
    # estimate is d^H y, so the scalar Wiener filter is hw / (|hw|^2 + sigma^2)
    ch, _, _ = make_channels(rng, n_t=1, m=1, n_r=1)
    noise = NoisePowers(2e-3, 1e-30)
    w = np.array([[0.5]])
    h = ch.h_e[0, 0] * 0.5
    expected = h / (abs(h) ** 2 + 2e-3)
    assert M.optimal_detector(ch, w, noise)[0, 0] == pytest.approx(expected, rel=1e-9)

def test_detector_zero_channel():
    ch = M.ChannelPair(h_e=np.zeros((2, 3)), h_n=np.zeros((2, 4)),
                       h_out_e=np.zeros((4, 3)), h_out_n=np.zeros((4, 4)),
                       variant="EmMc")
    d = M.optimal_detector(ch, np.ones((3, 2)), NoisePowers(1e-3, 1e-3))
    assert np.allclose(d, 0)

def test_detector_first_order_optimality(rng):
    # numerical gradient of tr(V U(D)) vanishes at the optimal detector
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 1e-3)
    w = rand_complex(rng, 3, 2, scale=0.4)
    d_star = M.optimal_detector(ch, w, noise)
    v = M.optimal_weight(M.mse_matrix(ch, w, d_star, noise))

    def objective(d):
        return np.trace(v @ M.mse_matrix(ch, w, d, noise)).real

    eps = 1e-5
    grad_norm = 0.0
    for i in range(2):
        for j in range(2):
            for inc in (eps, 1j * eps):
                dp, dm = d_star.copy(), d_star.copy()
                dp[i, j] += inc
                dm[i, j] -= inc
                grad_norm = max(grad_norm, abs(objective(dp) - objective(dm)) / (2 * eps))
    assert grad_norm < 1e-6

def test_detector_perturbation_minimality(rng):
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 1e-3)
    w = rand_complex(rng, 3, 2, scale=0.4)
    d_star = M.optimal_detector(ch, w, noise)
    v = M.optimal_weight(M.mse_matrix(ch, w, d_star, noise))
    base = np.trace(v @ M.mse_matrix(ch, w, d_star, noise)).real
    for _ in range(10):
        delta = rand_complex(rng, 2, 2)
        perturbed = np.trace(v @ M.mse_matrix(ch, w, d_star + 1e-4 * delta, noise)).real
        assert perturbed >= base - 1e-12


def test_weight_identity():
    assert np.allclose(M.optimal_weight(np.eye(2)), np.eye(2))

def test_weight_diagonal_inverse():
    got = M.optimal_weight(np.diag([0.5, 0.25]))
    assert np.allclose(got, np.diag([2.0, 4.0]))

def test_weight_inverse_residual(rng):
    a = rand_complex(rng, 3, 3)
    u = a @ a.conj().T + 0.1 * np.eye(3)
    v = M.optimal_weight(u)
    assert np.linalg.norm(v @ u - np.eye(3)) < 1e-10

def test_weight_singular_rejected():
    with pytest.raises(M.SingularMatrixError):
        M.optimal_weight(np.zeros((2, 2)))

def test_mse_lower_bound_at_detector(rng):
    # U(D*) <= U(D) in the matrix order, sampled over random detectors
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 1e-3)
    w = rand_complex(rng, 3, 2, scale=0.4)
    d_star = M.optimal_detector(ch, w, noise)
    u_star = M.mse_matrix(ch, w, d_star, noise)
    for _ in range(20):
        d = d_star + rand_complex(rng, 2, 2, scale=0.3)
        gap = M.mse_matrix(ch, w, d, noise) - u_star
        assert np.min(np.linalg.eigvalsh(gap)) >= -1e-10


def test_rate_mse_identity_zero(rng):
    ch, _, _ = make_channels(rng)
    noise = NoisePowers(1e-3, 1e-3)
    via, direct = M.rate_mse_identity(ch, np.zeros((3, 2)), noise)
    assert via == pytest.approx(0.0, abs=1e-9)
    assert direct == pytest.approx(0.0, abs=1e-12)

def test_rate_mse_identity_siso(rng):
    ch, _, _ = make_channels(rng, n_t=1, m=1, n_r=1)
    noise = NoisePowers(2e-3, 1e-30)
    w = np.array([[0.4]])
    via, direct = M.rate_mse_identity(ch, w, noise)
    snr = abs(ch.h_e[0, 0] * 0.4) ** 2 / 2e-3
    assert direct == pytest.approx(np.log2(1 + snr), rel=1e-9)
    assert via == pytest.approx(direct, rel=1e-8)

def test_rate_mse_identity_random(rng):
    noise = NoisePowers(1e-3, 5e-4)
    for _ in range(50):
        ch, _, _ = make_channels(rng)
        w = rand_complex(rng, 3, 2, scale=0.5)
        via, direct = M.rate_mse_identity(ch, w, noise)
        assert abs(via - direct) <= 1e-8 * max(1.0, abs(direct))
