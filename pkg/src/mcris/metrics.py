"""Rate, power, and mean-square-error functionals on channel pairs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError
from .network import ChannelPair

LN2 = math.log(2.0)


@dataclass(frozen=True)
class NoisePowers:
    """Receiver and surface noise powers in watts."""

    sigma2_rx: float
    sigma2_ris: float

    def __post_init__(self):
        if self.sigma2_rx <= 0 or self.sigma2_ris <= 0:
            raise ValueError("noise powers must be positive")


def noise_covariance(ch: ChannelPair, noise: NoisePowers) -> np.ndarray:
    """Covariance of the total noise seen at the receiver."""
    n_r = ch.h_e.shape[0]
    return noise.sigma2_ris * ch.h_n @ ch.h_n.conj().T + noise.sigma2_rx * np.eye(n_r)


def achievable_rate(ch: ChannelPair, w, noise: NoisePowers) -> float:
    """Mutual information of the effective channel in bits/s/Hz."""
    w = np.asarray(w, dtype=complex)
    n_cov = noise_covariance(ch, noise)
    a = ch.h_e @ w
    sign, logdet = np.linalg.slogdet(np.eye(a.shape[0]) + np.linalg.solve(n_cov, a) @ a.conj().T)
    if sign.real <= 0:
        raise SingularMatrixError("rate argument", "log-det argument not positive definite")
    return float(logdet / LN2)


def ris_amplification_power(ch: ChannelPair, w, noise: NoisePowers) -> float:
    """Expected power of the surface output wave for unit-variance symbols."""
    w = np.asarray(w, dtype=complex)
    sig = np.linalg.norm(ch.h_out_e @ w) ** 2
    amp_noise = noise.sigma2_ris * np.linalg.norm(ch.h_out_n) ** 2
    return float(sig + amp_noise)


def mse_matrix(ch: ChannelPair, w, d, noise: NoisePowers) -> np.ndarray:
    """Error covariance of the linearly detected symbols."""
    w = np.asarray(w, dtype=complex)
    d = np.asarray(d, dtype=complex)
    n_r = w.shape[1]
    e0 = d.conj().T @ ch.h_e @ w - np.eye(n_r)
    u = e0 @ e0.conj().T + d.conj().T @ noise_covariance(ch, noise) @ d
    return 0.5 * (u + u.conj().T)


def optimal_detector(ch: ChannelPair, w, noise: NoisePowers) -> np.ndarray:
    """MMSE receive filter for the given beamformer."""
    w = np.asarray(w, dtype=complex)
    a = ch.h_e @ w
    return np.linalg.solve(a @ a.conj().T + noise_covariance(ch, noise), a)


def optimal_weight(u: np.ndarray) -> np.ndarray:
    """Weight matrix paired with the detector: inverse of the error covariance."""
    u = np.asarray(u, dtype=complex)
    if np.linalg.cond(u) > 1e13:
        raise SingularMatrixError("mse matrix", "error covariance is singular")
    v = np.linalg.inv(u)
    return 0.5 * (v + v.conj().T)


def rate_mse_identity(ch: ChannelPair, w, noise: NoisePowers):
    """Evaluate the detection-theoretic rate expression against the direct one.

    Returns ``(rate_via_mse, rate_direct)``; the two agree at the optimal
    detector/weight pair.
    """
    w = np.asarray(w, dtype=complex)
    n_r = w.shape[1]
    d = optimal_detector(ch, w, noise)
    u = mse_matrix(ch, w, d, noise)
    v = optimal_weight(u)
    sign, logdet = np.linalg.slogdet(v)
    via_mse = float(logdet / LN2 - np.trace(v @ u).real + n_r)
    return via_mse, achievable_rate(ch, w, noise)


def wmmse_objective(ch: ChannelPair, w, d, v, noise: NoisePowers) -> float:
    """Reflection/beamformer-dependent part of the weighted-MSE objective.

    This is the quantity the alternating steps must not increase while the
    detector and weight are held fixed; it differs from tr(V U) only by terms
    constant in (w, channel).
    """
    w = np.asarray(w, dtype=complex)
    d = np.asarray(d, dtype=complex)
    v = np.asarray(v, dtype=complex)
    q = d @ v @ d.conj().T
    a = ch.h_e @ w
    sig = np.trace(a.conj().T @ q @ a).real
    amp_noise = noise.sigma2_ris * np.trace(ch.h_n.conj().T @ q @ ch.h_n).real
    cross = 2 * np.trace(v @ d.conj().T @ a).real
    return float(sig + amp_noise - cross)
