"""Multiport scattering-network algebra for active-RIS-assisted MIMO links.

The transmitter antennas, surface elements, and receiver antennas form one
N-port network described by a partitioned scattering matrix.  This module
implements the per-element reflection model, the coupled end-to-end channel
(both the closed form and an un-eliminated direct linear solve used as a
cross-check), and the reduced / conventional / passive channel variants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InstabilityError, SingularMatrixError

# Reject loop gains whose spectral radius is within this margin of unity.
STABILITY_MARGIN = 1e-6

VARIANT_EM_MC = "EmMc"
VARIANT_CONVENTIONAL = "Conventional"
VARIANT_PASSIVE_MC = "PassiveMc"
VARIANT_PASSIVE_NO_MC = "PassiveNoMc"


def _block(a, shape, name):
    arr = np.asarray(a, dtype=complex)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ScatteringMatrix:
    """Partitioned scattering description of the transmitter/surface/receiver ports.

    Blocks are indexed source-to-destination the usual way: ``s_ra`` maps waves
    incident on the surface (A) to waves scattered toward the receiver (R).
    """

    s_tt: np.ndarray
    s_ta: np.ndarray
    s_tr: np.ndarray
    s_at: np.ndarray
    s_aa: np.ndarray
    s_ar: np.ndarray
    s_rt: np.ndarray
    s_ra: np.ndarray
    s_rr: np.ndarray
    z0: float = 50.0

    def __post_init__(self):
        n_t, m, n_r = self.n_t, self.m, self.n_r
        object.__setattr__(self, "s_tt", _block(self.s_tt, (n_t, n_t), "s_tt"))
        object.__setattr__(self, "s_ta", _block(self.s_ta, (n_t, m), "s_ta"))
        object.__setattr__(self, "s_tr", _block(self.s_tr, (n_t, n_r), "s_tr"))
        object.__setattr__(self, "s_at", _block(self.s_at, (m, n_t), "s_at"))
        object.__setattr__(self, "s_aa", _block(self.s_aa, (m, m), "s_aa"))
        object.__setattr__(self, "s_ar", _block(self.s_ar, (m, n_r), "s_ar"))
        object.__setattr__(self, "s_rt", _block(self.s_rt, (n_r, n_t), "s_rt"))
        object.__setattr__(self, "s_ra", _block(self.s_ra, (n_r, m), "s_ra"))
        object.__setattr__(self, "s_rr", _block(self.s_rr, (n_r, n_r), "s_rr"))
        if not self.z0 > 0:
            raise ValueError("z0 must be positive")

    @property
    def n_t(self) -> int:
        return np.asarray(self.s_tt).shape[0]

    @property
    def m(self) -> int:
        return np.asarray(self.s_aa).shape[0]

    @property
    def n_r(self) -> int:
        return np.asarray(self.s_rr).shape[0]

    @property
    def n_ports(self) -> int:
        return self.n_t + self.m + self.n_r

    @classmethod
    def zeros(cls, n_t, m, n_r, z0=50.0):
        return cls(
            s_tt=np.zeros((n_t, n_t)), s_ta=np.zeros((n_t, m)), s_tr=np.zeros((n_t, n_r)),
            s_at=np.zeros((m, n_t)), s_aa=np.zeros((m, m)), s_ar=np.zeros((m, n_r)),
            s_rt=np.zeros((n_r, n_t)), s_ra=np.zeros((n_r, m)), s_rr=np.zeros((n_r, n_r)),
            z0=z0,
        )

    def full(self) -> np.ndarray:
        """Assemble the unpartitioned N x N scattering matrix (port order T, A, R)."""
        return np.block([
            [self.s_tt, self.s_ta, self.s_tr],
            [self.s_at, self.s_aa, self.s_ar],
            [self.s_rt, self.s_ra, self.s_rr],
        ])

    def with_coupling_zeroed(self) -> "ScatteringMatrix":
        return replace(self, s_aa=np.zeros_like(self.s_aa))


@dataclass(frozen=True)
class ReflectionState:
    """Active-surface configuration: per-element amplifier gains and shifter phases.

    The element reflection coefficient is ``insertion_loss**2 * amplitude *
    exp(2j * phase)``; its magnitude must sit in [1, gamma_max] for every
    element.  Phases are stored unwrapped.
    """

    amplitudes: np.ndarray
    phases: np.ndarray
    insertion_loss: float = 1.0
    gamma_max: float = math.inf

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=float).ravel()
        ph = np.asarray(self.phases, dtype=float).ravel()
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "phases", ph)
        if amp.shape != ph.shape:
            raise ValueError("amplitudes and phases must have the same length")
        if not (0 < self.insertion_loss <= 1):
            raise ValueError("insertion_loss must lie in (0, 1]")
        if not self.gamma_max > 1:
            raise ValueError("gamma_max must exceed 1")
        mags = self.insertion_loss ** 2 * amp
        if np.any(mags < 1 - 1e-12) or np.any(mags > self.gamma_max * (1 + 1e-12)):
            raise ValueError(
                "element reflection magnitudes must lie in [1, gamma_max]; "
                f"got range [{mags.min():.6g}, {mags.max():.6g}]"
            )

    @classmethod
    def unchecked(cls, amplitudes, phases, insertion_loss=1.0, gamma_max=math.inf):
        """Test-only constructor that skips the magnitude-window invariant."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "amplitudes", np.asarray(amplitudes, dtype=float).ravel())
        object.__setattr__(obj, "phases", np.asarray(phases, dtype=float).ravel())
        object.__setattr__(obj, "insertion_loss", float(insertion_loss))
        object.__setattr__(obj, "gamma_max", float(gamma_max))
        return obj

    @property
    def m(self) -> int:
        return self.amplitudes.shape[0]

    def gamma_vector(self) -> np.ndarray:
        return self.insertion_loss ** 2 * self.amplitudes * np.exp(2j * self.phases)

    def gamma_matrix(self) -> np.ndarray:
        return np.diag(self.gamma_vector())

    def with_amplitude(self, index, value) -> "ReflectionState":
        amp = self.amplitudes.copy()
        amp[index] = value
        return ReflectionState.unchecked(amp, self.phases, self.insertion_loss, self.gamma_max)

    def with_phases(self, phases) -> "ReflectionState":
        return ReflectionState.unchecked(self.amplitudes, phases, self.insertion_loss, self.gamma_max)


@dataclass(frozen=True)
class Terminations:
    """Diagonal source/load reflection coefficients at the end-point arrays."""

    gamma_t: np.ndarray
    gamma_r: np.ndarray
    allow_active: bool = False

    def __post_init__(self):
        gt = np.asarray(self.gamma_t, dtype=complex).ravel()
        gr = np.asarray(self.gamma_r, dtype=complex).ravel()
        object.__setattr__(self, "gamma_t", gt)
        object.__setattr__(self, "gamma_r", gr)
        if not self.allow_active:
            if np.any(np.abs(gt) > 1 + 1e-12) or np.any(np.abs(gr) > 1 + 1e-12):
                raise ValueError("passive terminations require |gamma| <= 1")

    @classmethod
    def matched(cls, n_t, n_r):
        return cls(np.zeros(n_t, dtype=complex), np.zeros(n_r, dtype=complex))

    def gamma_t_matrix(self) -> np.ndarray:
        return np.diag(self.gamma_t)

    def gamma_r_matrix(self) -> np.ndarray:
        return np.diag(self.gamma_r)


@dataclass(frozen=True)
class PortWaves:
    """Incident/scattered waves at every port for one solved operating point."""

    a_t: np.ndarray
    b_t: np.ndarray
    a_a: np.ndarray
    b_a: np.ndarray
    a_r: np.ndarray
    b_r: np.ndarray
    a_s: np.ndarray
    a_n: np.ndarray

    def incident(self) -> np.ndarray:
        return np.concatenate([self.a_t, self.a_a, self.a_r])

    def scattered(self) -> np.ndarray:
        return np.concatenate([self.b_t, self.b_a, self.b_r])

    def voltages(self, z0=50.0) -> np.ndarray:
        return math.sqrt(z0) * (self.incident() + self.scattered())

    def currents(self, z0=50.0) -> np.ndarray:
        return (self.incident() - self.scattered()) / math.sqrt(z0)


@dataclass(frozen=True)
class ChannelPair:
    """Effective signal/noise channels plus the surface-output maps for one model."""

    h_e: np.ndarray
    h_n: np.ndarray
    h_out_e: np.ndarray
    h_out_n: np.ndarray
    variant: str


def ra_reflection(z_ra, z0=50.0) -> complex:
    """Reflection coefficient of a one-port load against reference impedance z0.

    Negative load resistance yields |result| > 1 (an amplifying element).
    """
    z_ra = complex(z_ra)
    den = z_ra + z0
    if abs(den) < 1e-12 * max(abs(z_ra), abs(z0)):
        raise SingularMatrixError("z_ra + z0", "degenerate load: z_ra + z0 is zero")
    return (z_ra - z0) / den


def element_reflection_exact(s_ps, gamma_ra) -> complex:
    """Reflection of a two-port shifter terminated by a one-port amplifier."""
    s_ps = np.asarray(s_ps, dtype=complex)
    if s_ps.shape != (2, 2):
        raise ValueError("s_ps must be 2x2")
    den = 1.0 - s_ps[1, 1] * gamma_ra
    if abs(den) < 1e-12 * (1 + abs(s_ps[1, 1] * gamma_ra)):
        raise InstabilityError(
            abs(s_ps[1, 1] * gamma_ra),
            "element oscillates: shifter output reflection times amplifier gain is unity",
        )
    return s_ps[0, 0] + s_ps[0, 1] * s_ps[1, 0] * gamma_ra / den


def element_reflection_simplified(state: ReflectionState, index: int) -> complex:
    """Element reflection under the matched-shifter approximation."""
    if not 0 <= index < state.m:
        raise IndexError(f"element index {index} out of range for m={state.m}")
    return (
        state.insertion_loss ** 2
        * state.amplitudes[index]
        * np.exp(2j * state.phases[index])
    )


def build_gamma_a(state: ReflectionState) -> np.ndarray:
    """Diagonal matrix of element reflection coefficients."""
    return state.gamma_matrix()


def spectral_radius(a) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def spectral_radius_bound(a, squarings: int = 5) -> float:
    """Cheap upper bound on the spectral radius: ||A^(2^k)||_F ^ (1/2^k).

    Costs a few matrix products instead of an eigendecomposition; use as a
    sufficient stability test before falling back to the exact radius.
    """
    b = np.asarray(a, dtype=complex)
    if b.size == 0:
        return 0.0
    log_scale = 0.0  # log of the factor divided out of b so far
    for _ in range(squarings):
        nb = float(np.linalg.norm(b))
        if nb == 0.0:
            return 0.0
        if not math.isfinite(nb):
            return math.inf
        b = (b / nb) @ (b / nb)
        log_scale = 2.0 * (log_scale + math.log(nb))
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return 0.0
    if not math.isfinite(nb):
        return math.inf
    return math.exp((math.log(nb) + log_scale) / 2 ** squarings)


def _solve(name, a, b):
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(name) from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError(name)
    return x


def coupled_gain(gamma_vec, s_aa, check_stability=True) -> np.ndarray:
    """Surface gain through self-coupling feedback: (I - diag(g) S_aa)^-1 diag(g).

    With ``check_stability`` the loop is rejected outright once its spectral
    radius reaches the stability margin, rather than returning an
    ill-conditioned (physically self-oscillating) result.
    """
    gamma_vec = np.asarray(gamma_vec, dtype=complex).ravel()
    m = gamma_vec.shape[0]
    loop = gamma_vec[:, None] * np.asarray(s_aa, dtype=complex)
    if check_stability:
        rho = spectral_radius(loop)
        if rho >= 1 - STABILITY_MARGIN:
            raise InstabilityError(rho)
    return _solve("I - Gamma_A S_AA", np.eye(m) - loop, np.diag(gamma_vec))


def solve_network_direct(s: ScatteringMatrix, state: ReflectionState,
                         term: Terminations, a_s, a_n) -> PortWaves:
    """Solve the full port network as one stacked linear system.

    No closed-form elimination: the scattering relation and the three
    termination boundary conditions are assembled into a 2N x 2N system in the
    unknowns (a_T, a_A, a_R, b_T, b_A, b_R).  Serves as the independent oracle
    for every closed-form channel expression in this module.
    """
    n_t, m, n_r = s.n_t, s.m, s.n_r
    a_s = _block(a_s, (n_t,), "a_s")
    a_n = _block(a_n, (m,), "a_n")
    gamma_a = state.gamma_vector()

    rho = spectral_radius(gamma_a[:, None] * s.s_aa)
    if rho >= 1 - STABILITY_MARGIN:
        raise InstabilityError(rho)

    n = s.n_ports
    sys_mat = np.zeros((2 * n, 2 * n), dtype=complex)
    rhs = np.zeros(2 * n, dtype=complex)

    # Scattering relation: S a - b = 0.
    sys_mat[:n, :n] = s.full()
    sys_mat[:n, n:] = -np.eye(n)

    # Source side: a_T - Gamma_T b_T = a_S.
    rows = slice(n, n + n_t)
    sys_mat[rows, :n_t] = np.eye(n_t)
    sys_mat[rows, n:n + n_t] = -term.gamma_t_matrix()
    rhs[rows] = a_s

    # Surface: a_A - Gamma_A b_A = Gamma_A a_N.
    rows = slice(n + n_t, n + n_t + m)
    sys_mat[rows, n_t:n_t + m] = np.eye(m)
    sys_mat[rows, n + n_t:n + n_t + m] = -np.diag(gamma_a)
    rhs[rows] = gamma_a * a_n

    # Load side: a_R - Gamma_R b_R = 0.
    rows = slice(n + n_t + m, 2 * n)
    sys_mat[rows, n_t + m:n] = np.eye(n_r)
    sys_mat[rows, n + n_t + m:] = -term.gamma_r_matrix()

    try:
        x = np.linalg.solve(sys_mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise InstabilityError(rho, "stacked port system is singular") from exc
    scale = max(np.linalg.norm(rhs), np.linalg.norm(sys_mat, "fro") * np.linalg.norm(x))
    residual = np.linalg.norm(sys_mat @ x - rhs)
    if scale > 0 and residual > 1e-12 * scale:
        raise InstabilityError(rho, "stacked port system is numerically singular")

    return PortWaves(
        a_t=x[:n_t], a_a=x[n_t:n_t + m], a_r=x[n_t + m:n],
        b_t=x[n:n + n_t], b_a=x[n + n_t:n + n_t + m], b_r=x[n + n_t + m:],
        a_s=a_s, a_n=a_n,
    )


def full_model_b_r(s: ScatteringMatrix, state: ReflectionState,
                   term: Terminations, a_s, a_n) -> np.ndarray:
    """Receiver-port scattered wave from the closed-form coupled-channel expression.

    Matches :func:`solve_network_direct` for any nonsingular instance.  When
    the load side is matched (Gamma_R = 0) the load-reflection terms collapse
    and the cascaded receiver self-block never needs inverting; otherwise that
    block must be invertible and is reported by name when it is not.
    """
    n_t, m, n_r = s.n_t, s.m, s.n_r
    a_s = _block(a_s, (n_t,), "a_s")
    a_n = _block(a_n, (m,), "a_n")
    gamma_a = state.gamma_vector()
    gain = coupled_gain(gamma_a, s.s_aa)  # raises on unstable loop

    # Cascaded blocks: direct path plus the path bounced through the surface.
    casc_tt = s.s_tt + s.s_ta @ gain @ s.s_at
    casc_tr = s.s_tr + s.s_ta @ gain @ s.s_ar
    casc_rt = s.s_rt + s.s_ra @ gain @ s.s_at
    casc_rr = s.s_rr + s.s_ra @ gain @ s.s_ar

    g_t = term.gamma_t_matrix()
    noise_surface = gain @ a_n          # surface output wave due to injected noise
    matched_load = not np.any(term.gamma_r)

    if matched_load:
        noise_to_rx = s.s_ra @ noise_surface
        eff_tt = casc_tt
        noise_to_tx = s.s_ta @ noise_surface
        source_at_tx = _solve("I - Gamma_T S_hat_TT",
                              np.eye(n_t) - g_t @ eff_tt,
                              a_s + g_t @ noise_to_tx)
        return casc_rt @ source_at_tx + noise_to_rx

    g_r = term.gamma_r_matrix()
    load_loop = np.eye(n_r) - casc_rr @ g_r
    if np.linalg.cond(casc_rr) > 1e13:
        raise SingularMatrixError("S_tilde_RR",
                                  "cascaded receiver self-block is singular and the "
                                  "load is not matched")
    casc_rr_inv = _solve("S_tilde_RR", casc_rr, np.eye(n_r))
    s_n = _solve("I - S_tilde_RR Gamma_R", load_loop, s.s_ra @ gain)
    s_n_tilde = s_n - s.s_ra @ gain
    # Reflected-load correction to the transmitter-side self-block.
    a_r_coeff = casc_rr_inv @ _solve("I - S_tilde_RR Gamma_R", load_loop, casc_rt) \
        - casc_rr_inv @ casc_rt
    eff_tt = casc_tt + casc_tr @ a_r_coeff
    noise_to_tx = casc_tr @ casc_rr_inv @ s_n_tilde @ a_n + s.s_ta @ noise_surface
    source_at_tx = _solve("I - Gamma_T S_hat_TT",
                          np.eye(n_t) - g_t @ eff_tt,
                          a_s + g_t @ noise_to_tx)
    return _solve("I - S_tilde_RR Gamma_R", load_loop, casc_rt @ source_at_tx) + s_n @ a_n


def _pair_from_gain(s: ScatteringMatrix, gain: np.ndarray, variant: str) -> ChannelPair:
    return ChannelPair(
        h_e=s.s_rt + (s.s_ra @ gain) @ s.s_at,
        h_n=s.s_ra @ gain,
        h_out_e=gain @ s.s_at,
        h_out_n=gain,
        variant=variant,
    )


def reduced_channels(s: ScatteringMatrix, state: ReflectionState,
                     check_stability=True) -> ChannelPair:
    """Coupling-aware channels under matched terminations.

    ``check_stability=False`` evaluates the steady-state expressions even for
    self-oscillating configurations; it exists solely so that mis-designed
    reflection settings (tuned without coupling knowledge) can be scored on
    the coupled model.
    """
    gain = coupled_gain(state.gamma_vector(), s.s_aa, check_stability=check_stability)
    return _pair_from_gain(s, gain, VARIANT_EM_MC)


def conventional_channels(s: ScatteringMatrix, state: ReflectionState) -> ChannelPair:
    """Coupling-blind model: the surface reflects each element independently."""
    gain = np.diag(state.gamma_vector())
    return _pair_from_gain(s, gain, VARIANT_CONVENTIONAL)


def passive_channel(s: ScatteringMatrix, gamma_p, with_mc=True) -> ChannelPair:
    """Passive-surface channel; surface thermal noise is negligible by design."""
    gamma_p = np.asarray(gamma_p, dtype=complex)
    if gamma_p.ndim == 2:
        gamma_p = np.diag(gamma_p)
    if np.any(np.abs(gamma_p) > 1 + 1e-12):
        raise ValueError("passive surface requires |gamma| <= 1 per element")
    s_pp = s.s_aa if with_mc else np.zeros_like(s.s_aa)
    gain = coupled_gain(gamma_p, s_pp)
    n_r, m = s.n_r, s.m
    return ChannelPair(
        h_e=s.s_rt + (s.s_ra @ gain) @ s.s_at,
        h_n=np.zeros((n_r, m), dtype=complex),
        h_out_e=gain @ s.s_at,
        h_out_n=np.zeros((m, m), dtype=complex),
        variant=VARIANT_PASSIVE_MC if with_mc else VARIANT_PASSIVE_NO_MC,
    )
