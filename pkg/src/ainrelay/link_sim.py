"""
Symbol-level link simulation and zero-forcing rate analysis.

MIMO rates are analytic: each stream contributes ``log2(1 + SINR)`` with
the post-ZF SINR of :func:`zf_sinr`. Symbol error rates come from a
Monte Carlo run of the full network (sources, relay processing, relay
forwarding, destination ZF) with QPSK symbols.

Power accounting uses a joint back-off: the per-stream power ``p`` is the
largest value for which both sources and the relay meet the power
constraint. Scaling the relay alone would break the exact cancellation,
so the sources back off with it.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import ain_mimo, ain_scalar
from .channel import complex_gaussian
from .errors import RankDeficiencyError


class RelayMode(str, enum.Enum):
    """How the relay obtains the combinations it forwards.

    GENIE forwards the exact combinations. ZF_FORWARD (MIMO) forwards the
    zero-forced soft estimates, so relay noise propagates.
    HARD_DECISION (scalar) forwards nearest-point decisions.
    """

    GENIE = "genie"
    ZF_FORWARD = "zf_forward"
    HARD_DECISION = "hard_decision"


@dataclass(frozen=True)
class TrialResult:
    """
    Outcome of one channel realization at one SNR.

    ``rates`` and ``ser`` are per user. Scalar trials also fill the
    per-submessage arrays (shape (2, 3)).
    """

    snr_db: float
    rates: tuple
    ser: tuple
    residuals: tuple
    ser_submessages: tuple = None
    rate_submessages: tuple = None

    @property
    def sum_rate(self):
        return float(sum(self.rates))


def snr_to_power(snr_db):
    return 10.0 ** (snr_db / 10.0)


def _as_mode(mode):
    return RelayMode(mode)


def zf_sinr(effective, stream, noise_cov, p_per_stream, dest=1):
    """
    Post zero-forcing SINR of one or more streams.

    With the square effective matrix ``H`` and noise covariance ``K``, the
    ZF output noise covariance is ``inv(H) K inv(H)^H`` and::

        SINR_k = p_per_stream / [inv(H) K inv(H)^H]_kk

    Parameters
    ----------
    effective : EffectiveChannels or ndarray
        A square matrix, or effective channels together with ``dest``.
    stream : int, slice or index array
    noise_cov : ndarray or float
        Receiver noise covariance; a scalar means a multiple of identity.
    p_per_stream : float
    dest : {1, 2}
        Destination, used only when ``effective`` is an EffectiveChannels.

    Raises
    ------
    RankDeficiencyError
        If the effective matrix is singular.
    """
    h = effective.stacked(dest) if isinstance(effective, ain_mimo.EffectiveChannels) else np.asarray(effective)
    n = h.shape[0]
    if h.shape != (n, n):
        raise RankDeficiencyError(f"effective channel must be square, got {h.shape}")
    sv = np.linalg.svd(h, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-14:
        raise RankDeficiencyError("effective channel is singular")
    k = np.eye(n) * noise_cov if np.isscalar(noise_cov) else np.asarray(noise_cov)
    h_inv = np.linalg.inv(h)
    out_cov = np.real(np.einsum("ij,jk,ik->i", h_inv, k, h_inv.conj()))
    return p_per_stream / out_cov[stream]


@dataclass(frozen=True, eq=False)
class MimoBudget:
    """Per-stream power and destination noise covariances for one MIMO setup.

    ``feasible`` is False when the forwarded relay noise alone exceeds the
    power budget; the scheme then carries no signal (``p_stream = 0``).
    """

    p_stream: float
    noise_cov_d1: np.ndarray
    noise_cov_d2: np.ndarray
    relay_noise_cov: np.ndarray
    feasible: bool = True


def mimo_budget(ch, beams, power, mode, noise_var=1.0):
    """
    Joint power back-off and destination noise for the MIMO scheme.

    Sources put ``p`` on each of their 3r unit-norm streams. The relay
    sends ``Vr z`` with ``z`` the forwarded combinations, whose signal
    part has power ``p * c_R`` with ``c_R = sum_j |Vr_j|^2 w_j`` (weights
    from :meth:`BeamformerSet.relay_symbol_weights`). In ZF_FORWARD mode
    the relay also re-radiates its filtered noise, ``t = tr(Vr C Vr^H)``.
    The per-stream power is ``p = min(P / 3r, (P - t) / c_R)``. When
    ``t >= P`` no scaling of the sources can bring the relay within budget
    and the setup is marked infeasible.
    """
    mode = _as_mode(mode)
    if mode is RelayMode.HARD_DECISION:
        raise ValueError("hard_decision relaying applies to the scalar scheme only")
    m, r = ch.m, beams.r
    vr = beams.relay_beam_matrix()
    c_r = float(np.sum(np.linalg.norm(vr, axis=0) ** 2 * beams.relay_symbol_weights()))
    stack_inv = np.linalg.inv(ain_mimo.relay_stack_matrix(ch, beams))
    relay_cov = noise_var * stack_inv @ stack_inv.conj().T

    eye = noise_var * np.eye(m)
    if mode is RelayMode.ZF_FORWARD:
        fwd = vr @ relay_cov @ vr.conj().T
        t = float(np.real(np.trace(fwd)))
        k1 = eye + ch.h_1r @ fwd @ ch.h_1r.conj().T
        k2 = eye + ch.h_2r @ fwd @ ch.h_2r.conj().T
    else:
        t = 0.0
        k1 = k2 = eye
    feasible = t < power
    p = min(power / (3 * r), (power - t) / c_r) if feasible else 0.0
    return MimoBudget(p_stream=p, noise_cov_d1=k1, noise_cov_d2=k2,
                      relay_noise_cov=relay_cov, feasible=feasible)


def mimo_rates(ch, beams, snr_db, mode, effective=None, noise_var=1.0):
    """Analytic per-user ZF rates (bits per channel use) of the MIMO scheme."""
    if effective is None:
        effective = ain_mimo.compute_effective_channels(ch, beams)
    budget = mimo_budget(ch, beams, snr_to_power(snr_db), mode, noise_var)
    if not budget.feasible:
        return (0.0, 0.0)
    desired = slice(0, 3 * beams.r)
    rates = []
    for dest, cov in ((1, budget.noise_cov_d1), (2, budget.noise_cov_d2)):
        sinr = zf_sinr(effective, desired, cov, budget.p_stream, dest=dest)
        rates.append(float(np.sum(np.log2(1 + sinr))))
    return tuple(rates)


def qpsk(rng, shape):
    """Unit-energy QPSK symbols."""
    bits = rng.integers(0, 2, size=(2,) + tuple(shape))
    return ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / np.sqrt(2)


def qpsk_slice(z):
    return (np.sign(z.real) + 1j * np.sign(z.imag)) / np.sqrt(2)


@dataclass(frozen=True, eq=False)
class MimoLinkOutput:
    """Destination ZF outputs and sample transmit powers of one simulated block."""

    d1: np.ndarray
    d2: np.ndarray
    tx_power: tuple


def simulate_mimo_link(ch, beams, s1, s2, mode, noise=None, effective=None):
    """
    Push source symbols through the network and zero-force at each destination.

    Parameters
    ----------
    s1, s2 : ndarray, shape (3r, n)
        Symbols of each source, part by part (already power-scaled).
    mode : RelayMode
        GENIE forwards the exact combinations; ZF_FORWARD forwards the
        relay's zero-forced observation.
    noise : tuple of 3 ndarrays, shape (M, n), optional
        Noise at relay, destination 1, destination 2. ``None`` is noise-free.

    Returns
    -------
    MimoLinkOutput
        ``d1`` holds ZF estimates of (s1_1, s1_2, s1_3, s2_3) and ``d2`` of
        (s2_1, s2_2, s2_3, s1_2), each of shape (4r, n).
    """
    mode = _as_mode(mode)
    if effective is None:
        effective = ain_mimo.compute_effective_channels(ch, beams)
    n_r, n_1, n_2 = noise if noise is not None else (0, 0, 0)
    x1 = np.hstack(beams.v1) @ s1
    x2 = np.hstack(beams.v2) @ s2
    if mode is RelayMode.GENIE:
        z = ain_mimo.relay_combinations(beams, s1, s2)
    elif mode is RelayMode.ZF_FORWARD:
        y_r = ch.h_r1 @ x1 + ch.h_r2 @ x2 + n_r
        z, _ = ain_mimo.relay_zero_force(y_r, ch, beams)
    else:
        raise ValueError("hard_decision relaying applies to the scalar scheme only")
    x_r = beams.relay_beam_matrix() @ z
    y1 = ch.h_11 @ x1 + ch.h_12 @ x2 + ch.h_1r @ x_r + n_1
    y2 = ch.h_21 @ x1 + ch.h_22 @ x2 + ch.h_2r @ x_r + n_2
    powers = tuple(float(np.mean(np.sum(np.abs(x) ** 2, axis=0))) for x in (x1, x2, x_r))
    return MimoLinkOutput(
        d1=np.linalg.solve(effective.stacked(1), y1),
        d2=np.linalg.solve(effective.stacked(2), y2),
        tx_power=powers,
    )


def mimo_ser(ch, beams, snr_db, mode, n_noise, seed, effective=None, noise_var=1.0):
    """Monte Carlo QPSK symbol error rate per user over ``n_noise`` channel uses."""
    if effective is None:
        effective = ain_mimo.compute_effective_channels(ch, beams)
    budget = mimo_budget(ch, beams, snr_to_power(snr_db), mode, noise_var)
    if not budget.feasible:
        return 1.0, 1.0
    r, m = beams.r, ch.m
    rng = seed.rng()
    sym1 = qpsk(rng, (3 * r, n_noise))
    sym2 = qpsk(rng, (3 * r, n_noise))
    amp = math.sqrt(budget.p_stream)
    noise = math.sqrt(noise_var) * complex_gaussian(rng, (m, 3, n_noise))
    out = simulate_mimo_link(ch, beams, amp * sym1, amp * sym2, mode,
                             noise=(noise[:, 0], noise[:, 1], noise[:, 2]), effective=effective)
    err1 = np.mean(qpsk_slice(out.d1[:3 * r]) != sym1)
    err2 = np.mean(qpsk_slice(out.d2[:3 * r]) != sym2)
    return float(err1), float(err2)


def run_mimo_trial(ch, beams, snr_db, mode, seed, n_noise=100):
    """
    Rates, SER and residuals of the MIMO scheme for one channel and SNR.

    Rates are analytic ZF rates; SER is measured over ``n_noise`` QPSK
    channel uses; symbols and noise come from one generator seeded by
    ``seed``.
    """
    mode = _as_mode(mode)
    effective = ain_mimo.compute_effective_channels(ch, beams)
    rates = mimo_rates(ch, beams, snr_db, mode, effective=effective)
    if n_noise > 0:
        ser = mimo_ser(ch, beams, snr_db, mode, n_noise, seed, effective=effective)
    else:
        ser = (float("nan"), float("nan"))
    return TrialResult(
        snr_db=float(snr_db), rates=rates, ser=ser,
        residuals=(effective.residual_d1, effective.residual_d2),
    )


def draw_scalar_symbols(rng, q, n):
    """Uniform integer symbols in [-q, q], shape (2, 3, n) = (source, part, use)."""
    return rng.integers(-q, q + 1, size=(2, 3, n))


@dataclass(frozen=True, eq=False)
class ScalarLinkOutput:
    relay_estimates: np.ndarray
    relay_truth: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    tx_power: tuple


def simulate_scalar_link(ch, sch, symbols, mode, noise=None, constellations=None):
    """
    Transmit integer symbols through the single-antenna network and decode.

    Parameters
    ----------
    symbols : ndarray of int, shape (2, 3, n)
    mode : RelayMode
        GENIE or HARD_DECISION.
    noise : ndarray, shape (3, n), optional
        Real noise at relay, destination 1, destination 2.
    constellations : tuple, optional
        Pre-enumerated (relay, destination 1, destination 2) constellations.

    Returns
    -------
    ScalarLinkOutput
        ``d1``/``d2`` hold decoded (desired triple, cross) tuples, shape (n, 4).
    """
    mode = _as_mode(mode)
    if constellations is None:
        constellations = (
            ain_scalar.enumerate_received_constellation(ch, sch),
            ain_scalar.destination_constellation(ch, sch, 1),
            ain_scalar.destination_constellation(ch, sch, 2),
        )
    c_relay, c_d1, c_d2 = constellations
    s1, s2 = symbols[0], symbols[1]
    n_r, n_1, n_2 = noise if noise is not None else (0.0, 0.0, 0.0)
    a, b = sch.a_const, sch.b_const
    x1 = a * (sch.v1 @ s1)
    x2 = a * (sch.v2 @ s2)

    truth = np.stack([s1[0], s2[0], s1[1] + s2[1], s1[2] + s2[2]], axis=1)
    if mode is RelayMode.GENIE:
        est = truth
    elif mode is RelayMode.HARD_DECISION:
        y_r = ch.h_r1 * x1 + ch.h_r2 * x2 + n_r
        est = c_relay.decode(y_r)
    else:
        raise ValueError("the scalar scheme supports genie and hard_decision relaying")
    x_r = b * (est @ sch.vr)
    y1 = ch.h_11 * x1 + ch.h_12 * x2 + ch.h_1r * x_r + n_1
    y2 = ch.h_21 * x1 + ch.h_22 * x2 + ch.h_2r * x_r + n_2
    powers = tuple(float(np.mean(x.astype(float) ** 2)) for x in (x1, x2, x_r))
    return ScalarLinkOutput(
        relay_estimates=est, relay_truth=truth,
        d1=c_d1.decode(y1), d2=c_d2.decode(y2), tx_power=powers,
    )


def run_scalar_trial(ch, sch, p, mode, n_symbols, seed, constellations=None, noise_var=1.0):
    """
    Monte Carlo SER and Fano-bound rates of the single-antenna scheme.

    ``p`` must match the power the scheme was built for. Per-submessage
    rates use :func:`ain_scalar.rate_lower_bound`; a user's rate is the
    sum over its three submessages (bits per real channel use).
    """
    mode = _as_mode(mode)
    if not math.isclose(p, sch.p, rel_tol=1e-12):
        raise ValueError(f"scheme was built for power {sch.p}, trial asked for {p}")
    rng = seed.rng()
    symbols = draw_scalar_symbols(rng, sch.q, n_symbols)
    noise = math.sqrt(noise_var) * rng.standard_normal((3, n_symbols))
    out = simulate_scalar_link(ch, sch, symbols, mode, noise=noise, constellations=constellations)
    ser = np.array([
        np.mean(out.d1[:, :3] != symbols[0].T, axis=0),
        np.mean(out.d2[:, :3] != symbols[1].T, axis=0),
    ])
    rate = np.array([[ain_scalar.rate_lower_bound(s, sch.q) for s in row] for row in ser])
    residuals = ain_scalar.cross_link_residuals(ch, sch)
    return TrialResult(
        snr_db=10 * math.log10(p),
        rates=(float(rate[0].sum()), float(rate[1].sum())),
        ser=(float(ser[0].mean()), float(ser[1].mean())),
        residuals=(float(residuals[:2].max()), float(residuals[2:].max())),
        ser_submessages=tuple(map(tuple, ser.tolist())),
        rate_submessages=tuple(map(tuple, rate.tolist())),
    )
