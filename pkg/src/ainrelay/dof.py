"""
SNR sweeps, DoF slope fits, baselines and the 2-antenna relay scenario.

A sweep averages the sum rate over ``n_channels`` channel draws at each
grid point (the same draws at every SNR) and fits the slope of the
average against ``log2 P``, or ``0.5 log2 P`` for real-valued signalling.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import ain_mimo, ain_scalar, link_sim
from .channel import (
    BEAM_STREAM, CHANNEL_STREAM, NOISE_STREAM, SINGULAR_COND, RunSeed, complex_gaussian,
    sample_mimo_channel, sample_scalar_channel, sample_two_antenna_relay_channel,
)
from .errors import RankDeficiencyError
from .link_sim import RelayMode, TrialResult, snr_to_power

RESIDUAL_TOL_2ANT = 1e-12


class Scenario(str, enum.Enum):
    AIN_RELAY = "ain_relay"
    NO_RELAY_ZF = "no_relay_zf"
    TDMA = "tdma"
    TWO_ANTENNA_RELAY = "two_antenna_relay"


@dataclass(frozen=True)
class GridPoint:
    snr_db: float
    sum_rate: float
    user1_rate: float
    user2_rate: float
    ser1: float
    ser2: float


@dataclass(frozen=True)
class DofEstimate:
    """Averaged rates on an SNR grid and the fitted DoF slope."""

    scenario: Scenario
    points: tuple
    slope: float
    r_squared: float
    fit_snr_db: tuple = field(default=())

    @property
    def grid(self):
        return [(pt.snr_db, pt.sum_rate) for pt in self.points]


def fit_dof_slope(grid, normalization="complex"):
    """
    Least-squares slope of sum rate against ``log2 P`` (or ``0.5 log2 P``).

    Parameters
    ----------
    grid : sequence of (snr_db, sum_rate)
    normalization : {"complex", "real"}

    Returns
    -------
    slope, r_squared : float
    """
    if len(grid) < 3:
        raise ValueError(f"need at least 3 grid points to fit a slope, got {len(grid)}")
    if normalization not in ("complex", "real"):
        raise ValueError(f"normalization must be 'complex' or 'real', got {normalization!r}")
    snr_db, rate = np.asarray(grid, dtype=float).T
    x = snr_db / 10 * math.log2(10)
    if normalization == "real":
        x = x / 2
    slope, intercept = np.polyfit(x, rate, 1)
    ss_res = float(np.sum((rate - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((rate - rate.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0 else max(0.0, 1 - ss_res / ss_tot)
    return float(slope), r_squared


def top_half(points):
    """The upper half of a sorted grid, never fewer than 3 points."""
    k = max(3, math.ceil(len(points) / 2))
    return points[-k:]


# -- baselines ---------------------------------------------------------------

def _qpsk_ser(rng, h, noise_cov, p, n, desired):
    """Monte Carlo QPSK SER of ZF detection through square ``h``."""
    m = h.shape[0]
    sym = link_sim.qpsk(rng, (m, n))
    white = np.linalg.cholesky(noise_cov) @ complex_gaussian(rng, (m, n))
    est = np.linalg.solve(h, math.sqrt(p) * (h @ sym) + white)
    return float(np.mean(link_sim.qpsk_slice(est[desired]) != sym[desired]))


def no_relay_zf_trial(ch, snr_db, beam_seed, noise_seed, n_noise=100):
    """
    Two-user MIMO IC without the relay: M/2 random unit streams per user.

    Each destination zero-forces the M x M matrix ``[H_ii Vi | H_ij Vj]``
    and keeps its own M/2 streams.
    """
    m = ch.m
    if m % 2:
        raise ValueError(f"no_relay_zf needs an even antenna count, got {m}")
    rng = beam_seed.rng()
    k = m // 2
    v1 = complex_gaussian(rng, (m, k))
    v2 = complex_gaussian(rng, (m, k))
    v1 /= np.linalg.norm(v1, axis=0)
    v2 /= np.linalg.norm(v2, axis=0)
    p = snr_to_power(snr_db) / k
    h1 = np.hstack([ch.h_11 @ v1, ch.h_12 @ v2])
    h2 = np.hstack([ch.h_22 @ v2, ch.h_21 @ v1])
    eye = np.eye(m)
    rates = tuple(float(np.sum(np.log2(1 + link_sim.zf_sinr(h, slice(0, k), 1.0, p))))
                  for h in (h1, h2))
    if n_noise > 0:
        nrng = noise_seed.rng()
        ser = tuple(_qpsk_ser(nrng, h, eye, p, n_noise, slice(0, k)) for h in (h1, h2))
    else:
        ser = (float("nan"), float("nan"))
    return TrialResult(snr_db=float(snr_db), rates=rates, ser=ser, residuals=(0.0, 0.0))


def tdma_trial(ch, snr_db, noise_seed, n_noise=100):
    """
    Orthogonal time sharing: each user alone for half the time, M streams
    at equal power. Rates are ``0.5 log2 det(I + P/M H_ii H_ii^H)``; SER
    uses ZF detection.
    """
    m = ch.m
    p = snr_to_power(snr_db) / m
    eye = np.eye(m)
    rates = []
    for h in (ch.h_11, ch.h_22):
        _, logdet = np.linalg.slogdet(eye + p * h @ h.conj().T)
        rates.append(0.5 * logdet / math.log(2))
    if n_noise > 0:
        nrng = noise_seed.rng()
        ser = tuple(_qpsk_ser(nrng, h, eye, p, n_noise, slice(0, m)) for h in (ch.h_11, ch.h_22))
    else:
        ser = (float("nan"), float("nan"))
    return TrialResult(snr_db=float(snr_db), rates=tuple(rates), ser=ser, residuals=(0.0, 0.0))


# -- 2-antenna relay ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TwoAntennaRelayBeams:
    """
    Relay processing for single-antenna users and a 2-antenna relay.

    ``relay_zf`` maps the relay observation to (s1, s2); ``forward`` maps
    (s1, s2) to the relay's transmit 2-vector; ``residuals`` are the
    relative totals of s2 at destination 1 and s1 at destination 2.
    """

    relay_zf: np.ndarray
    forward: np.ndarray
    residuals: tuple


def two_antenna_relay_neutralize(ch):
    """
    Resolve both source symbols at the relay and cancel both cross links.

    The relay transmits the 2-vector solving
    ``[h_1r; h_2r] x_R = [-h_12 s2; -h_21 s1]``, so destination 1 sees only
    ``h_11 s1`` and destination 2 only ``h_22 s2``.

    Raises
    ------
    RankDeficiencyError
        If the relay's 2 x 2 receive or transmit matrix is singular.
    """
    rx, tx = ch.relay_rx, ch.relay_tx
    if np.linalg.cond(rx) > SINGULAR_COND:
        raise RankDeficiencyError("relay receive matrix is singular")
    if np.linalg.cond(tx) > SINGULAR_COND:
        raise RankDeficiencyError("relay transmit matrix is singular")
    target = np.array([[0, -ch.h_12], [-ch.h_21, 0]], dtype=complex)
    forward = np.linalg.solve(tx, target)
    res_d1 = abs(ch.h_12 + ch.h_1r @ forward[:, 1]) / abs(ch.h_12)
    res_d2 = abs(ch.h_21 + ch.h_2r @ forward[:, 0]) / abs(ch.h_21)
    return TwoAntennaRelayBeams(relay_zf=np.linalg.inv(rx), forward=forward,
                                residuals=(float(res_d1), float(res_d2)))


def simulate_two_antenna_link(ch, beams, s, mode, noise=None):
    """
    Destination observations, divided by the direct gain, for symbols ``s``
    of shape (2, n). ``noise`` is (relay (2, n), d1 (n,), d2 (n,)).
    """
    mode = RelayMode(mode)
    n_r, n_1, n_2 = noise if noise is not None else (0, 0, 0)
    if mode is RelayMode.GENIE:
        est = s
    elif mode is RelayMode.ZF_FORWARD:
        est = beams.relay_zf @ (ch.relay_rx @ s + n_r)
    else:
        raise ValueError("the 2-antenna relay supports genie and zf_forward relaying")
    x_r = beams.forward @ est
    y1 = ch.h_11 * s[0] + ch.h_12 * s[1] + ch.h_1r @ x_r + n_1
    y2 = ch.h_21 * s[0] + ch.h_22 * s[1] + ch.h_2r @ x_r + n_2
    return np.vstack([y1 / ch.h_11, y2 / ch.h_22])


def two_antenna_trial(ch, beams, snr_db, mode, noise_seed, n_noise=100):
    """Rates, SER and residuals of the 2-antenna relay scheme with joint back-off."""
    mode = RelayMode(mode)
    power = snr_to_power(snr_db)
    fwd = beams.forward
    c_r = float(np.sum(np.abs(fwd) ** 2))
    if mode is RelayMode.ZF_FORWARD:
        relay_cov = beams.relay_zf @ beams.relay_zf.conj().T
        fwd_cov = fwd @ relay_cov @ fwd.conj().T
        t = float(np.real(np.trace(fwd_cov)))
        extra = (float(np.real(ch.h_1r @ fwd_cov @ ch.h_1r.conj())),
                 float(np.real(ch.h_2r @ fwd_cov @ ch.h_2r.conj())))
    elif mode is RelayMode.GENIE:
        t, extra = 0.0, (0.0, 0.0)
    else:
        raise ValueError("the 2-antenna relay supports genie and zf_forward relaying")
    if t >= power:
        # forwarded relay noise alone exceeds the budget: nothing can be sent
        return TrialResult(snr_db=float(snr_db), rates=(0.0, 0.0), ser=(1.0, 1.0),
                           residuals=beams.residuals)
    p = min(power, (power - t) / c_r)
    gains = (abs(ch.h_11) ** 2, abs(ch.h_22) ** 2)
    rates = tuple(float(math.log2(1 + p * g / (1 + e))) for g, e in zip(gains, extra))
    if n_noise > 0:
        rng = noise_seed.rng()
        s = link_sim.qpsk(rng, (2, n_noise))
        noise = (complex_gaussian(rng, (2, n_noise)), complex_gaussian(rng, n_noise),
                 complex_gaussian(rng, n_noise))
        out = simulate_two_antenna_link(ch, beams, math.sqrt(p) * s, mode, noise=noise)
        errs = link_sim.qpsk_slice(out) != s
        ser = (float(np.mean(errs[0])), float(np.mean(errs[1])))
    else:
        ser = (float("nan"), float("nan"))
    return TrialResult(snr_db=float(snr_db), rates=rates, ser=ser, residuals=beams.residuals)


# -- sweeps ------------------------------------------------------------------

def validate_grid(snr_grid):
    grid = sorted(float(s) for s in snr_grid)
    if len(grid) < 3:
        raise ValueError(f"SNR grid needs at least 3 points, got {len(grid)}")
    if grid[-1] - grid[0] < 20:
        raise ValueError("SNR grid must span at least 20 dB")
    if grid[-1] < 60:
        raise ValueError("top SNR grid point must be at least 60 dB")
    return grid


def _channel_trials(scenario, m, grid, seed, index, n_noise, mode, diversity):
    """Trial results at every grid point for channel draw ``index``."""
    ch_seed = RunSeed.for_trial(seed, CHANNEL_STREAM, index)
    beam_seed = RunSeed.for_trial(seed, BEAM_STREAM, index)

    def noise_seed(g):
        return RunSeed.for_trial(seed, NOISE_STREAM, index * len(grid) + g)

    if scenario is Scenario.TWO_ANTENNA_RELAY:
        ch = sample_two_antenna_relay_channel(ch_seed)
        beams = two_antenna_relay_neutralize(ch)
        return [two_antenna_trial(ch, beams, snr, mode, noise_seed(g), n_noise)
                for g, snr in enumerate(grid)]
    ch = sample_mimo_channel(m, ch_seed)
    if scenario is Scenario.AIN_RELAY:
        beams = ain_mimo.build_beams(ch, beam_seed, diversity=diversity)
        return [link_sim.run_mimo_trial(ch, beams, snr, mode, noise_seed(g), n_noise)
                for g, snr in enumerate(grid)]
    if scenario is Scenario.NO_RELAY_ZF:
        return [no_relay_zf_trial(ch, snr, beam_seed, noise_seed(g), n_noise)
                for g, snr in enumerate(grid)]
    if scenario is Scenario.TDMA:
        return [tdma_trial(ch, snr, noise_seed(g), n_noise) for g, snr in enumerate(grid)]
    raise ValueError(f"unknown scenario {scenario!r}")


def sweep(scenario, m, snr_grid, n_channels, n_noise=100, seed=0,
          mode=RelayMode.GENIE, diversity=False):
    """
    Average rates over channel draws on an SNR grid and fit the DoF slope.

    The slope is fitted on the top half of the grid (at least 3 points).
    ``m`` is ignored for the 2-antenna relay scenario, whose users have a
    single antenna.

    Returns
    -------
    DofEstimate
    """
    scenario = Scenario(scenario)
    mode = RelayMode(mode)
    grid = validate_grid(snr_grid)
    if scenario is Scenario.AIN_RELAY:
        ain_mimo.streams_per_part(m)
    if n_channels < 1:
        raise ValueError(f"n_channels must be >= 1, got {n_channels}")

    results = np.empty((n_channels, len(grid), 4))
    for i in range(n_channels):
        for g, res in enumerate(_channel_trials(scenario, m, grid, seed, i, n_noise, mode, diversity)):
            results[i, g] = (*res.rates, *res.ser)
    mean = results.mean(axis=0)
    points = tuple(
        GridPoint(snr_db=snr, sum_rate=float(mean[g, 0] + mean[g, 1]),
                  user1_rate=float(mean[g, 0]), user2_rate=float(mean[g, 1]),
                  ser1=float(mean[g, 2]), ser2=float(mean[g, 3]))
        for g, snr in enumerate(grid)
    )
    fit_pts = top_half(points)
    slope, r2 = fit_dof_slope([(pt.snr_db, pt.sum_rate) for pt in fit_pts])
    return DofEstimate(scenario=scenario, points=points, slope=slope, r_squared=r2,
                       fit_snr_db=tuple(pt.snr_db for pt in fit_pts))


# -- scalar scheme -----------------------------------------------------------

@dataclass(frozen=True)
class ScalarPoint:
    p_db: float
    q: int
    d_min: float
    ser: tuple
    rates: tuple
    sum_rate: float
    dof: float


def sample_generic_scalar_setup(seed, q_max, budget=ain_scalar.DEFAULT_BUDGET, max_draws=100):
    """
    A scalar channel and beam seed whose relay constellation at ``q_max`` has
    no coincident points; rationally dependent draws are replaced by the
    next channel index.
    """
    for index in range(max_draws):
        ch = sample_scalar_channel(RunSeed.for_trial(seed, CHANNEL_STREAM, index))
        beam_seed = RunSeed.for_trial(seed, BEAM_STREAM, index)
        sch = ain_scalar.build_scalar_scheme(ch, 1.0, q_max, beam_seed)
        if not ain_scalar.enumerate_received_constellation(ch, sch, budget).rationally_dependent:
            return ch, beam_seed
    raise RuntimeError(f"no rationally independent scalar channel in {max_draws} draws")


def scalar_sweep(p_grid_db, gamma=1.0, epsilon=0.5, n_symbols=10_000, seed=0,
                 mode=RelayMode.HARD_DECISION, budget=ain_scalar.DEFAULT_BUDGET):
    """
    Run the single-antenna scheme on one fixed channel across a power grid.

    Q follows :func:`ain_scalar.choose_q` at each power. The same source
    directions are used at every grid point.

    Returns
    -------
    list of ScalarPoint
    """
    p_grid_db = [float(p) for p in p_grid_db]
    qs = [ain_scalar.choose_q(snr_to_power(p), gamma, epsilon) for p in p_grid_db]
    for q in qs:
        n_tuples = (2 * q + 1) ** 2 * (4 * q + 1) ** 2
        if n_tuples > budget:
            raise ain_scalar.EnumerationTooLargeError(q, n_tuples, budget)
    ch, beam_seed = sample_generic_scalar_setup(seed, max(qs), budget)
    out = []
    for g, (p_db, q) in enumerate(zip(p_grid_db, qs)):
        power = snr_to_power(p_db)
        sch = ain_scalar.build_scalar_scheme(ch, power, q, beam_seed, gamma, epsilon)
        relay_c = ain_scalar.enumerate_received_constellation(ch, sch, budget)
        cons = (relay_c, ain_scalar.destination_constellation(ch, sch, 1, budget),
                ain_scalar.destination_constellation(ch, sch, 2, budget))
        res = link_sim.run_scalar_trial(ch, sch, power, mode, n_symbols,
                                        RunSeed.for_trial(seed, NOISE_STREAM, g),
                                        constellations=cons)
        ser = tuple(s for row in res.ser_submessages for s in row)
        rates = tuple(r for row in res.rate_submessages for r in row)
        total = float(sum(rates))
        out.append(ScalarPoint(p_db=p_db, q=q, d_min=relay_c.d_min, ser=ser, rates=rates,
                               sum_rate=total,
                               dof=total / (0.5 * math.log2(power)) if power > 1 else float("nan")))
    return out
