"""
Aligned interference neutralization beamforming for M antennas, M = 4r.

Each source splits its message into three parts of ``r`` streams. Part 2
of both sources is aligned at the relay (source 1 free, source 2 aligns),
part 3 likewise (source 2 free, source 1 aligns), so the relay resolves
4r combinations in its M = 4r dimensional space. The relay forwards those
combinations along beams that cancel, at each destination, two of the
three interfering parts coming over the direct cross link.
"""

from dataclasses import dataclass, replace

import numpy as np

from .channel import SINGULAR_COND, complex_gaussian
from .errors import RankDeficiencyError, SingularChannelError, UnsupportedDimensionError

RESIDUAL_TOL = 1e-10
MIN_SINGULAR_VALUE = 1e-8


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    """
    Source and relay beams plus the relay-side alignment gains.

    Attributes
    ----------
    v1, v2 : tuple of 3 ndarrays, each M x r
        Unit-norm source beams for message parts 1..3.
    lambda2, lambda3 : ndarray, r x r
        Real positive diagonal alignment gains. At the relay,
        ``H_r1 V1[1] = H_r2 V2[1] @ lambda2`` and
        ``H_r2 V2[2] = H_r1 V1[2] @ lambda3`` (zero-based part index).
    vr : tuple of 4 ndarrays, each M x r, or None
        Relay beams (unnormalized); ``None`` until
        :func:`build_relay_beams` runs.
    """

    v1: tuple
    v2: tuple
    lambda2: np.ndarray
    lambda3: np.ndarray
    vr: tuple = None

    @property
    def r(self):
        return self.v1[0].shape[1]

    @property
    def m(self):
        return self.v1[0].shape[0]

    @property
    def complete(self):
        return self.vr is not None

    def relay_beam_matrix(self):
        """The M x 4r matrix ``[Vr1 Vr2 Vr3 Vr4]``."""
        _require_complete(self)
        return np.hstack(self.vr)

    def relay_symbol_weights(self):
        """
        Per-column variance of the forwarded combinations, in units of the
        per-stream source power: 1 for parts 1 and 2, ``lambda^2 + 1`` for
        the aligned combinations.
        """
        ones = np.ones(self.r)
        l2 = np.diag(self.lambda2) ** 2
        l3 = np.diag(self.lambda3) ** 2
        return np.concatenate([ones, ones, l2 + 1, 1 + l3])


@dataclass(frozen=True, eq=False)
class EffectiveChannels:
    """
    Per-destination effective channels after neutralization.

    ``d1_blocks`` carry (s1_1, s1_2, s1_3, s2_3) at destination 1 and
    ``d2_blocks`` carry (s2_1, s2_2, s2_3, s1_2) at destination 2. The
    residuals are the largest column norm of a neutralized coefficient
    (direct plus relayed) divided by the norm of its direct part.
    """

    d1_blocks: tuple
    d2_blocks: tuple
    residual_d1: float
    residual_d2: float

    def stacked(self, dest):
        blocks = {1: self.d1_blocks, 2: self.d2_blocks}[dest]
        return np.hstack(blocks)

    def min_singular_values(self):
        return tuple(
            float(np.linalg.svd(self.stacked(d), compute_uv=False)[-1]) for d in (1, 2)
        )


def _require_complete(beams):
    if not beams.complete:
        raise ValueError("relay beams have not been built yet")


def _unit_columns(a):
    return a / np.linalg.norm(a, axis=0, keepdims=True)


def _random_beams(rng, m, r):
    return _unit_columns(complex_gaussian(rng, (m, r)))


def _checked_solve(h, b, name):
    if np.linalg.cond(h) > SINGULAR_COND:
        raise SingularChannelError(f"{name} is numerically singular")
    return np.linalg.solve(h, b)


def streams_per_part(m):
    if m % 4:
        raise UnsupportedDimensionError(
            f"M must be a multiple of 4, got M={m} (symbol extension is not supported)"
        )
    return m // 4


def build_source_beams(ch, seed):
    """
    Draw and align the source beams.

    V1[0], V1[1], V2[0] and V2[2] are isotropic unit columns. V2[1] and
    V1[2] are chosen so each column lands, at the relay, on the same
    direction as its free partner with a positive real gain:

    - ``v2[1][:, l] = normalize(inv(H_r2) H_r1 v1[1][:, l])``
    - ``v1[2][:, l] = normalize(inv(H_r1) H_r2 v2[2][:, l])``

    Parameters
    ----------
    ch : MimoChannel
    seed : RunSeed

    Returns
    -------
    BeamformerSet
        With ``vr`` still ``None``.
    """
    r = streams_per_part(ch.m)
    rng = seed.rng()
    v1_1 = _random_beams(rng, ch.m, r)
    v1_2 = _random_beams(rng, ch.m, r)
    v2_1 = _random_beams(rng, ch.m, r)
    v2_3 = _random_beams(rng, ch.m, r)

    raw2 = _checked_solve(ch.h_r2, ch.h_r1 @ v1_2, "H_r2")
    raw3 = _checked_solve(ch.h_r1, ch.h_r2 @ v2_3, "H_r1")
    v2_2 = _unit_columns(raw2)
    v1_3 = _unit_columns(raw3)

    lambda2 = np.diag(
        np.linalg.norm(ch.h_r1 @ v1_2, axis=0) / np.linalg.norm(ch.h_r2 @ v2_2, axis=0)
    )
    lambda3 = np.diag(
        np.linalg.norm(ch.h_r2 @ v2_3, axis=0) / np.linalg.norm(ch.h_r1 @ v1_3, axis=0)
    )
    return BeamformerSet(v1=(v1_1, v1_2, v1_3), v2=(v2_1, v2_2, v2_3),
                         lambda2=lambda2, lambda3=lambda3)


def build_relay_beams(ch, beams):
    """Add the neutralizing relay beams.

    Each relay beam is the exact (unnormalized) negative of the cross-link
    contribution it cancels, pulled back through the relay-to-destination
    channel::

        Vr1 = -inv(H_2r) H_21 V1[0]     (s1_1 at destination 2)
        Vr2 = -inv(H_1r) H_12 V2[0]     (s2_1 at destination 1)
        Vr3 = -inv(H_1r) H_12 V2[1]     (s2_2 at destination 1)
        Vr4 = -inv(H_2r) H_21 V1[2]     (s1_3 at destination 2)
    """
    if np.linalg.cond(ch.h_1r) > SINGULAR_COND:
        raise SingularChannelError("relay-to-destination-1 channel H_1r is singular")
    if np.linalg.cond(ch.h_2r) > SINGULAR_COND:
        raise SingularChannelError("relay-to-destination-2 channel H_2r is singular")
    v1, v2 = beams.v1, beams.v2
    vr1 = -np.linalg.solve(ch.h_2r, ch.h_21 @ v1[0])
    vr2 = -np.linalg.solve(ch.h_1r, ch.h_12 @ v2[0])
    vr3 = -np.linalg.solve(ch.h_1r, ch.h_12 @ v2[1])
    vr4 = -np.linalg.solve(ch.h_2r, ch.h_21 @ v1[2])
    return replace(beams, vr=(vr1, vr2, vr3, vr4))


def build_beams(ch, seed, diversity=False):
    """Source beams, relay beams and (optionally) the diversity refinement."""
    beams = build_relay_beams(ch, build_source_beams(ch, seed))
    if diversity:
        beams = diversity_optimize_beams(ch, beams)
    return beams


def _relative_residual(total, direct):
    return float(np.max(np.linalg.norm(total, axis=0) / np.linalg.norm(direct, axis=0)))


def compute_effective_channels(ch, beams):
    """
    Effective per-destination channels and neutralization residuals.

    Returns
    -------
    EffectiveChannels
    """
    _require_complete(beams)
    v1, v2, vr = beams.v1, beams.v2, beams.vr
    l2, l3 = beams.lambda2, beams.lambda3

    d1 = (
        ch.h_11 @ v1[0] + ch.h_1r @ vr[0],
        ch.h_11 @ v1[1] + ch.h_1r @ vr[2] @ l2,
        ch.h_11 @ v1[2] + ch.h_1r @ vr[3],
        ch.h_12 @ v2[2] + ch.h_1r @ vr[3] @ l3,
    )
    d2 = (
        ch.h_22 @ v2[0] + ch.h_2r @ vr[1],
        ch.h_22 @ v2[1] + ch.h_2r @ vr[2],
        ch.h_22 @ v2[2] + ch.h_2r @ vr[3] @ l3,
        ch.h_21 @ v1[1] + ch.h_2r @ vr[2] @ l2,
    )

    # s2_1 and s2_2 at destination 1; s1_1 and s1_3 at destination 2
    res1 = max(
        _relative_residual(ch.h_12 @ v2[0] + ch.h_1r @ vr[1], ch.h_12 @ v2[0]),
        _relative_residual(ch.h_12 @ v2[1] + ch.h_1r @ vr[2], ch.h_12 @ v2[1]),
    )
    res2 = max(
        _relative_residual(ch.h_21 @ v1[0] + ch.h_2r @ vr[0], ch.h_21 @ v1[0]),
        _relative_residual(ch.h_21 @ v1[2] + ch.h_2r @ vr[3], ch.h_21 @ v1[2]),
    )
    return EffectiveChannels(d1_blocks=d1, d2_blocks=d2, residual_d1=res1, residual_d2=res2)


def alignment_residual(ch, beams):
    """Largest relative columnwise error of the two relay-side alignments."""
    v1, v2 = beams.v1, beams.v2
    a2 = ch.h_r1 @ v1[1]
    a3 = ch.h_r2 @ v2[2]
    return max(
        _relative_residual(a2 - ch.h_r2 @ v2[1] @ beams.lambda2, a2),
        _relative_residual(a3 - ch.h_r1 @ v1[2] @ beams.lambda3, a3),
    )


def neutralization_gains(ch):
    """
    Desired-path operators ``G1, G2`` seen by the part-1 streams.

    With the relay beam tied to the source beam, destination 1 sees
    ``(H_11 - H_1r inv(H_2r) H_21) v`` for a part-1 column ``v`` of source
    1; ``G2`` is the mirror for source 2.
    """
    g1 = ch.h_11 - ch.h_1r @ _checked_solve(ch.h_2r, ch.h_21, "H_2r")
    g2 = ch.h_22 - ch.h_2r @ _checked_solve(ch.h_1r, ch.h_12, "H_1r")
    return g1, g2


def diversity_optimize_beams(ch, beams):
    """
    Point the part-1 beams at the strongest combined direct+relayed gain.

    The part-1 columns of source 1 become the top ``r`` right singular
    vectors of ``G1`` (mirror for source 2), and the dependent relay
    beams Vr1, Vr2 are rebuilt so neutralization stays exact. Using
    distinct singular vectors keeps the ``r`` streams separable when r > 1.
    """
    _require_complete(beams)
    g1, g2 = neutralization_gains(ch)
    r = beams.r
    v1_1 = np.linalg.svd(g1)[2][:r].conj().T
    v2_1 = np.linalg.svd(g2)[2][:r].conj().T
    src = replace(beams, v1=(v1_1,) + beams.v1[1:], v2=(v2_1,) + beams.v2[1:], vr=None)
    return build_relay_beams(ch, src)


def relay_stack_matrix(ch, beams):
    """The M x 4r matrix ``[H_r1 V1[0] | H_r2 V2[0] | H_r2 V2[1] | H_r1 V1[2]]``."""
    v1, v2 = beams.v1, beams.v2
    return np.hstack([ch.h_r1 @ v1[0], ch.h_r2 @ v2[0], ch.h_r2 @ v2[1], ch.h_r1 @ v1[2]])


def relay_combinations(beams, s1, s2):
    """
    The 4r quantities the relay resolves, for source symbols ``s1, s2``.

    ``s1``/``s2`` have shape (3r,) or (3r, n), ordered part by part.
    Returns ``[s1_1; s2_1; lambda2 s1_2 + s2_2; s1_3 + lambda3 s2_3]``.
    """
    r = beams.r
    p1 = [s1[k * r:(k + 1) * r] for k in range(3)]
    p2 = [s2[k * r:(k + 1) * r] for k in range(3)]
    return np.concatenate([
        p1[0],
        p2[0],
        beams.lambda2 @ p1[1] + p2[1],
        p1[2] + beams.lambda3 @ p2[2],
    ])


def relay_zero_force(y_r, ch, beams, noise_var=1.0):
    """
    Zero-force the relay observation onto the 4r aligned combinations.

    Parameters
    ----------
    y_r : ndarray, shape (M,) or (M, n)
    ch : MimoChannel
    beams : BeamformerSet
    noise_var : float
        Per-entry relay noise variance, used only for the returned covariance.

    Returns
    -------
    estimates : ndarray, shape (4r,) or (4r, n)
    noise_cov : ndarray, 4r x 4r
        Covariance of the ZF-filtered relay noise,
        ``noise_var * inv(S) inv(S)^H`` for the stacked matrix ``S``.
    """
    stack = relay_stack_matrix(ch, beams)
    sv = np.linalg.svd(stack, compute_uv=False)
    if stack.shape[0] != stack.shape[1] or sv[-1] <= sv[0] * 1e-13:
        raise RankDeficiencyError("relay stacked matrix is rank deficient")
    stack_inv = np.linalg.inv(stack)
    return np.linalg.solve(stack, y_r), noise_var * (stack_inv @ stack_inv.conj().T)
