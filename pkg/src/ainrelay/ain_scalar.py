"""
Single-antenna scheme on rational dimensions.

Sources send integer combinations ``x_i = A * sum_j v_i[j] s_i[j]`` with
symbols in ``[-Q, Q]``. Parts 2 and 3 are aligned at the relay, which
therefore sees four integer "dimensions": s1_1, s2_1, s1_2 + s2_2 and
s1_3 + s2_3. The relay decodes them by nearest-point search over the
enumerated constellation and forwards ``x_R = B * sum_j vr[j] sR[j]`` with
coefficients that cancel s2_1, s2_2 at destination 1 and s1_1, s1_3 at
destination 2.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChannelError, EnumerationTooLargeError

DEFAULT_BUDGET = 10**8
COINCIDENCE_TOL = 1e-13
RATIONAL_DIMENSIONS = 4


@dataclass(frozen=True, eq=False)
class ScalarScheme:
    """
    Directions and power constants of the single-antenna scheme.

    Attributes
    ----------
    v1, v2 : ndarray, shape (3,)
        Source direction coefficients.
    vr : ndarray, shape (4,)
        Relay direction coefficients, normalized to unit Euclidean norm.
    a_const, b_const : float
        Source and relay power normalizers. The products ``b_const * vr``
        equal ``-a_const * h v / h_R`` exactly (see :func:`build_scalar_scheme`).
    q : int
        Symbol bound; source symbols live in ``[-q, q]``.
    p : float
        Transmit power constraint.
    gamma, epsilon : float
        Parameters of :func:`choose_q` recorded for reporting.
    m_rational : int
        Number of rationally independent integer dimensions per receiver.
    """

    v1: np.ndarray
    v2: np.ndarray
    vr: np.ndarray
    a_const: float
    b_const: float
    q: int
    p: float
    gamma: float = 1.0
    epsilon: float = 0.5
    m_rational: int = RATIONAL_DIMENSIONS

    @property
    def eta_sources(self):
        return float(np.linalg.norm(self.v1)), float(np.linalg.norm(self.v2))

    @property
    def eta_relay(self):
        return float(np.linalg.norm(self.vr))


@dataclass(frozen=True, eq=False)
class ReceivedConstellation:
    """
    Noise-free points of an integer-combination constellation.

    ``points[i]`` is the value of ``tuples[i]``; tuples are listed in
    lexicographic order. ``d_min`` is the smallest gap between distinct
    values. ``rationally_dependent`` flags distinct tuples whose values
    coincide within ``COINCIDENCE_TOL * scale``.
    """

    points: np.ndarray
    tuples: np.ndarray
    d_min: float
    rationally_dependent: bool

    def __post_init__(self):
        order = np.lexsort((np.arange(len(self.points)), self.points))
        values = self.points[order]
        # keep the lexicographically first tuple among coincident values
        keep = np.ones(len(values), dtype=bool)
        keep[1:] = np.diff(values) > 0
        object.__setattr__(self, "_sorted_values", values[keep])
        object.__setattr__(self, "_sorted_index", order[keep])

    def nearest(self, y):
        """
        Indices (into ``tuples``) of the nearest points to ``y``.

        Ties go to the lexicographically smallest tuple.
        """
        y = np.asarray(y, dtype=float)
        vals, idx = self._sorted_values, self._sorted_index
        right = np.clip(np.searchsorted(vals, y), 1, len(vals) - 1)
        left = right - 1
        if len(vals) == 1:
            return np.broadcast_to(idx[0], y.shape).copy()
        d_left = np.abs(y - vals[left])
        d_right = np.abs(vals[right] - y)
        pick_right = (d_right < d_left) | ((d_right == d_left) & (idx[right] < idx[left]))
        return np.where(pick_right, idx[right], idx[left])

    def decode(self, y):
        return self.tuples[self.nearest(y)]


def choose_q(p, gamma=1.0, epsilon=0.5):
    """
    Constellation bound ``max(1, floor(gamma * p ** ((1 - eps) / (2 (4 + eps)))))``.
    """
    if p <= 0:
        raise ValueError(f"power must be positive, got {p}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    exponent = (1 - epsilon) / (2 * (RATIONAL_DIMENSIONS + epsilon))
    return max(1, math.floor(gamma * p**exponent))


def relay_symbol_bounds(q):
    """
    Per-symbol second-moment bounds for the four forwarded symbols.

    Parts 1 use ``Q**2``. The aligned sums range over ``[-2Q, 2Q]`` with
    second moment ``2Q(Q+1)/3``, which exceeds ``Q**2`` when Q = 1.
    """
    agg = max(q * q, 2 * q * (q + 1) / 3)
    return np.array([q * q, q * q, agg, agg], dtype=float)


def _draw_direction(rng, n):
    return rng.uniform(0.5, 1.0, n) * rng.choice([-1.0, 1.0], n)


def build_scalar_scheme(ch, p, q, seed, gamma=1.0, epsilon=0.5):
    """
    Directions and power constants for one channel realization.

    The free coefficients v1[0], v1[1], v2[0], v2[2] are drawn with
    magnitude uniform in [0.5, 1] and random sign; v2[1] and v1[2] follow
    from the relay alignment ``h_r1 v1[j] = h_r2 v2[j]``, j = 1, 2.

    The relay coefficients are forced by cancellation,
    ``B vr = A w`` with ``w = -(h_21 v1[0] / h_2r, h_12 v2[0] / h_1r,
    h_12 v2[1] / h_1r, h_21 v1[2] / h_2r)``, so A has to respect both the
    sources' and the relay's power budgets: ``A = sqrt(p) / max(Q eta,
    sqrt(sum w^2 c))`` where ``eta`` is the larger source norm and ``c``
    the per-symbol bounds of :func:`relay_symbol_bounds`. ``vr`` is then
    ``w / |w|`` and ``B = A |w|``.

    Raises
    ------
    DegenerateChannelError
        If any channel gain is zero.
    """
    gains = ch.as_array()
    if np.any(gains == 0) or not np.all(np.isfinite(gains)):
        raise DegenerateChannelError("all scalar channel gains must be finite and nonzero")
    if p <= 0:
        raise ValueError(f"power must be positive, got {p}")
    if int(q) < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    q = int(q)

    rng = seed.rng()
    v1_1, v1_2, v2_1, v2_3 = _draw_direction(rng, 4)
    v2_2 = ch.h_r1 * v1_2 / ch.h_r2
    v1_3 = ch.h_r2 * v2_3 / ch.h_r1
    v1 = np.array([v1_1, v1_2, v1_3])
    v2 = np.array([v2_1, v2_2, v2_3])

    w = np.array([
        -ch.h_21 * v1_1 / ch.h_2r,
        -ch.h_12 * v2_1 / ch.h_1r,
        -ch.h_12 * v2_2 / ch.h_1r,
        -ch.h_21 * v1_3 / ch.h_2r,
    ])
    eta = max(np.linalg.norm(v1), np.linalg.norm(v2))
    relay_load = math.sqrt(float(np.sum(w**2 * relay_symbol_bounds(q))))
    a_const = math.sqrt(p) / max(q * eta, relay_load)
    w_norm = float(np.linalg.norm(w))
    return ScalarScheme(
        v1=v1, v2=v2, vr=w / w_norm,
        a_const=a_const, b_const=a_const * w_norm,
        q=q, p=float(p), gamma=gamma, epsilon=epsilon,
    )


def relay_coefficients(ch, sch):
    """Received coefficients of (s1_1, s2_1, s1_2 + s2_2, s1_3 + s2_3) at the relay."""
    a = sch.a_const
    return a * np.array([
        ch.h_r1 * sch.v1[0],
        ch.h_r2 * sch.v2[0],
        ch.h_r1 * sch.v1[1],
        ch.h_r1 * sch.v1[2],
    ])


def destination_coefficients(ch, sch, which):
    """
    Effective coefficients at a destination, assuming correct forwarding.

    Destination 1 sees (s1_1, s1_2, s1_3, s2_3); destination 2 sees
    (s2_1, s2_2, s2_3, s1_2). The first three are desired, the last is
    the surviving cross symbol.
    """
    a, b = sch.a_const, sch.b_const
    v1, v2, vr = sch.v1, sch.v2, sch.vr
    if which == 1:
        return np.array([
            a * ch.h_11 * v1[0] + b * ch.h_1r * vr[0],
            a * ch.h_11 * v1[1] + b * ch.h_1r * vr[2],
            a * ch.h_11 * v1[2] + b * ch.h_1r * vr[3],
            a * ch.h_12 * v2[2] + b * ch.h_1r * vr[3],
        ])
    if which == 2:
        return np.array([
            a * ch.h_22 * v2[0] + b * ch.h_2r * vr[1],
            a * ch.h_22 * v2[1] + b * ch.h_2r * vr[2],
            a * ch.h_22 * v2[2] + b * ch.h_2r * vr[3],
            a * ch.h_21 * v1[1] + b * ch.h_2r * vr[2],
        ])
    raise ValueError(f"destination must be 1 or 2, got {which}")


def cross_link_residuals(ch, sch):
    """
    Neutralized totals, each relative to its direct-link part.

    Order: s2_1 and s2_2 at destination 1, then s1_1 and s1_3 at
    destination 2.
    """
    a, b = sch.a_const, sch.b_const
    v1, v2, vr = sch.v1, sch.v2, sch.vr
    pairs = [
        (a * ch.h_12 * v2[0], b * ch.h_1r * vr[1]),
        (a * ch.h_12 * v2[1], b * ch.h_1r * vr[2]),
        (a * ch.h_21 * v1[0], b * ch.h_2r * vr[0]),
        (a * ch.h_21 * v1[2], b * ch.h_2r * vr[3]),
    ]
    return np.array([abs(d + r) / abs(d) for d, r in pairs])


def _integer_grid(ranges):
    axes = [np.arange(-k, k + 1) for k in ranges]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def integer_constellation(coefficients, ranges, budget=DEFAULT_BUDGET, q=None):
    """
    Enumerate ``sum_k coefficients[k] * n_k`` over ``n_k in [-ranges[k], ranges[k]]``.

    Returns
    -------
    ReceivedConstellation
    """
    coefficients = np.asarray(coefficients, dtype=float)
    n_tuples = math.prod(2 * int(k) + 1 for k in ranges)
    if n_tuples > budget:
        raise EnumerationTooLargeError(q if q is not None else max(ranges), n_tuples, budget)
    tuples = _integer_grid(ranges)
    points = tuples @ coefficients
    scale = float(np.max(np.abs(coefficients))) if coefficients.size else 0.0

    values = np.sort(points)
    gaps = np.diff(values)
    tol = COINCIDENCE_TOL * scale
    distinct = gaps > tol
    d_min = float(np.min(gaps[distinct])) if np.any(distinct) else 0.0
    return ReceivedConstellation(
        points=points, tuples=tuples, d_min=d_min,
        rationally_dependent=bool(np.any(~distinct)),
    )


def enumerate_received_constellation(ch, sch, budget=DEFAULT_BUDGET):
    """
    The relay's noise-free constellation and its exact minimum distance.

    Tuples are ``(s1_1, s2_1, s1_2 + s2_2, s1_3 + s2_3)`` over
    ``[-Q, Q]^2 x [-2Q, 2Q]^2``.

    Raises
    ------
    EnumerationTooLargeError
        If ``(2Q+1)^2 (4Q+1)^2`` exceeds ``budget``.
    """
    q = sch.q
    return integer_constellation(relay_coefficients(ch, sch), (q, q, 2 * q, 2 * q),
                                 budget=budget, q=q)


def destination_constellation(ch, sch, which, budget=DEFAULT_BUDGET):
    q = sch.q
    return integer_constellation(destination_coefficients(ch, sch, which), (q,) * 4,
                                 budget=budget, q=q)


def relay_estimate_scalar(y_r, ch, sch, constellation=None):
    """
    Nearest-point estimates of the four relay combinations.

    Parameters
    ----------
    y_r : float or ndarray
    constellation : ReceivedConstellation, optional
        Reused when given; otherwise enumerated from ``ch`` and ``sch``.

    Returns
    -------
    ndarray of int, shape (4,) or (n, 4)
        ``(s1_1, s2_1, s1_2 + s2_2, s1_3 + s2_3)``.
    """
    if constellation is None:
        constellation = enumerate_received_constellation(ch, sch)
    return constellation.decode(y_r)


def destination_decode_scalar(y, which, ch, sch, constellation=None):
    """
    Nearest-point decode at destination ``which``.

    Returns
    -------
    desired : ndarray of int, shape (3,) or (n, 3)
    cross : int or ndarray of int
        Estimate of the surviving cross symbol (s2_3 at destination 1,
        s1_2 at destination 2).
    """
    if constellation is None:
        constellation = destination_constellation(ch, sch, which)
    est = constellation.decode(y)
    return est[..., :3], est[..., 3]


def rate_lower_bound(ser, q):
    """Fano-type bound ``max(0, (1 - ser) log2(2q - 1) - 1)`` in bits per real channel use."""
    if not 0 <= ser <= 1:
        raise ValueError(f"ser must lie in [0, 1], got {ser}")
    if int(q) < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    return max(0.0, (1 - ser) * math.log2(2 * int(q) - 1) - 1)
