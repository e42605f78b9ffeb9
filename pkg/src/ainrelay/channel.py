"""
Seeded channel and noise generation.

Every draw is a pure function of a :class:`RunSeed`. Two seeds with the
same ``(seed, stream_id)`` pair reproduce the same numbers bit for bit;
different ``stream_id`` values give statistically independent streams.
"""

from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ChannelGenerationError

# Condition number above which a sampled matrix is treated as singular.
SINGULAR_COND = 1e12
MAX_SINGULAR_DRAWS = 100

# Stream kinds multiplexed into RunSeed.stream_id by RunSeed.for_trial.
CHANNEL_STREAM = 0
BEAM_STREAM = 1
NOISE_STREAM = 2
SYMBOL_STREAM = 3
N_STREAM_KINDS = 4


@dataclass(frozen=True)
class RunSeed:
    """A ``(seed, stream_id)`` pair naming one reproducible random stream."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.stream_id) < 0:
            raise ValueError(f"stream_id must be non-negative, got {self.stream_id}")

    @classmethod
    def for_trial(cls, seed, kind, index):
        """Seed for stream ``kind`` (one of the ``*_STREAM`` constants) of trial ``index``."""
        return cls(seed, int(index) * N_STREAM_KINDS + int(kind))

    def rng(self):
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))


def complex_gaussian(rng, shape):
    """Circularly-symmetric CN(0, 1) samples: real and imaginary parts N(0, 1/2)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


MIMO_LINKS = ("h_r1", "h_r2", "h_11", "h_12", "h_21", "h_22", "h_1r", "h_2r")


@dataclass(frozen=True, eq=False)
class MimoChannel:
    """
    The eight M x M channel matrices of the source/relay/destination network.

    Naming follows ``h_<receiver><sender>``: ``h_r1`` is source 1 to relay,
    ``h_12`` is source 2 to destination 1, ``h_1r`` is relay to
    destination 1, and so on.
    """

    h_r1: np.ndarray
    h_r2: np.ndarray
    h_11: np.ndarray
    h_12: np.ndarray
    h_21: np.ndarray
    h_22: np.ndarray
    h_1r: np.ndarray
    h_2r: np.ndarray

    def __post_init__(self):
        m = np.shape(self.h_r1)[0]
        for name in MIMO_LINKS:
            mat = np.asarray(getattr(self, name), dtype=complex)
            if mat.shape != (m, m):
                raise ValueError(f"{name} has shape {mat.shape}, expected ({m}, {m})")
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def m(self):
        return self.h_r1.shape[0]

    def scaled(self, c):
        """All eight matrices multiplied by the scalar ``c``."""
        return MimoChannel(**{name: c * getattr(self, name) for name in MIMO_LINKS})

    def with_links(self, **links):
        return replace(self, **links)


@dataclass(frozen=True)
class ScalarChannel:
    """Real, time-invariant single-antenna gains, same naming as :class:`MimoChannel`."""

    h_r1: float
    h_r2: float
    h_11: float
    h_12: float
    h_21: float
    h_22: float
    h_1r: float
    h_2r: float

    def as_array(self):
        return np.array([getattr(self, f.name) for f in fields(self)])


@dataclass(frozen=True, eq=False)
class TwoAntennaRelayChannel:
    """
    Single-antenna sources and destinations around a 2-antenna relay.

    ``h_r1``/``h_r2`` are the 2-vectors into the relay, ``h_1r``/``h_2r``
    the 2-vectors (row form) out of it, the rest complex scalars.
    """

    h_r1: np.ndarray
    h_r2: np.ndarray
    h_11: complex
    h_12: complex
    h_21: complex
    h_22: complex
    h_1r: np.ndarray
    h_2r: np.ndarray

    def __post_init__(self):
        for name in ("h_r1", "h_r2", "h_1r", "h_2r"):
            vec = np.asarray(getattr(self, name), dtype=complex).reshape(-1)
            if vec.shape != (2,):
                raise ValueError(f"{name} must have 2 entries, got shape {vec.shape}")
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)

    @property
    def relay_rx(self):
        """2 x 2 matrix seen by the relay receiver: columns are the two sources."""
        return np.column_stack([self.h_r1, self.h_r2])

    @property
    def relay_tx(self):
        """2 x 2 matrix from the relay to the destinations: rows are destinations."""
        return np.vstack([self.h_1r, self.h_2r])


def _draw_invertible(rng, m):
    for _ in range(MAX_SINGULAR_DRAWS):
        mat = complex_gaussian(rng, (m, m))
        if np.linalg.cond(mat) <= SINGULAR_COND:
            return mat
    raise ChannelGenerationError(
        f"{MAX_SINGULAR_DRAWS} consecutive singular {m}x{m} channel draws"
    )


def sample_mimo_channel(m, seed):
    """
    Draw the eight i.i.d. CN(0, 1) matrices of an ``m``-antenna network.

    Each matrix is redrawn (from the same stream) while its condition
    number exceeds ``SINGULAR_COND``.

    Parameters
    ----------
    m : int
        Antenna count at every node.
    seed : RunSeed

    Returns
    -------
    MimoChannel
    """
    if int(m) < 1:
        raise ValueError(f"antenna count must be >= 1, got {m}")
    rng = seed.rng()
    return MimoChannel(**{name: _draw_invertible(rng, int(m)) for name in MIMO_LINKS})


def sample_scalar_channel(seed):
    """Draw eight real N(0, 1) gains; exact zeros are redrawn."""
    rng = seed.rng()
    gains = []
    while len(gains) < len(MIMO_LINKS):
        g = float(rng.standard_normal())
        if g != 0.0:
            gains.append(g)
    return ScalarChannel(*gains)


def sample_two_antenna_relay_channel(seed):
    """Draw a CN(0, 1) channel for the 2-antenna-relay scenario.

    The relay's 2 x 2 receive and transmit matrices are redrawn on
    numerical singularity, like the MIMO matrices.
    """
    rng = seed.rng()
    rx = _draw_invertible(rng, 2)
    scalars = complex_gaussian(rng, 4)
    tx = _draw_invertible(rng, 2)
    return TwoAntennaRelayChannel(
        h_r1=rx[:, 0], h_r2=rx[:, 1],
        h_11=complex(scalars[0]), h_12=complex(scalars[1]),
        h_21=complex(scalars[2]), h_22=complex(scalars[3]),
        h_1r=tx[0], h_2r=tx[1],
    )


def sample_noise(dim, variance, seed, size=None, complex_valued=True):
    """
    Gaussian noise of the given per-entry variance.

    Parameters
    ----------
    dim : int
        Vector length.
    variance : float
        Per-entry variance; 0 gives exact zeros.
    seed : RunSeed
    size : int, optional
        Number of independent vectors. When given the result has shape
        ``(dim, size)``, otherwise ``(dim,)``.
    complex_valued : bool
        Circularly-symmetric complex noise (default) or real noise.

    Returns
    -------
    np.ndarray
    """
    if int(dim) < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if variance < 0:
        raise ValueError(f"noise variance must be >= 0, got {variance}")
    shape = (int(dim),) if size is None else (int(dim), int(size))
    rng = seed.rng()
    if complex_valued:
        return np.sqrt(variance) * complex_gaussian(rng, shape)
    return np.sqrt(variance) * rng.standard_normal(shape)
