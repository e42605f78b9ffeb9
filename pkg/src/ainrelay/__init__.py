"""
Aligned interference neutralization for the two-user interference channel
with an instantaneous relay.
"""

from .channel import (
    MimoChannel,
    RunSeed,
    ScalarChannel,
    TwoAntennaRelayChannel,
    sample_mimo_channel,
    sample_noise,
    sample_scalar_channel,
    sample_two_antenna_relay_channel,
)
from .ain_mimo import (
    BeamformerSet,
    EffectiveChannels,
    build_beams,
    build_relay_beams,
    build_source_beams,
    compute_effective_channels,
    diversity_optimize_beams,
    relay_zero_force,
)
from .ain_scalar import (
    ReceivedConstellation,
    ScalarScheme,
    build_scalar_scheme,
    choose_q,
    destination_decode_scalar,
    enumerate_received_constellation,
    relay_estimate_scalar,
)
from .link_sim import RelayMode, TrialResult, run_mimo_trial, run_scalar_trial, zf_sinr
from .dof import DofEstimate, Scenario, fit_dof_slope, scalar_sweep, sweep
from .errors import (
    AinRelayError,
    ChannelGenerationError,
    DegenerateChannelError,
    EnumerationTooLargeError,
    RankDeficiencyError,
    SingularChannelError,
    UnsupportedDimensionError,
)

__version__ = "0.1.0"
