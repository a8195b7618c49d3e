"""csilab: learned CSI compression and uplink feedback simulation."""

from .analog import AnalogDeepCMC
from .channel_gen import (
    ArrayConfig,
    ChannelTensor,
    DatasetManifest,
    MultipathParams,
    OfdmConfig,
    ScenarioConfig,
    channel_response,
    generate_channels,
    generate_dataset,
    load_dataset,
    steering_vector,
    write_dataset,
)
from .codec import DeepCMC, EntropyModel, LatentBitstream, arith_decode, arith_encode
from .errors import ConfigError, DecodeError, NumericalError, UndefinedChannelError
from .feedback import FeedbackConfig, FeedbackRealization, feedback_capacity, mrc_combine
from .metrics import bits_per_entry, nmse
from .pilot_sim import PilotBlock, ls_estimate, quantize_observation, transmit_pilots
from .sweep import SweepSpec, run_sweep

__version__ = "0.1.0"

__all__ = [
    "AnalogDeepCMC", "ArrayConfig", "ChannelTensor", "ConfigError", "DatasetManifest", "DecodeError",
    "DeepCMC", "EntropyModel", "FeedbackConfig", "FeedbackRealization", "LatentBitstream",
    "MultipathParams", "NumericalError", "OfdmConfig", "PilotBlock", "ScenarioConfig", "SweepSpec",
    "UndefinedChannelError", "arith_decode", "arith_encode", "bits_per_entry", "channel_response",
    "feedback_capacity", "generate_channels", "generate_dataset", "load_dataset", "ls_estimate",
    "mrc_combine", "nmse", "quantize_observation", "run_sweep", "steering_vector",
    "transmit_pilots", "write_dataset",
]
