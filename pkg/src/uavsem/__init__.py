"""uavsem: slot-based simulator of a UAV-relayed semantic communication
network plus a truncated-quantile-critics learner that jointly controls
UAV trajectories, payload splits and semantic compression."""

from .config import GroundUser, ScenarioConfig, UavState, load_config, save_config, validate_config
from .env import JointAction, SlotOutcome, UavRelayEnv
from .semantics import CalibrationTable, DistortionSurrogate

__version__ = "0.1.0"

__all__ = [
    "CalibrationTable",
    "DistortionSurrogate",
    "GroundUser",
    "JointAction",
    "ScenarioConfig",
    "SlotOutcome",
    "UavRelayEnv",
    "UavState",
    "load_config",
    "save_config",
    "validate_config",
    "__version__",
]
