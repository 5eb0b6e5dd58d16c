"""pomdp_forge: seeded partially observable environment synthesis with
exact brute-force verification oracles."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    EnvSpec, ForgeError, InvalidSpec, RewardDelaySpec, RngStream,
    StateConvSpec, Step, Trajectory, WrapperIncompatible, parse_trajectory,
    serialize_trajectory, uniform01,
)
from .envs import make_env, run_episode  # noqa: F401
from .linproc import InvarianceLabel, invariance_class  # noqa: F401
