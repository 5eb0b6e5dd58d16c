"""Gym-style client for pomdp-forge environments.

Spawns ``pomdp-forge serve --spec <path>`` as a child process and speaks its
newline-delimited JSON protocol, so any EnvSpec becomes a standard
reset/step environment for external RL code with zero build coupling.
"""

from .session import (  # noqa: F401
    BridgeEnv, BridgeError, BridgeSession, ChildExited, EpisodeFinished,
    ProtocolError, bridge_reset, bridge_step, PROTOCOL_VERSION,
)

__version__ = "0.1.0"
