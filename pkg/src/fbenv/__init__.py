"""Remote-framebuffer reinforcement-learning harness.

An RFB (VNC) client that captures game frames and injects input, a
pixel-based environment API, a deterministic built-in game server for
offline testing and training, a tabular Q-learning agent, and capture
throughput benchmarks.
"""

from . import keys
from .agent import AgentConfig, EpsilonSchedule, QTable, TrainReport, train
from .client import CaptureStats, Session, SessionState, connect
from .env import Env, EnvConfig, Observation, Transition, make_env
from .errors import (
    ConnectionLostError,
    ConnectTimeoutError,
    FbenvError,
    HandshakeError,
    HandshakeRefusedError,
    IncompleteMessageError,
    InvalidStateError,
    ProtocolError,
    ResetTimeoutError,
    UnsupportedEncodingError,
    UnsupportedFormatError,
    UnsupportedSecurityError,
    UnsupportedVersionError,
    UpdateRejectedError,
)
from .framebuffer import Framebuffer, GrayFrame, downsample, to_grayscale, write_pgm
from .game import GameState, render, score, step_game
from .server import MockServer, ServerConfig, serve
from .wire import PixelFormat, Rectangle, RGBX32, ServerInit

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "CaptureStats",
    "ConnectTimeoutError",
    "ConnectionLostError",
    "Env",
    "EnvConfig",
    "EpsilonSchedule",
    "FbenvError",
    "Framebuffer",
    "GameState",
    "GrayFrame",
    "HandshakeError",
    "HandshakeRefusedError",
    "IncompleteMessageError",
    "InvalidStateError",
    "MockServer",
    "Observation",
    "PixelFormat",
    "ProtocolError",
    "QTable",
    "RGBX32",
    "Rectangle",
    "ResetTimeoutError",
    "ServerConfig",
    "ServerInit",
    "Session",
    "SessionState",
    "TrainReport",
    "Transition",
    "UnsupportedEncodingError",
    "UnsupportedFormatError",
    "UnsupportedSecurityError",
    "UnsupportedVersionError",
    "UpdateRejectedError",
    "connect",
    "downsample",
    "keys",
    "make_env",
    "render",
    "score",
    "serve",
    "step_game",
    "to_grayscale",
    "train",
    "write_pgm",
]
