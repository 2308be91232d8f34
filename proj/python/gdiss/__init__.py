"""Grassroots dissemination engine: blocklace, CGD, simulator, apps and live nodes."""

from ._core import (  # noqa: F401
    GroupError,
    Node,
    TransitionError,
    agent_id,
    decode_block,
    feed,
    grassroots,
    group,
    group_scenario,
    initial_block_wire,
    load_dump,
    replay,
    sha256,
    simulate,
    twitter_scenario,
)

__all__ = [
    "GroupError",
    "Node",
    "TransitionError",
    "agent_id",
    "decode_block",
    "feed",
    "grassroots",
    "group",
    "group_scenario",
    "initial_block_wire",
    "load_dump",
    "replay",
    "sha256",
    "simulate",
    "twitter_scenario",
]
