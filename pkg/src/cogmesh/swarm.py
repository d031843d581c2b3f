"""Swarm-intelligence master-channel selection.

Every node keeps a weight per available channel, summing to one. HELLO
messages act as pheromone: hearing a neighbor advertise its master channel
reinforces that channel's weight by r*(1-W) and decays every other channel by
(1-r), where r maps the quality difference between the neighbor's master and
the local standing choice through a bounded arctan curve. Periodic sensing
blends the weights back toward the measured channel qualities, which is the
disturbance that lets the selection track the radio environment. The master
channel is simply the argmax weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from cogmesh import kernels
from cogmesh.radio import ChannelObservation

# channel id -> weight; invariant: values sum to 1 over the available set
WeightList = dict[int, float]


class NoAvailableChannels(RuntimeError):
    """Raised when an operation needs at least one available channel."""


@dataclass(frozen=True)
class RewardParams:
    """Constants of the reinforcement curve r = (arctan(a*dq) + b) / c.

    Validated so the curve stays inside [0, 1] at both limits; the defaults
    span the full (0, 1) range and give r = 0.5 at equal quality.
    """

    a: float = 1.0
    b: float = math.pi / 2
    c: float = math.pi

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0:
            raise ValueError("reward params a and c must be > 0")
        lo = (-math.pi / 2 + self.b) / self.c
        hi = (math.pi / 2 + self.b) / self.c
        if lo < -1e-12 or hi > 1.0 + 1e-12:
            raise ValueError("reward curve leaves [0, 1] at the limits")


@dataclass(frozen=True)
class HelloMessage:
    """Pheromone carrier: sender id, its master channel, its quantized
    channel qualities, and its one-hop neighbor list."""

    sender: int
    master: int
    channels: tuple[tuple[int, int], ...]           # (channel, q_stage)
    neighbor_list: tuple[tuple[int, int, tuple[int, ...]], ...] = ()
    # entries: (neighbor id, neighbor master, neighbor channels)

    def stage_of(self, channel: int):
        for ch, stage in self.channels:
            if ch == channel:
                return stage
        return None


def reward(delta_q: float, params: RewardParams) -> float:
    """Reinforcement factor in [0, 1], monotone non-decreasing in delta_q."""
    return kernels.reward(delta_q, params.a, params.b, params.c)


def select_master(weights: WeightList) -> int:
    """Argmax-weight channel; ties break to the lowest channel index."""
    if not weights:
        raise NoAvailableChannels("empty weight list")
    best_ch = -1
    best_w = -1.0
    for ch, w in weights.items():
        if w > best_w or (w == best_w and ch < best_ch):
            best_ch, best_w = ch, w
    return best_ch


def apply_hello(weights: WeightList, hello: HelloMessage,
                local_obs: list[ChannelObservation],
                params: RewardParams) -> WeightList:
    """Update a weight list from one received HELLO.

    The advertised master is reinforced and all other channels decay, keeping
    the sum at one. The quality difference compares the sender's reported
    stage of its master against the locally sensed stage of the local
    standing choice (the current argmax). A HELLO for a channel that is not
    locally available changes nothing: a node cannot adopt a channel it
    cannot use.
    """
    target = hello.master
    if target not in weights:
        return weights
    local_ref = select_master(weights)
    local_stage = 0
    for obs in local_obs:
        if obs.channel == local_ref:
            local_stage = obs.q_stage
            break
    reported = hello.stage_of(target)
    if reported is None:
        return weights
    r = kernels.reward(float(reported - local_stage), params.a, params.b, params.c)
    return kernels.hello_reinforce(weights, target, r)


def initial_weights(obs: list[ChannelObservation]) -> WeightList:
    """First weight list: the normalized stage vector over available
    channels (uniform when every stage is zero)."""
    stages = {o.channel: o.q_stage for o in obs if o.available}
    if not stages:
        raise NoAvailableChannels("no available channels")
    total = sum(stages.values())
    if total == 0:
        u = 1.0 / len(stages)
        return {ch: u for ch in stages}
    return {ch: s / total for ch, s in stages.items()}


def refresh_from_sensing(weights: WeightList, obs: list[ChannelObservation],
                         alpha: float) -> WeightList:
    """Disturbance step after a sensing round.

    Channels that became unavailable are dropped and the survivors are
    renormalized; newly available channels enter at weight zero; the result
    is then blended (1-alpha)*W + alpha*Q where Q is the stage vector scaled
    to sum one (uniform if all stages are zero). When no prior mass survives
    the result is Q itself.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    stages = {o.channel: o.q_stage for o in obs if o.available}
    if not stages:
        raise NoAvailableChannels("no available channels")
    stage_total = sum(stages.values())
    if stage_total == 0:
        u = 1.0 / len(stages)
        target = {ch: u for ch in stages}
    else:
        target = {ch: s / stage_total for ch, s in stages.items()}
    kept = {ch: weights.get(ch, 0.0) for ch in stages}
    mass = sum(kept.values())
    if mass <= 0.0:
        return dict(target)
    kept = {ch: w / mass for ch, w in kept.items()}
    return kernels.blend_refresh(kept, target, alpha)
