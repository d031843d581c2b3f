"""Per-node protocol: scanning, cluster formation and joining, superframe
scheduling, HELLO/beacon exchange, neighbor tables, and gateway selection.

Time is integer ticks, one tick per mini-slot. Each cluster runs its own
superframe cycle anchored at a random offset drawn by the head at formation;
clusters are deliberately unsynchronized. A node owns a single half-duplex
transceiver: it hears a message only when tuned to its channel for the whole
tick and not transmitting itself.

Scanning follows the lowest-channel-first rule with a fixed interval longer
than the superframe. What arrived during an interval decides the outcome:
nothing -> form a cluster here; a beacon -> request to join through that
cluster's public random-access period; only HELLOs -> record the neighbors,
answer through the public period, and move to the next channel. A node that
iterates all channels without joining or forming starts its own cluster on a
random available channel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from random import Random

from cogmesh import swarm
from cogmesh.radio import ChannelObservation
from cogmesh.swarm import HelloMessage, NoAvailableChannels, RewardParams

BEACON = "beacon"
ND = "nd"
DETECT = "detect"
DATA = "data"
INTRA_RA = "intra_ra"
PUBLIC_RA = "public_ra"

PUBLIC_RA_MIN = 2
PUBLIC_RA_MAX = 6


class Role(enum.Enum):
    SCANNING = "scanning"
    HEAD = "head"
    ORDINARY = "ordinary"
    GATEWAY = "gateway"


MEMBER_ROLES = (Role.ORDINARY, Role.GATEWAY)


@dataclass(frozen=True)
class SuperframeParams:
    beacon_ticks: int = 1
    max_slots: int = 8
    data_ticks: int = 8
    intra_ra_ticks: int = 2
    public_ra_ticks: int = 4
    detect_periods: int = 1
    detect_ticks: int = 2
    max_superframe_ticks: int = 32

    @property
    def frame_len(self) -> int:
        return (self.beacon_ticks + self.max_slots + self.data_ticks
                + self.intra_ra_ticks + self.public_ra_ticks
                + self.detect_periods * self.detect_ticks)

    def validate(self):
        if self.beacon_ticks < 1 or self.max_slots < 1 or self.data_ticks < 1:
            raise ValueError("beacon, mini-slot and data periods must be >= 1 tick")
        if self.intra_ra_ticks < 1 or self.detect_ticks < 1:
            raise ValueError("intra-cluster RA and detection periods must be >= 1 tick")
        if not PUBLIC_RA_MIN <= self.public_ra_ticks <= PUBLIC_RA_MAX:
            raise ValueError("public_ra_ticks must lie in [%d, %d]"
                             % (PUBLIC_RA_MIN, PUBLIC_RA_MAX))
        if not 1 <= self.detect_periods <= 4:
            raise ValueError("detect_periods must lie in [1, 4]")
        if self.frame_len > self.max_superframe_ticks:
            raise ValueError("superframe (%d ticks) exceeds max_superframe_ticks"
                             % self.frame_len)


@dataclass(frozen=True)
class SuperframeSchedule:
    """One superframe layout: (kind, start, length) periods in tick order."""

    periods: tuple[tuple[str, int, int], ...]
    frame_len: int
    nd_start: int
    data_start: int
    data_len: int
    pra_start: int
    pra_len: int
    detect_ticks: frozenset[int]
    first_detect: int

    def slot_tick(self, slot: int) -> int:
        return self.nd_start + slot


def build_superframe(params: SuperframeParams, rng: Random) -> SuperframeSchedule:
    """Lay out one superframe; spectrum-detection blocks land in gaps between
    the five main periods at positions drawn fresh each frame."""
    main = [
        (BEACON, params.beacon_ticks),
        (ND, params.max_slots),
        (DATA, params.data_ticks),
        (INTRA_RA, params.intra_ra_ticks),
        (PUBLIC_RA, params.public_ra_ticks),
    ]
    gaps = sorted(rng.sample(range(1, 5), params.detect_periods))
    seq = []
    for i, period in enumerate(main):
        while gaps and gaps[0] == i:
            gaps.pop(0)
            seq.append((DETECT, params.detect_ticks))
        seq.append(period)
    periods = []
    start = 0
    nd_start = data_start = data_len = pra_start = pra_len = 0
    detect = []
    for kind, length in seq:
        periods.append((kind, start, length))
        if kind == ND:
            nd_start = start
        elif kind == DATA:
            data_start, data_len = start, length
        elif kind == PUBLIC_RA:
            pra_start, pra_len = start, length
        elif kind == DETECT:
            detect.extend(range(start, start + length))
        start += length
    return SuperframeSchedule(
        periods=tuple(periods), frame_len=start, nd_start=nd_start,
        data_start=data_start, data_len=data_len,
        pra_start=pra_start, pra_len=pra_len,
        detect_ticks=frozenset(detect), first_detect=min(detect),
    )


@dataclass
class NeighborEntry:
    id: int
    hops: int                      # 1 or 2
    master: int
    channels: dict                 # channel -> q_stage (None when unreported)
    last_seen: int
    relay: int | None = None       # 1-hop relay that reported a 2-hop entry
    cluster_head: int | None = None


@dataclass(frozen=True)
class GatewayLink:
    cluster_a: int
    cluster_b: int
    node_a: int
    node_b: int | None = None      # None: single gateway 1-hop to both heads

    @property
    def nodes(self) -> tuple[int, ...]:
        return (self.node_a,) if self.node_b is None else (self.node_a, self.node_b)


@dataclass
class ClusterRecord:
    head: int
    master: int
    members: dict                  # node id -> mini-slot index (head excluded)
    max_slots: int
    frame_offset: int
    neighbor_clusters: dict = field(default_factory=dict)  # head id -> GatewayLink


@dataclass(frozen=True)
class BeaconSummary:
    head: int
    master: int
    frame_start: int


@dataclass
class ScanState:
    visited: set
    current: int
    interval_remaining: int
    heard_beacon: BeaconSummary | None = None
    heard_hellos: list = field(default_factory=list)
    rejections: set = field(default_factory=set)


# --- scan outcomes -----------------------------------------------------------

@dataclass(frozen=True)
class FormCluster:
    channel: int


@dataclass(frozen=True)
class RequestJoin:
    head: int
    channel: int


@dataclass(frozen=True)
class ContinueScan:
    channel: int


# --- wire records ------------------------------------------------------------

@dataclass(frozen=True)
class Beacon:
    head: int
    master: int
    frame_start: int
    gap: int                               # ticks to the next frame start
    schedule: SuperframeSchedule
    members: tuple[tuple[int, int], ...]   # (node id, mini-slot)
    max_slots: int
    rejects: tuple[int, ...]
    hello: HelloMessage


@dataclass(frozen=True)
class HelloFrame:
    """HELLO on the wire: pheromone payload plus the sender's cluster head and
    the absolute window of the current public random-access period (the Frame
    Map advertisement)."""

    hello: HelloMessage
    cluster_head: int | None = None
    pra_start: int | None = None
    pra_len: int | None = None


@dataclass(frozen=True)
class JoinRequest:
    sender: int
    head: int


# --- pure protocol operations -------------------------------------------------

def start_scan(observations: list[ChannelObservation],
               first_channel: int | None = None) -> ScanState:
    """Open a scan on the lowest available channel (or a requested start
    channel when it is available); raises when nothing is available."""
    available = sorted(o.channel for o in observations if o.available)
    if not available:
        raise NoAvailableChannels("no available channels to scan")
    current = first_channel if first_channel in available else available[0]
    return ScanState(visited={current}, current=current, interval_remaining=0)


def next_scan_channel(state: ScanState, available) -> int | None:
    """Lowest-index available channel not yet visited, or None."""
    for ch in sorted(available):
        if ch not in state.visited:
            return ch
    return None


def finish_scan_interval(state: ScanState, available, rng: Random):
    """Resolve an elapsed scanning interval into its outcome.

    A beacon from a cluster that has not rejected this node wins; otherwise
    HELLO traffic (or exhausted beacons) means move on to the next unvisited
    channel; silence means claim the current channel. Once every channel has
    been visited without a home, the node starts its own cluster on a
    uniformly random available channel.
    """
    if state.interval_remaining > 0:
        raise ValueError("scan interval still running")
    beacon = state.heard_beacon
    if beacon is not None and beacon.head not in state.rejections:
        return RequestJoin(head=beacon.head, channel=beacon.master)
    if beacon is None and not state.heard_hellos and state.current in available:
        return FormCluster(channel=state.current)
    nxt = next_scan_channel(state, available)
    if nxt is not None:
        return ContinueScan(channel=nxt)
    return FormCluster(channel=rng.choice(sorted(available)))


def handle_join_request(cluster: ClusterRecord, requester: int) -> int | None:
    """Admission decision: lowest free mini-slot index, or None when full.
    A requester that is already a member gets its existing slot back."""
    if requester in cluster.members:
        return cluster.members[requester]
    used = set(cluster.members.values())
    for slot in range(cluster.max_slots):
        if slot not in used:
            return slot
    return None


def emit_hello(node_id: int, master: int, observations, table) -> HelloMessage:
    """Build this node's HELLO: quantized qualities of the available channels
    and the one-hop neighbor list with each neighbor's channel set."""
    channels = tuple(sorted((o.channel, o.q_stage) for o in observations
                            if o.available))
    neighbors = tuple(
        (e.id, e.master, tuple(sorted(e.channels)))
        for e in sorted(table.values(), key=lambda e: e.id) if e.hops == 1
    )
    return HelloMessage(sender=node_id, master=master, channels=channels,
                        neighbor_list=neighbors)


def upsert_from_hello(table: dict, hello: HelloMessage, tick: int,
                      cluster_head: int | None = None, self_id: int | None = None):
    """Fold one received HELLO into a neighbor table: the sender becomes (or
    stays) a 1-hop entry, each listed neighbor becomes a 2-hop entry via the
    sender unless it is already known at 1 hop."""
    table[hello.sender] = NeighborEntry(
        id=hello.sender, hops=1, master=hello.master,
        channels={ch: stage for ch, stage in hello.channels},
        last_seen=tick, relay=None, cluster_head=cluster_head,
    )
    for nid, nmaster, nchannels in hello.neighbor_list:
        if nid == self_id or nid == hello.sender:
            continue
        existing = table.get(nid)
        if existing is not None and existing.hops == 1:
            continue
        table[nid] = NeighborEntry(
            id=nid, hops=2, master=nmaster,
            channels={ch: None for ch in nchannels},
            last_seen=tick, relay=hello.sender, cluster_head=None,
        )


def evict_stale(table: dict, tick: int, ttl_ticks: int):
    """Drop entries not refreshed within the TTL window."""
    dead = [nid for nid, e in table.items() if tick - e.last_seen > ttl_ticks]
    for nid in dead:
        del table[nid]


def select_offmaster_scan(master: int, stages: dict, table: dict,
                          visited: set, rng: Random) -> int | None:
    """Pick a non-master channel for this frame's listening excursion.

    Channels where known 2-hop neighbors live and that were not yet visited
    come first (lowest index); otherwise sample the remaining channels with
    probability proportional to (q_stage + 1).
    """
    two_hop = sorted(
        e.master for e in table.values()
        if e.hops == 2 and e.master in stages and e.master != master
        and e.master not in visited
    )
    if two_hop:
        return two_hop[0]
    cands = sorted(ch for ch in stages if ch != master)
    if not cands:
        return None
    weights = [stages[ch] + 1 for ch in cands]
    pick = rng.random() * sum(weights)
    acc = 0.0
    for ch, w in zip(cands, weights):
        acc += w
        if pick < acc:
            return ch
    return cands[-1]


def select_gateways(cluster_a: ClusterRecord, cluster_b: ClusterRecord,
                    tables: dict, adjacent) -> GatewayLink | None:
    """Choose the gateway link between two clusters.

    A node 1-hop to both heads (per the tables, confirmed by physical
    adjacency) becomes the single gateway, lowest id first; failing that, the
    lowest-id adjacent member pair (one node from each cluster) carries the
    link. Heads themselves only ever appear in the pair form.
    """
    def knows(x, y):
        ex = tables.get(x, {}).get(y)
        ey = tables.get(y, {}).get(x)
        return (ex is not None and ex.hops == 1) or (ey is not None and ey.hops == 1)

    def linked(x, y):
        return x != y and knows(x, y) and adjacent(x, y)

    nodes_a = [cluster_a.head] + sorted(cluster_a.members)
    nodes_b = [cluster_b.head] + sorted(cluster_b.members)
    singles = sorted(
        x for x in set(nodes_a) | set(nodes_b)
        if x not in (cluster_a.head, cluster_b.head)
        and linked(x, cluster_a.head) and linked(x, cluster_b.head)
    )
    if singles:
        return GatewayLink(cluster_a=cluster_a.head, cluster_b=cluster_b.head,
                           node_a=singles[0])
    pairs = sorted((a, b) for a in nodes_a for b in nodes_b if linked(a, b))
    if pairs:
        a, b = pairs[0]
        return GatewayLink(cluster_a=cluster_a.head, cluster_b=cluster_b.head,
                           node_a=a, node_b=b)
    return None


# --- node state machine --------------------------------------------------------

@dataclass(frozen=True)
class ProtocolParams:
    frame: SuperframeParams = SuperframeParams()
    scan_interval_ticks: int = 33
    neighbor_ttl_superframes: int = 3
    alpha: float = 0.1
    reward: RewardParams = RewardParams()
    swarm_enabled: bool = True
    sensing_window_ticks: int = 1
    reform_enabled: bool = True
    reform_cadence: int = 5
    join_attempt_limit: int = 4
    # heads stretch each frame by up to this many ticks so that the frames of
    # unsynchronized clusters cannot stay collision-aligned forever
    frame_jitter_max: int = 2

    @property
    def frame_len(self) -> int:
        return self.frame.frame_len

    @property
    def ttl_ticks(self) -> int:
        return self.neighbor_ttl_superframes * self.frame_len

    def validate(self):
        self.frame.validate()
        if self.frame_jitter_max < 0:
            raise ValueError("frame_jitter_max must be >= 0")
        if self.frame_len + self.frame_jitter_max > self.frame.max_superframe_ticks:
            raise ValueError("superframe plus jitter exceeds max_superframe_ticks")
        if self.scan_interval_ticks <= self.frame.max_superframe_ticks:
            raise ValueError("scan interval must exceed the longest superframe")
        if self.neighbor_ttl_superframes < 1:
            raise ValueError("neighbor_ttl_superframes must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.reform_cadence < 1:
            raise ValueError("reform_cadence must be >= 1")


class Node:
    """One secondary user. The engine clocks it through step()/on_message();
    everything it knows is local: observations, weights, neighbor table, and
    whatever beacons told it about its cluster's frame."""

    def __init__(self, node_id: int, pos, rng: Random, params: ProtocolParams,
                 start_tick: int = 0):
        self.id = node_id
        self.pos = pos
        self.rng = rng
        self.p = params
        self.start_tick = start_tick

        self.role: Role | None = None
        self.listen: int | None = None
        self.master: int | None = None
        self.weights: dict = {}
        self.obs: dict = {}
        self.obs_list: list = []
        self.available: frozenset = frozenset()
        self.table: dict = {}

        self.scan: ScanState | None = None
        self.join_target: int | None = None
        self.join_tx_tick: int | None = None
        self.join_attempts = 0
        self.join_deadline: int | None = None
        self.exch_tx_tick: int | None = None
        self.exch_done: set = set()

        # member/cluster frame state (heads use the same frame fields)
        self.head_id: int | None = None
        self.slot: int | None = None
        self.sched: SuperframeSchedule | None = None
        self.frame_start: int | None = None
        self.frame_gap = params.frame_len
        self.have_beacon = False
        self.beacons_missed = 0
        self.frames_in_cluster = 0
        self.offscan_ch: int | None = None
        self.offscan_seen: set = set()
        self.member_grace: int | None = None

        self.cluster: ClusterRecord | None = None
        self.heard_members: set = set()
        self.member_miss: dict = {}
        self.join_queue: list = []
        self.lock = None               # (plan id, expiry tick) while reforming

        self.settle_tick: int | None = None

    # -- helpers --

    def is_member(self) -> bool:
        return self.role in MEMBER_ROLES

    def stages(self) -> dict:
        return {o.channel: o.q_stage for o in self.obs_list if o.available}

    def apply_observations(self, observations):
        self.obs_list = observations
        self.obs = {o.channel: o for o in observations}
        self.available = frozenset(o.channel for o in observations if o.available)

    def _select_current(self) -> int | None:
        """The node's standing channel choice under the active arm."""
        if self.p.swarm_enabled:
            if not self.weights:
                return None
            return swarm.select_master(self.weights)
        stages = self.stages()
        if not stages:
            return None
        best = max(stages.values())
        if self.master in stages and stages[self.master] == best:
            return self.master
        return min(ch for ch, s in stages.items() if s == best)

    def _choice_or(self, fallback: int) -> int:
        choice = self._select_current()
        return fallback if choice is None else choice

    def _absorb_pheromone(self, hello: HelloMessage):
        if not self.p.swarm_enabled or not self.weights:
            return
        self.weights = swarm.apply_hello(self.weights, hello, self.obs_list,
                                         self.p.reward)
        if self.role is Role.SCANNING and self.join_target is None:
            self.master = swarm.select_master(self.weights)

    # -- lifecycle --

    def activate(self, tick: int, ctx):
        self.role = Role.SCANNING
        self.apply_observations(ctx.sense(self))
        self._restart_scan(None, tick)

    def _restart_scan(self, first_channel: int | None, tick: int):
        """(Re-)enter scanning; with no channels the node idles dormant."""
        self.role = Role.SCANNING
        self.head_id = None
        self.slot = None
        self.sched = None
        self.frame_start = None
        self.cluster = None
        self.have_beacon = False
        self.beacons_missed = 0
        self.member_grace = None
        self.join_target = None
        self.join_tx_tick = None
        self.join_attempts = 0
        self.join_deadline = None
        self.exch_tx_tick = None
        self.exch_done = set()
        self.offscan_ch = None
        self.lock = None
        if not self.available:
            self.scan = None
            self.master = None
            self.weights = {}
            return
        if self.p.swarm_enabled:
            if self.weights:
                # prune channels that are gone; alpha 0 keeps the mix as-is
                self.weights = swarm.refresh_from_sensing(self.weights,
                                                          self.obs_list, 0.0)
            else:
                self.weights = swarm.initial_weights(self.obs_list)
        self.scan = start_scan(self.obs_list, first_channel)
        self.scan.interval_remaining = self.p.scan_interval_ticks
        self.master = (self.scan.current if first_channel is not None
                       else self._choice_or(self.scan.current))

    def step(self, tick: int, ctx):
        if self.role is None:
            if tick < self.start_tick:
                self.listen = None
                return
            self.activate(tick, ctx)
        if self.role is Role.SCANNING:
            self._step_scan(tick, ctx)
        elif self.role is Role.HEAD:
            self._step_head(tick, ctx)
        else:
            self._step_member(tick, ctx)

    # -- sensing --

    def _do_sensing(self, tick: int, ctx) -> bool:
        """Refresh observations/weights; returns False when the node had to
        abandon its current role (master lost or no channels left)."""
        self.apply_observations(ctx.sense(self))
        if not self.available:
            self._lose_channels(tick, ctx)
            return False
        if self.p.swarm_enabled:
            self.weights = swarm.refresh_from_sensing(self.weights, self.obs_list,
                                                      self.p.alpha)
        if self.master not in self.available and self.role is not Role.SCANNING:
            new = self._select_current()
            self._leave_for(new, tick, ctx)
            return False
        return True

    def _lose_channels(self, tick: int, ctx):
        old = self.master
        if self.role is Role.HEAD:
            ctx.drop_cluster(self.id)
        ctx.cancel_reform(self)
        if old is not None:
            ctx.log(tick, "master-change", node=self.id, old=old, new=-1,
                    role=self.role.value)
        self.weights = {}
        self._restart_scan(None, tick)

    def _leave_for(self, new_master: int | None, tick: int, ctx):
        """Leave the cluster (dissolving it when head) and rescan at the new
        standing choice."""
        old = self.master
        role = self.role.value
        if self.role is Role.HEAD:
            ctx.drop_cluster(self.id)
        ctx.cancel_reform(self)
        if new_master is not None and new_master != old:
            ctx.log(tick, "master-change", node=self.id, old=old,
                    new=new_master, role=role)
        self._restart_scan(new_master, tick)

    # -- scanning ----------------------------------------------------------------

    def _step_scan(self, tick: int, ctx):
        if self.scan is None:                      # dormant: nothing available
            self.listen = None
            self.apply_observations(ctx.sense(self))
            if self.available:
                self._restart_scan(None, tick)
            return
        s = self.scan
        if self.join_tx_tick == tick and self.join_target is not None:
            ctx.transmit(self, s.current, JoinRequest(self.id, self.join_target))
            self.listen = None
        elif self.exch_tx_tick == tick:
            hello = emit_hello(self.id, self.master, self.obs_list, self.table)
            ctx.transmit(self, s.current, HelloFrame(hello))
            self.listen = None
            self.exch_tx_tick = None
        else:
            self.listen = s.current
        s.interval_remaining -= 1
        if s.interval_remaining > 0:
            return
        if self.join_target is not None:
            # request in flight: allow the response window to play out
            if self.join_deadline is None:
                self.join_deadline = tick + 2 * self.p.frame_len
            if tick < self.join_deadline:
                return
            s.rejections.add(self.join_target)
            self.join_target = None
            self.join_tx_tick = None
            self.join_deadline = None
        self._advance_scan(tick, ctx)

    def _advance_scan(self, tick: int, ctx):
        s = self.scan
        self.exch_tx_tick = None
        self.apply_observations(ctx.sense(self))
        if not self.available:
            self._lose_channels(tick, ctx)
            return
        if self.p.swarm_enabled:
            if self.weights:
                self.weights = swarm.refresh_from_sensing(
                    self.weights, self.obs_list, self.p.alpha)
            else:
                self.weights = swarm.initial_weights(self.obs_list)
        outcome = finish_scan_interval(s, self.available, self.rng)
        if isinstance(outcome, FormCluster):
            self._form_cluster(outcome.channel, tick, ctx)
        elif isinstance(outcome, ContinueScan):
            s.visited.add(outcome.channel)
            s.current = outcome.channel
            s.interval_remaining = self.p.scan_interval_ticks
            s.heard_beacon = None
            s.heard_hellos = []
            self.master = self._choice_or(outcome.channel)
            self.listen = outcome.channel
        else:
            # a beacon was heard too late to act on during the interval; arm a
            # bounded wait so the next beacon of that cluster can be answered
            self.join_target = outcome.head
            self.join_attempts = 0
            self.join_tx_tick = None
            self.join_deadline = tick + 2 * self.p.frame_len
            self.master = outcome.channel

    def _form_cluster(self, channel: int, tick: int, ctx):
        self.role = Role.HEAD
        self.master = channel
        offset = self.rng.randrange(self.p.frame_len)
        self.cluster = ClusterRecord(
            head=self.id, master=channel, members={},
            max_slots=self.p.frame.max_slots, frame_offset=offset,
        )
        ctx.register_cluster(self.cluster)
        self.frame_start = _next_boundary(tick + 1, offset, self.p.frame_len)
        self.sched = None
        self.frames_in_cluster = 0
        self.heard_members = set()
        self.member_miss = {}
        self.join_queue = []
        self.offscan_seen = set()
        self.scan = None
        self.join_target = None
        self.join_tx_tick = None
        self.join_deadline = None
        self.exch_tx_tick = None
        self.listen = channel
        ctx.log(tick, "form", node=self.id, channel=channel)
        ctx.node_settled(self, tick)

    # -- head --------------------------------------------------------------------

    def _step_head(self, tick: int, ctx):
        if tick < self.frame_start:
            self.listen = self.master
            return
        rel = tick - self.frame_start
        if rel >= self.frame_gap:
            self.frame_start += self.frame_gap
            rel = tick - self.frame_start
        if rel == 0:
            self._head_frame_start(tick, ctx)
            return
        sched = self.sched
        if rel in sched.detect_ticks:
            self.listen = None
            if rel == sched.first_detect:
                self._do_sensing(tick, ctx)
            return
        if (not self.cluster.members and sched.data_start <= rel
                < sched.data_start + sched.data_len):
            if rel == sched.data_start:
                self.offscan_ch = select_offmaster_scan(
                    self.master, self.stages(), self.table,
                    self.offscan_seen, self.rng)
                if self.offscan_ch is not None:
                    self.offscan_seen.add(self.offscan_ch)
            self.listen = self.offscan_ch if self.offscan_ch is not None else self.master
        else:
            self.listen = self.master
        if rel == self.p.frame_len - 1:
            self._frame_end(tick, ctx)

    def _head_frame_start(self, tick: int, ctx):
        c = self.cluster
        self.frames_in_cluster += 1
        self.offscan_ch = None
        # mini-slot upkeep from the frame that just ended
        for m in list(c.members):
            if m in self.heard_members:
                self.member_miss[m] = 0
            else:
                self.member_miss[m] = self.member_miss.get(m, 0) + 1
                if self.member_miss[m] >= self.p.neighbor_ttl_superframes:
                    del c.members[m]
                    del self.member_miss[m]
        self.heard_members = set()
        rejects = []
        if self.join_queue:
            self.join_queue.sort()
            _, first = self.join_queue[0]
            slot = handle_join_request(c, first)
            if slot is None:
                rejects.append(first)
            else:
                c.members[first] = slot
                self.member_miss[first] = 0
            self.join_queue = []
        if self.lock is not None and tick >= self.lock[1]:
            self.lock = None
        self.sched = build_superframe(self.p.frame, self.rng)
        self.frame_gap = self.p.frame_len
        if self.p.frame_jitter_max:
            self.frame_gap += self.rng.randrange(self.p.frame_jitter_max + 1)
        beacon = Beacon(
            head=self.id, master=self.master, frame_start=tick,
            gap=self.frame_gap,
            schedule=self.sched, members=tuple(sorted(c.members.items())),
            max_slots=c.max_slots, rejects=tuple(rejects),
            hello=emit_hello(self.id, self.master, self.obs_list, self.table),
        )
        ctx.transmit(self, self.master, beacon)
        self.listen = None

    # -- member ------------------------------------------------------------------

    def _step_member(self, tick: int, ctx):
        if self.sched is None:
            # freshly (re)assigned: wait for the first beacon on the master
            self.listen = self.master
            if self.member_grace is not None and tick >= self.member_grace:
                self._leave_for(self._select_current(), tick, ctx)
            return
        rel = tick - self.frame_start
        if rel >= self.frame_gap:
            self.frame_start += self.frame_gap
            self.frames_in_cluster += 1
            self.have_beacon = False
            self.offscan_ch = None
            rel = tick - self.frame_start
        if rel == 0:
            self.listen = self.master
            return
        if rel == 1 and not self.have_beacon:
            self.beacons_missed += 1
            if self.beacons_missed >= self.p.neighbor_ttl_superframes:
                self._leave_for(self._select_current(), tick, ctx)
                return
        if not self.have_beacon:
            self.listen = self.master
            if rel == self.p.frame_len - 1:
                self._frame_end(tick, ctx)
            return
        sched = self.sched
        if rel == sched.slot_tick(self.slot):
            hello = emit_hello(self.id, self.master, self.obs_list, self.table)
            ctx.transmit(self, self.master, HelloFrame(
                hello, cluster_head=self.head_id,
                pra_start=self.frame_start + sched.pra_start,
                pra_len=sched.pra_len))
            self.listen = None
        elif rel in sched.detect_ticks:
            self.listen = None
            if rel == sched.first_detect:
                if not self._do_sensing(tick, ctx):
                    return
        elif sched.data_start <= rel < sched.data_start + sched.data_len:
            if rel == sched.data_start:
                self.offscan_ch = select_offmaster_scan(
                    self.master, self.stages(), self.table,
                    self.offscan_seen, self.rng)
                if self.offscan_ch is not None:
                    self.offscan_seen.add(self.offscan_ch)
            self.listen = self.offscan_ch if self.offscan_ch is not None else self.master
        else:
            self.listen = self.master
        if rel == self.p.frame_len - 1:
            self._frame_end(tick, ctx)

    def _frame_end(self, tick: int, ctx):
        evict_stale(self.table, tick, self.p.ttl_ticks)
        new = self._select_current()
        if new is not None and new != self.master:
            self._leave_for(new, tick, ctx)
            return
        if (self.p.reform_enabled and self.frames_in_cluster >= 2
                and (self.frames_in_cluster + self.id) % self.p.reform_cadence == 0):
            ctx.try_reform(self, tick)

    # -- message handling ----------------------------------------------------------

    def on_message(self, msg, tick: int, ctx):
        if isinstance(msg, Beacon):
            self._on_beacon(msg, tick, ctx)
        elif isinstance(msg, HelloFrame):
            self._on_hello(msg, tick, ctx)
        elif isinstance(msg, JoinRequest):
            self._on_join_request(msg, tick)

    def _on_join_request(self, msg: JoinRequest, tick: int):
        if self.role is not Role.HEAD or msg.head != self.id or self.sched is None:
            return
        rel = tick - self.frame_start
        if self.sched.pra_start <= rel < self.sched.pra_start + self.sched.pra_len:
            self.join_queue.append((tick, msg.sender))

    def _on_hello(self, frame: HelloFrame, tick: int, ctx):
        hello = frame.hello
        upsert_from_hello(self.table, hello, tick,
                          cluster_head=frame.cluster_head, self_id=self.id)
        self._absorb_pheromone(hello)
        if self.role is Role.HEAD and hello.sender in self.cluster.members:
            self.heard_members.add(hello.sender)
        if self.role is Role.SCANNING and self.scan is not None:
            self.scan.heard_hellos.append(hello)
            if (frame.cluster_head is not None and frame.pra_start is not None
                    and frame.cluster_head not in self.exch_done
                    and self.exch_tx_tick is None):
                t0 = frame.pra_start + self.rng.randrange(frame.pra_len)
                if t0 > tick and t0 != self.join_tx_tick:
                    self.exch_tx_tick = t0
                    self.exch_done.add(frame.cluster_head)

    def _on_beacon(self, b: Beacon, tick: int, ctx):
        upsert_from_hello(self.table, b.hello, tick, cluster_head=b.head,
                          self_id=self.id)
        self._absorb_pheromone(b.hello)
        if self.role is Role.SCANNING:
            self._scan_beacon(b, tick, ctx)
        elif self.is_member() and b.head == self.head_id:
            self._sync_with_beacon(b, tick, ctx)

    def _scan_beacon(self, b: Beacon, tick: int, ctx):
        if self.scan is None:
            return
        s = self.scan
        if s.heard_beacon is None:
            s.heard_beacon = BeaconSummary(head=b.head, master=b.master,
                                           frame_start=b.frame_start)
        members = dict(b.members)
        if self.id in members and b.head == self.join_target:
            self._complete_join(b, members[self.id], tick, ctx)
            return
        if self.id in b.rejects and b.head == self.join_target:
            s.rejections.add(b.head)
            self.join_target = None
            self.join_tx_tick = None
            self.join_deadline = None
            self.master = self._choice_or(s.current)
            ctx.log(tick, "reject", node=self.id, head=b.head, channel=b.master)
            return
        if b.head in s.rejections:
            return
        if self.join_target is None:
            self.join_target = b.head
            self.join_attempts = 1
            self.master = b.master
            self.join_tx_tick = self._pra_backoff(b, tick)
        elif self.join_target == b.head and (self.join_tx_tick is None
                                             or self.join_tx_tick < tick):
            if self.join_attempts >= self.p.join_attempt_limit:
                s.rejections.add(b.head)
                self.join_target = None
                self.join_deadline = None
                self.master = self._choice_or(s.current)
            else:
                self.join_attempts += 1
                self.join_tx_tick = self._pra_backoff(b, tick)

    def _pra_backoff(self, b: Beacon, tick: int) -> int:
        sched = b.schedule
        return b.frame_start + sched.pra_start + self.rng.randrange(sched.pra_len)

    def _complete_join(self, b: Beacon, slot: int, tick: int, ctx):
        self.role = Role.ORDINARY
        self.head_id = b.head
        self.slot = slot
        self.master = b.master
        self.sched = b.schedule
        self.frame_start = b.frame_start
        self.frame_gap = b.gap
        self.have_beacon = True
        self.beacons_missed = 0
        self.frames_in_cluster = 0
        self.offscan_seen = set()
        self.member_grace = None
        self.scan = None
        self.join_target = None
        self.join_tx_tick = None
        self.join_deadline = None
        self.exch_tx_tick = None
        ctx.log(tick, "join", node=self.id, head=b.head, channel=b.master,
                slot=slot)
        ctx.node_settled(self, tick)

    def _sync_with_beacon(self, b: Beacon, tick: int, ctx):
        members = dict(b.members)
        if self.id not in members:
            new = self._select_current()
            self._leave_for(new, tick, ctx)
            return
        self.slot = members[self.id]
        self.sched = b.schedule
        self.frame_start = b.frame_start
        self.frame_gap = b.gap
        self.have_beacon = True
        self.beacons_missed = 0
        self.member_grace = None


def _next_boundary(tick: int, offset: int, frame_len: int) -> int:
    """Smallest t >= tick with t % frame_len == offset."""
    r = (offset - tick) % frame_len
    return tick + r
