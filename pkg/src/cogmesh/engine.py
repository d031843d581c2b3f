"""Deterministic discrete-time world.

Per tick: the radio environment advances, every node's state machine steps in
id order (scheduling its transmissions and its listening channel), messages
are delivered under the channel/tuning/collision rules, and metrics are
sampled on a fixed period. All randomness flows from one 64-bit seed through
named substreams, so a (config, seed) pair replays bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields as dc_fields
from random import Random

from cogmesh import kernels, radio
from cogmesh.protocol import (
    MEMBER_ROLES,
    ClusterRecord,
    Node,
    ProtocolParams,
    Role,
    SuperframeParams,
    select_gateways,
    _next_boundary,
)
from cogmesh.radio import MarkovActivity, PeriodicActivity, PrimaryUser
from cogmesh.reformation import Negotiation, build_local_graph, greedy_mds, plan_is_feasible
from cogmesh.swarm import RewardParams


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class SimulationInvariantError(AssertionError):
    pass


@dataclass
class ScenarioConfig:
    area_width: float = 1000.0
    area_height: float = 1000.0
    su_count: int = 20
    pu_count: int = 0
    channel_count: int = 8
    comm_range: float = 250.0
    seed: int = 1
    duration_ticks: int = 2000
    swarm_enabled: bool = True
    reward_a: float = 1.0
    reward_b: float = math.pi / 2
    reward_c: float = math.pi
    alpha: float = 0.1
    quant_stages: int = 4
    q_max: float = 1.0
    pathloss_exponent: float = 2.0
    sensing_window_ticks: int = 1
    pu_model: str = "periodic"
    pu_period_ticks: int = 500
    pu_duty: float = 1.0
    pu_hop: bool = False
    pu_p_on: float = 0.2
    pu_p_off: float = 0.1
    pu_protection_radius: float = 150.0
    pu_power: float = 1.0
    beacon_ticks: int = 1
    max_slots: int = 8
    data_ticks: int = 8
    intra_ra_ticks: int = 2
    public_ra_ticks: int = 4
    detect_periods: int = 1
    detect_ticks: int = 2
    max_superframe_ticks: int = 32
    frame_jitter_max: int = 2
    scan_interval_ticks: int = 33
    metrics_period: int = 25
    reform_enabled: bool = True
    reform_cadence: int = 5
    neighbor_ttl_superframes: int = 3
    startup_spread_ticks: int = 100

    def validate(self):
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(key, msg)

        need(self.area_width > 0, "area_width", "must be > 0")
        need(self.area_height > 0, "area_height", "must be > 0")
        need(self.su_count >= 0, "su_count", "must be >= 0")
        need(self.pu_count >= 0, "pu_count", "must be >= 0")
        need(self.channel_count >= 1, "channel_count", "must be >= 1")
        need(self.comm_range > 0, "comm_range", "must be > 0")
        need(self.duration_ticks >= 1, "duration_ticks", "must be >= 1")
        need(0.0 <= self.alpha <= 1.0, "alpha", "must be in [0, 1]")
        need(self.quant_stages >= 2, "quant_stages", "must be >= 2")
        need(self.q_max > 0, "q_max", "must be > 0")
        need(self.pathloss_exponent > 0, "pathloss_exponent", "must be > 0")
        need(self.sensing_window_ticks >= 1, "sensing_window_ticks", "must be >= 1")
        need(self.pu_model in ("periodic", "markov"), "pu_model",
             "must be 'periodic' or 'markov'")
        need(self.pu_period_ticks >= 1, "pu_period_ticks", "must be >= 1")
        need(0.0 <= self.pu_duty <= 1.0, "pu_duty", "must be in [0, 1]")
        need(0.0 <= self.pu_p_on <= 1.0, "pu_p_on", "must be in [0, 1]")
        need(0.0 <= self.pu_p_off <= 1.0, "pu_p_off", "must be in [0, 1]")
        need(self.pu_protection_radius > 0, "pu_protection_radius", "must be > 0")
        need(self.pu_power >= 0, "pu_power", "must be >= 0")
        need(self.metrics_period >= 1, "metrics_period", "must be >= 1")
        need(self.reform_cadence >= 1, "reform_cadence", "must be >= 1")
        need(self.neighbor_ttl_superframes >= 1, "neighbor_ttl_superframes",
             "must be >= 1")
        need(self.startup_spread_ticks >= 0, "startup_spread_ticks", "must be >= 0")
        try:
            RewardParams(self.reward_a, self.reward_b, self.reward_c)
        except ValueError as exc:
            raise ConfigError("reward_a/reward_b/reward_c", str(exc)) from exc
        need(self.frame_jitter_max >= 0, "frame_jitter_max", "must be >= 0")
        need(self.scan_interval_ticks > self.max_superframe_ticks,
             "scan_interval_ticks", "must exceed max_superframe_ticks")
        try:
            self.protocol_params().validate()
        except ValueError as exc:
            raise ConfigError("superframe", str(exc)) from exc

    def superframe_params(self) -> SuperframeParams:
        return SuperframeParams(
            beacon_ticks=self.beacon_ticks, max_slots=self.max_slots,
            data_ticks=self.data_ticks, intra_ra_ticks=self.intra_ra_ticks,
            public_ra_ticks=self.public_ra_ticks,
            detect_periods=self.detect_periods, detect_ticks=self.detect_ticks,
            max_superframe_ticks=self.max_superframe_ticks,
        )

    def protocol_params(self) -> ProtocolParams:
        return ProtocolParams(
            frame=self.superframe_params(),
            scan_interval_ticks=self.scan_interval_ticks,
            neighbor_ttl_superframes=self.neighbor_ttl_superframes,
            alpha=self.alpha,
            reward=RewardParams(self.reward_a, self.reward_b, self.reward_c),
            swarm_enabled=self.swarm_enabled,
            sensing_window_ticks=self.sensing_window_ticks,
            reform_enabled=self.reform_enabled,
            reform_cadence=self.reform_cadence,
            frame_jitter_max=self.frame_jitter_max,
        )


_FIELD_TYPES = {f.name: f.type for f in dc_fields(ScenarioConfig)}
_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def config_from_mapping(mapping: dict, source: str = "config") -> ScenarioConfig:
    """Build a config from key -> value (strings accepted), rejecting unknown
    keys and out-of-range values with diagnostics that name the key."""
    cfg = ScenarioConfig()
    for key, value in mapping.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(key, f"unknown key in {source}")
        ftype = _FIELD_TYPES[key]
        try:
            setattr(cfg, key, _coerce(value, ftype))
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"bad value {value!r}: {exc}") from exc
    cfg.validate()
    return cfg


def _coerce(value, ftype):
    if ftype in ("bool", bool):
        if isinstance(value, bool):
            return value
        word = str(value).strip().lower()
        if word in _BOOL_WORDS:
            return _BOOL_WORDS[word]
        raise ValueError("expected a boolean")
    if ftype in ("int", int):
        if isinstance(value, bool):
            raise ValueError("expected an integer")
        if isinstance(value, int):
            return value
        return int(str(value).strip(), 0)
    if ftype in ("float", float):
        return float(value)
    return str(value).strip()


@dataclass(frozen=True)
class MetricsSample:
    tick: int
    counts: tuple[int, ...]     # SUs per channel by current master
    stddev: float
    largest_cloud: int
    cluster_count: int


@dataclass(frozen=True)
class Event:
    tick: int
    kind: str
    fields: tuple[tuple[str, object], ...]

    def line(self) -> str:
        parts = " ".join(f"{k}={v}" for k, v in self.fields)
        return f"tick={self.tick} event={self.kind} {parts}".rstrip()

    def get(self, key, default=None):
        for k, v in self.fields:
            if k == key:
                return v
        return default


@dataclass
class RunResult:
    config: ScenarioConfig
    samples: list
    events: list
    start_ticks: dict
    settle_ticks: dict
    gateway_latencies: list    # (head_a, head_b, discovered_tick, linked_tick)
    final_cluster_count: int


def compute_metrics(tick: int, masters: list, neighbors: list,
                    channel_count: int, cluster_count: int) -> MetricsSample:
    """Snapshot: per-channel master counts, their population standard
    deviation over ALL channels, and the largest control cloud (connected
    component over links whose endpoints share a master channel)."""
    counts = [0] * channel_count
    for m in masters:
        if m >= 0:
            counts[m] += 1
    mean = sum(counts) / channel_count
    var = sum((c - mean) ** 2 for c in counts) / channel_count
    largest = kernels.largest_same_master_component(neighbors, masters)
    return MetricsSample(tick=tick, counts=tuple(counts), stddev=math.sqrt(var),
                         largest_cloud=largest, cluster_count=cluster_count)


def deliver_messages(transmissions: list, listening: dict, adjacency: dict):
    """Resolve one tick of the ether.

    A transmission on channel c reaches exactly the in-range nodes tuned to c
    (transmitters must be mapped to None in `listening`); two or more
    same-channel arrivals at one receiver collide and are all dropped there.
    Returns (delivered, dropped) as (receiver, message) lists.
    """
    arrivals = {}
    for sender, channel, _msg in transmissions:
        for r in adjacency[sender]:
            if listening.get(r) == channel:
                key = (r, channel)
                arrivals[key] = arrivals.get(key, 0) + 1
    delivered = []
    dropped = []
    for sender, channel, msg in transmissions:
        for r in adjacency[sender]:
            if listening.get(r) == channel:
                if arrivals[(r, channel)] == 1:
                    delivered.append((r, msg))
                else:
                    dropped.append((r, msg))
    return delivered, dropped


class World:
    """One simulation instance; also the ctx handed to nodes."""

    def __init__(self, config: ScenarioConfig, su_positions=None,
                 su_start_ticks=None, pus=None, validate=True):
        config.validate()
        self.cfg = config
        self.params = config.protocol_params()
        self.frame_len = self.params.frame_len
        self.validate_samples = validate

        base = Random(config.seed)
        self.env_rng = Random(base.getrandbits(64))
        topo_rng = Random(base.getrandbits(64))
        pu_rng = Random(base.getrandbits(64))
        node_seeds = [base.getrandbits(64) for _ in range(config.su_count)]

        if su_positions is None:
            su_positions = [
                (topo_rng.uniform(0.0, config.area_width),
                 topo_rng.uniform(0.0, config.area_height))
                for _ in range(config.su_count)
            ]
        start_ticks = [topo_rng.randrange(config.startup_spread_ticks + 1)
                       for _ in range(config.su_count)]
        if su_start_ticks is not None:
            start_ticks = list(su_start_ticks)

        if pus is None:
            pus = []
            for i in range(config.pu_count):
                pos = (pu_rng.uniform(0.0, config.area_width),
                       pu_rng.uniform(0.0, config.area_height))
                channel = pu_rng.randrange(config.channel_count)
                if config.pu_model == "periodic":
                    model = PeriodicActivity(period_ticks=config.pu_period_ticks,
                                             duty_fraction=config.pu_duty,
                                             hop=config.pu_hop)
                else:
                    model = MarkovActivity(p_on=config.pu_p_on,
                                           p_off=config.pu_p_off)
                pus.append(PrimaryUser(id=i, pos=pos, channel=channel, model=model,
                                       protection_radius=config.pu_protection_radius,
                                       interference_power=config.pu_power))
        self.env = radio.make_environment(
            channel_count=config.channel_count, pus=pus,
            pathloss_exponent=config.pathloss_exponent, q_max=config.q_max,
            quant_stages=config.quant_stages,
            history_ticks=config.sensing_window_ticks,
        )

        self.nodes = [
            Node(i, su_positions[i], Random(node_seeds[i]), self.params,
                 start_tick=start_ticks[i])
            for i in range(config.su_count)
        ]
        r2 = config.comm_range * config.comm_range
        self.adjacency = {}
        self.adj_sets = {}
        for a in self.nodes:
            near = []
            ax, ay = a.pos
            for b in self.nodes:
                if a.id == b.id:
                    continue
                bx, by = b.pos
                if (ax - bx) ** 2 + (ay - by) ** 2 <= r2:
                    near.append(b.id)
            self.adjacency[a.id] = near
            self.adj_sets[a.id] = frozenset(near)
        self.neighbor_lists = [self.adjacency[i] for i in range(config.su_count)]

        self.tick = 0
        self.clusters: dict[int, ClusterRecord] = {}
        self.events: list[Event] = []
        self.samples: list[MetricsSample] = []
        self.txs: list = []
        self.transmitting: set = set()
        self.start_ticks = {n.id: n.start_tick for n in self.nodes}
        self.settle_ticks: dict = {}
        self.first_mutual: dict = {}
        self.gateway_latencies: list = []
        self.negotiations: list[Negotiation] = []
        self.neg_by_working: dict = {}
        self.reform_inbox: list = []
        self.pending_commits: list = []
        self._seq = 0

    # -- ctx services used by nodes --

    def sense(self, node: Node):
        return radio.sense(self.env, node.pos, self.cfg.sensing_window_ticks)

    def transmit(self, node: Node, channel: int, msg):
        self.txs.append((node.id, channel, msg))
        self.transmitting.add(node.id)

    def log(self, tick: int, kind: str, **fields):
        self.events.append(Event(tick=tick, kind=kind, fields=tuple(fields.items())))

    def register_cluster(self, record: ClusterRecord):
        self.clusters[record.head] = record

    def drop_cluster(self, head: int):
        self.clusters.pop(head, None)

    def node_settled(self, node: Node, tick: int):
        self.settle_ticks.setdefault(node.id, tick)

    def adjacent(self, a: int, b: int) -> bool:
        return b in self.adj_sets[a]

    # -- main loop --

    def run(self) -> RunResult:
        cfg = self.cfg
        have_pus = bool(self.env.pus)
        for t in range(cfg.duration_ticks):
            self.tick = t
            if have_pus:
                self.env = radio.step_environment(self.env, self.env_rng)
            if self.reform_inbox or self.negotiations:
                self._reform_timers(t)
            self.txs = []
            self.transmitting = set()
            for node in self.nodes:
                node.step(t, self)
            if self.txs:
                listening = {
                    n.id: (None if n.id in self.transmitting else n.listen)
                    for n in self.nodes
                }
                delivered, _ = deliver_messages(self.txs, listening, self.adjacency)
                for receiver, msg in delivered:
                    self.nodes[receiver].on_message(msg, t, self)
            if t > 0 and t % self.frame_len == 0:
                self._gateway_maintenance(t)
            if (t + 1) % cfg.metrics_period == 0:
                self._sample(t + 1)
        return RunResult(
            config=cfg, samples=self.samples, events=self.events,
            start_ticks=self.start_ticks, settle_ticks=self.settle_ticks,
            gateway_latencies=self.gateway_latencies,
            final_cluster_count=len(self.clusters),
        )

    def _sample(self, tick: int):
        masters = [(-1 if n.master is None else n.master) for n in self.nodes]
        sample = compute_metrics(tick, masters, self.neighbor_lists,
                                 self.cfg.channel_count, len(self.clusters))
        self.samples.append(sample)
        if self.validate_samples:
            self._validate(tick)

    def _validate(self, tick: int):
        """Cluster-record invariants, checked at every sample.

        A member that silently left keeps its stale record entry until the
        head times it out (the mini-slot TTL rule), so node-vs-record
        consistency is enforced for mutually consistent pairs; slot layout,
        adjacency, and the heads' own state are enforced unconditionally.
        """
        for head in self.clusters:
            rec = self.clusters[head]
            hn = self.nodes[head]
            if hn.role is not Role.HEAD or hn.cluster is not rec:
                raise SimulationInvariantError(
                    f"t={tick}: node {head} is not the head of its record")
            if hn.master != rec.master:
                raise SimulationInvariantError(
                    f"t={tick}: head {head} master disagrees with record")
            if len(rec.members) > rec.max_slots:
                raise SimulationInvariantError(
                    f"t={tick}: cluster {head} exceeds its mini-slot budget")
            slots = sorted(rec.members.values())
            if len(set(slots)) != len(slots) or (slots and not (
                    0 <= slots[0] and slots[-1] < rec.max_slots)):
                raise SimulationInvariantError(
                    f"t={tick}: cluster {head} has inconsistent mini-slots")
            for m in rec.members:
                if m == head:
                    raise SimulationInvariantError(
                        f"t={tick}: head {head} lists itself as a member")
                if not self.adjacent(m, head):
                    raise SimulationInvariantError(
                        f"t={tick}: member {m} out of range of head {head}")
                mn = self.nodes[m]
                if mn.role in MEMBER_ROLES and mn.head_id == head \
                        and mn.master != rec.master:
                    raise SimulationInvariantError(
                        f"t={tick}: member {m} master disagrees with cluster")
        for n in self.nodes:
            if n.role in MEMBER_ROLES and n.head_id is None:
                raise SimulationInvariantError(
                    f"t={tick}: member {n.id} has no cluster")
            if n.role is not None and n.available and n.master is None:
                raise SimulationInvariantError(
                    f"t={tick}: node {n.id} has channels but no master choice")

    # -- gateways --

    def _cluster_nodes(self, rec: ClusterRecord):
        return [rec.head] + sorted(rec.members)

    def _gateway_maintenance(self, tick: int):
        heads = sorted(self.clusters)
        alive = set(heads)
        tables = {n.id: n.table for n in self.nodes}
        for head in heads:
            rec = self.clusters[head]
            for other, link in list(rec.neighbor_clusters.items()):
                if other not in alive or not self._link_valid(link):
                    del rec.neighbor_clusters[other]
                    self.first_mutual.pop((min(head, other), max(head, other)), None)
        for key in list(self.first_mutual):
            if key[0] not in alive or key[1] not in alive:
                del self.first_mutual[key]
        for i, ha in enumerate(heads):
            ra = self.clusters[ha]
            nodes_a = self._cluster_nodes(ra)
            ids_a = set(nodes_a)
            for hb in heads[i + 1:]:
                rb = self.clusters[hb]
                if hb in ra.neighbor_clusters:
                    continue
                nodes_b = self._cluster_nodes(rb)
                ids_b = set(nodes_b)
                # actionable discovery: some cross pair is in a table at 1 hop
                # (which also implies the pair is in radio range)
                discovered = any(
                    nid in ids_b and e.hops == 1
                    for x in nodes_a for nid, e in tables[x].items()
                ) or any(
                    nid in ids_a and e.hops == 1
                    for x in nodes_b for nid, e in tables[x].items()
                )
                if not discovered:
                    continue
                self.first_mutual.setdefault((ha, hb), tick)
                link = select_gateways(ra, rb, tables, self.adjacent)
                if link is None:
                    continue
                ra.neighbor_clusters[hb] = link
                rb.neighbor_clusters[ha] = link
                self.gateway_latencies.append(
                    (ha, hb, self.first_mutual.pop((ha, hb)), tick))
                self.log(tick, "gateway", cluster_a=ha, cluster_b=hb,
                         nodes=":".join(str(x) for x in link.nodes))
        self._refresh_gateway_roles()

    def _link_valid(self, link) -> bool:
        ra = self.clusters.get(link.cluster_a)
        rb = self.clusters.get(link.cluster_b)
        if ra is None or rb is None:
            return False
        pool = {ra.head, rb.head} | set(ra.members) | set(rb.members)
        if link.node_b is None:
            x = link.node_a
            return (x in pool and x not in (ra.head, rb.head)
                    and self.adjacent(x, ra.head) and self.adjacent(x, rb.head))
        a, b = link.node_a, link.node_b
        in_a = a == ra.head or a in ra.members
        in_b = b == rb.head or b in rb.members
        return in_a and in_b and self.adjacent(a, b)

    def _refresh_gateway_roles(self):
        gateway_nodes = set()
        for rec in self.clusters.values():
            for link in rec.neighbor_clusters.values():
                gateway_nodes.update(link.nodes)
        for n in self.nodes:
            if n.role is Role.ORDINARY and n.id in gateway_nodes:
                n.role = Role.GATEWAY
            elif n.role is Role.GATEWAY and n.id not in gateway_nodes:
                n.role = Role.ORDINARY

    # -- reformation --

    def _host_record(self, node: Node):
        if node.role is Role.HEAD:
            return self.clusters.get(node.id)
        if node.role in MEMBER_ROLES and node.head_id is not None:
            rec = self.clusters.get(node.head_id)
            if rec is not None and node.id in rec.members:
                return rec
        return None

    def try_reform(self, node: Node, tick: int):
        """Working-node entry point, called on the node's reform cadence."""
        if node.id in self.neg_by_working or node.lock is not None:
            return
        host = self._host_record(node)
        if host is None:
            return
        cands = sorted({
            e.cluster_head for e in node.table.values()
            if e.hops == 1 and e.cluster_head is not None
        })
        records = [host]
        for h in cands:
            rec = self.clusters.get(h)
            if rec is None or rec is host or rec.master != host.master:
                continue
            neighbor_ids = {rec.head} | set(rec.members)
            if any(e.id in neighbor_ids and e.hops == 1
                   for e in node.table.values()):
                records.append(rec)
        if len(records) == 1 and len(host.members) == 0:
            return
        availability = {}
        for rec in records:
            for nid in [rec.head] + sorted(rec.members):
                availability[nid] = self.nodes[nid].available
        tables = {nid: self.nodes[nid].table for nid in availability}
        graph = build_local_graph(node.id, records, tables, availability)
        plan = greedy_mds(graph, node.id, max_members=self.cfg.max_slots)
        if plan.gain < 1 or not plan_is_feasible(plan, graph):
            return
        neg = Negotiation(
            plan_id=(node.id, tick), working=node.id, plan=plan,
            affected={rec.head: frozenset({rec.head} | set(rec.members))
                      for rec in records},
            deadline=tick + 2 * self.frame_len,
        )
        self.log(tick, "reform", working=node.id, status="proposed",
                 gain=plan.gain)
        self.negotiations.append(neg)
        self.neg_by_working[node.id] = neg
        for head in sorted(neg.affected):
            if head == node.id:
                neg.acks.add(head)
                node.lock = (neg.plan_id, tick + 6 * self.frame_len)
                continue
            when = self._next_pra_start(self.clusters[head], tick)
            self._push_reform(when, head, ("req", neg))
        if neg.all_acked():
            self._schedule_commit(neg, tick)

    def cancel_reform(self, node: Node):
        neg = self.neg_by_working.get(node.id)
        if neg is not None and not neg.done:
            self._cancel(neg, self.tick)

    def _push_reform(self, when: int, target: int, payload):
        self._seq += 1
        self.reform_inbox.append((when, self._seq, target, payload))

    def _next_pra_start(self, rec: ClusterRecord, tick: int) -> int:
        frame_start = _next_boundary(tick + 1, rec.frame_offset, self.frame_len)
        pra = frame_start + self.frame_len - self.cfg.public_ra_ticks
        if pra <= tick:
            pra += self.frame_len
        return pra

    def _reform_timers(self, tick: int):
        if self.pending_commits:
            due = [neg for when, neg in self.pending_commits if when <= tick]
            self.pending_commits = [(when, neg) for when, neg in self.pending_commits
                                    if when > tick]
            for neg in due:
                self._apply_commit(neg, tick)
        if self.reform_inbox:
            due = sorted(item for item in self.reform_inbox if item[0] <= tick)
            self.reform_inbox = [item for item in self.reform_inbox if item[0] > tick]
            for _, _, target, payload in due:
                self._route_reform(target, payload, tick)
        for neg in self.negotiations:
            if not neg.done and neg.commit_tick is None and tick > neg.deadline:
                self._cancel(neg, tick)
        self.negotiations = [n for n in self.negotiations if not n.done]

    def _route_reform(self, target: int, payload, tick: int):
        kind, neg = payload[0], payload[1]
        if neg.done:
            return
        node = self.nodes[target]
        if kind == "req":
            if node.role is not Role.HEAD or target not in self.clusters:
                return                              # silence -> timeout
            if node.lock is not None or target in self.neg_by_working:
                return                              # busy head stays silent
            rec = self.clusters[target]
            current = frozenset({target} | set(rec.members))
            # the decision goes back out in the tail of the same public RA
            reply_at = tick + 1
            if current != neg.affected.get(target):
                self._push_reform(reply_at, neg.working, ("deny", neg, target))
                return
            node.lock = (neg.plan_id, tick + 6 * self.frame_len)
            self._push_reform(reply_at, neg.working, ("ack", neg, target))
        elif kind == "ack":
            head = payload[2]
            neg.acks.add(head)
            if neg.all_acked() and neg.commit_tick is None:
                self._schedule_commit(neg, tick)
        elif kind == "deny":
            self._cancel(neg, tick)

    def _schedule_commit(self, neg: Negotiation, tick: int):
        working = self.nodes[neg.working]
        host = self._host_record(working)
        if host is None:
            self._cancel(neg, tick)
            return
        neg.commit_tick = _next_boundary(tick + 1, host.frame_offset, self.frame_len)
        self.pending_commits.append((neg.commit_tick, neg))

    def _release_locks(self, neg: Negotiation):
        for head in neg.affected:
            node = self.nodes[head]
            if node.lock is not None and node.lock[0] == neg.plan_id:
                node.lock = None

    def _cancel(self, neg: Negotiation, tick: int):
        neg.done = True
        self._release_locks(neg)
        self.neg_by_working.pop(neg.working, None)
        self.log(tick, "reform", working=neg.working, status="cancelled",
                 gain=neg.plan.gain)

    def _commit_valid(self, neg: Negotiation) -> bool:
        for head, snapshot in neg.affected.items():
            rec = self.clusters.get(head)
            if rec is None or frozenset({head} | set(rec.members)) != snapshot:
                return False
        for head, master, members in neg.plan.clusters:
            if len(members) - 1 > self.cfg.max_slots:
                return False
            for m in members:
                node = self.nodes[m]
                if master not in node.available:
                    return False
                if m != head and not self.adjacent(m, head):
                    return False
                # a node that silently left an affected cluster (and may even
                # head its own by now) makes the plan stale; records keep such
                # members listed until the mini-slot TTL fires, so the check
                # has to look at the node's own state
                if node.role is Role.HEAD:
                    if m not in neg.affected:
                        return False
                elif node.role in MEMBER_ROLES:
                    if node.head_id not in neg.affected:
                        return False
                else:
                    return False
        return True

    def _apply_commit(self, neg: Negotiation, tick: int):
        if neg.done:
            return
        neg.done = True
        self._release_locks(neg)
        self.neg_by_working.pop(neg.working, None)
        if not self._commit_valid(neg):
            self.log(tick, "reform", working=neg.working, status="cancelled",
                     gain=neg.plan.gain)
            return
        pre = len(neg.affected)
        post = len(neg.plan.clusters)
        old_offsets = {}
        for head in neg.affected:
            old_offsets[head] = self.clusters[head].frame_offset
            del self.clusters[head]
        grace = tick + self.params.ttl_ticks
        for head, master, members in neg.plan.clusters:
            offset = old_offsets.get(head)
            if offset is None:
                offset = self.nodes[head].rng.randrange(self.frame_len)
            slot_map = {m: i for i, m in enumerate(sorted(m for m in members
                                                          if m != head))}
            rec = ClusterRecord(head=head, master=master, members=slot_map,
                                max_slots=self.cfg.max_slots, frame_offset=offset)
            self.clusters[head] = rec
            self._install_head(self.nodes[head], rec, tick)
            for m, slot in slot_map.items():
                self._install_member(self.nodes[m], head, master, slot, grace)
        for rec in self.clusters.values():
            for other in list(rec.neighbor_clusters):
                if other in neg.affected or rec.head in neg.affected:
                    del rec.neighbor_clusters[other]
        self._refresh_gateway_roles()
        self.log(tick, "reform", working=neg.working, status="committed",
                 gain=neg.plan.gain, pre=pre, post=post)

    def _install_head(self, node: Node, rec: ClusterRecord, tick: int):
        node.role = Role.HEAD
        node.master = rec.master
        node.cluster = rec
        node.head_id = None
        node.slot = None
        node.sched = None
        node.frame_start = _next_boundary(tick, rec.frame_offset, self.frame_len)
        node.frames_in_cluster = 0
        node.have_beacon = False
        node.beacons_missed = 0
        node.member_grace = None
        node.heard_members = set()
        node.member_miss = {m: 0 for m in rec.members}
        node.join_queue = []
        node.scan = None
        node.join_target = None
        node.join_tx_tick = None
        node.join_deadline = None
        node.exch_tx_tick = None
        node.offscan_seen = set()
        node.lock = None

    def _install_member(self, node: Node, head: int, master: int, slot: int,
                        grace: int):
        node.role = Role.ORDINARY
        node.master = master
        node.cluster = None
        node.head_id = head
        node.slot = slot
        node.sched = None
        node.frame_start = None
        node.frames_in_cluster = 0
        node.have_beacon = False
        node.beacons_missed = 0
        node.member_grace = grace
        node.scan = None
        node.join_target = None
        node.join_tx_tick = None
        node.join_deadline = None
        node.exch_tx_tick = None
        node.offscan_seen = set()
        node.lock = None


def run(config: ScenarioConfig, su_positions=None, validate=True) -> RunResult:
    """Run one scenario to completion; fully determined by (config, seed)."""
    return World(config, su_positions=su_positions, validate=validate).run()
