"""Scanning, joining, superframes, neighbor tables, and gateway selection."""

from random import Random

import pytest

from cogmesh.engine import ScenarioConfig, World
from cogmesh.protocol import (
    BEACON,
    DATA,
    DETECT,
    INTRA_RA,
    ND,
    PUBLIC_RA,
    BeaconSummary,
    ClusterRecord,
    ContinueScan,
    FormCluster,
    NeighborEntry,
    RequestJoin,
    Role,
    ScanState,
    SuperframeParams,
    build_superframe,
    emit_hello,
    evict_stale,
    finish_scan_interval,
    handle_join_request,
    select_gateways,
    select_offmaster_scan,
    start_scan,
    upsert_from_hello,
)
from cogmesh.radio import (
    ChannelObservation,
    PeriodicActivity,
    PrimaryUser,
)
from cogmesh.swarm import HelloMessage, NoAvailableChannels


def obs(channel, stage=3, available=True):
    return ChannelObservation(channel=channel, available=available,
                              q_raw=stage / 4, q_stage=stage)


def static_pu(pid, pos, channel, radius, power=0.01):
    return PrimaryUser(id=pid, pos=pos, channel=channel,
                       model=PeriodicActivity(10**9, 1.0),
                       protection_radius=radius, interference_power=power)


class TestSuperframe:
    def test_default_layout_totals_25_ticks(self):
        sched = build_superframe(SuperframeParams(), Random(0))
        assert sched.frame_len == 25
        lengths = {kind: 0 for kind, _, _ in sched.periods}
        for kind, _, length in sched.periods:
            lengths[kind] += length
        assert lengths == {BEACON: 1, ND: 8, DATA: 8, INTRA_RA: 2,
                           PUBLIC_RA: 4, DETECT: 2}

    def test_main_period_order_with_detect_between(self):
        for seed in range(20):
            sched = build_superframe(SuperframeParams(detect_periods=3),
                                     Random(seed))
            mains = [kind for kind, _, _ in sched.periods if kind != DETECT]
            assert mains == [BEACON, ND, DATA, INTRA_RA, PUBLIC_RA]
            # detection blocks sit strictly between the main periods
            assert sched.periods[0][0] == BEACON
            assert sched.periods[-1][0] == PUBLIC_RA
            assert sched.pra_start + sched.pra_len == sched.frame_len

    def test_single_mini_slot(self):
        params = SuperframeParams(max_slots=1)
        sched = build_superframe(params, Random(1))
        nd = [p for p in sched.periods if p[0] == ND]
        assert len(nd) == 1 and nd[0][2] == 1

    def test_detect_positions_reproducible_under_replay(self):
        a = [build_superframe(SuperframeParams(), Random(99)) for _ in range(5)]
        b = [build_superframe(SuperframeParams(), Random(99)) for _ in range(5)]
        assert a == b

    def test_oversized_frame_rejected(self):
        with pytest.raises(ValueError):
            SuperframeParams(data_ticks=20).validate()


class TestScanning:
    def test_starts_at_lowest_available(self):
        state = start_scan([obs(2), obs(0), obs(3)])
        assert state.current == 0
        assert state.visited == {0}

    def test_singleton_channel(self):
        assert start_scan([obs(5)]).current == 5

    def test_no_channels_raises(self):
        with pytest.raises(NoAvailableChannels):
            start_scan([obs(0, available=False)])

    def test_requested_start_channel(self):
        assert start_scan([obs(0), obs(2)], first_channel=2).current == 2
        # unavailable request falls back to the lowest channel
        assert start_scan([obs(0), obs(2)], first_channel=7).current == 0

    def test_case1_silence_forms_here(self):
        state = ScanState(visited={0}, current=0, interval_remaining=0)
        out = finish_scan_interval(state, {0, 1}, Random(0))
        assert out == FormCluster(channel=0)

    def test_case2_beacon_requests_join(self):
        state = ScanState(visited={0}, current=0, interval_remaining=0,
                          heard_beacon=BeaconSummary(head=9, master=0,
                                                     frame_start=10))
        out = finish_scan_interval(state, {0, 1}, Random(0))
        assert out == RequestJoin(head=9, channel=0)

    def test_case3_hellos_continue_to_next_channel(self):
        state = ScanState(visited={0}, current=0, interval_remaining=0,
                          heard_hellos=[HelloMessage(5, 0, ((0, 3),))])
        out = finish_scan_interval(state, {0, 1, 2}, Random(0))
        assert out == ContinueScan(channel=1)

    def test_rejected_beacon_moves_on(self):
        state = ScanState(visited={0}, current=0, interval_remaining=0,
                          heard_beacon=BeaconSummary(head=9, master=0,
                                                     frame_start=10),
                          rejections={9})
        out = finish_scan_interval(state, {0, 3}, Random(0))
        assert out == ContinueScan(channel=3)

    def test_all_visited_forms_on_random_available(self):
        state = ScanState(visited={0, 1, 2}, current=2, interval_remaining=0,
                          heard_hellos=[HelloMessage(5, 2, ((2, 3),))],
                          rejections={9})
        picks = {finish_scan_interval(state, {0, 1, 2}, Random(s)).channel
                 for s in range(40)}
        assert picks <= {0, 1, 2}
        assert len(picks) > 1


class TestJoinAdmission:
    def record(self, used_slots, max_slots=8):
        return ClusterRecord(head=0, master=0,
                             members={100 + i: s for i, s in enumerate(used_slots)},
                             max_slots=max_slots, frame_offset=0)

    def test_lowest_free_slot(self):
        assert handle_join_request(self.record([0, 1, 2]), 7) == 3

    def test_gap_is_reused(self):
        assert handle_join_request(self.record([0, 2, 3]), 7) == 1

    def test_full_cluster_rejects(self):
        assert handle_join_request(self.record([0, 1], max_slots=2), 7) is None

    def test_existing_member_gets_its_slot_back(self):
        rec = self.record([0, 1])
        assert handle_join_request(rec, 101) == 1


class TestNeighborTables:
    def test_one_and_two_hop_upserts(self):
        # B hears C's HELLO listing D: C becomes 1-hop, D 2-hop via C
        table = {}
        hello = HelloMessage(sender=2, master=0, channels=((0, 3), (1, 2)),
                             neighbor_list=((3, 0, (0, 1)),))
        upsert_from_hello(table, hello, tick=50, cluster_head=0, self_id=1)
        assert table[2].hops == 1 and table[2].channels == {0: 3, 1: 2}
        assert table[2].cluster_head == 0
        assert table[3].hops == 2 and table[3].relay == 2
        assert table[3].channels == {0: None, 1: None}

    def test_one_hop_dominates_two_hop(self):
        table = {}
        upsert_from_hello(table, HelloMessage(3, 0, ((0, 3),)), tick=10)
        upsert_from_hello(table, HelloMessage(2, 0, ((0, 3),),
                                              ((3, 0, (0,)),)), tick=20)
        assert table[3].hops == 1
        assert table[3].last_seen == 10

    def test_self_never_enters_own_table(self):
        table = {}
        upsert_from_hello(table, HelloMessage(2, 0, ((0, 3),),
                                              ((1, 0, (0,)),)),
                          tick=5, self_id=1)
        assert 1 not in table

    def test_stale_entries_evicted(self):
        table = {}
        upsert_from_hello(table, HelloMessage(2, 0, ((0, 3),)), tick=0)
        upsert_from_hello(table, HelloMessage(4, 0, ((0, 3),)), tick=70)
        evict_stale(table, tick=100, ttl_ticks=75)
        assert 2 not in table and 4 in table

    def test_emit_hello_contents(self):
        table = {}
        hello = emit_hello(1, 0, [obs(0), obs(1, stage=2)], table)
        assert hello.neighbor_list == ()
        assert hello.channels == ((0, 3), (1, 2))
        upsert_from_hello(table, HelloMessage(2, 1, ((1, 2),)), tick=0)
        upsert_from_hello(table, HelloMessage(9, 0, ((0, 1),),
                                              ((8, 0, (0,)),)), tick=0)
        hello = emit_hello(1, 0, [obs(0)], table)
        # only 1-hop entries are listed, sorted by id, with channel sets
        assert hello.neighbor_list == ((2, 1, (1,)), (9, 0, (0,)))


class TestOffMasterScan:
    def test_unscanned_two_hop_channel_first(self):
        table = {5: NeighborEntry(5, 2, 3, {3: None}, 0, relay=2)}
        ch = select_offmaster_scan(0, {0: 3, 1: 3, 3: 3}, table, set(), Random(0))
        assert ch == 3

    def test_visited_two_hop_channel_falls_through(self):
        table = {5: NeighborEntry(5, 2, 3, {3: None}, 0, relay=2)}
        picks = {select_offmaster_scan(0, {0: 3, 1: 3, 3: 3}, table, {3},
                                       Random(s)) for s in range(30)}
        assert 0 not in picks and picks <= {1, 3}

    def test_quality_proportional_sampling(self):
        rng = Random(123)
        counts = {1: 0, 2: 0}
        for _ in range(6000):
            counts[select_offmaster_scan(0, {0: 3, 1: 3, 2: 1}, {}, set(),
                                         rng)] += 1
        assert counts[1] / 6000 == pytest.approx(4 / 6, abs=0.03)
        assert counts[2] / 6000 == pytest.approx(2 / 6, abs=0.03)

    def test_master_only_returns_none(self):
        assert select_offmaster_scan(0, {0: 3}, {}, set(), Random(0)) is None


def entry(nid, hops, seen_by=None):
    return NeighborEntry(nid, hops, 0, {0: 3}, 0)


class TestSelectGateways:
    def setup_method(self):
        self.a = ClusterRecord(head=0, master=0, members={1: 0, 2: 1},
                               max_slots=8, frame_offset=0)
        self.b = ClusterRecord(head=10, master=1, members={11: 0, 12: 1},
                               max_slots=8, frame_offset=0)

    def adjacent_from(self, pairs):
        sym = {frozenset(p) for p in pairs}
        return lambda x, y: frozenset((x, y)) in sym

    def tables_from(self, one_hop):
        tables = {}
        for a, b in one_hop:
            tables.setdefault(a, {})[b] = entry(b, 1)
        return tables

    def test_single_gateway_one_hop_to_both_heads(self):
        # node 1 hears both heads directly and carries the link alone
        tables = self.tables_from([(1, 0), (1, 10)])
        link = select_gateways(self.a, self.b, tables,
                               self.adjacent_from([(1, 0), (1, 10)]))
        assert link.node_a == 1 and link.node_b is None

    def test_lowest_id_single_gateway_wins(self):
        tables = self.tables_from([(2, 0), (2, 10), (11, 0), (11, 10)])
        adjacent = self.adjacent_from([(2, 0), (2, 10), (11, 0), (11, 10)])
        link = select_gateways(self.a, self.b, tables, adjacent)
        assert link.node_a == 2 and link.node_b is None

    def test_pair_fallback_lowest_ids(self):
        tables = self.tables_from([(2, 12), (1, 11)])
        adjacent = self.adjacent_from([(2, 12), (1, 11)])
        link = select_gateways(self.a, self.b, tables, adjacent)
        assert (link.node_a, link.node_b) == (1, 11)

    def test_stale_table_without_physical_adjacency_is_ignored(self):
        tables = self.tables_from([(1, 0), (1, 10)])
        link = select_gateways(self.a, self.b, tables, lambda x, y: False)
        assert link is None

    def test_disjoint_clusters_have_no_link(self):
        assert select_gateways(self.a, self.b, {}, lambda x, y: True) is None


class TestFormationWalkthrough:
    """End-to-end neighbor-discovery and cluster-formation narrative:
    a first node self-elects, its neighbors join via the beacon, a node two
    hops out hears only member HELLOs and moves on, and the two clusters end
    up bridged by the one node that hears both heads. Runs with the swarm
    update disabled so master channels stay where formation put them (the
    narrative assumes the spectrum is static during formation)."""

    def build(self):
        positions = [
            (0.0, 0.0),      # 0 A  head of cluster on ch0
            (80.0, 0.0),     # 1 B  member of A, hears E: the gateway
            (40.0, 69.0),    # 2 C  member of A
            (-80.0, 0.0),    # 3 D  member of A, 2 hops from B
            (175.0, 0.0),    # 4 E  head of cluster on ch1
            (160.0, 55.0),   # 5 F  member of E, also hears B
            (255.0, 0.0),    # 6 G  member of E (ch0 blocked at G)
            (80.0, -90.0),   # 7 H  hears only B; ch1 blocked; joins I
            (80.0, -180.0),  # 8 I  forms on ch2 (ch0, ch1 blocked)
        ]
        starts = [0, 40, 80, 120, 200, 260, 300, 380, 340]
        pus = [
            static_pu(0, (255.0, -30.0), 0, 60.0),    # blocks ch0 at G
            static_pu(1, (80.0, -120.0), 1, 65.0),    # blocks ch1 at H and I
            static_pu(2, (80.0, -210.0), 0, 65.0),    # blocks ch0 at I
        ]
        # long neighbor TTL (the final-state assertions read the tables
        # directly), wide data window and jitter (cross-channel hearing
        # needs the clusters' frame phases to mix)
        cfg = ScenarioConfig(su_count=9, channel_count=3, comm_range=100.0,
                             area_width=600.0, area_height=600.0,
                             duration_ticks=1400, reform_enabled=False,
                             swarm_enabled=False, neighbor_ttl_superframes=50,
                             data_ticks=11, frame_jitter_max=4,
                             seed=5)
        world = World(cfg, su_positions=positions, su_start_ticks=starts,
                      pus=pus)
        return world, world.run()

    def test_first_node_forms_and_neighbors_join(self):
        world, res = self.build()
        forms = {e.get("node"): e for e in res.events if e.kind == "form"}
        joins = {e.get("node"): e for e in res.events if e.kind == "join"}
        assert forms[0].get("channel") == 0
        for nid in (1, 2, 3):
            assert joins[nid].get("head") == 0
            assert joins[nid].get("channel") == 0

    def test_one_and_two_hop_knowledge(self):
        world, res = self.build()
        b = world.nodes[1]
        assert b.table[2].hops == 1          # C heard directly
        assert b.table[3].hops == 2          # D via A's or C's neighbor list
        assert b.table[3].relay in (0, 2)

    def test_second_cluster_and_off_master_discovery(self):
        world, res = self.build()
        forms = {e.get("node"): e for e in res.events if e.kind == "form"}
        joins = {e.get("node"): e for e in res.events if e.kind == "join"}
        assert forms[4].get("channel") == 1
        assert joins[5].get("head") == 4
        assert joins[6].get("head") == 4
        b = world.nodes[1]
        assert b.table[4].hops == 1          # E found by off-master listening
        assert b.table[5].hops == 1
        assert b.table[6].hops == 2          # G relayed by E or F
        hello = emit_hello(1, b.master, b.obs_list, b.table)
        listed = {nid for nid, _, _ in hello.neighbor_list}
        assert {4, 5} <= listed

    def test_two_hop_node_exchanges_and_moves_on(self):
        world, res = self.build()
        joins = {e.get("node"): e for e in res.events if e.kind == "join"}
        forms = {e.get("node"): e for e in res.events if e.kind == "form"}
        assert forms[8].get("channel") == 2
        assert joins[7].get("head") == 8     # H ends up in cluster I
        b = world.nodes[1]
        assert 7 in b.table and b.table[7].hops == 1   # H's PublicRA exchange
        c = world.nodes[2]
        assert 7 in c.table and c.table[7].hops == 2   # relayed through B

    def test_gateway_bridges_the_two_clusters(self):
        world, res = self.build()
        gws = [e for e in res.events if e.kind == "gateway"]
        pairs = {(e.get("cluster_a"), e.get("cluster_b")): e.get("nodes")
                 for e in gws}
        assert ("0", "4") in {(str(a), str(b)) for (a, b), _ in pairs.items()} \
            or (0, 4) in pairs
        assert pairs[(0, 4)] == "1"          # B alone carries the link
        link = world.clusters[0].neighbor_clusters[4]
        assert link.node_a == 1 and link.node_b is None
        assert world.nodes[1].role is Role.GATEWAY

    def test_two_hop_entries_are_witnessed_by_their_relay(self):
        world, res = self.build()
        for node in world.nodes:
            for e in node.table.values():
                if e.hops == 2:
                    assert e.relay is not None
                    relay = node.table.get(e.relay)
                    assert relay is not None and relay.hops == 1


class TestJoinContention:
    def test_concurrent_requesters_are_serialized(self):
        # two scanners in range of one head request in the same PublicRA;
        # the first by contention order joins, the other retries next frame
        cfg = ScenarioConfig(su_count=3, channel_count=1, comm_range=200.0,
                             duration_ticks=300, startup_spread_ticks=0,
                             reform_enabled=False, seed=1)
        world = World(cfg, su_positions=[(0.0, 0.0), (50.0, 0.0), (0.0, 50.0)],
                      su_start_ticks=[0, 40, 40])
        res = world.run()
        joins = sorted((e.tick, e.get("node")) for e in res.events
                       if e.kind == "join")
        assert len(joins) == 2
        assert {n for _, n in joins} == {1, 2}
        gap = joins[1][0] - joins[0][0]
        assert gap >= cfg.beacon_ticks + 20   # roughly one superframe apart

    def test_full_cluster_rejects_and_requester_moves_on(self):
        cfg = ScenarioConfig(su_count=4, channel_count=2, comm_range=300.0,
                             duration_ticks=400, startup_spread_ticks=0,
                             max_slots=1, reform_enabled=False, seed=3)
        world = World(cfg, su_positions=[(0, 0), (50, 0), (0, 50), (50, 50)],
                      su_start_ticks=[0, 60, 120, 180])
        res = world.run()
        rejects = [e for e in res.events if e.kind == "reject"]
        assert rejects, "a full cluster must reject"
        for e in rejects:
            assert e.get("head") is not None
        # every node still settles somewhere
        assert len(res.settle_ticks) == 4


class TestMasterChange:
    def test_pu_arrival_clears_the_channel(self):
        # PU hops onto the cluster channel at t=300: everyone senses the loss
        # within a superframe and reconvenes on the other channel
        pu = PrimaryUser(id=0, pos=(0.0, 0.0), channel=1,
                         model=PeriodicActivity(300, 1.0, hop=True),
                         protection_radius=500.0, interference_power=0.01)
        cfg = ScenarioConfig(su_count=4, channel_count=2, comm_range=150.0,
                             duration_ticks=550, startup_spread_ticks=0,
                             reform_enabled=False, seed=4)
        world = World(cfg, su_positions=[(0, 0), (60, 0), (0, 60), (60, 60)],
                      su_start_ticks=[0, 50, 90, 130], pus=[pu])
        res = world.run()
        changes = [e for e in res.events if e.kind == "master-change"]
        assert {e.get("node") for e in changes} == {0, 1, 2, 3}
        assert all(e.get("new") == 1 for e in changes)
        # ch0 blocked from t=300 (hop 1->0); loss sensed within one frame,
        # then a scan interval and a join round
        assert max(e.tick for e in changes) <= 300 + 30
        final = res.samples[-1]
        assert final.counts[1] == 4 and final.counts[0] == 0

    def test_head_departure_dissolves_cluster(self):
        # the PU only covers the head: it alone must leave; the members
        # re-form among themselves on the old channel within 3 intervals
        pu = PrimaryUser(id=0, pos=(0.0, 0.0), channel=1,
                         model=PeriodicActivity(400, 1.0, hop=True),
                         protection_radius=40.0, interference_power=0.01)
        cfg = ScenarioConfig(su_count=4, channel_count=2, comm_range=150.0,
                             duration_ticks=780, startup_spread_ticks=0,
                             reform_enabled=False, seed=4)
        world = World(cfg, su_positions=[(0, 0), (100, 0), (40, 90), (100, 90)],
                      su_start_ticks=[0, 50, 90, 130], pus=[pu])
        res = world.run()
        head_change = [e for e in res.events if e.kind == "master-change"
                       and e.get("node") == 0 and e.get("role") == "head"]
        assert head_change and head_change[0].tick >= 400
        t0 = head_change[0].tick
        reforms = [e for e in res.events if e.kind == "form"
                   and e.tick > t0 and e.get("node") != 0]
        assert reforms, "members must re-form after the head left"
        assert min(e.tick for e in reforms) <= t0 + 3 * cfg.scan_interval_ticks \
            + 3 * 27 + 5
        for n in world.nodes:
            assert n.role is not None and n.role is not Role.SCANNING
