"""Periodic local cluster optimization.

A working node collects its host cluster and the 1-hop neighbor clusters into
a local graph, runs a greedy dominating-set pass (max remaining same-channel
degree, lowest id on ties) to propose fewer clusters, and negotiates with
every affected head. The negotiation is all-or-nothing: the plan commits
atomically at a superframe boundary only once every head acknowledged within
the timeout; a denial, a timeout, or a stale world at commit time cancels it
with no state change, so a committed reformation always reduces the local
cluster count by exactly its stated gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class LocalGraph:
    """The working node's optimization domain.

    nodes maps id -> (control channel, available channel set); edges is a
    symmetric adjacency map; current_clusters holds (head, master, member ids
    including the head) for every cluster represented in the node set.
    """

    nodes: dict
    edges: dict
    current_clusters: tuple

    def control(self, node_id: int) -> int:
        return self.nodes[node_id][0]


@dataclass(frozen=True)
class ReformPlan:
    """Proposed regrouping: (head, master, member ids including the head) per
    cluster; gain is current cluster count minus planned cluster count."""

    clusters: tuple
    gain: int


@dataclass
class Negotiation:
    """In-flight all-or-nothing exchange for one plan."""

    plan_id: tuple
    working: int
    plan: ReformPlan
    affected: dict               # head id -> frozenset(member ids incl. head)
    deadline: int
    acks: set = field(default_factory=set)
    denied: bool = False
    commit_tick: int | None = None
    done: bool = False

    def all_acked(self) -> bool:
        return self.acks >= set(self.affected)


def build_local_graph(working_id: int, records, tables, availability) -> LocalGraph:
    """Assemble the local graph from cluster records and neighbor tables.

    `records` lists the host cluster first, then the 1-hop neighbor clusters;
    edges come from the nodes' own tables (either endpoint listing the other
    at 1 hop), so stale knowledge yields a stale graph that commit-time
    validation will reject.
    """
    nodes = {}
    clusters = []
    for rec in records:
        ids = frozenset({rec.head} | set(rec.members))
        clusters.append((rec.head, rec.master, ids))
        for nid in ids:
            nodes[nid] = (rec.master, availability.get(nid, frozenset()))
    ids = sorted(nodes)
    edges = {nid: set() for nid in ids}
    for i, a in enumerate(ids):
        ta = tables.get(a, {})
        for b in ids[i + 1:]:
            ea = ta.get(b)
            eb = tables.get(b, {}).get(a)
            if ((ea is not None and ea.hops == 1)
                    or (eb is not None and eb.hops == 1)):
                edges[a].add(b)
                edges[b].add(a)
    if working_id not in nodes:
        raise ValueError("working node missing from its own local graph")
    return LocalGraph(nodes=nodes, edges={k: frozenset(v) for k, v in edges.items()},
                      current_clusters=tuple(clusters))


def greedy_mds(graph: LocalGraph, working_id: int,
               max_members: int | None = None) -> ReformPlan:
    """Greedy dominating-set regrouping of the local graph.

    The working node heads the first cluster and absorbs its unassigned
    1-hop neighbors on its control channel; then the remaining node with the
    most unassigned same-channel neighbors (ties to the lowest id) heads the
    next, until everyone is assigned. Cluster size respects the mini-slot
    budget when one is given.
    """
    unassigned = set(graph.nodes)
    clusters = []

    def absorb(head):
        control = graph.control(head)
        mates = [n for n in sorted(graph.edges[head])
                 if n in unassigned and n != head and graph.control(n) == control]
        if max_members is not None:
            mates = mates[:max_members]
        members = (head, *mates)
        unassigned.difference_update(members)
        clusters.append((head, control, members))

    absorb(working_id)
    while unassigned:
        best_id = None
        best_deg = -1
        for n in sorted(unassigned):
            control = graph.control(n)
            deg = sum(1 for v in graph.edges[n]
                      if v in unassigned and graph.control(v) == control)
            if deg > best_deg:
                best_id, best_deg = n, deg
        absorb(best_id)
    gain = len(graph.current_clusters) - len(clusters)
    return ReformPlan(clusters=tuple(clusters), gain=gain)


def plan_is_feasible(plan: ReformPlan, graph: LocalGraph) -> bool:
    """Plan invariants: partition of the node set, members adjacent to their
    head, and every member able to use the cluster master."""
    covered = []
    for head, master, members in plan.clusters:
        if head not in members:
            return False
        for m in members:
            covered.append(m)
            if m != head and m not in graph.edges[head]:
                return False
            if master not in graph.nodes[m][1]:
                return False
    return sorted(covered) == sorted(graph.nodes)
