"""Pure-Python reference implementations of the hot numeric kernels.

These are the fallback for the compiled `_speedups` extension; both expose the
same functions with identical semantics, and the test suite checks them
against each other. Everything here is plain dict/list arithmetic so the
simulator runs unchanged when the extension was not built.
"""

import math

COMPILED = False


def reward(delta_q: float, a: float, b: float, c: float) -> float:
    """Map a quality difference to a reinforcement factor in [0, 1]."""
    r = (math.atan(a * delta_q) + b) / c
    if r < 0.0:
        return 0.0
    if r > 1.0:
        return 1.0
    return r


def quantize(q_raw: float, q_max: float, stages: int) -> int:
    """Uniform-bin quantizer onto integer stages [0, stages-1]."""
    s = int(stages * q_raw / q_max)
    if s >= stages:
        return stages - 1
    if s < 0:
        return 0
    return s


def hello_reinforce(weights: dict, master: int, r: float) -> dict:
    """One pheromone update: boost `master`, decay the rest by (1 - r)."""
    decay = 1.0 - r
    out = {}
    for ch, w in weights.items():
        if ch == master:
            out[ch] = w + r * (1.0 - w)
        else:
            out[ch] = w * decay
    return out


def blend_refresh(weights: dict, target: dict, alpha: float) -> dict:
    """Convex blend of a weight list toward a normalized target vector."""
    keep = 1.0 - alpha
    out = {}
    for ch, w in weights.items():
        out[ch] = keep * w + alpha * target[ch]
    return out


def largest_same_master_component(neighbors: list, masters: list) -> int:
    """Largest connected component over edges whose endpoints share a master.

    `neighbors[i]` lists node i's physical neighbors; `masters[i]` is the
    node's master channel or -1 for none (such nodes are excluded).
    """
    n = len(masters)
    seen = bytearray(n)
    best = 0
    stack = []
    for start in range(n):
        if seen[start] or masters[start] < 0:
            continue
        m = masters[start]
        seen[start] = 1
        stack.append(start)
        size = 0
        while stack:
            u = stack.pop()
            size += 1
            for v in neighbors[u]:
                if not seen[v] and masters[v] == m:
                    seen[v] = 1
                    stack.append(v)
        if size > best:
            best = size
    return best
