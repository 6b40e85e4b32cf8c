"""Friendship graph storage and ego-network / core analyses.

Sizes count the ego itself: an ego-network with ``f`` friends has size ``f + 1``.
Density is measured over the whole ego-set, so the ego's own spokes count as
links and the denominator is ``size * (size - 1) / 2``.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ParseError, ValidationError


class SocialGraph:
    """Undirected simple graph over opaque (string) node ids."""

    def __init__(self, edges=(), nodes=()):
        adj = {}
        for u in nodes:
            adj.setdefault(str(u), set())
        for a, b in edges:
            a, b = str(a), str(b)
            if a == b:
                raise ValidationError(f"self-loop on node {a!r}")
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        self._adj = {u: frozenset(vs) for u, vs in adj.items()}

    @classmethod
    def read_edge_list(cls, path, nodes=()):
        edges = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                if len(parts) != 2:
                    raise ParseError(f"expected 'a b', got {line.strip()!r}", line=lineno)
                if parts[0] == parts[1]:
                    raise ParseError(f"self-loop on node {parts[0]!r}", line=lineno)
                edges.append((parts[0], parts[1]))
        return cls(edges, nodes=nodes)

    def write_edge_list(self, path):
        with open(path, "w") as fh:
            for a, b in self.edges():
                fh.write(f"{a} {b}\n")

    @property
    def nodes(self):
        return sorted(self._adj)

    def __contains__(self, u):
        return str(u) in self._adj

    def __len__(self):
        return len(self._adj)

    def n_edges(self):
        return sum(len(vs) for vs in self._adj.values()) // 2

    def edges(self):
        """Each undirected edge once, as a sorted ``(a, b)`` pair, in sorted order."""
        return sorted((a, b) for a, vs in self._adj.items() for b in vs if a < b)

    def neighbors(self, u):
        try:
            return self._adj[str(u)]
        except KeyError:
            raise KeyError(f"unknown node {u!r}") from None

    def degree(self, u):
        return len(self.neighbors(u))

    def degrees(self):
        return {u: len(vs) for u, vs in self._adj.items()}


@dataclass(frozen=True)
class CoreSet:
    percentile: float
    members: frozenset
    threshold: int

    def __contains__(self, u):
        return str(u) in self.members

    def __len__(self):
        return len(self.members)


def ego_metrics(g, u):
    """Return ``(size, density)`` of the ego-network of ``u``."""
    friends = g.neighbors(u)
    size = len(friends) + 1
    if size <= 1:
        return 1, 0.0
    # every friend-friend edge is seen twice
    inner = sum(len(g.neighbors(v) & friends) for v in friends) // 2
    links = len(friends) + inner
    return size, links / (size * (size - 1) / 2)


def extract_core(g, p):
    """Top-``p`` fraction of nodes by degree; ties at the threshold are kept."""
    if not 0 < p <= 1:
        raise ValidationError(f"core percentile must lie in (0, 1], got {p}")
    if len(g) == 0:
        raise ValidationError("cannot extract the core of an empty graph")
    deg = g.degrees()
    ranked = sorted(deg.values(), reverse=True)
    m = max(1, math.ceil(p * len(ranked) - 1e-9))
    threshold = ranked[m - 1]
    members = frozenset(u for u, d in deg.items() if d >= threshold)
    return CoreSet(percentile=p, members=members, threshold=threshold)


def core_overlap(g, u, core):
    """Fraction of ``u``'s friends that belong to ``core`` (0 without friends)."""
    friends = g.neighbors(u)
    if not friends:
        return 0.0
    return len(friends & core.members) / len(friends)


def friends_of(g, users):
    """Union of the direct friends of ``users`` (the new-user friend set)."""
    out = set()
    for u in users:
        out |= g.neighbors(u)
    return out - {str(u) for u in users}


def core_coverage_curve(g, users, percentiles=tuple(np.arange(1, 11) / 100)):
    """Share of ``users``' direct friends inside the core, per core percentile.

    Returns ``(kappa, [(p, fraction), ...])`` where ``kappa`` is the number of
    distinct direct friends.
    """
    kappa_set = friends_of(g, users)
    rows = []
    for p in percentiles:
        core = extract_core(g, float(p))
        frac = len(kappa_set & core.members) / len(kappa_set) if kappa_set else 0.0
        rows.append((float(p), frac))
    return len(kappa_set), rows


def snapshot_paths(prefix, n_days=14):
    """``edges.day01`` ... style paths for a given prefix."""
    prefix = str(prefix)
    return [Path(f"{prefix}.day{t:02d}") for t in range(1, n_days + 1)]


def daily_network_series(snapshots, u):
    """Ego size and density of ``u`` for each daily snapshot, as a ``(2, T)`` array.

    ``snapshots`` holds graphs or edge-list paths. A node absent from a
    snapshot is isolated that day (edge lists cannot list isolated nodes).
    """
    out = np.zeros((2, len(snapshots)))
    for t, snap in enumerate(snapshots):
        if not isinstance(snap, SocialGraph):
            snap = SocialGraph.read_edge_list(snap)
        if u in snap:
            out[:, t] = ego_metrics(snap, u)
        else:
            out[:, t] = (1, 0.0)
    return out
