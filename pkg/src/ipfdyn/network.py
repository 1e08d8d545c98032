"""Ranking of segments and their triplet-aggregated information network."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .entropy import BITS_PER_NAT
from .errors import UndefinedAngleError

RANK_TOL = 0.10


@dataclass(frozen=True)
class SpectrumEntry:
    index: int
    alpha: float
    duration: float
    a_o: float
    contribution: float
    flagged: bool = False


@dataclass
class RankedSpectrum:
    entries: list

    def __len__(self):
        return len(self.entries)

    @property
    def alphas(self):
        return [e.alpha for e in self.entries]

    @property
    def durations(self):
        return [e.duration for e in self.entries]

    @property
    def flagged(self):
        return [e.index for e in self.entries if e.flagged]

    @property
    def max_frequency(self):
        return self.entries[0].alpha


def _entry(i, item):
    if hasattr(item, "eig_start"):
        # dominant starting real part
        alpha = max((e.alpha for e in item.eig_start), key=abs)
        t = item.duration
        inv = item.invariants
        a_o = inv.a_o if inv is not None else alpha * t
        contrib = item.info_contribution
    else:
        alpha, t, a_o = (float(v) for v in item[:3])
        contrib = float(item[3]) if len(item) > 3 else abs(a_o)
    return alpha, t, a_o, contrib


def rank_spectrum(segments):
    """Order segments by ``|alpha|`` descending (ties by input index).

    ``segments`` holds :class:`SegmentRecord` objects or ``(alpha, t, a_o[,
    contribution])`` tuples. An entry is flagged when ``alpha * t`` differs
    from its ``a_o`` by more than 10 %.
    """
    if not segments:
        raise ValueError("rank_spectrum needs at least one segment")
    out = []
    for i, item in enumerate(segments):
        alpha, t, a_o, contrib = _entry(i, item)
        if alpha == 0:
            raise ValueError(f"segment {i} has zero starting real part")
        flagged = abs(alpha * t - a_o) > RANK_TOL * max(abs(a_o), 1e-300)
        out.append(SpectrumEntry(i, alpha, t, a_o, contrib, flagged))
    out.sort(key=lambda e: (-abs(e.alpha), e.index))
    return RankedSpectrum(out)


# ----------------------------------------------------------------------------
# information accounting
# ----------------------------------------------------------------------------


def total_process_info(invariant_pairs):
    """``(sum(a_o + 2a), sum(a_o))`` over the segments."""
    pairs = list(invariant_pairs)
    full = math.fsum(a_o + 2.0 * a for a_o, a in pairs)
    predict = math.fsum(a_o for a_o, _ in pairs)
    return full, predict


def total_process_info_squared(invariant_pairs):
    """Alternative ``sum(a_o + a_o**2)`` reading of the full process information."""
    return math.fsum(a_o + a_o * a_o for a_o, _ in invariant_pairs)


@dataclass(frozen=True)
class CodeSpec:
    D: float
    D0: float
    l_c: float
    l_cs: float
    l_c_ceil: int
    l_cs_ceil: int
    l_cs_floor: int


def codeword_lengths(S_predict, a_o_bits, D=2, D0=2):
    """Lower bounds on the total and per-segment codeword lengths.

    ``l_c >= S_predict / ln D`` and ``l_cs >= a_o_bits / log2 D0``. Real
    bounds, their ceilings and the floor of the per-segment bound are all
    reported.
    """
    if D < 2 or D0 < 2:
        raise ValueError("alphabet sizes must be >= 2")
    l_c = S_predict / math.log(D)
    l_cs = a_o_bits / math.log2(D0)
    return CodeSpec(D, D0, l_c, l_cs, math.ceil(l_c), math.ceil(l_cs), math.floor(l_cs))


def consolidation_angle(x_tau):
    """Rotation ``arctan((x2 - x1)/(x2 + x1))`` joining two equalised components."""
    x1, x2 = float(x_tau[0]), float(x_tau[1])
    if x1 + x2 == 0.0:
        raise UndefinedAngleError("x1 + x2 = 0; consolidation angle undefined")
    return math.atan((x2 - x1) / (x2 + x1))


# ----------------------------------------------------------------------------
# network
# ----------------------------------------------------------------------------


@dataclass
class InNode:
    node_id: int
    level: int
    members: list = field(default_factory=list)  # segment indices
    children: list = field(default_factory=list)
    member_info: list = field(default_factory=list)
    accumulated_info: float = 0.0

    def leaf_contributions(self):
        out = list(self.member_info)
        for c in self.children:
            out.extend(c.leaf_contributions())
        return out

    def to_dict(self):
        return {
            "node_id": self.node_id,
            "level": self.level,
            "members": list(self.members),
            "info_nats": self.accumulated_info,
            "info_bits": self.accumulated_info * BITS_PER_NAT,
            "children": [c.to_dict() for c in self.children],
        }


@dataclass
class InfoNetwork:
    nodes: list
    final: InNode
    ranked: RankedSpectrum

    @property
    def total_info(self):
        return self.final.accumulated_info

    def to_dict(self):
        return {
            "n_segments": len(self.ranked),
            "n_nodes": len(self.nodes),
            "order": [e.index for e in self.ranked.entries],
            "total_info_nats": self.total_info,
            "final": self.final.to_dict(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "node_id", "info_nats"])
        for nd in self.nodes:
            w.writerow([nd.level, nd.node_id, repr(nd.accumulated_info)])


def _make_node(nodes, level, members=(), member_info=(), children=()):
    nd = InNode(len(nodes), level, list(members), list(children), list(member_info))
    nd.accumulated_info = math.fsum(nd.leaf_contributions())
    nodes.append(nd)
    return nd


def build_network(ranked):
    """Greedy consecutive-triplet aggregation of a ranked spectrum.

    Ranked segments are grouped three at a time into level-1 nodes; the
    ``n mod 3`` leftover segments are held for the final node. Nodes are
    then grouped three at a time per level (leftover nodes move up
    unchanged) until at most three remain, which the final node encloses.
    A lone node with no held segments is itself the final node.
    """
    if isinstance(ranked, (list, tuple)):
        ranked = rank_spectrum(ranked)
    ents = ranked.entries
    if not ents:
        raise ValueError("build_network needs at least one segment")
    nodes = []
    r = len(ents) % 3
    full, rest = ents[:len(ents) - r], ents[len(ents) - r:]
    level_nodes = [
        _make_node(nodes, 1, [e.index for e in full[i:i + 3]],
                   [e.contribution for e in full[i:i + 3]])
        for i in range(0, len(full), 3)
    ]
    level = 1
    while len(level_nodes) > 3:
        level += 1
        k = len(level_nodes) - len(level_nodes) % 3
        grouped = [_make_node(nodes, level, children=level_nodes[i:i + 3])
                   for i in range(0, k, 3)]
        level_nodes = grouped + level_nodes[k:]
    if len(level_nodes) == 1 and not rest:
        final = level_nodes[0]
    else:
        top = max((nd.level for nd in level_nodes), default=0)
        final = _make_node(nodes, top + 1, [e.index for e in rest],
                           [e.contribution for e in rest], level_nodes)
    return InfoNetwork(nodes, final, ranked)


def expected_node_count(n):
    """Node count of :func:`build_network` for ``n`` segments, by recursion."""
    if n < 1:
        raise ValueError("n must be >= 1")

    def up(k):
        # nodes created above k existing nodes, excluding the final enclosure
        return 0 if k <= 3 else k // 3 + up(k // 3 + k % 3)

    k = n // 3
    count = k + up(k)
    while k > 3:
        k = k // 3 + k % 3
    return count + (0 if (k == 1 and n % 3 == 0) else 1)
