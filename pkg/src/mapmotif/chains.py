"""Turn a pruned critical-point forest into cleaned, ordered backbone peak
chains, and match point hierarchies across resolutions."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from mapmotif.skeleton import CPGraph, SimpleNode

logger = logging.getLogger(__name__)

MERGE_DISTANCE = 1.95       # angstrom; closer adjacent peaks collapse to one
LINK_DISTANCE = 5.0         # adjacent peaks within this are connected
SIDE_DISTANCE = 4.0         # linked triple tighter than this loses its middle
HIERARCHY_DISTANCE = 2.0    # cross-resolution correspondence radius


@dataclass(eq=False)
class Peak:
    position: np.ndarray
    density: float


@dataclass
class SideChain:
    attach_index: int            # index of the backbone peak it hangs from
    peak: Peak


@dataclass
class PeakChain:
    """Ordered backbone peaks; ``passes[k]`` (optional) sits between peaks k
    and k+1, ``jumps[k]`` flags link k as longer than the link threshold."""

    peaks: list[Peak]
    passes: list[Peak | None] = field(default_factory=list)
    jumps: list[bool] = field(default_factory=list)
    side_chains: list[SideChain] = field(default_factory=list)
    source: str = ""
    chain_id: str = ""

    def __len__(self) -> int:
        return len(self.peaks)

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.peaks]).reshape(-1, 3)

    def link_lengths(self) -> np.ndarray:
        pos = self.positions()
        if len(pos) < 2:
            return np.empty(0)
        return np.linalg.norm(np.diff(pos, axis=0), axis=1)


def _jump_flags(positions: np.ndarray, link_threshold: float) -> list[bool]:
    if len(positions) < 2:
        return []
    gaps = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    return [bool(g > link_threshold) for g in gaps]


def extract_peak_chains(graph: CPGraph, *, link_threshold: float = LINK_DISTANCE) -> list[PeakChain]:
    """Decompose a spanning forest into maximal paths of degree-<=2 peaks.

    Peaks are adjacent when a pass connects them.  A single peak hanging off a
    higher-degree peak is recorded as a side chain and removed; remaining
    peaks of degree >= 3 are treated as split points and belong to no chain.
    Links longer than ``link_threshold`` are flagged as jumps.
    """
    peak_ids = [k for k, n in enumerate(graph.nodes) if n.cp_type == "peak"]
    adj: dict[int, dict[int, int]] = {k: {} for k in peak_ids}   # peak -> peak -> pass node

    by_pass: dict[int, list[int]] = {}
    for e in graph.edges:
        by_pass.setdefault(e.i, []).append(e.j)
    for pass_id, nbrs in sorted(by_pass.items()):
        if len(nbrs) != 2:
            continue
        a, b = sorted(nbrs)
        if a == b:
            continue
        prev = adj[a].get(b)
        if prev is None or graph.nodes[pass_id].density > graph.nodes[prev].density:
            adj[a][b] = pass_id
            adj[b][a] = pass_id

    degree = {k: len(adj[k]) for k in peak_ids}

    # one simultaneous round of single-peak side-branch removal
    side_branches: list[tuple[int, int]] = []   # (leaf peak, attachment peak)
    for k in peak_ids:
        if degree[k] == 1:
            nbr = next(iter(adj[k]))
            if degree[nbr] >= 3:
                side_branches.append((k, nbr))
    removed = {leaf for leaf, _ in side_branches}
    for leaf, nbr in side_branches:
        del adj[nbr][leaf]
        del adj[leaf][nbr]
    degree = {k: len(adj[k]) for k in peak_ids}

    # restrict to the subgraph of degree-<=2 peaks; its components are simple
    # paths (the full graph is a forest), each one a backbone chain
    candidates = sorted(k for k in peak_ids if degree[k] <= 2 and k not in removed)
    sub = {k: [n for n in sorted(adj[k]) if degree[n] <= 2 and n not in removed]
           for k in candidates}

    visited: set[int] = set()
    chains: list[PeakChain] = []
    for start in candidates:
        if start in visited:
            continue
        end, prev = start, None
        while True:                      # run to one end of the path
            nbrs = [n for n in sub[end] if n != prev]
            if not nbrs or nbrs[0] == start:
                break
            prev, end = end, nbrs[0]
        seq, prev, cur = [end], None, end
        visited.add(end)
        while True:                      # then walk the whole path
            nbrs = [n for n in sub[cur] if n != prev and n not in visited]
            if not nbrs:
                break
            prev, cur = cur, nbrs[0]
            seq.append(cur)
            visited.add(cur)
        if seq[0] > seq[-1]:
            seq.reverse()
        peaks = [Peak(position=graph.nodes[i].position.copy(), density=graph.nodes[i].density)
                 for i in seq]
        passes: list[Peak | None] = []
        for a, b in zip(seq[:-1], seq[1:]):
            pid = adj[a].get(b)
            passes.append(None if pid is None else
                          Peak(position=graph.nodes[pid].position.copy(),
                               density=graph.nodes[pid].density))
        pos = np.array([p.position for p in peaks]).reshape(-1, 3)
        chain = PeakChain(peaks=peaks, passes=passes,
                          jumps=_jump_flags(pos, link_threshold))
        for leaf, attach in side_branches:
            if attach in seq:
                chain.side_chains.append(SideChain(
                    attach_index=seq.index(attach),
                    peak=Peak(position=graph.nodes[leaf].position.copy(),
                              density=graph.nodes[leaf].density)))
        chains.append(chain)

    chains.sort(key=lambda c: (-len(c), tuple(np.round(c.peaks[0].position, 9))))
    for n, c in enumerate(chains):
        c.chain_id = f"c{n}"
    return chains


def merge_close_peaks(chain: PeakChain, threshold: float = MERGE_DISTANCE,
                      *, link_threshold: float = LINK_DISTANCE) -> PeakChain:
    """Iteratively collapse the closest adjacent pair under ``threshold`` into
    its midpoint (density = max of the two) until all adjacent gaps clear the
    threshold.  Ties pick the earliest pair, so the outcome is deterministic.
    """
    peaks = [Peak(position=p.position.copy(), density=p.density) for p in chain.peaks]
    while len(peaks) > 1:
        pos = np.array([p.position for p in peaks])
        gaps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
        k = int(np.argmin(gaps))
        if gaps[k] >= threshold:
            break
        merged = Peak(position=(peaks[k].position + peaks[k + 1].position) / 2.0,
                      density=max(peaks[k].density, peaks[k + 1].density))
        peaks[k:k + 2] = [merged]
    pos = np.array([p.position for p in peaks]).reshape(-1, 3)
    return PeakChain(peaks=peaks, passes=[None] * max(0, len(peaks) - 1),
                     jumps=_jump_flags(pos, link_threshold),
                     side_chains=list(chain.side_chains), source=chain.source,
                     chain_id=chain.chain_id)


def link_and_prune_backbone(chain: PeakChain, link_threshold: float = LINK_DISTANCE,
                            side_threshold: float = SIDE_DISTANCE) -> list[PeakChain]:
    """Apply the link / middle-peak rules to a merged chain.

    Adjacent peaks within ``link_threshold`` are linked.  For every linked
    triple (a, b, c) with d(a, c) < ``side_threshold`` the middle peak is moved
    to the side chains; the scan repeats until stable.  The surviving sequence
    splits into maximal linked runs.
    """
    peaks = list(chain.peaks)
    sides = list(chain.side_chains)

    def linked(a: Peak, b: Peak) -> bool:
        return float(np.linalg.norm(a.position - b.position)) <= link_threshold

    changed = True
    while changed:
        changed = False
        for k in range(len(peaks) - 2):
            a, b, c = peaks[k], peaks[k + 1], peaks[k + 2]
            if linked(a, b) and linked(b, c) and \
                    float(np.linalg.norm(a.position - c.position)) < side_threshold:
                sides.append(SideChain(attach_index=k, peak=b))
                del peaks[k + 1]
                changed = True
                break

    runs: list[list[Peak]] = []
    cur: list[Peak] = []
    for p in peaks:
        if cur and not linked(cur[-1], p):
            runs.append(cur)
            cur = []
        cur.append(p)
    if cur:
        runs.append(cur)

    out = []
    for n, run in enumerate(runs):
        pos = np.array([p.position for p in run]).reshape(-1, 3)
        out.append(PeakChain(
            peaks=run, passes=[None] * max(0, len(run) - 1),
            jumps=_jump_flags(pos, link_threshold),
            side_chains=sides if n == 0 else [],
            source=chain.source,
            chain_id=chain.chain_id if len(runs) == 1 else f"{chain.chain_id}.{n}",
        ))
    return out


def match_hierarchy(points_low, points_med, threshold: float = HIERARCHY_DISTANCE
                    ) -> list[tuple[int, list[int]]]:
    """Correspondence between a coarse and a fine point set.

    Every fine point is assigned to its nearest coarse point strictly within
    ``threshold``; a coarse point may collect several fine points.  Returns
    ``(low_index, [med_indices])`` for every low point with at least one match.
    """
    low = np.array([getattr(p, "position", p) for p in points_low], dtype=float).reshape(-1, 3)
    med = np.array([getattr(p, "position", p) for p in points_med], dtype=float).reshape(-1, 3)
    assigned: dict[int, list[int]] = {}
    for m in range(med.shape[0]):
        d = np.linalg.norm(low - med[m], axis=1)
        if d.size == 0:
            continue
        k = int(np.argmin(d))
        if float(d[k]) < threshold:
            assigned.setdefault(k, []).append(m)
    return [(k, assigned[k]) for k in sorted(assigned)]


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip(np.dot(p - a, ab) / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def chain_to_axis_distance(chain: PeakChain, reference: np.ndarray) -> tuple[float, float]:
    """Mean and standard deviation of the minimum distance from each chain
    peak to the reference polyline."""
    ref = np.asarray(reference, dtype=float).reshape(-1, 3)
    pos = chain.positions()
    if pos.shape[0] == 0 or ref.shape[0] == 0:
        raise ValueError("chain and reference must be non-empty")
    dists = []
    for p in pos:
        if ref.shape[0] == 1:
            dists.append(float(np.linalg.norm(p - ref[0])))
        else:
            dists.append(min(_point_segment_distance(p, ref[k], ref[k + 1])
                             for k in range(ref.shape[0] - 1)))
    d = np.array(dists)
    return float(d.mean()), float(d.std())


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def chains_to_json(chains: list[PeakChain]) -> str:
    recs = []
    for c in chains:
        recs.append({
            "chain_id": c.chain_id,
            "peaks": [{"position": [float(x) for x in p.position],
                       "density": float(p.density)} for p in c.peaks],
            "jumps": [k for k, j in enumerate(c.jumps) if j],
            "side_chains": [{"attach_index": s.attach_index,
                             "position": [float(x) for x in s.peak.position],
                             "density": float(s.peak.density)} for s in c.side_chains],
        })
    return json.dumps(recs, indent=1)


def chains_from_json(text: str) -> list[PeakChain]:
    out = []
    for rec in json.loads(text):
        peaks = [Peak(position=np.asarray(p["position"], dtype=float),
                      density=float(p["density"])) for p in rec["peaks"]]
        jumps = [False] * max(0, len(peaks) - 1)
        for k in rec.get("jumps", []):
            jumps[k] = True
        sides = [SideChain(attach_index=int(s["attach_index"]),
                           peak=Peak(position=np.asarray(s["position"], dtype=float),
                                     density=float(s["density"])))
                 for s in rec.get("side_chains", [])]
        out.append(PeakChain(peaks=peaks, passes=[None] * max(0, len(peaks) - 1),
                             jumps=jumps, side_chains=sides,
                             chain_id=rec.get("chain_id", "")))
    return out
