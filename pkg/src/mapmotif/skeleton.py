"""Connect critical points by steepest-ascent paths and reduce the connection
graph to a minimum spanning forest.

Each pass launches two ascent paths along +-v, where v is the eigenvector of
its single positive Hessian curvature; a path that reaches a peak contributes
a pass-peak edge.  Edge weights are low for dense (high-occupancy) passes, so
the spanning forest prefers strong connections.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from mapmotif.mapio import DensityMap, in_bounds, sample_density

logger = logging.getLogger(__name__)


class TraceDivergenceError(RuntimeError):
    """Ascent failed to terminate within the step budget."""


@dataclass
class GradientPath:
    points: np.ndarray                # (k, 3) polyline
    values: np.ndarray                # sampled density at each accepted point
    terminal_peak: int | None         # index into the peak list, None if not snapped
    status: str                       # "peak" | "stalled" | "boundary"


@dataclass(eq=False)
class SimpleNode:
    """Deserialized critical point: enough for chain building."""
    position: np.ndarray
    density: float
    cp_type: str

    def is_peak(self):
        return self.cp_type == "peak"

    def is_pass(self):
        return self.cp_type == "pass"


@dataclass
class Edge:
    i: int                            # pass node index
    j: int                            # peak node index
    weight: float
    path: np.ndarray                  # polyline from pass to peak


@dataclass
class CPGraph:
    nodes: list
    edges: list[Edge] = field(default_factory=list)

    def degree(self, k: int) -> int:
        return sum(1 for e in self.edges if e.i == k or e.j == k)


def _min_image(delta: np.ndarray, period: np.ndarray | None) -> np.ndarray:
    if period is None:
        return delta
    return delta - period * np.round(delta / period)


def _nearest_node(dmap: DensityMap, x) -> tuple[int, int, int]:
    node = np.round((np.asarray(x, dtype=float) - np.asarray(dmap.origin))
                    / np.asarray(dmap.spacing)).astype(int)
    dims = np.array(dmap.dims)
    node = node % dims if dmap.periodic else np.minimum(np.maximum(node, 0), dims - 1)
    return tuple(int(i) for i in node)


def _climb(dmap: DensityMap, node) -> tuple[int, int, int]:
    """Discrete 26-neighbour hill-climb to the summit node of the basin."""
    dims = np.array(dmap.dims)
    node = np.array(node)
    while True:
        best, best_val = None, dmap.values[tuple(node)]
        for delta in np.ndindex(3, 3, 3):
            d = np.array(delta) - 1
            if not d.any():
                continue
            nb = node + d
            if dmap.periodic:
                nb = nb % dims
            elif np.any(nb < 0) or np.any(nb >= dims):
                continue
            v = dmap.values[tuple(nb)]
            if v > best_val:
                best, best_val = nb, v
        if best is None:
            return tuple(int(i) for i in node)
        node = best


def peak_summit_nodes(dmap: DensityMap, peaks) -> dict[tuple[int, int, int], int]:
    """Summit node of each peak's own discrete basin, as a lookup table."""
    summits: dict[tuple[int, int, int], int] = {}
    for k, p in enumerate(peaks):
        summits.setdefault(_climb(dmap, _nearest_node(dmap, p.position)), k)
    return summits


def trace_gradient_path(
    dmap: DensityMap,
    start,
    direction,
    peaks,
    *,
    step_factor: float = 0.25,
    snap_factor: float = 0.5,
    grad_tol: float = 1e-8,
    max_steps: int = 10_000,
    summits: dict | None = None,
) -> GradientPath:
    """Steepest-ascent polyline from ``start``, launched along ``direction``.

    The first move is delta = step_factor*spacing along ``direction`` (the
    separatrix launch); afterwards the path follows the interpolated gradient
    with fixed steps, halving the step whenever it would decrease the density.
    Terminates by snapping to the nearest known peak within the snap radius,
    by gradient vanishing (status "stalled"), or by leaving an aperiodic map
    (status "boundary").  More than ``max_steps`` accepted steps raises
    :class:`TraceDivergenceError`.
    """
    spacing_min = min(dmap.spacing)
    step0 = step_factor * spacing_min
    snap_radius = snap_factor * spacing_min
    period = dmap.period if dmap.periodic else None
    peak_pos = np.array([p.position for p in peaks]).reshape(-1, 3)

    def nearest_peak(x):
        if peak_pos.shape[0] == 0:
            return None, np.inf
        d = np.linalg.norm(_min_image(peak_pos - x, period), axis=1)
        k = int(np.argmin(d))
        return k, float(d[k])

    # a peak owns the summit node of its own discrete basin; stalled ascents
    # are matched against these summits
    peak_summits = summits if summits is not None else peak_summit_nodes(dmap, peaks)

    def summit_snap(x, pts, vals):
        """The trilinear interpolant peaks at grid nodes, so a stalled ascent
        sits just under the summit node of its basin; snap to the peak owning
        that summit, if any."""
        k = peak_summits.get(_climb(dmap, _nearest_node(dmap, x)))
        if k is None:
            return GradientPath(np.array(pts), np.array(vals), None, "stalled")
        pts.append(peak_pos[k].copy())
        vals.append(sample_density(dmap, peak_pos[k])[0])
        return GradientPath(np.array(pts), np.array(vals), k, "peak")

    cur = np.asarray(start, dtype=float).copy()
    pts = [cur.copy()]
    vals = [sample_density(dmap, cur)[0]]

    k, d = nearest_peak(cur)
    if k is not None and d < snap_radius:
        if d > 0:
            pts.append(peak_pos[k].copy())
            vals.append(sample_density(dmap, peak_pos[k])[0])
        return GradientPath(np.array(pts), np.array(vals), k, "peak")

    # launch phase: two fixed steps along the separatrix tangent, accepted
    # unconditionally (gradient ascent at the saddle itself is dominated by
    # interpolation noise); snaps are restricted to peaks on the launch side
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    start_pos = cur.copy()
    for _ in range(2):
        cur = cur + step0 * direction
        if not in_bounds(dmap, cur):
            return GradientPath(np.array(pts), np.array(vals), None, "boundary")
        pts.append(cur.copy())
        vals.append(sample_density(dmap, cur)[0])
        k, d = nearest_peak(cur)
        if k is not None and d < snap_radius and \
                float(np.dot(_min_image(peak_pos[k] - start_pos, period), direction)) > 0.0:
            pts.append(peak_pos[k].copy())
            vals.append(sample_density(dmap, peak_pos[k])[0])
            return GradientPath(np.array(pts), np.array(vals), k, "peak")

    for _ in range(max_steps):
        k, d = nearest_peak(cur)
        if k is not None and d < snap_radius:
            pts.append(peak_pos[k].copy())
            vals.append(sample_density(dmap, peak_pos[k])[0])
            return GradientPath(np.array(pts), np.array(vals), k, "peak")
        val, grad = sample_density(dmap, cur)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < grad_tol:
            return summit_snap(cur, pts, vals)
        h = step0
        while True:
            nxt = cur + (h / gnorm) * grad
            if not in_bounds(dmap, nxt):
                return GradientPath(np.array(pts), np.array(vals), None, "boundary")
            nval = sample_density(dmap, nxt)[0]
            if nval >= val - 1e-12:
                break
            h *= 0.5
            if h < 1e-6 * step0:
                return summit_snap(cur, pts, vals)
        cur = nxt
        pts.append(cur.copy())
        vals.append(nval)
    raise TraceDivergenceError(f"no termination after {max_steps} steps")


def connect_passes(dmap: DensityMap, points, *, weight_mode: str = "pass_density") -> list[Edge]:
    """Launch two separatrix traces per pass and emit pass-peak edges.

    weight_mode "pass_density": w = max map value / pass density (dense passes
    make cheap edges); "path_min": w = 1 / min sampled density along the path.
    """
    peaks = [p for p in points if p.cp_type == "peak"]
    peak_index = [k for k, p in enumerate(points) if p.cp_type == "peak"]
    rho_max = float(dmap.values.max())
    summits = peak_summit_nodes(dmap, peaks)
    launch = 0.5 * min(dmap.spacing)

    def weight(p, path_values) -> float:
        if weight_mode == "pass_density":
            return rho_max / p.density
        if weight_mode == "path_min":
            return 1.0 / float(np.min(path_values))
        raise ValueError(f"unknown weight_mode {weight_mode!r}")

    edges: list[Edge] = []
    for k, p in enumerate(points):
        if p.cp_type != "pass":
            continue
        v_up = p.eigenvectors[:, 2]        # eigenvalues ascend; a pass has one positive
        legs: dict[float, GradientPath] = {}
        for sign in (1.0, -1.0):
            try:
                legs[sign] = trace_gradient_path(dmap, p.position, sign * v_up, peaks,
                                                 summits=summits)
            except TraceDivergenceError as exc:
                logger.warning("pass %d: trace diverged (%s)", k, exc)

        found: dict[int, Edge] = {}
        for sign, path in legs.items():
            if path.status != "peak":
                logger.debug("pass %d: trace ended with status %s", k, path.status)
                continue
            j = peak_index[path.terminal_peak]
            if j not in found:
                found[j] = Edge(i=k, j=j, weight=weight(p, path.values), path=path.points)

        if len(found) < 2:
            # the two separatrices must reach two basins; when the continuous
            # trace is ambiguous (flat saddle region), fall back to a discrete
            # ascent from a point nudged off the saddle
            for sign in (1.0, -1.0):
                start = p.position + sign * launch * v_up
                if not in_bounds(dmap, start):
                    continue
                t = summits.get(_climb(dmap, _nearest_node(dmap, start)))
                if t is None:
                    continue
                j = peak_index[t]
                if j not in found:
                    poly = np.array([p.position, start, peaks[t].position])
                    vals = np.array([sample_density(dmap, q)[0] for q in poly])
                    found[j] = Edge(i=k, j=j, weight=weight(p, vals), path=poly)

        if not found:
            logger.info("pass %d at %s: both traces failed, kept isolated",
                        k, np.round(p.position, 3).tolist())
        edges.extend(found[j] for j in sorted(found))
    return edges


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def minimum_spanning_forest(n_nodes: int, edges: list[Edge]) -> list[Edge]:
    """Kruskal over every connected component; ties broken by (i, j) order."""
    uf = _UnionFind(n_nodes)
    kept = []
    for e in sorted(edges, key=lambda e: (e.weight, e.i, e.j)):
        if uf.union(e.i, e.j):
            kept.append(e)
    return kept


def build_graph(dmap: DensityMap, points, *, weight_mode: str = "pass_density") -> CPGraph:
    """Connection graph reduced to its minimum spanning forest."""
    nodes = list(points)
    edges = connect_passes(dmap, nodes, weight_mode=weight_mode)
    return CPGraph(nodes=nodes, edges=minimum_spanning_forest(len(nodes), edges))


def prune_graph(graph: CPGraph, density_floor: float) -> CPGraph:
    """Drop nodes below the floor with their edges, then drop passes left with
    no edge at all."""
    keep = [k for k, n in enumerate(graph.nodes) if n.density >= density_floor]
    remap = {old: new for new, old in enumerate(keep)}
    edges = [
        Edge(i=remap[e.i], j=remap[e.j], weight=e.weight, path=e.path)
        for e in graph.edges
        if e.i in remap and e.j in remap
    ]
    degree: dict[int, int] = {}
    for e in edges:
        degree[e.i] = degree.get(e.i, 0) + 1
        degree[e.j] = degree.get(e.j, 0) + 1
    final = [
        k for k, old in enumerate(keep)
        if not (graph.nodes[old].cp_type == "pass" and degree.get(k, 0) == 0)
    ]
    remap2 = {old: new for new, old in enumerate(final)}
    nodes = [graph.nodes[keep[old]] for old in final]
    edges = [Edge(i=remap2[e.i], j=remap2[e.j], weight=e.weight, path=e.path) for e in edges]
    return CPGraph(nodes=nodes, edges=edges)


def forest_components(n_nodes: int, edges: list[Edge]) -> int:
    uf = _UnionFind(n_nodes)
    for e in edges:
        uf.union(e.i, e.j)
    return len({uf.find(k) for k in range(n_nodes)})


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def graph_to_json(graph: CPGraph) -> str:
    recs = {
        "nodes": [
            {
                "position": [float(x) for x in n.position],
                "density": float(n.density),
                "eigenvalues": [float(e) for e in n.eigenvalues] if hasattr(n, "eigenvalues") else None,
                "type": n.cp_type,
            }
            for n in graph.nodes
        ],
        "edges": [
            {
                "i": e.i,
                "j": e.j,
                "w": float(e.weight),
                "path": [[float(x) for x in p] for p in e.path],
            }
            for e in graph.edges
        ],
    }
    return json.dumps(recs, indent=1)


def graph_from_json(text: str) -> CPGraph:
    data = json.loads(text)
    nodes = [
        SimpleNode(position=np.asarray(r["position"], dtype=float),
                   density=float(r["density"]), cp_type=r["type"])
        for r in data["nodes"]
    ]
    edges = [
        Edge(i=int(r["i"]), j=int(r["j"]), weight=float(r["w"]),
             path=np.asarray(r["path"], dtype=float).reshape(-1, 3))
        for r in data["edges"]
    ]
    return CPGraph(nodes=nodes, edges=edges)
