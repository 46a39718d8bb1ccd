"""Locate, refine and classify critical points of a density map.

Candidate grid nodes are extremal along each of the three grid axes.  Around
each candidate the field is modelled by least squares in the tensor-product
cubic space (tricubic, all cross terms) over the 5x5x5 window; the critical
point is the Newton zero of the model gradient and is typed by the signs of
the model Hessian eigenvalues (3 negative = peak, 2 = pass, 1 = pale,
0 = pit).  The three pure-axis cubics of the window are kept on the model:
a rank-1 product of them reproduces separable fields but its Hessian is
diagonal at its own critical points, which mistypes saddles whose principal
axes are rotated off the grid; the full tensor-product fit keeps the cross
curvatures.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly

from mapmotif.mapio import DensityMap

logger = logging.getLogger(__name__)

CP_TYPES = {3: "peak", 2: "pass", 1: "pale", 0: "pit"}

DENSITY_FLOOR_RHO0 = 1e-12


class ModelFitError(ValueError):
    """Local model undefined (e.g. vanishing center density)."""


class RefinementError(RuntimeError):
    """Newton refinement diverged, left the trust region or hit a singular step."""


class DegeneratePointError(RuntimeError):
    """A Hessian eigenvalue is numerically zero; the point cannot be typed."""


@dataclass
class ExtractConfig:
    density_floor_k: float = 1.0
    include_all_types: bool = False
    dedupe_factor: float = 0.5       # fraction of min spacing
    newton_tol: float = 1e-8
    max_newton_iter: int = 25
    trust_radius: float = 1.5        # grid steps from the window center
    degeneracy_rel: float = 1e-6     # relative to max |eigenvalue|
    cell_seeds: bool = True          # also seed from gradient sign-change cells


@dataclass(eq=False)
class LocalModel:
    """Tricubic model around a grid node, in window offset coordinates
    (grid steps from the center node).

    ``coeffs[i, j, k]`` multiplies u^i v^j w^k.  ``axis_coeffs[a]`` are the
    low-to-high coefficients of the independent least-squares cubic through
    the 5 on-axis samples along axis ``a`` (the pure-axis view of the window).
    """

    center: tuple[int, int, int]
    coeffs: np.ndarray            # (4, 4, 4) tricubic coefficients
    axis_coeffs: np.ndarray       # (3, 4) per-axis 1D cubics
    rho0: float
    spacing: tuple[float, float, float]
    node_position: np.ndarray     # cartesian position of the center node

    def __post_init__(self):
        c = self.coeffs
        dx = npoly.polyder(c, 1, axis=0)
        dy = npoly.polyder(c, 1, axis=1)
        dz = npoly.polyder(c, 1, axis=2)
        self._d1 = (dx, dy, dz)
        self._d2 = (
            (npoly.polyder(dx, 1, axis=0), npoly.polyder(dx, 1, axis=1), npoly.polyder(dx, 1, axis=2)),
            (None, npoly.polyder(dy, 1, axis=1), npoly.polyder(dy, 1, axis=2)),
            (None, None, npoly.polyder(dz, 1, axis=2)),
        )

    def value(self, u) -> float:
        return float(npoly.polyval3d(u[0], u[1], u[2], self.coeffs))

    def gradient(self, u) -> np.ndarray:
        return np.array([float(npoly.polyval3d(u[0], u[1], u[2], d)) for d in self._d1])

    def hessian(self, u) -> np.ndarray:
        h = np.empty((3, 3))
        for a in range(3):
            for b in range(a, 3):
                h[a, b] = h[b, a] = float(npoly.polyval3d(u[0], u[1], u[2], self._d2[a][b]))
        return h

    def axis_polynomial(self, axis: int) -> np.ndarray:
        return self.axis_coeffs[axis]

    def to_position(self, u) -> np.ndarray:
        return self.node_position + np.asarray(u) * np.asarray(self.spacing)


@dataclass(eq=False)
class CriticalPoint:
    position: np.ndarray          # cartesian, angstrom
    density: float
    eigenvalues: np.ndarray       # ascending
    eigenvectors: np.ndarray      # columns match eigenvalues
    cp_type: str
    n_negative: int

    def is_peak(self) -> bool:
        return self.cp_type == "peak"

    def is_pass(self) -> bool:
        return self.cp_type == "pass"


@dataclass
class ExtractionResult:
    points: list[CriticalPoint]
    rejections: list[tuple[tuple[int, int, int], str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    @property
    def degenerate_rejections(self) -> int:
        return sum(1 for _, reason in self.rejections if reason == "degenerate")


def find_candidates(dmap: DensityMap, include_minima: bool = True) -> list[tuple[int, int, int]]:
    """Grid nodes that are strict extrema (max or min, independently) along
    every grid axis.  Aperiodic maps consider interior nodes only; periodic
    maps wrap.  ``include_minima=False`` drops nodes that are minima along all
    three axes."""
    if any(n < 5 for n in dmap.dims):
        raise ValueError(f"map dims {dmap.dims} too small; need >= 5 per axis")
    v = dmap.values
    if dmap.periodic:
        ext = np.ones(v.shape, dtype=bool)
        all_min = np.ones(v.shape, dtype=bool)
        for a in range(3):
            lo = np.roll(v, 1, axis=a)
            hi = np.roll(v, -1, axis=a)
            is_max = (v > lo) & (v > hi)
            is_min = (v < lo) & (v < hi)
            ext &= is_max | is_min
            all_min &= is_min
        mask = ext & ~all_min if not include_minima else ext
        idx = np.argwhere(mask)
    else:
        core = v[1:-1, 1:-1, 1:-1]
        ext = np.ones(core.shape, dtype=bool)
        all_min = np.ones(core.shape, dtype=bool)
        sl = [slice(1, -1)] * 3
        for a in range(3):
            lo_sl, hi_sl = list(sl), list(sl)
            lo_sl[a] = slice(0, -2)
            hi_sl[a] = slice(2, None)
            lo = v[tuple(lo_sl)]
            hi = v[tuple(hi_sl)]
            is_max = (core > lo) & (core > hi)
            is_min = (core < lo) & (core < hi)
            ext &= is_max | is_min
            all_min &= is_min
        mask = ext & ~all_min if not include_minima else ext
        idx = np.argwhere(mask) + 1
    return [tuple(int(i) for i in row) for row in idx]


def _axis_nodes(dmap: DensityMap, idx, axis: int):
    """Window offsets (grid steps relative to idx) and the node indices of the
    5-node window along one axis, clamped into bounds or wrapped."""
    n = dmap.dims[axis]
    i = idx[axis]
    if dmap.periodic:
        offs = np.arange(-2, 3)
        nodes = (i + offs) % n
    else:
        lo = min(max(i - 2, 0), n - 5)
        nodes = lo + np.arange(5)
        offs = nodes - i
    return offs.astype(float), nodes.astype(int)


@lru_cache(maxsize=64)
def _window_pinv(offs_key: tuple) -> np.ndarray:
    """Pseudo-inverse of the tricubic design matrix on a 5x5x5 offset window
    (cached; interior windows all share the same offsets)."""
    offs = [np.array(o, dtype=float) for o in offs_key]
    vs = [np.vander(o, 4, increasing=True) for o in offs]
    design = np.einsum("ai,bj,ck->abcijk", vs[0], vs[1], vs[2]).reshape(125, 64)
    return np.linalg.pinv(design)


def fit_local_model(dmap: DensityMap, idx) -> LocalModel:
    """Least-squares tricubic over the 5x5x5 window around ``idx``, plus the
    three independent on-axis cubic fits."""
    idx = tuple(int(i) for i in idx)
    rho0 = float(dmap.values[idx])
    if rho0 <= DENSITY_FLOOR_RHO0:
        raise ModelFitError(f"node {idx}: center density {rho0} at or below floor")
    offsets, nodes = [], []
    for a in range(3):
        offs, node_ids = _axis_nodes(dmap, idx, a)
        offsets.append(offs)
        nodes.append(node_ids)
    samples = dmap.values[np.ix_(*nodes)]
    pinv = _window_pinv(tuple(tuple(float(x) for x in o) for o in offsets))
    coeffs = (pinv @ samples.reshape(125)).reshape(4, 4, 4)
    axis_coeffs = np.empty((3, 4))
    center_pos = [int(np.nonzero(offsets[b] == 0.0)[0][0]) for b in range(3)]
    for a in range(3):
        sel: list = list(center_pos)
        sel[a] = slice(None)
        line = samples[tuple(sel)]
        vand = np.vander(offsets[a], 4, increasing=True)
        sol, *_ = np.linalg.lstsq(vand, line, rcond=None)
        axis_coeffs[a] = sol
    return LocalModel(center=idx, coeffs=coeffs, axis_coeffs=axis_coeffs, rho0=rho0,
                      spacing=dmap.spacing, node_position=dmap.node_position(idx))


def refine_critical_point(model, start, *, tol: float = 1e-8, max_iter: int = 25,
                          trust_radius: float = 1.5, max_step: float = 0.5) -> np.ndarray:
    """Newton-iterate the model gradient to zero, starting from ``start``
    (grid-step offsets from the window center).  Steps are capped at
    ``max_step`` grid units, which keeps the iteration from catapulting
    through flat regions.

    Raises :class:`RefinementError` on divergence, a singular Hessian step, or
    when the iterate leaves the trust region around the window center.
    """
    u = np.asarray(start, dtype=float).copy()
    for _ in range(max_iter):
        g = model.gradient(u)
        if float(np.linalg.norm(g)) < tol:
            if float(np.linalg.norm(u)) > trust_radius:
                raise RefinementError(f"converged outside trust region at offset {u.tolist()}")
            return u
        h = model.hessian(u)
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            raise RefinementError("singular Hessian step") from None
        if not np.all(np.isfinite(step)):
            raise RefinementError("non-finite Newton step")
        ns = float(np.linalg.norm(step))
        if ns > max_step:
            step *= max_step / ns
        u = u + step
        if float(np.linalg.norm(u)) > trust_radius:
            raise RefinementError(f"left trust region at offset {u.tolist()}")
    raise RefinementError(f"no convergence after {max_iter} iterations")


def classify_critical_point(model, position, *, degeneracy_rel: float = 1e-6) -> CriticalPoint:
    """Type a refined offset by the eigenvalue signs of the model Hessian.

    The Hessian is rescaled to cartesian (angstrom) units before the
    eigen-decomposition so anisotropic grids type identically.
    """
    u = np.asarray(position, dtype=float)
    h = model.hessian(u)
    s = np.asarray(model.spacing)
    h_cart = h / np.outer(s, s)
    evals, evecs = np.linalg.eigh(h_cart)
    eps = degeneracy_rel * float(np.max(np.abs(evals)))
    if eps == 0.0 or np.any(np.abs(evals) < eps):
        raise DegeneratePointError(f"near-zero eigenvalue in {evals.tolist()}")
    n_negative = int(np.sum(evals < -eps))
    return CriticalPoint(
        position=model.to_position(u),
        density=float(model.value(u)),
        eigenvalues=evals,
        eigenvectors=evecs,
        cp_type=CP_TYPES[n_negative],
        n_negative=n_negative,
    )


def _cell_seed_nodes(dmap: DensityMap) -> list[tuple[tuple[int, int, int], np.ndarray]]:
    """Seeds from grid cells whose central-difference gradient components all
    change sign among the 8 corners.  Catches saddles whose principal axes are
    rotated off the grid and that the per-axis extremum test misses."""
    v = dmap.values
    grads = []
    if dmap.periodic:
        for a in range(3):
            grads.append((np.roll(v, -1, axis=a) - np.roll(v, 1, axis=a)) / 2.0)
    else:
        grads = list(np.gradient(v, edge_order=1))

    corner_shifts = [(dx, dy, dz) for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]

    def corners(arr):
        if dmap.periodic:
            return np.stack([
                np.roll(np.roll(np.roll(arr, -dx, 0), -dy, 1), -dz, 2)
                for dx, dy, dz in corner_shifts
            ])
        nx, ny, nz = arr.shape
        return np.stack([
            arr[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz]
            for dx, dy, dz in corner_shifts
        ])

    flagged = None
    for g in grads:
        c = corners(g)
        both = (c.min(axis=0) <= 0.0) & (c.max(axis=0) >= 0.0)
        flagged = both if flagged is None else (flagged & both)

    dens = corners(v)
    best_corner = dens.argmax(axis=0)
    seeds = []
    dims = np.array(dmap.dims)
    for base in np.argwhere(flagged):
        k = int(best_corner[tuple(base)])
        shift = np.array(corner_shifts[k])
        node = base + shift
        if dmap.periodic:
            node = node % dims
        start = (base + 0.5) - (base + shift)   # cell center relative to chosen corner
        seeds.append((tuple(int(i) for i in node), start.astype(float)))
    return seeds


def extract_critical_points(dmap: DensityMap, config: ExtractConfig | None = None) -> ExtractionResult:
    """Full candidate -> fit -> refine -> classify sweep with deduplication.

    Default config keeps peaks and passes with density >= mean + k*stddev of
    the map; ``include_all_types`` keeps all four types with no floor (used
    for topology audits).
    """
    cfg = config or ExtractConfig()
    seeds: list[tuple[tuple[int, int, int], np.ndarray]] = [
        (idx, np.zeros(3)) for idx in find_candidates(dmap, include_minima=cfg.include_all_types)
    ]
    if cfg.cell_seeds:
        seeds.extend(_cell_seed_nodes(dmap))

    models: dict[tuple[int, int, int], LocalModel] = {}
    raw: list[CriticalPoint] = []
    rejections: list[tuple[tuple[int, int, int], str]] = []
    dims = np.array(dmap.dims)
    for node, start in seeds:
        try:
            model = models.get(node)
            if model is None:
                model = models[node] = fit_local_model(dmap, node)
            u = refine_critical_point(model, start, tol=cfg.newton_tol,
                                      max_iter=cfg.max_newton_iter,
                                      trust_radius=cfg.trust_radius)
            # re-center the window on the node nearest the refined position:
            # the separable fit (and so the Hessian typing) is most accurate
            # near its own center; recentering is best-effort
            seen = {node}
            for _ in range(3):
                delta = np.round(u).astype(int)
                if not delta.any():
                    break
                nxt = np.array(model.center) + delta
                if dmap.periodic:
                    nxt = nxt % dims
                nxt = tuple(int(i) for i in np.minimum(np.maximum(nxt, 0), dims - 1))
                if nxt in seen:
                    break
                seen.add(nxt)
                try:
                    refit = models.get(nxt)
                    if refit is None:
                        refit = models[nxt] = fit_local_model(dmap, nxt)
                    u2 = refine_critical_point(refit, u - delta, tol=cfg.newton_tol,
                                               max_iter=cfg.max_newton_iter,
                                               trust_radius=cfg.trust_radius)
                except (ModelFitError, RefinementError):
                    break
                model, u = refit, u2
            raw.append(classify_critical_point(model, u, degeneracy_rel=cfg.degeneracy_rel))
        except ModelFitError as exc:
            rejections.append((node, "fit"))
            logger.debug("node %s: %s", node, exc)
        except DegeneratePointError as exc:
            rejections.append((node, "degenerate"))
            logger.debug("node %s: %s", node, exc)
        except RefinementError as exc:
            rejections.append((node, "refine"))
            logger.debug("node %s: %s", node, exc)

    period = dmap.period if dmap.periodic else None
    origin = np.asarray(dmap.origin)
    if period is not None:
        for p in raw:
            p.position = origin + np.mod(p.position - origin, period)

    raw.sort(key=lambda p: (-p.density, p.position[0], p.position[1], p.position[2]))
    radius = cfg.dedupe_factor * min(dmap.spacing)
    kept: list[CriticalPoint] = []
    for p in raw:
        dup = False
        for q in kept:
            d = p.position - q.position
            if period is not None:
                d = d - period * np.round(d / period)
            if float(np.linalg.norm(d)) < radius:
                dup = True
                break
        if not dup:
            kept.append(p)

    if not cfg.include_all_types:
        floor = float(dmap.values.mean() + cfg.density_floor_k * dmap.values.std())
        kept = [p for p in kept if p.cp_type in ("peak", "pass") and p.density >= floor]

    kept.sort(key=lambda p: (-p.density, p.position[0], p.position[1], p.position[2]))
    if not kept:
        logger.warning("no critical points survived extraction")
    return ExtractionResult(points=kept, rejections=rejections)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def points_to_json(points) -> str:
    """JSON array of {position, density, eigenvalues, type}, in the canonical
    (density desc, x, y, z) order."""
    recs = [
        {
            "position": [float(x) for x in p.position],
            "density": float(p.density),
            "eigenvalues": [float(e) for e in p.eigenvalues],
            "type": p.cp_type,
        }
        for p in points
    ]
    return json.dumps(recs, indent=1)


def rehydrate_points(dmap: DensityMap, text: str) -> list[CriticalPoint]:
    """Rebuild full critical points (with eigenvectors) from serialized
    records by re-fitting the local model at the node nearest each position."""
    out: list[CriticalPoint] = []
    for rec in json.loads(text):
        pos = np.asarray(rec["position"], dtype=float)
        node = np.round((pos - np.asarray(dmap.origin)) / np.asarray(dmap.spacing)).astype(int)
        if dmap.periodic:
            node = node % np.array(dmap.dims)
        else:
            node = np.minimum(np.maximum(node, 0), np.array(dmap.dims) - 1)
        node = tuple(int(i) for i in node)
        model = fit_local_model(dmap, node)
        start = (pos - model.node_position) / np.asarray(dmap.spacing)
        try:
            u = refine_critical_point(model, start)
        except RefinementError:
            u = start
        cp = classify_critical_point(model, u)
        if cp.cp_type != rec["type"]:
            logger.warning("rehydrated point at %s re-typed %s -> %s",
                           pos.tolist(), rec["type"], cp.cp_type)
        out.append(cp)
    return out
