"""Density-map container, text map format, PDB-subset parsing and Gaussian map
synthesis.

The map file format is a plain-text exchange format (values are written with
shortest round-trip ``repr``, so write -> parse is bit-exact):

    line 1: "nx ny nz"            grid dimensions
    line 2: "sx sy sz"            grid spacing per axis, in angstroms
    line 3: "ox oy oz"            origin of node (0,0,0), in angstroms
    line 4: "periodic" or "aperiodic"
    then nx*ny*nz whitespace-separated reals, x varying fastest, then y, then z.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

MOTIF_CLASSES = ("helix", "strand", "turn", "other")

#: maximum gap (angstrom) between consecutive residue centroids of an unbroken chain
CHAIN_BREAK_DISTANCE = 6.0


class MapFormatError(ValueError):
    """Raised when map bytes do not conform to the text map format."""


class PdbFormatError(ValueError):
    """Raised when a PDB-subset record cannot be parsed."""


class OutOfBoundsError(ValueError):
    """Raised when sampling outside an aperiodic map."""


@dataclass(frozen=True, eq=False)
class DensityMap:
    """Dense non-negative scalar field on a regular 3D grid.

    ``values[ix, iy, iz]`` is the density at ``origin + (ix, iy, iz) * spacing``.
    For periodic maps the lattice period is ``dims * spacing`` per axis (node
    ``n`` aliases node 0).  Values are frozen after construction.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    periodic: bool
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if vals.shape != tuple(self.dims):
            raise ValueError(f"values shape {vals.shape} != dims {self.dims}")
        if any(int(n) < 2 for n in self.dims):
            raise ValueError(f"dims must be >= 2 per axis, got {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if vals.size and float(vals.min()) < 0.0:
            raise ValueError("density values must be non-negative")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def period(self) -> np.ndarray:
        """Lattice vector lengths (angstrom) for a periodic map."""
        return np.array(self.dims, dtype=float) * np.array(self.spacing)

    def node_position(self, idx) -> np.ndarray:
        """Cartesian position (angstrom) of grid node ``idx``."""
        return np.asarray(self.origin) + np.asarray(idx, dtype=float) * np.asarray(self.spacing)

    def equals(self, other: "DensityMap") -> bool:
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.origin == other.origin
            and self.periodic == other.periodic
            and np.array_equal(self.values, other.values)
        )


def parse_density_map(data: bytes | str) -> DensityMap:
    """Parse text map bytes into a :class:`DensityMap`.

    Raises :class:`MapFormatError` naming the offending line for malformed
    headers, value-count mismatches and negative values.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.splitlines()
    if len(lines) < 4:
        raise MapFormatError(f"expected 4 header lines, file has {len(lines)} lines")

    def _triple(line_no: int, cast, what: str):
        parts = lines[line_no].split()
        if len(parts) != 3:
            raise MapFormatError(f"line {line_no + 1}: expected 3 {what} fields, got {len(parts)}")
        try:
            return tuple(cast(p) for p in parts)
        except ValueError as exc:
            raise MapFormatError(f"line {line_no + 1}: bad {what}: {exc}") from None

    dims = _triple(0, int, "dimension")
    spacing = _triple(1, float, "spacing")
    origin = _triple(2, float, "origin")
    mode = lines[3].strip()
    if mode not in ("periodic", "aperiodic"):
        raise MapFormatError(f"line 4: expected 'periodic' or 'aperiodic', got {mode!r}")

    expected = dims[0] * dims[1] * dims[2]
    flat = np.empty(expected, dtype=np.float64)
    count = 0
    for line_no, line in enumerate(lines[4:], start=5):
        for tok in line.split():
            if count >= expected:
                raise MapFormatError(
                    f"line {line_no}: more than the expected {expected} values"
                )
            try:
                v = float(tok)
            except ValueError:
                raise MapFormatError(f"line {line_no}: bad value {tok!r}") from None
            if v < 0.0:
                raise MapFormatError(
                    f"line {line_no}: negative density {tok} at value index {count}"
                )
            flat[count] = v
            count += 1
    if count != expected:
        raise MapFormatError(
            f"value count mismatch: header implies {expected}, file has {count}"
        )
    values = flat.reshape(dims, order="F")  # x-fastest on disk
    try:
        return DensityMap(dims=dims, spacing=spacing, origin=origin,
                          periodic=(mode == "periodic"), values=values)
    except ValueError as exc:
        raise MapFormatError(str(exc)) from None


def write_density_map(dmap: DensityMap) -> bytes:
    """Serialize a map to the text format; ``parse_density_map`` returns an
    equal map (bit-exact values)."""
    nx, ny, nz = dmap.dims
    head = [
        f"{nx} {ny} {nz}",
        " ".join(repr(s) for s in dmap.spacing),
        " ".join(repr(o) for o in dmap.origin),
        "periodic" if dmap.periodic else "aperiodic",
    ]
    flat = dmap.values.reshape(-1, order="F")
    rows = flat.reshape(ny * nz, nx)
    body = [" ".join(repr(float(v)) for v in row) for row in rows]
    return ("\n".join(head + body) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# PDB subset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    name: str
    element: str
    chain: str
    residue: int
    position: np.ndarray


@dataclass
class Structure:
    """Atoms plus secondary-structure annotations from a PDB subset.

    ``annotations`` holds ``(motif, chain, first_residue, last_residue)`` with
    motif one of helix/strand/turn.
    """

    atoms: list[Atom] = field(default_factory=list)
    annotations: list[tuple[str, str, int, int]] = field(default_factory=list)

    def residues(self, chain: str) -> dict[int, dict[str, np.ndarray]]:
        out: dict[int, dict[str, np.ndarray]] = {}
        for a in self.atoms:
            if a.chain == chain:
                out.setdefault(a.residue, {})[a.name] = a.position
        return out

    def chains(self) -> list[str]:
        seen: list[str] = []
        for a in self.atoms:
            if a.chain not in seen:
                seen.append(a.chain)
        return seen


def _int_field(line: str, lo: int, hi: int, line_no: int, what: str) -> int:
    raw = line[lo:hi]
    try:
        return int(raw)
    except ValueError:
        raise PdbFormatError(f"line {line_no}: bad {what} field {raw!r}") from None


def parse_pdb_subset(text: str) -> Structure:
    """Parse ATOM/HELIX/SHEET/TURN records (fixed columns); everything else is
    ignored.  Coordinate or residue-number fields that fail to parse raise
    :class:`PdbFormatError` with the line number."""
    struct = Structure()
    for line_no, line in enumerate(text.splitlines(), start=1):
        rec = line[:6].strip()
        if rec == "ATOM":
            try:
                x = float(line[30:38])
                y = float(line[38:46])
                z = float(line[46:54])
            except ValueError:
                raise PdbFormatError(
                    f"line {line_no}: unparseable coordinate columns 31-54: "
                    f"{line[30:54]!r}"
                ) from None
            name = line[12:16].strip()
            chain = line[21] if len(line) > 21 else " "
            residue = _int_field(line, 22, 26, line_no, "residue number")
            element = line[76:78].strip() if len(line) >= 78 else ""
            if not element:
                element = name[:1]
            struct.atoms.append(Atom(name=name, element=element, chain=chain,
                                     residue=residue, position=np.array([x, y, z])))
        elif rec == "HELIX":
            chain = line[19] if len(line) > 19 else " "
            first = _int_field(line, 21, 25, line_no, "helix initial residue")
            last = _int_field(line, 33, 37, line_no, "helix terminal residue")
            struct.annotations.append(("helix", chain, first, last))
        elif rec == "SHEET":
            chain = line[21] if len(line) > 21 else " "
            first = _int_field(line, 22, 26, line_no, "sheet initial residue")
            last = _int_field(line, 33, 37, line_no, "sheet terminal residue")
            struct.annotations.append(("strand", chain, first, last))
        elif rec == "TURN":
            chain = line[19] if len(line) > 19 else " "
            first = _int_field(line, 20, 24, line_no, "turn initial residue")
            last = _int_field(line, 30, 34, line_no, "turn terminal residue")
            struct.annotations.append(("turn", chain, first, last))

    for motif, chain, first, last in list(struct.annotations):
        if first > last:
            logger.warning("dropping %s annotation with inverted range %d-%d", motif, first, last)
            struct.annotations.remove((motif, chain, first, last))
            continue
        present = {a.residue for a in struct.atoms if a.chain == chain}
        if not all(r in present for r in range(first, last + 1)):
            logger.warning(
                "dropping %s annotation %s %d-%d: residues missing from ATOM records",
                motif, chain, first, last,
            )
            struct.annotations.remove((motif, chain, first, last))
    return struct


@dataclass
class CentroidChain:
    """Per-residue CA/C/O centroids of one chain, with motif labels.

    ``breaks`` lists link indices i where the gap between centroid i and i+1
    exceeds ``CHAIN_BREAK_DISTANCE``.
    """

    chain_id: str
    residue_ids: list[int]
    positions: np.ndarray
    labels: list[str]
    breaks: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.residue_ids)


def annotation_label(annotations, chain: str, residue: int) -> str:
    for motif, ch, first, last in annotations:
        if ch == chain and first <= residue <= last:
            return motif
    return "other"


def residue_centroids(struct: Structure) -> list[CentroidChain]:
    """One centroid per residue = unweighted mean of its CA, C and O positions.

    Residues missing any of CA/C/O are skipped (logged); chains with fewer
    than 4 usable residues are dropped with a warning.
    """
    chains: list[CentroidChain] = []
    for chain in struct.chains():
        residues = struct.residues(chain)
        ids: list[int] = []
        pts: list[np.ndarray] = []
        labels: list[str] = []
        for resi in sorted(residues):
            atoms = residues[resi]
            if not all(n in atoms for n in ("CA", "C", "O")):
                logger.warning("chain %s residue %d: missing CA/C/O, skipped", chain, resi)
                continue
            ids.append(resi)
            pts.append((atoms["CA"] + atoms["C"] + atoms["O"]) / 3.0)
            labels.append(annotation_label(struct.annotations, chain, resi))
        if len(ids) < 4:
            logger.warning("chain %s: only %d usable residues, excluded", chain, len(ids))
            continue
        positions = np.array(pts)
        gaps = np.linalg.norm(np.diff(positions, axis=0), axis=1)
        breaks = [int(i) for i in np.nonzero(gaps >= CHAIN_BREAK_DISTANCE)[0]]
        if breaks:
            logger.warning("chain %s: %d chain break(s) flagged", chain, len(breaks))
        chains.append(CentroidChain(chain_id=chain, residue_ids=ids, positions=positions,
                                    labels=labels, breaks=breaks))
    return chains


# ---------------------------------------------------------------------------
# Gaussian synthesis and sampling
# ---------------------------------------------------------------------------

def synthesize_map(
    points,
    resolution: float,
    spacing: float | None = None,
    padding: float | None = None,
    periodic: bool = False,
) -> DensityMap:
    """Build a map as a sum of isotropic Gaussians, sigma = resolution / 3.

    ``points`` is a sequence of ``(position, weight)``.  The grid covers the
    bounding box of the points plus ``padding`` on every side.  Periodic maps
    add the Gaussian images of the neighbouring lattice shell (+-1 cell per
    axis); images beyond one shell are negligible for any padding above a few
    sigma and are not summed.
    """
    pts = [(np.asarray(p, dtype=float), float(w)) for p, w in points]
    if not pts:
        raise ValueError("at least one point is required")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if any(w <= 0 for _, w in pts):
        raise ValueError("point weights must be positive")
    sigma = resolution / 3.0
    if spacing is None:
        spacing = sigma
    if spacing > sigma * (1.0 + 1e-12):
        raise ValueError(
            f"spacing {spacing} exceeds resolution/3 = {sigma:.6g}: map would be undersampled"
        )
    if padding is None:
        padding = 2.0 * resolution

    coords = np.array([p for p, _ in pts])
    lo = coords.min(axis=0) - padding
    hi = coords.max(axis=0) + padding
    dims = tuple(max(5, int(math.ceil((hi[a] - lo[a]) / spacing)) + 1) for a in range(3))

    axes = [lo[a] + spacing * np.arange(dims[a]) for a in range(3)]
    values = np.zeros(dims)
    shifts = [-1.0, 0.0, 1.0] if periodic else [0.0]
    period = np.array(dims, dtype=float) * spacing
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    for pos, w in pts:
        factors = []
        for a in range(3):
            f = np.zeros(dims[a])
            for m in shifts:
                d = axes[a] - (pos[a] + m * period[a])
                f += np.exp(-d * d * inv2s2)
            factors.append(f)
        values += w * factors[0][:, None, None] * factors[1][None, :, None] * factors[2][None, None, :]

    return DensityMap(dims=dims, spacing=(spacing,) * 3, origin=tuple(lo),
                      periodic=periodic, values=values)


def _interpolate(dmap: DensityMap, t: np.ndarray) -> float:
    """Trilinear interpolation at fractional grid coordinate ``t``."""
    n = dmap.dims
    base = np.floor(t).astype(int)
    frac = t - base
    if dmap.periodic:
        i0 = base % np.array(n)
        i1 = (base + 1) % np.array(n)
    else:
        base = np.minimum(np.maximum(base, 0), np.array(n) - 2)
        frac = t - base
        i0 = base
        i1 = base + 1
    v = dmap.values
    fx, fy, fz = frac
    c00 = v[i0[0], i0[1], i0[2]] * (1 - fx) + v[i1[0], i0[1], i0[2]] * fx
    c10 = v[i0[0], i1[1], i0[2]] * (1 - fx) + v[i1[0], i1[1], i0[2]] * fx
    c01 = v[i0[0], i0[1], i1[2]] * (1 - fx) + v[i1[0], i0[1], i1[2]] * fx
    c11 = v[i0[0], i1[1], i1[2]] * (1 - fx) + v[i1[0], i1[1], i1[2]] * fx
    return float((c00 * (1 - fy) + c10 * fy) * (1 - fz) + (c01 * (1 - fy) + c11 * fy) * fz)


def _to_grid(dmap: DensityMap, p: np.ndarray) -> np.ndarray:
    return (np.asarray(p, dtype=float) - np.asarray(dmap.origin)) / np.asarray(dmap.spacing)


def in_bounds(dmap: DensityMap, p) -> bool:
    if dmap.periodic:
        return True
    t = _to_grid(dmap, p)
    n = np.array(dmap.dims)
    return bool(np.all(t >= -1e-9) and np.all(t <= n - 1 + 1e-9))


def sample_density(dmap: DensityMap, p) -> tuple[float, np.ndarray]:
    """Trilinearly interpolated value and central-difference gradient at ``p``.

    The gradient probes are offset by spacing/4 per axis; near the edge of an
    aperiodic map the probes are clamped into bounds and the actual probe
    separation is used as denominator.
    """
    p = np.asarray(p, dtype=float)
    if not in_bounds(dmap, p):
        raise OutOfBoundsError(f"position {p.tolist()} outside aperiodic map")
    value = _interpolate(dmap, _to_grid(dmap, p))
    spacing = np.asarray(dmap.spacing)
    lo = np.asarray(dmap.origin)
    hi = lo + (np.array(dmap.dims) - 1) * spacing
    grad = np.empty(3)
    for a in range(3):
        h = spacing[a] / 4.0
        pp, pm = p.copy(), p.copy()
        pp[a] += h
        pm[a] -= h
        if not dmap.periodic:
            pp[a] = min(pp[a], hi[a])
            pm[a] = max(pm[a], lo[a])
        denom = pp[a] - pm[a]
        grad[a] = (_interpolate(dmap, _to_grid(dmap, pp)) - _interpolate(dmap, _to_grid(dmap, pm))) / denom
    return value, grad
