"""Generators for idealized backbone centroid chains and small synthetic PDB
entries, used to synthesize training corpora and benchmark maps.

Helix parameters follow the canonical backbone-centroid geometry (radius
2.3 A, rise 1.5 A per residue, 100 degrees of turn per residue), which puts
consecutive centroids about 3.8 A apart and d(i, i+3) near 5.05 A.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HELIX_RADIUS = 2.3
HELIX_RISE = 1.5
HELIX_TURN_DEG = 100.0


def helix_centroids(n: int, radius: float = HELIX_RADIUS, rise: float = HELIX_RISE,
                    turn_deg: float = HELIX_TURN_DEG) -> np.ndarray:
    t = np.arange(n) * np.deg2rad(turn_deg)
    return np.stack([radius * np.cos(t), radius * np.sin(t), rise * np.arange(n)], axis=1)


def helix_axis(n: int, rise: float = HELIX_RISE) -> np.ndarray:
    """The central axis polyline matching :func:`helix_centroids`."""
    return np.array([[0.0, 0.0, 0.0], [0.0, 0.0, rise * (n - 1)]])


def strand_centroids(n: int, step: float = 3.3, offset: float = 0.8) -> np.ndarray:
    """Near-straight zigzag with extended-chain geometry (d(i,i+3) ~ 10 A)."""
    x = step * np.arange(n)
    y = np.where(np.arange(n) % 2 == 0, -offset, offset)
    return np.stack([x, y, np.zeros(n)], axis=1)


def turn_centroids(n: int = 4, radius: float = 3.0, step_deg: float = 75.0,
                   pitch: float = 0.4) -> np.ndarray:
    t = np.arange(n) * np.deg2rad(step_deg)
    return np.stack([radius * np.cos(t), radius * np.sin(t), pitch * np.arange(n)], axis=1)


def coil_centroids(n: int, rng: np.random.Generator, step: float = 3.7) -> np.ndarray:
    """Irregular but smooth walk: the direction diffuses on the sphere."""
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    pts = [np.zeros(3)]
    for _ in range(n - 1):
        d = d + 0.8 * rng.normal(size=3)
        d /= np.linalg.norm(d)
        pts.append(pts[-1] + step * d)
    return np.array(pts)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass
class IdealChain:
    chain_id: str
    positions: np.ndarray
    labels: list[str]


_SEGMENT_BUILDERS = {
    "helix": lambda n, rng: helix_centroids(n),
    "strand": lambda n, rng: strand_centroids(n),
    "turn": lambda n, rng: turn_centroids(n),
    "other": lambda n, rng: coil_centroids(n, rng),
}


def build_chain(segments: list[tuple[str, int]], rng: np.random.Generator,
                jitter: float = 0.12, chain_id: str = "A") -> IdealChain:
    """Concatenate motif segments into one chain.

    Each segment is generated in local coordinates, randomly rotated, and
    translated so it continues ~3.7 A from the previous segment's end; a small
    seeded positional jitter keeps the per-class geometry distributions
    non-degenerate.
    """
    positions: list[np.ndarray] = []
    labels: list[str] = []
    cursor = np.zeros(3)
    for motif, n in segments:
        seg = _SEGMENT_BUILDERS[motif](n, rng)
        rot = random_rotation(rng)
        seg = seg @ rot.T
        if positions:
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            start = cursor + 3.7 * direction
        else:
            start = cursor
        seg = seg - seg[0] + start
        positions.extend(seg)
        labels.extend([motif] * n)
        cursor = seg[-1]
    pos = np.array(positions)
    if jitter > 0:
        pos = pos + rng.normal(scale=jitter, size=pos.shape)
    return IdealChain(chain_id=chain_id, positions=pos, labels=labels)


def default_composition(rng: np.random.Generator) -> list[tuple[str, int]]:
    """A small mixed-motif protein layout; segment lengths vary per entry."""
    return [
        ("other", int(rng.integers(4, 6))),
        ("helix", int(rng.integers(9, 14))),
        ("turn", int(rng.integers(4, 6))),
        ("strand", int(rng.integers(6, 10))),
        ("turn", int(rng.integers(4, 6))),
        ("strand", int(rng.integers(6, 10))),
        ("other", int(rng.integers(4, 6))),
        ("helix", int(rng.integers(8, 12))),
        ("other", int(rng.integers(4, 6))),
    ]


def ideal_corpus(n_entries: int, seed: int = 0) -> list[IdealChain]:
    rng = np.random.default_rng(seed)
    return [build_chain(default_composition(rng), rng, chain_id="A")
            for _ in range(n_entries)]


# ---------------------------------------------------------------------------
# Synthetic PDB entries
# ---------------------------------------------------------------------------

def _put(line: list[str], col: int, text: str):
    """Write text at 1-based PDB column ``col``."""
    for k, ch in enumerate(text):
        line[col - 1 + k] = ch


def _format_atom(serial: int, name: str, resname: str, chain: str, resi: int,
                 pos: np.ndarray, element: str) -> str:
    line = [" "] * 80
    _put(line, 1, "ATOM")
    _put(line, 7, f"{serial:>5d}")
    _put(line, 13, f" {name:<3s}")
    _put(line, 18, f"{resname:>3s}")
    _put(line, 22, chain)
    _put(line, 23, f"{resi:>4d}")
    _put(line, 31, f"{pos[0]:>8.3f}")
    _put(line, 39, f"{pos[1]:>8.3f}")
    _put(line, 47, f"{pos[2]:>8.3f}")
    _put(line, 55, f"{1.00:>6.2f}")
    _put(line, 61, f"{0.00:>6.2f}")
    _put(line, 77, f"{element:>2s}")
    return "".join(line).rstrip()


def _label_runs(labels: list[str]) -> list[tuple[str, int, int]]:
    runs = []
    k = 0
    while k < len(labels):
        j = k
        while j < len(labels) and labels[j] == labels[k]:
            j += 1
        if labels[k] in ("helix", "strand", "turn"):
            runs.append((labels[k], k, j - 1))
        k = j
    return runs


def chain_to_pdb(chain: IdealChain) -> str:
    """Synthetic PDB entry whose CA/C/O centroids reproduce the chain exactly.

    The three backbone atoms are placed symmetrically around each designed
    centroid, and HELIX/SHEET/TURN records annotate the motif runs.
    """
    lines: list[str] = []
    serial_h = 1
    serial_s = 1
    serial_t = 1
    for motif, first, last in _label_runs(chain.labels):
        rec = [" "] * 80
        if motif == "helix":
            _put(rec, 1, "HELIX")
            _put(rec, 8, f"{serial_h:>3d}")
            _put(rec, 12, f"H{serial_h:<2d}")
            _put(rec, 16, "ALA")
            _put(rec, 20, chain.chain_id)
            _put(rec, 22, f"{first + 1:>4d}")
            _put(rec, 28, "ALA")
            _put(rec, 32, chain.chain_id)
            _put(rec, 34, f"{last + 1:>4d}")
            _put(rec, 39, f"{1:>2d}")
            serial_h += 1
        elif motif == "strand":
            _put(rec, 1, "SHEET")
            _put(rec, 8, f"{serial_s:>3d}")
            _put(rec, 12, f"S{serial_s:<2d}")
            _put(rec, 15, f"{1:>2d}")
            _put(rec, 18, "ALA")
            _put(rec, 22, chain.chain_id)
            _put(rec, 23, f"{first + 1:>4d}")
            _put(rec, 29, "ALA")
            _put(rec, 33, chain.chain_id)
            _put(rec, 34, f"{last + 1:>4d}")
            _put(rec, 39, f"{0:>2d}")
            serial_s += 1
        else:
            _put(rec, 1, "TURN")
            _put(rec, 8, f"{serial_t:>3d}")
            _put(rec, 12, f"T{serial_t:<2d}")
            _put(rec, 16, "ALA")
            _put(rec, 20, chain.chain_id)
            _put(rec, 21, f"{first + 1:>4d}")
            _put(rec, 26, "ALA")
            _put(rec, 30, chain.chain_id)
            _put(rec, 31, f"{last + 1:>4d}")
            serial_t += 1
        lines.append("".join(rec).rstrip())

    serial = 1
    for k, centroid in enumerate(chain.positions):
        resi = k + 1
        phase = 0.7 * k
        u = 0.9 * np.array([np.cos(phase), np.sin(phase), 0.3 * np.sin(2 * phase)])
        v = 0.9 * np.array([-np.sin(phase), np.cos(phase), 0.3 * np.cos(2 * phase)])
        for name, element, d in (("CA", "C", u), ("C", "C", v), ("O", "O", -u - v)):
            lines.append(_format_atom(serial, name, "ALA", chain.chain_id, resi,
                                      centroid + d, element))
            serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"
