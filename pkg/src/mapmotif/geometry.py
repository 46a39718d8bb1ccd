"""Geometric features over 4-point windows of a peak chain: the end-to-end
distance, the planar angle at the second point, and the signed torsion.

A point away from the chain ends participates in four windows, giving the full
11-attribute vector (4 torsions, 4 distances, 3 planar angles at the vertices
around the point).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

COLLINEARITY_EPS = 1e-9

FEATURE_CSV_HEADER = [
    "chain_id", "i",
    "t1", "t2", "t3", "t4",
    "d1", "d2", "d3", "d4",
    "a1", "a2", "a3",
    "d_c", "a_c", "t_c",
]


class CollinearTorsionError(ValueError):
    """Three consecutive window points are collinear; the torsion is undefined."""


class ApplicabilityError(ValueError):
    """The chain position does not admit the requested feature vector."""


@dataclass(frozen=True)
class FeatureVector3:
    distance: float        # |p4 - p1|, angstrom
    angle: float           # planar angle at p2, degrees in [0, 180]
    torsion: float         # signed dihedral, degrees in (-180, 180]


@dataclass(frozen=True)
class FeatureVector11:
    torsions: tuple[float, float, float, float]
    distances: tuple[float, float, float, float]
    angles: tuple[float, float, float]

    def as_list(self) -> list[float]:
        return [*self.torsions, *self.distances, *self.angles]


def planar_angle(p1, p2, p3) -> float:
    """Angle at p2 between the rays to p1 and p3, in degrees."""
    u = np.asarray(p1, dtype=float) - np.asarray(p2, dtype=float)
    v = np.asarray(p3, dtype=float) - np.asarray(p2, dtype=float)
    c = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def torsion_angle(p1, p2, p3, p4) -> float:
    """Signed dihedral of the bond frame b1=p2-p1, b2=p3-p2, b3=p4-p3.

    Sign convention: atan2((n1 x n2) . b2_hat, n1 . n2) with n1 = b1 x b2 and
    n2 = b2 x b3 (right-handed; an ideal right-handed helix is positive).
    """
    p1, p2, p3, p4 = (np.asarray(p, dtype=float) for p in (p1, p2, p3, p4))
    b1, b2, b3 = p2 - p1, p3 - p2, p4 - p3
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    if np.linalg.norm(n1) < COLLINEARITY_EPS or np.linalg.norm(n2) < COLLINEARITY_EPS:
        raise CollinearTorsionError("collinear triple: torsion undefined")
    b2_hat = b2 / np.linalg.norm(b2)
    return float(np.degrees(np.arctan2(np.dot(np.cross(n1, n2), b2_hat), np.dot(n1, n2))))


def window_geometry(p1, p2, p3, p4) -> FeatureVector3:
    """Distance |p4-p1|, planar angle at p2 and signed torsion of one window."""
    d = float(np.linalg.norm(np.asarray(p4, dtype=float) - np.asarray(p1, dtype=float)))
    return FeatureVector3(distance=d, angle=planar_angle(p1, p2, p3),
                          torsion=torsion_angle(p1, p2, p3, p4))


def feature_vector11(positions: np.ndarray, i: int) -> FeatureVector11:
    """All 11 attributes around chain point ``i`` (0-based).

    Defined for 3 <= i <= n-4 on chains of 7 or more points; other positions
    raise :class:`ApplicabilityError` so callers can fall back to single-window
    classification.
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    if n < 7:
        raise ApplicabilityError(f"chain of {n} points is shorter than 7")
    if not (3 <= i <= n - 4):
        raise ApplicabilityError(f"point {i} is in the 3-point margin of a {n}-point chain")
    torsions = tuple(torsion_angle(*pos[j:j + 4]) for j in range(i - 3, i + 1))
    distances = tuple(float(np.linalg.norm(pos[j + 3] - pos[j])) for j in range(i - 3, i + 1))
    angles = tuple(planar_angle(pos[v - 1], pos[v], pos[v + 1]) for v in (i - 1, i, i + 1))
    return FeatureVector11(torsions=torsions, distances=distances, angles=angles)


@dataclass
class FeatureRow:
    chain_id: str
    i: int                        # attributed chain point
    fv3: FeatureVector3
    fv11: FeatureVector11 | None = None
    label: str | None = None


def chain_feature_table(positions: np.ndarray, chain_id: str = "",
                        attribution: str = "start") -> list[FeatureRow]:
    """One row per 4-point window, attributed to its start point (or the
    second point with ``attribution="center"``); the row also carries the full
    11-vector when the attributed point sits far enough from the chain ends.

    Chains shorter than 4 points yield an empty table (with a warning).
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    if n < 4:
        logger.warning("chain %s: %d points, no 4-point window", chain_id or "?", n)
        return []
    if attribution not in ("start", "center"):
        raise ValueError(f"unknown attribution {attribution!r}")
    shift = 0 if attribution == "start" else 1
    rows = []
    for j in range(n - 3):
        i = j + shift
        fv3 = window_geometry(pos[j], pos[j + 1], pos[j + 2], pos[j + 3])
        try:
            fv11 = feature_vector11(pos, i)
        except ApplicabilityError:
            fv11 = None
        rows.append(FeatureRow(chain_id=chain_id, i=i, fv3=fv3, fv11=fv11))
    return rows


def feature_table_to_csv(rows: list[FeatureRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FEATURE_CSV_HEADER)
    for r in rows:
        full = r.fv11.as_list() if r.fv11 is not None else [""] * 11
        w.writerow([r.chain_id, r.i,
                    *(repr(v) if v != "" else "" for v in full),
                    repr(r.fv3.distance), repr(r.fv3.angle), repr(r.fv3.torsion)])
    return buf.getvalue()


def feature_table_from_csv(text: str) -> list[FeatureRow]:
    rows = []
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != FEATURE_CSV_HEADER:
        raise ValueError(f"unexpected feature CSV header: {header}")
    for rec in reader:
        chain_id, i = rec[0], int(rec[1])
        fv11 = None
        if rec[2] != "":
            vals = [float(x) for x in rec[2:13]]
            fv11 = FeatureVector11(torsions=tuple(vals[0:4]),
                                   distances=tuple(vals[4:8]),
                                   angles=tuple(vals[8:11]))
        fv3 = FeatureVector3(distance=float(rec[13]), angle=float(rec[14]),
                             torsion=float(rec[15]))
        rows.append(FeatureRow(chain_id=chain_id, i=i, fv3=fv3, fv11=fv11))
    return rows
