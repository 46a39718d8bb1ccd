"""Secondary-structure classification of peak chains.

Two classifiers share the geometric feature tables: a certainty-factor scheme
(per-feature belief/disbelief from binned frequency tables, combined with the
classic parallel-combination formula, class = argmax of belief minus
disbelief) and a naive Bayes scheme (class-conditional 1D mixtures over all 11
window attributes, Gaussian for distances and von Mises for angles).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from mapmotif.geometry import FeatureRow, chain_feature_table
from mapmotif.mixtures import Mixture, fit_mixture

logger = logging.getLogger(__name__)

CLASSES = ("helix", "strand", "turn", "other")

DISTANCE_EDGES = np.arange(2.0, 14.0 + 1e-9, 0.5)
ANGLE_EDGES = np.arange(0.0, 180.0 + 1e-9, 10.0)
TORSION_EDGES = np.arange(-180.0, 180.0 + 1e-9, 15.0)

FEATURE_EDGES = {"distance": DISTANCE_EDGES, "angle": ANGLE_EDGES, "torsion": TORSION_EDGES}

# the 11 window attributes, in feature-table column order
ATTRIBUTES = (
    [(f"t{k}", "torsion") for k in range(1, 5)]
    + [(f"d{k}", "distance") for k in range(1, 5)]
    + [(f"a{k}", "angle") for k in range(1, 4)]
)


class TrainingError(ValueError):
    """Raised when a classifier cannot be trained from the given rows."""


def bin_index(feature: str, value: float) -> int:
    """Right-closed bins: a value exactly on an edge joins the lower bin;
    out-of-range values clamp to the end bins (logged)."""
    edges = FEATURE_EDGES[feature]
    width = edges[1] - edges[0]
    raw = int(np.ceil((value - edges[0]) / width)) - 1
    n_bins = len(edges) - 1
    if raw < 0 or raw >= n_bins:
        logger.debug("feature %s value %.3f outside [%s, %s], clamped",
                     feature, value, edges[0], edges[-1])
    return min(max(raw, 0), n_bins - 1)


# ---------------------------------------------------------------------------
# Certainty-factor classifier
# ---------------------------------------------------------------------------

@dataclass
class HistogramModel:
    """Binned per-class frequency tables for each constraint family.

    ``mode="posterior"`` reads the belief in class c for an observed bin as
    the smoothed posterior P(c | bin), with disbelief its complement.
    ``mode="likelihood"`` instead uses the per-class bin likelihood normalized
    by its modal bin, with disbelief built the same way from the pooled
    complement classes.
    """

    counts: dict[str, np.ndarray]        # feature -> (4 classes, n_bins)
    alpha: float = 1.0
    mode: str = "posterior"

    def belief(self, cls: str, feature: str, value: float) -> tuple[float, float]:
        c = CLASSES.index(cls)
        table = self.counts[feature]
        b = bin_index(feature, value)
        a = self.alpha
        if self.mode == "posterior":
            mb = (table[c, b] + a) / (table[:, b].sum() + len(CLASSES) * a)
            return float(mb), float(1.0 - mb)
        lik = (table[c] + a) / (table[c].sum() + a * table.shape[1])
        mb = lik[b] / lik.max()
        rest = table.sum(axis=0) - table[c]
        lik_not = (rest + a) / (rest.sum() + a * table.shape[1])
        md = lik_not[b] / lik_not.max()
        return float(mb), float(md)

    def to_json(self) -> str:
        return json.dumps({
            "kind": "histogram",
            "alpha": self.alpha,
            "mode": self.mode,
            "edges": {f: e.tolist() for f, e in FEATURE_EDGES.items()},
            "counts": {f: t.tolist() for f, t in self.counts.items()},
            "classes": list(CLASSES),
        }, indent=1)

    @staticmethod
    def from_json(text: str) -> "HistogramModel":
        d = json.loads(text)
        if d.get("kind") != "histogram":
            raise ValueError("not a histogram model file")
        return HistogramModel(
            counts={f: np.asarray(t, dtype=float) for f, t in d["counts"].items()},
            alpha=float(d["alpha"]), mode=d["mode"])


def train_mycin(rows: list[FeatureRow], alpha: float = 1.0, mode: str = "posterior") -> HistogramModel:
    """Accumulate the per-window (distance, angle, torsion) triple of every
    labeled row into the per-class frequency tables."""
    labeled = [r for r in rows if r.label in CLASSES]
    if not labeled:
        raise TrainingError("no labeled rows to train on")
    counts = {f: np.zeros((len(CLASSES), len(FEATURE_EDGES[f]) - 1)) for f in FEATURE_EDGES}
    for r in labeled:
        c = CLASSES.index(r.label)
        counts["distance"][c, bin_index("distance", r.fv3.distance)] += 1
        counts["angle"][c, bin_index("angle", r.fv3.angle)] += 1
        counts["torsion"][c, bin_index("torsion", r.fv3.torsion)] += 1
    for cls in CLASSES:
        if not any(r.label == cls for r in labeled):
            logger.warning("class %r has no training rows; its beliefs are prior-only", cls)
    return HistogramModel(counts=counts, alpha=alpha, mode=mode)


def belief_measures(model: HistogramModel, cls: str, row: FeatureRow,
                    evidence: str = "fv3") -> list[tuple[float, float]]:
    """Per-feature (belief, disbelief) pairs for one window.

    ``evidence="fv3"`` uses the window triple; ``"full"`` uses all 11
    attributes when available, falling back to the triple otherwise.
    """
    if evidence == "full" and row.fv11 is not None:
        pairs = [model.belief(cls, "torsion", t) for t in row.fv11.torsions]
        pairs += [model.belief(cls, "distance", d) for d in row.fv11.distances]
        pairs += [model.belief(cls, "angle", a) for a in row.fv11.angles]
        return pairs
    return [
        model.belief(cls, "distance", row.fv3.distance),
        model.belief(cls, "angle", row.fv3.angle),
        model.belief(cls, "torsion", row.fv3.torsion),
    ]


def combine_evidence(pairs) -> tuple[float, float]:
    """Left fold of the parallel combination b <- b1 + b2(1-b1), applied to
    beliefs and disbeliefs independently."""
    mb, md = 0.0, 0.0
    for b, d in pairs:
        if not (0.0 <= b <= 1.0 and 0.0 <= d <= 1.0):
            raise ValueError(f"belief pair ({b}, {d}) outside [0, 1]")
        mb = mb + b * (1.0 - mb)
        md = md + d * (1.0 - md)
    return mb, md


def certainty_factor(mb: float, md: float) -> float:
    return mb - md


@dataclass
class ChainLabels:
    """Per-point classification of one chain: label is None where the
    classifier is not applicable; scores has one column per class."""
    chain_id: str
    labels: list[str | None]
    scores: np.ndarray            # (n_points, 4); NaN where not applicable


def _argmax_label(values: np.ndarray) -> str:
    best = np.max(values)
    for k, cls in enumerate(CLASSES):          # tie-break: fixed class order
        if values[k] == best:
            return cls
    return CLASSES[-1]


def classify_mycin(positions: np.ndarray, model: HistogramModel, *,
                   chain_id: str = "", evidence: str = "fv3",
                   attribution: str = "start") -> ChainLabels:
    """Per-point certainty factors and argmax labels for one chain.

    Chains shorter than 4 points return an all-unclassified result.
    """
    n = np.asarray(positions).reshape(-1, 3).shape[0]
    labels: list[str | None] = [None] * n
    scores = np.full((n, len(CLASSES)), np.nan)
    if n < 4:
        logger.warning("chain %s: %d points < 4, unclassified", chain_id or "?", n)
        return ChainLabels(chain_id=chain_id, labels=labels, scores=scores)
    for row in chain_feature_table(positions, chain_id=chain_id, attribution=attribution):
        cfs = np.array([
            certainty_factor(*combine_evidence(belief_measures(model, cls, row, evidence)))
            for cls in CLASSES
        ])
        scores[row.i] = cfs
        labels[row.i] = _argmax_label(cfs)
    return ChainLabels(chain_id=chain_id, labels=labels, scores=scores)


# ---------------------------------------------------------------------------
# Naive Bayes classifier
# ---------------------------------------------------------------------------

@dataclass
class BayesConfig:
    max_components: int = 2
    em_restarts: int = 5
    seed: int = 0


@dataclass
class BayesModel:
    """Class priors plus, for each class and window attribute, a fitted 1D
    mixture (Gaussian for distances, von Mises over radians for angles)."""

    priors: np.ndarray                                  # (4,)
    mixtures: dict[str, dict[str, Mixture]]             # class -> attr -> Mixture
    config: BayesConfig = field(default_factory=BayesConfig)

    def to_json(self) -> str:
        return json.dumps({
            "kind": "bayes",
            "priors": self.priors.tolist(),
            "classes": list(CLASSES),
            "config": {"max_components": self.config.max_components,
                       "em_restarts": self.config.em_restarts,
                       "seed": self.config.seed},
            "mixtures": {cls: {attr: mix.to_dict() for attr, mix in attrs.items()}
                         for cls, attrs in self.mixtures.items()},
        }, indent=1)

    @staticmethod
    def from_json(text: str) -> "BayesModel":
        d = json.loads(text)
        if d.get("kind") != "bayes":
            raise ValueError("not a bayes model file")
        cfg = BayesConfig(**d["config"])
        mixtures = {cls: {attr: Mixture.from_dict(m) for attr, m in attrs.items()}
                    for cls, attrs in d["mixtures"].items()}
        return BayesModel(priors=np.asarray(d["priors"], dtype=float),
                          mixtures=mixtures, config=cfg)


def _attribute_values(row: FeatureRow) -> dict[str, float]:
    fv = row.fv11
    vals = {f"t{k + 1}": np.deg2rad(fv.torsions[k]) for k in range(4)}
    vals.update({f"d{k + 1}": fv.distances[k] for k in range(4)})
    vals.update({f"a{k + 1}": np.deg2rad(fv.angles[k]) for k in range(3)})
    return vals


def train_bayes(rows: list[FeatureRow], config: BayesConfig | None = None) -> BayesModel:
    """Fit per-class mixtures over the 11 attributes of every row that has
    the full vector.  Deterministic for a fixed seed."""
    cfg = config or BayesConfig()
    labeled = [r for r in rows if r.label in CLASSES and r.fv11 is not None]
    if not labeled:
        raise TrainingError("no labeled full-vector rows to train on")
    rng = np.random.default_rng(cfg.seed)
    counts = np.array([sum(1 for r in labeled if r.label == cls) for cls in CLASSES], dtype=float)
    priors = (counts + 1.0) / (counts.sum() + len(CLASSES))

    all_values = {attr: np.array([_attribute_values(r)[attr] for r in labeled])
                  for attr, _ in ATTRIBUTES}
    mixtures: dict[str, dict[str, Mixture]] = {}
    for cls in CLASSES:
        cls_rows = [r for r in labeled if r.label == cls]
        mixtures[cls] = {}
        for attr, family in ATTRIBUTES:
            kind = "gaussian" if family == "distance" else "von_mises"
            if cls_rows:
                x = np.array([_attribute_values(r)[attr] for r in cls_rows])
            else:
                # no data for this class: fall back to the pooled attribute
                logger.warning("class %r has no rows; using pooled fit for %s", cls, attr)
                x = all_values[attr]
            mixtures[cls][attr] = fit_mixture(
                x, kind, rng, max_components=cfg.max_components, restarts=cfg.em_restarts)
    return BayesModel(priors=priors, mixtures=mixtures, config=cfg)


def classify_bayes(positions: np.ndarray, model: BayesModel, *,
                   chain_id: str = "", attribution: str = "start") -> ChainLabels:
    """Per-point posteriors (log-space naive combination over 11 attributes)
    and argmax labels.  Points in the 3-point chain margins stay unclassified.
    """
    pos = np.asarray(positions).reshape(-1, 3)
    n = pos.shape[0]
    labels: list[str | None] = [None] * n
    scores = np.full((n, len(CLASSES)), np.nan)
    if n < 7:
        logger.warning("chain %s: %d points < 7, unclassified by the Bayes module",
                       chain_id or "?", n)
        return ChainLabels(chain_id=chain_id, labels=labels, scores=scores)
    for row in chain_feature_table(pos, chain_id=chain_id, attribution=attribution):
        if row.fv11 is None:
            continue
        vals = _attribute_values(row)
        logpost = np.log(model.priors).copy()
        for k, cls in enumerate(CLASSES):
            for attr, _ in ATTRIBUTES:
                logpost[k] += float(model.mixtures[cls][attr].logpdf(vals[attr])[0])
        logpost -= logpost.max()
        post = np.exp(logpost)
        post /= post.sum()
        scores[row.i] = post
        labels[row.i] = _argmax_label(post)
    return ChainLabels(chain_id=chain_id, labels=labels, scores=scores)


# ---------------------------------------------------------------------------
# Training tables from annotated centroid chains
# ---------------------------------------------------------------------------

def label_training_chains(centroid_chains, attribution: str = "start") -> list[FeatureRow]:
    """Feature rows for annotated centroid chains; each row inherits the motif
    label of its attributed residue (unlabeled residues count as "other")."""
    rows: list[FeatureRow] = []
    for chain in centroid_chains:
        table = chain_feature_table(chain.positions, chain_id=chain.chain_id,
                                    attribution=attribution)
        for row in table:
            label = chain.labels[row.i] if row.i < len(chain.labels) else "other"
            row.label = label if label in CLASSES else "other"
        rows.extend(table)
    return rows


# ---------------------------------------------------------------------------
# Segments, postprocessing, evaluation
# ---------------------------------------------------------------------------

@dataclass
class SegmentAssignment:
    chain_id: str
    start: int
    end: int                     # inclusive
    motif: str
    score: float = 0.0

    def length(self) -> int:
        return self.end - self.start + 1

    def points(self) -> range:
        return range(self.start, self.end + 1)


def normalize_labels(labels: list[str | None]) -> list[str | None]:
    """Relabel length-1 motif runs to "other" (segments require length >= 2)."""
    out = list(labels)
    n = len(out)
    k = 0
    while k < n:
        j = k
        while j < n and out[j] == out[k]:
            j += 1
        if out[k] in ("helix", "strand", "turn") and j - k == 1:
            out[k] = "other"
        k = j
    return out


def extract_segments(labels: list[str | None], chain_id: str = "",
                     scores: np.ndarray | None = None) -> list[SegmentAssignment]:
    """Maximal runs (length >= 2) of identical helix/strand/turn labels."""
    lab = normalize_labels(labels)
    segments = []
    n = len(lab)
    k = 0
    while k < n:
        j = k
        while j < n and lab[j] == lab[k]:
            j += 1
        if lab[k] in ("helix", "strand", "turn") and j - k >= 2:
            score = 0.0
            if scores is not None:
                col = CLASSES.index(lab[k])
                vals = scores[k:j, col]
                vals = vals[~np.isnan(vals)]
                score = float(vals.mean()) if vals.size else 0.0
            segments.append(SegmentAssignment(chain_id=chain_id, start=k, end=j - 1,
                                              motif=lab[k], score=score))
        k = j
    return segments


@dataclass
class PostprocessConfig:
    parallel_angle: float = 30.0       # degrees; axis alignment tolerance
    partner_distance: float = 6.5      # angstrom between strand centroids


def postprocess_segments(
    segments: list[SegmentAssignment],
    chain_positions: dict[str, np.ndarray],
    chain_torsions: dict[str, dict[int, float]],
    config: PostprocessConfig | None = None,
) -> list[SegmentAssignment]:
    """Drop helix segments whose median window torsion is negative, and strand
    segments without a roughly parallel (or antiparallel) partner strand
    nearby.  ``chain_torsions`` maps chain id -> attributed point -> torsion.
    """
    cfg = config or PostprocessConfig()
    kept: list[SegmentAssignment] = []
    strands = [s for s in segments if s.motif == "strand"]

    def axis(seg: SegmentAssignment) -> tuple[np.ndarray, np.ndarray]:
        pos = chain_positions[seg.chain_id][seg.start:seg.end + 1]
        direction = pos[-1] - pos[0]
        nrm = np.linalg.norm(direction)
        direction = direction / nrm if nrm > 0 else np.array([1.0, 0.0, 0.0])
        return direction, pos.mean(axis=0)

    def has_partner(seg: SegmentAssignment) -> bool:
        d1, c1 = axis(seg)
        for other in strands:
            if other is seg:
                continue
            d2, c2 = axis(other)
            angle = np.degrees(np.arccos(np.clip(abs(float(np.dot(d1, d2))), 0.0, 1.0)))
            if angle < cfg.parallel_angle and float(np.linalg.norm(c1 - c2)) < cfg.partner_distance:
                return True
        return False

    for seg in segments:
        if seg.motif == "helix":
            tors = [chain_torsions.get(seg.chain_id, {}).get(i) for i in seg.points()]
            tors = [t for t in tors if t is not None]
            if tors and float(np.median(tors)) < 0.0:
                logger.info("dropping helix %s[%d..%d]: negative median torsion",
                            seg.chain_id, seg.start, seg.end)
                continue
        if seg.motif == "strand" and not has_partner(seg):
            logger.info("dropping isolated strand %s[%d..%d]", seg.chain_id, seg.start, seg.end)
            continue
        kept.append(seg)
    return kept


@dataclass
class ClassMetrics:
    actual: int
    assigned: int
    correct: int
    motif_pct: float | None
    peak_pct: float | None


def evaluate(segments: list[SegmentAssignment],
             truth: dict[str, list[str | None]]) -> dict[str, ClassMetrics]:
    """Segment-level and point-level agreement with per-point truth labels.

    A predicted segment is correct when it overlaps a true segment of the same
    class by at least one point; the peak percentage counts correctly labeled
    points inside the assigned segments of the class.
    """
    for seg in segments:
        if seg.chain_id not in truth:
            raise ValueError(f"no truth labels for chain {seg.chain_id!r}")
        if seg.end >= len(truth[seg.chain_id]):
            raise ValueError(f"segment {seg.chain_id}[{seg.start}..{seg.end}] exceeds "
                             f"truth length {len(truth[seg.chain_id])}")
    true_segments = {
        chain: extract_segments(labels, chain_id=chain) for chain, labels in truth.items()
    }
    out: dict[str, ClassMetrics] = {}
    for cls in ("helix", "strand", "turn"):
        preds = [s for s in segments if s.motif == cls]
        trues = [t for ch in sorted(true_segments) for t in true_segments[ch] if t.motif == cls]

        def overlaps(a: SegmentAssignment, b: SegmentAssignment) -> bool:
            return a.chain_id == b.chain_id and a.start <= b.end and b.start <= a.end

        correct = sum(1 for p in preds if any(overlaps(p, t) for t in trues))
        recognized = sum(1 for t in trues if any(overlaps(p, t) for p in preds))
        pts_total = 0
        pts_correct = 0
        for p in preds:
            for i in p.points():
                pts_total += 1
                if truth[p.chain_id][i] == cls:
                    pts_correct += 1
        out[cls] = ClassMetrics(
            actual=len(trues),
            assigned=len(preds),
            correct=correct,
            motif_pct=(100.0 * recognized / len(trues)) if trues else None,
            peak_pct=(100.0 * pts_correct / pts_total) if pts_total else None,
        )
    return out


def metrics_to_json(metrics: dict[str, ClassMetrics]) -> str:
    return json.dumps({
        cls: {
            "actual": m.actual,
            "assigned_segments": m.assigned,
            "correctly_assigned_segments": m.correct,
            "pct_motifs_recognized": m.motif_pct,
            "pct_peaks_correct": m.peak_pct,
        }
        for cls, m in metrics.items()
    }, indent=1)


def load_model(text: str):
    kind = json.loads(text).get("kind")
    if kind == "histogram":
        return HistogramModel.from_json(text)
    if kind == "bayes":
        return BayesModel.from_json(text)
    raise ValueError(f"unknown model kind {kind!r}")
