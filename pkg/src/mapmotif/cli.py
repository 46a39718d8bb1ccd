"""Batch pipeline driver.

Subcommands: synth, extract, graph, trace, features, train, classify, eval,
hierarchy, pipeline.  ``pipeline`` runs a declarative stage list from a JSON
config file with command-line overrides; every stage communicates through
files in the output directory, so reruns with the same config and seed are
byte-identical (timestamps live only in the run manifest).

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

import mapmotif
from mapmotif import chains as chains_mod
from mapmotif import classify as classify_mod
from mapmotif import critpoints, mapio, skeleton
from mapmotif.geometry import chain_feature_table, feature_table_from_csv, feature_table_to_csv


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    stages: list[str] = field(default_factory=lambda: [
        "synth", "extract", "graph", "trace", "features", "classify", "postprocess", "eval",
    ])
    structure: str | None = None
    points: str | None = None          # JSON [[x, y, z], weight] list, alternative to structure
    map: str | None = None             # pre-built map, alternative to the synth stage
    train_structures: list[str] = field(default_factory=list)
    model_mycin: str | None = None
    model_bayes: str | None = None
    classifier: str = "both"           # mycin | bayes | both
    resolution: float = 3.0
    spacing: float | None = None
    padding: float | None = None
    periodic: bool = False
    density_floor_k: float = 1.0
    merge_threshold: float = chains_mod.MERGE_DISTANCE
    link_threshold: float = chains_mod.LINK_DISTANCE
    side_threshold: float = chains_mod.SIDE_DISTANCE
    hierarchy_threshold: float = chains_mod.HIERARCHY_DISTANCE
    attribution: str = "start"
    belief_mode: str = "posterior"
    evidence: str = "fv3"
    weight_mode: str = "pass_density"
    alpha: float = 1.0
    max_components: int = 2
    em_restarts: int = 5
    seed: int = 0
    out: str = "out"

    @staticmethod
    def from_file(path: str) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        known = {f.name for f in fields(PipelineConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return PipelineConfig(**raw)

    def validate(self):
        for name in ("resolution", "merge_threshold", "link_threshold",
                     "side_threshold", "hierarchy_threshold"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.classifier not in ("mycin", "bayes", "both"):
            raise ConfigError(f"classifier must be mycin/bayes/both, not {self.classifier!r}")
        for name in ("structure", "points", "map", "model_mycin", "model_bayes"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name} path does not exist: {p}")
        for p in self.train_structures:
            if not Path(p).exists():
                raise ConfigError(f"train structure does not exist: {p}")
        known = {"synth", "extract", "graph", "trace", "features", "train",
                 "classify", "postprocess", "eval", "hierarchy"}
        for s in self.stages:
            if s not in known:
                raise ConfigError(f"unknown stage {s!r}")


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _write(path: Path, data: str | bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data)


def _centroids_json(centroid_chains) -> str:
    return json.dumps([
        {
            "chain_id": c.chain_id,
            "residues": c.residue_ids,
            "positions": [[float(x) for x in p] for p in c.positions],
            "labels": c.labels,
            "breaks": c.breaks,
        }
        for c in centroid_chains
    ], indent=1)


def _load_centroids(path: Path):
    out = []
    for rec in json.loads(path.read_text()):
        out.append(mapio.CentroidChain(
            chain_id=rec["chain_id"], residue_ids=list(rec["residues"]),
            positions=np.asarray(rec["positions"], dtype=float),
            labels=list(rec["labels"]), breaks=list(rec["breaks"])))
    return out


def _labels_csv(results: list[classify_mod.ChainLabels], score_prefix: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["chain", "i"] + [f"{score_prefix}_{c}" for c in classify_mod.CLASSES] + ["label"])
    for res in results:
        for i, label in enumerate(res.labels):
            row = [res.chain_id, i]
            if label is None:
                row += [""] * len(classify_mod.CLASSES) + [""]
            else:
                row += [repr(float(s)) for s in res.scores[i]] + [label]
            w.writerow(row)
    return buf.getvalue()


def _load_labels_csv(text: str) -> dict[str, dict[int, tuple[str | None, np.ndarray | None]]]:
    out: dict[str, dict[int, tuple[str | None, np.ndarray | None]]] = {}
    reader = csv.reader(io.StringIO(text))
    next(reader)
    for rec in reader:
        chain, i = rec[0], int(rec[1])
        label = rec[-1] or None
        scores = None
        if label is not None:
            scores = np.array([float(x) for x in rec[2:-1]])
        out.setdefault(chain, {})[i] = (label, scores)
    return out


def _labels_arrays(loaded, chain_lengths: dict[str, int]):
    per_chain = {}
    for chain, n in chain_lengths.items():
        labels: list[str | None] = [None] * n
        scores = np.full((n, len(classify_mod.CLASSES)), np.nan)
        for i, (label, sc) in loaded.get(chain, {}).items():
            if i < n and label is not None:
                labels[i] = label
                scores[i] = sc
        per_chain[chain] = (labels, scores)
    return per_chain


def _segments_json(segments) -> str:
    return json.dumps([
        {"chain_id": s.chain_id, "start": s.start, "end": s.end,
         "motif": s.motif, "score": s.score}
        for s in segments
    ], indent=1)


def _load_segments(path: Path):
    return [classify_mod.SegmentAssignment(chain_id=r["chain_id"], start=r["start"],
                                           end=r["end"], motif=r["motif"],
                                           score=r.get("score", 0.0))
            for r in json.loads(path.read_text())]


def _selected_classifiers(cfg: PipelineConfig) -> list[str]:
    return ["mycin", "bayes"] if cfg.classifier == "both" else [cfg.classifier]


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_synth(cfg: PipelineConfig, out: Path):
    if cfg.points:
        raw = json.loads(Path(cfg.points).read_text())
        points = [(np.asarray(p, dtype=float), float(w)) for p, w in raw]
    elif cfg.structure:
        struct = mapio.parse_pdb_subset(Path(cfg.structure).read_text())
        centroid_chains = mapio.residue_centroids(struct)
        if not centroid_chains:
            raise StageError("structure yielded no usable centroid chains")
        _write(out / "centroids.json", _centroids_json(centroid_chains))
        points = [(p, 1.0) for c in centroid_chains for p in c.positions]
    else:
        raise StageError("synth needs a structure or a points file")
    dmap = mapio.synthesize_map(points, resolution=cfg.resolution, spacing=cfg.spacing,
                                padding=cfg.padding, periodic=cfg.periodic)
    _write(out / "density.map", mapio.write_density_map(dmap))


def _read_map(cfg: PipelineConfig, out: Path) -> mapio.DensityMap:
    path = Path(cfg.map) if cfg.map else out / "density.map"
    if not path.exists():
        raise StageError(f"no density map at {path}")
    return mapio.parse_density_map(path.read_bytes())


def stage_extract(cfg: PipelineConfig, out: Path):
    dmap = _read_map(cfg, out)
    result = critpoints.extract_critical_points(
        dmap, critpoints.ExtractConfig(density_floor_k=cfg.density_floor_k))
    _write(out / "critical_points.json", critpoints.points_to_json(result.points))


def stage_graph(cfg: PipelineConfig, out: Path):
    dmap = _read_map(cfg, out)
    points = critpoints.rehydrate_points(dmap, (out / "critical_points.json").read_text())
    graph = skeleton.build_graph(dmap, points, weight_mode=cfg.weight_mode)
    _write(out / "graph.json", skeleton.graph_to_json(graph))


def stage_trace(cfg: PipelineConfig, out: Path):
    graph = skeleton.graph_from_json((out / "graph.json").read_text())
    raw_chains = chains_mod.extract_peak_chains(graph, link_threshold=cfg.link_threshold)
    processed: list[chains_mod.PeakChain] = []
    for chain in raw_chains:
        merged = chains_mod.merge_close_peaks(chain, cfg.merge_threshold,
                                              link_threshold=cfg.link_threshold)
        processed.extend(chains_mod.link_and_prune_backbone(
            merged, cfg.link_threshold, cfg.side_threshold))
    processed.sort(key=lambda c: (-len(c), tuple(np.round(c.peaks[0].position, 9))))
    for n, c in enumerate(processed):
        c.chain_id = f"c{n}"
    _write(out / "chains.json", chains_mod.chains_to_json(processed))


def stage_features(cfg: PipelineConfig, out: Path):
    chains = chains_mod.chains_from_json((out / "chains.json").read_text())
    rows = []
    for c in chains:
        rows.extend(chain_feature_table(c.positions(), chain_id=c.chain_id,
                                        attribution=cfg.attribution))
    _write(out / "features.csv", feature_table_to_csv(rows))


def stage_train(cfg: PipelineConfig, out: Path):
    if not cfg.train_structures:
        raise StageError("train stage needs train_structures")
    rows = []
    for path in cfg.train_structures:
        struct = mapio.parse_pdb_subset(Path(path).read_text())
        centroid_chains = mapio.residue_centroids(struct)
        for c in centroid_chains:
            c.chain_id = f"{Path(path).stem}:{c.chain_id}"
        rows.extend(classify_mod.label_training_chains(centroid_chains,
                                                       attribution=cfg.attribution))
    for name in _selected_classifiers(cfg):
        if name == "mycin":
            model = classify_mod.train_mycin(rows, alpha=cfg.alpha, mode=cfg.belief_mode)
            _write(out / "model_mycin.json", model.to_json())
        else:
            model = classify_mod.train_bayes(rows, classify_mod.BayesConfig(
                max_components=cfg.max_components, em_restarts=cfg.em_restarts, seed=cfg.seed))
            _write(out / "model_bayes.json", model.to_json())


def _model_path(cfg: PipelineConfig, out: Path, name: str) -> Path:
    override = cfg.model_mycin if name == "mycin" else cfg.model_bayes
    path = Path(override) if override else out / f"model_{name}.json"
    if not path.exists():
        raise StageError(f"no {name} model at {path}")
    return path


def stage_classify(cfg: PipelineConfig, out: Path):
    chains = chains_mod.chains_from_json((out / "chains.json").read_text())
    for name in _selected_classifiers(cfg):
        model = classify_mod.load_model(_model_path(cfg, out, name).read_text())
        results = []
        for c in chains:
            if name == "mycin":
                results.append(classify_mod.classify_mycin(
                    c.positions(), model, chain_id=c.chain_id,
                    evidence=cfg.evidence, attribution=cfg.attribution))
            else:
                results.append(classify_mod.classify_bayes(
                    c.positions(), model, chain_id=c.chain_id, attribution=cfg.attribution))
        prefix = "CF" if name == "mycin" else "p"
        _write(out / f"labels_{name}.csv", _labels_csv(results, prefix))
        if name == "mycin":
            _write(out / "cf_trace.csv", _labels_csv(results, "CF"))


def stage_postprocess(cfg: PipelineConfig, out: Path):
    chains = chains_mod.chains_from_json((out / "chains.json").read_text())
    lengths = {c.chain_id: len(c) for c in chains}
    positions = {c.chain_id: c.positions() for c in chains}
    feat_rows = feature_table_from_csv((out / "features.csv").read_text())
    torsions: dict[str, dict[int, float]] = {}
    for r in feat_rows:
        torsions.setdefault(r.chain_id, {})[r.i] = r.fv3.torsion
    for name in _selected_classifiers(cfg):
        loaded = _load_labels_csv((out / f"labels_{name}.csv").read_text())
        per_chain = _labels_arrays(loaded, lengths)
        segments = []
        for chain_id in sorted(per_chain):
            labels, scores = per_chain[chain_id]
            segments.extend(classify_mod.extract_segments(labels, chain_id=chain_id,
                                                          scores=scores))
        segments = classify_mod.postprocess_segments(segments, positions, torsions)
        _write(out / f"segments_{name}.json", _segments_json(segments))


def _truth_labels(cfg: PipelineConfig, out: Path,
                  chains: list[chains_mod.PeakChain]) -> dict[str, list[str | None]]:
    """Per-peak truth labels by matching each chain peak to the nearest
    annotated residue centroid within the hierarchy threshold."""
    centroids_path = out / "centroids.json"
    if not centroids_path.exists():
        if not cfg.structure:
            raise StageError("eval needs centroids.json (synth stage) or a structure path")
        struct = mapio.parse_pdb_subset(Path(cfg.structure).read_text())
        centroid_chains = mapio.residue_centroids(struct)
        _write(centroids_path, _centroids_json(centroid_chains))
    centroid_chains = _load_centroids(centroids_path)
    all_pos = np.concatenate([c.positions for c in centroid_chains])
    all_labels = [lab for c in centroid_chains for lab in c.labels]
    truth = {}
    for chain in chains:
        labels: list[str | None] = []
        for p in chain.peaks:
            d = np.linalg.norm(all_pos - p.position, axis=1)
            k = int(np.argmin(d))
            labels.append(all_labels[k] if float(d[k]) < cfg.hierarchy_threshold else "other")
        truth[chain.chain_id] = labels
    return truth


def stage_eval(cfg: PipelineConfig, out: Path):
    chains = chains_mod.chains_from_json((out / "chains.json").read_text())
    truth = _truth_labels(cfg, out, chains)
    _write(out / "truth_labels.json", json.dumps(truth, indent=1))
    for name in _selected_classifiers(cfg):
        segments = _load_segments(out / f"segments_{name}.json")
        metrics = classify_mod.evaluate(segments, truth)
        _write(out / f"metrics_{name}.json", classify_mod.metrics_to_json(metrics))


STAGES = {
    "synth": stage_synth,
    "extract": stage_extract,
    "graph": stage_graph,
    "trace": stage_trace,
    "features": stage_features,
    "train": stage_train,
    "classify": stage_classify,
    "postprocess": stage_postprocess,
    "eval": stage_eval,
}


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run the configured stages in order, writing a manifest alongside the
    artifacts.  Raises :class:`StageError` after recording a failing stage."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": mapmotif.__version__,
        "seed": cfg.seed,
        "config": asdict(cfg),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "timings": {},
        "failed_stage": None,
    }
    try:
        for stage in cfg.stages:
            if stage == "hierarchy":
                continue             # only meaningful as a subcommand with two inputs
            t0 = time.perf_counter()
            try:
                STAGES[stage](cfg, out)
            except (StageError, ValueError, OSError) as exc:
                manifest["failed_stage"] = stage
                raise StageError(f"stage {stage!r} failed: {exc}") from exc
            finally:
                manifest["timings"][stage] = round(time.perf_counter() - t0, 6)
    finally:
        manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        _write(out / "manifest.json", json.dumps(manifest, indent=1))
    return manifest


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_threshold_args(p: argparse.ArgumentParser):
    p.add_argument("--merge-threshold", type=float, default=None)
    p.add_argument("--link-threshold", type=float, default=None)
    p.add_argument("--side-threshold", type=float, default=None)
    p.add_argument("--hierarchy-threshold", type=float, default=None)
    p.add_argument("--density-floor-k", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapmotif", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a Gaussian map from a structure or points")
    p.add_argument("--structure")
    p.add_argument("--points")
    p.add_argument("--resolution", type=float, default=3.0)
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--padding", type=float, default=None)
    p.add_argument("--periodic", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="extract critical points from a map")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--density-floor-k", type=float, default=None)

    p = sub.add_parser("graph", help="connect passes to peaks and reduce to a spanning forest")
    p.add_argument("--map", required=True)
    p.add_argument("--points", required=True, help="critical_points.json")
    p.add_argument("--weight-mode", choices=("pass_density", "path_min"), default="pass_density")
    p.add_argument("--out", required=True)

    p = sub.add_parser("trace", help="decompose the forest into cleaned backbone chains")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    _add_threshold_args(p)

    p = sub.add_parser("features", help="geometric feature table for chains")
    p.add_argument("--chains", required=True)
    p.add_argument("--attribution", choices=("start", "center"), default="start")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train classifiers from annotated structures")
    p.add_argument("--structures", nargs="+", required=True)
    p.add_argument("--classifier", choices=("mycin", "bayes", "both"), default="both")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--belief-mode", choices=("posterior", "likelihood"), default="posterior")
    p.add_argument("--attribution", choices=("start", "center"), default="start")
    p.add_argument("--max-components", type=int, default=2)
    p.add_argument("--em-restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("classify", help="classify chains and extract postprocessed segments")
    p.add_argument("--chains", required=True)
    p.add_argument("--model-mycin")
    p.add_argument("--model-bayes")
    p.add_argument("--evidence", choices=("fv3", "full"), default="fv3")
    p.add_argument("--attribution", choices=("start", "center"), default="start")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score segments against truth labels")
    p.add_argument("--segments", required=True)
    p.add_argument("--chains", required=True)
    p.add_argument("--structure", help="annotated structure to derive truth from")
    p.add_argument("--truth", help="truth_labels.json, alternative to --structure")
    p.add_argument("--hierarchy-threshold", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("hierarchy", help="match critical points across two resolutions")
    p.add_argument("--low", required=True, help="coarse critical_points.json")
    p.add_argument("--med", required=True, help="fine critical_points.json")
    p.add_argument("--hierarchy-threshold", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="run configured stages end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--resolution", type=float, default=None)
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--padding", type=float, default=None)
    _add_threshold_args(p)
    return parser


def _cfg_from_args(args: argparse.Namespace, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    mapping = {
        "structure": "structure", "points": "points", "map": "map",
        "resolution": "resolution", "spacing": "spacing", "padding": "padding",
        "periodic": "periodic", "out": "out", "seed": "seed",
        "merge_threshold": "merge_threshold", "link_threshold": "link_threshold",
        "side_threshold": "side_threshold", "hierarchy_threshold": "hierarchy_threshold",
        "density_floor_k": "density_floor_k", "weight_mode": "weight_mode",
        "attribution": "attribution", "alpha": "alpha", "belief_mode": "belief_mode",
        "evidence": "evidence", "classifier": "classifier",
        "max_components": "max_components", "em_restarts": "em_restarts",
        "model_mycin": "model_mycin", "model_bayes": "model_bayes",
    }
    for arg_name, cfg_name in mapping.items():
        if hasattr(args, arg_name) and getattr(args, arg_name) is not None:
            setattr(cfg, cfg_name, getattr(args, arg_name))
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StageError, mapio.MapFormatError, mapio.PdbFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def _dispatch(args: argparse.Namespace) -> int:
    out = Path(args.out) if getattr(args, "out", None) else None

    if args.command == "pipeline":
        cfg = PipelineConfig.from_file(args.config)
        cfg = _cfg_from_args(args, cfg)
        run_pipeline(cfg)
        return 0

    if args.command == "synth":
        cfg = _cfg_from_args(args)
        if not cfg.structure and not cfg.points:
            raise ConfigError("synth needs --structure or --points")
        _require_paths(cfg.structure, cfg.points)
        stage_synth(cfg, out)
        return 0

    if args.command == "extract":
        cfg = _cfg_from_args(args)
        _require_paths(args.map)
        stage_extract(cfg, out)
        return 0

    if args.command == "graph":
        cfg = _cfg_from_args(args)
        _require_paths(args.map, args.points)
        dmap = mapio.parse_density_map(Path(args.map).read_bytes())
        points = critpoints.rehydrate_points(dmap, Path(args.points).read_text())
        graph = skeleton.build_graph(dmap, points, weight_mode=args.weight_mode)
        _write(out / "graph.json", skeleton.graph_to_json(graph))
        return 0

    if args.command == "trace":
        cfg = _cfg_from_args(args)
        _require_paths(args.graph)
        _copy_into(Path(args.graph), out / "graph.json")
        stage_trace(cfg, out)
        return 0

    if args.command == "features":
        cfg = _cfg_from_args(args)
        _require_paths(args.chains)
        _copy_into(Path(args.chains), out / "chains.json")
        stage_features(cfg, out)
        return 0

    if args.command == "train":
        cfg = _cfg_from_args(args)
        cfg.train_structures = list(args.structures)
        for p in cfg.train_structures:
            if not Path(p).exists():
                raise ConfigError(f"train structure does not exist: {p}")
        stage_train(cfg, out)
        return 0

    if args.command == "classify":
        cfg = _cfg_from_args(args)
        _require_paths(args.chains, args.model_mycin, args.model_bayes)
        if not args.model_mycin and not args.model_bayes:
            raise ConfigError("classify needs --model-mycin and/or --model-bayes")
        selected = []
        if args.model_mycin:
            selected.append("mycin")
        if args.model_bayes:
            selected.append("bayes")
        cfg.classifier = "both" if len(selected) == 2 else selected[0]
        _copy_into(Path(args.chains), out / "chains.json")
        stage_features(cfg, out)
        stage_classify(cfg, out)
        stage_postprocess(cfg, out)
        return 0

    if args.command == "eval":
        cfg = _cfg_from_args(args)
        _require_paths(args.segments, args.chains, args.structure, args.truth)
        if not args.structure and not args.truth:
            raise ConfigError("eval needs --structure or --truth")
        _copy_into(Path(args.chains), out / "chains.json")
        chains = chains_mod.chains_from_json((out / "chains.json").read_text())
        if args.truth:
            truth = {k: [v if v else None for v in labels]
                     for k, labels in json.loads(Path(args.truth).read_text()).items()}
        else:
            truth = _truth_labels(cfg, out, chains)
        segments = _load_segments(Path(args.segments))
        metrics = classify_mod.evaluate(segments, truth)
        _write(out / "metrics.json", classify_mod.metrics_to_json(metrics))
        return 0

    if args.command == "hierarchy":
        cfg = _cfg_from_args(args)
        _require_paths(args.low, args.med)
        low = [np.asarray(r["position"], dtype=float)
               for r in json.loads(Path(args.low).read_text())]
        med = [np.asarray(r["position"], dtype=float)
               for r in json.loads(Path(args.med).read_text())]
        pairs = chains_mod.match_hierarchy(low, med, cfg.hierarchy_threshold)
        _write(out / "correspondence.json",
               json.dumps([{"low": k, "med": v} for k, v in pairs], indent=1))
        return 0

    raise ConfigError(f"unknown command {args.command!r}")


def _require_paths(*paths):
    for p in paths:
        if p is not None and not Path(p).exists():
            raise ConfigError(f"input path does not exist: {p}")


def _copy_into(src: Path, dst: Path):
    if src.resolve() != dst.resolve():
        _write(dst, src.read_bytes())


if __name__ == "__main__":
    sys.exit(main())
