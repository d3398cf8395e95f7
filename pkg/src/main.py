"""XAI thesaurus entrypoint.

Runs the pipeline stage by stage from the command line:
  - preprocess: raw CSV -> normalized dataset variants
  - benchmark: clustering grid over variants, winner selection
  - thesaurus: IQR re-run, cluster profile, surrogate, exemplar bank
  - explain: one instance through the prompt builder and an LLM backend
  - evaluate: batch explanations scored for structure and content quality
  - demo: the whole chain on synthetic data with a stub backend

Every stage reads and writes under `--out`, so stages can be re-run on their own.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml
from loguru import logger

from src.clustering.models import ClusteringConfig
from src.data.loader import load_csv, load_dataset, save_dataset
from src.data.preprocess import NormalizationStats, reduce_dimensions, run_preprocess
from src.data.schema import Schema, load_preprocess_config
from src.data.synthetic import write_demo_csv
from src.data.variants import make_variants, split_roles
from src.errors import ConfigError, MissingFile, NoSuccessfulRun, ValidationError, XaiGapError
from src.explainers.anchors import AnchorsConfig
from src.explainers.coefficients import coefficients_explain
from src.explainers.counterfactual import CounterfactualConfig
from src.explainers.summary import summarize_xai_quality, write_importance_csv
from src.explainers.types import LimeConfig
from src.llm.client import LlmConfig, complete, complete_many, load_stub_script
from src.llm.parser import parse_response
from src.llm.prompt import ShotMode, build_prompt, exemplar_instance, instance_from_dataset
from src.quality.report import evaluate_quality, summarize_quality, write_quality_csv, write_summary_csv
from src.quality.structure import LanguageToolChecker
from src.reporting.messages import (
    DEFAULT_PREAMBLE,
    format_benchmark,
    format_error,
    format_explanation,
    format_quality_row,
    format_refinement,
    format_winner,
    format_xai_summary,
)
from src.surrogate.linear import SurrogateConfig, evaluate, train_linear
from src.thesaurus.benchmark import (
    BenchmarkGrid,
    require_every_algorithm,
    rerun_without_outliers,
    run_benchmark,
    select_best,
    write_benchmark_csv,
)
from src.thesaurus.builder import build_thesaurus, choose_exemplars, verify_fingerprint
from src.thesaurus.store import load_thesaurus, save_thesaurus
from src.validity.profile import characterize_clusters


LOG_NAME = "xai-thesaurus.log"


def load_settings(path: str = "config/settings.yaml") -> dict:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"Settings not found: {p}")
    with open(p) as f:
        data = yaml.safe_load(f)
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"Settings must be a mapping: {p}")
    return data or {}


@dataclass(frozen=True)
class RunConfig:
    data: Path
    schema: Path
    preprocess: Path
    out: Path
    seed: Optional[int] = None
    jobs: int = 1
    time_zone: str = "UTC"
    grid: BenchmarkGrid = BenchmarkGrid()
    criterion: str = "silhouette"
    require_every_algorithm: bool = True
    exemplars: int = 20
    alpha: float = 0.05
    iqr_factor: float = 1.5
    display_labels: tuple[str, ...] = ()
    preamble: str = DEFAULT_PREAMBLE
    surrogate: SurrogateConfig = SurrogateConfig()
    lime: LimeConfig = LimeConfig()
    anchors: AnchorsConfig = AnchorsConfig()
    counterfactual: CounterfactualConfig = CounterfactualConfig()
    models: tuple[LlmConfig, ...] = (LlmConfig(),)
    modes: tuple[ShotMode, ...] = (ShotMode.parse("zero"), ShotMode.parse("one"), ShotMode.parse("few"))
    stub_file: Optional[Path] = None
    external_grammar: bool = False
    demo: dict = field(default_factory=dict)

    @property
    def preprocess_dir(self) -> Path:
        return self.out / "preprocess"

    @property
    def benchmark_dir(self) -> Path:
        return self.out / "benchmark"

    @property
    def thesaurus_dir(self) -> Path:
        return self.out / "thesaurus"

    @property
    def thesaurus_path(self) -> Path:
        return self.thesaurus_dir / "thesaurus.json"

    @property
    def dataset_path(self) -> Path:
        return self.thesaurus_dir / "dataset.csv"

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("A seed is required: set `seed` in settings or pass --seed")
        return int(self.seed)

    @classmethod
    def from_settings(cls, settings: dict, args: Optional[argparse.Namespace] = None) -> "RunConfig":
        paths = settings.get("paths") or {}
        thes = settings.get("thesaurus") or {}
        xai = settings.get("explainers") or {}
        llm = settings.get("llm") or {}
        seed = settings.get("seed")
        seed = int(seed) if seed is not None else None

        lime = LimeConfig.from_dict(xai.get("lime"))
        if "seed" not in (xai.get("lime") or {}) and seed is not None:
            lime = replace(lime, seed=seed)
        few_k = llm.get("few_k")
        modes = tuple(ShotMode.parse(m, few_k if m == "few" else None) for m in llm.get("modes", ("zero", "one", "few")))
        models = tuple(LlmConfig.from_dict(m) for m in (llm.get("models") or [{}]))
        stub = llm.get("stub_file")

        cfg = cls(
            data=Path(paths.get("data", "data/lifesnaps.csv")),
            schema=Path(paths.get("schema", "config/schema.yaml")),
            preprocess=Path(paths.get("preprocess", "config/preprocess.yaml")),
            out=Path(paths.get("out", "out")),
            seed=seed,
            jobs=_jobs(settings.get("jobs", 1)),
            time_zone=str(settings.get("time_zone", "UTC")),
            grid=BenchmarkGrid.from_dict(settings.get("benchmark")),
            criterion=str((settings.get("benchmark") or {}).get("criterion", "silhouette")),
            require_every_algorithm=bool((settings.get("benchmark") or {}).get("require_every_algorithm", True)),
            exemplars=int(thes.get("exemplars", 20)),
            alpha=float(thes.get("alpha", 0.05)),
            iqr_factor=float(thes.get("iqr_factor", 1.5)),
            display_labels=tuple(thes.get("display_labels") or ()),
            preamble=str(thes.get("preamble") or DEFAULT_PREAMBLE),
            surrogate=SurrogateConfig.from_dict(settings.get("surrogate")),
            lime=lime,
            anchors=AnchorsConfig.from_dict(xai.get("anchors")),
            counterfactual=CounterfactualConfig.from_dict(xai.get("counterfactual")),
            models=models,
            modes=modes,
            stub_file=Path(stub) if stub else None,
            external_grammar=bool((settings.get("quality") or {}).get("external_grammar", False)),
            demo=dict(settings.get("demo") or {}),
        )
        return cfg.with_overrides(args) if args is not None else cfg

    def with_overrides(self, args: argparse.Namespace) -> "RunConfig":
        changes = {}
        if getattr(args, "out", None):
            changes["out"] = Path(args.out)
        if getattr(args, "data", None):
            changes["data"] = Path(args.data)
        if getattr(args, "seed", None) is not None:
            changes["seed"] = int(args.seed)
            changes["lime"] = replace(self.lime, seed=int(args.seed))
        if getattr(args, "jobs", None) is not None:
            changes["jobs"] = _jobs(args.jobs)
        if getattr(args, "criterion", None):
            changes["criterion"] = args.criterion
        if getattr(args, "stub_file", None):
            changes["stub_file"] = Path(args.stub_file)
        return replace(self, **changes)


def _jobs(value) -> int:
    """0 or negative means one worker per logical core."""
    n = int(value)
    return n if n > 0 else (os.cpu_count() or 1)


def configure_logging(out: Path, level: str = "INFO") -> Path:
    log_path = out / "logs" / LOG_NAME
    log_path.parent.mkdir(parents=True, exist_ok=True)
    logger.remove()
    logger.add(sys.stderr, level=level.upper())
    logger.add(str(log_path), level="DEBUG", rotation="1 day", retention="14 days")
    return log_path


def _write_json(payload: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise MissingFile(f"Expected output of an earlier stage: {path}")
    with open(path) as f:
        return json.load(f)


def _read_yaml(path: Path) -> dict:
    if not path.exists():
        raise MissingFile(f"Expected output of an earlier stage: {path}")
    with open(path) as f:
        return yaml.safe_load(f) or {}


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_preprocess(cfg: RunConfig) -> dict[str, Path]:
    schema = Schema.from_yaml(cfg.schema)
    spec, variant_specs, _ = load_preprocess_config(cfg.preprocess)
    spec.validate(schema)
    if not variant_specs:
        raise ConfigError(f"No variants declared in {cfg.preprocess}")
    raw = load_csv(cfg.data, schema, time_zone=cfg.time_zone)

    out_dir = cfg.preprocess_dir
    training = {}
    for g in dict.fromkeys(v.granularity.value for v in variant_specs):
        ds, stats = run_preprocess(raw, spec.for_granularity(g), schema)
        train, valid = split_roles(ds, schema)
        save_dataset(valid, out_dir / f"validation_{g}.csv")
        with open(out_dir / f"normalization_{g}.yaml", "w") as f:
            yaml.safe_dump(stats.to_dict(), f, sort_keys=True)
        training[g] = train

    written = {}
    for key, vds in make_variants(training, variant_specs, schema, raw.report.missing_fraction).items():
        if spec.pca_variance is not None:
            vds, _ = reduce_dimensions(vds, spec.pca_variance, seed=cfg.seed or 0)
        written[key] = save_dataset(vds, out_dir / f"{key}.csv")
        logger.info(f"Variant saved: key={key} rows={vds.n_rows} cols={vds.n_cols}")

    manifest = {"variants": {key: p.name for key, p in written.items()}, "data": str(cfg.data)}
    with open(out_dir / "manifest.yaml", "w") as f:
        yaml.safe_dump(manifest, f, sort_keys=True)
    _write_json(raw.report.to_dict(), out_dir / "load_report.json")
    print(f"🧹 Preprocessed {raw.report.rows} rows into {len(written)} variants under {out_dir}")
    return written


def _load_variants(cfg: RunConfig) -> dict:
    manifest_path = cfg.preprocess_dir / "manifest.yaml"
    if not manifest_path.exists():
        raise MissingFile(f"No preprocessed variants found (missing {manifest_path}); run `preprocess` first")
    manifest = _read_yaml(manifest_path)
    variants = {key: load_dataset(cfg.preprocess_dir / name) for key, name in (manifest.get("variants") or {}).items()}
    if not variants:
        raise ConfigError(f"Variant manifest lists no variants: {manifest_path}")
    return variants


def stage_benchmark(cfg: RunConfig) -> dict:
    seed = cfg.require_seed()
    variants = _load_variants(cfg)
    report = run_benchmark(variants, cfg.grid, seed=seed, jobs=cfg.jobs)
    write_benchmark_csv(report, cfg.benchmark_dir / "benchmark.csv")
    if cfg.require_every_algorithm:
        require_every_algorithm(report)
    selection = select_best(report, cfg.criterion)
    payload = {
        "selection": selection.to_dict(),
        "elbows": report.elbows,
        "combinations": report.combinations(llm_cells=len(cfg.models) * len(cfg.modes)),
        "seed": seed,
    }
    _write_json(payload, cfg.benchmark_dir / "selection.json")
    print(format_benchmark(report))
    print(format_winner(selection))
    return payload


def stage_thesaurus(cfg: RunConfig) -> Path:
    seed = cfg.require_seed()
    schema = Schema.from_yaml(cfg.schema)
    chosen = _read_json(cfg.benchmark_dir / "selection.json")["selection"]
    variant = chosen["variant"]
    config = ClusteringConfig.from_dict(chosen["config"])

    ds = load_dataset(cfg.preprocess_dir / f"{variant}.csv")
    validation = load_dataset(cfg.preprocess_dir / f"validation_{ds.granularity}.csv")
    normalization = NormalizationStats.from_dict(_read_yaml(cfg.preprocess_dir / f"normalization_{ds.granularity}.yaml"))

    before = chosen.get("silhouette")
    before = float(before) if isinstance(before, (int, float)) else None
    refined = rerun_without_outliers(ds, config, cfg.iqr_factor, before)
    data, labels = refined.dataset, refined.assignment.labels
    print(format_refinement(refined))

    valid = validation.select_rows(list(refined.outliers.kept_rows))
    k = len(np.unique(labels[labels >= 0]))
    display = cfg.display_labels if len(cfg.display_labels) == k else None
    if cfg.display_labels and display is None:
        logger.warning(f"Ignoring display_labels: {len(cfg.display_labels)} labels for {k} clusters")
    profile = characterize_clusters(valid, labels, cfg.alpha, display)

    clustered = np.flatnonzero(labels >= 0)
    X, y = data.values[clustered], labels[clustered]
    surrogate = train_linear(X, y, replace(cfg.surrogate, seed=seed), data.feature_names)
    summary = evaluate(surrogate, X, y)

    exemplar_ids = choose_exemplars(data, labels, cfg.exemplars, seed)
    position = {int(r): i for i, r in enumerate(clustered)}
    rows = [position[data.row_index(iid)] for iid in exemplar_ids]
    xai = summarize_xai_quality(
        surrogate, X, y, rows, data.feature_names, cfg.lime, cfg.anchors, cfg.counterfactual, seed=seed
    )
    print(format_xai_summary(xai))

    thesaurus = build_thesaurus(
        data,
        schema,
        variant,
        config,
        refined.assignment,
        refined.validity,
        profile,
        surrogate,
        summary,
        exemplar_ids,
        normalization,
        lime_cfg=cfg.lime,
        preamble=cfg.preamble,
        xai_quality=xai,
        refinement=refined.to_dict(),
    )
    save_dataset(data, cfg.dataset_path)
    path = save_thesaurus(thesaurus, cfg.thesaurus_path)
    vectors = [e.explanation for e in thesaurus.exemplars]
    vectors += [coefficients_explain(surrogate, int(c)) for c in surrogate.classes]
    write_importance_csv(vectors, cfg.thesaurus_dir / "importance.csv")
    print(f"📚 Thesaurus saved: {path} ({len(thesaurus.exemplars)} exemplars)")
    return path


def _load_for_explain(cfg: RunConfig, dataset: Optional[str] = None):
    schema = Schema.from_yaml(cfg.schema)
    thesaurus = load_thesaurus(cfg.thesaurus_path)
    ds = load_dataset(Path(dataset) if dataset else cfg.dataset_path)
    verify_fingerprint(thesaurus, schema, ds)
    return schema, thesaurus, ds


def _pick_model(cfg: RunConfig, name: Optional[str]) -> LlmConfig:
    if not name:
        return cfg.models[0]
    for m in cfg.models:
        if m.model_name == name:
            return m
    raise ConfigError(f"No LLM named {name!r} in settings; known: {[m.model_name for m in cfg.models]}")


def stage_explain(
    cfg: RunConfig,
    instance_id: Optional[str] = None,
    mode: Optional[ShotMode] = None,
    model: Optional[str] = None,
    dataset: Optional[str] = None,
) -> dict:
    seed = cfg.require_seed()
    schema, thesaurus, ds = _load_for_explain(cfg, dataset)
    iid = instance_id or thesaurus.exemplars[0].instance_id
    mode = mode or cfg.modes[-1]
    llm = _pick_model(cfg, model)
    script = load_stub_script(cfg.stub_file) if cfg.stub_file else None

    instance = instance_from_dataset(thesaurus, schema, ds, iid, cfg.lime)
    bundle = build_prompt(thesaurus, instance, mode, seed)
    completion = complete(llm, bundle, script)
    parsed = parse_response(completion.text, thesaurus.feature_names)
    print(format_explanation(instance, parsed, completion))

    payload = {"prompt": bundle.to_dict(), "completion": completion.to_dict(), "parsed": parsed.to_dict()}
    safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in iid)
    _write_json(payload, cfg.out / "explain" / f"{safe}.json")
    return payload


def stage_evaluate(cfg: RunConfig, limit: Optional[int] = None) -> list:
    seed = cfg.require_seed()
    thesaurus = load_thesaurus(cfg.thesaurus_path)
    script = load_stub_script(cfg.stub_file) if cfg.stub_file else None
    checker = LanguageToolChecker() if cfg.external_grammar else None
    batch = thesaurus.exemplars[:limit] if limit else thesaurus.exemplars

    reports = []
    for llm in cfg.models:
        for mode in cfg.modes:
            bundles = [build_prompt(thesaurus, exemplar_instance(thesaurus, e), mode, seed) for e in batch]
            completions = complete_many(llm, bundles, script)
            for bundle, completion in zip(bundles, completions):
                try:
                    parsed = parse_response(completion.text, thesaurus.feature_names)
                    reports.append(
                        evaluate_quality(
                            f"{bundle.system_text}\n\n{bundle.user_text}",
                            completion.text,
                            parsed,
                            bundle.reference,
                            model=llm.model_name,
                            technique=mode.label,
                            instance_id=bundle.instance_id,
                            checker=checker,
                        )
                    )
                except XaiGapError as e:
                    logger.error(
                        f"Scoring failed: model={llm.model_name} technique={mode.label} "
                        f"instance={bundle.instance_id} error={type(e).__name__}: {e}"
                    )
    if not reports:
        raise NoSuccessfulRun("No explanation could be scored")

    eval_dir = cfg.out / "evaluate"
    write_quality_csv(reports, eval_dir / "quality.csv")
    write_summary_csv(reports, eval_dir / "quality_summary.csv")
    for row in summarize_quality(reports).to_dict("records"):
        print(format_quality_row(row))
    return reports


def stage_demo(cfg: RunConfig) -> dict:
    seed = cfg.require_seed()
    demo = cfg.demo
    data = write_demo_csv(
        cfg.out / "demo" / "data.csv",
        seed,
        n_entities=int(demo.get("entities", 8)),
        hours=int(demo.get("hours", 50)),
    )
    models = tuple(LlmConfig.from_dict(m) for m in (demo.get("models") or [{"model_name": "echo-stub"}]))
    cfg = replace(
        cfg,
        data=data,
        grid=replace(cfg.grid, max_rows=int(demo.get("spectral_max_rows", 200))),
        models=models,
        stub_file=None,
    )
    stage_preprocess(cfg)
    selected = stage_benchmark(cfg)
    stage_thesaurus(cfg)
    explained = stage_explain(cfg)
    reports = stage_evaluate(cfg)
    return {"selection": selected["selection"], "explained": explained["prompt"]["instance_id"], "scored": len(reports)}


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="config/settings.yaml", help="Settings YAML")
    common.add_argument("--out", default=None, help="Output directory (overrides settings)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=None, help="Worker threads; 0 = one per core")
    common.add_argument("--log-level", default="INFO")
    common.add_argument("--stub-file", default=None, help="JSON or YAML (.yaml/.yml) map instance_id -> scripted response")

    ap = argparse.ArgumentParser(prog="xai-thesaurus", description="Explainable clustering with LLM narratives")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="Raw CSV to dataset variants")
    p.add_argument("--data", default=None, help="Input CSV (overrides settings)")

    p = sub.add_parser("benchmark", parents=[common], help="Clustering benchmark and winner selection")
    p.add_argument("--criterion", default=None, choices=["silhouette", "dbi", "chi", "dunn", "pbm", "xie_beni"])

    sub.add_parser("thesaurus", parents=[common], help="Build the exemplar thesaurus")

    p = sub.add_parser("explain", parents=[common], help="Explain one instance with an LLM")
    p.add_argument("--instance", default=None, help="Row key `<entity>@<timestamp>`; default first exemplar")
    p.add_argument("--mode", default="few", choices=["zero", "one", "few"])
    p.add_argument("--k", type=int, default=None, help="Shots for few-shot mode")
    p.add_argument("--model", default=None, help="LLM name from settings")
    p.add_argument("--dataset", default=None, help="Dataset CSV the thesaurus was built on")

    p = sub.add_parser("evaluate", parents=[common], help="Score LLM explanations over the exemplar bank")
    p.add_argument("--limit", type=int, default=None, help="Only the first N exemplars")

    p = sub.add_parser("demo", parents=[common], help="Full pipeline on synthetic data with a stub LLM")
    p.add_argument("--criterion", default=None, choices=["silhouette", "dbi", "chi", "dunn", "pbm", "xie_beni"])
    return ap


def run(args: argparse.Namespace) -> None:
    cfg = RunConfig.from_settings(load_settings(args.config), args)
    log_path = configure_logging(cfg.out, args.log_level)
    logger.info(f"Command: {args.command} out={cfg.out} seed={cfg.seed} jobs={cfg.jobs} log={log_path}")

    if args.command == "preprocess":
        stage_preprocess(cfg)
    elif args.command == "benchmark":
        stage_benchmark(cfg)
    elif args.command == "thesaurus":
        stage_thesaurus(cfg)
    elif args.command == "explain":
        stage_explain(cfg, args.instance, ShotMode.parse(args.mode, args.k), args.model, args.dataset)
    elif args.command == "evaluate":
        stage_evaluate(cfg, args.limit)
    elif args.command == "demo":
        stage_demo(cfg)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """0 on success, 2 for invalid input or configuration, 1 for runtime failures."""
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except ValidationError as e:
        logger.error(f"Invalid input: {type(e).__name__}: {e}")
        print(format_error(e), file=sys.stderr)
        return 2
    except XaiGapError as e:
        logger.error(f"Run failed: {type(e).__name__}: {e}")
        print(format_error(e), file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        print(format_error(e), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
