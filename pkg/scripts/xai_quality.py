#!/usr/bin/env python3
"""Per-instance explainer quality over a saved thesaurus.

This script:
- Loads the thesaurus and the dataset it was built on (fingerprint checked)
- Draws a seeded sample of rows (or takes the whole dataset)
- Runs coefficients, LIME, Anchors and counterfactuals on each row against the surrogate
- Records fidelity, anchor precision/coverage and counterfactual proximity/sparsity

Outputs:
- Console summary
- logs/xai_quality.json with full per-instance details

Notes:
- Rows the surrogate cannot flip are kept with `skipped: true` and a reason
- The same seed gives the same sample and the same explanations
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pytz
import yaml
from loguru import logger

# Allow running as a script from the repo root without installing as a package.
REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from src.data.loader import load_dataset
from src.data.schema import Schema
from src.errors import XaiGapError
from src.explainers.anchors import AnchorSampler, AnchorsConfig, anchors_explain
from src.explainers.coefficients import coefficients_explain
from src.explainers.counterfactual import CounterfactualConfig, counterfactual_search
from src.explainers.lime import TrainingStats, lime_explain_detailed
from src.explainers.types import LimeConfig
from src.surrogate.linear import SurrogateBlackBox
from src.thesaurus.builder import verify_fingerprint
from src.thesaurus.store import load_thesaurus
from src.utils.random_utils import derive_seed, rng_for


def _load_settings(path: str) -> dict:
    with open(path, "r") as f:
        return yaml.safe_load(f) or {}


def _explain_row(row: int, key: str, X: np.ndarray, names, black_box, stats, sampler, ranges, cfgs, seed) -> Dict[str, Any]:
    lime_cfg, anchors_cfg, cf_cfg = cfgs
    x = X[row]
    proba = black_box(x[None, :])[0]
    order = np.argsort(-proba, kind="stable")
    res: Dict[str, Any] = {"instance_id": key, "predicted": int(order[0]), "skipped": False, "skip_reason": None}

    lime = lime_explain_detailed(black_box, x, stats, replace(lime_cfg, seed=derive_seed(seed, "lime", key)), instance_id=key)
    res["lime_fidelity"] = round(lime.fidelity, 6)
    res["lime_top"] = [name for name, _ in lime.vector.ranked()[:3]]

    rule = anchors_explain(black_box, x, sampler, replace(anchors_cfg, seed=derive_seed(seed, "anchors", key)))
    res["anchor"] = rule.describe()
    res["anchor_precision"] = round(rule.precision, 6)
    res["anchor_coverage"] = round(rule.coverage, 6)
    res["anchor_meets_threshold"] = bool(rule.meets_threshold)

    try:
        cf = counterfactual_search(black_box, x, int(order[1]), ranges, cf_cfg, names)
        res["cf_target"] = int(order[1])
        res["cf_proximity"] = round(cf.proximity, 6)
        res["cf_sparsity"] = int(cf.sparsity)
        res["cf_changed"] = cf.changed_features(names)
    except XaiGapError as e:
        res["skipped"] = True
        res["skip_reason"] = f"{type(e).__name__}: {e}"
    return res


def _mean(results: List[Dict[str, Any]], key: str):
    vals = [r[key] for r in results if r.get(key) is not None]
    return round(float(np.mean(vals)), 6) if vals else None


def _summarize(results: List[Dict[str, Any]]) -> Dict[str, Any]:
    return {
        "instances": len(results),
        "cf_skipped": sum(1 for r in results if r["skipped"]),
        "lime_fidelity": _mean(results, "lime_fidelity"),
        "anchor_precision": _mean(results, "anchor_precision"),
        "anchor_coverage": _mean(results, "anchor_coverage"),
        "anchors_below_threshold": sum(1 for r in results if not r["anchor_meets_threshold"]),
        "cf_proximity": _mean(results, "cf_proximity"),
        "cf_sparsity": _mean(results, "cf_sparsity"),
    }


def _print_summary(summary: Dict[str, Any], coefficients: Dict[str, List[str]]) -> None:
    print("Explainer quality")
    print(f"  instances:          {summary['instances']}")
    print(f"  LIME fidelity:      {summary['lime_fidelity']}")
    print(f"  anchor precision:   {summary['anchor_precision']} (below threshold: {summary['anchors_below_threshold']})")
    print(f"  anchor coverage:    {summary['anchor_coverage']}")
    print(f"  cf proximity:       {summary['cf_proximity']}")
    print(f"  cf sparsity:        {summary['cf_sparsity']} (no counterfactual: {summary['cf_skipped']})")
    for cls, top in coefficients.items():
        print(f"  class {cls} top coefficients: {', '.join(top)}")


def main() -> int:
    ap = argparse.ArgumentParser(description="Per-instance explainer quality over a saved thesaurus")
    ap.add_argument("--settings", type=str, default="config/settings.yaml", help="Settings YAML")
    ap.add_argument("--thesaurus", type=str, default="out/thesaurus/thesaurus.json")
    ap.add_argument("--dataset", type=str, default="out/thesaurus/dataset.csv")
    ap.add_argument("--n", type=int, default=50, help="Rows to sample; 0 = all rows")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", type=str, default="logs/xai_quality.json", help="Output JSON path")
    args = ap.parse_args()

    settings = _load_settings(args.settings)
    seed = args.seed if args.seed is not None else int(settings.get("seed", 0))
    xai = settings.get("explainers") or {}
    cfgs = (
        LimeConfig.from_dict(xai.get("lime")),
        AnchorsConfig.from_dict(xai.get("anchors")),
        CounterfactualConfig.from_dict(xai.get("counterfactual")),
    )

    schema = Schema.from_yaml(settings.get("paths", {}).get("schema", "config/schema.yaml"))
    thesaurus = load_thesaurus(args.thesaurus)
    ds = load_dataset(args.dataset)
    verify_fingerprint(thesaurus, schema, ds)

    X = ds.values
    names = list(ds.feature_names)
    black_box = SurrogateBlackBox(thesaurus.surrogate)
    stats = TrainingStats.from_matrix(X, names)
    sampler = AnchorSampler(X, names)
    ranges = X.max(axis=0) - X.min(axis=0)

    rows = np.arange(ds.n_rows)
    if 0 < args.n < rows.size:
        rows = np.sort(rng_for(seed, "xai-quality").choice(rows, size=args.n, replace=False))
    logger.info(f"Explaining {rows.size} rows of {ds.n_rows} with seed={seed}")

    results: List[Dict[str, Any]] = []
    for row in rows:
        key = ds.row_key(int(row))
        try:
            results.append(_explain_row(int(row), key, X, names, black_box, stats, sampler, ranges, cfgs, seed))
        except XaiGapError as e:
            logger.warning(f"Row skipped: instance={key} error={type(e).__name__}: {e}")

    coefficients = {
        str(c): [name for name, _ in coefficients_explain(thesaurus.surrogate, int(c)).ranked()[:3]]
        for c in thesaurus.surrogate.classes
    }
    summary = _summarize(results)
    _print_summary(summary, coefficients)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    payload = {
        "generated_at": datetime.now(tz=pytz.UTC).isoformat(),
        "thesaurus": args.thesaurus,
        "variant": thesaurus.variant,
        "seed": seed,
        "summary": summary,
        "coefficients": coefficients,
        "results": results,
    }

    out_path.write_text(json.dumps(payload, indent=2, sort_keys=False))
    print(f"Saved detailed results to: {out_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
