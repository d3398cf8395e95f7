"""Prompt assembly for the dual-audience explanation.

The system message carries the role, the domain preamble, the cluster profile
and the answer format. The user message carries the worked examples (if any)
followed by the instance to explain. Only the thesaurus features (training
role) ever reach either message.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Optional, Sequence

from src.data.schema import Dataset, Schema
from src.errors import BankTooSmall, ConfigError, FingerprintMismatch
from src.explainers.lime import TrainingStats, lime_explain
from src.explainers.types import FeatureImportanceVector, LimeConfig
from src.surrogate.linear import SurrogateBlackBox, predict
from src.thesaurus.builder import DatasetFingerprint, Exemplar, Thesaurus, dataset_fingerprint, original_units
from src.utils.random_utils import derive_seed, rng_for


FEW_SHOT_DEFAULT = 3
FEW_SHOT_MIN, FEW_SHOT_MAX = 2, 10
CHARS_PER_TOKEN = 4

ROLE_STATEMENT = (
    "You are an assistant that explains the output of a clustering model to two audiences at once: "
    "domain experts, who need the ranked feature importances, and non-experts, who need a short "
    "plain-language explanation."
)

OUTPUT_CONTRACT = """Answer in exactly this format:
RANKING:
1. <feature_name>: <+|->
2. <feature_name>: <+|->
(one line per feature, most important first, using the feature names exactly as listed;
"+" means the feature pushes the instance towards its cluster, "-" means away from it)
EXPLANATION:
<a few sentences in plain language for a non-expert>"""


class ShotKind(str, Enum):
    ZERO = "zero"
    ONE = "one"
    FEW = "few"


@dataclass(frozen=True)
class ShotMode:
    kind: ShotKind = ShotKind.ZERO
    k: int = FEW_SHOT_DEFAULT

    def __post_init__(self):
        object.__setattr__(self, "kind", ShotKind(self.kind))
        if self.kind == ShotKind.FEW and not FEW_SHOT_MIN <= int(self.k) <= FEW_SHOT_MAX:
            raise ConfigError(f"few-shot k must be in [{FEW_SHOT_MIN}, {FEW_SHOT_MAX}], got {self.k}")

    @property
    def n_shots(self) -> int:
        return {ShotKind.ZERO: 0, ShotKind.ONE: 1, ShotKind.FEW: int(self.k)}[self.kind]

    @property
    def label(self) -> str:
        return f"{self.kind.value}-shot"

    @classmethod
    def parse(cls, kind: str, k: Optional[int] = None) -> "ShotMode":
        return cls(ShotKind(str(kind).lower()), int(k) if k is not None else FEW_SHOT_DEFAULT)


@dataclass(frozen=True)
class Instance:
    """The row to explain, in original units, with its predicted cluster."""

    instance_id: str
    features: tuple[tuple[str, float], ...]
    cluster: int
    cluster_label: str
    fingerprint: DatasetFingerprint
    reference: Optional[FeatureImportanceVector] = None


@dataclass(frozen=True)
class Shot:
    instance_id: str
    rendering: str
    answer: str
    ranking: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    shots: tuple[Shot, ...]
    mode: ShotMode
    instance_id: str
    feature_names: tuple[str, ...]
    cluster_label: str = ""
    # ground truth for scoring and for the echo/reverse stubs; never rendered
    reference: Optional[FeatureImportanceVector] = field(default=None, compare=False)

    @property
    def token_estimate(self) -> int:
        """Character count / 4; an estimate, not a tokenizer count."""
        return math.ceil((len(self.system_text) + len(self.user_text)) / CHARS_PER_TOKEN)

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
        ]

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "mode": self.mode.label,
            "n_shots": len(self.shots),
            "shot_ids": [s.instance_id for s in self.shots],
            "token_estimate": self.token_estimate,
            "messages": self.messages(),
        }


def format_value(v: float) -> str:
    return f"{float(v):.6g}"


def signed_ranking(vector: FeatureImportanceVector) -> tuple[tuple[str, str], ...]:
    return tuple((name, "+" if w >= 0 else "-") for name, w in vector.ranked())


def render_instance(instance_id: str, features: Sequence[tuple[str, float]], cluster_label: str) -> str:
    lines = [f"Instance: {instance_id}", f"Cluster: {cluster_label}", "Features:"]
    lines += [f"- {name}: {format_value(v)}" for name, v in features]
    return "\n".join(lines)


def narrative_for(ranking: Sequence[tuple[str, str]], cluster_label: str, glossary: Mapping[str, str]) -> str:
    """Template narrative used for exemplar answers and the stub backends."""
    if not ranking:
        return f"This record was assigned to the group '{cluster_label}'."

    def describe(name: str) -> str:
        text = glossary.get(name)
        return f"{name} ({text.rstrip('.')})" if text else name

    top = ranking[0]
    towards = "towards" if top[1] == "+" else "away from"
    parts = [f"This record belongs to the group '{cluster_label}'.",
             f"The most influential measurement is {describe(top[0])}, which pushes it {towards} this group."]
    if len(ranking) > 1:
        rest = ", ".join(name for name, _ in ranking[1:3])
        parts.append(f"Next in importance are {rest}.")
    return " ".join(parts)


def render_answer(ranking: Sequence[tuple[str, str]], narrative: str) -> str:
    lines = ["RANKING:"]
    lines += [f"{i}. {name}: {sign}" for i, (name, sign) in enumerate(ranking, start=1)]
    lines += ["EXPLANATION:", narrative.strip()]
    return "\n".join(lines)


def _profile_summary(t: Thesaurus) -> str:
    p = t.profile
    lines = ["Clusters:"]
    for label, size in zip(p.display_labels, p.sizes):
        lines.append(f"- {label}: {size} records")
    significant = [r for r in p.rows if r.significant]
    if significant:
        lines.append(f"Validation measures that differ significantly between clusters (p < {p.alpha:g}):")
        for r in significant:
            means = ", ".join(f"{label}={format_value(m)}" for label, m in zip(p.display_labels, r.means))
            lines.append(f"- {r.feature} [{r.comparison}]: mean {means}")
    return "\n".join(lines)


def _glossary_block(t: Thesaurus) -> str:
    lines = ["Features:"]
    for name in t.feature_names:
        desc = t.glossary.get(name, "")
        lines.append(f"- {name}: {desc}" if desc else f"- {name}")
    return "\n".join(lines)


def system_text(t: Thesaurus) -> str:
    blocks = [ROLE_STATEMENT]
    if t.preamble:
        blocks.append(t.preamble.strip())
    blocks += [_profile_summary(t), _glossary_block(t), OUTPUT_CONTRACT]
    return "\n\n".join(blocks)


def _shot(t: Thesaurus, e: Exemplar) -> Shot:
    ranking = signed_ranking(e.explanation)
    return Shot(
        instance_id=e.instance_id,
        rendering=render_instance(e.instance_id, e.features, e.cluster_label),
        answer=render_answer(ranking, narrative_for(ranking, e.cluster_label, t.glossary)),
        ranking=ranking,
    )


def build_prompt(t: Thesaurus, instance: Instance, mode: ShotMode, seed: int) -> PromptBundle:
    if instance.fingerprint != t.fingerprint:
        raise FingerprintMismatch(f"Instance {instance.instance_id} comes from a dataset the thesaurus was not built on")

    pool = [e for e in t.exemplars if e.instance_id != instance.instance_id]
    n = mode.n_shots
    if n > len(pool):
        raise BankTooSmall(f"{mode.label} needs {n} exemplars, bank has {len(pool)} usable")
    picked = rng_for(seed, "shots", instance.instance_id).choice(len(pool), size=n, replace=False) if n else []
    shots = tuple(_shot(t, pool[int(i)]) for i in picked)

    allowed = set(t.feature_names)
    features = tuple((name, v) for name, v in instance.features if name in allowed)
    target = render_instance(instance.instance_id, features, instance.cluster_label)
    if shots:
        examples = "\n\n".join(
            f"### Example {i}\n{s.rendering}\n{s.answer}" for i, s in enumerate(shots, start=1)
        )
        user = f"Worked examples:\n\n{examples}\n\n### Explain this instance\n{target}"
    else:
        user = f"### Explain this instance\n{target}"

    return PromptBundle(
        system_text=system_text(t),
        user_text=user,
        shots=shots,
        mode=mode,
        instance_id=instance.instance_id,
        feature_names=tuple(name for name, _ in features),
        cluster_label=instance.cluster_label,
        reference=instance.reference,
    )


def instance_from_dataset(
    t: Thesaurus,
    schema: Schema,
    ds: Dataset,
    instance_id: str,
    lime_cfg: LimeConfig = LimeConfig(),
) -> Instance:
    """Build the instance view; the reference explanation comes from the bank or a fresh LIME run."""
    row = ds.row_index(instance_id)
    x = ds.values[row]
    cluster = int(predict(t.surrogate, x[None, :])[0])
    if t.has_exemplar(instance_id):
        reference = t.exemplar(instance_id).explanation
    else:
        stats = TrainingStats.from_matrix(ds.values, ds.feature_names)
        cfg = replace(lime_cfg, seed=derive_seed(lime_cfg.seed, "exemplar", instance_id))
        reference = lime_explain(SurrogateBlackBox(t.surrogate), x, stats, cfg, instance_id=instance_id)
    return Instance(
        instance_id=instance_id,
        features=original_units(ds, t.normalization, row),
        cluster=cluster,
        cluster_label=t.profile.label_for(cluster),
        fingerprint=dataset_fingerprint(schema, ds),
        reference=reference,
    )


def exemplar_instance(t: Thesaurus, e: Exemplar) -> Instance:
    """An exemplar seen as an instance to explain (used by batch evaluation)."""
    return Instance(
        instance_id=e.instance_id,
        features=e.features,
        cluster=e.cluster,
        cluster_label=e.cluster_label,
        fingerprint=t.fingerprint,
        reference=e.explanation,
    )
