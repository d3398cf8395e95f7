"""Turn an LLM response into a ranking plus narrative.

The contracted RANKING/EXPLANATION block is tried first. Responses that ignore
the contract are scanned for feature names in order of first mention, with
the sign taken from polarity words in the same sentence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from loguru import logger

from src.errors import Unparseable


RANKING_HEADER = re.compile(r"^\s*RANKING\s*:\s*$", re.IGNORECASE | re.MULTILINE)
EXPLANATION_HEADER = re.compile(r"^\s*EXPLANATION\s*:\s*", re.IGNORECASE | re.MULTILINE)
RANK_LINE = re.compile(r"^\s*\d+\s*[.)]\s*(?P<name>.+?)\s*:\s*(?P<sign>[+\-−])\s*$")
SENTENCE_END = re.compile(r"[.!?\n]")

POSITIVE_WORDS = ("increase", "increases", "increased", "increasing", "higher", "more", "positive", "positively",
                  "raises", "raise", "boosts", "towards", "toward")
NEGATIVE_WORDS = ("decrease", "decreases", "decreased", "decreasing", "lower", "less", "fewer", "negative",
                  "negatively", "reduces", "reduce", "away")


class ParsePath(str, Enum):
    STRUCTURED = "structured_block"
    FALLBACK = "fallback_scan"


@dataclass(frozen=True)
class ParsedExplanation:
    technical_ranking: tuple[tuple[str, str], ...]
    narrative: str
    raw_response: str
    parse_path: ParsePath

    @property
    def features(self) -> list[str]:
        return [name for name, _ in self.technical_ranking]

    def to_dict(self) -> dict:
        return {
            "technical_ranking": [[n, s] for n, s in self.technical_ranking],
            "narrative": self.narrative,
            "raw_response": self.raw_response,
            "parse_path": self.parse_path.value,
        }


def _norm(text: str) -> str:
    return text.lower().replace("_", " ")


def _sign(symbol: str) -> str:
    return "+" if symbol == "+" else "-"


def _structured(text: str, names: list[str]) -> tuple[list[tuple[str, str]], str] | None:
    header = RANKING_HEADER.search(text)
    if header is None:
        return None
    body = text[header.end():]
    expl = EXPLANATION_HEADER.search(body)
    block = body[: expl.start()] if expl else body
    narrative = body[expl.end():].strip() if expl else ""

    lookup = {_norm(n): n for n in names}
    ranking, seen = [], set()
    for line in block.splitlines():
        m = RANK_LINE.match(line)
        if not m:
            continue
        name = lookup.get(_norm(m.group("name").strip("`*\"' ")))
        if name is None:
            logger.warning(f"Ranking line names an unknown feature: {m.group('name')!r}")
            continue
        if name in seen:
            continue
        seen.add(name)
        ranking.append((name, _sign(m.group("sign"))))
    if not ranking:
        return None
    return ranking, narrative


def _polarity(clause: str) -> str | None:
    for w in re.findall(r"[a-z]+", clause):
        if w in POSITIVE_WORDS:
            return "+"
        if w in NEGATIVE_WORDS:
            return "-"
    return None


def _scan(text: str, names: list[str]) -> list[tuple[str, str]]:
    lowered = _norm(text)
    taken = [False] * len(lowered)
    hits = []
    # longest names first so "lightly active minutes" is not claimed by "active minutes"
    for name in sorted(names, key=lambda n: (-len(n), n)):
        pattern = re.compile(r"(?<![a-z0-9])" + re.escape(_norm(name)) + r"(?![a-z0-9])")
        for m in pattern.finditer(lowered):
            if any(taken[m.start():m.end()]):
                continue
            for i in range(m.start(), m.end()):
                taken[i] = True
            hits.append((m.start(), m.end(), name))

    hits.sort()
    ranking, seen = [], set()
    for start, end, name in hits:
        if name in seen:
            continue
        seen.add(name)
        stop = SENTENCE_END.search(lowered, end)
        after = lowered[end: stop.start() if stop else len(lowered)]
        begin = max((m.end() for m in SENTENCE_END.finditer(lowered, 0, start)), default=0)
        sign = _polarity(after) or _polarity(lowered[begin:start]) or "+"
        ranking.append((name, sign))
    return ranking


def parse_response(text: str, feature_names: Iterable[str]) -> ParsedExplanation:
    names = list(feature_names)
    raw = text or ""
    if not raw.strip():
        raise Unparseable("Empty response")

    structured = _structured(raw, names)
    if structured is not None:
        ranking, narrative = structured
        path = ParsePath.STRUCTURED
    else:
        ranking = _scan(raw, names)
        if not ranking:
            raise Unparseable("Response has no RANKING block and mentions no known feature")
        narrative = EXPLANATION_HEADER.split(raw)[-1].strip()
        path = ParsePath.FALLBACK
        logger.debug(f"Response parsed by free-text scan: features={len(ranking)}")
    if not narrative:
        narrative = raw.strip()
    return ParsedExplanation(
        technical_ranking=tuple(ranking),
        narrative=narrative,
        raw_response=raw,
        parse_path=path,
    )
