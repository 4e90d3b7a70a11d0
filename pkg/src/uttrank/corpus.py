"""Corpus data model and ingestion.

A corpus file is UTF-8 JSONL: one instance record per line with fields
`instance_id`, `meeting_id`, `query`, `gold_summary`, `utterances` (array of
{index, speaker, text}), and optional `relevant_spans` ([start, end] inclusive
index pairs). This mirrors the annotation structure of query-focused meeting
corpora with topic segmentation and relevant spans.

All corpus values are immutable after construction and safe to share across
concurrent readers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import CorpusFormatError, ValidationError
from .rouge import tokenize

SPLITS = ("train", "validation", "test")

__all__ = [
    "SPLITS",
    "Utterance",
    "QueryInstance",
    "Corpus",
    "RankSample",
    "load_corpus",
    "save_corpus",
    "partition_samples",
]


@dataclass(frozen=True)
class Utterance:
    """One speaker turn; `index` is the 0-based transcript position."""

    meeting_id: str
    index: int
    speaker: str
    text: str


@dataclass(frozen=True)
class QueryInstance:
    """One query over one meeting, paired with its reference summary."""

    instance_id: str
    meeting_id: str
    query: str
    utterances: tuple[Utterance, ...]
    gold_summary: str
    relevant_spans: tuple[tuple[int, int], ...] | None = None

    def validate(self) -> None:
        if not self.query.strip():
            raise ValidationError(f"instance {self.instance_id!r}: empty query")
        if not self.gold_summary.strip():
            raise ValidationError(f"instance {self.instance_id!r}: empty gold_summary")
        if not self.utterances:
            raise ValidationError(f"instance {self.instance_id!r}: no utterances")
        indices = [u.index for u in self.utterances]
        if indices != list(range(len(indices))):
            raise ValidationError(
                f"instance {self.instance_id!r}: utterance indices must be 0..n-1 "
                f"in order with no gaps, got {indices}"
            )
        for u in self.utterances:
            if u.meeting_id != self.meeting_id:
                raise ValidationError(
                    f"instance {self.instance_id!r}: utterance {u.index} has "
                    f"meeting_id {u.meeting_id!r}, expected {self.meeting_id!r}"
                )
            if not tokenize(u.text):
                raise ValidationError(
                    f"instance {self.instance_id!r}: utterance {u.index} has no tokens"
                )


@dataclass(frozen=True)
class Corpus:
    instances: tuple[QueryInstance, ...]
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(f"unknown split {self.split!r}, expected one of {SPLITS}")
        seen: set[str] = set()
        for inst in self.instances:
            if inst.instance_id in seen:
                raise ValidationError(f"duplicate instance_id {inst.instance_id!r}")
            seen.add(inst.instance_id)

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)


@dataclass(frozen=True)
class RankSample:
    """A contiguous utterance group with aligned gold relevance labels.

    The unit of pairwise training: at least two members, so every sample
    admits at least one comparison.
    """

    instance_id: str
    member_indices: tuple[int, ...]
    gold_relevance: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if len(self.member_indices) < 2:
            raise ValidationError(
                f"sample for {self.instance_id!r} needs >= 2 members, "
                f"got {len(self.member_indices)}"
            )
        if len(self.gold_relevance) != len(self.member_indices):
            raise ValidationError(
                f"sample for {self.instance_id!r}: gold_relevance length "
                f"{len(self.gold_relevance)} != member count {len(self.member_indices)}"
            )


def _parse_instance(record: dict, path: str, line_number: int) -> QueryInstance:
    try:
        utterances = tuple(
            Utterance(
                meeting_id=record["meeting_id"],
                index=int(u["index"]),
                speaker=str(u["speaker"]),
                text=str(u["text"]),
            )
            for u in record["utterances"]
        )
        spans = record.get("relevant_spans")
        instance = QueryInstance(
            instance_id=str(record["instance_id"]),
            meeting_id=str(record["meeting_id"]),
            query=str(record["query"]),
            utterances=utterances,
            gold_summary=str(record["gold_summary"]),
            relevant_spans=tuple((int(a), int(b)) for a, b in spans) if spans else None,
        )
    except (KeyError, TypeError) as exc:
        raise CorpusFormatError(path, line_number, f"missing or malformed field: {exc}") from exc
    instance.validate()
    return instance


def load_corpus(path: str | Path, split: str = "train") -> Corpus:
    """Load and validate a JSONL corpus file; utterance order is preserved."""
    path = Path(path)
    instances = []
    try:
        fh = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise CorpusFormatError(str(path), 0, f"cannot open corpus file: {exc}") from exc
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(str(path), line_number, f"invalid JSON: {exc}") from exc
            instances.append(_parse_instance(record, str(path), line_number))
    return Corpus(instances=tuple(instances), split=split)


def instance_to_record(instance: QueryInstance) -> dict:
    record = {
        "instance_id": instance.instance_id,
        "meeting_id": instance.meeting_id,
        "query": instance.query,
        "gold_summary": instance.gold_summary,
        "utterances": [
            {"index": u.index, "speaker": u.speaker, "text": u.text}
            for u in instance.utterances
        ],
    }
    if instance.relevant_spans is not None:
        record["relevant_spans"] = [list(span) for span in instance.relevant_spans]
    return record


def save_corpus(corpus: Corpus | Iterable[QueryInstance], path: str | Path) -> None:
    """Write instances as JSONL; load_corpus on the result round-trips exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for instance in corpus:
            fh.write(json.dumps(instance_to_record(instance), ensure_ascii=False) + "\n")


def partition_samples(
    instance: QueryInstance,
    sample_size: int,
    gold_relevance,
) -> list[RankSample]:
    """Split an instance into contiguous ranking samples of sample_size utterances.

    The final window may be smaller, but a trailing singleton is merged into
    the preceding window: a 1-element sample admits no pairwise comparison.
    Windows are disjoint and cover every utterance index.
    """
    n = len(instance.utterances)
    if sample_size < 2:
        raise ValidationError(f"sample_size must be >= 2, got {sample_size}")
    if n < 2:
        raise ValidationError(
            f"instance {instance.instance_id!r} has {n} utterances; need >= 2"
        )
    if len(gold_relevance) != n:
        raise ValidationError(
            f"instance {instance.instance_id!r}: gold_relevance length "
            f"{len(gold_relevance)} != utterance count {n}"
        )
    bounds = list(range(0, n, sample_size)) + [n]
    if bounds[-1] - bounds[-2] == 1:
        del bounds[-2]  # merge trailing singleton into the previous window
    samples = []
    for start, stop in zip(bounds, bounds[1:]):
        members = tuple(range(start, stop))
        samples.append(
            RankSample(
                instance_id=instance.instance_id,
                member_indices=members,
                gold_relevance=tuple(float(gold_relevance[i]) for i in members),
            )
        )
    return samples
