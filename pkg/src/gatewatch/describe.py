"""Natural-language scene descriptions from scene facts.

A rule-based grammar emits tagged clauses (SUBJECT, WEAPON, MASK, PHONE,
ATTRS, LOCATION) and renders them to one sentence, e.g. "An unknown
person with a gun who has beard, mustache, hair, and no-eyeglass at the
back door". A pluggable refiner picks the best of several candidate
sequences; the default is a trigram model with add-one smoothing trained
on the grammar's own output space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .attributes import SceneFacts
from .errors import InvalidInputError

SUBJECT, WEAPON, MASK, PHONE, ATTRS, LOCATION = (
    "SUBJECT",
    "WEAPON",
    "MASK",
    "PHONE",
    "ATTRS",
    "LOCATION",
)

UNKNOWN_SUBJECT = "An unknown person"
FACELESS_SUBJECT = "A person"
WEAPON_TEXT = "with a gun"
MASK_TEXT = "wearing a mask"
PHONE_TEXT = "talking over the phone"
ATTRS_PREFIX = "who has "
LOCATION_PREFIX = "at the "

DEFAULT_LOCATIONS = ("entrance", "front door", "back door", "driveway")
HAIR_COLORS = ("black", "brown", "gray", "white/blond")


@dataclass(frozen=True)
class Clause:
    tag: str
    text: str


@dataclass(frozen=True)
class DescriptionSequence:
    clauses: tuple[Clause, ...]
    rendered: str

    def clause_map(self) -> dict[str, str]:
        return {c.tag: c.text for c in self.clauses}


def _comma_list(items: Sequence[str]) -> str:
    if len(items) == 1:
        return items[0]
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return ", ".join(items[:-1]) + f", and {items[-1]}"


def _attr_items(facts: SceneFacts) -> list[str]:
    # Fixed presentation order: beard, mustache, hair, eyeglass.
    items: list[str] = []
    if facts.has_beard is not None:
        items.append("beard" if facts.has_beard else "no-beard")
    if facts.has_mustache is not None:
        items.append("mustache" if facts.has_mustache else "no-mustache")
    if facts.is_bald is not None:
        if facts.is_bald:
            items.append("no-hair")
        else:
            items.append(f"{facts.hair_color} hair" if facts.hair_color else "hair")
    if facts.has_eyeglass is not None:
        items.append("eyeglass" if facts.has_eyeglass else "no-eyeglass")
    return items


def facts_to_sequence(facts: SceneFacts) -> DescriptionSequence:
    """Render scene facts to a tagged clause sequence and its sentence.

    Clause order is SUBJECT, WEAPON, MASK, PHONE, ATTRS, LOCATION, except
    for a known person whose only optional clause is the phone: then the
    location reads better first (SUBJECT, LOCATION, PHONE).
    """
    known = facts.identity and facts.identity != "Unknown"
    optional: list[Clause] = []
    if facts.has_gun:
        optional.append(Clause(WEAPON, WEAPON_TEXT))
    if facts.has_mask:
        optional.append(Clause(MASK, MASK_TEXT))
    if facts.has_phone:
        optional.append(Clause(PHONE, PHONE_TEXT))
    attr_items = _attr_items(facts)
    if attr_items:
        optional.append(Clause(ATTRS, ATTRS_PREFIX + _comma_list(attr_items)))

    location = Clause(LOCATION, LOCATION_PREFIX + facts.location_label)

    if facts.person_present_without_face and not optional and not known:
        clauses = (Clause(SUBJECT, FACELESS_SUBJECT), location)
    else:
        subject = Clause(SUBJECT, facts.identity if known else UNKNOWN_SUBJECT)
        only_phone = [c.tag for c in optional] == [PHONE]
        if known and only_phone:
            clauses = (subject, location, optional[0])
        else:
            clauses = (subject, *optional, location)

    rendered = " ".join(c.text for c in clauses)
    return DescriptionSequence(clauses, rendered)


_MARKERS = (
    (WEAPON, " " + WEAPON_TEXT),
    (MASK, " " + MASK_TEXT),
    (PHONE, " " + PHONE_TEXT),
    (ATTRS, " " + ATTRS_PREFIX),
    (LOCATION, " " + LOCATION_PREFIX),
)


def parse_description(rendered: str) -> dict[str, str]:
    """Recover the clause map from a rendered sentence.

    Inverse of rendering for grammar output (clause-level round trip);
    assumes location labels and names do not embed the marker phrases.
    """
    if not rendered or rendered != rendered.strip():
        raise InvalidInputError("rendered description is empty or has stray whitespace")
    hits = []
    for tag, marker in _MARKERS:
        pos = rendered.find(marker)
        if pos >= 0:
            hits.append((pos, tag, marker))
    hits.sort()
    if not hits:
        return {SUBJECT: rendered}
    clauses = {SUBJECT: rendered[: hits[0][0]]}
    for i, (pos, tag, marker) in enumerate(hits):
        end = hits[i + 1][0] if i + 1 < len(hits) else len(rendered)
        clauses[tag] = rendered[pos + 1 : end]
    return clauses


# ---------------------------------------------------------------------------
# Refiners.


class Refiner(Protocol):
    def score(self, sequence: DescriptionSequence) -> float: ...

    def refine(self, candidates: Sequence[DescriptionSequence]) -> DescriptionSequence: ...


class IdentityRefiner:
    """Keeps the grammar's first candidate untouched."""

    def score(self, sequence: DescriptionSequence) -> float:
        return 0.0

    def refine(self, candidates: Sequence[DescriptionSequence]) -> DescriptionSequence:
        return candidates[0]


_BOUNDARY = "\x02"
_END = "\x03"


class TrigramRefiner:
    """Add-one-smoothed trigram scorer over grammar-generated sentences."""

    def __init__(self, trigrams: dict | None = None, bigrams: dict | None = None,
                 vocabulary: set | None = None):
        self.trigrams = trigrams or {}
        self.bigrams = bigrams or {}
        self.vocabulary = vocabulary or set()

    @classmethod
    def train(cls, corpus: Iterable[str]) -> "TrigramRefiner":
        trigrams: dict[tuple, int] = {}
        bigrams: dict[tuple, int] = {}
        vocabulary: set[str] = {_END}
        for sentence in corpus:
            tokens = [_BOUNDARY, _BOUNDARY, *sentence.split(), _END]
            vocabulary.update(tokens[2:])
            for i in range(2, len(tokens)):
                tri = (tokens[i - 2], tokens[i - 1], tokens[i])
                bi = (tokens[i - 2], tokens[i - 1])
                trigrams[tri] = trigrams.get(tri, 0) + 1
                bigrams[bi] = bigrams.get(bi, 0) + 1
        return cls(trigrams, bigrams, vocabulary)

    def score(self, sequence: DescriptionSequence) -> float:
        tokens = [_BOUNDARY, _BOUNDARY, *sequence.rendered.split(), _END]
        v = len(self.vocabulary)
        total = 0.0
        for i in range(2, len(tokens)):
            tri = (tokens[i - 2], tokens[i - 1], tokens[i])
            bi = (tokens[i - 2], tokens[i - 1])
            total += math.log(
                (self.trigrams.get(tri, 0) + 1) / (self.bigrams.get(bi, 0) + v)
            )
        return total

    def refine(self, candidates: Sequence[DescriptionSequence]) -> DescriptionSequence:
        best_index = 0
        best_score = -math.inf
        for i, candidate in enumerate(candidates):
            s = self.score(candidate)
            if s > best_score:
                best_index, best_score = i, s
        return candidates[best_index]

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "trigram-v1",
                "trigrams": {"\x1f".join(k): v for k, v in self.trigrams.items()},
                "bigrams": {"\x1f".join(k): v for k, v in self.bigrams.items()},
                "vocabulary": sorted(self.vocabulary),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "TrigramRefiner":
        payload = json.loads(text)
        if payload.get("format") != "trigram-v1":
            raise InvalidInputError("unrecognized refiner model format")
        return cls(
            {tuple(k.split("\x1f")): v for k, v in payload["trigrams"].items()},
            {tuple(k.split("\x1f")): v for k, v in payload["bigrams"].items()},
            set(payload["vocabulary"]),
        )

    def save(self, path: str | Path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TrigramRefiner":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def refine(
    candidates: Sequence[DescriptionSequence], refiner: Refiner
) -> DescriptionSequence:
    """Pick the refiner's best candidate; it must be one of the inputs."""
    if not candidates:
        raise InvalidInputError("refine needs at least one candidate")
    choice = refiner.refine(candidates)
    if not any(choice is c for c in candidates):
        raise InvalidInputError("refiner returned a sequence outside its candidates")
    return choice


def enumerate_fact_space(
    locations: Sequence[str] = DEFAULT_LOCATIONS,
    known_name: str = "Alex",
    include_colors: bool = True,
) -> list[SceneFacts]:
    """Every fact combination the grammar can describe, for corpus training."""
    tri = (True, False, None)
    flag = (True, None)
    facts: list[SceneFacts] = []
    for location in locations:
        facts.append(
            SceneFacts("Unknown", location, person_present_without_face=True)
        )
        for identity, gun, mask_f, phone, beard, mustache, bald, glasses in product(
            (known_name, "Unknown"), flag, flag, flag, tri, tri, tri, tri
        ):
            facts.append(
                SceneFacts(
                    identity,
                    location,
                    has_gun=gun,
                    has_mask=mask_f,
                    has_phone=phone,
                    has_beard=beard,
                    has_mustache=mustache,
                    is_bald=bald,
                    has_eyeglass=glasses,
                )
            )
        if include_colors:
            for color in HAIR_COLORS:
                facts.append(
                    SceneFacts(
                        "Unknown", location, is_bald=False, hair_color=color
                    )
                )
    return facts


def train_default_refiner(
    locations: Sequence[str] = DEFAULT_LOCATIONS,
) -> TrigramRefiner:
    corpus = (facts_to_sequence(f).rendered for f in enumerate_fact_space(locations))
    return TrigramRefiner.train(corpus)
