from __future__ import annotations

import pytest

from gatewatch.attributes import SceneFacts
from gatewatch.describe import (
    DescriptionSequence,
    Clause,
    IdentityRefiner,
    TrigramRefiner,
    enumerate_fact_space,
    facts_to_sequence,
    parse_description,
    refine,
    train_default_refiner,
)
from gatewatch.errors import InvalidInputError

SAMPLE_CALLER = SceneFacts(
    "John", "entrance", has_phone=True, has_gun=False, has_mask=False
)
SAMPLE_STRANGER = SceneFacts(
    "Unknown",
    "back door",
    has_gun=True,
    has_beard=True,
    has_mustache=True,
    is_bald=False,
    has_eyeglass=False,
)


class TestGrammar:
    def test_known_caller_sentence(self):
        seq = facts_to_sequence(SAMPLE_CALLER)
        assert seq.rendered == "John at the entrance talking over the phone"
        assert [c.tag for c in seq.clauses] == ["SUBJECT", "LOCATION", "PHONE"]

    def test_armed_stranger_sentence(self):
        seq = facts_to_sequence(SAMPLE_STRANGER)
        assert seq.rendered == (
            "An unknown person with a gun who has beard, mustache, hair, "
            "and no-eyeglass at the back door"
        )
        assert [c.tag for c in seq.clauses] == ["SUBJECT", "WEAPON", "ATTRS", "LOCATION"]

    def test_person_without_face_minimal(self):
        facts = SceneFacts("Unknown", "driveway", person_present_without_face=True)
        assert facts_to_sequence(facts).rendered == "A person at the driveway"

    def test_faceless_with_weapon_still_describes(self):
        facts = SceneFacts(
            "Unknown", "back door", has_gun=True, person_present_without_face=True
        )
        assert (
            facts_to_sequence(facts).rendered
            == "An unknown person with a gun at the back door"
        )

    def test_known_person_general_order_without_phone(self):
        facts = SceneFacts("John", "entrance", has_gun=True)
        assert facts_to_sequence(facts).rendered == "John with a gun at the entrance"

    def test_mask_clause(self):
        facts = SceneFacts("Unknown", "front door", has_mask=True)
        assert (
            facts_to_sequence(facts).rendered
            == "An unknown person wearing a mask at the front door"
        )

    def test_attrs_two_items_without_comma(self):
        facts = SceneFacts("Unknown", "entrance", has_beard=True, has_mustache=False)
        assert (
            facts_to_sequence(facts).rendered
            == "An unknown person who has beard and no-mustache at the entrance"
        )

    def test_attrs_single_item(self):
        facts = SceneFacts("Unknown", "entrance", has_eyeglass=True)
        assert (
            facts_to_sequence(facts).rendered
            == "An unknown person who has eyeglass at the entrance"
        )

    def test_bald_head_renders_no_hair(self):
        facts = SceneFacts("Unknown", "entrance", is_bald=True)
        assert (
            facts_to_sequence(facts).rendered
            == "An unknown person who has no-hair at the entrance"
        )

    def test_hair_color_prefixes_hair(self):
        facts = SceneFacts("Unknown", "entrance", is_bald=False, hair_color="gray")
        assert (
            facts_to_sequence(facts).rendered
            == "An unknown person who has gray hair at the entrance"
        )

    def test_unknown_tristates_omitted(self):
        facts = SceneFacts("Unknown", "entrance")
        assert facts_to_sequence(facts).rendered == "An unknown person at the entrance"

    def test_rendering_is_pure(self):
        first = facts_to_sequence(SAMPLE_STRANGER)
        second = facts_to_sequence(
            SceneFacts(
                "Unknown",
                "back door",
                has_gun=True,
                has_beard=True,
                has_mustache=True,
                is_bald=False,
                has_eyeglass=False,
            )
        )
        assert first.rendered == second.rendered
        assert first.clauses == second.clauses

    def test_rendered_has_no_trailing_whitespace(self):
        for facts in enumerate_fact_space(locations=("entrance",))[:200]:
            rendered = facts_to_sequence(facts).rendered
            assert rendered
            assert rendered == rendered.strip()


class TestParseRoundTrip:
    def test_samples_round_trip(self):
        for facts in (SAMPLE_CALLER, SAMPLE_STRANGER):
            seq = facts_to_sequence(facts)
            assert parse_description(seq.rendered) == seq.clause_map()

    def test_full_fact_space_round_trips_at_clause_level(self):
        for facts in enumerate_fact_space():
            seq = facts_to_sequence(facts)
            assert parse_description(seq.rendered) == seq.clause_map()

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            parse_description("")


def _shuffled_copy(seq: DescriptionSequence) -> DescriptionSequence:
    words = seq.rendered.split()
    # Deterministic derangement: rotate by half the sentence.
    half = len(words) // 2
    shuffled = words[half:] + words[:half]
    return DescriptionSequence(seq.clauses, " ".join(shuffled))


class TestRefiners:
    def test_single_candidate_returned(self):
        seq = facts_to_sequence(SAMPLE_CALLER)
        assert refine([seq], IdentityRefiner()) is seq

    def test_identity_refiner_picks_first(self):
        seqs = [facts_to_sequence(f) for f in enumerate_fact_space()[:5]]
        assert refine(seqs, IdentityRefiner()) is seqs[0]

    def test_empty_candidates_rejected(self):
        with pytest.raises(InvalidInputError):
            refine([], IdentityRefiner())

    def test_trigram_prefers_grammar_legal_order(self):
        refiner = train_default_refiner()
        legal = facts_to_sequence(SAMPLE_STRANGER)
        shuffled = _shuffled_copy(legal)
        assert refiner.score(legal) > refiner.score(shuffled)
        assert refine([shuffled, legal], refiner) is legal

    def test_trigram_tie_breaks_by_index(self):
        refiner = train_default_refiner()
        seq = facts_to_sequence(SAMPLE_CALLER)
        twin = DescriptionSequence(seq.clauses, seq.rendered)
        assert refine([seq, twin], refiner) is seq

    def test_trigram_round_trips_through_json(self):
        refiner = train_default_refiner()
        restored = TrigramRefiner.from_json(refiner.to_json())
        seq = facts_to_sequence(SAMPLE_STRANGER)
        assert restored.score(seq) == refiner.score(seq)

    def test_refiner_output_must_be_a_candidate(self):
        class Rogue:
            def score(self, s):
                return 0.0

            def refine(self, candidates):
                return DescriptionSequence(
                    (Clause("SUBJECT", "fabricated"),), "fabricated"
                )

        with pytest.raises(InvalidInputError):
            refine([facts_to_sequence(SAMPLE_CALLER)], Rogue())
