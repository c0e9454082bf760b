#include <doctest.h>

#include "fides/verify_edit.hpp"
#include "test_support.hpp"

using namespace fides;

namespace {

AtomicFact fact_at(int m, int k, const std::string& text) {
    AtomicFact f;
    f.sentence_index = m;
    f.fact_index = k;
    f.text = text;
    return f;
}

EvidenceSnippet ev(const std::string& text, int m = 0, int k = 0) {
    EvidenceSnippet s;
    s.text = text;
    s.source_url = "https://x.local/e";
    s.fact_key = {m, k};
    s.rerank_score = 1.0;
    return s;
}

SentenceUnit unit(int index, const std::string& txt) {
    SentenceUnit u;
    u.index = index;
    u.text = txt;
    u.subject_surface = text::first_word_chunk(txt);
    return u;
}

struct VerifyRig {
    std::shared_ptr<FixtureSet> fx = std::make_shared<FixtureSet>();
    PromptLibrary prompts;

    VerifierEditor make() {
        auto llm = std::make_shared<MockLlm>(fx);
        return VerifierEditor(llm, llm, prompts);
    }
    std::string ev_prompt(const AtomicFact& f, const EvidenceSnippet& e) {
        return prompts.get(Stage::EV).render("Fact: " + f.text + "\nEvidence: " + e.text);
    }
    std::string fe_prompt(const AtomicFact& f, const EvidenceSnippet& e) {
        return prompts.get(Stage::FE).render("Fact: " + f.text + "\nEvidence: " + e.text);
    }
};

}  // namespace

TEST_CASE("parse_verdict maps the two states") {
    CHECK(parse_verdict("State: 1").state == Verdict::NoConflict);
    CHECK(parse_verdict("2").state == Verdict::Conflict);
    auto v = parse_verdict("STATE: 2 - the location is wrong");
    CHECK(v.state == Verdict::Conflict);
    REQUIRE(v.rationale.has_value());
    CHECK(*v.rationale == "the location is wrong");
    // digits inside numbers do not count
    CHECK(parse_verdict("The year 1889 was mentioned but State: 2 fits").state == Verdict::Conflict);
}

TEST_CASE("unmappable verifier output defaults to state 1 and is logged") {
    std::vector<std::string> warnings;
    auto v = parse_verdict("no conflicts were found by me", &warnings);
    CHECK(v.state == Verdict::NoConflict);
    CHECK(warnings.size() == 1);
}

TEST_CASE("verify_evidence maps agreement to state 1") {
    VerifyRig rig;
    AtomicFact f = fact_at(0, 0, "The mountain is in Washington.");
    EvidenceSnippet e = ev("The mountain is in Washington state, USA.");
    rig.fx->add_generate(rig.ev_prompt(f, e), "State: 1");
    auto verifier = rig.make();
    CHECK(verifier.verify_evidence(f, e).state == Verdict::NoConflict);
}

TEST_CASE("verify_evidence maps contradiction to state 2 with rationale") {
    VerifyRig rig;
    AtomicFact f = fact_at(0, 0, "Mount Rainier is located in Oregon state.");
    EvidenceSnippet e = ev("Mount Rainier is located in Washington state.");
    rig.fx->add_generate(rig.ev_prompt(f, e), "STATE: 2 - the evidence says Washington, not Oregon.");
    auto verifier = rig.make();
    VerdictState v = verifier.verify_evidence(f, e);
    CHECK(v.state == Verdict::Conflict);
    REQUIRE(v.rationale.has_value());
    CHECK(v.rationale->find("Washington") != std::string::npos);
}

TEST_CASE("mock verifier without a fixture never flags a conflict") {
    VerifyRig rig;  // empty fixture set
    auto verifier = rig.make();
    for (const std::string& t : {"Paris is in France.", "Anything at all.", "x"}) {
        AtomicFact f = fact_at(0, 0, t);
        CHECK(verifier.verify_evidence(f, ev(t)).state == Verdict::NoConflict);
    }
    CHECK_THROWS_AS(rig.make().verify_evidence(fact_at(0, 0, ""), ev("e")), PreconditionError);
}

TEST_CASE("edit_fact extracts the revision after the delimiter") {
    VerifyRig rig;
    AtomicFact f = fact_at(0, 1, "Mount Rainier is located in Oregon state, USA.");
    EvidenceSnippet e = ev("Mount Rainier is located in Washington state, USA, southeast of Seattle.");
    rig.fx->add_generate(rig.fe_prompt(f, e),
                         "The evidence names Washington as the state.\n"
                         "Revised: Mount Rainier is located in Washington state, USA.");
    auto verifier = rig.make();
    VerdictState conflict{Verdict::Conflict, std::nullopt};
    CHECK(verifier.edit_fact(f, e, conflict) == "Mount Rainier is located in Washington state, USA.");
}

TEST_CASE("edit_fact on a NoConflict pair is a precondition error") {
    VerifyRig rig;
    auto verifier = rig.make();
    VerdictState ok{Verdict::NoConflict, std::nullopt};
    CHECK_THROWS_AS(verifier.edit_fact(fact_at(0, 0, "f"), ev("e"), ok), PreconditionError);
}

TEST_CASE("a completion without the delimiter is an edit error") {
    VerifyRig rig;
    AtomicFact f = fact_at(0, 0, "Some wrong fact.");
    EvidenceSnippet e = ev("The correct statement.");
    rig.fx->add_generate(rig.fe_prompt(f, e), "I think the fact should change but here is no marker.");
    auto verifier = rig.make();
    VerdictState conflict{Verdict::Conflict, std::nullopt};
    CHECK_THROWS_AS(verifier.edit_fact(f, e, conflict), EditError);
}

// ---------------------------------------------------------------------------
// apply_edits
// ---------------------------------------------------------------------------

namespace {

EditRecord edit_record(int m, int k, const std::string& original, const std::string& revised) {
    EditRecord e;
    e.fact_key = {m, k};
    e.original = original;
    e.revised = revised;
    e.verdict = {Verdict::Conflict, std::nullopt};
    e.evidence_used = ev("evidence", m, k);
    return e;
}

}  // namespace

TEST_CASE("zero edits leave everything byte-identical") {
    std::vector<SentenceUnit> sentences{unit(0, "Alpha beta."), unit(1, "Gamma delta.")};
    std::vector<AtomicFact> facts{fact_at(0, 0, "Alpha beta."), fact_at(1, 0, "Gamma delta.")};
    LongFormAnswer a;
    a.question = "q";
    a.answer_text = "Alpha beta. Gamma delta.";
    auto result = apply_edits(sentences, facts, {}, a);
    CHECK(result.applied == 0);
    CHECK_FALSE(result.answer.edited);
    CHECK(result.answer.answer_text == a.answer_text);
    REQUIRE(result.sentences.size() == 2);
    CHECK(result.sentences[0].text == "Alpha beta.");
}

TEST_CASE("the changed core is substituted inside the parent sentence") {
    std::vector<SentenceUnit> sentences{
        unit(0, "Mount Rainier is an active stratovolcano located in Oregon state, USA."),
        unit(1, "Mount Rainier is considered dangerous.")};
    std::vector<AtomicFact> facts{fact_at(0, 0, "Mount Rainier is an active stratovolcano."),
                                  fact_at(0, 1, "Mount Rainier is located in Oregon state, USA."),
                                  fact_at(1, 0, "Mount Rainier is considered dangerous.")};
    LongFormAnswer a;
    a.question = "q";
    a.answer_text = "Mount Rainier is an active stratovolcano located in Oregon state, USA. Mount Rainier "
                    "is considered dangerous.";
    auto edits = std::vector<EditRecord>{edit_record(0, 1, "Mount Rainier is located in Oregon state, USA.",
                                                     "Mount Rainier is located in Washington state, USA.")};
    auto result = apply_edits(sentences, facts, edits, a);
    CHECK(result.applied == 1);
    CHECK(result.answer.edited);
    CHECK(result.sentences[0].text ==
          "Mount Rainier is an active stratovolcano located in Washington state, USA.");
    CHECK(result.answer.answer_text.find("Washington") != std::string::npos);
    CHECK(result.answer.answer_text.find("Oregon") == std::string::npos);
    // untouched sentence is byte-stable
    CHECK(result.sentences[1].text == "Mount Rainier is considered dangerous.");
}

TEST_CASE("a verbatim fact occurrence is replaced directly") {
    std::vector<SentenceUnit> sentences{unit(0, "The tower was finished in 1887 for the fair.")};
    std::vector<AtomicFact> facts{fact_at(0, 0, "The tower was finished in 1887")};
    LongFormAnswer a;
    a.question = "q";
    a.answer_text = sentences[0].text;
    auto edits =
        std::vector<EditRecord>{edit_record(0, 0, "The tower was finished in 1887", "The tower was finished in 1889")};
    auto result = apply_edits(sentences, facts, edits, a);
    CHECK(result.sentences[0].text == "The tower was finished in 1889 for the fair.");
}

TEST_CASE("a weakly anchored edit replaces the whole sentence") {
    std::vector<SentenceUnit> sentences{unit(0, "Totally different phrasing lives here.")};
    std::vector<AtomicFact> facts{fact_at(0, 0, "The fact reads unlike the sentence entirely")};
    LongFormAnswer a;
    a.question = "q";
    a.answer_text = sentences[0].text;
    auto edits = std::vector<EditRecord>{
        edit_record(0, 0, "The fact reads unlike the sentence entirely", "A corrected statement.")};
    auto result = apply_edits(sentences, facts, edits, a);
    CHECK(result.sentences[0].text == "A corrected statement.");
    CHECK(result.sentences[0].subject_surface == "A");  // subject recomputed to keep the invariant
}

TEST_CASE("two edits in different sentences both apply in order") {
    std::vector<SentenceUnit> sentences{unit(0, "The river is 100 km long."),
                                        unit(1, "The bridge opened in 1930.")};
    std::vector<AtomicFact> facts{fact_at(0, 0, "The river is 100 km long."),
                                  fact_at(1, 0, "The bridge opened in 1930.")};
    LongFormAnswer a;
    a.question = "q";
    a.answer_text = "The river is 100 km long. The bridge opened in 1930.";
    std::vector<EditRecord> edits{
        edit_record(0, 0, "The river is 100 km long.", "The river is 120 km long."),
        edit_record(1, 0, "The bridge opened in 1930.", "The bridge opened in 1932.")};
    auto result = apply_edits(sentences, facts, edits, a);
    CHECK(result.applied == 2);
    CHECK(result.sentences[0].text == "The river is 120 km long.");
    CHECK(result.sentences[1].text == "The bridge opened in 1932.");
    CHECK(result.answer.answer_text == "The river is 120 km long. The bridge opened in 1932.");
}

TEST_CASE("no-op and NoConflict edit records are skipped") {
    std::vector<SentenceUnit> sentences{unit(0, "Steady sentence.")};
    std::vector<AtomicFact> facts{fact_at(0, 0, "Steady sentence.")};
    LongFormAnswer a;
    a.question = "q";
    a.answer_text = "Steady sentence.";
    EditRecord same = edit_record(0, 0, "Steady sentence.", "Steady sentence.");
    EditRecord no_conflict = edit_record(0, 0, "Steady sentence.", "Changed sentence.");
    no_conflict.verdict.state = Verdict::NoConflict;
    auto result = apply_edits(sentences, facts, {same, no_conflict}, a);
    CHECK(result.applied == 0);
    CHECK(result.answer.answer_text == "Steady sentence.");
}

TEST_CASE("an edit for an unknown fact key is a precondition error") {
    std::vector<SentenceUnit> sentences{unit(0, "Text.")};
    std::vector<AtomicFact> facts{fact_at(0, 0, "Text.")};
    LongFormAnswer a;
    a.question = "q";
    a.answer_text = "Text.";
    auto edits = std::vector<EditRecord>{edit_record(3, 7, "x", "y")};
    CHECK_THROWS_AS(apply_edits(sentences, facts, edits, a), PreconditionError);
}
