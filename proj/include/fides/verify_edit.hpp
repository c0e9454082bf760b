#pragma once
// Evidence verification (two-state conflict detection) and factual editing
// (few-shot CoT revision), plus the deterministic fold that applies edits
// back onto the segmented answer.

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fides/backends.hpp"
#include "fides/core.hpp"
#include "fides/errors.hpp"
#include "fides/prompts.hpp"
#include "fides/text.hpp"

namespace fides {

struct VerifyEditOptions {
    GenParams ev;
    GenParams fe;
};

// Maps verifier output onto state 1 / state 2. Looks for the first
// standalone '1' or '2' token; everything after it becomes the rationale.
// Unmappable output is state 1 (never edit on parser failure).
inline VerdictState parse_verdict(const std::string& raw, std::vector<std::string>* warnings = nullptr) {
    for (size_t i = 0; i < raw.size(); ++i) {
        char c = raw[i];
        if (c != '1' && c != '2') continue;
        bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(raw[i - 1]));
        bool right_ok = i + 1 >= raw.size() || !std::isalnum(static_cast<unsigned char>(raw[i + 1]));
        if (!left_ok || !right_ok) continue;
        VerdictState v;
        v.state = c == '2' ? Verdict::Conflict : Verdict::NoConflict;
        std::string rest = text::trim(raw.substr(i + 1));
        // strip ASCII separators (":", "-", ".") before the rationale text
        while (!rest.empty() && static_cast<unsigned char>(rest[0]) < 0x80 &&
               !std::isalnum(static_cast<unsigned char>(rest[0])))
            rest.erase(0, 1);
        if (!rest.empty()) v.rationale = rest;
        return v;
    }
    if (warnings) warnings->push_back("unmappable verifier output, defaulting to state 1: " + text::trim(raw));
    return VerdictState{Verdict::NoConflict, std::nullopt};
}

class VerifierEditor {
public:
    VerifierEditor(std::shared_ptr<LlmBackend> ev_llm, std::shared_ptr<LlmBackend> fe_llm,
                   const PromptLibrary& prompts, VerifyEditOptions options = {})
        : ev_llm_(std::move(ev_llm)), fe_llm_(std::move(fe_llm)), prompts_(prompts), options_(options) {}

    std::vector<std::string> take_warnings() { return std::move(warnings_); }

    VerdictState verify_evidence(const AtomicFact& fact, const EvidenceSnippet& evidence) {
        if (text::trim(fact.text).empty() || text::trim(evidence.text).empty())
            throw PreconditionError("verify_evidence: fact and evidence must be non-empty");
        std::string input = "Fact: " + fact.text + "\nEvidence: " + evidence.text;
        std::string raw;
        try {
            raw = ev_llm_->generate(prompts_.get(Stage::EV).render(input), options_.ev.max_tokens,
                                    options_.ev.temperature);
        } catch (const BackendError& e) {
            // Mock verifier flags a conflict only when a fixture says so;
            // anything else stays state 1. Transport errors still propagate.
            if (e.kind != BackendErrorKind::MissingFixture) throw;
            return VerdictState{Verdict::NoConflict, std::nullopt};
        }
        return parse_verdict(raw, &warnings_);
    }

    // Revises a conflicting fact from its evidence. The completion must end
    // with a "Revised:" line; a missing delimiter is an edit error and the
    // fact stays unedited.
    std::string edit_fact(const AtomicFact& fact, const EvidenceSnippet& evidence, const VerdictState& verdict) {
        if (verdict.state != Verdict::Conflict)
            throw PreconditionError("edit_fact: verdict must be Conflict");
        if (text::trim(fact.text).empty() || text::trim(evidence.text).empty())
            throw PreconditionError("edit_fact: fact and evidence must be non-empty");
        std::string input = "Fact: " + fact.text + "\nEvidence: " + evidence.text;
        std::string raw = fe_llm_->generate(prompts_.get(Stage::FE).render(input), options_.fe.max_tokens,
                                            options_.fe.temperature);
        size_t pos = raw.rfind("Revised:");
        if (pos == std::string::npos) throw EditError("FE output has no Revised: delimiter");
        std::string revised = raw.substr(pos + std::string("Revised:").size());
        size_t eol = revised.find('\n');
        if (eol != std::string::npos) revised = revised.substr(0, eol);
        revised = text::trim(revised);
        if (revised.empty()) throw EditError("FE output has an empty revision");
        return revised;
    }

private:
    std::shared_ptr<LlmBackend> ev_llm_;
    std::shared_ptr<LlmBackend> fe_llm_;
    const PromptLibrary& prompts_;
    VerifyEditOptions options_;
    std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// apply_edits: fold EditRecords back into the sentence list. Per edit, the
// parent sentence is rewritten by substituting the fact's conflicting span:
//   1. the original fact text occurs verbatim -> replace it with the revision;
//   2. the fact anchors in the sentence (longest common token run >= 5) and
//      the changed core of original->revised occurs -> replace just the core;
//   3. otherwise the revised fact text replaces the whole sentence.
// Unapplicable edits (no-op revisions, NoConflict verdicts) are skipped.
// ---------------------------------------------------------------------------

struct ApplyEditsResult {
    std::vector<SentenceUnit> sentences;
    LongFormAnswer answer;
    int applied = 0;
};

inline ApplyEditsResult apply_edits(const std::vector<SentenceUnit>& sentences,
                                    const std::vector<AtomicFact>& facts, const std::vector<EditRecord>& edits,
                                    const LongFormAnswer& original,
                                    std::vector<std::string>* warnings = nullptr) {
    std::unordered_map<FactKey, const AtomicFact*, FactKeyHash> by_key;
    for (const auto& f : facts) by_key[f.key()] = &f;
    for (const auto& e : edits)
        if (!by_key.count(e.fact_key))
            throw PreconditionError("apply_edits: edit references unknown fact key (" +
                                    std::to_string(e.fact_key.sentence_index) + "," +
                                    std::to_string(e.fact_key.fact_index) + ")");

    std::vector<SentenceUnit> out = sentences;
    int applied = 0;
    for (const auto& e : edits) {
        if (e.verdict.state != Verdict::Conflict || e.revised == e.original || text::trim(e.revised).empty())
            continue;
        size_t m = static_cast<size_t>(e.fact_key.sentence_index);
        if (m >= out.size()) throw PreconditionError("apply_edits: edit sentence index out of range");
        SentenceUnit& unit = out[m];
        std::string& sentence = unit.text;

        bool done = false;
        size_t pos = sentence.find(e.original);
        if (pos != std::string::npos) {
            sentence = sentence.substr(0, pos) + e.revised + sentence.substr(pos + e.original.size());
            done = true;
        } else {
            auto anchor = text::longest_common_token_run(e.original, sentence);
            if (anchor.length >= 5) {
                text::DiffCore core = text::diff_core(e.original, e.revised);
                size_t core_pos = core.original.empty() ? std::string::npos : sentence.find(core.original);
                if (core.changed && core_pos != std::string::npos) {
                    sentence = sentence.substr(0, core_pos) + core.revised +
                               sentence.substr(core_pos + core.original.size());
                    done = true;
                }
            }
            if (!done) {
                sentence = e.revised;
                done = true;
            }
        }
        if (done) {
            ++applied;
            if (sentence.find(unit.subject_surface) == std::string::npos)
                unit.subject_surface = text::first_word_chunk(sentence);
        } else if (warnings) {
            warnings->push_back("edit for fact (" + std::to_string(e.fact_key.sentence_index) + "," +
                                std::to_string(e.fact_key.fact_index) + ") could not be applied");
        }
    }

    ApplyEditsResult result;
    result.sentences = std::move(out);
    result.applied = applied;
    result.answer = original;
    if (applied > 0) {
        std::string joined;
        for (const auto& u : result.sentences) {
            if (!joined.empty()) joined.push_back(' ');
            joined += u.text;
        }
        result.answer.answer_text = joined;
        result.answer.edited = true;
    }
    return result;
}

}  // namespace fides
