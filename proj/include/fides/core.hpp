#pragma once
// Domain types shared by the whole pipeline, report validation, and the
// report JSON schema.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fides/errors.hpp"
#include "fides/text.hpp"

namespace fides {

using json = nlohmann::ordered_json;

using text::normalize_text;

// A long form answer together with its originating question.
struct LongFormAnswer {
    std::string question;
    std::string answer_text;
    std::string generator_id;
    bool edited = false;
};

// One segmented sentence with the explicit subject produced during
// segmentation (equal to the original subject when no rewrite was needed).
struct SentenceUnit {
    int index = 0;
    std::string text;
    std::string subject_surface;
};

// Identifies an atomic fact: (parent sentence index, fact index within it).
struct FactKey {
    int sentence_index = 0;
    int fact_index = 0;

    friend bool operator==(const FactKey&, const FactKey&) = default;
    friend auto operator<=>(const FactKey&, const FactKey&) = default;
};

struct FactKeyHash {
    size_t operator()(const FactKey& k) const {
        return std::hash<long long>()((static_cast<long long>(k.sentence_index) << 32) ^
                                      static_cast<unsigned>(k.fact_index));
    }
};

// One atomic fact decomposed from a sentence; doubles as a search query.
struct AtomicFact {
    int sentence_index = 0;
    int fact_index = 0;
    std::string text;
    std::optional<std::string> revised_text;

    FactKey key() const { return {sentence_index, fact_index}; }
    const std::string& effective_text() const { return revised_text ? *revised_text : text; }
};

// One reranked evidence chunk for a fact.
struct EvidenceSnippet {
    std::string text;
    std::string source_url;
    int page_rank = 0;
    double rerank_score = 0.0;
    FactKey fact_key;
};

// Ordered [sentence, evidence] pairs; the attribution report.
struct AttributionReport {
    struct Entry {
        SentenceUnit sentence;
        std::vector<EvidenceSnippet> evidence;
    };
    std::vector<Entry> entries;
};

// Entailment probability for one (premise, hypothesis) pair and its
// binarization at threshold tau.
struct NliJudgment {
    std::string premise;
    std::string hypothesis;
    double entail_prob = 0.0;
    bool entails = false;

    static NliJudgment make(std::string premise, std::string hypothesis, double prob, double tau) {
        if (prob < 0.0 || prob > 1.0) throw ContractError("entail_prob outside [0,1]");
        NliJudgment j;
        j.premise = std::move(premise);
        j.hypothesis = std::move(hypothesis);
        j.entail_prob = prob;
        j.entails = prob >= tau;
        return j;
    }
};

// Evidence verifier outcome: state 1 = no conflict, state 2 = conflict.
enum class Verdict { NoConflict = 1, Conflict = 2 };

struct VerdictState {
    Verdict state = Verdict::NoConflict;
    std::optional<std::string> rationale;
};

inline const char* to_string(Verdict v) {
    return v == Verdict::NoConflict ? "no_conflict" : "conflict";
}

// ---------------------------------------------------------------------------
// Report validation
// ---------------------------------------------------------------------------

struct ValidationResult {
    bool ok = true;
    std::string violation;  // first violated invariant when !ok

    static ValidationResult pass() { return {}; }
    static ValidationResult fail(std::string why) { return {false, std::move(why)}; }
    explicit operator bool() const { return ok; }
};

// Checks that the report covers exactly the given sentences in order and that
// every type invariant holds. Returns the first violation found.
inline ValidationResult validate_report(const AttributionReport& r, const std::vector<SentenceUnit>& sentences) {
    if (r.entries.size() != sentences.size())
        return ValidationResult::fail("entry count " + std::to_string(r.entries.size()) +
                                      " does not match sentence count " + std::to_string(sentences.size()));
    for (size_t i = 0; i < r.entries.size(); ++i) {
        const auto& e = r.entries[i];
        if (e.sentence.index != static_cast<int>(i))
            return ValidationResult::fail("entry " + std::to_string(i) + " is out of order (sentence index " +
                                          std::to_string(e.sentence.index) + ")");
        if (e.sentence.text != sentences[i].text)
            return ValidationResult::fail("entry " + std::to_string(i) + " does not match sentence " +
                                          std::to_string(i));
        if (e.sentence.text.empty())
            return ValidationResult::fail("entry " + std::to_string(i) + " has an empty sentence");
        if (e.sentence.text.find(e.sentence.subject_surface) == std::string::npos)
            return ValidationResult::fail("entry " + std::to_string(i) +
                                          " subject is not a substring of the sentence");
        std::vector<std::string> seen;
        for (const auto& s : e.evidence) {
            if (s.text.empty())
                return ValidationResult::fail("entry " + std::to_string(i) + " has an empty evidence snippet");
            std::string norm = normalize_text(s.text);
            for (const auto& prior : seen) {
                if (prior == norm)
                    return ValidationResult::fail("entry " + std::to_string(i) +
                                                  " has duplicate evidence under normalization");
            }
            seen.push_back(std::move(norm));
        }
    }
    return ValidationResult::pass();
}

// ---------------------------------------------------------------------------
// Report JSON schema. Field names are a documented contract:
// {question, answer_before, answer_after,
//  entries:[{sentence_index, sentence, subject,
//            evidence:[{text, url, page_rank, rerank_score, fact_key}]}],
//  metrics:{ar_before, ar_after, ap_before, ap_after, af1_after, auto_ais}}
// plus an `edits` audit array.
// ---------------------------------------------------------------------------

struct ReportMetrics {
    double ar_before = 0.0;
    double ar_after = 0.0;
    double ap_before = 0.0;
    double ap_after = 0.0;
    double af1_after = 0.0;
    int auto_ais = 0;  // binary verdict for this record
};

struct EditRecord {
    FactKey fact_key;
    std::string original;
    std::string revised;
    EvidenceSnippet evidence_used;
    VerdictState verdict;
};

inline json snippet_to_json(const EvidenceSnippet& s) {
    return json{{"text", s.text},
                {"url", s.source_url},
                {"page_rank", s.page_rank},
                {"rerank_score", s.rerank_score},
                {"fact_key", json::array({s.fact_key.sentence_index, s.fact_key.fact_index})}};
}

inline EvidenceSnippet snippet_from_json(const json& j) {
    EvidenceSnippet s;
    s.text = j.at("text").get<std::string>();
    s.source_url = j.at("url").get<std::string>();
    s.page_rank = j.at("page_rank").get<int>();
    s.rerank_score = j.at("rerank_score").get<double>();
    s.fact_key = {j.at("fact_key").at(0).get<int>(), j.at("fact_key").at(1).get<int>()};
    return s;
}

inline json edit_to_json(const EditRecord& e) {
    json j{{"fact_key", json::array({e.fact_key.sentence_index, e.fact_key.fact_index})},
           {"original", e.original},
           {"revised", e.revised},
           {"verdict", to_string(e.verdict.state)},
           {"evidence_url", e.evidence_used.source_url}};
    if (e.verdict.rationale) j["rationale"] = *e.verdict.rationale;
    return j;
}

inline json report_to_json(const std::string& question, const std::string& answer_before,
                           const std::string& answer_after, const AttributionReport& report,
                           const ReportMetrics& metrics, const std::vector<EditRecord>& edits) {
    json entries = json::array();
    for (const auto& e : report.entries) {
        json ev = json::array();
        for (const auto& s : e.evidence) ev.push_back(snippet_to_json(s));
        entries.push_back(json{{"sentence_index", e.sentence.index},
                               {"sentence", e.sentence.text},
                               {"subject", e.sentence.subject_surface},
                               {"evidence", std::move(ev)}});
    }
    json edits_json = json::array();
    for (const auto& e : edits) edits_json.push_back(edit_to_json(e));
    return json{{"question", question},
                {"answer_before", answer_before},
                {"answer_after", answer_after},
                {"entries", std::move(entries)},
                {"metrics",
                 json{{"ar_before", metrics.ar_before},
                      {"ar_after", metrics.ar_after},
                      {"ap_before", metrics.ap_before},
                      {"ap_after", metrics.ap_after},
                      {"af1_after", metrics.af1_after},
                      {"auto_ais", metrics.auto_ais}}},
                {"edits", std::move(edits_json)}};
}

}  // namespace fides
