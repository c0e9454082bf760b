#pragma once
// Evidence aggregation: group per-fact snippets under the parent sentence,
// drop duplicates (equality after normalization, first occurrence wins), and
// assemble the attribution report.

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fides/core.hpp"
#include "fides/errors.hpp"
#include "fides/text.hpp"

namespace fides {

// Deduplicates a sentence's snippets under normalize_text, keeping the first
// occurrence in (fact_index, rerank order); output ordered by fact_index then
// score descending. Duplicate text from different URLs keeps the first URL.
inline std::vector<EvidenceSnippet> aggregate_evidence(const SentenceUnit& sentence,
                                                       const std::vector<EvidenceSnippet>& snippets) {
    for (const auto& s : snippets)
        if (s.fact_key.sentence_index != sentence.index)
            throw ContractError("aggregate_evidence: snippet for fact (" +
                                std::to_string(s.fact_key.sentence_index) + "," +
                                std::to_string(s.fact_key.fact_index) + ") does not belong to sentence " +
                                std::to_string(sentence.index));
    std::vector<size_t> order(snippets.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (snippets[a].fact_key.fact_index != snippets[b].fact_key.fact_index)
            return snippets[a].fact_key.fact_index < snippets[b].fact_key.fact_index;
        return snippets[a].rerank_score > snippets[b].rerank_score;
    });
    std::vector<EvidenceSnippet> out;
    std::unordered_set<std::string> seen;
    for (size_t idx : order) {
        std::string norm = normalize_text(snippets[idx].text);
        if (seen.insert(std::move(norm)).second) out.push_back(snippets[idx]);
    }
    return out;
}

// Builds the report: one entry per sentence in index order, evidence
// aggregated over the sentence's facts. Sentences are expected to carry
// post-edit text. A validation failure here is a programming defect.
inline AttributionReport build_attribution_report(
    const std::vector<SentenceUnit>& sentences,
    const std::unordered_map<FactKey, std::vector<EvidenceSnippet>, FactKeyHash>& per_fact_evidence,
    const std::vector<EditRecord>& edits) {
    if (sentences.empty()) throw PreconditionError("build_attribution_report: sentences must be non-empty");
    (void)edits;  // edits already folded into the sentences; kept for audit by the caller

    AttributionReport report;
    report.entries.reserve(sentences.size());
    for (const auto& sentence : sentences) {
        std::vector<EvidenceSnippet> pooled;
        std::map<int, const std::vector<EvidenceSnippet>*> facts_in_order;
        for (const auto& [key, snippets] : per_fact_evidence)
            if (key.sentence_index == sentence.index) facts_in_order[key.fact_index] = &snippets;
        for (const auto& [fact_index, snippets] : facts_in_order)
            pooled.insert(pooled.end(), snippets->begin(), snippets->end());
        AttributionReport::Entry entry;
        entry.sentence = sentence;
        entry.evidence = aggregate_evidence(sentence, pooled);
        report.entries.push_back(std::move(entry));
    }
    ValidationResult check = validate_report(report, sentences);
    if (!check) throw ContractError("build_attribution_report produced an invalid report: " + check.violation);
    return report;
}

}  // namespace fides
