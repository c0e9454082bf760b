#pragma once
// Re-scoring of saved report JSONs: rebuilds the NLI matrix from the report's
// sentences and evidence and recomputes AR/AP/AF1 (post-edit side).

#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "fides/core.hpp"
#include "fides/errors.hpp"
#include "fides/metrics.hpp"

namespace fides {

struct ScoredReport {
    std::string question;
    MetricBundle recomputed;       // from the report's entries + evidence
    ReportMetrics stored;          // metrics block as saved in the file
    size_t n_entries = 0;
};

inline ScoredReport score_report(const json& report, double tau, ApVariant variant, CachingNli& nli) {
    ScoredReport out;
    out.question = report.value("question", std::string());
    std::vector<std::string> sentences;
    std::vector<std::string> evidence;
    std::unordered_set<std::string> seen;
    if (!report.contains("entries") || !report.at("entries").is_array())
        throw SchemaError("report has no entries array");
    for (const auto& e : report.at("entries")) {
        sentences.push_back(e.at("sentence").get<std::string>());
        for (const auto& s : e.at("evidence")) {
            std::string t = s.at("text").get<std::string>();
            if (seen.insert(normalize_text(t)).second) evidence.push_back(std::move(t));
        }
    }
    if (sentences.empty()) throw SchemaError("report has no sentences");
    out.n_entries = sentences.size();
    NliMatrix mat = build_nli_matrix(sentences, evidence, tau, nli);
    out.recomputed = compute_metrics(mat, variant);
    if (report.contains("metrics")) {
        const json& m = report.at("metrics");
        out.stored.ar_before = m.value("ar_before", 0.0);
        out.stored.ar_after = m.value("ar_after", 0.0);
        out.stored.ap_before = m.value("ap_before", 0.0);
        out.stored.ap_after = m.value("ap_after", 0.0);
        out.stored.af1_after = m.value("af1_after", 0.0);
        out.stored.auto_ais = m.value("auto_ais", 0);
    }
    return out;
}

}  // namespace fides
