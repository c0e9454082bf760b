#pragma once
// Attribution metrics: sentence-level recall AR (average over sentences of
// the best entailment from any snippet), the snippet-precision AP (share of
// snippets that entail at least one sentence), their harmonic mean AF1, and
// AutoAIS binary accuracy. NLI pair results are cached per run keyed by
// normalized (premise, hypothesis).

#include <algorithm>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "fides/backends.hpp"
#include "fides/core.hpp"
#include "fides/errors.hpp"
#include "fides/text.hpp"

namespace fides {

// How a snippet counts toward AP. The printed definition is ambiguous; the
// default reads it as snippet-count precision where a snippet is valid when
// it entails at least one sentence. The alternatives are kept for audit.
enum class ApVariant {
    CountAny,   // |{r : r entails >=1 sentence}| / |A|
    TokenAny,   // token mass of valid snippets / token mass of A
    CountAll,   // |{r : r entails every sentence}| / |A|
};

inline const char* to_string(ApVariant v) {
    switch (v) {
        case ApVariant::CountAny: return "count_any";
        case ApVariant::TokenAny: return "token_any";
        case ApVariant::CountAll: return "count_all";
    }
    return "?";
}

inline ApVariant ap_variant_from_string(const std::string& s) {
    if (s == "count_any") return ApVariant::CountAny;
    if (s == "token_any") return ApVariant::TokenAny;
    if (s == "count_all") return ApVariant::CountAll;
    throw ConfigError("unknown ap_variant: " + s + " (expected count_any, token_any or count_all)");
}

struct NliMatrix {
    std::vector<std::string> evidence;   // rows r_1..r_n
    std::vector<std::string> sentences;  // columns y_1..y_m
    std::vector<std::vector<double>> probs;  // probs[j][i] = NLI(r_j, y_i)
    double tau = 0.5;

    size_t rows() const { return evidence.size(); }
    size_t cols() const { return sentences.size(); }
};

struct MetricBundle {
    double ar = 0.0;
    double ap = 0.0;
    double af1 = 0.0;
    size_t n_evidence = 0;
    size_t n_sentences = 0;
};

// Thread-safe memo over an NLI backend; one backend call per distinct
// normalized (premise, hypothesis) pair.
class CachingNli {
public:
    explicit CachingNli(std::shared_ptr<NliBackend> backend) : backend_(std::move(backend)) {}

    double entail(const std::string& premise, const std::string& hypothesis) {
        std::string key = normalize_text(premise) + '\x1f' + normalize_text(hypothesis);
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        double p = backend_->entail(premise, hypothesis);
        if (p < 0.0 || p > 1.0)
            throw BackendError(BackendErrorKind::Protocol, "nli probability outside [0,1]");
        std::lock_guard<std::mutex> lock(mu_);
        cache_.emplace(std::move(key), p);
        return p;
    }

    size_t cache_size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return cache_.size();
    }

private:
    std::shared_ptr<NliBackend> backend_;
    mutable std::unordered_map<std::string, double> cache_;
    mutable std::mutex mu_;
};

inline NliMatrix build_nli_matrix(const std::vector<std::string>& sentences,
                                  const std::vector<std::string>& evidence, double tau, CachingNli& nli) {
    if (sentences.empty()) throw PreconditionError("build_nli_matrix: sentences must be non-empty");
    if (tau <= 0.0 || tau >= 1.0) throw PreconditionError("build_nli_matrix: tau must be in (0,1)");
    NliMatrix mat;
    mat.sentences = sentences;
    mat.evidence = evidence;
    mat.tau = tau;
    mat.probs.resize(evidence.size());
    for (size_t j = 0; j < evidence.size(); ++j) {
        mat.probs[j].resize(sentences.size());
        for (size_t i = 0; i < sentences.size(); ++i)
            mat.probs[j][i] = nli.entail(evidence[j], sentences[i]);
    }
    return mat;
}

// Recall: average over sentences of the best entailment from any snippet;
// the max over an empty evidence set is 0.
inline double attr_auto_r(const NliMatrix& mat) {
    if (mat.cols() == 0) throw PreconditionError("attr_auto_r: matrix has no sentences");
    double sum = 0.0;
    for (size_t i = 0; i < mat.cols(); ++i) {
        double best = 0.0;
        for (size_t j = 0; j < mat.rows(); ++j) best = std::max(best, mat.probs[j][i]);
        sum += best;
    }
    return sum / static_cast<double>(mat.cols());
}

// Precision: a snippet is valid when it entails >= 1 sentence at tau
// (count_all: every sentence); 0 when the evidence set is empty.
inline double attr_auto_p(const NliMatrix& mat, ApVariant variant = ApVariant::CountAny) {
    if (mat.rows() == 0) return 0.0;
    auto valid = [&](size_t j) {
        if (variant == ApVariant::CountAll) {
            for (size_t i = 0; i < mat.cols(); ++i)
                if (mat.probs[j][i] < mat.tau) return false;
            return mat.cols() > 0;
        }
        for (size_t i = 0; i < mat.cols(); ++i)
            if (mat.probs[j][i] >= mat.tau) return true;
        return false;
    };
    if (variant == ApVariant::TokenAny) {
        double valid_tokens = 0.0, total_tokens = 0.0;
        for (size_t j = 0; j < mat.rows(); ++j) {
            double t = static_cast<double>(text::token_count(mat.evidence[j]));
            total_tokens += t;
            if (valid(j)) valid_tokens += t;
        }
        return total_tokens == 0.0 ? 0.0 : valid_tokens / total_tokens;
    }
    size_t n_valid = 0;
    for (size_t j = 0; j < mat.rows(); ++j)
        if (valid(j)) ++n_valid;
    return static_cast<double>(n_valid) / static_cast<double>(mat.rows());
}

// Harmonic mean of precision and recall; 0 when both are 0.
inline double attr_f1(double ar, double ap) {
    if (ar < 0.0 || ar > 1.0 || ap < 0.0 || ap > 1.0)
        throw ContractError("attr_f1: inputs must be in [0,1]");
    if (ar + ap == 0.0) return 0.0;
    return 2.0 * ap * ar / (ap + ar);
}

// Fraction of binary support verdicts equal to 1.
inline double auto_ais_accuracy(const std::vector<int>& judgments) {
    if (judgments.empty()) throw ContractError("auto_ais_accuracy: judgments must be non-empty");
    size_t supported = 0;
    for (int v : judgments) {
        if (v != 0 && v != 1) throw ContractError("auto_ais_accuracy: verdicts must be 0 or 1");
        if (v == 1) ++supported;
    }
    return static_cast<double>(supported) / static_cast<double>(judgments.size());
}

inline MetricBundle compute_metrics(const NliMatrix& mat, ApVariant variant = ApVariant::CountAny) {
    MetricBundle b;
    b.ar = attr_auto_r(mat);
    b.ap = attr_auto_p(mat, variant);
    b.af1 = attr_f1(b.ar, b.ap);
    b.n_evidence = mat.rows();
    b.n_sentences = mat.cols();
    return b;
}

}  // namespace fides
