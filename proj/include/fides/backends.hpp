#pragma once
// Pluggable clients for the four external capabilities (LLM generation, web
// search, passage reranking, NLI entailment): abstract interfaces, fixture
// driven mocks for deterministic testing, and HTTP adapters with retry,
// rate limiting, and env-var credentials.
//
// Wire contracts (all POST, JSON bodies):
//   search   {query, count}                  -> {results:[{url,title,snippet}]}
//   generate {prompt, max_tokens, temperature} -> {text}
//   rerank   {query, passages:[...]}         -> {scores:[...]}
//   nli      {premise, hypothesis, input}    -> {entail_prob}
// where `input` carries the rendered "premise: ... hypothesis: ..." template.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fides/core.hpp"
#include "fides/errors.hpp"
#include "fides/text.hpp"

namespace fides {

// LLM decoding parameters, configurable per stage.
struct GenParams {
    int max_tokens = 512;
    double temperature = 0.0;
};

struct BackendConfig {
    std::string endpoint;
    std::string auth_env_var;   // name of the env var holding the credential
    double timeout_s = 30.0;
    int max_retries = 2;
    double rate_limit_rps = 5.0;

    void validate() const {
        if (timeout_s <= 0) throw ConfigError("backend timeout must be > 0");
        if (max_retries < 0) throw ConfigError("backend max_retries must be >= 0");
        if (rate_limit_rps <= 0) throw ConfigError("backend rate_limit must be > 0");
    }
};

struct SearchResult {
    std::string url;
    std::string title;
    std::string snippet;
    int rank = 0;
};

// ---------------------------------------------------------------------------
// Interfaces. Implementations must be safe for concurrent use.
// ---------------------------------------------------------------------------

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string generate(const std::string& prompt, int max_tokens, double temperature) = 0;
};

class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual std::vector<SearchResult> search(const std::string& query, int count) = 0;
};

class RerankBackend {
public:
    virtual ~RerankBackend() = default;
    virtual std::vector<double> rerank(const std::string& query, const std::vector<std::string>& passages) = 0;
};

class NliBackend {
public:
    virtual ~NliBackend() = default;
    // Entailment probability of premise -> hypothesis, in [0,1].
    virtual double entail(const std::string& premise, const std::string& hypothesis) = 0;
};

namespace detail {

inline void check_generate_args(const std::string& prompt, double temperature) {
    if (text::trim(prompt).empty()) throw PreconditionError("generate: prompt must be non-empty");
    if (temperature < 0) throw PreconditionError("generate: temperature must be >= 0");
}

inline void check_search_args(const std::string& query, int count) {
    if (text::trim(query).empty()) throw PreconditionError("search: query must be non-empty");
    if (count < 1) throw PreconditionError("search: count must be >= 1");
}

inline void check_rerank_args(const std::vector<std::string>& passages) {
    if (passages.empty()) throw PreconditionError("rerank: passages must be non-empty");
}

inline void check_nli_args(const std::string& premise, const std::string& hypothesis) {
    if (text::trim(premise).empty() || text::trim(hypothesis).empty())
        throw PreconditionError("nli: premise and hypothesis must be non-empty");
}

}  // namespace detail

// The TRUE-style input rendering used for remote NLI calls.
inline std::string render_nli_input(const std::string& premise, const std::string& hypothesis) {
    return "premise: " + premise + " hypothesis: " + hypothesis;
}

// ---------------------------------------------------------------------------
// Fixtures: JSONL, one object per line {kind, key, value}. Keys are stable:
//   generate -> fnv1a hash of the prompt
//   search   -> normalized query
//   rerank   -> normalized query
//   nli      -> fnv1a hash of normalize(premise) + '\x1f' + normalize(hypothesis)
// Later entries with the same key override earlier ones.
// ---------------------------------------------------------------------------

class FixtureSet {
public:
    static std::string generate_key(const std::string& prompt) { return text::stable_hash(prompt); }
    static std::string search_key(const std::string& query) { return normalize_text(query); }
    static std::string rerank_key(const std::string& query) { return normalize_text(query); }
    static std::string nli_key(const std::string& premise, const std::string& hypothesis) {
        return text::stable_hash(normalize_text(premise) + '\x1f' + normalize_text(hypothesis));
    }

    void add_generate(const std::string& prompt, const std::string& completion) {
        generate_[generate_key(prompt)] = completion;
    }
    void add_search(const std::string& query, std::vector<SearchResult> results) {
        for (size_t i = 0; i < results.size(); ++i) results[i].rank = static_cast<int>(i);
        search_[search_key(query)] = std::move(results);
    }
    void add_rerank(const std::string& query, std::vector<double> scores) {
        rerank_[rerank_key(query)] = std::move(scores);
    }
    void add_nli(const std::string& premise, const std::string& hypothesis, double prob) {
        if (prob < 0.0 || prob > 1.0) throw ConfigError("nli fixture entail_prob outside [0,1]");
        nli_[nli_key(premise, hypothesis)] = prob;
    }

    const std::string* find_generate(const std::string& prompt) const {
        auto it = generate_.find(generate_key(prompt));
        return it == generate_.end() ? nullptr : &it->second;
    }
    const std::vector<SearchResult>* find_search(const std::string& query) const {
        auto it = search_.find(search_key(query));
        return it == search_.end() ? nullptr : &it->second;
    }
    const std::vector<double>* find_rerank(const std::string& query) const {
        auto it = rerank_.find(rerank_key(query));
        return it == rerank_.end() ? nullptr : &it->second;
    }
    const double* find_nli(const std::string& premise, const std::string& hypothesis) const {
        auto it = nli_.find(nli_key(premise, hypothesis));
        return it == nli_.end() ? nullptr : &it->second;
    }

    void load_jsonl(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open fixture file: " + path);
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (text::trim(line).empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw ParseError(path + ": invalid JSON on line " + std::to_string(lineno) + ": " + e.what(),
                                 lineno);
            }
            ingest(j, path, lineno);
        }
    }

    void save_jsonl(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write fixture file: " + path);
        for (const auto& [key, value] : generate_)
            out << json{{"kind", "generate"}, {"key", key}, {"value", json{{"text", value}}}}.dump() << '\n';
        for (const auto& [key, results] : search_) {
            json arr = json::array();
            for (const auto& r : results)
                arr.push_back(json{{"url", r.url}, {"title", r.title}, {"snippet", r.snippet}});
            out << json{{"kind", "search"}, {"key", key}, {"value", json{{"results", std::move(arr)}}}}.dump()
                << '\n';
        }
        for (const auto& [key, scores] : rerank_)
            out << json{{"kind", "rerank"}, {"key", key}, {"value", json{{"scores", scores}}}}.dump() << '\n';
        for (const auto& [key, prob] : nli_)
            out << json{{"kind", "nli"}, {"key", key}, {"value", json{{"entail_prob", prob}}}}.dump() << '\n';
    }

    size_t size() const { return generate_.size() + search_.size() + rerank_.size() + nli_.size(); }

private:
    void ingest(const json& j, const std::string& path, size_t lineno) {
        std::string kind, key;
        try {
            kind = j.at("kind").get<std::string>();
            key = j.at("key").get<std::string>();
            const json& v = j.at("value");
            if (kind == "generate") {
                generate_[key] = v.at("text").get<std::string>();
            } else if (kind == "search") {
                std::vector<SearchResult> results;
                for (const auto& r : v.at("results")) {
                    SearchResult sr;
                    sr.url = r.at("url").get<std::string>();
                    sr.title = r.value("title", std::string());
                    sr.snippet = r.value("snippet", std::string());
                    sr.rank = static_cast<int>(results.size());
                    results.push_back(std::move(sr));
                }
                search_[key] = std::move(results);
            } else if (kind == "rerank") {
                rerank_[key] = v.at("scores").get<std::vector<double>>();
            } else if (kind == "nli") {
                double p = v.at("entail_prob").get<double>();
                if (p < 0.0 || p > 1.0)
                    throw SchemaError(path + ": nli entail_prob outside [0,1] on line " + std::to_string(lineno),
                                      lineno);
                nli_[key] = p;
            } else {
                throw SchemaError(path + ": unknown fixture kind '" + kind + "' on line " + std::to_string(lineno),
                                  lineno);
            }
        } catch (const json::exception& e) {
            throw SchemaError(path + ": fixture schema error on line " + std::to_string(lineno) + ": " + e.what(),
                              lineno);
        }
    }

    std::unordered_map<std::string, std::string> generate_;
    std::unordered_map<std::string, std::vector<SearchResult>> search_;
    std::unordered_map<std::string, std::vector<double>> rerank_;
    std::unordered_map<std::string, double> nli_;
};

// ---------------------------------------------------------------------------
// Mocks. Pure functions of (fixture set, input); repeated calls bit-identical.
// ---------------------------------------------------------------------------

class MockLlm : public LlmBackend {
public:
    explicit MockLlm(std::shared_ptr<const FixtureSet> fixtures) : fixtures_(std::move(fixtures)) {}

    std::string generate(const std::string& prompt, int, double temperature) override {
        detail::check_generate_args(prompt, temperature);
        if (const std::string* c = fixtures_->find_generate(prompt)) return *c;
        throw BackendError(BackendErrorKind::MissingFixture,
                           "no generate fixture for prompt hash " + FixtureSet::generate_key(prompt));
    }

private:
    std::shared_ptr<const FixtureSet> fixtures_;
};

class MockSearch : public SearchBackend {
public:
    explicit MockSearch(std::shared_ptr<const FixtureSet> fixtures) : fixtures_(std::move(fixtures)) {}

    std::vector<SearchResult> search(const std::string& query, int count) override {
        detail::check_search_args(query, count);
        const auto* results = fixtures_->find_search(query);
        if (!results) return {};  // no results is a normal outcome
        std::vector<SearchResult> out(results->begin(),
                                      results->begin() + std::min<size_t>(results->size(), static_cast<size_t>(count)));
        return out;
    }

private:
    std::shared_ptr<const FixtureSet> fixtures_;
};

// Scores by case-insensitive token overlap with the query; an explicit
// rerank fixture for the query overrides the rule.
class MockRerank : public RerankBackend {
public:
    explicit MockRerank(std::shared_ptr<const FixtureSet> fixtures) : fixtures_(std::move(fixtures)) {}

    std::vector<double> rerank(const std::string& query, const std::vector<std::string>& passages) override {
        detail::check_rerank_args(passages);
        if (const auto* scores = fixtures_->find_rerank(query)) {
            if (scores->size() != passages.size())
                throw BackendError(BackendErrorKind::Protocol,
                                   "rerank fixture has " + std::to_string(scores->size()) + " scores for " +
                                       std::to_string(passages.size()) + " passages");
            return *scores;
        }
        std::vector<double> out;
        out.reserve(passages.size());
        for (const auto& p : passages)
            out.push_back(static_cast<double>(text::token_overlap_count(query, p)));
        return out;
    }

private:
    std::shared_ptr<const FixtureSet> fixtures_;
};

// Fixture value when present; otherwise 1.0 iff the normalized premise
// contains the normalized hypothesis as a substring, else 0.0.
class MockNli : public NliBackend {
public:
    explicit MockNli(std::shared_ptr<const FixtureSet> fixtures) : fixtures_(std::move(fixtures)) {}

    double entail(const std::string& premise, const std::string& hypothesis) override {
        detail::check_nli_args(premise, hypothesis);
        if (const double* p = fixtures_->find_nli(premise, hypothesis)) return *p;
        std::string np = normalize_text(premise);
        std::string nh = normalize_text(hypothesis);
        return np.find(nh) != std::string::npos ? 1.0 : 0.0;
    }

private:
    std::shared_ptr<const FixtureSet> fixtures_;
};

// ---------------------------------------------------------------------------
// Rate limiter: serializes dispatch so at most rate_limit_rps requests start
// per second. Shared by all threads using one backend client.
// ---------------------------------------------------------------------------

class RateLimiter {
public:
    explicit RateLimiter(double rps)
        : interval_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
              std::chrono::duration<double>(1.0 / rps))) {
        if (rps <= 0) throw ConfigError("rate limit must be > 0");
    }

    void acquire() {
        std::chrono::steady_clock::time_point wake;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto now = std::chrono::steady_clock::now();
            if (next_ < now) next_ = now;
            wake = next_;
            next_ += interval_;
        }
        std::this_thread::sleep_until(wake);
    }

private:
    std::chrono::steady_clock::duration interval_;
    std::chrono::steady_clock::time_point next_{};
    std::mutex mu_;
};

}  // namespace fides

#include <httplib.h>

namespace fides {

// ---------------------------------------------------------------------------
// HTTP adapters. Exponential backoff with jitter; retry only on transport
// failures and 5xx, never on 4xx; 429 surfaces as a quota error.
// ---------------------------------------------------------------------------

class HttpClientBase {
public:
    explicit HttpClientBase(BackendConfig config) : config_(std::move(config)), limiter_(config_.rate_limit_rps) {
        config_.validate();
        split_endpoint(config_.endpoint, base_, path_);
        if (!config_.auth_env_var.empty()) {
            const char* cred = std::getenv(config_.auth_env_var.c_str());
            if (!cred)
                throw ConfigError("credential environment variable " + config_.auth_env_var + " is not set");
            auth_header_ = std::string("Bearer ") + cred;
        }
    }

protected:
    json post_json(const json& body) {
        const std::string payload = body.dump();
        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) backoff_sleep(attempt);
            limiter_.acquire();
            httplib::Client cli(base_);
            configure(cli);
            auto res = cli.Post(path_, headers(), payload, "application/json");
            if (!res) {
                last_error = "connection failure (" + httplib::to_string(res.error()) + ")";
                continue;  // transport: retry
            }
            if (res->status == 429)
                throw BackendError(BackendErrorKind::Quota, "HTTP 429 from " + config_.endpoint);
            if (res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;  // retry
            }
            if (res->status >= 400)
                throw BackendError(BackendErrorKind::Transport,
                                   "HTTP " + std::to_string(res->status) + " from " + config_.endpoint);
            try {
                return json::parse(res->body);
            } catch (const json::exception& e) {
                throw BackendError(BackendErrorKind::Protocol,
                                   std::string("response is not valid JSON: ") + e.what());
            }
        }
        throw BackendError(BackendErrorKind::Transport,
                           last_error + " after " + std::to_string(config_.max_retries + 1) + " attempts to " +
                               config_.endpoint);
    }

    std::string get_body(const std::string& url) {
        std::string base, path;
        split_endpoint(url, base, path);
        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) backoff_sleep(attempt);
            limiter_.acquire();
            httplib::Client cli(base);
            configure(cli);
            auto res = cli.Get(path);
            if (!res) {
                last_error = "connection failure (" + httplib::to_string(res.error()) + ")";
                continue;
            }
            if (res->status == 429) throw BackendError(BackendErrorKind::Quota, "HTTP 429 from " + url);
            if (res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status >= 400)
                throw BackendError(BackendErrorKind::Transport, "HTTP " + std::to_string(res->status) + " from " + url);
            return res->body;
        }
        throw BackendError(BackendErrorKind::Transport,
                           last_error + " after " + std::to_string(config_.max_retries + 1) + " attempts to " + url);
    }

    static void split_endpoint(const std::string& endpoint, std::string& base, std::string& path) {
        auto scheme = endpoint.find("://");
        if (scheme == std::string::npos) throw ConfigError("endpoint must include a scheme: " + endpoint);
        auto slash = endpoint.find('/', scheme + 3);
        if (slash == std::string::npos) {
            base = endpoint;
            path = "/";
        } else {
            base = endpoint.substr(0, slash);
            path = endpoint.substr(slash);
        }
    }

private:
    void configure(httplib::Client& cli) {
        auto secs = static_cast<time_t>(config_.timeout_s);
        auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        cli.set_write_timeout(secs, usecs);
        cli.set_follow_location(true);
    }

    httplib::Headers headers() const {
        httplib::Headers h;
        if (!auth_header_.empty()) h.emplace("Authorization", auth_header_);
        return h;
    }

    static void backoff_sleep(int attempt) {
        thread_local std::mt19937 rng{std::random_device{}()};
        double base_ms = 50.0 * std::pow(2.0, attempt - 1);
        std::uniform_real_distribution<double> jitter(0.75, 1.25);
        double ms = std::min(base_ms * jitter(rng), 2000.0);
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
    }

    BackendConfig config_;
    RateLimiter limiter_;
    std::string base_;
    std::string path_;
    std::string auth_header_;
};

class HttpLlm : public LlmBackend, private HttpClientBase {
public:
    explicit HttpLlm(BackendConfig config) : HttpClientBase(std::move(config)) {}

    std::string generate(const std::string& prompt, int max_tokens, double temperature) override {
        detail::check_generate_args(prompt, temperature);
        json res = post_json(json{{"prompt", prompt}, {"max_tokens", max_tokens}, {"temperature", temperature}});
        if (!res.contains("text") || !res["text"].is_string())
            throw BackendError(BackendErrorKind::Protocol, "generate response missing text field");
        return res["text"].get<std::string>();
    }
};

class HttpSearch : public SearchBackend, private HttpClientBase {
public:
    explicit HttpSearch(BackendConfig config) : HttpClientBase(std::move(config)) {}

    std::vector<SearchResult> search(const std::string& query, int count) override {
        detail::check_search_args(query, count);
        json res = post_json(json{{"query", query}, {"count", count}});
        if (!res.contains("results") || !res["results"].is_array())
            throw BackendError(BackendErrorKind::Protocol, "search response missing results array");
        std::vector<SearchResult> out;
        for (const auto& r : res["results"]) {
            if (out.size() >= static_cast<size_t>(count)) break;
            SearchResult sr;
            try {
                sr.url = r.at("url").get<std::string>();
            } catch (const json::exception&) {
                throw BackendError(BackendErrorKind::Protocol, "search result missing url");
            }
            sr.title = r.value("title", std::string());
            sr.snippet = r.value("snippet", std::string());
            sr.rank = static_cast<int>(out.size());
            out.push_back(std::move(sr));
        }
        return out;
    }
};

class HttpRerank : public RerankBackend, private HttpClientBase {
public:
    explicit HttpRerank(BackendConfig config) : HttpClientBase(std::move(config)) {}

    std::vector<double> rerank(const std::string& query, const std::vector<std::string>& passages) override {
        detail::check_rerank_args(passages);
        json res = post_json(json{{"query", query}, {"passages", passages}});
        if (!res.contains("scores") || !res["scores"].is_array())
            throw BackendError(BackendErrorKind::Protocol, "rerank response missing scores array");
        std::vector<double> scores;
        for (const auto& s : res["scores"]) {
            if (!s.is_number()) throw BackendError(BackendErrorKind::Protocol, "rerank score is not a number");
            scores.push_back(s.get<double>());
        }
        if (scores.size() != passages.size())
            throw BackendError(BackendErrorKind::Protocol,
                               "rerank returned " + std::to_string(scores.size()) + " scores for " +
                                   std::to_string(passages.size()) + " passages");
        for (double s : scores)
            if (!std::isfinite(s)) throw BackendError(BackendErrorKind::Protocol, "rerank score is not finite");
        return scores;
    }
};

class HttpNli : public NliBackend, private HttpClientBase {
public:
    explicit HttpNli(BackendConfig config) : HttpClientBase(std::move(config)) {}

    double entail(const std::string& premise, const std::string& hypothesis) override {
        detail::check_nli_args(premise, hypothesis);
        json res = post_json(json{{"premise", premise},
                                  {"hypothesis", hypothesis},
                                  {"input", render_nli_input(premise, hypothesis)}});
        if (!res.contains("entail_prob") || !res["entail_prob"].is_number())
            throw BackendError(BackendErrorKind::Protocol, "nli response missing entail_prob");
        double p = res["entail_prob"].get<double>();
        if (p < 0.0 || p > 1.0)
            throw BackendError(BackendErrorKind::Protocol, "nli entail_prob outside [0,1]: " + std::to_string(p));
        return p;
    }

    // GET helper reused by the page fetcher.
    using HttpClientBase::get_body;
};

// Plain HTML fetcher for page retrieval in live mode.
class HttpPageFetcher : private HttpClientBase {
public:
    explicit HttpPageFetcher(BackendConfig config) : HttpClientBase(std::move(config)) {}
    std::string fetch(const std::string& url) { return get_body(url); }
};

}  // namespace fides
