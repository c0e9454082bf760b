#pragma once
// Evidence retrieval: per-fact web search, page text extraction with an
// on-disk cache, sliding-window chunking, cross-encoder reranking, and
// top-J snippet selection.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "fides/backends.hpp"
#include "fides/core.hpp"
#include "fides/errors.hpp"
#include "fides/text.hpp"

namespace fides {

struct RetrievalParams {
    int m_pages = 5;    // M: webpages retrieved per fact
    int j_snippets = 1; // J: evidence snippets kept per fact
    int window = 4;     // W: sentences per chunk
    int stride = 2;     // sentences between window starts

    void validate() const {
        if (m_pages < 1) throw ConfigError("retrieval m_pages must be >= 1");
        if (j_snippets < 1) throw ConfigError("retrieval j_snippets must be >= 1");
        if (stride < 1 || stride > window) throw ConfigError("retrieval stride must be in [1, window]");
    }
};

struct PageText {
    std::string url;
    std::vector<std::string> sentences;
    long long fetched_at = 0;  // unix seconds
    bool from_cache = false;
};

// ---------------------------------------------------------------------------
// HTML to block text: drop script/style, break at block-level tags, strip
// remaining markup, decode the common entities.
// ---------------------------------------------------------------------------

inline std::string strip_html(const std::string& html) {
    std::string out;
    out.reserve(html.size());
    size_t i = 0;
    const size_t n = html.size();
    auto skip_element = [&](const char* name) {
        // positioned at '<'; returns true if this opens <name ...> and skips
        // through the matching close tag
        size_t len = std::string(name).size();
        if (i + 1 + len > n || !text::starts_with_ci(std::string_view(html).substr(i + 1, len), name)) return false;
        char after = i + 1 + len < n ? html[i + 1 + len] : '\0';
        if (after != '>' && after != ' ' && after != '\t' && after != '\n') return false;
        std::string close = std::string("</") + name;
        size_t pos = i;
        while (pos < n) {
            if (html[pos] == '<' && pos + close.size() <= n &&
                text::starts_with_ci(std::string_view(html).substr(pos, close.size()), close)) {
                size_t gt = html.find('>', pos);
                i = gt == std::string::npos ? n : gt + 1;
                return true;
            }
            ++pos;
        }
        i = n;
        return true;
    };
    static const char* kBlockTags[] = {"p",  "div", "br", "li",  "ul", "ol", "h1", "h2",
                                       "h3", "h4",  "h5", "h6",  "tr", "td", "th", "table",
                                       "section", "article", "blockquote", "pre"};
    while (i < n) {
        char c = html[i];
        if (c == '<') {
            if (skip_element("script") || skip_element("style")) continue;
            if (i + 3 < n && html.compare(i, 4, "<!--") == 0) {
                size_t end = html.find("-->", i);
                i = end == std::string::npos ? n : end + 3;
                continue;
            }
            size_t gt = html.find('>', i);
            std::string tag = gt == std::string::npos ? "" : html.substr(i + 1, gt - i - 1);
            if (!tag.empty() && tag[0] == '/') tag = tag.substr(1);
            size_t name_end = 0;
            while (name_end < tag.size() && std::isalnum(static_cast<unsigned char>(tag[name_end]))) ++name_end;
            tag = text::ascii_lower(tag.substr(0, name_end));
            for (const char* b : kBlockTags) {
                if (tag == b) {
                    out.push_back('\n');
                    break;
                }
            }
            i = gt == std::string::npos ? n : gt + 1;
            continue;
        }
        if (c == '&') {
            static const std::pair<const char*, const char*> kEntities[] = {
                {"&amp;", "&"}, {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""},
                {"&#39;", "'"}, {"&apos;", "'"}, {"&nbsp;", " "}};
            bool matched = false;
            for (const auto& [ent, rep] : kEntities) {
                size_t len = std::string(ent).size();
                if (html.compare(i, len, ent) == 0) {
                    out += rep;
                    i += len;
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        out.push_back(c);
        ++i;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Page fetcher with mandatory cache. Cache entries are JSON files named by
// the URL hash: {url, fetched_at, sentences}. In offline mode a cache miss
// is a page error and the network is never touched.
// ---------------------------------------------------------------------------

class PageFetcher {
public:
    PageFetcher(std::string cache_dir, bool offline, BackendConfig http_config = {})
        : cache_dir_(std::move(cache_dir)), offline_(offline), http_config_(std::move(http_config)) {
        if (cache_dir_.empty()) throw ConfigError("page cache directory must be set");
        std::filesystem::create_directories(cache_dir_);
    }

    PageText fetch(const std::string& url) {
        if (url.find("://") == std::string::npos) throw PreconditionError("fetch_page_text: malformed URL " + url);
        std::filesystem::path entry = cache_path(url);
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (std::filesystem::exists(entry)) return read_cache(entry, url);
        }
        if (offline_) throw PageError("offline: page cache miss for " + url);

        std::string body;
        try {
            HttpPageFetcher client(http_config_);
            body = client.fetch(url);
        } catch (const BackendError& e) {
            throw PageError(std::string("fetch failed for ") + url + ": " + e.what());
        }
        PageText page;
        page.url = url;
        page.sentences = text::split_sentences(normalize_text(strip_html(body)));
        page.sentences.erase(std::remove_if(page.sentences.begin(), page.sentences.end(),
                                            [](const std::string& s) { return text::trim(s).empty(); }),
                             page.sentences.end());
        if (page.sentences.empty()) throw PageError("empty extraction for " + url);
        page.fetched_at = std::chrono::duration_cast<std::chrono::seconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count();
        page.from_cache = false;
        std::lock_guard<std::mutex> lock(mu_);
        write_cache(entry, page);
        return page;
    }

    // Seeds the cache directly; used by fixtures and tests.
    void seed(const std::string& url, std::vector<std::string> sentences, long long fetched_at = 0) {
        PageText page;
        page.url = url;
        page.sentences = std::move(sentences);
        page.fetched_at = fetched_at;
        std::lock_guard<std::mutex> lock(mu_);
        write_cache(cache_path(url), page);
    }

    std::filesystem::path cache_path(const std::string& url) const {
        return std::filesystem::path(cache_dir_) / (text::stable_hash(url) + ".json");
    }

private:
    PageText read_cache(const std::filesystem::path& entry, const std::string& url) const {
        std::ifstream in(entry);
        if (!in) throw PageError("cannot read cache entry for " + url);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw PageError("corrupt cache entry for " + url + ": " + e.what());
        }
        PageText page;
        page.url = j.value("url", url);
        page.fetched_at = j.value("fetched_at", 0LL);
        for (const auto& s : j.at("sentences")) page.sentences.push_back(s.get<std::string>());
        if (page.sentences.empty()) throw PageError("cached entry has no sentences for " + url);
        page.from_cache = true;
        return page;
    }

    void write_cache(const std::filesystem::path& entry, const PageText& page) const {
        json j{{"url", page.url}, {"fetched_at", page.fetched_at}, {"sentences", page.sentences}};
        std::filesystem::path tmp = entry;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw IoError("cannot write page cache entry " + entry.string());
            out << j.dump(2) << '\n';
        }
        std::filesystem::rename(tmp, entry);
    }

    std::string cache_dir_;
    bool offline_;
    BackendConfig http_config_;
    mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Chunking and selection
// ---------------------------------------------------------------------------

// Windows of exactly `window` consecutive sentences at the configured stride.
// Fewer sentences than the window yields a single chunk of everything; the
// final window is anchored to the end so the last sentence always appears.
inline std::vector<std::string> chunk_sliding_window(const std::vector<std::string>& sentences,
                                                     const RetrievalParams& params) {
    params.validate();
    if (sentences.empty()) throw PreconditionError("chunk_sliding_window: sentences must be non-empty");
    const size_t n = sentences.size();
    const size_t w = static_cast<size_t>(params.window);
    const size_t stride = static_cast<size_t>(params.stride);
    auto join = [&](size_t begin, size_t end) {
        std::string chunk;
        for (size_t i = begin; i < end; ++i) {
            if (!chunk.empty()) chunk.push_back(' ');
            chunk += sentences[i];
        }
        return chunk;
    };
    if (n <= w) return {join(0, n)};
    std::vector<std::string> chunks;
    size_t last_start = 0;
    for (size_t start = 0; start + w <= n; start += stride) {
        chunks.push_back(join(start, start + w));
        last_start = start;
    }
    if (last_start != n - w) chunks.push_back(join(n - w, n));
    return chunks;
}

struct ChunkRef {
    std::string chunk_text;
    std::string url;
    int page_rank = 0;
};

// Reranks the pooled chunks against the fact text and keeps the top J,
// scores descending; ties break by (page_rank asc, pool position asc).
inline std::vector<EvidenceSnippet> rerank_and_select(const AtomicFact& fact, const std::vector<ChunkRef>& chunks,
                                                      const RetrievalParams& params, RerankBackend& reranker) {
    params.validate();
    if (chunks.empty()) throw PreconditionError("rerank_and_select: chunks must be non-empty");
    std::vector<std::string> passages;
    passages.reserve(chunks.size());
    for (const auto& c : chunks) passages.push_back(c.chunk_text);
    std::vector<double> scores = reranker.rerank(fact.text, passages);
    if (scores.size() != chunks.size())
        throw BackendError(BackendErrorKind::Protocol, "rerank score count mismatch");
    std::vector<size_t> order(chunks.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        if (chunks[a].page_rank != chunks[b].page_rank) return chunks[a].page_rank < chunks[b].page_rank;
        return a < b;
    });
    std::vector<EvidenceSnippet> out;
    for (size_t k = 0; k < order.size() && k < static_cast<size_t>(params.j_snippets); ++k) {
        size_t idx = order[k];
        EvidenceSnippet s;
        s.text = chunks[idx].chunk_text;
        s.source_url = chunks[idx].url;
        s.page_rank = chunks[idx].page_rank;
        s.rerank_score = scores[idx];
        s.fact_key = fact.key();
        out.push_back(std::move(s));
    }
    return out;
}

// Full per-fact retrieval: search -> fetch -> chunk -> pooled rerank -> top J.
// No search results or universally failing pages yield an empty list (the
// fact is simply unattributed); only backend transport errors propagate.
inline std::vector<EvidenceSnippet> retrieve_evidence_for_fact(const AtomicFact& fact,
                                                               const RetrievalParams& params,
                                                               SearchBackend& search, PageFetcher& pages,
                                                               RerankBackend& reranker,
                                                               std::vector<std::string>* warnings = nullptr) {
    if (text::trim(fact.text).empty())
        throw PreconditionError("retrieve_evidence_for_fact: fact text must be non-empty");
    params.validate();
    std::vector<SearchResult> results = search.search(fact.text, params.m_pages);
    if (results.empty()) return {};
    std::vector<ChunkRef> pool;
    for (const auto& r : results) {
        PageText page;
        try {
            page = pages.fetch(r.url);
        } catch (const PageError& e) {
            if (warnings) warnings->push_back(e.what());
            continue;  // fall back to the remaining pages
        }
        for (std::string& chunk : chunk_sliding_window(page.sentences, params))
            pool.push_back(ChunkRef{std::move(chunk), r.url, r.rank});
    }
    if (pool.empty()) return {};
    return rerank_and_select(fact, pool, params, reranker);
}

}  // namespace fides
