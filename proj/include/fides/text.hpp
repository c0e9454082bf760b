#pragma once
// Text primitives: UTF-8 aware normalization (NFC composition over the Latin
// repertoire + whitespace collapse), tokenization, stable hashing, heuristic
// sentence segmentation, and token-span utilities used by the edit folder.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fides::text {

// ---------------------------------------------------------------------------
// UTF-8 codec. Invalid bytes round-trip unchanged (escaped into the surrogate
// range on decode, re-emitted verbatim on encode) so normalization stays
// idempotent and lossless on arbitrary input.
// ---------------------------------------------------------------------------

inline std::vector<uint32_t> decode_utf8(std::string_view s) {
    std::vector<uint32_t> out;
    out.reserve(s.size());
    size_t i = 0;
    const auto bad = [&](unsigned char b) { out.push_back(0xDC00u + b); };
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        if (c < 0x80) {
            out.push_back(c);
            ++i;
            continue;
        }
        int len = 0;
        uint32_t cp = 0;
        if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1Fu;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0Fu;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07u;
        } else {
            bad(c);
            ++i;
            continue;
        }
        if (i + static_cast<size_t>(len) > s.size()) {
            bad(c);
            ++i;
            continue;
        }
        bool ok = true;
        uint32_t acc = cp;
        for (int k = 1; k < len; ++k) {
            unsigned char cc = static_cast<unsigned char>(s[i + static_cast<size_t>(k)]);
            if ((cc & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            acc = (acc << 6) | (cc & 0x3Fu);
        }
        // Reject overlong encodings and surrogates; re-emit the lead byte raw.
        if (ok) {
            if ((len == 2 && acc < 0x80) || (len == 3 && acc < 0x800) || (len == 4 && acc < 0x10000) ||
                (acc >= 0xD800 && acc <= 0xDFFF) || acc > 0x10FFFF) {
                ok = false;
            }
        }
        if (!ok) {
            bad(c);
            ++i;
            continue;
        }
        out.push_back(acc);
        i += static_cast<size_t>(len);
    }
    return out;
}

inline void append_utf8(std::string& out, uint32_t cp) {
    if (cp >= 0xDC00 && cp <= 0xDCFF) {  // escaped invalid byte
        out.push_back(static_cast<char>(cp - 0xDC00));
    } else if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string encode_utf8(const std::vector<uint32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (uint32_t cp : cps) append_utf8(out, cp);
    return out;
}

// ---------------------------------------------------------------------------
// NFC composition for the Latin-1 Supplement / Latin Extended-A repertoire.
// The table maps (base, combining mark) pairs onto their precomposed form;
// pairs outside it pass through untouched, which keeps the pass idempotent.
// ---------------------------------------------------------------------------

namespace detail {

struct Composition {
    uint32_t base;
    uint32_t mark;
    uint32_t composed;
};

// clang-format off
inline constexpr std::array<Composition, 125> kCompositions{{
    {'A',0x300,0xC0},{'A',0x301,0xC1},{'A',0x302,0xC2},{'A',0x303,0xC3},{'A',0x308,0xC4},
    {'A',0x30A,0xC5},{'A',0x304,0x100},{'A',0x306,0x102},{'A',0x328,0x104},
    {'C',0x327,0xC7},{'C',0x301,0x106},{'C',0x302,0x108},{'C',0x307,0x10A},{'C',0x30C,0x10C},
    {'E',0x300,0xC8},{'E',0x301,0xC9},{'E',0x302,0xCA},{'E',0x308,0xCB},{'E',0x304,0x112},
    {'E',0x306,0x114},{'E',0x307,0x116},{'E',0x328,0x118},{'E',0x30C,0x11A},
    {'G',0x302,0x11C},{'G',0x306,0x11E},{'G',0x307,0x120},{'G',0x327,0x122},
    {'H',0x302,0x124},
    {'I',0x300,0xCC},{'I',0x301,0xCD},{'I',0x302,0xCE},{'I',0x308,0xCF},{'I',0x303,0x128},
    {'I',0x304,0x12A},{'I',0x306,0x12C},{'I',0x328,0x12E},{'I',0x307,0x130},
    {'J',0x302,0x134},
    {'K',0x327,0x136},
    {'L',0x301,0x139},{'L',0x327,0x13B},{'L',0x30C,0x13D},
    {'N',0x303,0xD1},{'N',0x301,0x143},{'N',0x327,0x145},{'N',0x30C,0x147},
    {'O',0x300,0xD2},{'O',0x301,0xD3},{'O',0x302,0xD4},{'O',0x303,0xD5},{'O',0x308,0xD6},
    {'O',0x304,0x14C},{'O',0x306,0x14E},{'O',0x30B,0x150},
    {'R',0x301,0x154},{'R',0x327,0x156},{'R',0x30C,0x158},
    {'S',0x301,0x15A},{'S',0x302,0x15C},{'S',0x327,0x15E},{'S',0x30C,0x160},
    {'T',0x327,0x162},{'T',0x30C,0x164},
    {'U',0x300,0xD9},{'U',0x301,0xDA},{'U',0x302,0xDB},{'U',0x308,0xDC},{'U',0x303,0x168},
    {'U',0x304,0x16A},{'U',0x306,0x16C},{'U',0x30A,0x16E},{'U',0x30B,0x170},{'U',0x328,0x172},
    {'W',0x302,0x174},
    {'Y',0x301,0xDD},{'Y',0x302,0x176},{'Y',0x308,0x178},
    {'Z',0x301,0x179},{'Z',0x307,0x17B},{'Z',0x30C,0x17D},
    {'a',0x300,0xE0},{'a',0x301,0xE1},{'a',0x302,0xE2},{'a',0x303,0xE3},{'a',0x308,0xE4},
    {'a',0x30A,0xE5},{'a',0x304,0x101},{'a',0x306,0x103},{'a',0x328,0x105},
    {'c',0x327,0xE7},{'c',0x301,0x107},{'c',0x302,0x109},{'c',0x307,0x10B},{'c',0x30C,0x10D},
    {'e',0x300,0xE8},{'e',0x301,0xE9},{'e',0x302,0xEA},{'e',0x308,0xEB},{'e',0x304,0x113},
    {'e',0x306,0x115},{'e',0x307,0x117},{'e',0x328,0x119},{'e',0x30C,0x11B},
    {'g',0x302,0x11D},{'g',0x306,0x11F},{'g',0x307,0x121},{'g',0x327,0x123},
    {'h',0x302,0x125},
    {'i',0x300,0xEC},{'i',0x301,0xED},{'i',0x302,0xEE},{'i',0x308,0xEF},{'i',0x303,0x129},
    {'i',0x304,0x12B},{'i',0x306,0x12D},{'i',0x328,0x12F},
    {'j',0x302,0x135},
    {'k',0x327,0x137},
    {'l',0x301,0x13A},{'l',0x327,0x13C},{'l',0x30C,0x13E},
    {'n',0x303,0xF1},{'n',0x301,0x144},{'n',0x327,0x146},{'n',0x30C,0x148},
}};

inline constexpr std::array<Composition, 40> kCompositions2{{
    {'o',0x300,0xF2},{'o',0x301,0xF3},{'o',0x302,0xF4},{'o',0x303,0xF5},{'o',0x308,0xF6},
    {'o',0x304,0x14D},{'o',0x306,0x14F},{'o',0x30B,0x151},
    {'r',0x301,0x155},{'r',0x327,0x157},{'r',0x30C,0x159},
    {'s',0x301,0x15B},{'s',0x302,0x15D},{'s',0x327,0x15F},{'s',0x30C,0x161},
    {'t',0x327,0x163},{'t',0x30C,0x165},
    {'u',0x300,0xF9},{'u',0x301,0xFA},{'u',0x302,0xFB},{'u',0x308,0xFC},{'u',0x303,0x169},
    {'u',0x304,0x16B},{'u',0x306,0x16D},{'u',0x30A,0x16F},{'u',0x30B,0x171},{'u',0x328,0x173},
    {'w',0x302,0x175},
    {'y',0x301,0xFD},{'y',0x302,0x177},{'y',0x308,0xFF},
    {'z',0x301,0x17A},{'z',0x307,0x17C},{'z',0x30C,0x17E},
    {0,0,0},{0,0,0},{0,0,0},{0,0,0},{0,0,0},{0,0,0},
}};
// clang-format on

inline uint32_t compose_pair(uint32_t base, uint32_t mark) {
    for (const auto& c : kCompositions)
        if (c.base == base && c.mark == mark) return c.composed;
    for (const auto& c : kCompositions2)
        if (c.base == base && c.mark == mark) return c.composed;
    return 0;
}

inline bool is_space_cp(uint32_t cp) {
    switch (cp) {
        case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
        case 0xA0: case 0x1680: case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

}  // namespace detail

// NFC (Latin repertoire) + collapse whitespace runs to single spaces + trim.
// Case is preserved. Idempotent.
inline std::string normalize_text(std::string_view t) {
    std::vector<uint32_t> cps = decode_utf8(t);
    std::vector<uint32_t> composed;
    composed.reserve(cps.size());
    for (uint32_t cp : cps) {
        if (!composed.empty()) {
            if (uint32_t c = detail::compose_pair(composed.back(), cp); c != 0) {
                composed.back() = c;
                continue;
            }
        }
        composed.push_back(cp);
    }
    std::string out;
    out.reserve(t.size());
    bool pending_space = false;
    bool seen_content = false;
    for (uint32_t cp : composed) {
        if (detail::is_space_cp(cp)) {
            pending_space = seen_content;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        append_utf8(out, cp);
        seen_content = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hashing. FNV-1a 64-bit, rendered as 16 lowercase hex chars; used as the
// stable key for prompt and NLI-pair fixtures.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string stable_hash(std::string_view s) {
    static const char* hex = "0123456789abcdef";
    uint64_t h = fnv1a64(s);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = hex[h & 0xF];
        h >>= 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

struct TokenSpan {
    size_t begin;  // byte offset
    size_t end;    // one past the last byte
    std::string_view view(std::string_view s) const { return s.substr(begin, end - begin); }
};

// Whitespace-delimited tokens with byte offsets into the input.
inline std::vector<TokenSpan> token_spans(std::string_view s) {
    std::vector<TokenSpan> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i >= s.size()) break;
        size_t b = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        out.push_back({b, i});
    }
    return out;
}

inline std::vector<std::string> tokens(std::string_view s) {
    std::vector<std::string> out;
    for (const auto& sp : token_spans(s)) out.emplace_back(sp.view(s));
    return out;
}

inline size_t token_count(std::string_view s) { return token_spans(s).size(); }

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Lowercased token with leading/trailing punctuation stripped; empty result
// means the token was all punctuation.
inline std::string match_token(std::string_view raw) {
    size_t b = 0, e = raw.size();
    while (b < e && !std::isalnum(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && !std::isalnum(static_cast<unsigned char>(raw[e - 1]))) --e;
    return ascii_lower(raw.substr(b, e - b));
}

// Number of passage tokens (with multiplicity) that occur in the query's
// token set, case-insensitive and punctuation-stripped. The mock reranker's
// scoring rule.
inline size_t token_overlap_count(std::string_view query, std::string_view passage) {
    std::vector<std::string> qtoks;
    for (const auto& sp : token_spans(query)) {
        std::string t = match_token(sp.view(query));
        if (!t.empty()) qtoks.push_back(std::move(t));
    }
    std::sort(qtoks.begin(), qtoks.end());
    size_t n = 0;
    for (const auto& sp : token_spans(passage)) {
        std::string t = match_token(sp.view(passage));
        if (!t.empty() && std::binary_search(qtoks.begin(), qtoks.end(), t)) ++n;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Heuristic sentence segmentation: split after a run of sentence-final
// punctuation followed by whitespace and an ASCII uppercase letter. Operates
// on normalized text; joining the pieces with single spaces reproduces it.
// ---------------------------------------------------------------------------

inline std::vector<std::string> split_sentences(std::string_view normalized) {
    std::vector<std::string> out;
    size_t start = 0;
    size_t i = 0;
    const size_t n = normalized.size();
    while (i < n) {
        char c = normalized[i];
        if (c == '.' || c == '!' || c == '?') {
            size_t j = i;
            while (j < n && (normalized[j] == '.' || normalized[j] == '!' || normalized[j] == '?')) ++j;
            if (j < n && normalized[j] == ' ' && j + 1 < n &&
                std::isupper(static_cast<unsigned char>(normalized[j + 1]))) {
                out.emplace_back(normalized.substr(start, j - start));
                start = j + 1;
                i = start;
                continue;
            }
            i = j;
            continue;
        }
        ++i;
    }
    if (start < n) out.emplace_back(normalized.substr(start));
    if (out.empty() && !normalized.empty()) out.emplace_back(normalized);
    return out;
}

// First word chunk of a sentence: the leading word, extended over following
// capitalized words when the sentence opens with a capitalized run
// ("Mount Rainier is..." -> "Mount Rainier"). Always a substring of the input.
inline std::string first_word_chunk(std::string_view sentence) {
    auto spans = token_spans(sentence);
    if (spans.empty()) return std::string(sentence);
    auto starts_upper = [&](const TokenSpan& sp) {
        std::string_view v = sp.view(sentence);
        return !v.empty() && std::isupper(static_cast<unsigned char>(v[0]));
    };
    size_t last = 0;
    if (starts_upper(spans[0])) {
        while (last + 1 < spans.size() && starts_upper(spans[last + 1])) ++last;
    }
    return std::string(sentence.substr(spans[0].begin, spans[last].end - spans[0].begin));
}

// ---------------------------------------------------------------------------
// Token-level span utilities for the sentence-level edit folder.
// ---------------------------------------------------------------------------

struct CommonRun {
    size_t length = 0;      // in tokens
    size_t b_begin = 0;     // byte span of the run inside `b`
    size_t b_end = 0;
};

// Longest common contiguous token run between a and b (exact token match).
inline CommonRun longest_common_token_run(std::string_view a, std::string_view b) {
    auto as = token_spans(a);
    auto bs = token_spans(b);
    const size_t n = as.size(), m = bs.size();
    CommonRun best;
    if (n == 0 || m == 0) return best;
    std::vector<size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            if (as[i - 1].view(a) == bs[j - 1].view(b)) {
                cur[j] = prev[j - 1] + 1;
                if (cur[j] > best.length) {
                    best.length = cur[j];
                    best.b_begin = bs[j - cur[j]].begin;
                    best.b_end = bs[j - 1].end;
                }
            } else {
                cur[j] = 0;
            }
        }
        std::swap(prev, cur);
    }
    return best;
}

struct DiffCore {
    std::string original;  // changed region of the original text
    std::string revised;   // its replacement in the revised text
    bool changed = false;
};

// Token-level diff core: strip the common prefix and suffix of original vs
// revised; widen by one anchor token when the original side would be empty.
inline DiffCore diff_core(std::string_view original, std::string_view revised) {
    auto os = token_spans(original);
    auto rs = token_spans(revised);
    size_t p = 0;
    while (p < os.size() && p < rs.size() && os[p].view(original) == rs[p].view(revised)) ++p;
    size_t s = 0;
    while (s < os.size() - p && s < rs.size() - p &&
           os[os.size() - 1 - s].view(original) == rs[rs.size() - 1 - s].view(revised))
        ++s;
    DiffCore core;
    if (p + s >= os.size() && p + s >= rs.size()) return core;  // identical
    core.changed = true;
    size_t ob = p, oe = os.size() - s;  // token ranges [ob, oe)
    size_t rb = p, re = rs.size() - s;
    if (ob >= oe) {  // pure insertion: pull in one anchor token
        if (ob > 0) {
            --ob;
            --rb;
        } else if (oe < os.size()) {
            ++oe;
            ++re;
        }
    }
    if (ob < oe) core.original = std::string(original.substr(os[ob].begin, os[oe - 1].end - os[ob].begin));
    if (rb < re) core.revised = std::string(revised.substr(rs[rb].begin, rs[re - 1].end - rs[rb].begin));
    return core;
}

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) !=
            std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    }
    return true;
}

}  // namespace fides::text
