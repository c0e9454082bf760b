#pragma once
// Long form answer generation, sentence segmentation with explicit
// coreference resolution (SS+ECR), and claim decomposition (CD). Each
// prompted stage parses a numbered list from the model output; segmentation
// degrades to a heuristic splitter instead of aborting.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fides/backends.hpp"
#include "fides/core.hpp"
#include "fides/errors.hpp"
#include "fides/prompts.hpp"
#include "fides/text.hpp"

namespace fides {

// Extracts items formatted "1. ...", "1) ..." or "- ..." from raw model
// output. Items may continue over following lines until the next enumerator
// or a blank line. Returns an empty list when nothing matches.
inline std::vector<std::string> parse_enumerated_list(const std::string& raw) {
    std::vector<std::string> items;
    std::string current;
    bool in_item = false;
    auto flush = [&]() {
        if (in_item) {
            std::string t = text::trim(current);
            if (!t.empty()) items.push_back(std::move(t));
            current.clear();
            in_item = false;
        }
    };
    size_t pos = 0;
    while (pos <= raw.size()) {
        size_t eol = raw.find('\n', pos);
        std::string line = raw.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        pos = eol == std::string::npos ? raw.size() + 1 : eol + 1;

        std::string trimmed = text::trim(line);
        if (trimmed.empty()) {
            flush();
            continue;
        }
        // enumerator: digits followed by '.' or ')' and whitespace, or "- "
        size_t i = 0;
        while (i < trimmed.size() && std::isdigit(static_cast<unsigned char>(trimmed[i]))) ++i;
        bool numbered = i > 0 && i < trimmed.size() && (trimmed[i] == '.' || trimmed[i] == ')') &&
                        i + 1 < trimmed.size() && std::isspace(static_cast<unsigned char>(trimmed[i + 1]));
        bool bullet = trimmed.size() > 1 && trimmed[0] == '-' &&
                      std::isspace(static_cast<unsigned char>(trimmed[1]));
        if (numbered || bullet) {
            flush();
            in_item = true;
            current = text::trim(trimmed.substr(numbered ? i + 2 : 2));
        } else if (in_item) {
            current += ' ';
            current += trimmed;
        }
        // text before the first enumerator is preamble; ignore it
    }
    flush();
    return items;
}

// Heuristic segmentation over normalized text; joining the returned sentence
// texts with single spaces reproduces normalize_text(answer).
inline std::vector<SentenceUnit> heuristic_segment(const std::string& answer_text) {
    std::string normalized = normalize_text(answer_text);
    std::vector<SentenceUnit> out;
    for (const std::string& s : text::split_sentences(normalized)) {
        SentenceUnit u;
        u.index = static_cast<int>(out.size());
        u.text = s;
        u.subject_surface = text::first_word_chunk(s);
        out.push_back(std::move(u));
    }
    return out;
}

struct DecomposerOptions {
    bool disable_ecr = false;  // skip the LLM SS prompt; heuristic split only
    GenParams answer_gen;
    GenParams ss;
    GenParams cd;
    // Length drift beyond this token ratio is flagged, not rejected.
    double length_drift_warn = 0.30;
};

class Decomposer {
public:
    Decomposer(std::shared_ptr<LlmBackend> answer_llm, std::shared_ptr<LlmBackend> ss_llm,
               std::shared_ptr<LlmBackend> cd_llm, const PromptLibrary& prompts, DecomposerOptions options = {})
        : answer_llm_(std::move(answer_llm)),
          ss_llm_(std::move(ss_llm)),
          cd_llm_(std::move(cd_llm)),
          prompts_(prompts),
          options_(options) {}

    std::vector<std::string> take_warnings() { return std::move(warnings_); }

    LongFormAnswer generate_long_form_answer(const std::string& question, const std::string& generator_id = "llm") {
        if (text::trim(question).empty())
            throw PreconditionError("generate_long_form_answer: question must be non-empty");
        std::string prompt = prompts_.get(Stage::AnswerGen).render(question, question);
        std::string completion =
            answer_llm_->generate(prompt, options_.answer_gen.max_tokens, options_.answer_gen.temperature);
        std::string answer = text::trim(completion);
        if (answer.empty()) throw GenerationError("model returned a blank answer");
        LongFormAnswer a;
        a.question = question;
        a.answer_text = answer;
        a.generator_id = generator_id;
        a.edited = false;
        return a;
    }

    std::vector<SentenceUnit> segment_sentences(const LongFormAnswer& answer) {
        if (text::trim(answer.answer_text).empty())
            throw PreconditionError("segment_sentences: answer_text must be non-empty");
        if (options_.disable_ecr) return heuristic_segment(answer.answer_text);

        std::string raw;
        try {
            std::string prompt = prompts_.get(Stage::SS).render(answer.answer_text, answer.question);
            raw = ss_llm_->generate(prompt, options_.ss.max_tokens, options_.ss.temperature);
        } catch (const BackendError& e) {
            warn(std::string("SS backend unavailable, using heuristic segmentation: ") + e.what());
            return heuristic_segment(answer.answer_text);
        }

        std::vector<SentenceUnit> units = parse_ss_output(raw);
        if (units.empty()) {
            warn("SS output had no parseable list, using heuristic segmentation");
            units = heuristic_segment(answer.answer_text);
        }
        if (units.empty()) throw SegmentationError("segmentation produced no sentences");
        check_length_drift(answer.answer_text, units);
        return units;
    }

    std::vector<AtomicFact> decompose_claims(const SentenceUnit& sentence) {
        if (text::trim(sentence.text).empty())
            throw PreconditionError("decompose_claims: sentence text must be non-empty");
        std::string prompt = prompts_.get(Stage::CD).render(sentence.text);
        std::string raw = cd_llm_->generate(prompt, options_.cd.max_tokens, options_.cd.temperature);
        std::vector<std::string> items = parse_enumerated_list(raw);
        if (items.empty()) throw DecompositionError("CD output had no parseable facts for sentence " +
                                                    std::to_string(sentence.index));
        std::vector<AtomicFact> facts;
        for (const std::string& item : items) {
            AtomicFact f;
            f.sentence_index = sentence.index;
            f.fact_index = static_cast<int>(facts.size());
            f.text = item;
            facts.push_back(std::move(f));
        }
        return facts;
    }

private:
    // SS items look like "<sentence> | Subject: <subject>"; a missing or
    // non-substring subject falls back to the first word chunk.
    std::vector<SentenceUnit> parse_ss_output(const std::string& raw) {
        std::vector<SentenceUnit> units;
        for (const std::string& item : parse_enumerated_list(raw)) {
            std::string sentence = item;
            std::string subject;
            size_t bar = item.rfind('|');
            if (bar != std::string::npos) {
                std::string tail = text::trim(item.substr(bar + 1));
                if (text::starts_with_ci(tail, "subject:")) {
                    subject = text::trim(tail.substr(8));
                    sentence = text::trim(item.substr(0, bar));
                }
            }
            if (sentence.empty()) continue;
            SentenceUnit u;
            u.index = static_cast<int>(units.size());
            u.text = sentence;
            if (subject.empty() || sentence.find(subject) == std::string::npos) {
                if (!subject.empty())
                    warn("SS subject '" + subject + "' is not a substring of its sentence, using first chunk");
                subject = text::first_word_chunk(sentence);
            }
            u.subject_surface = subject;
            units.push_back(std::move(u));
        }
        return units;
    }

    void check_length_drift(const std::string& answer_text, const std::vector<SentenceUnit>& units) {
        size_t original = text::token_count(normalize_text(answer_text));
        size_t segmented = 0;
        for (const auto& u : units) segmented += text::token_count(u.text);
        if (original == 0) return;
        double drift = std::abs(static_cast<double>(segmented) - static_cast<double>(original)) /
                       static_cast<double>(original);
        if (drift > options_.length_drift_warn)
            warn("SS token count drifted " + std::to_string(static_cast<int>(drift * 100)) +
                 "% from the answer");
    }

    void warn(std::string msg) { warnings_.push_back(std::move(msg)); }

    std::shared_ptr<LlmBackend> answer_llm_;
    std::shared_ptr<LlmBackend> ss_llm_;
    std::shared_ptr<LlmBackend> cd_llm_;
    const PromptLibrary& prompts_;
    DecomposerOptions options_;
    std::vector<std::string> warnings_;
};

}  // namespace fides
