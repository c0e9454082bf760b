#pragma once
// Few-shot prompt templates for the five prompted stages. Templates live as
// editable text files (prompts/{answer_gen,ss,cd,ev,fe}.txt) with built-in
// defaults; the file format is line-based sections:
//
//   [instruction]
//   ...free text, may contain {INPUT} and {QUESTION} placeholders...
//   [example.input]
//   ...
//   [example.output]
//   ...
//
// Rendering emits instruction, then Input:/Output: blocks for each example,
// then the target input. When the instruction consumed {INPUT} itself, no
// trailing block is added.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fides/errors.hpp"
#include "fides/text.hpp"

namespace fides {

enum class Stage { AnswerGen, SS, CD, EV, FE };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::AnswerGen: return "answer_gen";
        case Stage::SS: return "ss";
        case Stage::CD: return "cd";
        case Stage::EV: return "ev";
        case Stage::FE: return "fe";
    }
    return "?";
}

class PromptTemplate {
public:
    PromptTemplate(Stage stage, std::string instruction,
                   std::vector<std::pair<std::string, std::string>> few_shot, size_t token_budget = 4096)
        : stage_(stage),
          instruction_(std::move(instruction)),
          few_shot_(std::move(few_shot)),
          token_budget_(token_budget) {
        if (stage_ != Stage::AnswerGen && few_shot_.empty())
            throw ConfigError(std::string(stage_name(stage_)) + " template requires few-shot examples");
        if (text::trim(instruction_).empty())
            throw ConfigError(std::string(stage_name(stage_)) + " template has an empty instruction");
    }

    Stage stage() const { return stage_; }
    const std::vector<std::pair<std::string, std::string>>& few_shot() const { return few_shot_; }

    // Renders the prompt for one target input. Drops trailing few-shot
    // examples when the token budget would be exceeded; throws if the
    // instruction plus target alone do not fit.
    std::string render(const std::string& input, const std::string& question = {}) const {
        for (size_t keep = few_shot_.size();; --keep) {
            std::string prompt = render_with(keep, input, question);
            if (text::token_count(prompt) <= token_budget_) return prompt;
            if (keep == 0)
                throw PreconditionError(std::string(stage_name(stage_)) +
                                        " prompt exceeds the token budget even without examples");
        }
    }

    static PromptTemplate parse(Stage stage, const std::string& file_text, size_t token_budget = 4096) {
        std::string instruction;
        std::vector<std::pair<std::string, std::string>> examples;
        std::string* sink = nullptr;
        std::string pending_input;
        bool in_output = false, have_input = false;
        std::istringstream in(file_text);
        std::string line;
        auto flush_example = [&]() {
            if (have_input && in_output) {
                examples.emplace_back(text::trim(pending_input), text::trim(*sink));
                sink = nullptr;
                have_input = in_output = false;
                pending_input.clear();
            }
        };
        std::string current_output;
        while (std::getline(in, line)) {
            std::string t = text::trim(line);
            if (t == "[instruction]") {
                flush_example();
                sink = &instruction;
                in_output = false;
                continue;
            }
            if (t == "[example.input]") {
                flush_example();
                have_input = true;
                sink = &pending_input;
                in_output = false;
                continue;
            }
            if (t == "[example.output]") {
                if (!have_input) throw ParseError(std::string(stage_name(stage)) + " template: output without input");
                current_output.clear();
                sink = &current_output;
                in_output = true;
                continue;
            }
            if (sink) {
                if (!sink->empty()) sink->push_back('\n');
                sink->append(line);
            }
        }
        flush_example();
        return PromptTemplate(stage, text::trim(instruction), std::move(examples), token_budget);
    }

    std::string to_file_text() const {
        std::string out = "[instruction]\n" + instruction_ + "\n";
        for (const auto& [in, ex_out] : few_shot_)
            out += "[example.input]\n" + in + "\n[example.output]\n" + ex_out + "\n";
        return out;
    }

private:
    std::string render_with(size_t n_examples, const std::string& input, const std::string& question) const {
        std::string body = instruction_;
        bool inline_input = substitute(body, "{INPUT}", input);
        substitute(body, "{QUESTION}", question);
        std::string prompt = body;
        for (size_t i = 0; i < n_examples; ++i) {
            prompt += "\n\nInput: " + few_shot_[i].first + "\nOutput: " + few_shot_[i].second;
        }
        if (!inline_input) prompt += "\n\nInput: " + input + "\nOutput:";
        return prompt;
    }

    static bool substitute(std::string& body, const std::string& placeholder, const std::string& value) {
        bool found = false;
        size_t pos = 0;
        while ((pos = body.find(placeholder, pos)) != std::string::npos) {
            body.replace(pos, placeholder.size(), value);
            pos += value.size();
            found = true;
        }
        return found;
    }

    Stage stage_;
    std::string instruction_;
    std::vector<std::pair<std::string, std::string>> few_shot_;
    size_t token_budget_;
};

// ---------------------------------------------------------------------------
// Built-in defaults, overridable via --prompts-dir.
// ---------------------------------------------------------------------------

namespace default_prompts {

inline PromptTemplate answer_gen(size_t budget = 4096) {
    return PromptTemplate(
        Stage::AnswerGen,
        "Answer the question with a detailed, self-contained passage of two to four sentences. "
        "State concrete facts; do not hedge.",
        {{"What is the tallest mountain in Washington?",
          "Mount Rainier is the tallest mountain in Washington state, USA, with a summit of about 14,411 "
          "feet. It is an active stratovolcano in the Cascade Range and is closely monitored because of its "
          "proximity to the Seattle metropolitan area."}},
        budget);
}

inline PromptTemplate ss(size_t budget = 4096) {
    return PromptTemplate(
        Stage::SS,
        "Split the passage into its individual sentences. Rewrite each sentence so that its subject is named "
        "explicitly instead of a pronoun, then append that subject. Reply with a numbered list, one item per "
        "sentence, in the form: <sentence> | Subject: <subject>",
        {{"The Eiffel Tower is a wrought-iron lattice tower in Paris. It was completed in 1889.",
          "1. The Eiffel Tower is a wrought-iron lattice tower in Paris. | Subject: The Eiffel Tower\n"
          "2. The Eiffel Tower was completed in 1889. | Subject: The Eiffel Tower"}},
        budget);
}

inline PromptTemplate cd(size_t budget = 4096) {
    return PromptTemplate(
        Stage::CD,
        "Break the sentence into atomic facts. Each fact must state exactly one verifiable claim, name its "
        "subject explicitly, and stand alone as a search query. Reply with a numbered list.",
        {{"The Eiffel Tower was completed in 1889 and is the most visited paid monument in the world.",
          "1. The Eiffel Tower was completed in 1889.\n"
          "2. The Eiffel Tower is the most visited paid monument in the world."},
         {"Paris is the capital of France.", "1. Paris is the capital of France."}},
        budget);
}

inline PromptTemplate ev(size_t budget = 4096) {
    return PromptTemplate(
        Stage::EV,
        "Compare the fact with the evidence. Reply \"State: 1\" if the evidence does not contradict the "
        "fact. Reply \"State: 2\" followed by a short reason if the evidence contradicts the fact.",
        {{"Fact: The Eiffel Tower was completed in 1889.\n"
          "Evidence: The tower was finished in 1889 for the Exposition Universelle.",
          "State: 1"},
         {"Fact: The Eiffel Tower is located in Berlin.\n"
          "Evidence: The Eiffel Tower stands on the Champ de Mars in Paris, France.",
          "State: 2 - the evidence places the tower in Paris, not Berlin."}},
        budget);
}

inline PromptTemplate fe(size_t budget = 4096) {
    return PromptTemplate(
        Stage::FE,
        "The fact conflicts with the evidence. Think step by step about what the evidence establishes, then "
        "rewrite the fact so it agrees with the evidence while changing as little as possible. End your "
        "reply with a line starting \"Revised:\" followed by the corrected fact.",
        {{"Fact: The Eiffel Tower is located in Berlin.\n"
          "Evidence: The Eiffel Tower stands on the Champ de Mars in Paris, France.",
          "The evidence puts the tower on the Champ de Mars in Paris, France, so the location in the fact "
          "is wrong.\n"
          "Revised: The Eiffel Tower is located in Paris."}},
        budget);
}

}  // namespace default_prompts

// Holds one template per stage; built-in defaults unless a directory with
// {answer_gen,ss,cd,ev,fe}.txt overrides them.
class PromptLibrary {
public:
    explicit PromptLibrary(size_t token_budget = 4096)
        : answer_gen_(default_prompts::answer_gen(token_budget)),
          ss_(default_prompts::ss(token_budget)),
          cd_(default_prompts::cd(token_budget)),
          ev_(default_prompts::ev(token_budget)),
          fe_(default_prompts::fe(token_budget)) {}

    static PromptLibrary from_directory(const std::string& dir, size_t token_budget = 4096) {
        PromptLibrary lib(token_budget);
        lib.answer_gen_ = load(dir, Stage::AnswerGen, token_budget);
        lib.ss_ = load(dir, Stage::SS, token_budget);
        lib.cd_ = load(dir, Stage::CD, token_budget);
        lib.ev_ = load(dir, Stage::EV, token_budget);
        lib.fe_ = load(dir, Stage::FE, token_budget);
        return lib;
    }

    const PromptTemplate& get(Stage s) const {
        switch (s) {
            case Stage::AnswerGen: return answer_gen_;
            case Stage::SS: return ss_;
            case Stage::CD: return cd_;
            case Stage::EV: return ev_;
            case Stage::FE: return fe_;
        }
        throw ContractError("unknown stage");
    }

    void write_defaults(const std::string& dir) const {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        for (Stage s : {Stage::AnswerGen, Stage::SS, Stage::CD, Stage::EV, Stage::FE}) {
            std::ofstream out(fs::path(dir) / (std::string(stage_name(s)) + ".txt"), std::ios::trunc);
            out << get(s).to_file_text();
        }
    }

private:
    static PromptTemplate load(const std::string& dir, Stage s, size_t budget) {
        namespace fs = std::filesystem;
        fs::path p = fs::path(dir) / (std::string(stage_name(s)) + ".txt");
        std::ifstream in(p);
        if (!in) throw IoError("prompt template not found: " + p.string());
        std::stringstream buf;
        buf << in.rdbuf();
        return PromptTemplate::parse(s, buf.str(), budget);
    }

    PromptTemplate answer_gen_;
    PromptTemplate ss_;
    PromptTemplate cd_;
    PromptTemplate ev_;
    PromptTemplate fe_;
};

}  // namespace fides
