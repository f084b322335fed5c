#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "adarank/core.hpp"

namespace adarank::protocol {

struct Message {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const Message&) const = default;
};

// The listwise selection-and-rerank prompt. instruction_text supports the
// {query} and {m} slots; per_passage_format supports {ordinal}, {title} and
// {text}. The instruction must spell out the "[0]" termination token and the
// " > " separator, both of which the parser depends on.
struct PromptTemplate {
    std::string system_text;
    std::string per_passage_format;
    std::string instruction_text;
    int per_passage_char_budget = 1000;

    static PromptTemplate default_template();
    static PromptTemplate from_file(const std::filesystem::path& path);
    std::string to_json_string() const;

    // Throws std::invalid_argument if a required slot or token is missing.
    void validate() const;
};

// FNV-1a over the canonical JSON form, as a hex string. Recorded in run
// manifests so reports are traceable to the exact prompt wording.
std::string template_hash(const PromptTemplate& tpl);

// System + user message pair asking the model to select and rank passages.
// Passage bodies are truncated to the template's character budget at a word
// boundary.
std::vector<Message> build_rank_prompt(const CandidateSet& cs, const PromptTemplate& tpl);

// Answer-generation prompt: an optional context block of
// "Document [i] ({title}): {text}" lines renumbered 1..c in the given order,
// the question, then an answer-format instruction selected by gold kind
// (list answers are requested comma-separated). Empty context means no
// Document block.
std::vector<Message> build_answer_prompt(const Query& query,
                                         const std::vector<Passage>& passages_in_order,
                                         GoldKind kind);

enum class MalformedPolicy { error, fallback_original_order, empty };

MalformedPolicy policy_from_string(std::string_view s);

struct ParseFailure : std::runtime_error {
    explicit ParseFailure(const std::string& msg, std::string raw_text)
        : std::runtime_error(msg), raw(std::move(raw_text)) {}
    std::string raw;
};

// Scans raw ranker output left to right for bracketed integers under the
// dropout grammar: "[0]" first means the empty selection; "[0]" after valid
// identifiers truncates the list there; duplicates are kept-first and
// out-of-range identifiers dropped, with every repair recorded. When no
// usable identifier appears at all, `policy` decides between an error, the
// original order 1..m, and the empty selection.
Selection parse_selection(std::string_view raw, int m, MalformedPolicy policy);

// Inverse of the grammar: [] -> "[0]", [3,1] -> "[3] > [1]". Throws on
// duplicates or non-positive ordinals.
std::string render_selection(const std::vector<int>& ordinals);

// Truncate to at most `budget` characters, cutting at the last word boundary
// that fits. Exposed for tests.
std::string truncate_at_word(std::string_view text, int budget);

}  // namespace adarank::protocol
