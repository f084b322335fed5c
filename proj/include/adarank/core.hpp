#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adarank {

struct Query {
    std::string id;
    std::string text;

    bool operator==(const Query&) const = default;
};

struct Passage {
    int ordinal = 0;  // 1-based identifier used in prompts
    std::string doc_id;
    std::optional<std::string> title;
    std::string text;

    bool operator==(const Passage&) const = default;
};

// A query plus its first-stage retrieved passages, in retrieval order.
// Ordinals are always the contiguous range 1..m.
struct CandidateSet {
    Query query;
    std::vector<Passage> passages;

    int m() const { return static_cast<int>(passages.size()); }

    // Throws std::invalid_argument if any invariant is broken.
    void validate(int max_passages = 10) const;

    bool operator==(const CandidateSet&) const = default;
};

// The ordered adaptive subset produced by parsing ranker output.
// Empty ordinals means the termination case (no relevant passages).
struct Selection {
    std::vector<int> ordinals;
    std::string raw_output;
    std::vector<std::string> repair_notes;

    bool operator==(const Selection&) const = default;
};

enum class GoldKind { short_answers, list_answers, claims };

std::string_view to_string(GoldKind k);
GoldKind gold_kind_from_string(std::string_view s);

// Ground truth for one query. `items` is a list of alias sets: for
// short/list answers each inner list holds acceptable surface forms of one
// required answer; for claims each inner list holds exactly one claim string.
struct GoldLabels {
    GoldKind kind = GoldKind::short_answers;
    std::vector<std::vector<std::string>> items;

    const std::vector<std::string> claims() const;

    bool operator==(const GoldLabels&) const = default;
};

struct EvalInstance {
    CandidateSet candidate_set;
    GoldLabels gold;

    bool operator==(const EvalInstance&) const = default;
};

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DatasetFormat { alce_json, native_jsonl };

struct LoadResult {
    std::vector<EvalInstance> instances;
    GoldKind kind = GoldKind::short_answers;
    int truncated_count = 0;  // records whose passage list exceeded max_passages
};

// Loads a dataset file, re-assigning ordinals 1..m in file order and
// truncating passage lists to max_passages. Throws DatasetError naming the
// offending line/record on malformed input, empty files, duplicate query
// ids, or mixed gold kinds.
LoadResult load_dataset(const std::filesystem::path& path, DatasetFormat format,
                        int max_passages = 10);

// Writes instances in the native JSONL schema (one EvalInstance per line).
void save_dataset_native(const std::vector<EvalInstance>& instances,
                         const std::filesystem::path& path);

// Lowercase, strip punctuation, drop the articles a/an/the, collapse
// whitespace. The conventional open-domain QA normalization.
std::string normalize_answer(std::string_view text);

// Whitespace-split of an already-normalized string with common English
// stopwords removed. Used by the lexical entailment backend.
std::vector<std::string> content_words(std::string_view normalized);

}  // namespace adarank
