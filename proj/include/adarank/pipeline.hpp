#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adarank/backends.hpp"
#include "adarank/core.hpp"
#include "adarank/protocol.hpp"

namespace adarank::pipeline {

enum class StrategyKind { vanilla, rerank, adarank };

struct Strategy {
    StrategyKind kind = StrategyKind::vanilla;
    int k = 0;  // ignored for adarank; 0 means closed-book for vanilla

    // "vanilla-3", "rerank-5", "adarank"
    std::string descriptor() const;

    bool operator==(const Strategy&) const = default;
};

// Grid DSL: space-separated terms "kind:k1,k2,..." or bare "adarank",
// e.g. "vanilla:0,1,3,5,10 rerank:1,3,5,10 adarank". k values must lie in
// [0, max_k]; rerank requires k >= 1. Throws std::invalid_argument.
std::vector<Strategy> parse_grid(std::string_view grid, int max_k = 10);

struct QueryRun {
    std::string query_id;
    std::string strategy;
    std::vector<int> context_ordinals;
    std::string answer_text;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    std::optional<std::string> ranker_raw;
    std::vector<std::string> repair_notes;
    bool failed = false;
    std::string fail_reason;

    bool operator==(const QueryRun&) const = default;
};

struct RunOptions {
    protocol::MalformedPolicy policy = protocol::MalformedPolicy::fallback_original_order;
    int threads = 1;
};

// Full permutation induced by a selection: selected ordinals first in
// selection order, then the dropped ones in original order.
std::vector<int> reranked_order(const std::vector<int>& selection, int m);

// Executes one strategy over all instances. Context rules: vanilla takes the
// first k passages in retrieval order; rerank ranks the full list (parse
// under opts.policy) and takes the top k of the permutation; adarank uses the
// parsed selection verbatim, possibly empty. Backend and parse failures mark
// the query failed and the run continues. Results are in input order
// regardless of execution order.
std::vector<QueryRun> run_strategy(const std::vector<EvalInstance>& instances,
                                   const Strategy& strategy, backends::RankerBackend* ranker,
                                   backends::AnswerGenerator& generator,
                                   const RunOptions& opts = {});

// Splits a generated list answer on commas and newlines, trimming whitespace
// and dropping empties. Normalization is the scorer's job.
std::vector<std::string> split_list_answer(std::string_view answer);

void write_run_log(const std::vector<QueryRun>& runs, const std::filesystem::path& path);
std::vector<QueryRun> load_run_log(const std::filesystem::path& path);

int count_failures(const std::vector<QueryRun>& runs);

}  // namespace adarank::pipeline
