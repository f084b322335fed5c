#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adarank/backends.hpp"
#include "adarank/core.hpp"
#include "adarank/pipeline.hpp"

namespace adarank::metrics {

struct QueryScore {
    std::string query_id;
    double primary_metric = 0.0;  // percent in [0,100]
    std::optional<std::pair<double, double>> components;  // (precision, recall), list kind only
    int context_size = 0;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    bool failed = false;
};

struct StrategyReport {
    std::string strategy;
    GoldKind kind = GoldKind::short_answers;
    std::vector<QueryScore> per_query;
    // Aggregates are arithmetic means over scored (non-failed) queries.
    double mean_primary = 0.0;
    double mean_precision = 0.0;  // list kind only, else 0
    double mean_recall = 0.0;
    double mean_context_size = 0.0;
    double mean_prompt_tokens = 0.0;
    int failure_count = 0;
};

// 100 x fraction of gold alias sets with at least one alias appearing as a
// substring of the normalized answer (aliases normalized too).
double score_str_em(const std::string& answer, const GoldLabels& gold);

struct ListF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Set matching after normalization and prediction dedup; each gold alias set
// is matchable at most once. recall_cap divides matches by
// min(|gold|, recall_cap) instead of |gold|, clamped to 100.
ListF1 score_list_f1(const std::vector<std::string>& pred_items, const GoldLabels& gold,
                     std::optional<int> recall_cap = std::nullopt);

// Claim entailment judge. The lexical kind is deterministic: entailed iff at
// least 80% of the claim's normalized content words appear in the normalized
// answer (no stemming). The llm_judge kind asks a chat backend for a
// yes/no verdict.
class EntailmentBackend {
public:
    struct Judgement {
        bool entailed = false;
        bool failed = false;  // llm_judge backend error; claim scores 0
    };

    static EntailmentBackend lexical();
    static EntailmentBackend llm_judge(backends::ChatBackend& chat, std::string model,
                                       std::string judge_prompt = default_judge_prompt());
    static std::string default_judge_prompt();

    Judgement entails(const std::string& answer, const std::string& claim) const;
    const std::string& kind() const { return kind_; }

private:
    EntailmentBackend() = default;
    std::string kind_;
    backends::ChatBackend* chat_ = nullptr;
    std::string model_;
    std::string judge_prompt_;
};

// 100 x fraction of claims judged entailed. Judge failures score the claim 0
// and increment *failed_claims when provided.
double score_claim_recall(const std::string& answer, const std::vector<std::string>& claims,
                          const EntailmentBackend& backend, int* failed_claims = nullptr);

// Arithmetic mean of the three dataset percentages; all must be present.
double overall_star(std::optional<double> asqa_str_em, std::optional<double> eli5_claim_recall,
                    std::optional<double> qampari_f1);

enum class OracleMode { per_query, per_dataset };

OracleMode oracle_mode_from_string(std::string_view s);

// scores_by_k maps each k in a contiguous 0..K range to per-query scores.
// per_query: mean over queries of the best k for that query (every query
// must appear under every k). per_dataset: best k of the dataset means.
double oracle_best_k(const std::map<int, std::vector<QueryScore>>& scores_by_k, OracleMode mode);

// Joins runs with their instances by query id and scores each with the
// metric for the gold kind: short_answers -> STR-EM, list_answers -> F1
// (answer split on commas/newlines), claims -> claim recall.
StrategyReport score_runs(const std::vector<EvalInstance>& instances,
                          const std::vector<pipeline::QueryRun>& runs,
                          const EntailmentBackend& entailment,
                          std::optional<int> recall_cap = std::nullopt);

void write_report_json(const std::vector<StrategyReport>& reports,
                       const std::filesystem::path& path);
// One row per strategy: strategy,k,metric,precision,recall,f1,mean_context_size,
// mean_prompt_tokens,failures. k and P/R/F1 cells are empty where inapplicable.
void write_report_csv(const std::vector<StrategyReport>& reports,
                      const std::filesystem::path& path);
std::string format_report_table(const std::vector<StrategyReport>& reports);

}  // namespace adarank::metrics
