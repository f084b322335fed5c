#include "adarank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace adarank::metrics {

using nlohmann::json;

double score_str_em(const std::string& answer, const GoldLabels& gold) {
    if (gold.items.empty()) throw std::invalid_argument("score_str_em: empty gold");
    std::string norm_answer = normalize_answer(answer);
    int hits = 0;
    for (const auto& alias_set : gold.items) {
        for (const auto& alias : alias_set) {
            if (norm_answer.find(normalize_answer(alias)) != std::string::npos) {
                ++hits;
                break;
            }
        }
    }
    return 100.0 * hits / static_cast<double>(gold.items.size());
}

ListF1 score_list_f1(const std::vector<std::string>& pred_items, const GoldLabels& gold,
                     std::optional<int> recall_cap) {
    // Dedup predictions after normalization, preserving first occurrence.
    std::vector<std::string> pred;
    std::unordered_set<std::string> seen;
    for (const auto& item : pred_items) {
        std::string norm = normalize_answer(item);
        if (seen.insert(norm).second) pred.push_back(std::move(norm));
    }

    std::vector<std::set<std::string>> gold_sets;
    for (const auto& alias_set : gold.items) {
        std::set<std::string> s;
        for (const auto& alias : alias_set) s.insert(normalize_answer(alias));
        gold_sets.push_back(std::move(s));
    }

    std::vector<bool> used(gold_sets.size(), false);
    int matches = 0;
    for (const auto& item : pred) {
        for (std::size_t g = 0; g < gold_sets.size(); ++g) {
            if (used[g] || !gold_sets[g].count(item)) continue;
            used[g] = true;
            ++matches;
            break;
        }
    }

    ListF1 out;
    if (!pred.empty()) out.precision = 100.0 * matches / static_cast<double>(pred.size());
    double denom = static_cast<double>(gold_sets.size());
    if (recall_cap) denom = std::min(denom, static_cast<double>(*recall_cap));
    if (denom > 0) out.recall = std::min(100.0, 100.0 * matches / denom);
    if (out.precision + out.recall > 0)
        out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

EntailmentBackend EntailmentBackend::lexical() {
    EntailmentBackend b;
    b.kind_ = "lexical";
    return b;
}

EntailmentBackend EntailmentBackend::llm_judge(backends::ChatBackend& chat, std::string model,
                                               std::string judge_prompt) {
    EntailmentBackend b;
    b.kind_ = "llm_judge";
    b.chat_ = &chat;
    b.model_ = std::move(model);
    b.judge_prompt_ = std::move(judge_prompt);
    return b;
}

std::string EntailmentBackend::default_judge_prompt() {
    return "Premise:\n{answer}\n\nClaim:\n{claim}\n\n"
           "Does the premise entail the claim? Reply with exactly one word: yes or no.";
}

EntailmentBackend::Judgement EntailmentBackend::entails(const std::string& answer,
                                                        const std::string& claim) const {
    if (kind_ == "lexical") {
        std::vector<std::string> claim_words = content_words(normalize_answer(claim));
        if (claim_words.empty()) return {true, false};
        std::istringstream is(normalize_answer(answer));
        std::unordered_set<std::string> answer_words;
        std::string w;
        while (is >> w) answer_words.insert(w);
        std::size_t covered = 0;
        for (const auto& cw : claim_words) covered += answer_words.count(cw);
        double coverage = static_cast<double>(covered) / static_cast<double>(claim_words.size());
        return {coverage >= 0.8, false};
    }

    std::string prompt = judge_prompt_;
    auto fill = [&](std::string_view slot, const std::string& value) {
        if (auto pos = prompt.find(slot); pos != std::string::npos)
            prompt.replace(pos, slot.size(), value);
    };
    fill("{answer}", answer);
    fill("{claim}", claim);
    backends::ChatRequest req;
    req.messages = {{"user", prompt}};
    req.temperature = 0.0;
    req.max_output_tokens = 4;
    req.model_name = model_;
    try {
        std::string verdict = normalize_answer(chat_->chat(req).text);
        return {verdict.substr(0, 3) == "yes", false};
    } catch (const backends::BackendError&) {
        return {false, true};
    }
}

double score_claim_recall(const std::string& answer, const std::vector<std::string>& claims,
                          const EntailmentBackend& backend, int* failed_claims) {
    if (claims.empty()) throw std::invalid_argument("score_claim_recall: empty claims");
    int entailed = 0;
    for (const auto& claim : claims) {
        auto j = backend.entails(answer, claim);
        if (j.failed && failed_claims) ++*failed_claims;
        if (j.entailed) ++entailed;
    }
    return 100.0 * entailed / static_cast<double>(claims.size());
}

double overall_star(std::optional<double> asqa_str_em, std::optional<double> eli5_claim_recall,
                    std::optional<double> qampari_f1) {
    if (!asqa_str_em || !eli5_claim_recall || !qampari_f1)
        throw std::invalid_argument("overall_star requires all three dataset scores");
    return (*asqa_str_em + *eli5_claim_recall + *qampari_f1) / 3.0;
}

OracleMode oracle_mode_from_string(std::string_view s) {
    if (s == "per_query") return OracleMode::per_query;
    if (s == "per_dataset") return OracleMode::per_dataset;
    throw std::invalid_argument("unknown oracle mode: " + std::string(s));
}

double oracle_best_k(const std::map<int, std::vector<QueryScore>>& scores_by_k, OracleMode mode) {
    if (scores_by_k.empty()) throw std::invalid_argument("oracle_best_k: no scores");

    if (mode == OracleMode::per_dataset) {
        double best = 0.0;
        bool first = true;
        for (const auto& [k, scores] : scores_by_k) {
            if (scores.empty()) throw std::invalid_argument("oracle_best_k: empty score list");
            double sum = 0.0;
            for (const auto& s : scores) sum += s.primary_metric;
            double mean = sum / static_cast<double>(scores.size());
            if (first || mean > best) best = mean;
            first = false;
        }
        return best;
    }

    std::unordered_map<std::string, std::pair<double, std::size_t>> best_per_query;
    for (const auto& [k, scores] : scores_by_k) {
        for (const auto& s : scores) {
            auto [it, inserted] = best_per_query.try_emplace(s.query_id, s.primary_metric, 1u);
            if (!inserted) {
                it->second.first = std::max(it->second.first, s.primary_metric);
                ++it->second.second;
            }
        }
    }
    if (best_per_query.empty()) throw std::invalid_argument("oracle_best_k: no queries");
    // Sum in sorted query order so the result does not depend on hash layout.
    std::vector<std::pair<std::string, double>> ordered;
    ordered.reserve(best_per_query.size());
    for (const auto& [qid, entry] : best_per_query) {
        if (entry.second != scores_by_k.size())
            throw std::invalid_argument("oracle_best_k: query " + qid +
                                        " is missing scores for some k");
        ordered.emplace_back(qid, entry.first);
    }
    std::sort(ordered.begin(), ordered.end());
    double sum = 0.0;
    for (const auto& [qid, best] : ordered) sum += best;
    return sum / static_cast<double>(ordered.size());
}

StrategyReport score_runs(const std::vector<EvalInstance>& instances,
                          const std::vector<pipeline::QueryRun>& runs,
                          const EntailmentBackend& entailment, std::optional<int> recall_cap) {
    std::unordered_map<std::string, const EvalInstance*> by_id;
    for (const auto& inst : instances) by_id[inst.candidate_set.query.id] = &inst;

    StrategyReport report;
    if (!runs.empty()) report.strategy = runs.front().strategy;
    if (!instances.empty()) report.kind = instances.front().gold.kind;

    double sum_primary = 0, sum_p = 0, sum_r = 0, sum_ctx = 0, sum_tok = 0;
    int scored = 0;
    for (const auto& run : runs) {
        auto it = by_id.find(run.query_id);
        if (it == by_id.end())
            throw std::invalid_argument("run references unknown query id " + run.query_id);
        const EvalInstance& inst = *it->second;

        QueryScore qs;
        qs.query_id = run.query_id;
        qs.context_size = static_cast<int>(run.context_ordinals.size());
        qs.prompt_tokens = run.prompt_tokens;
        qs.completion_tokens = run.completion_tokens;
        qs.failed = run.failed;
        if (!run.failed) {
            switch (inst.gold.kind) {
                case GoldKind::short_answers:
                    qs.primary_metric = score_str_em(run.answer_text, inst.gold);
                    break;
                case GoldKind::list_answers: {
                    ListF1 f1 = score_list_f1(pipeline::split_list_answer(run.answer_text),
                                              inst.gold, recall_cap);
                    qs.primary_metric = f1.f1;
                    qs.components = {f1.precision, f1.recall};
                    break;
                }
                case GoldKind::claims:
                    qs.primary_metric =
                        score_claim_recall(run.answer_text, inst.gold.claims(), entailment);
                    break;
            }
            sum_primary += qs.primary_metric;
            if (qs.components) {
                sum_p += qs.components->first;
                sum_r += qs.components->second;
            }
            sum_ctx += qs.context_size;
            sum_tok += static_cast<double>(qs.prompt_tokens);
            ++scored;
        } else {
            ++report.failure_count;
        }
        report.per_query.push_back(std::move(qs));
    }
    if (scored > 0) {
        report.mean_primary = sum_primary / scored;
        report.mean_precision = sum_p / scored;
        report.mean_recall = sum_r / scored;
        report.mean_context_size = sum_ctx / scored;
        report.mean_prompt_tokens = sum_tok / scored;
    }
    return report;
}

namespace {

json report_to_json(const StrategyReport& r) {
    json per_query = json::array();
    for (const auto& qs : r.per_query) {
        json q{{"query_id", qs.query_id},
               {"primary_metric", qs.primary_metric},
               {"context_size", qs.context_size},
               {"prompt_tokens", qs.prompt_tokens},
               {"completion_tokens", qs.completion_tokens},
               {"failed", qs.failed}};
        if (qs.components)
            q["components"] = {{"precision", qs.components->first},
                               {"recall", qs.components->second}};
        per_query.push_back(std::move(q));
    }
    return json{{"strategy", r.strategy},
                {"gold_kind", std::string(to_string(r.kind))},
                {"mean_primary", r.mean_primary},
                {"mean_precision", r.mean_precision},
                {"mean_recall", r.mean_recall},
                {"mean_context_size", r.mean_context_size},
                {"mean_prompt_tokens", r.mean_prompt_tokens},
                {"failure_count", r.failure_count},
                {"per_query", std::move(per_query)}};
}

// Strategy descriptors are "kind-k" or "adarank"; the k column is empty for
// adarank rows.
std::string k_of(const std::string& descriptor) {
    auto dash = descriptor.rfind('-');
    if (dash == std::string::npos) return "";
    return descriptor.substr(dash + 1);
}

std::string fmt2(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

}  // namespace

void write_report_json(const std::vector<StrategyReport>& reports,
                       const std::filesystem::path& path) {
    json doc = json::array();
    for (const auto& r : reports) doc.push_back(report_to_json(r));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path.string());
    out << doc.dump(2) << "\n";
}

void write_report_csv(const std::vector<StrategyReport>& reports,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path.string());
    out << "strategy,k,metric,precision,recall,f1,mean_context_size,mean_prompt_tokens,failures\n";
    for (const auto& r : reports) {
        bool list_kind = r.kind == GoldKind::list_answers;
        out << r.strategy << "," << k_of(r.strategy) << "," << fmt2(r.mean_primary) << ","
            << (list_kind ? fmt2(r.mean_precision) : std::string()) << ","
            << (list_kind ? fmt2(r.mean_recall) : std::string()) << ","
            << (list_kind ? fmt2(r.mean_primary) : std::string()) << ","
            << fmt2(r.mean_context_size) << "," << fmt2(r.mean_prompt_tokens) << ","
            << r.failure_count << "\n";
    }
}

std::string format_report_table(const std::vector<StrategyReport>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "strategy" << std::right << std::setw(10) << "metric"
       << std::setw(12) << "mean_ctx" << std::setw(14) << "prompt_tok" << std::setw(10)
       << "failures" << "\n";
    os << std::string(60, '-') << "\n";
    for (const auto& r : reports) {
        os << std::left << std::setw(14) << r.strategy << std::right << std::setw(10)
           << fmt2(r.mean_primary) << std::setw(12) << fmt2(r.mean_context_size) << std::setw(14)
           << fmt2(r.mean_prompt_tokens) << std::setw(10) << r.failure_count << "\n";
    }
    return os.str();
}

}  // namespace adarank::metrics
