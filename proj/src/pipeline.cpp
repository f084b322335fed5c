#include "adarank/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adarank/parallel.hpp"

namespace adarank::pipeline {

using nlohmann::json;

std::string Strategy::descriptor() const {
    switch (kind) {
        case StrategyKind::vanilla: return "vanilla-" + std::to_string(k);
        case StrategyKind::rerank: return "rerank-" + std::to_string(k);
        case StrategyKind::adarank: return "adarank";
    }
    return "?";
}

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

int parse_k(const std::string& tok, int max_k) {
    std::size_t used = 0;
    int k;
    try {
        k = std::stoi(tok, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("grid: bad k value '" + tok + "'");
    }
    if (used != tok.size()) throw std::invalid_argument("grid: bad k value '" + tok + "'");
    if (k < 0 || k > max_k)
        throw std::invalid_argument("grid: k=" + tok + " outside [0," + std::to_string(max_k) + "]");
    return k;
}

}  // namespace

std::vector<Strategy> parse_grid(std::string_view grid, int max_k) {
    std::vector<Strategy> out;
    for (const std::string& term : split(grid, ' ')) {
        auto colon = term.find(':');
        std::string kind = term.substr(0, colon);
        if (kind == "adarank") {
            if (colon != std::string::npos)
                throw std::invalid_argument("grid: adarank takes no k list");
            out.push_back({StrategyKind::adarank, 0});
            continue;
        }
        if (kind != "vanilla" && kind != "rerank")
            throw std::invalid_argument("grid: unknown strategy kind '" + kind + "'");
        if (colon == std::string::npos || colon + 1 >= term.size())
            throw std::invalid_argument("grid: '" + kind + "' needs a k list, e.g. " + kind +
                                        ":1,3");
        auto ks = split(term.substr(colon + 1), ',');
        if (ks.empty()) throw std::invalid_argument("grid: empty k list in '" + term + "'");
        for (const std::string& tok : ks) {
            int k = parse_k(tok, max_k);
            if (kind == "rerank" && k == 0)
                throw std::invalid_argument("grid: rerank requires k >= 1");
            out.push_back({kind == "vanilla" ? StrategyKind::vanilla : StrategyKind::rerank, k});
        }
    }
    if (out.empty()) throw std::invalid_argument("grid: no strategies given");
    return out;
}

std::vector<int> reranked_order(const std::vector<int>& selection, int m) {
    std::set<int> picked(selection.begin(), selection.end());
    std::vector<int> order = selection;
    order.reserve(static_cast<std::size_t>(m));
    for (int ord = 1; ord <= m; ++ord)
        if (!picked.count(ord)) order.push_back(ord);
    return order;
}

std::vector<QueryRun> run_strategy(const std::vector<EvalInstance>& instances,
                                   const Strategy& strategy, backends::RankerBackend* ranker,
                                   backends::AnswerGenerator& generator, const RunOptions& opts) {
    bool needs_ranker = strategy.kind != StrategyKind::vanilla;
    if (needs_ranker && !ranker)
        throw std::invalid_argument(strategy.descriptor() + " requires a ranker backend");

    std::vector<QueryRun> runs(instances.size());
    parallel_for(instances.size(), opts.threads, [&](std::size_t i) {
        const EvalInstance& inst = instances[i];
        const CandidateSet& cs = inst.candidate_set;
        QueryRun& run = runs[i];
        run.query_id = cs.query.id;
        run.strategy = strategy.descriptor();
        try {
            if (needs_ranker) {
                auto raw = ranker->rank_raw(cs);
                run.ranker_raw = raw.text;
                run.prompt_tokens += raw.prompt_tokens;
                run.completion_tokens += raw.completion_tokens;
                Selection sel = protocol::parse_selection(raw.text, cs.m(), opts.policy);
                run.repair_notes = sel.repair_notes;
                if (strategy.kind == StrategyKind::adarank) {
                    run.context_ordinals = sel.ordinals;
                } else {
                    auto order = reranked_order(sel.ordinals, cs.m());
                    int take = std::min(strategy.k, cs.m());
                    run.context_ordinals.assign(order.begin(), order.begin() + take);
                }
            } else {
                int take = std::min(strategy.k, cs.m());
                for (int ord = 1; ord <= take; ++ord) run.context_ordinals.push_back(ord);
            }
            auto gen = generator.generate(cs, run.context_ordinals, inst.gold.kind);
            run.answer_text = gen.answer;
            run.prompt_tokens += gen.prompt_tokens;
            run.completion_tokens += gen.completion_tokens;
        } catch (const backends::BackendError& e) {
            run.failed = true;
            run.fail_reason = e.what();
        } catch (const protocol::ParseFailure& e) {
            run.failed = true;
            run.fail_reason = std::string("unparseable ranker output: ") + e.what();
        }
    });
    return runs;
}

std::vector<std::string> split_list_answer(std::string_view answer) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        std::size_t b = cur.find_first_not_of(" \t\r");
        std::size_t e = cur.find_last_not_of(" \t\r");
        if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
        cur.clear();
    };
    for (char c : answer) {
        if (c == ',' || c == '\n') {
            flush();
        } else {
            cur += c;
        }
    }
    flush();
    return out;
}

namespace {

json run_to_json(const QueryRun& run) {
    json doc{{"query_id", run.query_id},
             {"strategy", run.strategy},
             {"context_ordinals", run.context_ordinals},
             {"answer_text", run.answer_text},
             {"prompt_tokens", run.prompt_tokens},
             {"completion_tokens", run.completion_tokens},
             {"repair_notes", run.repair_notes},
             {"failed", run.failed}};
    doc["ranker_raw"] = run.ranker_raw ? json(*run.ranker_raw) : json(nullptr);
    if (run.failed) doc["fail_reason"] = run.fail_reason;
    return doc;
}

}  // namespace

void write_run_log(const std::vector<QueryRun>& runs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write run log: " + path.string());
    for (const auto& run : runs) out << run_to_json(run).dump() << "\n";
}

std::vector<QueryRun> load_run_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open run log: " + path.string());
    std::vector<QueryRun> runs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string where = path.string() + ":" + std::to_string(lineno);
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(where + ": invalid JSON: " + e.what());
        }
        QueryRun run;
        try {
            run.query_id = doc.at("query_id").get<std::string>();
            run.strategy = doc.at("strategy").get<std::string>();
            run.context_ordinals = doc.at("context_ordinals").get<std::vector<int>>();
            run.answer_text = doc.at("answer_text").get<std::string>();
            run.prompt_tokens = doc.at("prompt_tokens").get<long>();
            run.completion_tokens = doc.at("completion_tokens").get<long>();
            run.repair_notes = doc.at("repair_notes").get<std::vector<std::string>>();
            run.failed = doc.at("failed").get<bool>();
            if (doc.contains("ranker_raw") && !doc["ranker_raw"].is_null())
                run.ranker_raw = doc["ranker_raw"].get<std::string>();
            run.fail_reason = doc.value("fail_reason", "");
        } catch (const json::exception& e) {
            throw std::runtime_error(where + ": bad run record: " + e.what());
        }
        runs.push_back(std::move(run));
    }
    return runs;
}

int count_failures(const std::vector<QueryRun>& runs) {
    return static_cast<int>(std::count_if(runs.begin(), runs.end(),
                                          [](const QueryRun& r) { return r.failed; }));
}

}  // namespace adarank::pipeline
