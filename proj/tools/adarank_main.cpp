#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "adarank/backends.hpp"
#include "adarank/core.hpp"
#include "adarank/distill.hpp"
#include "adarank/manifest.hpp"
#include "adarank/metrics.hpp"
#include "adarank/parallel.hpp"
#include "adarank/pipeline.hpp"
#include "adarank/protocol.hpp"
#include "adarank/rng.hpp"
#include "adarank/synthbench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace adarank;

namespace {

// Exit codes: 0 success, 2 usage/input error, 3 run-quality abort,
// 4 backend exhaustion. Anything unexpected maps to 1.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRunQuality = 3;
constexpr int kExitBackend = 4;

struct CommonOpts {
    std::string dataset;
    std::string format = "native";
    std::string template_path;
    std::string out;
    std::string backend = "mock";
    std::string backend_config;
    std::string labels_path;
    std::string policy = "fallback";
    double noise = 0.0;
    double robustness = 1.0;
    double knowledge_rate = 0.0;
    std::uint64_t seed = 0;
    int threads = 4;
    int max_passages = 10;
};

void add_dataset_flags(CLI::App* cmd, CommonOpts& o, bool required) {
    auto* d = cmd->add_option("--dataset", o.dataset, "Evaluation dataset file");
    if (required) d->required();
    cmd->add_option("--format", o.format, "Dataset format")
        ->check(CLI::IsMember({"native", "alce"}))
        ->capture_default_str();
    cmd->add_option("--max-passages", o.max_passages, "Truncate candidate lists to this size")
        ->check(CLI::Range(1, 10))
        ->capture_default_str();
}

void add_backend_flags(CLI::App* cmd, CommonOpts& o, bool with_generator) {
    cmd->add_option("--backend", o.backend, "Backend kind")
        ->check(CLI::IsMember({"mock", "http"}))
        ->capture_default_str();
    cmd->add_option("--backend-config", o.backend_config,
                    "JSON config for the http backend (endpoint, models, retry)");
    cmd->add_option("--labels", o.labels_path, "Relevance labels JSONL for mock backends");
    cmd->add_option("--noise", o.noise, "Mock ranker corruption probability")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    if (with_generator) {
        cmd->add_option("--robustness", o.robustness,
                        "Mock generator probability of ignoring an irrelevant passage")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
        cmd->add_option("--knowledge-rate", o.knowledge_rate,
                        "Mock generator closed-book success probability")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
    }
    cmd->add_option("--seed", o.seed, "Deterministic seed")->capture_default_str();
    cmd->add_option("--threads", o.threads, "Worker threads")
        ->check(CLI::Range(1, 256))
        ->capture_default_str();
}

std::string hash8(const json& config) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(config.dump());
    return os.str().substr(0, 8);
}

fs::path make_run_dir(const std::string& out_flag, const std::string& sub, const json& config) {
    fs::path dir;
    if (!out_flag.empty()) {
        dir = out_flag;
    } else {
        std::string ts = utc_now_iso8601();
        ts.erase(std::remove(ts.begin(), ts.end(), ':'), ts.end());
        dir = fs::path("runs") / (ts + "-" + sub + "-" + hash8(config));
    }
    fs::create_directories(dir);
    return dir;
}

DatasetFormat format_of(const std::string& s) {
    return s == "alce" ? DatasetFormat::alce_json : DatasetFormat::native_jsonl;
}

protocol::PromptTemplate load_template(const CommonOpts& o) {
    return o.template_path.empty() ? protocol::PromptTemplate::default_template()
                                   : protocol::PromptTemplate::from_file(o.template_path);
}

struct Bundle {
    std::unique_ptr<backends::HttpChatClient> chat;
    backends::RelevanceLabels labels;
    std::unique_ptr<backends::RankerBackend> ranker;
    std::unique_ptr<backends::AnswerGenerator> generator;
    std::string fingerprint;
};

Bundle make_bundle(const CommonOpts& o, const protocol::PromptTemplate& tpl,
                   const std::vector<EvalInstance>& instances, bool need_ranker) {
    Bundle b;
    if (o.backend == "http") {
        if (o.backend_config.empty())
            throw std::invalid_argument("--backend http requires --backend-config");
        auto cfg = backends::HttpBackendConfig::from_file(o.backend_config);
        b.chat = std::make_unique<backends::HttpChatClient>(cfg);
        b.ranker = std::make_unique<backends::RemoteRanker>(*b.chat, tpl, cfg.model);
        b.generator = std::make_unique<backends::RemoteAnswerGenerator>(*b.chat, cfg.model);
        b.fingerprint = cfg.fingerprint();
        return b;
    }
    if (!o.labels_path.empty())
        b.labels = backends::RelevanceLabels::load(o.labels_path);
    else if (need_ranker)
        throw std::invalid_argument("the mock ranker requires --labels");
    b.ranker = std::make_unique<backends::MockOracleRanker>(b.labels, o.noise, o.seed);
    backends::MockGeneratorConfig gen;
    gen.robustness = o.robustness;
    gen.knowledge_rate = o.knowledge_rate;
    gen.seed = o.seed;
    b.generator = std::make_unique<backends::MockAnswerGenerator>(
        gen, b.labels, backends::gold_answer_texts(instances));
    std::ostringstream fp;
    fp << "mock;noise=" << o.noise << ";robustness=" << o.robustness
       << ";knowledge_rate=" << o.knowledge_rate;
    b.fingerprint = fp.str();
    return b;
}

RunManifest start_manifest(const std::string& sub, const json& config, const CommonOpts& o,
                           const std::string& template_hash, const std::string& fingerprint) {
    RunManifest m;
    m.subcommand = sub;
    m.config = config;
    m.seed = o.seed;
    m.template_hash = template_hash;
    m.backend = fingerprint;
    m.version = build_version();
    m.started_at = utc_now_iso8601();
    return m;
}

json common_config(const CommonOpts& o) {
    return json{{"dataset", o.dataset},
                {"format", o.format},
                {"template", o.template_path},
                {"backend", o.backend},
                {"backend_config", o.backend_config},
                {"labels", o.labels_path},
                {"policy", o.policy},
                {"noise", o.noise},
                {"robustness", o.robustness},
                {"knowledge_rate", o.knowledge_rate},
                {"seed", o.seed},
                {"threads", o.threads},
                {"max_passages", o.max_passages}};
}

int cmd_rank(const CommonOpts& o, bool dump_template) {
    protocol::PromptTemplate tpl = load_template(o);
    if (dump_template) {
        std::cout << tpl.to_json_string() << "\n";
        return kExitOk;
    }
    if (o.dataset.empty()) throw std::invalid_argument("--dataset is required");

    auto loaded = load_dataset(o.dataset, format_of(o.format), o.max_passages);
    Bundle bundle = make_bundle(o, tpl, loaded.instances, true);
    auto policy = protocol::policy_from_string(o.policy);

    json config = common_config(o);
    RunManifest manifest =
        start_manifest("rank", config, o, protocol::template_hash(tpl), bundle.fingerprint);
    fs::path dir = make_run_dir(o.out, "rank", config);

    struct Row {
        json doc;
        bool failed = false;
    };
    std::vector<Row> rows(loaded.instances.size());
    parallel_for(loaded.instances.size(), o.threads, [&](std::size_t i) {
        const CandidateSet& cs = loaded.instances[i].candidate_set;
        Row& row = rows[i];
        try {
            auto raw = bundle.ranker->rank_raw(cs);
            Selection sel = protocol::parse_selection(raw.text, cs.m(), policy);
            row.doc = json{{"query_id", cs.query.id},
                           {"ordinals", sel.ordinals},
                           {"raw", raw.text},
                           {"repair_notes", sel.repair_notes}};
        } catch (const std::exception& e) {
            row.failed = true;
            row.doc = json{{"query_id", cs.query.id}, {"error", e.what()}};
        }
    });

    std::ofstream out(dir / "selections.jsonl");
    if (!out) throw std::runtime_error("cannot write selections file");
    int failures = 0;
    for (const auto& row : rows) {
        out << row.doc.dump() << "\n";
        if (row.failed) ++failures;
    }
    manifest.finished_at = utc_now_iso8601();
    manifest.save(dir / "manifest.json");
    std::cout << "ranked " << loaded.instances.size() << " queries (" << failures
              << " failed) -> " << (dir / "selections.jsonl").string() << "\n";
    if (failures * 10 > static_cast<int>(loaded.instances.size())) {
        std::cerr << "error: more than 10% of queries failed\n";
        return kExitRunQuality;
    }
    return kExitOk;
}

int cmd_evaluate(const CommonOpts& o, const std::string& grid, int recall_cap,
                 const std::string& entail_kind) {
    auto strategies = pipeline::parse_grid(grid, o.max_passages);
    auto loaded = load_dataset(o.dataset, format_of(o.format), o.max_passages);
    protocol::PromptTemplate tpl = load_template(o);
    bool need_ranker = std::any_of(strategies.begin(), strategies.end(), [](const auto& s) {
        return s.kind != pipeline::StrategyKind::vanilla;
    });
    Bundle bundle = make_bundle(o, tpl, loaded.instances, need_ranker);

    metrics::EntailmentBackend entail = metrics::EntailmentBackend::lexical();
    if (entail_kind == "llm_judge") {
        if (!bundle.chat)
            throw std::invalid_argument("--entail llm_judge requires --backend http");
        entail = metrics::EntailmentBackend::llm_judge(
            *bundle.chat, backends::HttpBackendConfig::from_file(o.backend_config).model);
    }

    json config = common_config(o);
    config["grid"] = grid;
    config["recall_cap"] = recall_cap;
    config["entail"] = entail_kind;
    RunManifest manifest =
        start_manifest("evaluate", config, o, protocol::template_hash(tpl), bundle.fingerprint);
    fs::path dir = make_run_dir(o.out, "evaluate", config);

    pipeline::RunOptions opts;
    opts.policy = protocol::policy_from_string(o.policy);
    opts.threads = o.threads;

    std::optional<int> cap;
    if (recall_cap > 0) cap = recall_cap;

    std::vector<metrics::StrategyReport> reports;
    bool quality_abort = false;
    for (const auto& strategy : strategies) {
        auto runs = pipeline::run_strategy(loaded.instances, strategy, bundle.ranker.get(),
                                           *bundle.generator, opts);
        pipeline::write_run_log(runs, dir / ("runs-" + strategy.descriptor() + ".jsonl"));
        auto report = metrics::score_runs(loaded.instances, runs, entail, cap);
        report.strategy = strategy.descriptor();
        if (report.failure_count * 10 > static_cast<int>(runs.size())) quality_abort = true;
        reports.push_back(std::move(report));
    }

    metrics::write_report_json(reports, dir / "report.json");
    metrics::write_report_csv(reports, dir / "report.csv");
    manifest.finished_at = utc_now_iso8601();
    manifest.save(dir / "manifest.json");
    std::cout << metrics::format_report_table(reports);
    std::cout << "report -> " << (dir / "report.json").string() << "\n";
    if (quality_abort) {
        std::cerr << "error: a strategy exceeded the 10% query-failure threshold\n";
        return kExitRunQuality;
    }
    return kExitOk;
}

int cmd_oracle(const CommonOpts& o, int max_k) {
    auto loaded = load_dataset(o.dataset, format_of(o.format), o.max_passages);
    protocol::PromptTemplate tpl = load_template(o);
    Bundle bundle = make_bundle(o, tpl, loaded.instances, true);
    auto policy = protocol::policy_from_string(o.policy);
    auto entail = metrics::EntailmentBackend::lexical();

    json config = common_config(o);
    config["max_k"] = max_k;
    RunManifest manifest =
        start_manifest("oracle", config, o, protocol::template_hash(tpl), bundle.fingerprint);
    fs::path dir = make_run_dir(o.out, "oracle", config);

    // Rank each query once; every k reuses prefixes of the same permutation.
    std::size_t n = loaded.instances.size();
    std::vector<std::vector<int>> orders(n);
    std::vector<long> rank_prompt_tokens(n, 0), rank_completion_tokens(n, 0);
    std::vector<std::string> rank_errors(n);
    parallel_for(n, o.threads, [&](std::size_t i) {
        const CandidateSet& cs = loaded.instances[i].candidate_set;
        try {
            auto raw = bundle.ranker->rank_raw(cs);
            rank_prompt_tokens[i] = raw.prompt_tokens;
            rank_completion_tokens[i] = raw.completion_tokens;
            Selection sel = protocol::parse_selection(raw.text, cs.m(), policy);
            orders[i] = pipeline::reranked_order(sel.ordinals, cs.m());
        } catch (const std::exception& e) {
            rank_errors[i] = e.what();
        }
    });

    std::map<int, std::vector<metrics::QueryScore>> scores_by_k;
    json per_k_means = json::object();
    for (int k = 0; k <= max_k; ++k) {
        std::vector<pipeline::QueryRun> runs(n);
        parallel_for(n, o.threads, [&](std::size_t i) {
            const EvalInstance& inst = loaded.instances[i];
            pipeline::QueryRun& run = runs[i];
            run.query_id = inst.candidate_set.query.id;
            run.strategy = "rerank-" + std::to_string(k);
            if (!rank_errors[i].empty()) {
                run.failed = true;
                run.fail_reason = rank_errors[i];
                return;
            }
            int take = std::min<int>(k, static_cast<int>(orders[i].size()));
            run.context_ordinals.assign(orders[i].begin(), orders[i].begin() + take);
            run.prompt_tokens = rank_prompt_tokens[i];
            run.completion_tokens = rank_completion_tokens[i];
            try {
                auto gen =
                    bundle.generator->generate(inst.candidate_set, run.context_ordinals,
                                               inst.gold.kind);
                run.answer_text = gen.answer;
                run.prompt_tokens += gen.prompt_tokens;
                run.completion_tokens += gen.completion_tokens;
            } catch (const backends::BackendError& e) {
                run.failed = true;
                run.fail_reason = e.what();
            }
        });
        auto report = metrics::score_runs(loaded.instances, runs, entail);
        per_k_means[std::to_string(k)] = report.mean_primary;
        scores_by_k[k] = std::move(report.per_query);
    }

    double per_query = metrics::oracle_best_k(scores_by_k, metrics::OracleMode::per_query);
    double per_dataset = metrics::oracle_best_k(scores_by_k, metrics::OracleMode::per_dataset);

    json doc{{"oracle_per_query", per_query},
             {"oracle_per_dataset", per_dataset},
             {"per_k_mean", per_k_means},
             {"max_k", max_k}};
    std::ofstream out(dir / "oracle.json");
    if (!out) throw std::runtime_error("cannot write oracle report");
    out << doc.dump(2) << "\n";
    manifest.finished_at = utc_now_iso8601();
    manifest.save(dir / "manifest.json");
    std::cout << "oracle per_query=" << per_query << " per_dataset=" << per_dataset << " -> "
              << (dir / "oracle.json").string() << "\n";
    return kExitOk;
}

int cmd_distill_prep(const CommonOpts& o, int stage, const std::string& embeddings_path, int k,
                     int samples, const std::string& allocation, const std::string& within,
                     const std::string& augment) {
    auto loaded = load_dataset(o.dataset, format_of(o.format), o.max_passages);
    protocol::PromptTemplate tpl = load_template(o);
    Bundle bundle = make_bundle(o, tpl, loaded.instances, true);

    json config = common_config(o);
    config["stage"] = stage;
    config["embeddings"] = embeddings_path;
    config["k"] = k;
    config["samples"] = samples;
    config["allocation"] = allocation;
    config["within"] = within;
    config["augment"] = augment;
    RunManifest manifest = start_manifest("distill-prep", config, o, protocol::template_hash(tpl),
                                          bundle.fingerprint);
    fs::path dir = make_run_dir(o.out, "distill", config);

    distill::BuildResult built;
    if (stage == 1) {
        built = distill::build_stage1(loaded.instances, *bundle.ranker, tpl, o.threads);
    } else {
        if (embeddings_path.empty())
            throw std::invalid_argument("stage 2 requires --embeddings (query vectors JSONL)");
        auto store = backends::FileEmbeddingStore::load(embeddings_path);
        std::vector<std::vector<float>> points;
        std::vector<std::string> ids;
        points.reserve(loaded.instances.size());
        for (const auto& inst : loaded.instances) {
            ids.push_back(inst.candidate_set.query.id);
            points.push_back(store.lookup(inst.candidate_set.query.id));
        }
        distill::ClusteringConfig ccfg;
        ccfg.k = k;
        ccfg.seed = o.seed;
        auto clustered = distill::kmeans(points, ccfg, o.threads);

        distill::SamplingPlan plan;
        plan.total_samples = samples;
        plan.allocation = distill::allocation_from_string(allocation);
        plan.within_cluster = distill::within_cluster_from_string(within);
        auto picked = distill::sample_representatives(ids, clustered.assignments,
                                                      clustered.point_dist2, k, plan, o.seed);

        std::set<std::string> picked_set(picked.begin(), picked.end());
        std::vector<EvalInstance> sampled;
        sampled.reserve(picked.size());
        for (const auto& inst : loaded.instances)
            if (picked_set.count(inst.candidate_set.query.id)) sampled.push_back(inst);

        built = distill::build_stage2(sampled, *bundle.ranker, tpl,
                                      distill::augmentations_from_string(augment), o.seed,
                                      o.threads);
    }

    auto training_manifest =
        distill::emit_training_file(built.examples, built.dropped, tpl, o.seed, dir / "train.jsonl");
    {
        std::ofstream out(dir / "training_manifest.json");
        if (!out) throw std::runtime_error("cannot write training manifest");
        out << training_manifest.to_json_string() << "\n";
    }
    manifest.finished_at = utc_now_iso8601();
    manifest.save(dir / "manifest.json");
    std::cout << "stage " << stage << ": " << built.examples.size() << " examples ("
              << built.dropped << " dropped, " << training_manifest.source_queries
              << " source queries) -> " << (dir / "train.jsonl").string() << "\n";
    return kExitOk;
}

int cmd_synth_bench(const CommonOpts& o, synthbench::SynthConfig cfg, double weak_robustness,
                    double strong_robustness, const std::string& grid, bool emit_corpus) {
    cfg.seed = o.seed;
    auto synth = synthbench::generate_synth(cfg);
    auto strategies = pipeline::parse_grid(grid, cfg.m);

    backends::MockGeneratorConfig weak{weak_robustness, o.knowledge_rate, o.seed};
    backends::MockGeneratorConfig strong{strong_robustness, o.knowledge_rate, o.seed};

    json config{{"queries", cfg.num_queries},
                {"m", cfg.m},
                {"relevant", cfg.relevant_per_query},
                {"p0", cfg.p_zero_relevant},
                {"overlap", cfg.overlap == synthbench::SynthConfig::Overlap::high ? "high" : "low"},
                {"weak_robustness", weak_robustness},
                {"strong_robustness", strong_robustness},
                {"knowledge_rate", o.knowledge_rate},
                {"grid", grid},
                {"seed", o.seed},
                {"threads", o.threads}};
    RunManifest manifest = start_manifest("synth-bench", config, o, "", "mock-shift");
    fs::path dir = make_run_dir(o.out, "synth", config);

    auto report = synthbench::run_shift_experiment(synth, weak, strong, strategies, o.seed,
                                                   o.threads);
    synthbench::write_shift_report_json(report, dir / "shift_report.json");
    synthbench::write_shift_report_csv(report, dir / "shift_report.csv");
    if (emit_corpus) {
        save_dataset_native(synth.instances, dir / "corpus.jsonl");
        synth.labels.save(dir / "labels.jsonl");
    }
    manifest.finished_at = utc_now_iso8601();
    manifest.save(dir / "manifest.json");
    std::cout << synthbench::format_shift_table(report);
    std::cout << "report -> " << (dir / "shift_report.json").string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive listwise reranking harness for retrieval-augmented QA"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read default flag values from a TOML file");

    CommonOpts rank_o, eval_o, oracle_o, distill_o, synth_o;

    auto* rank = app.add_subcommand("rank", "Run the ranker over a dataset, emit selections");
    bool dump_template = false;
    add_dataset_flags(rank, rank_o, false);
    add_backend_flags(rank, rank_o, false);
    rank->add_option("--template", rank_o.template_path, "Prompt template JSON file");
    rank->add_option("--policy", rank_o.policy, "Malformed-output policy")
        ->check(CLI::IsMember({"error", "fallback", "empty"}))
        ->capture_default_str();
    rank->add_option("--out", rank_o.out, "Output directory");
    rank->add_flag("--dump-template", dump_template, "Print the default prompt template and exit");

    auto* eval = app.add_subcommand("evaluate", "Run a strategy grid and score it");
    std::string grid = "vanilla:0,1,3,5,10 rerank:1,3,5,10 adarank";
    int recall_cap = 0;
    std::string entail_kind = "lexical";
    add_dataset_flags(eval, eval_o, true);
    add_backend_flags(eval, eval_o, true);
    eval->add_option("--template", eval_o.template_path, "Prompt template JSON file");
    eval->add_option("--policy", eval_o.policy, "Malformed-output policy")
        ->check(CLI::IsMember({"error", "fallback", "empty"}))
        ->capture_default_str();
    eval->add_option("--grid", grid, "Strategy grid, e.g. \"vanilla:0,5 rerank:5 adarank\"")
        ->capture_default_str();
    eval->add_option("--recall-cap", recall_cap, "Cap list-answer recall denominator (0 = none)")
        ->check(CLI::Range(0, 1000))
        ->capture_default_str();
    eval->add_option("--entail", entail_kind, "Claim entailment judge")
        ->check(CLI::IsMember({"lexical", "llm_judge"}))
        ->capture_default_str();
    eval->add_option("--out", eval_o.out, "Output directory");

    auto* oracle = app.add_subcommand("oracle", "Rerank once, score every k, report the bound");
    int max_k = 10;
    add_dataset_flags(oracle, oracle_o, true);
    add_backend_flags(oracle, oracle_o, true);
    oracle->add_option("--template", oracle_o.template_path, "Prompt template JSON file");
    oracle->add_option("--policy", oracle_o.policy, "Malformed-output policy")
        ->check(CLI::IsMember({"error", "fallback", "empty"}))
        ->capture_default_str();
    oracle->add_option("--max-k", max_k, "Largest context size to test")
        ->check(CLI::Range(0, 10))
        ->capture_default_str();
    oracle->add_option("--out", oracle_o.out, "Output directory");

    auto* dist = app.add_subcommand("distill-prep", "Build distillation training data");
    int stage = 1, cluster_k = 20, samples = 5000;
    std::string embeddings_path, allocation = "proportional", within = "nearest_centroid";
    std::string augment = "none";
    add_dataset_flags(dist, distill_o, true);
    add_backend_flags(dist, distill_o, false);
    dist->add_option("--stage", stage, "Distillation stage")
        ->check(CLI::IsMember({1, 2}))
        ->required();
    dist->add_option("--template", distill_o.template_path, "Prompt template JSON file");
    dist->add_option("--embeddings", embeddings_path, "Query embedding JSONL (stage 2)");
    dist->add_option("--k", cluster_k, "k-means cluster count")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    dist->add_option("--samples", samples, "Stage-2 representative sample size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    dist->add_option("--allocation", allocation, "Per-cluster sample allocation")
        ->check(CLI::IsMember({"proportional", "uniform", "uniform_per_cluster"}))
        ->capture_default_str();
    dist->add_option("--within", within, "Within-cluster pick rule")
        ->check(CLI::IsMember({"nearest", "nearest_centroid", "random"}))
        ->capture_default_str();
    dist->add_option("--augment", augment, "Comma list: shuffle,irrelevant (or none)")
        ->capture_default_str();
    dist->add_option("--out", distill_o.out, "Output directory");

    auto* synth = app.add_subcommand("synth-bench", "Generate synthetic data, run the shift experiment");
    synthbench::SynthConfig scfg;
    double weak_robustness = 0.85, strong_robustness = 0.999;
    std::string synth_grid = "vanilla:10 adarank";
    std::string overlap = "low";
    bool emit_corpus = false;
    synth->add_option("--queries", scfg.num_queries, "Number of synthetic queries")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--m", scfg.m, "Passages per query")
        ->check(CLI::Range(1, 10))
        ->capture_default_str();
    synth->add_option("--relevant", scfg.relevant_per_query, "Relevant passages per query")
        ->check(CLI::Range(0, 10))
        ->capture_default_str();
    synth->add_option("--p0", scfg.p_zero_relevant, "Probability of zero relevant passages")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    synth->add_option("--overlap", overlap, "Distractor lexical overlap")
        ->check(CLI::IsMember({"low", "high"}))
        ->capture_default_str();
    synth->add_option("--weak-robustness", weak_robustness, "Weak generator robustness")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    synth->add_option("--strong-robustness", strong_robustness, "Strong generator robustness")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    synth->add_option("--knowledge-rate", synth_o.knowledge_rate,
                      "Closed-book success probability")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    synth->add_option("--grid", synth_grid, "Strategy grid (must include vanilla:10 and adarank)")
        ->capture_default_str();
    synth->add_option("--seed", synth_o.seed, "Deterministic seed")->capture_default_str();
    synth->add_option("--threads", synth_o.threads, "Worker threads")
        ->check(CLI::Range(1, 256))
        ->capture_default_str();
    synth->add_flag("--emit-corpus", emit_corpus, "Also write corpus.jsonl and labels.jsonl");
    synth->add_option("--out", synth_o.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (rank->parsed()) return cmd_rank(rank_o, dump_template);
        if (eval->parsed()) return cmd_evaluate(eval_o, grid, recall_cap, entail_kind);
        if (oracle->parsed()) return cmd_oracle(oracle_o, max_k);
        if (dist->parsed()) {
            scfg.overlap = synthbench::SynthConfig::Overlap::low;
            return cmd_distill_prep(distill_o, stage, embeddings_path, cluster_k, samples,
                                    allocation, within, augment);
        }
        if (synth->parsed()) {
            scfg.overlap = synthbench::overlap_from_string(overlap);
            return cmd_synth_bench(synth_o, scfg, weak_robustness, strong_robustness, synth_grid,
                                   emit_corpus);
        }
    } catch (const distill::DropRateAbort& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRunQuality;
    } catch (const backends::BackendUnavailable& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const DatasetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitUsage;
}
