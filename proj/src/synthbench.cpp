#include "adarank/synthbench.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>
#include <utility>

#include <json.hpp>

#include "adarank/metrics.hpp"
#include "adarank/rng.hpp"

namespace adarank::synthbench {

using nlohmann::json;

void SynthConfig::validate() const {
    if (num_queries < 1) throw std::invalid_argument("synth: num_queries must be >= 1");
    if (m < 1 || m > 10) throw std::invalid_argument("synth: m must be in [1,10]");
    if (relevant_per_query < 0 || relevant_per_query > m)
        throw std::invalid_argument("synth: relevant_per_query must be in [0, m]");
    if (p_zero_relevant < 0.0 || p_zero_relevant > 1.0)
        throw std::invalid_argument("synth: p_zero_relevant must be in [0,1]");
}

SynthConfig::Overlap overlap_from_string(std::string_view s) {
    if (s == "low") return SynthConfig::Overlap::low;
    if (s == "high") return SynthConfig::Overlap::high;
    throw std::invalid_argument("unknown overlap level: " + std::string(s));
}

namespace {

struct Topic {
    const char* noun;
    const char* words[6];
};

// Small controlled vocabulary; distractor overlap comes from drawing filler
// words inside or outside the query's topic.
const Topic kTopics[] = {
    {"beekeeping", {"hive", "apiary", "nectar", "swarm", "comb", "forage"}},
    {"railway", {"signal", "gauge", "ballast", "junction", "siding", "timetable"}},
    {"pottery", {"kiln", "glaze", "wheel", "clay", "bisque", "slip"}},
    {"sailing", {"rigging", "keel", "mast", "halyard", "tiller", "jib"}},
    {"astronomy", {"nebula", "transit", "parallax", "aperture", "zenith", "occultation"}},
    {"weaving", {"loom", "warp", "weft", "shuttle", "heddle", "selvage"}},
    {"cartography", {"meridian", "contour", "datum", "projection", "legend", "scale"}},
    {"botany", {"stamen", "phloem", "cultivar", "rhizome", "sepal", "taproot"}},
    {"chess", {"gambit", "endgame", "zugzwang", "fianchetto", "tempo", "castling"}},
    {"mining", {"adit", "lode", "gangue", "stope", "winze", "assay"}},
};
constexpr std::size_t kTopicCount = sizeof(kTopics) / sizeof(kTopics[0]);

std::string pad6(int v) {
    std::ostringstream os;
    os << std::setw(6) << std::setfill('0') << v;
    return os.str();
}

std::string filler_sentence(const Topic& topic, DetRng& rng) {
    const char* a = topic.words[rng.uniform_int(6)];
    const char* b = topic.words[rng.uniform_int(6)];
    const char* c = topic.words[rng.uniform_int(6)];
    std::ostringstream os;
    os << "The " << a << " beside the " << b << " was recorded next to the " << c << ".";
    return os.str();
}

}  // namespace

SynthResult generate_synth(const SynthConfig& cfg) {
    cfg.validate();
    SynthResult result;
    result.instances.reserve(static_cast<std::size_t>(cfg.num_queries));

    for (int qi = 0; qi < cfg.num_queries; ++qi) {
        std::string qid = "synth-" + pad6(qi);
        DetRng rng(cfg.seed, "synth:" + qid);

        std::size_t t = rng.uniform_int(kTopicCount);
        const Topic& topic = kTopics[t];
        std::string answer = "zq" + pad6(qi);

        int relevant = rng.bernoulli(cfg.p_zero_relevant) ? 0 : cfg.relevant_per_query;

        CandidateSet cs;
        cs.query.id = qid;
        cs.query.text = "What is the registry code for " + std::string(topic.noun) + " site " +
                        std::to_string(qi) + "?";

        struct Draft {
            bool relevant;
            std::string title;
            std::string text;
        };
        std::vector<Draft> drafts;
        for (int r = 0; r < relevant; ++r) {
            std::ostringstream text;
            text << "The " << topic.noun << " survey lists site " << qi << " with registry code "
                 << answer << ". " << filler_sentence(topic, rng) << " "
                 << filler_sentence(topic, rng);
            drafts.push_back({true,
                              std::string(topic.noun) + " survey volume " +
                                  std::to_string(1 + rng.uniform_int(9)),
                              text.str()});
        }
        for (int dcount = cfg.m - relevant; dcount > 0; --dcount) {
            std::ostringstream text;
            if (cfg.overlap == SynthConfig::Overlap::high) {
                // Same topic, same phrasing, a different site and code prefix.
                int other = qi + 1 + static_cast<int>(rng.uniform_int(50));
                text << "The " << topic.noun << " survey lists site " << other
                     << " with registry code xk" << pad6(other) << ". "
                     << filler_sentence(topic, rng) << " " << filler_sentence(topic, rng);
                drafts.push_back({false,
                                  std::string(topic.noun) + " survey volume " +
                                      std::to_string(1 + rng.uniform_int(9)),
                                  text.str()});
            } else {
                std::size_t t2 = (t + 1 + rng.uniform_int(kTopicCount - 1)) % kTopicCount;
                const Topic& off = kTopics[t2];
                text << "Notes on " << off.noun << ". " << filler_sentence(off, rng) << " "
                     << filler_sentence(off, rng);
                drafts.push_back({false,
                                  std::string(off.noun) + " field notes " +
                                      std::to_string(1 + rng.uniform_int(9)),
                                  text.str()});
            }
        }
        rng.shuffle(drafts);

        auto& row = result.labels.grades[qid];
        for (std::size_t p = 0; p < drafts.size(); ++p) {
            Passage pass;
            pass.ordinal = static_cast<int>(p) + 1;
            pass.doc_id = qid + "-d" + std::to_string(p + 1);
            pass.title = drafts[p].title;
            pass.text = drafts[p].text;
            cs.passages.push_back(std::move(pass));
            if (drafts[p].relevant) row[static_cast<int>(p) + 1] = 1;
        }

        EvalInstance inst;
        inst.candidate_set = std::move(cs);
        inst.gold.kind = GoldKind::short_answers;
        inst.gold.items = {{answer}};
        result.instances.push_back(std::move(inst));
    }
    return result;
}

ShiftReport run_shift_experiment(const SynthResult& synth,
                                 const backends::MockGeneratorConfig& weak,
                                 const backends::MockGeneratorConfig& strong,
                                 const std::vector<pipeline::Strategy>& strategies,
                                 std::uint64_t ranker_seed, int threads) {
    if (strategies.empty()) throw std::invalid_argument("shift experiment: no strategies");
    bool has_vanilla10 = false, has_adarank = false;
    for (const auto& s : strategies) {
        if (s.descriptor() == "vanilla-10") has_vanilla10 = true;
        if (s.kind == pipeline::StrategyKind::adarank) has_adarank = true;
    }
    if (!has_vanilla10 || !has_adarank)
        throw std::invalid_argument("shift experiment requires vanilla-10 and adarank strategies");

    auto gold_answers = backends::gold_answer_texts(synth.instances);
    backends::MockOracleRanker ranker(synth.labels, 0.0, ranker_seed);
    auto entail = metrics::EntailmentBackend::lexical();

    ShiftReport report;
    struct Anchor {
        double acc = 0.0, ctx = 0.0;
    };
    std::map<std::string, std::map<std::string, Anchor>> anchors;

    const std::pair<const char*, const backends::MockGeneratorConfig*> generators[] = {
        {"weak", &weak}, {"strong", &strong}};
    for (const auto& [name, cfg] : generators) {
        backends::MockAnswerGenerator gen(*cfg, synth.labels, gold_answers);
        for (const auto& strategy : strategies) {
            pipeline::RunOptions opts;
            opts.threads = threads;
            auto runs = pipeline::run_strategy(synth.instances, strategy, &ranker, gen, opts);
            auto scored = metrics::score_runs(synth.instances, runs, entail);

            ShiftRow row;
            row.generator = name;
            row.strategy = strategy.descriptor();
            row.accuracy = scored.mean_primary;
            row.mean_context_size = scored.mean_context_size;
            row.mean_prompt_tokens = scored.mean_prompt_tokens;
            anchors[name][row.strategy] = {row.accuracy, row.mean_context_size};
            report.rows.push_back(std::move(row));
        }
    }

    auto delta = [&](const char* gen) {
        const auto& a = anchors[gen].at("adarank");
        const auto& v = anchors[gen].at("vanilla-10");
        return std::pair<double, double>{a.acc - v.acc, v.ctx > 0 ? a.ctx / v.ctx : 0.0};
    };
    std::tie(report.weak_delta_acc, report.weak_context_ratio) = delta("weak");
    std::tie(report.strong_delta_acc, report.strong_context_ratio) = delta("strong");
    return report;
}

namespace {

json report_json(const ShiftReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"generator", r.generator},
                        {"strategy", r.strategy},
                        {"accuracy", r.accuracy},
                        {"mean_context_size", r.mean_context_size},
                        {"mean_prompt_tokens", r.mean_prompt_tokens}});
    return json{{"rows", std::move(rows)},
                {"deltas",
                 {{"weak",
                   {{"delta_acc_adarank_vs_vanilla10", report.weak_delta_acc},
                    {"context_ratio_adarank_vs_vanilla10", report.weak_context_ratio}}},
                  {"strong",
                   {{"delta_acc_adarank_vs_vanilla10", report.strong_delta_acc},
                    {"context_ratio_adarank_vs_vanilla10", report.strong_context_ratio}}}}}};
}

std::string fmt2(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

}  // namespace

void write_shift_report_json(const ShiftReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write shift report: " + path.string());
    out << report_json(report).dump(2) << "\n";
}

void write_shift_report_csv(const ShiftReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write shift report: " + path.string());
    out << "generator,strategy,accuracy,mean_context_size,mean_prompt_tokens\n";
    for (const auto& r : report.rows)
        out << r.generator << "," << r.strategy << "," << fmt2(r.accuracy) << ","
            << fmt2(r.mean_context_size) << "," << fmt2(r.mean_prompt_tokens) << "\n";
}

std::string format_shift_table(const ShiftReport& report) {
    std::ostringstream os;
    os << std::left << std::setw(10) << "generator" << std::setw(14) << "strategy" << std::right
       << std::setw(10) << "accuracy" << std::setw(12) << "mean_ctx" << std::setw(14)
       << "prompt_tok" << "\n";
    os << std::string(60, '-') << "\n";
    for (const auto& r : report.rows) {
        os << std::left << std::setw(10) << r.generator << std::setw(14) << r.strategy
           << std::right << std::setw(10) << fmt2(r.accuracy) << std::setw(12)
           << fmt2(r.mean_context_size) << std::setw(14) << fmt2(r.mean_prompt_tokens) << "\n";
    }
    os << "\n";
    os << "weak:   delta_acc(adarank - vanilla-10) = " << fmt2(report.weak_delta_acc)
       << " pts, context ratio = " << fmt2(report.weak_context_ratio) << "\n";
    os << "strong: delta_acc(adarank - vanilla-10) = " << fmt2(report.strong_delta_acc)
       << " pts, context ratio = " << fmt2(report.strong_context_ratio) << "\n";
    return os.str();
}

}  // namespace adarank::synthbench
