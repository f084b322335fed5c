#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adarank/backends.hpp"
#include "adarank/core.hpp"
#include "adarank/pipeline.hpp"

namespace adarank::synthbench {

struct SynthConfig {
    int num_queries = 2000;
    int m = 10;
    int relevant_per_query = 2;
    double p_zero_relevant = 0.0;  // probability a query gets no relevant passage
    enum class Overlap { low, high } overlap = Overlap::low;
    std::uint64_t seed = 0;

    void validate() const;
};

SynthConfig::Overlap overlap_from_string(std::string_view s);

struct SynthResult {
    std::vector<EvalInstance> instances;  // gold kind short_answers, singleton
    backends::RelevanceLabels labels;     // consistent with construction
};

// Templated natural-language-like corpus. Every query owns a unique answer
// token that appears in exactly its relevant passages; distractors share
// topic vocabulary at the configured overlap level. Deterministic per seed.
SynthResult generate_synth(const SynthConfig& cfg);

struct ShiftRow {
    std::string generator;  // "weak" | "strong"
    std::string strategy;
    double accuracy = 0.0;  // percent
    double mean_context_size = 0.0;
    double mean_prompt_tokens = 0.0;
};

struct ShiftReport {
    std::vector<ShiftRow> rows;
    // adarank minus vanilla-10, percentage points, per generator.
    double weak_delta_acc = 0.0;
    double strong_delta_acc = 0.0;
    // adarank mean context size over vanilla-10's, per generator.
    double weak_context_ratio = 0.0;
    double strong_context_ratio = 0.0;
};

// Runs every strategy under both mock generators with a noise-free oracle
// ranker. Strategies must include vanilla-10 and adarank, which anchor the
// headline deltas.
ShiftReport run_shift_experiment(const SynthResult& synth,
                                 const backends::MockGeneratorConfig& weak,
                                 const backends::MockGeneratorConfig& strong,
                                 const std::vector<pipeline::Strategy>& strategies,
                                 std::uint64_t ranker_seed, int threads = 1);

void write_shift_report_json(const ShiftReport& report, const std::filesystem::path& path);
void write_shift_report_csv(const ShiftReport& report, const std::filesystem::path& path);
std::string format_shift_table(const ShiftReport& report);

}  // namespace adarank::synthbench
