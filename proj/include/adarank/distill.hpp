#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adarank/backends.hpp"
#include "adarank/core.hpp"
#include "adarank/protocol.hpp"

namespace adarank::distill {

struct ClusteringConfig {
    int k = 20;
    int max_iters = 100;
    double tol = 1e-6;  // stop when max centroid displacement drops below this
    std::uint64_t seed = 0;
    enum class Init { kmeans_pp, random } init = Init::kmeans_pp;
};

struct KmeansResult {
    std::vector<int> assignments;     // n entries in [0, k)
    std::vector<float> centroids;     // k rows of d floats
    std::vector<double> point_dist2;  // squared distance to the assigned centroid
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // inertia after each assignment step
    int iterations = 0;
};

// kmeans++ seeding for `cfg.seed`, exposed so an external reimplementation of
// Lloyd can start from the identical initial centroids.
std::vector<float> kmeans_pp_init(const std::vector<std::vector<float>>& points, int k,
                                  std::uint64_t seed);

// Lloyd iterations until the centroids move less than tol or max_iters is
// reached. Centroids are stored as float with double accumulation in the
// means, so reruns agree bit-for-bit regardless of thread count. Empty
// clusters are reseeded to the point currently farthest from its centroid.
KmeansResult kmeans(const std::vector<std::vector<float>>& points, const ClusteringConfig& cfg,
                    int threads = 1);

struct SamplingPlan {
    int total_samples = 5000;
    enum class Allocation { proportional, uniform_per_cluster } allocation =
        Allocation::proportional;
    enum class WithinCluster { nearest_centroid, random } within_cluster =
        WithinCluster::nearest_centroid;
};

SamplingPlan::Allocation allocation_from_string(std::string_view s);
SamplingPlan::WithinCluster within_cluster_from_string(std::string_view s);

// Picks plan.total_samples ids. Proportional allocation floors the exact
// shares and hands remainders to the largest fractional parts (ties by
// cluster index); allocations exceeding a cluster's size spill to the next
// largest cluster with capacity. nearest_centroid takes the smallest
// distances (ties by id); random shuffles per cluster under a derived seed.
// Output is sorted by id.
std::vector<std::string> sample_representatives(const std::vector<std::string>& ids,
                                                const std::vector<int>& assignments,
                                                const std::vector<double>& dist2, int k,
                                                const SamplingPlan& plan, std::uint64_t seed);

struct TrainingExample {
    std::vector<protocol::Message> messages;  // system + user from the rank prompt
    std::string target;                       // selection grammar, canonical form
    int stage = 1;
    std::string source_query_id;
    std::optional<std::string> augmentation_tag;
    int m = 0;  // candidate count the target was rendered against
};

struct BuildResult {
    std::vector<TrainingExample> examples;
    int dropped = 0;  // teacher outputs unparseable under policy=error
};

// Raised when more than 20% of teacher outputs are dropped; the corpus would
// be too skewed to train on.
struct DropRateAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Labels every instance with the teacher, parsing under policy=error and
// re-rendering the target canonically. Unparseable outputs and backend
// failures are dropped and counted; a drop rate above 20% aborts.
BuildResult build_stage1(const std::vector<EvalInstance>& instances,
                         backends::RankerBackend& teacher, const protocol::PromptTemplate& tpl,
                         int threads = 1);

struct Augmentations {
    bool shuffle = false;         // permute candidates, remap target ordinals
    bool all_irrelevant = false;  // keep only unselected candidates, teach "[0]"
};

Augmentations augmentations_from_string(std::string_view csv);

// One shuffle augmentation: permutes the candidates under a seed derived from
// the query id, renumbers them 1..m, and remaps the selection so it names the
// same passages. Returns the permuted set and the remapped selection.
std::pair<CandidateSet, std::vector<int>> shuffle_augment(const CandidateSet& cs,
                                                          const std::vector<int>& ordinals,
                                                          std::uint64_t seed);

// Stage-2 labeling over the sampled instances plus augmentation expansion.
// Augmented examples carry their tag; the all-irrelevant variant is skipped
// for queries whose teacher selected everything.
BuildResult build_stage2(const std::vector<EvalInstance>& instances,
                         backends::RankerBackend& teacher, const protocol::PromptTemplate& tpl,
                         const Augmentations& aug, std::uint64_t seed, int threads = 1);

struct TrainingManifest {
    int total_examples = 0;
    int dropped = 0;
    int source_queries = 0;             // distinct query ids feeding the examples
    std::map<std::string, int> counts;  // "stage1", "stage2", "stage2:shuffle", ...
    std::string template_hash;
    std::uint64_t seed = 0;
    // The fine-tuning recipe downstream trainers should apply, per stage.
    int epochs_per_stage = 3;
    std::string learning_rate = "5e-6";
    std::string lr_schedule = "cosine";
    int batch_size = 64;

    std::string to_json_string() const;
};

// Writes chat-format JSONL: {"messages":[system,user,assistant], "stage": int,
// "tag": str|null}, the assistant message holding the target. Every target is
// re-validated against its own m before writing.
TrainingManifest emit_training_file(const std::vector<TrainingExample>& examples, int dropped,
                                    const protocol::PromptTemplate& tpl, std::uint64_t seed,
                                    const std::filesystem::path& path);

}  // namespace adarank::distill
