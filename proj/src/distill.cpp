#include "adarank/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adarank/parallel.hpp"
#include "adarank/rng.hpp"
#include "adarank/simd_l2.hpp"

namespace adarank::distill {

using nlohmann::json;

namespace {

void check_points(const std::vector<std::vector<float>>& points, int k) {
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (points.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds n=" +
                                    std::to_string(points.size()));
    if (points.front().empty()) throw std::invalid_argument("kmeans: zero-dimensional vectors");
    for (const auto& p : points)
        if (p.size() != points.front().size())
            throw std::invalid_argument("kmeans: non-uniform vector dimensions");
}

std::vector<float> flatten(const std::vector<std::vector<float>>& points) {
    std::vector<float> flat;
    flat.reserve(points.size() * points.front().size());
    for (const auto& p : points) flat.insert(flat.end(), p.begin(), p.end());
    return flat;
}

// Assignment step over all points, chunked across threads. Deterministic for
// any thread count: each point's result is independent.
void assign_all(const std::vector<float>& flat, std::size_t n, std::size_t d,
                const std::vector<float>& centroids, std::size_t k, std::vector<std::uint32_t>& idx,
                std::vector<double>& dist2, int threads) {
    constexpr std::size_t chunk = 512;
    std::size_t blocks = (n + chunk - 1) / chunk;
    parallel_for(blocks, threads, [&](std::size_t b) {
        std::size_t begin = b * chunk;
        std::size_t count = std::min(chunk, n - begin);
        simd::nearest_centroid(flat.data() + begin * d, count, d, centroids.data(), k,
                               idx.data() + begin, dist2.data() + begin);
    });
}

}  // namespace

std::vector<float> kmeans_pp_init(const std::vector<std::vector<float>>& points, int k,
                                  std::uint64_t seed) {
    check_points(points, k);
    std::size_t n = points.size(), d = points.front().size();
    std::vector<float> flat = flatten(points);
    DetRng rng(seed, "kmeans-init");

    std::vector<float> centroids(static_cast<std::size_t>(k) * d);
    std::size_t first = rng.uniform_int(n);
    std::copy_n(flat.data() + first * d, d, centroids.data());

    std::vector<double> best_d2(n);
    for (std::size_t i = 0; i < n; ++i)
        best_d2[i] = simd::squared_l2(flat.data() + i * d, centroids.data(), d);

    for (int c = 1; c < k; ++c) {
        double total = std::accumulate(best_d2.begin(), best_d2.end(), 0.0);
        std::size_t pick;
        if (total <= 0.0) {
            pick = rng.uniform_int(n);  // all remaining mass at distance 0
        } else {
            double r = rng.uniform01() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += best_d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        float* dst = centroids.data() + static_cast<std::size_t>(c) * d;
        std::copy_n(flat.data() + pick * d, d, dst);
        for (std::size_t i = 0; i < n; ++i)
            best_d2[i] = std::min(best_d2[i], simd::squared_l2(flat.data() + i * d, dst, d));
    }
    return centroids;
}

KmeansResult kmeans(const std::vector<std::vector<float>>& points, const ClusteringConfig& cfg,
                    int threads) {
    check_points(points, cfg.k);
    if (cfg.max_iters < 1) throw std::invalid_argument("kmeans: max_iters must be >= 1");
    if (cfg.tol < 0) throw std::invalid_argument("kmeans: tol must be >= 0");

    std::size_t n = points.size(), d = points.front().size();
    std::size_t k = static_cast<std::size_t>(cfg.k);
    std::vector<float> flat = flatten(points);

    std::vector<float> centroids;
    if (cfg.init == ClusteringConfig::Init::kmeans_pp) {
        centroids = kmeans_pp_init(points, cfg.k, cfg.seed);
    } else {
        DetRng rng(cfg.seed, "kmeans-init");
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        centroids.resize(k * d);
        for (std::size_t c = 0; c < k; ++c)
            std::copy_n(flat.data() + order[c] * d, d, centroids.data() + c * d);
    }

    KmeansResult res;
    std::vector<std::uint32_t> idx(n);
    std::vector<double> dist2(n);

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        assign_all(flat, n, d, centroids, k, idx, dist2, threads);
        double inertia = 0.0;
        for (double v : dist2) inertia += v;
        res.inertia_trace.push_back(inertia);
        res.iterations = iter;

        // Means with double accumulators, single pass in point order.
        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            double* row = sums.data() + static_cast<std::size_t>(idx[i]) * d;
            const float* p = flat.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) row[j] += static_cast<double>(p[j]);
            ++counts[idx[i]];
        }
        std::vector<float> next(k * d);
        std::vector<std::size_t> empties;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                empties.push_back(c);
                continue;
            }
            for (std::size_t j = 0; j < d; ++j)
                next[c * d + j] =
                    static_cast<float>(sums[c * d + j] / static_cast<double>(counts[c]));
        }
        if (!empties.empty()) {
            // Reseed each empty cluster to the point currently farthest from
            // its centroid; ties go to the lowest point index.
            std::vector<double> far = dist2;
            for (std::size_t c : empties) {
                std::size_t best = 0;
                for (std::size_t i = 1; i < n; ++i)
                    if (far[i] > far[best]) best = i;
                std::copy_n(flat.data() + best * d, d, next.data() + c * d);
                far[best] = -1.0;
            }
        }

        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            shift = std::max(shift, std::sqrt(simd::squared_l2(centroids.data() + c * d,
                                                               next.data() + c * d, d)));
        centroids = std::move(next);
        if (shift < cfg.tol) break;
    }

    assign_all(flat, n, d, centroids, k, idx, dist2, threads);
    double inertia = 0.0;
    for (double v : dist2) inertia += v;
    res.inertia_trace.push_back(inertia);
    res.inertia = inertia;
    res.centroids = std::move(centroids);
    res.point_dist2 = std::move(dist2);
    res.assignments.assign(idx.begin(), idx.end());
    return res;
}

SamplingPlan::Allocation allocation_from_string(std::string_view s) {
    if (s == "proportional") return SamplingPlan::Allocation::proportional;
    if (s == "uniform" || s == "uniform_per_cluster")
        return SamplingPlan::Allocation::uniform_per_cluster;
    throw std::invalid_argument("unknown allocation: " + std::string(s));
}

SamplingPlan::WithinCluster within_cluster_from_string(std::string_view s) {
    if (s == "nearest" || s == "nearest_centroid") return SamplingPlan::WithinCluster::nearest_centroid;
    if (s == "random") return SamplingPlan::WithinCluster::random;
    throw std::invalid_argument("unknown within-cluster rule: " + std::string(s));
}

std::vector<std::string> sample_representatives(const std::vector<std::string>& ids,
                                                const std::vector<int>& assignments,
                                                const std::vector<double>& dist2, int k,
                                                const SamplingPlan& plan, std::uint64_t seed) {
    std::size_t n = ids.size();
    if (assignments.size() != n || dist2.size() != n)
        throw std::invalid_argument("sample_representatives: input size mismatch");
    if (k < 1) throw std::invalid_argument("sample_representatives: k must be >= 1");
    if (plan.total_samples < 0 || static_cast<std::size_t>(plan.total_samples) > n)
        throw std::invalid_argument("sample_representatives: total_samples outside [0, n]");

    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        int c = assignments[i];
        if (c < 0 || c >= k)
            throw std::invalid_argument("sample_representatives: assignment out of range");
        members[static_cast<std::size_t>(c)].push_back(i);
    }

    int total = plan.total_samples;
    std::vector<int> alloc(static_cast<std::size_t>(k), 0);
    if (plan.allocation == SamplingPlan::Allocation::proportional) {
        std::vector<double> frac(static_cast<std::size_t>(k));
        int given = 0;
        for (int c = 0; c < k; ++c) {
            double share = static_cast<double>(total) * members[c].size() / static_cast<double>(n);
            alloc[c] = static_cast<int>(std::floor(share));
            frac[c] = share - alloc[c];
            given += alloc[c];
        }
        std::vector<int> order(static_cast<std::size_t>(k));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return frac[a] > frac[b]; });
        for (int i = 0; given < total; i = (i + 1) % k) {
            ++alloc[order[static_cast<std::size_t>(i)]];
            ++given;
        }
    } else {
        int base = total / k, rem = total % k;
        for (int c = 0; c < k; ++c) alloc[c] = base + (c < rem ? 1 : 0);
    }

    // Spill allocations that exceed a cluster's size into the next-largest
    // cluster with remaining capacity.
    int excess = 0;
    for (int c = 0; c < k; ++c) {
        int cap = static_cast<int>(members[c].size());
        if (alloc[c] > cap) {
            excess += alloc[c] - cap;
            alloc[c] = cap;
        }
    }
    if (excess > 0) {
        std::vector<int> by_size(static_cast<std::size_t>(k));
        std::iota(by_size.begin(), by_size.end(), 0);
        std::stable_sort(by_size.begin(), by_size.end(), [&](int a, int b) {
            return members[a].size() > members[b].size();
        });
        for (int c : by_size) {
            int room = static_cast<int>(members[c].size()) - alloc[c];
            int take = std::min(room, excess);
            alloc[c] += take;
            excess -= take;
            if (excess == 0) break;
        }
    }

    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(total));
    for (int c = 0; c < k; ++c) {
        auto& m = members[c];
        if (plan.within_cluster == SamplingPlan::WithinCluster::nearest_centroid) {
            std::sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
                if (dist2[a] != dist2[b]) return dist2[a] < dist2[b];
                return ids[a] < ids[b];
            });
        } else {
            std::sort(m.begin(), m.end(),
                      [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
            DetRng rng(seed, "cluster:" + std::to_string(c));
            rng.shuffle(m);
        }
        for (int i = 0; i < alloc[c]; ++i) out.push_back(ids[m[static_cast<std::size_t>(i)]]);
    }
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end())
        throw std::invalid_argument("sample_representatives: duplicate ids in input");
    return out;
}

namespace {

struct Labeled {
    TrainingExample example;
    std::vector<int> ordinals;  // parsed teacher selection, original numbering
};

// Shared by both stages: teacher-label each instance under policy=error,
// dropping unparseable outputs and backend failures.
std::pair<std::vector<std::optional<Labeled>>, int> label_all(
    const std::vector<EvalInstance>& instances, backends::RankerBackend& teacher,
    const protocol::PromptTemplate& tpl, int stage, int threads) {
    std::vector<std::optional<Labeled>> labeled(instances.size());
    parallel_for(instances.size(), threads, [&](std::size_t i) {
        const CandidateSet& cs = instances[i].candidate_set;
        try {
            auto raw = teacher.rank_raw(cs);
            Selection sel = protocol::parse_selection(raw.text, cs.m(),
                                                      protocol::MalformedPolicy::error);
            Labeled lab;
            lab.example.messages = protocol::build_rank_prompt(cs, tpl);
            lab.example.target = protocol::render_selection(sel.ordinals);
            lab.example.stage = stage;
            lab.example.source_query_id = cs.query.id;
            lab.example.m = cs.m();
            lab.ordinals = sel.ordinals;
            labeled[i] = std::move(lab);
        } catch (const protocol::ParseFailure&) {
        } catch (const backends::BackendError&) {
        }
    });
    int dropped = 0;
    for (const auto& l : labeled)
        if (!l) ++dropped;
    if (dropped * 5 > static_cast<int>(instances.size()))
        throw DropRateAbort("teacher drop rate " + std::to_string(dropped) + "/" +
                            std::to_string(instances.size()) +
                            " exceeds 20%; aborting distillation");
    return {std::move(labeled), dropped};
}

}  // namespace

BuildResult build_stage1(const std::vector<EvalInstance>& instances,
                         backends::RankerBackend& teacher, const protocol::PromptTemplate& tpl,
                         int threads) {
    auto [labeled, dropped] = label_all(instances, teacher, tpl, 1, threads);
    BuildResult out;
    out.dropped = dropped;
    for (auto& l : labeled)
        if (l) out.examples.push_back(std::move(l->example));
    return out;
}

Augmentations augmentations_from_string(std::string_view csv) {
    Augmentations aug;
    std::string token;
    auto apply = [&] {
        if (token.empty()) return;
        if (token == "shuffle")
            aug.shuffle = true;
        else if (token == "irrelevant" || token == "all_irrelevant")
            aug.all_irrelevant = true;
        else if (token != "none")
            throw std::invalid_argument("unknown augmentation: " + token);
        token.clear();
    };
    for (char c : csv) {
        if (c == ',') {
            apply();
        } else if (c != ' ') {
            token += c;
        }
    }
    apply();
    return aug;
}

std::pair<CandidateSet, std::vector<int>> shuffle_augment(const CandidateSet& cs,
                                                          const std::vector<int>& ordinals,
                                                          std::uint64_t seed) {
    int m = cs.m();
    std::vector<int> positions(static_cast<std::size_t>(m));
    std::iota(positions.begin(), positions.end(), 0);
    DetRng rng(seed, "aug-shuffle:" + cs.query.id);
    rng.shuffle(positions);

    CandidateSet shuffled;
    shuffled.query = cs.query;
    std::vector<int> new_of_old(static_cast<std::size_t>(m) + 1, 0);
    for (int p = 0; p < m; ++p) {
        Passage pass = cs.passages[static_cast<std::size_t>(positions[p])];
        new_of_old[static_cast<std::size_t>(pass.ordinal)] = p + 1;
        pass.ordinal = p + 1;
        shuffled.passages.push_back(std::move(pass));
    }
    std::vector<int> mapped;
    mapped.reserve(ordinals.size());
    for (int o : ordinals) mapped.push_back(new_of_old[static_cast<std::size_t>(o)]);
    return {std::move(shuffled), std::move(mapped)};
}

BuildResult build_stage2(const std::vector<EvalInstance>& instances,
                         backends::RankerBackend& teacher, const protocol::PromptTemplate& tpl,
                         const Augmentations& aug, std::uint64_t seed, int threads) {
    auto [labeled, dropped] = label_all(instances, teacher, tpl, 2, threads);
    BuildResult out;
    out.dropped = dropped;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        if (!labeled[i]) continue;
        Labeled& lab = *labeled[i];
        const CandidateSet& cs = instances[i].candidate_set;
        out.examples.push_back(lab.example);

        if (aug.shuffle) {
            auto [shuffled, mapped] = shuffle_augment(cs, lab.ordinals, seed);
            TrainingExample ex;
            ex.messages = protocol::build_rank_prompt(shuffled, tpl);
            ex.target = protocol::render_selection(mapped);
            ex.stage = 2;
            ex.source_query_id = cs.query.id;
            ex.augmentation_tag = "shuffle";
            ex.m = cs.m();
            out.examples.push_back(std::move(ex));
        }

        if (aug.all_irrelevant) {
            std::set<int> picked(lab.ordinals.begin(), lab.ordinals.end());
            CandidateSet rest;
            rest.query = cs.query;
            for (const Passage& p : cs.passages) {
                if (picked.count(p.ordinal)) continue;
                Passage q = p;
                q.ordinal = static_cast<int>(rest.passages.size()) + 1;
                rest.passages.push_back(std::move(q));
            }
            // Skip when the teacher selected everything (no irrelevant pool)
            // or nothing (the base example already teaches "[0]").
            if (!rest.passages.empty() && !picked.empty()) {
                TrainingExample ex;
                ex.messages = protocol::build_rank_prompt(rest, tpl);
                ex.target = "[0]";
                ex.stage = 2;
                ex.source_query_id = cs.query.id;
                ex.augmentation_tag = "irrelevant";
                ex.m = rest.m();
                out.examples.push_back(std::move(ex));
            }
        }
    }
    return out;
}

std::string TrainingManifest::to_json_string() const {
    json counts_json = json::object();
    for (const auto& [key, count] : counts) counts_json[key] = count;
    json doc{{"total_examples", total_examples},
             {"dropped", dropped},
             {"source_queries", source_queries},
             {"counts", counts_json},
             {"template_hash", template_hash},
             {"seed", seed},
             {"training_recipe",
              {{"epochs_per_stage", epochs_per_stage},
               {"learning_rate", learning_rate},
               {"lr_schedule", lr_schedule},
               {"batch_size", batch_size}}}};
    return doc.dump(2);
}

TrainingManifest emit_training_file(const std::vector<TrainingExample>& examples, int dropped,
                                    const protocol::PromptTemplate& tpl, std::uint64_t seed,
                                    const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write training file: " + path.string());

    TrainingManifest manifest;
    manifest.total_examples = static_cast<int>(examples.size());
    manifest.dropped = dropped;
    manifest.template_hash = protocol::template_hash(tpl);
    manifest.seed = seed;
    std::set<std::string> sources;
    for (const auto& ex : examples) sources.insert(ex.source_query_id);
    manifest.source_queries = static_cast<int>(sources.size());

    for (const auto& ex : examples) {
        // Every emitted label must stay inside the grammar it was taught in.
        Selection check =
            protocol::parse_selection(ex.target, ex.m, protocol::MalformedPolicy::error);
        if (protocol::render_selection(check.ordinals) != ex.target)
            throw std::runtime_error("training target is not canonical: " + ex.target);

        json messages = json::array();
        for (const auto& msg : ex.messages)
            messages.push_back({{"role", msg.role}, {"content", msg.content}});
        messages.push_back({{"role", "assistant"}, {"content", ex.target}});
        json line{{"messages", std::move(messages)},
                  {"stage", ex.stage},
                  {"tag", ex.augmentation_tag ? json(*ex.augmentation_tag) : json(nullptr)}};
        out << line.dump() << "\n";

        std::string key = "stage" + std::to_string(ex.stage);
        if (ex.augmentation_tag) key += ":" + *ex.augmentation_tag;
        ++manifest.counts[key];
    }
    return manifest;
}

}  // namespace adarank::distill
