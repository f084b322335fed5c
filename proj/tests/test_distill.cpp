#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "adarank/distill.hpp"
#include "adarank/rng.hpp"
#include "adarank/simd_l2.hpp"
#include "lloyd_oracle.hpp"
#include "test_util.hpp"

using namespace adarank;
using namespace adarank::distill;
using testutil::StubRanker;
using testutil::TempDir;

namespace {

std::vector<std::vector<float>> two_blobs(int per_blob, std::uint64_t seed) {
    DetRng rng(seed);
    std::vector<std::vector<float>> points;
    for (int b = 0; b < 2; ++b) {
        float cx = b == 0 ? 0.f : 10.f;
        for (int i = 0; i < per_blob; ++i)
            points.push_back({cx + static_cast<float>(rng.uniform01() * 0.2 - 0.1),
                              cx + static_cast<float>(rng.uniform01() * 0.2 - 0.1)});
    }
    return points;
}

std::vector<std::vector<float>> random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
    DetRng rng(seed);
    std::vector<std::vector<float>> points(n, std::vector<float>(d));
    for (auto& p : points)
        for (auto& x : p) x = static_cast<float>(rng.uniform01() * 10.0 - 5.0);
    return points;
}

std::vector<EvalInstance> stub_instances(int n, int m) {
    std::vector<EvalInstance> out;
    for (int i = 0; i < n; ++i)
        out.push_back(testutil::make_instance("q" + std::to_string(i), m, "x"));
    return out;
}

}  // namespace

TEST_CASE("kmeans separates well-split blobs") {
    auto points = two_blobs(50, 11);
    ClusteringConfig cfg;
    cfg.k = 2;
    cfg.seed = 5;
    auto res = kmeans(points, cfg);

    REQUIRE(res.assignments.size() == 100);
    // All of blob 0 lands in one cluster, all of blob 1 in the other.
    int first = res.assignments[0];
    for (int i = 0; i < 50; ++i) CHECK(res.assignments[static_cast<std::size_t>(i)] == first);
    for (int i = 50; i < 100; ++i)
        CHECK(res.assignments[static_cast<std::size_t>(i)] == 1 - first);
    CHECK(res.inertia < 100 * 2 * 0.01);
}

TEST_CASE("kmeans with n == k reaches zero inertia") {
    auto points = random_points(12, 4, 3);
    ClusteringConfig cfg;
    cfg.k = 12;
    cfg.seed = 9;
    auto res = kmeans(points, cfg);
    CHECK(res.inertia <= 1e-12);
}

TEST_CASE("kmeans inertia trace never increases beyond float-storage noise") {
    auto points = random_points(400, 8, 21);
    ClusteringConfig cfg;
    cfg.k = 7;
    cfg.seed = 21;
    auto res = kmeans(points, cfg);
    REQUIRE(res.inertia_trace.size() >= 2);
    CHECK(res.inertia_trace.size() == static_cast<std::size_t>(res.iterations) + 1);
    CHECK(res.inertia_trace.back() == res.inertia);
    for (std::size_t i = 1; i < res.inertia_trace.size(); ++i)
        CHECK(res.inertia_trace[i] <=
              res.inertia_trace[i - 1] + 1e-6 + 1e-9 * res.inertia_trace[i - 1]);

    double sum_d2 = 0.0;
    for (double v : res.point_dist2) sum_d2 += v;
    CHECK(sum_d2 == doctest::Approx(res.inertia).epsilon(1e-12));
}

TEST_CASE("kmeans is reproducible and thread-count independent") {
    auto points = random_points(300, 6, 8);
    ClusteringConfig cfg;
    cfg.k = 9;
    cfg.seed = 44;

    auto a = kmeans(points, cfg, 1);
    auto b = kmeans(points, cfg, 1);
    auto c = kmeans(points, cfg, 4);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids == b.centroids);
    CHECK(a.inertia == b.inertia);
    CHECK(a.assignments == c.assignments);
    CHECK(a.centroids == c.centroids);
    CHECK(a.inertia == c.inertia);
    CHECK(a.inertia_trace == c.inertia_trace);
}

TEST_CASE("kmeans matches the independent Lloyd reimplementation") {
    // Pin the scalar kernel so the oracle's plain loops see identical
    // distances and the comparison is exact, not just within tolerance.
    simd::force_scalar(true);
    auto points = random_points(300, 8, 77);
    ClusteringConfig cfg;
    cfg.k = 7;
    cfg.seed = 31;
    auto lib = kmeans(points, cfg);
    auto ref = lloyd_oracle::run(points, cfg);
    simd::force_scalar(false);

    CHECK(lib.iterations == ref.iterations);
    CHECK(lib.assignments == ref.assignments);
    CHECK(lib.centroids == ref.centroids);
    CHECK(std::fabs(lib.inertia - ref.inertia) <= 1e-9 * std::max(1.0, ref.inertia));
}

TEST_CASE("kmeans invariants hold on duplicate-heavy data") {
    // Integer-grid coordinates produce frequent duplicate points and with
    // them empty clusters, exercising the reseed path.
    DetRng rng(202);
    for (int rep = 0; rep < 25; ++rep) {
        std::size_t n = 8 + rng.uniform_int(20);
        std::size_t d = 1 + rng.uniform_int(3);
        std::vector<std::vector<float>> points(n, std::vector<float>(d));
        for (auto& p : points)
            for (auto& x : p) x = static_cast<float>(rng.uniform_int(3));
        ClusteringConfig cfg;
        cfg.k = 5;
        cfg.seed = 1000 + static_cast<std::uint64_t>(rep);
        auto res = kmeans(points, cfg);
        REQUIRE(res.assignments.size() == n);
        for (int a : res.assignments) {
            CHECK(a >= 0);
            CHECK(a < cfg.k);
        }
        double sum = 0.0;
        for (double v : res.point_dist2) sum += v;
        CHECK(sum == doctest::Approx(res.inertia).epsilon(1e-9));
        for (std::size_t i = 1; i < res.inertia_trace.size(); ++i)
            CHECK(res.inertia_trace[i] <= res.inertia_trace[i - 1] + 1e-6);
    }
}

TEST_CASE("kmeans rejects bad configurations") {
    auto points = random_points(10, 2, 1);
    ClusteringConfig cfg;
    cfg.k = 11;  // more clusters than points
    CHECK_THROWS_AS((void)kmeans(points, cfg), std::invalid_argument);
    cfg.k = 0;
    CHECK_THROWS_AS((void)kmeans(points, cfg), std::invalid_argument);
    cfg.k = 2;
    cfg.max_iters = 0;
    CHECK_THROWS_AS((void)kmeans(points, cfg), std::invalid_argument);
    CHECK_THROWS_AS((void)kmeans({}, ClusteringConfig{}), std::invalid_argument);
}

TEST_CASE("kmeans++ seeding copies input points and is deterministic") {
    auto points = random_points(40, 3, 15);
    auto a = kmeans_pp_init(points, 6, 99);
    auto b = kmeans_pp_init(points, 6, 99);
    CHECK(a == b);
    REQUIRE(a.size() == 6 * 3);
    for (int c = 0; c < 6; ++c) {
        bool found = false;
        for (const auto& p : points) {
            if (std::equal(p.begin(), p.end(), a.begin() + c * 3)) {
                found = true;
                break;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("sample_representatives: proportional allocation with nearest pick") {
    // Cluster 0 holds 6 ids, cluster 1 holds 4; 5 samples split 3/2.
    std::vector<std::string> ids;
    std::vector<int> assignments;
    std::vector<double> dist2;
    for (int i = 0; i < 6; ++i) {
        ids.push_back("a" + std::to_string(i));
        assignments.push_back(0);
        dist2.push_back(static_cast<double>(i));  // a0 is nearest
    }
    for (int i = 0; i < 4; ++i) {
        ids.push_back("b" + std::to_string(i));
        assignments.push_back(1);
        dist2.push_back(static_cast<double>(i));
    }

    SamplingPlan plan;
    plan.total_samples = 5;
    plan.allocation = SamplingPlan::Allocation::proportional;
    plan.within_cluster = SamplingPlan::WithinCluster::nearest_centroid;
    auto picked = sample_representatives(ids, assignments, dist2, 2, plan, 7);
    CHECK(picked == std::vector<std::string>{"a0", "a1", "a2", "b0", "b1"});
}

TEST_CASE("sample_representatives: uniform allocation spills overflow") {
    std::vector<std::string> ids;
    std::vector<int> assignments;
    std::vector<double> dist2;
    for (int i = 0; i < 8; ++i) {
        ids.push_back("a" + std::to_string(i));
        assignments.push_back(0);
        dist2.push_back(i);
    }
    ids.push_back("lone");
    assignments.push_back(1);
    dist2.push_back(0.0);

    SamplingPlan plan;
    plan.total_samples = 6;
    plan.allocation = SamplingPlan::Allocation::uniform_per_cluster;
    plan.within_cluster = SamplingPlan::WithinCluster::nearest_centroid;
    // Uniform would want 3 per cluster; cluster 1 has one id, so the other
    // two samples spill back to cluster 0.
    auto picked = sample_representatives(ids, assignments, dist2, 2, plan, 7);
    REQUIRE(picked.size() == 6);
    CHECK(std::count_if(picked.begin(), picked.end(),
                        [](const std::string& s) { return s[0] == 'a'; }) == 5);
    CHECK(std::find(picked.begin(), picked.end(), "lone") != picked.end());
}

TEST_CASE("sample_representatives: asking for more than n is rejected") {
    // The contract is exactly total_samples unique ids, so total > n cannot
    // be satisfied and must fail rather than silently shrink.
    std::vector<std::string> ids = {"x", "y", "z"};
    std::vector<int> assignments = {0, 1, 0};
    std::vector<double> dist2 = {0.1, 0.2, 0.3};
    SamplingPlan plan;
    plan.total_samples = 50;
    CHECK_THROWS_AS((void)sample_representatives(ids, assignments, dist2, 2, plan, 7),
                    std::invalid_argument);
}

TEST_CASE("sample_representatives: random tie-break is seed-deterministic") {
    std::vector<std::string> ids;
    std::vector<int> assignments;
    std::vector<double> dist2;
    for (int i = 0; i < 30; ++i) {
        ids.push_back("id" + std::to_string(i));
        assignments.push_back(i % 3);
        dist2.push_back(0.5);
    }
    SamplingPlan plan;
    plan.total_samples = 9;
    plan.within_cluster = SamplingPlan::WithinCluster::random;
    auto a = sample_representatives(ids, assignments, dist2, 3, plan, 123);
    auto b = sample_representatives(ids, assignments, dist2, 3, plan, 123);
    CHECK(a == b);
    REQUIRE(a.size() == 9);
    // Output is sorted and duplicate-free.
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
}

TEST_CASE("plan parsing") {
    CHECK(allocation_from_string("proportional") == SamplingPlan::Allocation::proportional);
    CHECK(allocation_from_string("uniform") == SamplingPlan::Allocation::uniform_per_cluster);
    CHECK_THROWS_AS((void)allocation_from_string("nope"), std::invalid_argument);
    CHECK(within_cluster_from_string("nearest") == SamplingPlan::WithinCluster::nearest_centroid);
    CHECK(within_cluster_from_string("random") == SamplingPlan::WithinCluster::random);
    CHECK_THROWS_AS((void)within_cluster_from_string("nope"), std::invalid_argument);

    auto aug = augmentations_from_string("shuffle,irrelevant");
    CHECK(aug.shuffle);
    CHECK(aug.all_irrelevant);
    auto none = augmentations_from_string("none");
    CHECK_FALSE(none.shuffle);
    CHECK_FALSE(none.all_irrelevant);
    CHECK_THROWS_AS((void)augmentations_from_string("shuffle,bogus"), std::invalid_argument);
}

TEST_CASE("stage 1 labels with the teacher and canonicalizes targets") {
    auto insts = stub_instances(10, 6);
    StubRanker teacher;
    teacher.default_text = "Sure: [3] > [1]. Done.";
    auto tpl = protocol::PromptTemplate::default_template();

    auto built = build_stage1(insts, teacher, tpl);
    CHECK(built.dropped == 0);
    REQUIRE(built.examples.size() == 10);
    for (const auto& ex : built.examples) {
        CHECK(ex.target == "[3] > [1]");  // prose stripped, canonical form
        CHECK(ex.stage == 1);
        CHECK_FALSE(ex.augmentation_tag.has_value());
        CHECK(ex.m == 6);
        CHECK(ex.messages == protocol::build_rank_prompt(
                                 testutil::make_cs(ex.source_query_id, 6), tpl));
    }
}

TEST_CASE("stage 1 drops unusable teacher output and aborts past 20%") {
    auto insts = stub_instances(10, 6);
    StubRanker teacher;
    teacher.default_text = "[2]";
    teacher.text_by_id["q0"] = "nothing useful";
    teacher.text_by_id["q1"] = "still nothing";
    auto tpl = protocol::PromptTemplate::default_template();

    // Exactly 20% dropped: allowed.
    auto built = build_stage1(insts, teacher, tpl);
    CHECK(built.dropped == 2);
    CHECK(built.examples.size() == 8);

    // 30% dropped: aborted.
    teacher.text_by_id["q2"] = "nope";
    CHECK_THROWS_AS((void)build_stage1(insts, teacher, tpl), DropRateAbort);

    // Backend failures count as drops too.
    StubRanker flaky;
    flaky.default_text = "[1]";
    flaky.fail_ids = {"q0", "q1", "q2"};
    CHECK_THROWS_AS((void)build_stage1(insts, flaky, tpl), DropRateAbort);
}

TEST_CASE("shuffle augmentation keeps naming the same documents") {
    auto cs = testutil::make_cs("qs", 10);
    std::vector<int> ordinals = {3, 1, 7};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto [shuffled, mapped] = shuffle_augment(cs, ordinals, seed);
        REQUIRE(shuffled.passages.size() == 10);
        for (int i = 0; i < 10; ++i) CHECK(shuffled.passages[i].ordinal == i + 1);

        // Permutation of the same documents.
        std::multiset<std::string> before, after;
        for (const auto& p : cs.passages) before.insert(p.doc_id);
        for (const auto& p : shuffled.passages) after.insert(p.doc_id);
        CHECK(before == after);

        // The remapped selection names the same documents in the same order.
        REQUIRE(mapped.size() == ordinals.size());
        for (std::size_t i = 0; i < ordinals.size(); ++i) {
            const auto& orig = cs.passages[static_cast<std::size_t>(ordinals[i] - 1)];
            const auto& moved = shuffled.passages[static_cast<std::size_t>(mapped[i] - 1)];
            CHECK(orig.doc_id == moved.doc_id);
        }
    }
}

TEST_CASE("stage 2 expands augmentations per labeled query") {
    auto insts = stub_instances(4, 6);
    StubRanker teacher;
    teacher.default_text = "[2] > [5]";
    teacher.text_by_id["q1"] = "[0]";                          // nothing relevant
    teacher.text_by_id["q2"] = "[1] > [2] > [3] > [4] > [5] > [6]";  // everything relevant
    auto tpl = protocol::PromptTemplate::default_template();

    Augmentations aug;
    aug.shuffle = true;
    aug.all_irrelevant = true;
    auto built = build_stage2(insts, teacher, tpl, aug, 55);
    CHECK(built.dropped == 0);

    std::map<std::string, std::map<std::string, int>> by_query_tag;
    for (const auto& ex : built.examples) {
        CHECK(ex.stage == 2);
        by_query_tag[ex.source_query_id][ex.augmentation_tag.value_or("base")] += 1;
        if (ex.augmentation_tag == "irrelevant") {
            CHECK(ex.target == "[0]");
            CHECK(ex.m == 4);  // 6 candidates minus the 2 selected
        }
    }
    // Plain queries produce base + shuffle + irrelevant.
    CHECK(by_query_tag["q0"] == std::map<std::string, int>{{"base", 1}, {"shuffle", 1}, {"irrelevant", 1}});
    // Empty selection: the base example already teaches [0]; no irrelevant copy.
    CHECK(by_query_tag["q1"] == std::map<std::string, int>{{"base", 1}, {"shuffle", 1}});
    // Full selection: no irrelevant pool to build from.
    CHECK(by_query_tag["q2"] == std::map<std::string, int>{{"base", 1}, {"shuffle", 1}});
}

TEST_CASE("training file emission validates, counts and freezes the recipe") {
    auto insts = stub_instances(3, 5);
    StubRanker teacher;
    teacher.default_text = "[4] > [2]";
    auto tpl = protocol::PromptTemplate::default_template();
    Augmentations aug;
    aug.shuffle = true;
    auto built = build_stage2(insts, teacher, tpl, aug, 9);
    REQUIRE(built.examples.size() == 6);

    TempDir tmp;
    auto manifest = emit_training_file(built.examples, built.dropped, tpl, 9, tmp.file("train.jsonl"));
    CHECK(manifest.total_examples == 6);
    CHECK(manifest.dropped == 0);
    CHECK(manifest.source_queries == 3);
    CHECK(manifest.counts.at("stage2") == 3);
    CHECK(manifest.counts.at("stage2:shuffle") == 3);
    CHECK(manifest.template_hash == protocol::template_hash(tpl));
    CHECK(manifest.seed == 9);
    CHECK(manifest.epochs_per_stage == 3);
    CHECK(manifest.learning_rate == "5e-6");
    CHECK(manifest.lr_schedule == "cosine");
    CHECK(manifest.batch_size == 64);

    // Every line is a chat example whose assistant turn re-parses cleanly.
    std::istringstream in(testutil::slurp(tmp.file("train.jsonl")));
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++lines;
        auto doc = nlohmann::json::parse(line);
        REQUIRE(doc["messages"].size() == 3);
        CHECK(doc["messages"][0]["role"] == "system");
        CHECK(doc["messages"][1]["role"] == "user");
        CHECK(doc["messages"][2]["role"] == "assistant");
        CHECK(doc.contains("stage"));
        CHECK(doc.contains("tag"));
        auto target = doc["messages"][2]["content"].get<std::string>();
        CHECK_NOTHROW((void)protocol::parse_selection(target, 5, protocol::MalformedPolicy::error));
    }
    CHECK(lines == 6);

    // The manifest JSON form carries the recipe.
    auto mdoc = nlohmann::json::parse(manifest.to_json_string());
    CHECK(mdoc["training_recipe"]["epochs_per_stage"] == 3);
    CHECK(mdoc["training_recipe"]["learning_rate"] == "5e-6");
    CHECK(mdoc["training_recipe"]["lr_schedule"] == "cosine");
    CHECK(mdoc["training_recipe"]["batch_size"] == 64);

    // Non-canonical targets are rejected outright.
    auto bad = built.examples;
    bad[0].target = "[2]>[4]";
    CHECK_THROWS((void)emit_training_file(bad, 0, tpl, 9, tmp.file("bad.jsonl")));
    bad[0].target = "[2] > [2]";
    CHECK_THROWS((void)emit_training_file(bad, 0, tpl, 9, tmp.file("bad2.jsonl")));
    bad[0].target = "[9] > [1]";  // beyond m=5
    CHECK_THROWS((void)emit_training_file(bad, 0, tpl, 9, tmp.file("bad3.jsonl")));
}
