#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adarank/backends.hpp"
#include "adarank/core.hpp"

#ifndef FIXTURES_DIR
#error "FIXTURES_DIR must be defined by the build"
#endif

namespace testutil {

inline std::filesystem::path fixture(const char* name) {
    return std::filesystem::path(FIXTURES_DIR) / name;
}

// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        auto base = std::filesystem::temp_directory_path();
        path = base / ("adarank-test-" + std::to_string(::getpid()) + "-" +
                       std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path file(const char* name) const { return path / name; }
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

inline adarank::CandidateSet make_cs(const std::string& qid, int m) {
    adarank::CandidateSet cs;
    cs.query = {qid, "what is the answer to " + qid + "?"};
    for (int i = 1; i <= m; ++i) {
        adarank::Passage p;
        p.ordinal = i;
        p.doc_id = qid + "-d" + std::to_string(i);
        p.title = "title " + std::to_string(i);
        p.text = "passage text number " + std::to_string(i) + " for " + qid;
        cs.passages.push_back(std::move(p));
    }
    return cs;
}

inline adarank::EvalInstance make_instance(const std::string& qid, int m,
                                           const std::string& answer) {
    adarank::EvalInstance inst;
    inst.candidate_set = make_cs(qid, m);
    inst.gold.kind = adarank::GoldKind::short_answers;
    inst.gold.items = {{answer}};
    return inst;
}

// All ordered duplicate-free non-empty subsets of {1..n}, by depth-first
// extension. For n=5 that is 5+20+60+120+120 = 325 sequences.
inline void enumerate_ordered_subsets(int n, std::vector<std::vector<int>>& out) {
    std::vector<int> cur;
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    auto rec = [&](auto&& self) -> void {
        for (int v = 1; v <= n; ++v) {
            if (used[static_cast<std::size_t>(v)]) continue;
            used[static_cast<std::size_t>(v)] = true;
            cur.push_back(v);
            out.push_back(cur);
            self(self);
            cur.pop_back();
            used[static_cast<std::size_t>(v)] = false;
        }
    };
    rec(rec);
}

// Ranker stub: fixed raw text per query id, with a default for the rest.
// Throws BackendUnavailable for ids listed in fail_ids.
class StubRanker : public adarank::backends::RankerBackend {
public:
    std::string default_text = "[1]";
    std::map<std::string, std::string> text_by_id;
    std::vector<std::string> fail_ids;
    std::atomic<int> calls{0};

    RawResult rank_raw(const adarank::CandidateSet& cs) override {
        calls.fetch_add(1);
        for (const auto& id : fail_ids)
            if (id == cs.query.id)
                throw adarank::backends::BackendUnavailable("stub failure for " + cs.query.id);
        RawResult out;
        auto it = text_by_id.find(cs.query.id);
        out.text = it == text_by_id.end() ? default_text : it->second;
        out.prompt_tokens = 100;
        out.completion_tokens = 5;
        return out;
    }
};

// Generator stub recording the context it was handed.
class StubGenerator : public adarank::backends::AnswerGenerator {
public:
    std::string answer = "stub answer";
    std::map<std::string, std::vector<int>> seen_contexts;

    Result generate(const adarank::CandidateSet& cs, const std::vector<int>& context_ordinals,
                    adarank::GoldKind) override {
        seen_contexts[cs.query.id] = context_ordinals;
        Result r;
        r.answer = answer;
        r.prompt_tokens = 50;
        r.completion_tokens = 7;
        return r;
    }
};

}  // namespace testutil
