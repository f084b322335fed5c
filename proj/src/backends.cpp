#include "adarank/backends.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "adarank/rng.hpp"

namespace adarank::backends {

using nlohmann::json;

void ChatRequest::validate() const {
    if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
    if (max_output_tokens < 1) throw std::invalid_argument("max_output_tokens must be >= 1");
    for (const auto& m : messages)
        if (m.role == "user" && !m.content.empty()) return;
    throw std::invalid_argument("chat request needs at least one user message");
}

HttpBackendConfig HttpBackendConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open backend config: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid backend config JSON in " + path.string() + ": " +
                                 e.what());
    }
    HttpBackendConfig cfg;
    cfg.endpoint_url = doc.value("endpoint_url", cfg.endpoint_url);
    cfg.chat_path = doc.value("chat_path", cfg.chat_path);
    cfg.embeddings_path = doc.value("embeddings_path", cfg.embeddings_path);
    cfg.model = doc.value("model", cfg.model);
    cfg.embedding_model = doc.value("embedding_model", cfg.embedding_model);
    cfg.api_key_env = doc.value("api_key_env", cfg.api_key_env);
    cfg.timeout_s = doc.value("timeout_s", cfg.timeout_s);
    cfg.concurrency = doc.value("concurrency", cfg.concurrency);
    cfg.embed_batch_cap = doc.value("embed_batch_cap", cfg.embed_batch_cap);
    if (doc.contains("retry")) {
        const json& r = doc["retry"];
        cfg.retry.max_attempts = r.value("max_attempts", cfg.retry.max_attempts);
        cfg.retry.base_delay_ms = r.value("base_delay_ms", cfg.retry.base_delay_ms);
        cfg.retry.factor = r.value("factor", cfg.retry.factor);
    }
    if (cfg.endpoint_url.empty())
        throw std::runtime_error("backend config " + path.string() + " is missing endpoint_url");
    if (cfg.retry.max_attempts < 1 || cfg.retry.base_delay_ms < 0 || cfg.retry.factor < 1.0)
        throw std::runtime_error("backend config " + path.string() + " has an invalid retry block");
    return cfg;
}

std::string HttpBackendConfig::fingerprint() const {
    std::ostringstream os;
    os << "endpoint=" << endpoint_url << ";model=" << model
       << ";embedding_model=" << embedding_model << ";key_env=" << api_key_env;
    return os.str();
}

// Caps in-flight remote requests across worker threads.
class Limiter {
public:
    explicit Limiter(int cap) : cap_(cap > 0 ? cap : 1) {}

    void acquire() {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return in_flight_ < cap_; });
        ++in_flight_;
    }

    void release() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            --in_flight_;
        }
        cv_.notify_one();
    }

private:
    int cap_;
    int in_flight_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
};

namespace {

struct LimiterGuard {
    explicit LimiterGuard(Limiter& l) : limiter(l) { limiter.acquire(); }
    ~LimiterGuard() { limiter.release(); }
    Limiter& limiter;
};

httplib::Headers auth_headers(const HttpBackendConfig& cfg) {
    httplib::Headers h;
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
        h.emplace("Authorization", std::string("Bearer ") + key);
    return h;
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

// POST with the shared retry rule: transient transport failures, 429 and 5xx
// back off with full jitter; any other non-2xx fails fast.
httplib::Result post_with_retry(const HttpBackendConfig& cfg, const std::string& path,
                                const std::string& body, const char* what) {
    static std::atomic<std::uint64_t> call_counter{0};
    DetRng rng(cfg.jitter_seed ^ fnv1a64(path), std::to_string(call_counter.fetch_add(1)));

    std::string last_error;
    for (int attempt = 1; attempt <= cfg.retry.max_attempts; ++attempt) {
        httplib::Client cli(cfg.endpoint_url);
        cli.set_connection_timeout(cfg.timeout_s, 0);
        cli.set_read_timeout(cfg.timeout_s, 0);
        cli.set_write_timeout(cfg.timeout_s, 0);

        auto res = cli.Post(path, auth_headers(cfg), body, "application/json");
        if (res && res->status >= 200 && res->status < 300) return res;
        if (res && !retryable_status(res->status)) {
            throw BackendUnavailable(std::string(what) + " request failed with HTTP " +
                                     std::to_string(res->status) + " (not retryable): " +
                                     res->body.substr(0, 200));
        }
        last_error = res ? "HTTP " + std::to_string(res->status)
                         : "transport error: " + httplib::to_string(res.error());
        if (attempt < cfg.retry.max_attempts) {
            double ceiling = static_cast<double>(cfg.retry.base_delay_ms);
            for (int i = 1; i < attempt; ++i) ceiling *= cfg.retry.factor;
            auto delay = static_cast<long>(rng.uniform01() * ceiling);
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
    }
    throw BackendUnavailable(std::string(what) + " request failed after " +
                             std::to_string(cfg.retry.max_attempts) + " attempts; last error: " +
                             last_error);
}

}  // namespace

HttpChatClient::HttpChatClient(HttpBackendConfig cfg)
    : cfg_(std::move(cfg)), limiter_(std::make_shared<Limiter>(cfg_.concurrency)) {}

HttpChatClient::~HttpChatClient() = default;

ChatResponse HttpChatClient::chat(const ChatRequest& req) {
    req.validate();
    json body{{"model", req.model_name.empty() ? cfg_.model : req.model_name},
              {"temperature", req.temperature},
              {"max_tokens", req.max_output_tokens}};
    body["messages"] = json::array();
    for (const auto& m : req.messages)
        body["messages"].push_back({{"role", m.role}, {"content", m.content}});

    LimiterGuard guard(*limiter_);
    auto start = std::chrono::steady_clock::now();
    auto res = post_with_retry(cfg_, cfg_.chat_path, body.dump(), "chat");
    auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             start);

    json doc;
    try {
        doc = json::parse(res->body);
    } catch (const json::exception& e) {
        throw BackendUnavailable(std::string("chat response is not JSON: ") + e.what());
    }
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
        throw BackendUnavailable("chat response has no choices: " + res->body.substr(0, 200));
    const json& choice = doc["choices"][0];
    const json& message = choice.value("message", json::object());
    if (message.contains("refusal") && message["refusal"].is_string())
        throw BackendRefusal(message["refusal"].get<std::string>());
    if (choice.value("finish_reason", "") == "content_filter")
        throw BackendRefusal("provider filtered the completion");

    ChatResponse out;
    if (message.contains("content") && message["content"].is_string())
        out.text = message["content"].get<std::string>();
    if (doc.contains("usage")) {
        out.prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
        out.completion_tokens = doc["usage"].value("completion_tokens", 0L);
    }
    out.latency_ms = elapsed.count();
    return out;
}

HttpEmbeddingClient::HttpEmbeddingClient(HttpBackendConfig cfg)
    : cfg_(std::move(cfg)), limiter_(std::make_shared<Limiter>(cfg_.concurrency)) {}

HttpEmbeddingClient::~HttpEmbeddingClient() = default;

std::vector<std::vector<float>> HttpEmbeddingClient::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw std::invalid_argument("embed requires a non-empty batch");
    const std::size_t cap = cfg_.embed_batch_cap > 0 ? cfg_.embed_batch_cap : texts.size();

    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (std::size_t offset = 0; offset < texts.size(); offset += cap) {
        std::size_t end = std::min(texts.size(), offset + cap);
        json body{{"model", cfg_.embedding_model}};
        body["input"] = json::array();
        for (std::size_t i = offset; i < end; ++i) body["input"].push_back(texts[i]);

        LimiterGuard guard(*limiter_);
        auto res = post_with_retry(cfg_, cfg_.embeddings_path, body.dump(), "embeddings");
        json doc;
        try {
            doc = json::parse(res->body);
        } catch (const json::exception& e) {
            throw BackendUnavailable(std::string("embeddings response is not JSON: ") + e.what());
        }
        if (!doc.contains("data") || !doc["data"].is_array() ||
            doc["data"].size() != end - offset)
            throw BackendUnavailable("embeddings response size mismatch");
        // Providers may reorder; the index field restores input order.
        std::vector<std::vector<float>> batch(end - offset);
        for (const json& item : doc["data"]) {
            std::size_t idx = item.value("index", batch.size());
            if (idx >= batch.size()) throw BackendUnavailable("embeddings response index out of range");
            batch[idx] = item.at("embedding").get<std::vector<float>>();
        }
        for (auto& v : batch) out.push_back(std::move(v));
    }
    for (const auto& v : out)
        if (v.size() != out.front().size())
            throw BackendError("embedding dimension mismatch across batch");
    return out;
}

FileEmbeddingStore FileEmbeddingStore::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embeddings file: " + path.string());
    FileEmbeddingStore store;
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
        if (!doc.contains("id") || !doc.contains("vector"))
            throw std::runtime_error(where + ": embedding record needs id and vector");
        auto id = doc["id"].get<std::string>();
        auto vec = doc["vector"].get<std::vector<float>>();
        if (vec.empty()) throw std::runtime_error(where + ": empty vector");
        if (store.dim_ == 0) store.dim_ = vec.size();
        if (vec.size() != store.dim_)
            throw std::runtime_error(where + ": vector dimension " + std::to_string(vec.size()) +
                                     " differs from " + std::to_string(store.dim_));
        if (!store.vectors_.emplace(std::move(id), std::move(vec)).second)
            throw std::runtime_error(where + ": duplicate embedding id");
    }
    if (store.vectors_.empty()) throw std::runtime_error("embeddings file is empty: " + path.string());
    return store;
}

const std::vector<float>& FileEmbeddingStore::lookup(const std::string& id) const {
    auto it = vectors_.find(id);
    if (it == vectors_.end()) throw std::out_of_range("no embedding for id: " + id);
    return it->second;
}

RelevanceLabels RelevanceLabels::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open labels file: " + path.string());
    RelevanceLabels labels;
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
        if (!doc.contains("query_id") || !doc.contains("relevant_ordinals"))
            throw std::runtime_error(where + ": label record needs query_id and relevant_ordinals");
        auto qid = doc["query_id"].get<std::string>();
        if (labels.grades.count(qid)) throw std::runtime_error(where + ": duplicate query_id " + qid);
        auto& row = labels.grades[qid];
        for (int ord : doc["relevant_ordinals"].get<std::vector<int>>()) {
            if (ord < 1) throw std::runtime_error(where + ": ordinal must be >= 1");
            row[ord] = 1;
        }
    }
    return labels;
}

// Grades flatten to the binary wire schema: any grade > 0 is listed.
void RelevanceLabels::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write labels file: " + path.string());
    std::vector<std::string> ids;
    ids.reserve(grades.size());
    for (const auto& [qid, _] : grades) ids.push_back(qid);
    std::sort(ids.begin(), ids.end());
    for (const auto& qid : ids) {
        json row{{"query_id", qid}};
        row["relevant_ordinals"] = json::array();
        for (const auto& [ord, grade] : grades.at(qid))
            if (grade > 0) row["relevant_ordinals"].push_back(ord);
        out << row.dump() << "\n";
    }
}

int RelevanceLabels::grade(const std::string& query_id, int ordinal) const {
    auto it = grades.find(query_id);
    if (it == grades.end()) return 0;
    auto jt = it->second.find(ordinal);
    return jt == it->second.end() ? 0 : jt->second;
}

std::set<int> RelevanceLabels::relevant_ordinals(const std::string& query_id) const {
    std::set<int> out;
    auto it = grades.find(query_id);
    if (it == grades.end()) return out;
    for (const auto& [ord, grade] : it->second)
        if (grade > 0) out.insert(ord);
    return out;
}

long estimate_tokens(const std::vector<protocol::Message>& messages) {
    std::size_t chars = 0;
    for (const auto& m : messages) chars += m.content.size();
    return static_cast<long>((chars + 3) / 4);
}

RemoteRanker::RemoteRanker(ChatBackend& chat, protocol::PromptTemplate tpl, std::string model)
    : chat_(chat), tpl_(std::move(tpl)), model_(std::move(model)) {
    tpl_.validate();
}

RankerBackend::RawResult RemoteRanker::rank_raw(const CandidateSet& cs) {
    ChatRequest req;
    req.messages = protocol::build_rank_prompt(cs, tpl_);
    req.temperature = 0.0;  // selection must be as deterministic as the provider allows
    req.max_output_tokens = 128;
    req.model_name = model_;
    ChatResponse resp = chat_.chat(req);
    return {resp.text, resp.prompt_tokens, resp.completion_tokens};
}

RemoteAnswerGenerator::RemoteAnswerGenerator(ChatBackend& chat, std::string model)
    : chat_(chat), model_(std::move(model)) {}

AnswerGenerator::Result RemoteAnswerGenerator::generate(const CandidateSet& cs,
                                                        const std::vector<int>& context_ordinals,
                                                        GoldKind kind) {
    std::vector<Passage> in_order;
    in_order.reserve(context_ordinals.size());
    for (int ord : context_ordinals) {
        if (ord < 1 || ord > cs.m())
            throw std::invalid_argument("context ordinal " + std::to_string(ord) +
                                        " outside candidate set");
        in_order.push_back(cs.passages[static_cast<std::size_t>(ord - 1)]);
    }
    ChatRequest req;
    req.messages = protocol::build_answer_prompt(cs.query, in_order, kind);
    req.temperature = 0.0;
    req.max_output_tokens = kind == GoldKind::claims ? 1024 : 256;
    req.model_name = model_;
    ChatResponse resp = chat_.chat(req);
    return {resp.text, resp.prompt_tokens, resp.completion_tokens};
}

RankerBackend::RawResult MockOracleRanker::rank_raw(const CandidateSet& cs) {
    const std::string& qid = cs.query.id;
    if (!labels_.has_query(qid)) throw std::invalid_argument("no relevance labels for query " + qid);

    // Sort key (grade desc, ordinal asc) over graded ordinals within 1..m.
    std::vector<int> selected;
    for (int ord = 1; ord <= cs.m(); ++ord)
        if (labels_.grade(qid, ord) > 0) selected.push_back(ord);
    std::stable_sort(selected.begin(), selected.end(), [&](int a, int b) {
        int ga = labels_.grade(qid, a), gb = labels_.grade(qid, b);
        if (ga != gb) return ga > gb;
        return a < b;
    });
    std::string clean = protocol::render_selection(selected);

    DetRng rng(seed_, "rank:" + qid);
    std::string text = clean;
    long extra_tokens = 0;
    if (rng.bernoulli(noise_rate_)) {
        // Corruption catalog mirrors the parser's repair cases.
        switch (rng.uniform_int(3)) {
            case 0:
                text = "Sure, here is the ranking you asked for: " + clean + ". Hope this helps!";
                extra_tokens = 10;
                break;
            case 1:
                if (!selected.empty())
                    text = "[" + std::to_string(selected.front()) + "] > " + clean;
                else
                    text = "[0] > [0]";
                extra_tokens = 2;
                break;
            case 2:
                text = "[" + std::to_string(cs.m() + 3) + "] > " + clean;
                extra_tokens = 2;
                break;
        }
    }
    RawResult out;
    out.text = std::move(text);
    out.prompt_tokens =
        estimate_tokens(protocol::build_rank_prompt(cs, protocol::PromptTemplate::default_template()));
    out.completion_tokens = static_cast<long>(selected.size() * 2 + 1) + extra_tokens;
    return out;
}

bool mock_generate_correct(const MockGeneratorConfig& cfg, const std::vector<int>& context_ordinals,
                           const std::set<int>& relevant_ordinals, const std::string& query_id) {
    DetRng rng(cfg.seed, "gen:" + query_id);
    if (context_ordinals.empty()) return rng.bernoulli(cfg.knowledge_rate);

    bool any_relevant = false;
    bool all_irrelevant_ignored = true;
    for (int ord : context_ordinals) {
        if (relevant_ordinals.count(ord)) {
            any_relevant = true;
        } else if (!rng.bernoulli(cfg.robustness)) {
            all_irrelevant_ignored = false;  // keep drawing: stream length stays shape-determined
        }
    }
    return any_relevant && all_irrelevant_ignored;
}

AnswerGenerator::Result MockAnswerGenerator::generate(const CandidateSet& cs,
                                                      const std::vector<int>& context_ordinals,
                                                      GoldKind kind) {
    const std::string& qid = cs.query.id;
    bool correct =
        mock_generate_correct(cfg_, context_ordinals, labels_.relevant_ordinals(qid), qid);

    Result out;
    if (correct) {
        auto it = gold_answers_.find(qid);
        if (it == gold_answers_.end())
            throw std::invalid_argument("no gold answer text for query " + qid);
        out.answer = it->second;
    } else {
        out.answer = "I cannot determine this from the given documents.";
    }

    std::vector<Passage> in_order;
    for (int ord : context_ordinals)
        if (ord >= 1 && ord <= cs.m()) in_order.push_back(cs.passages[static_cast<std::size_t>(ord - 1)]);
    out.prompt_tokens = estimate_tokens(protocol::build_answer_prompt(cs.query, in_order, kind));
    out.completion_tokens = static_cast<long>((out.answer.size() + 3) / 4);
    return out;
}

std::unordered_map<std::string, std::string> gold_answer_texts(
    const std::vector<EvalInstance>& instances) {
    std::unordered_map<std::string, std::string> out;
    for (const auto& inst : instances) {
        std::string answer;
        for (const auto& alias_set : inst.gold.items) {
            if (alias_set.empty()) continue;
            if (!answer.empty()) answer += inst.gold.kind == GoldKind::claims ? " " : ", ";
            answer += alias_set.front();
        }
        out[inst.candidate_set.query.id] = answer;
    }
    return out;
}

}  // namespace adarank::backends
