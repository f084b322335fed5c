#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "adarank/core.hpp"
#include "adarank/protocol.hpp"

namespace adarank::backends {

struct ChatRequest {
    std::vector<protocol::Message> messages;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    std::string model_name;

    void validate() const;  // at least one user message, temperature >= 0
};

struct ChatResponse {
    std::string text;
    long prompt_tokens = 0;      // 0 when the provider omits usage
    long completion_tokens = 0;
    double latency_ms = 0.0;
};

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Transport failure, exhausted retries, or a non-retryable HTTP status.
struct BackendUnavailable : BackendError {
    using BackendError::BackendError;
};
// The provider answered but refused to produce content.
struct BackendRefusal : BackendError {
    using BackendError::BackendError;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse chat(const ChatRequest& req) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    // One vector per input text, uniform dimension. Non-empty batch required.
    virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
};

struct RetryPolicy {
    int max_attempts = 5;
    int base_delay_ms = 1000;
    double factor = 2.0;
};

struct HttpBackendConfig {
    std::string endpoint_url;        // e.g. http://host:port (paths are fixed)
    std::string chat_path = "/v1/chat/completions";
    std::string embeddings_path = "/v1/embeddings";
    std::string model;
    std::string embedding_model;
    std::string api_key_env = "ADARANK_API_KEY";
    int timeout_s = 120;
    int concurrency = 8;             // in-flight request cap
    int embed_batch_cap = 1000;
    RetryPolicy retry;
    std::uint64_t jitter_seed = 0;

    static HttpBackendConfig from_file(const std::filesystem::path& path);
    // Identifiers only, never the credential. Recorded in manifests.
    std::string fingerprint() const;
};

class Limiter;

// Chat-completions HTTP client: POST {model, messages, temperature,
// max_tokens}, retrying rate limits and transient transport errors with
// exponential backoff and full jitter. Non-429 4xx statuses fail fast.
class HttpChatClient : public ChatBackend {
public:
    explicit HttpChatClient(HttpBackendConfig cfg);
    ~HttpChatClient() override;
    ChatResponse chat(const ChatRequest& req) override;

private:
    HttpBackendConfig cfg_;
    std::shared_ptr<Limiter> limiter_;
};

class HttpEmbeddingClient : public EmbeddingBackend {
public:
    explicit HttpEmbeddingClient(HttpBackendConfig cfg);
    ~HttpEmbeddingClient() override;
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

private:
    HttpBackendConfig cfg_;
    std::shared_ptr<Limiter> limiter_;
};

// Embedding vectors preloaded from a JSONL file of {"id": ..., "vector": [...]}.
class FileEmbeddingStore {
public:
    static FileEmbeddingStore load(const std::filesystem::path& path);
    const std::vector<float>& lookup(const std::string& id) const;
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }

private:
    std::unordered_map<std::string, std::vector<float>> vectors_;
    std::size_t dim_ = 0;
};

// Relevance grades for mock backends: (query id, ordinal) -> grade in {0,1,2}.
// Ordinals absent from the map count as grade 0.
struct RelevanceLabels {
    std::unordered_map<std::string, std::map<int, int>> grades;

    static RelevanceLabels load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    bool has_query(const std::string& query_id) const { return grades.count(query_id) > 0; }
    int grade(const std::string& query_id, int ordinal) const;
    std::set<int> relevant_ordinals(const std::string& query_id) const;
};

// Surfaces the pipeline consumes. Remote implementations wrap a ChatBackend;
// mock implementations are deterministic under a fixed seed.
class RankerBackend {
public:
    virtual ~RankerBackend() = default;
    // Raw ranker text plus token usage for the call.
    struct RawResult {
        std::string text;
        long prompt_tokens = 0;
        long completion_tokens = 0;
    };
    virtual RawResult rank_raw(const CandidateSet& cs) = 0;
};

class AnswerGenerator {
public:
    virtual ~AnswerGenerator() = default;
    struct Result {
        std::string answer;
        long prompt_tokens = 0;
        long completion_tokens = 0;
    };
    virtual Result generate(const CandidateSet& cs, const std::vector<int>& context_ordinals,
                            GoldKind kind) = 0;
};

class RemoteRanker : public RankerBackend {
public:
    RemoteRanker(ChatBackend& chat, protocol::PromptTemplate tpl, std::string model);
    RawResult rank_raw(const CandidateSet& cs) override;

private:
    ChatBackend& chat_;
    protocol::PromptTemplate tpl_;
    std::string model_;
};

class RemoteAnswerGenerator : public AnswerGenerator {
public:
    RemoteAnswerGenerator(ChatBackend& chat, std::string model);
    Result generate(const CandidateSet& cs, const std::vector<int>& context_ordinals,
                    GoldKind kind) override;

private:
    ChatBackend& chat_;
    std::string model_;
};

// Emits the grade-sorted selection for labeled queries; with probability
// noise_rate emits a corrupted string from a catalog mirroring the parser's
// repair cases. Bit-reproducible for a fixed seed.
class MockOracleRanker : public RankerBackend {
public:
    MockOracleRanker(RelevanceLabels labels, double noise_rate, std::uint64_t seed)
        : labels_(std::move(labels)), noise_rate_(noise_rate), seed_(seed) {}
    RawResult rank_raw(const CandidateSet& cs) override;

    const RelevanceLabels& labels() const { return labels_; }

private:
    RelevanceLabels labels_;
    double noise_rate_;
    std::uint64_t seed_;
};

struct MockGeneratorConfig {
    double robustness = 1.0;      // P(an irrelevant passage in context is ignored)
    double knowledge_rate = 0.0;  // P(correct closed-book answer)
    std::uint64_t seed = 0;
};

// The behavioral noise-model rule, exposed for direct testing: correct iff a
// relevant passage is in context and every irrelevant one is independently
// ignored, or the context is empty and a knowledge draw succeeds. The draw
// stream depends only on (seed, query id).
bool mock_generate_correct(const MockGeneratorConfig& cfg, const std::vector<int>& context_ordinals,
                           const std::set<int>& relevant_ordinals, const std::string& query_id);

class MockAnswerGenerator : public AnswerGenerator {
public:
    MockAnswerGenerator(MockGeneratorConfig cfg, RelevanceLabels labels,
                        std::unordered_map<std::string, std::string> gold_answers)
        : cfg_(cfg), labels_(std::move(labels)), gold_answers_(std::move(gold_answers)) {}
    Result generate(const CandidateSet& cs, const std::vector<int>& context_ordinals,
                    GoldKind kind) override;

private:
    MockGeneratorConfig cfg_;
    RelevanceLabels labels_;
    std::unordered_map<std::string, std::string> gold_answers_;
};

// Canonical "correct" answer per query derived from gold labels (first alias
// of each alias set, comma-joined; claims concatenated). Feeds the mock
// generator so scorers see full marks exactly when the noise model says
// correct.
std::unordered_map<std::string, std::string> gold_answer_texts(
    const std::vector<EvalInstance>& instances);

// Rough token estimate for mock accounting: ceil(chars / 4).
long estimate_tokens(const std::vector<protocol::Message>& messages);

}  // namespace adarank::backends
