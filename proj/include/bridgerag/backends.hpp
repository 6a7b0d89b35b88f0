#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "bridgerag/corpus.hpp"
#include "bridgerag/error.hpp"

namespace bridgerag {

struct ChatRequest {
    std::string system;
    std::string user;
    int max_output_tokens = 512;
    double temperature = 0.0;
};

struct BackendConfig {
    std::string base_url;
    std::string model_name;
    std::chrono::milliseconds timeout{30000};
    int retries = 3;           // max attempts, <= 3
    int concurrency_limit = 4; // simultaneous in-flight requests
    int max_input_tokens = 8192;
    std::chrono::milliseconds retry_backoff{250};

    void validate() const {
        if (retries < 1 || retries > 3)
            raise(ErrorKind::config, "retries must be in [1, 3], got " + std::to_string(retries));
        if (concurrency_limit < 1)
            raise(ErrorKind::config, "concurrency_limit must be >= 1");
        if (max_input_tokens < 1)
            raise(ErrorKind::config, "max_input_tokens must be >= 1");
    }
};

/// Rough token estimate (4 chars/token) used only for budget gating.
inline std::size_t estimate_tokens(std::string_view s) { return (s.size() + 3) / 4; }

/// Counting semaphore bounding in-flight requests per backend instance.
class ConcurrencyGate {
public:
    explicit ConcurrencyGate(int limit) : limit_(limit) {}

    class Guard {
    public:
        explicit Guard(ConcurrencyGate& g) : gate_(g) { gate_.acquire(); }
        ~Guard() { gate_.release(); }
        Guard(const Guard&) = delete;
        Guard& operator=(const Guard&) = delete;

    private:
        ConcurrencyGate& gate_;
    };

private:
    void acquire() {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return in_flight_ < limit_; });
        ++in_flight_;
    }
    void release() {
        {
            std::lock_guard lk(mu_);
            --in_flight_;
        }
        cv_.notify_one();
    }

    int limit_;
    int in_flight_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
};

/// Chat contract. The non-virtual entry point validates the request, gates
/// on the input-token budget before any transport happens, and counts calls
/// so tests can assert the per-query call contract.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    std::string chat(const ChatRequest& req) {
        if (req.user.empty()) raise(ErrorKind::validation, "chat request with empty user message");
        if (req.temperature < 0.0) raise(ErrorKind::validation, "negative temperature");
        const std::size_t est = estimate_tokens(req.system) + estimate_tokens(req.user);
        if (est > static_cast<std::size_t>(max_input_tokens_))
            raise(ErrorKind::budget, "prompt of ~" + std::to_string(est) +
                                         " tokens exceeds budget of " +
                                         std::to_string(max_input_tokens_) + " by " +
                                         std::to_string(est - max_input_tokens_));
        ++calls_;
        std::string completion = do_chat(req);
        if (completion.empty()) raise(ErrorKind::empty_completion, "backend returned no text");
        return completion;
    }

    std::uint64_t chat_calls() const { return calls_.load(); }
    void set_max_input_tokens(int n) { max_input_tokens_ = n; }
    int max_input_tokens() const { return max_input_tokens_; }

protected:
    virtual std::string do_chat(const ChatRequest& req) = 0;

private:
    std::atomic<std::uint64_t> calls_{0};
    int max_input_tokens_ = 8192;
};

/// Embedding contract: one vector per input, order preserved, uniform
/// dimension within a batch (drift is an error, not a truncation).
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;

    std::vector<Vec> embed_texts(const std::vector<std::string>& texts) {
        if (texts.empty()) raise(ErrorKind::validation, "embed_texts with no inputs");
        for (const auto& t : texts)
            if (t.empty()) raise(ErrorKind::validation, "embed_texts with an empty input");
        ++batches_;
        texts_ += texts.size();
        std::vector<Vec> vecs = do_embed(texts);
        if (vecs.size() != texts.size())
            raise(ErrorKind::protocol, "expected " + std::to_string(texts.size()) +
                                           " vectors, got " + std::to_string(vecs.size()));
        for (const auto& v : vecs)
            if (v.size() != vecs.front().size())
                raise(ErrorKind::dimension_mismatch,
                      "dimension drift within a batch: " + std::to_string(vecs.front().size()) +
                          " vs " + std::to_string(v.size()));
        return vecs;
    }

    Vec embed_one(const std::string& text) { return embed_texts({text}).front(); }

    /// Stable identifier recorded in embedding caches.
    virtual std::string embedder_id() const = 0;

    std::uint64_t embed_batches() const { return batches_.load(); }
    std::uint64_t embedded_texts() const { return texts_.load(); }

protected:
    virtual std::vector<Vec> do_embed(const std::vector<std::string>& texts) = 0;

private:
    std::atomic<std::uint64_t> batches_{0};
    std::atomic<std::uint64_t> texts_{0};
};

/// Embeds every passage (title + text) and stamps the corpus dimension.
/// Batched to keep request sizes bounded.
inline void embed_corpus(Corpus& corpus, EmbeddingBackend& backend, std::size_t batch_size = 64) {
    if (corpus.passages.empty()) raise(ErrorKind::validation, "embed_corpus on an empty corpus");
    std::size_t dim = 0;
    for (std::size_t begin = 0; begin < corpus.passages.size(); begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, corpus.passages.size());
        std::vector<std::string> batch;
        batch.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            const auto& p = corpus.passages[i];
            batch.push_back(p.title.empty() ? p.text : p.title + "\n" + p.text);
        }
        auto vecs = backend.embed_texts(batch);
        if (dim == 0)
            dim = vecs.front().size();
        else if (vecs.front().size() != dim)
            raise(ErrorKind::dimension_mismatch,
                  "embedding dimension changed between batches: " + std::to_string(dim) + " vs " +
                      std::to_string(vecs.front().size()));
        for (std::size_t i = begin; i < end; ++i)
            corpus.passages[i].embedding = std::move(vecs[i - begin]);
    }
    corpus.dim = dim;
}

} // namespace bridgerag
