#pragma once

#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "bridgerag/backends.hpp"

namespace bridgerag {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// POSTs a JSON body to a path; throws Error(transport|timeout) on failure.
/// Injectable so the retry/parse/concurrency logic is testable without a
/// live server.
using HttpTransport = std::function<HttpResponse(const std::string& path, const std::string& body)>;

inline HttpTransport make_httplib_transport(const BackendConfig& cfg) {
    return [cfg](const std::string& path, const std::string& body) -> HttpResponse {
        // One client per request: httplib clients are not safe for
        // concurrent calls, and the gate may admit several at once.
        httplib::Client client(cfg.base_url);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
        client.set_connection_timeout(secs.count() > 0 ? secs.count() : 1, 0);
        client.set_read_timeout(secs.count() > 0 ? secs.count() : 1, 0);
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            const auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                err == httplib::Error::Write)
                raise(ErrorKind::timeout, "request to " + cfg.base_url + path + " timed out");
            raise(ErrorKind::transport,
                  "request to " + cfg.base_url + path + " failed: " + httplib::to_string(err));
        }
        return {res->status, res->body};
    };
}

namespace detail {

/// Shared retry loop: fixed backoff, at most cfg.retries attempts, retries
/// only transport-level failures and 5xx. 4xx fails fast.
inline HttpResponse post_with_retries(const BackendConfig& cfg, ConcurrencyGate& gate,
                                      const HttpTransport& transport, const std::string& path,
                                      const std::string& body) {
    Error last(ErrorKind::transport, "no attempts made");
    for (int attempt = 1; attempt <= cfg.retries; ++attempt) {
        try {
            HttpResponse resp;
            {
                ConcurrencyGate::Guard guard(gate);
                resp = transport(path, body);
            }
            if (resp.status >= 200 && resp.status < 300) return resp;
            if (resp.status >= 500) {
                last = Error(ErrorKind::http_status,
                             "status " + std::to_string(resp.status) + " from " + path, attempt);
            } else {
                throw Error(ErrorKind::http_status,
                            "status " + std::to_string(resp.status) + " from " + path, attempt);
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::transport && e.kind() != ErrorKind::timeout) throw;
            last = Error(e.kind(), std::string(e.what()), attempt);
        }
        if (attempt < cfg.retries) std::this_thread::sleep_for(cfg.retry_backoff);
    }
    throw Error(last.kind(),
                std::string(last.what()) + " (after " + std::to_string(cfg.retries) + " attempts)",
                cfg.retries);
}

} // namespace detail

/// OpenAI-compatible chat-completions client: POST {model, messages[],
/// temperature, max_tokens} to /v1/chat/completions, read
/// choices[0].message.content.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(BackendConfig cfg, HttpTransport transport = nullptr)
        : cfg_(std::move(cfg)),
          gate_(cfg_.concurrency_limit),
          transport_(transport ? std::move(transport) : make_httplib_transport(cfg_)) {
        cfg_.validate();
        set_max_input_tokens(cfg_.max_input_tokens);
    }

    const BackendConfig& config() const { return cfg_; }

protected:
    std::string do_chat(const ChatRequest& req) override {
        nlohmann::ordered_json body;
        body["model"] = cfg_.model_name;
        body["messages"] = nlohmann::json::array({
            {{"role", "system"}, {"content", req.system}},
            {{"role", "user"}, {"content", req.user}},
        });
        body["temperature"] = req.temperature;
        body["max_tokens"] = req.max_output_tokens;
        auto resp = detail::post_with_retries(cfg_, gate_, transport_, "/v1/chat/completions",
                                              body.dump());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(resp.body);
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorKind::protocol, std::string("chat response is not JSON: ") + e.what());
        }
        if (!j.contains("choices") || j["choices"].empty() ||
            !j["choices"][0].contains("message"))
            raise(ErrorKind::protocol, "chat response missing choices[0].message");
        return j["choices"][0]["message"].value("content", std::string{});
    }

private:
    BackendConfig cfg_;
    ConcurrencyGate gate_;
    HttpTransport transport_;
};

/// Embedding client: POST {model, input[]} to /v1/embeddings, vectors read
/// back in input order (honoring the per-item index field when present).
class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(BackendConfig cfg, HttpTransport transport = nullptr)
        : cfg_(std::move(cfg)),
          gate_(cfg_.concurrency_limit),
          transport_(transport ? std::move(transport) : make_httplib_transport(cfg_)) {
        cfg_.validate();
    }

    std::string embedder_id() const override { return cfg_.model_name; }

    const BackendConfig& config() const { return cfg_; }

protected:
    std::vector<Vec> do_embed(const std::vector<std::string>& texts) override {
        nlohmann::ordered_json body;
        body["model"] = cfg_.model_name;
        body["input"] = texts;
        auto resp = detail::post_with_retries(cfg_, gate_, transport_, "/v1/embeddings",
                                              body.dump());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(resp.body);
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorKind::protocol, std::string("embedding response is not JSON: ") + e.what());
        }
        if (!j.contains("data"))
            raise(ErrorKind::protocol, "embedding response missing data array");
        std::vector<Vec> out(texts.size());
        std::vector<bool> filled(texts.size(), false);
        std::size_t next = 0;
        for (const auto& item : j["data"]) {
            std::size_t idx = item.contains("index") ? item["index"].get<std::size_t>() : next++;
            if (idx >= out.size())
                raise(ErrorKind::protocol, "embedding index " + std::to_string(idx) +
                                               " out of range for batch of " +
                                               std::to_string(out.size()));
            out[idx] = item.at("embedding").get<Vec>();
            filled[idx] = true;
        }
        for (std::size_t i = 0; i < filled.size(); ++i)
            if (!filled[i])
                raise(ErrorKind::protocol,
                      "embedding response missing vector for input " + std::to_string(i));
        return out;
    }

private:
    BackendConfig cfg_;
    ConcurrencyGate gate_;
    HttpTransport transport_;
};

} // namespace bridgerag
