#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "bridgerag/backends.hpp"
#include "bridgerag/error.hpp"
#include "bridgerag/judge.hpp"
#include "bridgerag/mock_backends.hpp"

namespace bridgerag {

/// Pipeline hyperparameters with the published defaults, plus backend
/// wiring. Flags override a config file; the file overrides these defaults.
struct RunConfig {
    std::size_t k1 = 5;        // hop-1 depth; bridge = top-1
    int n_svo = 3;             // SVO queries per question
    std::size_t k2 = 10;       // per-SVO-query retrieval depth
    std::size_t svo_cap = 15;  // union_max candidates retained
    std::size_t entity_k = 5;  // per-entity retrieval depth
    std::size_t pool_cap = 20; // final pool size
    double alpha = 0.1;        // fusion weight on the SVO percentile
    std::string condition = "C";
    bool mock = false;
    std::size_t mock_dim = 256;
    std::uint64_t seed = 0;
    int workers = 4;
    BackendConfig chat_backend;
    BackendConfig embed_backend;

    JudgeCondition judge_condition() const { return JudgeCondition::parse(condition); }

    void validate() const {
        if (k1 == 0 || k2 == 0 || entity_k == 0 || pool_cap == 0 || svo_cap == 0)
            raise(ErrorKind::config, "retrieval depths and caps must be >= 1");
        if (n_svo < 1) raise(ErrorKind::config, "n_svo must be >= 1");
        if (alpha < 0.0 || alpha > 1.0) raise(ErrorKind::config, "alpha must lie in [0, 1]");
        if (workers < 1) raise(ErrorKind::config, "workers must be >= 1");
        JudgeCondition::parse(condition);
        if (!mock) {
            chat_backend.validate();
            embed_backend.validate();
        }
    }

    /// Stable identity of everything that shapes pipeline output; recorded
    /// in each trace so re-runs and re-fusions can be matched to a config.
    std::string fingerprint() const {
        nlohmann::ordered_json j;
        j["k1"] = k1;
        j["n_svo"] = n_svo;
        j["k2"] = k2;
        j["svo_cap"] = svo_cap;
        j["entity_k"] = entity_k;
        j["pool_cap"] = pool_cap;
        j["alpha"] = alpha;
        j["condition"] = condition;
        j["mock"] = mock;
        j["mock_dim"] = mock_dim;
        j["chat_model"] = chat_backend.model_name;
        j["embed_model"] = embed_backend.model_name;
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(j.dump())));
        return std::string("fnv1a:") + buf;
    }
};

inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
    cfg.k1 = j.value("k1", cfg.k1);
    cfg.n_svo = j.value("n_svo", cfg.n_svo);
    cfg.k2 = j.value("k2", cfg.k2);
    cfg.svo_cap = j.value("svo_cap", cfg.svo_cap);
    cfg.entity_k = j.value("entity_k", cfg.entity_k);
    cfg.pool_cap = j.value("pool_cap", cfg.pool_cap);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.condition = j.value("condition", cfg.condition);
    cfg.mock = j.value("mock", cfg.mock);
    cfg.mock_dim = j.value("mock_dim", cfg.mock_dim);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.workers = j.value("workers", cfg.workers);
    auto backend = [](BackendConfig& b, const nlohmann::json& bj) {
        b.base_url = bj.value("base_url", b.base_url);
        b.model_name = bj.value("model_name", b.model_name);
        if (bj.contains("timeout_ms")) b.timeout = std::chrono::milliseconds(bj["timeout_ms"].get<int>());
        b.retries = bj.value("retries", b.retries);
        b.concurrency_limit = bj.value("concurrency_limit", b.concurrency_limit);
        b.max_input_tokens = bj.value("max_input_tokens", b.max_input_tokens);
    };
    if (j.contains("chat_backend")) backend(cfg.chat_backend, j["chat_backend"]);
    if (j.contains("embed_backend")) backend(cfg.embed_backend, j["embed_backend"]);
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::config, "cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::config, path + ": " + e.what());
    }
    RunConfig cfg;
    apply_config_json(cfg, j);
    return cfg;
}

} // namespace bridgerag
