#pragma once

#include <atomic>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgerag/backends.hpp"
#include "bridgerag/corpus.hpp"
#include "bridgerag/prompts.hpp"

namespace bridgerag {

/// Counting facade over exact top-k search; one increment per retrieval
/// pass, so the 6-passes-per-query contract is observable.
class Retriever {
public:
    explicit Retriever(const Corpus& corpus) : corpus_(&corpus) {}

    std::vector<RankedHit> top_k(const Vec& query_vec, std::size_t k) const {
        passes_.fetch_add(1, std::memory_order_relaxed);
        return bridgerag::top_k(*corpus_, query_vec, k);
    }

    const Corpus& corpus() const { return *corpus_; }
    std::uint64_t passes() const { return passes_.load(); }

private:
    const Corpus* corpus_;
    mutable std::atomic<std::uint64_t> passes_{0};
};

struct Bridge {
    std::string passage_id;
    double score = 0.0;
    std::vector<RankedHit> hop1_hits; // full top-k1 list, retained for the trace
};

struct SvoQueries {
    std::vector<std::string> queries; // exactly n
};

struct EntityPair {
    std::string e1;
    std::string e2; // e1 == e2 is the single-entity fallback
};

enum PoolSource : unsigned {
    kSourceSvo = 1u << 0,
    kSourceE1 = 1u << 1,
    kSourceE2 = 1u << 2,
};

inline std::vector<std::string> source_names(unsigned mask) {
    std::vector<std::string> out;
    if (mask & kSourceSvo) out.push_back("svo");
    if (mask & kSourceE1) out.push_back("e1");
    if (mask & kSourceE2) out.push_back("e2");
    return out;
}

inline unsigned parse_sources(const std::vector<std::string>& names) {
    unsigned mask = 0;
    for (const auto& n : names) {
        if (n == "svo") mask |= kSourceSvo;
        else if (n == "e1") mask |= kSourceE1;
        else if (n == "e2") mask |= kSourceE2;
        else raise(ErrorKind::parse, "unknown pool source '" + n + "'");
    }
    return mask;
}

struct PoolEntry {
    std::string passage_id;
    std::optional<double> svo_score; // union_max merged cosine, present iff svo-sourced
    unsigned sources = 0;
    double score = 0.0; // assembly score: max over contributing retrievals
    int pool_rank = -1; // position after assembly, 0-based
};

struct CandidatePool {
    std::vector<PoolEntry> entries; // sorted by score desc, id asc; <= cap

    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.passage_id);
        return out;
    }

    const PoolEntry* find(const std::string& id) const {
        for (const auto& e : entries)
            if (e.passage_id == id) return &e;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Stage operations
// ---------------------------------------------------------------------------

/// Hop-1: the top-1 cosine passage is the bridge; the full top-k1 list is
/// kept for the trace.
inline Bridge select_bridge(const Retriever& retriever, const Vec& query_vec, std::size_t k1) {
    if (k1 == 0) raise(ErrorKind::validation, "select_bridge requires k1 >= 1");
    auto hits = retriever.top_k(query_vec, k1);
    if (hits.empty()) raise(ErrorKind::validation, "select_bridge over an empty corpus");
    return {hits.front().passage_id, hits.front().score, std::move(hits)};
}

namespace detail {

inline std::optional<std::vector<std::string>> try_parse_svo_json(const std::string& raw, int n) {
    auto b = raw.find('{');
    auto e = raw.rfind('}');
    if (b == std::string::npos || e == std::string::npos || e < b) return std::nullopt;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(raw.substr(b, e - b + 1));
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
    if (!j.contains("queries") || !j["queries"].is_array()) return std::nullopt;
    std::vector<std::string> queries;
    for (const auto& q : j["queries"]) {
        if (!q.is_string()) return std::nullopt;
        std::string s = trim(q.get<std::string>());
        if (s.empty()) return std::nullopt;
        queries.push_back(std::move(s));
    }
    if (static_cast<int>(queries.size()) < n) return std::nullopt; // too few: retryable
    queries.resize(n); // extras are truncated by declared policy
    return queries;
}

} // namespace detail

/// Asks the chat backend for exactly n SVO queries. One retry on a
/// malformed or short completion, then a hard parse error.
inline SvoQueries generate_svo_queries(ChatBackend& chat, const std::string& question,
                                       const std::string& bridge_text, int n) {
    if (n < 1) raise(ErrorKind::validation, "generate_svo_queries requires n >= 1");
    const ChatRequest req = svo_prompt(question, bridge_text, n);
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string raw = chat.chat(req);
        if (auto queries = detail::try_parse_svo_json(raw, n)) return {std::move(*queries)};
    }
    raise(ErrorKind::parse,
          "SVO generation did not yield " + std::to_string(n) + " queries after retry");
}

/// Per-query top-k2 retrievals merged by per-passage maximum cosine
/// (union_max), top-cap retained.
inline std::vector<PoolEntry> svo_retrieve(const Retriever& retriever, EmbeddingBackend& embedder,
                                           const SvoQueries& svo, std::size_t k2,
                                           std::size_t cap) {
    if (svo.queries.empty()) raise(ErrorKind::validation, "svo_retrieve with no queries");
    if (k2 == 0) raise(ErrorKind::validation, "svo_retrieve requires k2 >= 1");
    auto vecs = embedder.embed_texts(svo.queries);
    std::map<std::string, double> merged;
    for (const auto& v : vecs) {
        for (const auto& hit : retriever.top_k(v, k2)) {
            auto [it, inserted] = merged.emplace(hit.passage_id, hit.score);
            if (!inserted && hit.score > it->second) it->second = hit.score;
        }
    }
    std::vector<PoolEntry> entries;
    entries.reserve(merged.size());
    for (const auto& [id, score] : merged)
        entries.push_back({id, score, kSourceSvo, score, -1});
    std::sort(entries.begin(), entries.end(), [](const PoolEntry& a, const PoolEntry& b) {
        return ranked_before(a.passage_id, a.score, b.passage_id, b.score);
    });
    if (entries.size() > cap) entries.resize(cap);
    return entries;
}

struct EntityExtraction {
    EntityPair entities;
    std::vector<std::string> warnings;
};

/// Splits the completion on " | "; exactly two trimmed non-empty parts.
/// More than two keeps the first two with a warning; fewer retries the
/// chat call once and then errors.
inline EntityExtraction extract_entities(ChatBackend& chat, const std::string& question,
                                         const std::string& bridge_text) {
    const ChatRequest req = entity_prompt(question, bridge_text);
    EntityExtraction out;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string raw = chat.chat(req);
        std::vector<std::string> parts;
        std::size_t pos = 0;
        while (true) {
            auto bar = raw.find(" | ", pos);
            if (bar == std::string::npos) {
                parts.push_back(trim(raw.substr(pos)));
                break;
            }
            parts.push_back(trim(raw.substr(pos, bar - pos)));
            pos = bar + 3;
        }
        std::erase_if(parts, [](const std::string& p) { return p.empty(); });
        if (parts.size() >= 2) {
            if (parts.size() > 2)
                out.warnings.push_back("entity_extra_parts: kept first two of " +
                                       std::to_string(parts.size()));
            out.entities = {parts[0], parts[1]};
            return out;
        }
    }
    raise(ErrorKind::parse, "entity extraction did not yield two entities after retry");
}

/// Top-k passages by cosine of the raw embedded entity string.
inline std::vector<PoolEntry> entity_retrieve(const Retriever& retriever,
                                              EmbeddingBackend& embedder,
                                              const std::string& entity, std::size_t k,
                                              PoolSource source) {
    if (entity.empty()) raise(ErrorKind::validation, "entity_retrieve with empty entity");
    const Vec v = embedder.embed_one(entity);
    std::vector<PoolEntry> entries;
    for (const auto& hit : retriever.top_k(v, k))
        entries.push_back({hit.passage_id, std::nullopt, static_cast<unsigned>(source), hit.score, -1});
    return entries;
}

/// Union with dedup by passage id; sources merged, assembly score = max
/// over contributing retrievals, top-cap retained, ties id-ascending.
inline CandidatePool assemble_pool(const std::vector<PoolEntry>& svo_entries,
                                   const std::vector<PoolEntry>& e1_entries,
                                   const std::vector<PoolEntry>& e2_entries, std::size_t cap) {
    if (svo_entries.empty() && e1_entries.empty() && e2_entries.empty())
        raise(ErrorKind::insufficient_data, "assemble_pool: all source lists empty");
    std::map<std::string, PoolEntry> merged;
    auto absorb = [&](const std::vector<PoolEntry>& list) {
        for (const auto& e : list) {
            auto [it, inserted] = merged.emplace(e.passage_id, e);
            if (inserted) continue;
            PoolEntry& m = it->second;
            m.sources |= e.sources;
            if (e.score > m.score) m.score = e.score;
            if (e.svo_score) {
                if (m.svo_score)
                    m.svo_score = std::max(*m.svo_score, *e.svo_score);
                else
                    m.svo_score = e.svo_score;
            }
        }
    };
    absorb(svo_entries);
    absorb(e1_entries);
    absorb(e2_entries);
    CandidatePool pool;
    pool.entries.reserve(merged.size());
    for (auto& [id, e] : merged) pool.entries.push_back(std::move(e));
    std::sort(pool.entries.begin(), pool.entries.end(), [](const PoolEntry& a, const PoolEntry& b) {
        return ranked_before(a.passage_id, a.score, b.passage_id, b.score);
    });
    if (pool.entries.size() > cap) pool.entries.resize(cap);
    for (std::size_t i = 0; i < pool.entries.size(); ++i)
        pool.entries[i].pool_rank = static_cast<int>(i);
    return pool;
}

} // namespace bridgerag
