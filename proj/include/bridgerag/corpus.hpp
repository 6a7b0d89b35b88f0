#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "bridgerag/error.hpp"

namespace bridgerag {

using Vec = std::vector<double>;

struct Passage {
    std::string id;
    std::string title;
    std::string text;
    std::optional<Vec> embedding;
};

/// Immutable after ingestion + embedding; concurrent readers are safe.
struct Corpus {
    std::vector<Passage> passages;
    std::size_t dim = 0; // 0 until embeddings are attached

    const Passage* find(const std::string& id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &passages[it->second];
    }

    bool contains(const std::string& id) const { return by_id_.count(id) != 0; }

    std::size_t size() const { return passages.size(); }

    void rebuild_index() {
        by_id_.clear();
        by_id_.reserve(passages.size());
        for (std::size_t i = 0; i < passages.size(); ++i) {
            auto [it, inserted] = by_id_.emplace(passages[i].id, i);
            if (!inserted)
                raise(ErrorKind::duplicate_id, "corpus contains duplicate id '" + passages[i].id + "'");
        }
    }

private:
    std::unordered_map<std::string, std::size_t> by_id_;
};

enum class Subtype { bridge_comparison, compositional, comparison, inference, unknown };

inline const char* to_string(Subtype s) {
    switch (s) {
        case Subtype::bridge_comparison: return "bridge_comparison";
        case Subtype::compositional: return "compositional";
        case Subtype::comparison: return "comparison";
        case Subtype::inference: return "inference";
        case Subtype::unknown: return "unknown";
    }
    return "unknown";
}

/// Maps a label to a subtype; anything unrecognized becomes `unknown` and
/// bumps `*warnings` when provided.
inline Subtype parse_subtype(const std::string& label, std::size_t* warnings = nullptr) {
    if (label == "bridge_comparison") return Subtype::bridge_comparison;
    if (label == "compositional") return Subtype::compositional;
    if (label == "comparison") return Subtype::comparison;
    if (label == "inference") return Subtype::inference;
    if (label == "unknown" || label.empty()) return Subtype::unknown;
    if (warnings) ++*warnings;
    return Subtype::unknown;
}

struct QueryRecord {
    std::string id;
    std::string question;
    std::vector<std::string> gold_ids; // sorted, unique, non-empty
    Subtype subtype = Subtype::unknown;
};

struct RankedHit {
    std::string passage_id;
    double score = 0.0;

    bool operator==(const RankedHit&) const = default;
};

// ---------------------------------------------------------------------------
// Vector math
// ---------------------------------------------------------------------------

inline double cosine(const Vec& u, const Vec& v) {
    if (u.size() != v.size())
        raise(ErrorKind::dimension_mismatch,
              "cosine over vectors of dimension " + std::to_string(u.size()) + " and " +
                  std::to_string(v.size()));
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0)
        raise(ErrorKind::zero_vector, "cosine of a zero-norm vector is undefined");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

/// score descending, then passage id ascending. The single tie-break rule
/// used by every ranked surface in the project.
inline bool ranked_before(const std::string& id_a, double score_a, const std::string& id_b,
                          double score_b) {
    if (score_a != score_b) return score_a > score_b;
    return id_a < id_b;
}

/// Exact brute-force top-k by cosine. k larger than the corpus returns the
/// full ranking.
inline std::vector<RankedHit> top_k(const Corpus& corpus, const Vec& query_vec, std::size_t k) {
    if (k == 0) raise(ErrorKind::validation, "top_k requires k >= 1");
    if (corpus.passages.empty()) raise(ErrorKind::validation, "top_k over an empty corpus");
    std::vector<RankedHit> hits;
    hits.reserve(corpus.passages.size());
    for (const auto& p : corpus.passages) {
        if (!p.embedding)
            raise(ErrorKind::validation, "passage '" + p.id + "' has no embedding");
        hits.push_back({p.id, cosine(query_vec, *p.embedding)});
    }
    const std::size_t n = std::min(k, hits.size());
    auto cmp = [](const RankedHit& a, const RankedHit& b) {
        return ranked_before(a.passage_id, a.score, b.passage_id, b.score);
    };
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), cmp);
    hits.resize(n);
    return hits;
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct RawRecord {
    std::string id;
    std::string title;
    std::string text;
};

struct IngestResult {
    Corpus corpus;
    std::size_t rejected_empty = 0; // records dropped for empty text
    std::size_t deduped = 0;        // records dropped as exact-text duplicates
};

inline std::string trim(std::string_view s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

/// Exact-string dedup after trimming leading/trailing whitespace only;
/// first occurrence wins. A repeated id is a hard error unless dedup drops
/// the record first.
inline IngestResult ingest_corpus(const std::vector<RawRecord>& records, bool dedup) {
    IngestResult out;
    std::unordered_map<std::string, std::string> text_by_id; // id -> normalized text
    std::unordered_set<std::string> seen_texts;
    for (const auto& r : records) {
        if (r.id.empty()) raise(ErrorKind::validation, "record with empty id");
        const std::string norm = trim(r.text);
        if (norm.empty()) {
            ++out.rejected_empty;
            continue;
        }
        if (auto it = text_by_id.find(r.id); it != text_by_id.end()) {
            if (it->second != norm)
                raise(ErrorKind::duplicate_id,
                      "id '" + r.id + "' appears twice with differing text");
            if (dedup) {
                ++out.deduped;
                continue;
            }
            raise(ErrorKind::duplicate_id, "id '" + r.id + "' appears twice (dedup off)");
        }
        if (dedup && !seen_texts.insert(norm).second) {
            ++out.deduped;
            continue;
        }
        text_by_id.emplace(r.id, norm);
        out.corpus.passages.push_back({r.id, r.title, r.text, std::nullopt});
    }
    out.corpus.rebuild_index();
    return out;
}

// ---------------------------------------------------------------------------
// JSONL files
// ---------------------------------------------------------------------------

/// Corpus file: one {"id","title","text"} object per line.
inline std::vector<RawRecord> read_corpus_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::io, "cannot open corpus file '" + path + "'");
    std::vector<RawRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("id") || !j.contains("text"))
            raise(ErrorKind::parse,
                  path + ":" + std::to_string(lineno) + ": corpus record needs id and text");
        records.push_back({j.at("id").get<std::string>(), j.value("title", std::string{}),
                           j.at("text").get<std::string>()});
    }
    return records;
}

struct QuerySet {
    std::vector<QueryRecord> queries;
    std::size_t subtype_warnings = 0;
};

/// Query file: one {"id","question","gold_ids",["subtype"]} object per line.
/// When `validate_against` is given, every gold id must resolve in it.
inline QuerySet load_queryset(const std::string& path, const Corpus* validate_against = nullptr) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::io, "cannot open query file '" + path + "'");
    QuerySet out;
    std::string line;
    std::size_t lineno = 0;
    std::unordered_set<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        QueryRecord q;
        if (!j.contains("id") || !j.contains("question") || !j.contains("gold_ids"))
            raise(ErrorKind::parse, path + ":" + std::to_string(lineno) +
                                        ": query record needs id, question, gold_ids");
        q.id = j.at("id").get<std::string>();
        q.question = j.at("question").get<std::string>();
        std::set<std::string> golds;
        for (const auto& g : j.at("gold_ids")) golds.insert(g.get<std::string>());
        q.gold_ids.assign(golds.begin(), golds.end());
        if (q.gold_ids.empty())
            raise(ErrorKind::validation, "query '" + q.id + "' has empty gold_ids");
        q.subtype = parse_subtype(j.value("subtype", std::string{}), &out.subtype_warnings);
        if (!seen_ids.insert(q.id).second)
            raise(ErrorKind::duplicate_id, "query id '" + q.id + "' appears twice");
        if (validate_against) {
            for (const auto& g : q.gold_ids)
                if (!validate_against->contains(g))
                    raise(ErrorKind::validation,
                          "query '" + q.id + "': gold id '" + g + "' not in corpus");
        }
        out.queries.push_back(std::move(q));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedding cache sidecar
// ---------------------------------------------------------------------------

inline constexpr const char* kEmbeddingCacheSchema = "bridgerag-embcache/1";

inline void write_embedding_cache(const Corpus& corpus, const std::string& path,
                                  const std::string& embedder_id) {
    if (corpus.dim == 0) raise(ErrorKind::validation, "corpus has no embeddings to cache");
    std::ofstream out(path);
    if (!out) raise(ErrorKind::io, "cannot write embedding cache '" + path + "'");
    nlohmann::ordered_json header;
    header["schema"] = kEmbeddingCacheSchema;
    header["dim"] = corpus.dim;
    header["embedder"] = embedder_id;
    out << header.dump() << '\n';
    for (const auto& p : corpus.passages) {
        if (!p.embedding)
            raise(ErrorKind::validation, "passage '" + p.id + "' missing embedding");
        nlohmann::ordered_json row;
        row["id"] = p.id;
        row["v"] = *p.embedding;
        out << row.dump() << '\n';
    }
}

struct CacheLoad {
    bool applied = false;
    std::string reason; // set when not applied (stale dim/embedder)
};

/// Attaches cached embeddings to the corpus. A header whose dimension or
/// embedder id differs from what the caller expects invalidates the cache
/// (returns applied=false) rather than erroring, so callers can re-embed.
inline CacheLoad load_embedding_cache(Corpus& corpus, const std::string& path,
                                      const std::string& expected_embedder) {
    std::ifstream in(path);
    if (!in) return {false, "cache file not found"};
    std::string line;
    if (!std::getline(in, line)) return {false, "empty cache file"};
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::parse, path + ":1: " + e.what());
    }
    if (header.value("schema", std::string{}) != kEmbeddingCacheSchema)
        raise(ErrorKind::version_mismatch,
              "cache schema '" + header.value("schema", std::string{}) + "', expected '" +
                  std::string(kEmbeddingCacheSchema) + "'");
    if (header.value("embedder", std::string{}) != expected_embedder)
        return {false, "cache built by embedder '" + header.value("embedder", std::string{}) +
                           "', expected '" + expected_embedder + "'"};
    const std::size_t dim = header.at("dim").get<std::size_t>();
    std::unordered_map<std::string, Vec> cached;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        Vec v = row.at("v").get<Vec>();
        if (v.size() != dim)
            raise(ErrorKind::dimension_mismatch,
                  path + ":" + std::to_string(lineno) + ": vector of dim " +
                      std::to_string(v.size()) + ", header says " + std::to_string(dim));
        cached.emplace(row.at("id").get<std::string>(), std::move(v));
    }
    for (auto& p : corpus.passages) {
        auto it = cached.find(p.id);
        if (it == cached.end()) return {false, "cache missing passage '" + p.id + "'"};
        p.embedding = it->second;
    }
    corpus.dim = dim;
    return {true, {}};
}

} // namespace bridgerag
