#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgerag/corpus.hpp"
#include "bridgerag/judge.hpp"
#include "bridgerag/pipeline.hpp"

namespace bridgerag {

inline constexpr const char* kTraceSchema = "bridgerag-trace/1";

/// Full per-query decision record. Everything needed to re-rank offline is
/// here: re-fusing (judge scores, svo scores, alpha) reproduces top5 exactly.
struct RetrievalTrace {
    std::string schema_version = kTraceSchema;
    std::string config_fingerprint;
    std::string query_id;
    std::string question;
    std::string subtype = "unknown";
    std::vector<std::string> gold_ids; // empty when gold unknown
    std::string condition = "C";
    std::optional<std::string> error; // set when the query failed mid-pipeline

    std::vector<RankedHit> hop1_hits;
    std::string bridge_id;
    double bridge_score = 0.0;
    std::vector<std::string> svo_queries;
    std::string e1, e2;
    CandidatePool pool;
    std::optional<JudgeVerdict> judge;
    double alpha = 0.1;
    std::map<std::string, double> pit_judge;
    std::map<std::string, double> pit_svo;
    std::map<std::string, double> fused;
    std::vector<std::string> top5;
    std::optional<double> r_at_5;
    // cos(query embedding, gold embedding) captured at run time; lets the
    // mechanism lab apply the g2 tie rule with zero new embedding calls.
    std::map<std::string, double> gold_query_cos;

    bool operator==(const RetrievalTrace& other) const;
};

// ---------------------------------------------------------------------------
// JSON (stable key order; doubles round-trip bit-exactly)
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json hits_to_json(const std::vector<RankedHit>& hits) {
    nlohmann::ordered_json arr = nlohmann::json::array();
    for (const auto& h : hits) arr.push_back({{"id", h.passage_id}, {"score", h.score}});
    return arr;
}

inline std::vector<RankedHit> hits_from_json(const nlohmann::json& arr) {
    std::vector<RankedHit> hits;
    for (const auto& j : arr)
        hits.push_back({j.at("id").get<std::string>(), j.at("score").get<double>()});
    return hits;
}

} // namespace detail

inline nlohmann::ordered_json to_json(const RetrievalTrace& t) {
    nlohmann::ordered_json j;
    j["schema_version"] = t.schema_version;
    j["config_fingerprint"] = t.config_fingerprint;
    j["query_id"] = t.query_id;
    j["question"] = t.question;
    j["subtype"] = t.subtype;
    j["gold_ids"] = t.gold_ids;
    j["condition"] = t.condition;
    j["error"] = t.error ? nlohmann::ordered_json(*t.error) : nlohmann::ordered_json(nullptr);
    j["hop1"] = detail::hits_to_json(t.hop1_hits);
    j["bridge"] = {{"id", t.bridge_id}, {"score", t.bridge_score}};
    j["svo_queries"] = t.svo_queries;
    j["entities"] = {{"e1", t.e1}, {"e2", t.e2}};
    nlohmann::ordered_json pool = nlohmann::json::array();
    for (const auto& e : t.pool.entries) {
        nlohmann::ordered_json pe;
        pe["id"] = e.passage_id;
        pe["svo_score"] =
            e.svo_score ? nlohmann::ordered_json(*e.svo_score) : nlohmann::ordered_json(nullptr);
        pe["sources"] = source_names(e.sources);
        pe["score"] = e.score;
        pe["rank"] = e.pool_rank;
        pool.push_back(std::move(pe));
    }
    j["pool"] = std::move(pool);
    if (t.judge) {
        nlohmann::ordered_json jj;
        jj["scores"] = t.judge->scores;
        nlohmann::ordered_json warns = nlohmann::json::array();
        for (const auto& w : t.judge->warnings)
            warns.push_back({{"code", w.code}, {"detail", w.detail}});
        jj["warnings"] = std::move(warns);
        jj["raw_response"] = t.judge->raw_response;
        j["judge"] = std::move(jj);
    } else {
        j["judge"] = nullptr;
    }
    j["alpha"] = t.alpha;
    j["pit_judge"] = t.pit_judge;
    j["pit_svo"] = t.pit_svo;
    j["fused"] = t.fused;
    j["top5"] = t.top5;
    j["r_at_5"] = t.r_at_5 ? nlohmann::ordered_json(*t.r_at_5) : nlohmann::ordered_json(nullptr);
    j["gold_query_cos"] = t.gold_query_cos;
    return j;
}

inline RetrievalTrace trace_from_json(const nlohmann::json& j) {
    RetrievalTrace t;
    t.schema_version = j.at("schema_version").get<std::string>();
    if (t.schema_version != kTraceSchema)
        raise(ErrorKind::version_mismatch, "trace schema '" + t.schema_version +
                                               "', this build reads '" + kTraceSchema + "'");
    t.config_fingerprint = j.value("config_fingerprint", std::string{});
    t.query_id = j.at("query_id").get<std::string>();
    t.question = j.value("question", std::string{});
    t.subtype = j.value("subtype", std::string{"unknown"});
    t.gold_ids = j.value("gold_ids", std::vector<std::string>{});
    t.condition = j.value("condition", std::string{"C"});
    if (j.contains("error") && !j["error"].is_null()) t.error = j["error"].get<std::string>();
    t.hop1_hits = detail::hits_from_json(j.value("hop1", nlohmann::json::array()));
    if (j.contains("bridge") && j["bridge"].is_object()) {
        t.bridge_id = j["bridge"].value("id", std::string{});
        t.bridge_score = j["bridge"].value("score", 0.0);
    }
    t.svo_queries = j.value("svo_queries", std::vector<std::string>{});
    if (j.contains("entities")) {
        t.e1 = j["entities"].value("e1", std::string{});
        t.e2 = j["entities"].value("e2", std::string{});
    }
    for (const auto& pe : j.value("pool", nlohmann::json::array())) {
        PoolEntry e;
        e.passage_id = pe.at("id").get<std::string>();
        if (pe.contains("svo_score") && !pe["svo_score"].is_null())
            e.svo_score = pe["svo_score"].get<double>();
        e.sources = parse_sources(pe.value("sources", std::vector<std::string>{}));
        e.score = pe.value("score", 0.0);
        e.pool_rank = pe.value("rank", -1);
        t.pool.entries.push_back(std::move(e));
    }
    if (j.contains("judge") && !j["judge"].is_null()) {
        JudgeVerdict v;
        v.scores = j["judge"].at("scores").get<std::map<std::string, int>>();
        for (const auto& w : j["judge"].value("warnings", nlohmann::json::array()))
            v.warnings.push_back({w.value("code", std::string{}), w.value("detail", std::string{})});
        v.raw_response = j["judge"].value("raw_response", std::string{});
        v.condition = JudgeCondition::parse(t.condition);
        t.judge = std::move(v);
    }
    t.alpha = j.value("alpha", 0.1);
    t.pit_judge = j.value("pit_judge", std::map<std::string, double>{});
    t.pit_svo = j.value("pit_svo", std::map<std::string, double>{});
    t.fused = j.value("fused", std::map<std::string, double>{});
    t.top5 = j.value("top5", std::vector<std::string>{});
    if (j.contains("r_at_5") && !j["r_at_5"].is_null()) t.r_at_5 = j["r_at_5"].get<double>();
    t.gold_query_cos = j.value("gold_query_cos", std::map<std::string, double>{});
    return t;
}

inline bool RetrievalTrace::operator==(const RetrievalTrace& other) const {
    return to_json(*this) == to_json(other);
}

// ---------------------------------------------------------------------------
// JSONL persistence
// ---------------------------------------------------------------------------

inline void write_traces(const std::vector<RetrievalTrace>& traces, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(ErrorKind::io, "cannot write trace file '" + path + "'");
    for (const auto& t : traces) out << to_json(t).dump() << '\n';
}

inline std::vector<RetrievalTrace> read_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::io, "cannot open trace file '" + path + "'");
    std::vector<RetrievalTrace> traces;
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
        traces.push_back(trace_from_json(j));
    }
    return traces;
}

/// Map traces by query id; duplicate ids are an error.
inline std::map<std::string, RetrievalTrace> traces_by_query(
    const std::vector<RetrievalTrace>& traces) {
    std::map<std::string, RetrievalTrace> out;
    for (const auto& t : traces)
        if (!out.emplace(t.query_id, t).second)
            raise(ErrorKind::duplicate_id, "trace set has duplicate query id '" + t.query_id + "'");
    return out;
}

// ---------------------------------------------------------------------------
// Offline re-fusion
// ---------------------------------------------------------------------------

/// Recomputes PIT + fusion from the raw scores stored in a trace, with a
/// possibly different alpha. Zero model calls; with the stored alpha this
/// reproduces the stored top5 exactly.
inline FusedRanking refuse_trace(const RetrievalTrace& t, double alpha) {
    if (t.error) raise(ErrorKind::validation, "cannot re-fuse errored trace '" + t.query_id + "'");
    return fuse_and_rank(t.judge, t.pool, alpha);
}

} // namespace bridgerag
