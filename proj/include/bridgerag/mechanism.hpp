#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgerag/backends.hpp"
#include "bridgerag/evaluation.hpp"
#include "bridgerag/judge.hpp"
#include "bridgerag/stats.hpp"
#include "bridgerag/trace.hpp"

namespace bridgerag {

// ---------------------------------------------------------------------------
// Exp. E: pool diversity
// ---------------------------------------------------------------------------

/// Mean pairwise cosine distance (1 - cos) over pool embeddings.
inline double pool_diversity(const std::vector<Vec>& embeddings) {
    if (embeddings.size() < 2)
        raise(ErrorKind::insufficient_data, "pool_diversity needs >= 2 embedded members");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i)
        for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
            sum += 1.0 - cosine(embeddings[i], embeddings[j]);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Exp. F: bridge proximity
// ---------------------------------------------------------------------------

inline double bridge_info(const Vec& bridge_embedding, const Vec& g2_embedding) {
    return cosine(bridge_embedding, g2_embedding);
}

struct G2Identification {
    std::optional<std::string> g2_id;
    std::string rule; // other_than_bridge | lower_query_cos | skipped:...
};

/// Which gold is g2: the gold that is not the bridge; when the bridge
/// missed the gold set entirely, the gold with lower cosine to the query
/// (the harder one). Queries without exactly two golds are skipped.
inline G2Identification identify_g2(const RetrievalTrace& t) {
    if (t.gold_ids.size() != 2) return {std::nullopt, "skipped:gold_count"};
    const std::string &a = t.gold_ids[0], &b = t.gold_ids[1];
    if (t.bridge_id == a) return {b, "other_than_bridge"};
    if (t.bridge_id == b) return {a, "other_than_bridge"};
    auto ca = t.gold_query_cos.find(a);
    auto cb = t.gold_query_cos.find(b);
    if (ca == t.gold_query_cos.end() || cb == t.gold_query_cos.end())
        return {std::nullopt, "skipped:missing_query_cos"};
    if (ca->second == cb->second) return {std::min(a, b), "lower_query_cos"};
    return {ca->second < cb->second ? a : b, "lower_query_cos"};
}

// ---------------------------------------------------------------------------
// Eq.-2 diagnostic: chain-disambiguation gap
// ---------------------------------------------------------------------------

/// cos(q, c) - cos(q (+) b, c), with (+) = newline-joined concatenation.
/// An empty bridge makes the joint context the query itself: gap is 0.
inline double chain_gap(const std::string& question, const std::string& bridge_text,
                        const std::string& candidate_text, EmbeddingBackend& embedder) {
    const Vec q = embedder.embed_one(question);
    const Vec c = embedder.embed_one(candidate_text);
    const double base = cosine(q, c);
    if (bridge_text.empty()) return 0.0;
    const Vec joint = embedder.embed_one(question + "\n" + bridge_text);
    return base - cosine(joint, c);
}

// ---------------------------------------------------------------------------
// Re-judging cached pools
// ---------------------------------------------------------------------------

/// Derives a trace for another judge condition from a cached trace: the
/// pool, entities, SVO queries, bridge, and alpha are reused untouched;
/// only the judge verdict and everything downstream of it change. Condition
/// A needs no chat backend at all.
inline RetrievalTrace rejudge_trace(const RetrievalTrace& t, const Corpus& corpus,
                                    const JudgeCondition& condition, ChatBackend* chat) {
    if (t.error) raise(ErrorKind::validation, "cannot re-judge errored trace '" + t.query_id + "'");
    RetrievalTrace out = t;
    out.condition = condition.label();
    out.judge.reset();
    if (condition.uses_judge()) {
        if (!chat) raise(ErrorKind::validation, "condition " + condition.label() + " needs a chat backend");
        JudgeInputs in;
        in.question = t.question;
        const Passage* bridge = corpus.find(t.bridge_id);
        if (!bridge) raise(ErrorKind::validation, "bridge '" + t.bridge_id + "' not in corpus");
        in.bridge_text = bridge->text;
        in.e1 = t.e1;
        in.e2 = t.e2;
        in.svo_queries = t.svo_queries;
        if (condition.kind == ConditionKind::bridge_substitute &&
            *condition.substitute_source == SubstituteSource::lowest_svo_pool) {
            const PoolEntry& low = lowest_svo_pool_entry(t.pool);
            const Passage* p = corpus.find(low.passage_id);
            if (!p)
                raise(ErrorKind::validation, "pool passage '" + low.passage_id + "' not in corpus");
            in.substitute_passage = p->text;
        }
        const auto ids = t.pool.ids();
        for (const auto& id : ids) {
            const Passage* p = corpus.find(id);
            if (!p) raise(ErrorKind::validation, "pool passage '" + id + "' not in corpus");
            in.candidate_texts.push_back(p->text);
        }
        out.judge = judge_pool(*chat, in, ids, condition);
    }
    const FusedRanking ranking = fuse_and_rank(out.judge, out.pool, t.alpha);
    out.pit_judge = ranking.pit_judge;
    out.pit_svo = ranking.pit_svo;
    out.fused = ranking.fused;
    out.top5 = ranking.top5;
    if (!out.gold_ids.empty()) out.r_at_5 = recall_at_k(out.top5, out.gold_ids, 5);
    else out.r_at_5.reset();
    return out;
}

// ---------------------------------------------------------------------------
// Exp. G: bridge substitution
// ---------------------------------------------------------------------------

struct SubstitutionQueryResult {
    std::string query_id;
    std::vector<std::string> top5;
    double r_at_5 = 0.0;
    std::string substituted_id; // A5 only: which pool passage filled the slot
};

struct SubstitutionResult {
    std::string variant; // condition label
    double mean_r5 = 0.0;
    std::map<std::string, SubtypeStats> per_subtype;
    std::vector<SubstitutionQueryResult> per_query;
};

/// Re-judges every pool with the substituted bridge slot and re-fuses with
/// the trace's own alpha. Pools, entities, SVO queries, and alpha are read
/// from the traces and never altered.
inline SubstitutionResult run_bridge_substitution(const std::vector<RetrievalTrace>& traces_c,
                                                  const Corpus& corpus, SubstituteSource variant,
                                                  ChatBackend& chat) {
    if (traces_c.empty()) raise(ErrorKind::validation, "no traces to substitute over");
    SubstitutionResult out;
    const JudgeCondition condition = JudgeCondition::substitute(variant);
    out.variant = condition.label();
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& t : traces_c) {
        if (t.error) continue;
        const RetrievalTrace derived = rejudge_trace(t, corpus, condition, &chat);
        SubstitutionQueryResult qr;
        qr.query_id = t.query_id;
        qr.top5 = derived.top5;
        qr.r_at_5 = derived.r_at_5.value_or(0.0);
        if (variant == SubstituteSource::lowest_svo_pool)
            qr.substituted_id = lowest_svo_pool_entry(t.pool).passage_id;
        sum += qr.r_at_5;
        ++n;
        auto& st = out.per_subtype[t.subtype];
        st.n += 1;
        st.mean_r5 += qr.r_at_5;
        out.per_query.push_back(std::move(qr));
    }
    if (n == 0) raise(ErrorKind::validation, "all traces errored; nothing substituted");
    out.mean_r5 = sum / static_cast<double>(n);
    for (auto& [_, st] : out.per_subtype) st.mean_r5 /= static_cast<double>(st.n);
    return out;
}

// ---------------------------------------------------------------------------
// Exp. H: flip analysis
// ---------------------------------------------------------------------------

struct FlipRecord {
    std::string query_id;
    std::string top1_b;
    std::string top1_c;
    bool flipped = false;
    double delta_r5 = 0.0; // r@5 under C minus under B
    bool productive = false;
};

struct FlipSubtypeRow {
    std::size_t n = 0;
    std::size_t flips = 0;
    std::size_t productive = 0;
    double flip_rate = 0.0;
    double flip_win_pct = 0.0;       // productive / flips, 0 when no flips
    double mean_delta_flipped = 0.0; // mean r@5 delta among flipped queries
    double mean_delta_noflip = 0.0;
    double delta_vs_noflip = 0.0;    // mean_delta_flipped - mean_delta_noflip
};

struct FlipAnalysis {
    std::vector<FlipRecord> records;
    std::map<std::string, FlipSubtypeRow> per_subtype;
    std::optional<double> flip_rate_delta_tau; // Kendall tau-b across subtypes, when defined
};

inline FlipAnalysis flip_analysis(const std::map<std::string, RetrievalTrace>& traces_b,
                                  const std::map<std::string, RetrievalTrace>& traces_c,
                                  const std::vector<QueryRecord>& queries) {
    FlipAnalysis out;
    std::map<std::string, std::pair<double, double>> delta_sums; // subtype -> (flipped, noflip)
    for (const auto& q : queries) {
        auto ib = traces_b.find(q.id);
        auto ic = traces_c.find(q.id);
        if (ib == traces_b.end() || ic == traces_c.end())
            raise(ErrorKind::validation, "flip_analysis: query '" + q.id + "' missing a trace");
        const auto& tb = ib->second;
        const auto& tc = ic->second;
        if (tb.top5.empty() || tc.top5.empty())
            raise(ErrorKind::validation, "flip_analysis: query '" + q.id + "' has an empty top5");
        FlipRecord rec;
        rec.query_id = q.id;
        rec.top1_b = tb.top5.front();
        rec.top1_c = tc.top5.front();
        rec.flipped = rec.top1_b != rec.top1_c;
        rec.delta_r5 = recall_at_k(tc.top5, q.gold_ids, 5) - recall_at_k(tb.top5, q.gold_ids, 5);
        rec.productive = rec.flipped && rec.delta_r5 > 0.0;
        auto& row = out.per_subtype[to_string(q.subtype)];
        row.n += 1;
        if (rec.flipped) {
            row.flips += 1;
            delta_sums[to_string(q.subtype)].first += rec.delta_r5;
        } else {
            delta_sums[to_string(q.subtype)].second += rec.delta_r5;
        }
        if (rec.productive) row.productive += 1;
        out.records.push_back(std::move(rec));
    }
    std::vector<double> rates, deltas;
    for (auto& [name, row] : out.per_subtype) {
        row.flip_rate = static_cast<double>(row.flips) / static_cast<double>(row.n);
        row.flip_win_pct =
            row.flips == 0 ? 0.0
                           : static_cast<double>(row.productive) / static_cast<double>(row.flips);
        const auto& [fsum, nsum] = delta_sums[name];
        row.mean_delta_flipped = row.flips == 0 ? 0.0 : fsum / static_cast<double>(row.flips);
        const std::size_t noflip = row.n - row.flips;
        row.mean_delta_noflip = noflip == 0 ? 0.0 : nsum / static_cast<double>(noflip);
        row.delta_vs_noflip = row.mean_delta_flipped - row.mean_delta_noflip;
        rates.push_back(row.flip_rate);
        deltas.push_back(row.mean_delta_flipped * row.flip_rate +
                         row.mean_delta_noflip * (1.0 - row.flip_rate));
    }
    if (rates.size() >= 2) {
        try {
            out.flip_rate_delta_tau = kendall_tau(rates, deltas);
        } catch (const Error&) {
            out.flip_rate_delta_tau = std::nullopt; // all-tied across subtypes
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const SubstitutionResult& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchema;
    j["variant"] = r.variant;
    j["mean_r_at_5"] = r.mean_r5;
    nlohmann::ordered_json subtypes;
    for (const auto& [name, st] : r.per_subtype)
        subtypes[name] = {{"n", st.n}, {"mean_r_at_5", st.mean_r5}};
    j["per_subtype"] = std::move(subtypes);
    nlohmann::ordered_json rows = nlohmann::json::array();
    for (const auto& q : r.per_query) {
        nlohmann::ordered_json row;
        row["query_id"] = q.query_id;
        row["top5"] = q.top5;
        row["r_at_5"] = q.r_at_5;
        if (!q.substituted_id.empty()) row["substituted_id"] = q.substituted_id;
        rows.push_back(std::move(row));
    }
    j["per_query"] = std::move(rows);
    return j;
}

inline nlohmann::ordered_json to_json(const FlipAnalysis& a) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchema;
    nlohmann::ordered_json rows;
    for (const auto& [name, row] : a.per_subtype) {
        rows[name] = {{"n", row.n},
                      {"flip_rate", row.flip_rate},
                      {"flip_win_pct", row.flip_win_pct},
                      // mean r@5 delta among flipped minus among non-flipped
                      {"delta_vs_noflip", row.delta_vs_noflip}};
    }
    j["per_subtype"] = std::move(rows);
    j["flip_rate_vs_delta_kendall_tau"] = a.flip_rate_delta_tau
                                              ? nlohmann::ordered_json(*a.flip_rate_delta_tau)
                                              : nlohmann::ordered_json(nullptr);
    nlohmann::ordered_json recs = nlohmann::json::array();
    for (const auto& r : a.records)
        recs.push_back({{"query_id", r.query_id},
                        {"top1_B", r.top1_b},
                        {"top1_C", r.top1_c},
                        {"flipped", r.flipped},
                        {"delta_r5", r.delta_r5},
                        {"productive", r.productive}});
    j["records"] = std::move(recs);
    return j;
}

} // namespace bridgerag
