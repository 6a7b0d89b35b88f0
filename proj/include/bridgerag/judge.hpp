#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgerag/backends.hpp"
#include "bridgerag/pipeline.hpp"
#include "bridgerag/prompts.hpp"

namespace bridgerag {

enum class ConditionKind {
    svo_only,          // A: no judge call, SVO percentile ranking only
    two_way,           // B: judge sees (query, candidate)
    tripartite,        // C: judge sees (query, bridge, entities, candidate)
    bridge_substitute, // tripartite prompt with a substituted bridge slot
};

enum class SubstituteSource {
    real_bridge,     // A1: the retrieved bridge passage itself (identity control)
    svo_text,        // G: the SVO queries concatenated as bridge text
    lowest_svo_pool, // A5: lowest-SVO-similarity pool passage (hard negative)
};

struct JudgeCondition {
    ConditionKind kind = ConditionKind::tripartite;
    std::optional<SubstituteSource> substitute_source; // present iff bridge_substitute

    static JudgeCondition A() { return {ConditionKind::svo_only, std::nullopt}; }
    static JudgeCondition B() { return {ConditionKind::two_way, std::nullopt}; }
    static JudgeCondition C() { return {ConditionKind::tripartite, std::nullopt}; }
    static JudgeCondition substitute(SubstituteSource src) {
        return {ConditionKind::bridge_substitute, src};
    }

    bool uses_judge() const { return kind != ConditionKind::svo_only; }
    bool uses_bridge_slot() const {
        return kind == ConditionKind::tripartite || kind == ConditionKind::bridge_substitute;
    }

    std::string label() const {
        switch (kind) {
            case ConditionKind::svo_only: return "A";
            case ConditionKind::two_way: return "B";
            case ConditionKind::tripartite: return "C";
            case ConditionKind::bridge_substitute:
                switch (*substitute_source) {
                    case SubstituteSource::real_bridge: return "S:real_bridge";
                    case SubstituteSource::svo_text: return "S:svo_text";
                    case SubstituteSource::lowest_svo_pool: return "S:lowest_svo_pool";
                }
        }
        raise(ErrorKind::validation, "unlabelable condition");
    }

    static JudgeCondition parse(const std::string& label) {
        if (label == "A") return A();
        if (label == "B") return B();
        if (label == "C") return C();
        if (label == "S:real_bridge") return substitute(SubstituteSource::real_bridge);
        if (label == "S:svo_text") return substitute(SubstituteSource::svo_text);
        if (label == "S:lowest_svo_pool") return substitute(SubstituteSource::lowest_svo_pool);
        raise(ErrorKind::parse, "unknown condition label '" + label + "'");
    }

    bool operator==(const JudgeCondition&) const = default;
};

struct JudgeWarning {
    std::string code;   // machine-readable: score_clamped | missing_candidate | ...
    std::string detail;

    bool operator==(const JudgeWarning&) const = default;
};

struct JudgeVerdict {
    std::map<std::string, int> scores; // passage id -> integer in [0, 10], total over pool
    std::string raw_response;
    JudgeCondition condition;
    std::vector<JudgeWarning> warnings;
};

struct FusedRanking {
    double alpha = 0.1;
    std::map<std::string, double> pit_judge; // empty under condition A
    std::map<std::string, double> pit_svo;
    std::map<std::string, double> fused;
    std::vector<std::string> top5;
};

// ---------------------------------------------------------------------------
// Judge prompt
// ---------------------------------------------------------------------------

/// Everything the prompt builder may need; which slots are used is decided
/// by the condition.
struct JudgeInputs {
    std::string question;
    std::string bridge_text;
    std::string e1;
    std::string e2;
    std::vector<std::string> candidate_texts;      // pool order
    std::vector<std::string> svo_queries;          // for the svo_text substitution
    std::optional<std::string> substitute_passage; // for lowest_svo_pool / explicit slots
};

/// Resolves what goes in the bridge slot for a condition. two_way and
/// svo_only have no slot.
inline std::optional<std::string> resolve_bridge_slot(const JudgeInputs& in,
                                                      const JudgeCondition& condition) {
    if (!condition.uses_bridge_slot()) return std::nullopt;
    if (condition.kind == ConditionKind::tripartite) return in.bridge_text;
    switch (*condition.substitute_source) {
        case SubstituteSource::real_bridge:
            return in.bridge_text;
        case SubstituteSource::svo_text: {
            std::string joined;
            for (std::size_t i = 0; i < in.svo_queries.size(); ++i) {
                if (i) joined += '\n';
                joined += in.svo_queries[i];
            }
            if (joined.empty())
                raise(ErrorKind::validation, "svo_text substitution with no SVO queries");
            return joined;
        }
        case SubstituteSource::lowest_svo_pool:
            if (!in.substitute_passage)
                raise(ErrorKind::validation, "lowest_svo_pool substitution without a passage");
            return *in.substitute_passage;
    }
    raise(ErrorKind::validation, "unresolvable bridge slot");
}

/// One batched prompt: the query, the per-condition bridge slot, both
/// entities (omitted for two_way), and all candidates as a numbered list.
/// The judge must answer with a JSON array of {index, score}.
inline ChatRequest build_judge_prompt(const JudgeInputs& in, const JudgeCondition& condition,
                                      int max_input_tokens) {
    if (!condition.uses_judge())
        raise(ErrorKind::validation, "condition A has no judge prompt");
    if (in.candidate_texts.empty()) raise(ErrorKind::validation, "judge prompt over empty pool");
    ChatRequest req;
    const auto slot = resolve_bridge_slot(in, condition);
    req.system = slot ? kJudgeSystemTripartite : kJudgeSystemTwoWay;
    std::string u = "Query: " + in.question + "\n";
    if (slot) {
        u += "Bridge entity 1: " + in.e1 + "\n";
        u += "Bridge entity 2: " + in.e2 + "\n";
        u += "Bridge passage: " + *slot + "\n";
    }
    u += "\n";
    for (std::size_t i = 0; i < in.candidate_texts.size(); ++i)
        u += "Candidate " + std::to_string(i + 1) + ": " + in.candidate_texts[i] + "\n";
    u += "\nScore each candidate (0-10). Output JSON array: [{\"index\": 1, \"score\": ...}, "
         "...]";
    req.user = std::move(u);
    req.max_output_tokens = 16 * static_cast<int>(in.candidate_texts.size()) + 64;
    const std::size_t est = estimate_tokens(req.system) + estimate_tokens(req.user);
    if (est > static_cast<std::size_t>(max_input_tokens))
        raise(ErrorKind::budget, "judge prompt of ~" + std::to_string(est) +
                                     " tokens exceeds budget of " +
                                     std::to_string(max_input_tokens) + " by " +
                                     std::to_string(est - max_input_tokens));
    return req;
}

// ---------------------------------------------------------------------------
// Verdict parsing
// ---------------------------------------------------------------------------

/// Total over the pool: every pool id ends up with exactly one score in
/// [0, 10]. Out-of-range scores are clamped, absent candidates score 0;
/// both leave machine-readable warnings for the trace.
inline JudgeVerdict parse_judge_response(const std::string& raw,
                                         const std::vector<std::string>& pool_ids,
                                         const JudgeCondition& condition) {
    if (raw.empty()) raise(ErrorKind::parse, "empty judge response");
    auto b = raw.find('[');
    auto e = raw.rfind(']');
    if (b == std::string::npos || e == std::string::npos || e < b)
        raise(ErrorKind::parse, "judge response contains no JSON array");
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(raw.substr(b, e - b + 1));
    } catch (const nlohmann::json::exception& ex) {
        raise(ErrorKind::parse, std::string("judge response array undecodable: ") + ex.what());
    }
    if (!arr.is_array()) raise(ErrorKind::parse, "judge response is not an array");

    JudgeVerdict verdict;
    verdict.raw_response = raw;
    verdict.condition = condition;
    std::set<std::size_t> seen;
    for (const auto& item : arr) {
        if (!item.is_object() || !item.contains("index") || !item.contains("score"))
            raise(ErrorKind::parse, "judge array item missing index/score");
        const long long idx = item["index"].get<long long>(); // 1-based candidate position
        if (idx < 1 || static_cast<std::size_t>(idx) > pool_ids.size()) {
            verdict.warnings.push_back({"extra_index", "index " + std::to_string(idx)});
            continue;
        }
        const std::size_t pos = static_cast<std::size_t>(idx) - 1;
        if (!seen.insert(pos).second) {
            verdict.warnings.push_back({"duplicate_index", "index " + std::to_string(idx)});
            continue; // first occurrence wins
        }
        double s = item["score"].get<double>();
        int score = static_cast<int>(std::llround(s));
        if (score < 0 || score > 10) {
            verdict.warnings.push_back(
                {"score_clamped", "index " + std::to_string(idx) + " score " + std::to_string(s)});
            score = std::clamp(score, 0, 10);
        }
        verdict.scores[pool_ids[pos]] = score;
    }
    for (std::size_t i = 0; i < pool_ids.size(); ++i) {
        if (!seen.count(i)) {
            verdict.warnings.push_back({"missing_candidate", "index " + std::to_string(i + 1)});
            verdict.scores[pool_ids[i]] = 0;
        }
    }
    return verdict;
}

/// The A5 substitution target: lowest svo_score among svo-sourced pool
/// members, ties by id ascending.
inline const PoolEntry& lowest_svo_pool_entry(const CandidatePool& pool) {
    const PoolEntry* best = nullptr;
    for (const auto& e : pool.entries) {
        if (!e.svo_score) continue;
        if (!best || *e.svo_score < *best->svo_score ||
            (*e.svo_score == *best->svo_score && e.passage_id < best->passage_id))
            best = &e;
    }
    if (!best)
        raise(ErrorKind::insufficient_data, "pool has no svo-scored member to substitute");
    return *best;
}

/// One batched judge call (zero for condition A). A verdict that fails to
/// parse triggers exactly one fresh chat call before giving up.
inline std::optional<JudgeVerdict> judge_pool(ChatBackend& chat, const JudgeInputs& in,
                                              const std::vector<std::string>& pool_ids,
                                              const JudgeCondition& condition) {
    if (!condition.uses_judge()) return std::nullopt;
    if (pool_ids.empty()) raise(ErrorKind::validation, "judge_pool over empty pool");
    if (pool_ids.size() != in.candidate_texts.size())
        raise(ErrorKind::validation, "pool ids and candidate texts disagree");
    const ChatRequest req = build_judge_prompt(in, condition, chat.max_input_tokens());
    std::string raw = chat.chat(req);
    try {
        return parse_judge_response(raw, pool_ids, condition);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::parse) throw;
    }
    raw = chat.chat(req);
    return parse_judge_response(raw, pool_ids, condition);
}

// ---------------------------------------------------------------------------
// PIT + fusion
// ---------------------------------------------------------------------------

/// Percentile rank: PIT(c) = |{c' : s(c') <= s(c)}| / |universe|. Values in
/// (0, 1]; depends only on the <= relation, so any strictly increasing
/// transform of the scores leaves it unchanged.
inline std::map<std::string, double> pit_rank(const std::map<std::string, double>& scores,
                                              const std::vector<std::string>& universe) {
    if (universe.empty()) raise(ErrorKind::validation, "pit_rank over empty universe");
    std::vector<double> values;
    values.reserve(universe.size());
    for (const auto& id : universe) {
        auto it = scores.find(id);
        if (it == scores.end())
            raise(ErrorKind::validation, "pit_rank: no score for '" + id + "'");
        values.push_back(it->second);
    }
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::map<std::string, double> out;
    const double n = static_cast<double>(universe.size());
    for (std::size_t i = 0; i < universe.size(); ++i) {
        const auto le =
            std::upper_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin();
        out[universe[i]] = static_cast<double>(le) / n;
    }
    return out;
}

/// SVO score per pool member for fusion. Entity-only members (no svo_score)
/// take the pool minimum, landing them at the lowest SVO percentile while
/// staying rankable by the judge.
inline std::map<std::string, double> pool_svo_scores(const CandidatePool& pool) {
    double min_score = 0.0;
    bool any = false;
    for (const auto& e : pool.entries) {
        if (e.svo_score && (!any || *e.svo_score < min_score)) {
            min_score = *e.svo_score;
            any = true;
        }
    }
    std::map<std::string, double> out;
    for (const auto& e : pool.entries)
        out[e.passage_id] = e.svo_score ? *e.svo_score : min_score;
    return out;
}

/// Eq-style convex fusion over PIT-transformed scores. Without a verdict
/// (condition A) the ranking is the SVO percentile ranking alone.
inline FusedRanking fuse_and_rank(const std::optional<JudgeVerdict>& verdict,
                                  const CandidatePool& pool, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        raise(ErrorKind::validation, "alpha must lie in [0, 1], got " + std::to_string(alpha));
    if (pool.empty()) raise(ErrorKind::validation, "fuse_and_rank over empty pool");
    const auto universe = pool.ids();
    FusedRanking out;
    out.alpha = alpha;
    out.pit_svo = pit_rank(pool_svo_scores(pool), universe);
    if (verdict) {
        std::map<std::string, double> judge_scores;
        for (const auto& id : universe) {
            auto it = verdict->scores.find(id);
            if (it == verdict->scores.end())
                raise(ErrorKind::validation, "verdict missing pool id '" + id + "'");
            judge_scores[id] = static_cast<double>(it->second);
        }
        out.pit_judge = pit_rank(judge_scores, universe);
        for (const auto& id : universe)
            out.fused[id] = (1.0 - alpha) * out.pit_judge[id] + alpha * out.pit_svo[id];
    } else {
        out.fused = out.pit_svo;
    }
    std::vector<std::string> order = universe;
    std::sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        return ranked_before(a, out.fused.at(a), b, out.fused.at(b));
    });
    order.resize(std::min<std::size_t>(5, order.size()));
    out.top5 = std::move(order);
    return out;
}

} // namespace bridgerag
