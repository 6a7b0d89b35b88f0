#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgerag/corpus.hpp"
#include "bridgerag/stats.hpp"
#include "bridgerag/trace.hpp"

namespace bridgerag {

inline constexpr const char* kReportSchema = "bridgerag-report/1";

/// R@k: |gold ∩ top[:k]| / |gold|.
inline double recall_at_k(const std::vector<std::string>& top,
                          const std::vector<std::string>& gold, std::size_t k) {
    if (k == 0) raise(ErrorKind::validation, "recall_at_k requires k >= 1");
    if (gold.empty()) raise(ErrorKind::validation, "recall_at_k with empty gold set");
    std::set<std::string> gold_set(gold.begin(), gold.end());
    std::size_t hit = 0;
    for (std::size_t i = 0; i < top.size() && i < k; ++i) hit += gold_set.count(top[i]);
    return static_cast<double>(hit) / static_cast<double>(gold_set.size());
}

struct QueryResult {
    std::string query_id;
    std::string condition;
    std::vector<std::string> top5;
    double r_at_5 = 0.0;
    Subtype subtype = Subtype::unknown;
};

struct SubtypeStats {
    std::size_t n = 0;
    double mean_r5 = 0.0;
};

struct Comparison {
    std::string label; // e.g. "B->C"
    std::uint64_t wins = 0;
    std::uint64_t losses = 0;
    std::uint64_t ties = 0;
    double p = 1.0;
    std::optional<double> p_bonferroni;
    bool ties_only = false;
};

struct EvalReport {
    std::size_t n = 0;
    double mean_r5 = 0.0;
    std::map<std::string, SubtypeStats> per_subtype;
    std::vector<Comparison> comparisons;
};

/// Aggregates R@k over one trace per query; a missing trace is an error
/// naming every absent query id (nothing is dropped silently).
inline EvalReport evaluate_run(const std::vector<QueryRecord>& queries,
                               const std::map<std::string, RetrievalTrace>& traces,
                               std::size_t k = 5) {
    if (queries.empty()) raise(ErrorKind::validation, "evaluate_run with no queries");
    std::vector<std::string> missing;
    for (const auto& q : queries)
        if (!traces.count(q.id)) missing.push_back(q.id);
    if (!missing.empty()) {
        std::string msg = "missing traces for query ids:";
        for (const auto& id : missing) msg += " " + id;
        raise(ErrorKind::validation, msg);
    }
    EvalReport report;
    report.n = queries.size();
    double sum = 0.0;
    for (const auto& q : queries) {
        const auto& t = traces.at(q.id);
        if (t.error)
            raise(ErrorKind::validation,
                  "trace for query '" + q.id + "' carries an error: " + *t.error);
        const double r5 = recall_at_k(t.top5, q.gold_ids, k);
        sum += r5;
        auto& st = report.per_subtype[to_string(q.subtype)];
        st.n += 1;
        st.mean_r5 += r5;
    }
    report.mean_r5 = sum / static_cast<double>(queries.size());
    for (auto& [_, st] : report.per_subtype) st.mean_r5 /= static_cast<double>(st.n);
    return report;
}

/// Per-query R@5 for each query id in a trace set (gold taken from the
/// paired queries).
inline std::map<std::string, double> per_query_r5(
    const std::vector<QueryRecord>& queries, const std::map<std::string, RetrievalTrace>& traces,
    std::size_t k = 5) {
    std::map<std::string, double> out;
    for (const auto& q : queries) {
        auto it = traces.find(q.id);
        if (it == traces.end())
            raise(ErrorKind::validation, "missing trace for query '" + q.id + "'");
        out[q.id] = recall_at_k(it->second.top5, q.gold_ids, k);
    }
    return out;
}

/// One-sided sign test of X beating Y, ties excluded. A ties-only
/// comparison reports p = 1.0 with the flag set instead of erroring.
inline Comparison compare_conditions(const std::map<std::string, double>& results_x,
                                     const std::map<std::string, double>& results_y,
                                     const std::string& label = {}) {
    if (results_x.size() != results_y.size())
        raise(ErrorKind::validation, "compare_conditions: query id sets differ in size");
    Comparison c;
    c.label = label;
    for (const auto& [id, rx] : results_x) {
        auto it = results_y.find(id);
        if (it == results_y.end())
            raise(ErrorKind::validation, "compare_conditions: '" + id + "' missing from Y");
        if (rx > it->second) ++c.wins;
        else if (rx < it->second) ++c.losses;
        else ++c.ties;
    }
    if (c.wins + c.losses == 0) {
        c.ties_only = true;
        c.p = 1.0;
    } else {
        c.p = sign_test(c.wins, c.losses);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Alpha grid search (pure re-fusion of cached traces: zero model calls)
// ---------------------------------------------------------------------------

struct AlphaRow {
    double alpha = 0.0;
    double mean_r5 = 0.0;
};

struct AlphaSearch {
    double best_alpha = 0.0;
    std::vector<AlphaRow> table; // one row per alpha, grid order
};

inline AlphaSearch grid_search_alpha(const std::vector<RetrievalTrace>& tune_traces,
                                     const std::vector<double>& grid) {
    if (grid.empty()) raise(ErrorKind::validation, "grid_search_alpha with empty grid");
    if (tune_traces.empty()) raise(ErrorKind::validation, "grid_search_alpha with no traces");
    AlphaSearch out;
    for (double alpha : grid) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& t : tune_traces) {
            if (t.error) continue;
            if (t.gold_ids.empty())
                raise(ErrorKind::validation,
                      "trace '" + t.query_id + "' has no gold ids; cannot tune");
            const auto ranking = refuse_trace(t, alpha);
            sum += recall_at_k(ranking.top5, t.gold_ids, 5);
            ++n;
        }
        if (n == 0) raise(ErrorKind::validation, "no usable traces for tuning");
        out.table.push_back({alpha, sum / static_cast<double>(n)});
    }
    const AlphaRow* best = &out.table.front();
    for (const auto& row : out.table) {
        // argmax; ties resolved toward the smaller alpha
        if (row.mean_r5 > best->mean_r5 ||
            (row.mean_r5 == best->mean_r5 && row.alpha < best->alpha))
            best = &row;
    }
    out.best_alpha = best->alpha;
    return out;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const Comparison& c) {
    nlohmann::ordered_json j;
    j["label"] = c.label;
    j["direction"] = "one-sided: new condition beats old";
    j["wins"] = c.wins;
    j["losses"] = c.losses;
    j["ties"] = c.ties;
    j["p"] = c.p;
    j["p_bonferroni"] =
        c.p_bonferroni ? nlohmann::ordered_json(*c.p_bonferroni) : nlohmann::ordered_json(nullptr);
    j["ties_only"] = c.ties_only;
    return j;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchema;
    j["n"] = r.n;
    j["mean_r_at_5"] = r.mean_r5;
    nlohmann::ordered_json subtypes;
    for (const auto& [name, st] : r.per_subtype)
        subtypes[name] = {{"n", st.n}, {"mean_r_at_5", st.mean_r5}};
    j["per_subtype"] = std::move(subtypes);
    nlohmann::ordered_json comps = nlohmann::json::array();
    for (const auto& c : r.comparisons) comps.push_back(to_json(c));
    j["comparisons"] = std::move(comps);
    return j;
}

inline std::string render_text(const EvalReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "n=" << r.n << "  mean R@5=" << r.mean_r5 << "\n";
    os << std::left << std::setw(20) << "subtype" << std::right << std::setw(8) << "n"
       << std::setw(12) << "R@5" << "\n";
    for (const auto& [name, st] : r.per_subtype)
        os << std::left << std::setw(20) << name << std::right << std::setw(8) << st.n
           << std::setw(12) << st.mean_r5 << "\n";
    for (const auto& c : r.comparisons) {
        os << c.label << ": " << c.wins << "W/" << c.losses << "L/" << c.ties << "T";
        if (c.ties_only) {
            os << "  (ties only, p=1.0)";
        } else {
            os << "  p=" << std::scientific << c.p << std::fixed;
            if (c.p_bonferroni) os << "  p_bonf=" << std::scientific << *c.p_bonferroni << std::fixed;
        }
        os << "\n";
    }
    return os.str();
}

} // namespace bridgerag
