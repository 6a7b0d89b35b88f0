// bridgerag command-line front end.
//
// Verbs: index, run, eval, tune-alpha, ablate, mech, blind-eval.
// Exit codes: 0 clean, 1 partial per-query failures, 2 configuration error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>

#include "bridgerag/engine.hpp"
#include "bridgerag/evaluation.hpp"
#include "bridgerag/http_backends.hpp"
#include "bridgerag/mechanism.hpp"
#include "bridgerag/mock_backends.hpp"

namespace fs = std::filesystem;
using namespace bridgerag;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

struct Backends {
    std::unique_ptr<EmbeddingBackend> embedder;
    std::unique_ptr<ChatBackend> chat;
};

Backends make_backends(const RunConfig& cfg) {
    Backends b;
    if (cfg.mock) {
        b.embedder = std::make_unique<MockEmbeddingBackend>(cfg.mock_dim);
        b.chat = std::make_unique<MockChatBackend>();
        b.chat->set_max_input_tokens(cfg.chat_backend.max_input_tokens);
    } else {
        if (cfg.embed_backend.base_url.empty() || cfg.chat_backend.base_url.empty())
            raise(ErrorKind::config,
                  "live backends need --embed-url/--chat-url (or BRIDGERAG_*_URL)");
        b.embedder = std::make_unique<HttpEmbeddingBackend>(cfg.embed_backend);
        b.chat = std::make_unique<HttpChatBackend>(cfg.chat_backend);
    }
    return b;
}

Corpus load_corpus(const std::string& path, bool dedup, bool dedup_title) {
    auto records = read_corpus_jsonl(path);
    if (dedup_title) {
        std::unordered_set<std::string> seen;
        std::vector<RawRecord> kept;
        kept.reserve(records.size());
        for (auto& r : records)
            if (r.title.empty() || seen.insert(r.title).second) kept.push_back(std::move(r));
        records = std::move(kept);
    }
    auto result = ingest_corpus(records, dedup);
    if (result.rejected_empty)
        std::cerr << "warning: rejected " << result.rejected_empty << " empty-text records\n";
    if (result.deduped)
        std::cerr << "note: removed " << result.deduped << " duplicate-text records\n";
    return std::move(result.corpus);
}

void ensure_embeddings(Corpus& corpus, EmbeddingBackend& embedder, const std::string& cache_path) {
    if (!cache_path.empty()) {
        auto status = load_embedding_cache(corpus, cache_path, embedder.embedder_id());
        if (status.applied) return;
        std::cerr << "note: embedding cache not usable (" << status.reason << "); re-embedding\n";
    }
    embed_corpus(corpus, embedder);
    if (!cache_path.empty()) write_embedding_cache(corpus, cache_path, embedder.embedder_id());
}

void write_json(const nlohmann::ordered_json& j, const std::string& path) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) raise(ErrorKind::io, "cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

std::vector<double> parse_grid(const std::string& csv) {
    std::vector<double> grid;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        auto comma = csv.find(',', pos);
        grid.push_back(std::stod(csv.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return grid;
}

std::map<std::string, double> r5_of(const std::vector<RetrievalTrace>& traces) {
    std::map<std::string, double> out;
    for (const auto& t : traces) {
        if (t.error) continue;
        if (t.gold_ids.empty())
            raise(ErrorKind::validation, "trace '" + t.query_id + "' has no gold ids");
        out[t.query_id] = recall_at_k(t.top5, t.gold_ids, 5);
    }
    return out;
}

double mean_r5_of(const std::vector<RetrievalTrace>& traces) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& t : traces) {
        if (t.error) continue;
        sum += recall_at_k(t.top5, t.gold_ids, 5);
        ++n;
    }
    if (n == 0) raise(ErrorKind::validation, "no usable traces");
    return sum / static_cast<double>(n);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"bridge-conditioned multi-hop retrieval engine"};
    app.require_subcommand(1);

    // Options shared across verbs; each verb registers the ones it uses.
    std::string corpus_path, queries_path, cache_path, config_path, out_path;
    std::string condition = "C";
    std::string chat_url = env_or("BRIDGERAG_CHAT_URL", "");
    std::string chat_model = env_or("BRIDGERAG_CHAT_MODEL", "llama-3.3-70b");
    std::string embed_url = env_or("BRIDGERAG_EMBED_URL", "");
    std::string embed_model = env_or("BRIDGERAG_EMBED_MODEL", "nv-embed-v2");
    bool mock = false, no_dedup = false, dedup_title = false;
    std::size_t mock_dim = 256;
    double alpha = 0.1;
    int workers = 4;
    std::uint64_t seed = 0;
    std::size_t k1 = 5, k2 = 10, svo_cap = 15, entity_k = 5, pool_cap = 20;
    int n_svo = 3;

    auto add_backend_opts = [&](CLI::App* cmd) {
        cmd->add_flag("--mock", mock, "use deterministic offline mock backends");
        cmd->add_option("--mock-dim", mock_dim, "mock embedding dimension");
        cmd->add_option("--chat-url", chat_url, "chat-completions base URL");
        cmd->add_option("--chat-model", chat_model, "chat model name");
        cmd->add_option("--embed-url", embed_url, "embeddings base URL");
        cmd->add_option("--embed-model", embed_model, "embedding model name");
    };
    auto add_corpus_opts = [&](CLI::App* cmd) {
        cmd->add_option("--corpus", corpus_path, "corpus JSONL")->required();
        cmd->add_option("--cache", cache_path, "embedding cache sidecar");
        cmd->add_flag("--no-dedup", no_dedup, "keep exact-text duplicates");
        cmd->add_flag("--dedup-title", dedup_title, "also drop repeated titles");
    };

    // --- index ---
    auto* cmd_index = app.add_subcommand("index", "embed a corpus and write the cache");
    add_corpus_opts(cmd_index);
    add_backend_opts(cmd_index);
    cmd_index->get_option("--cache")->required();

    // --- run ---
    auto* cmd_run = app.add_subcommand("run", "run the pipeline over a query set");
    add_corpus_opts(cmd_run);
    add_backend_opts(cmd_run);
    cmd_run->add_option("--queries", queries_path, "query JSONL")->required();
    cmd_run->add_option("--out", out_path, "trace JSONL to write")->required();
    cmd_run->add_option("--config", config_path, "JSON config file");
    auto* opt_condition = cmd_run->add_option("--condition", condition, "A|B|C");
    auto* opt_alpha = cmd_run->add_option("--alpha", alpha, "fusion weight");
    auto* opt_workers = cmd_run->add_option("--workers", workers, "worker pool size");
    auto* opt_k1 = cmd_run->add_option("--k1", k1, "hop-1 depth");
    auto* opt_nsvo = cmd_run->add_option("--n-svo", n_svo, "SVO queries per question");
    auto* opt_k2 = cmd_run->add_option("--k2", k2, "per-SVO retrieval depth");
    auto* opt_svocap = cmd_run->add_option("--svo-cap", svo_cap, "union_max retention");
    auto* opt_entk = cmd_run->add_option("--entity-k", entity_k, "per-entity depth");
    auto* opt_poolcap = cmd_run->add_option("--pool-cap", pool_cap, "pool size cap");
    auto* opt_seed = cmd_run->add_option("--seed", seed, "run seed");

    // --- eval ---
    auto* cmd_eval = app.add_subcommand("eval", "R@5 report over a trace set");
    cmd_eval->add_option("--queries", queries_path, "query JSONL")->required();
    std::string traces_path, against_path;
    cmd_eval->add_option("--traces", traces_path, "trace JSONL (new condition)")->required();
    cmd_eval->add_option("--against", against_path, "baseline trace JSONL to compare against");
    cmd_eval->add_option("--out", out_path, "report JSON");

    // --- tune-alpha ---
    auto* cmd_tune = app.add_subcommand("tune-alpha", "alpha grid search by trace re-fusion");
    cmd_tune->add_option("--traces", traces_path, "trace JSONL")->required();
    std::string grid_csv = "0.05,0.10,0.15,0.20", split_path;
    double tune_frac = 0.2;
    cmd_tune->add_option("--grid", grid_csv, "comma-separated alpha grid");
    cmd_tune->add_option("--split", split_path, "file of tune query ids, one per line");
    cmd_tune->add_option("--tune-frac", tune_frac, "seeded sample fraction when no split file");
    cmd_tune->add_option("--seed", seed, "sample seed");
    cmd_tune->add_option("--out", out_path, "table JSON");

    // --- ablate ---
    auto* cmd_ablate = app.add_subcommand("ablate", "A/B/C on the shared pools of one trace set");
    add_corpus_opts(cmd_ablate);
    add_backend_opts(cmd_ablate);
    cmd_ablate->add_option("--queries", queries_path, "query JSONL")->required();
    cmd_ablate->add_option("--traces", traces_path, "condition-C trace JSONL")->required();
    std::string outdir;
    cmd_ablate->add_option("--outdir", outdir, "directory for derived traces + report")->required();

    // --- mech ---
    auto* cmd_mech = app.add_subcommand("mech", "mechanism experiments E/F/G/H");
    std::string exp, traces_b_path, traces_c_path, variant = "all";
    cmd_mech->add_option("--exp", exp, "E|F|G|H")->required();
    cmd_mech->add_option("--queries", queries_path, "query JSONL");
    cmd_mech->add_option("--corpus", corpus_path, "corpus JSONL");
    cmd_mech->add_option("--cache", cache_path, "embedding cache sidecar");
    cmd_mech->add_option("--traces-b", traces_b_path, "condition-B trace JSONL");
    cmd_mech->add_option("--traces-c", traces_c_path, "condition-C trace JSONL");
    cmd_mech->add_option("--variant", variant, "G only: A1|G|A5|all");
    cmd_mech->add_option("--out", out_path, "report JSON");
    add_backend_opts(cmd_mech);

    // --- blind-eval ---
    auto* cmd_blind = app.add_subcommand("blind-eval", "alpha from one dataset, applied to another");
    std::string tune_traces_path, eval_traces_path;
    cmd_blind->add_option("--tune-traces", tune_traces_path, "dataset-1 tune trace JSONL")->required();
    cmd_blind->add_option("--eval-traces", eval_traces_path, "dataset-2 trace JSONL")->required();
    cmd_blind->add_option("--queries", queries_path, "dataset-2 query JSONL")->required();
    cmd_blind->add_option("--grid", grid_csv, "comma-separated alpha grid");
    cmd_blind->add_option("--out", out_path, "report JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*cmd_index) {
            RunConfig cfg;
            cfg.mock = mock;
            cfg.mock_dim = mock_dim;
            cfg.embed_backend.base_url = embed_url;
            cfg.embed_backend.model_name = embed_model;
            cfg.chat_backend.base_url = chat_url;
            cfg.chat_backend.model_name = chat_model;
            auto backends = make_backends(cfg);
            Corpus corpus = load_corpus(corpus_path, !no_dedup, dedup_title);
            embed_corpus(corpus, *backends.embedder);
            write_embedding_cache(corpus, cache_path, backends.embedder->embedder_id());
            std::cout << "indexed " << corpus.size() << " passages (dim " << corpus.dim
                      << ") -> " << cache_path << "\n";
            return 0;
        }

        if (*cmd_run) {
            RunConfig cfg;
            cfg.embed_backend.base_url = embed_url;
            cfg.embed_backend.model_name = embed_model;
            cfg.chat_backend.base_url = chat_url;
            cfg.chat_backend.model_name = chat_model;
            if (!config_path.empty()) {
                RunConfig file_cfg = load_config_file(config_path);
                file_cfg.embed_backend.base_url =
                    file_cfg.embed_backend.base_url.empty() ? embed_url : file_cfg.embed_backend.base_url;
                file_cfg.chat_backend.base_url =
                    file_cfg.chat_backend.base_url.empty() ? chat_url : file_cfg.chat_backend.base_url;
                cfg = file_cfg;
            }
            // explicit flags override the file
            if (*opt_condition) cfg.condition = condition;
            if (*opt_alpha) cfg.alpha = alpha;
            if (*opt_workers) cfg.workers = workers;
            if (*opt_k1) cfg.k1 = k1;
            if (*opt_nsvo) cfg.n_svo = n_svo;
            if (*opt_k2) cfg.k2 = k2;
            if (*opt_svocap) cfg.svo_cap = svo_cap;
            if (*opt_entk) cfg.entity_k = entity_k;
            if (*opt_poolcap) cfg.pool_cap = pool_cap;
            if (*opt_seed) cfg.seed = seed;
            if (mock) cfg.mock = true;
            if (cmd_run->get_option("--mock-dim")->count()) cfg.mock_dim = mock_dim;
            cfg.validate();

            auto backends = make_backends(cfg);
            Corpus corpus = load_corpus(corpus_path, !no_dedup, dedup_title);
            ensure_embeddings(corpus, *backends.embedder, cache_path);
            auto queryset = load_queryset(queries_path, &corpus);

            Engine engine(corpus, *backends.embedder, *backends.chat, cfg);
            auto traces = engine.run_all(queryset.queries);
            write_traces(traces, out_path);

            std::size_t errors = 0;
            for (const auto& t : traces) errors += t.error.has_value();
            double sum = 0.0;
            std::size_t scored = 0;
            for (const auto& t : traces)
                if (t.r_at_5) {
                    sum += *t.r_at_5;
                    ++scored;
                }
            std::cout << "condition " << cfg.condition << ": " << traces.size() << " queries, "
                      << errors << " errors";
            if (scored) std::cout << ", mean R@5 " << (sum / static_cast<double>(scored));
            std::cout << " -> " << out_path << "\n";
            return errors ? 1 : 0;
        }

        if (*cmd_eval) {
            auto queryset = load_queryset(queries_path);
            auto traces = traces_by_query(read_traces(traces_path));
            EvalReport report = evaluate_run(queryset.queries, traces);
            if (!against_path.empty()) {
                auto baseline = traces_by_query(read_traces(against_path));
                auto rx = per_query_r5(queryset.queries, traces);
                auto ry = per_query_r5(queryset.queries, baseline);
                report.comparisons.push_back(compare_conditions(rx, ry, "traces>against"));
            }
            std::cout << render_text(report);
            write_json(to_json(report), out_path);
            return 0;
        }

        if (*cmd_tune) {
            auto traces = read_traces(traces_path);
            std::vector<RetrievalTrace> tune;
            if (!split_path.empty()) {
                std::ifstream in(split_path);
                if (!in) raise(ErrorKind::io, "cannot open split file '" + split_path + "'");
                std::unordered_set<std::string> ids;
                std::string line;
                while (std::getline(in, line))
                    if (!trim(line).empty()) ids.insert(trim(line));
                for (const auto& t : traces)
                    if (ids.count(t.query_id)) tune.push_back(t);
            } else {
                // deterministic seeded sample over id-sorted traces
                std::sort(traces.begin(), traces.end(),
                          [](const RetrievalTrace& a, const RetrievalTrace& b) {
                              return a.query_id < b.query_id;
                          });
                const std::size_t n = std::max<std::size_t>(
                    1, static_cast<std::size_t>(tune_frac * static_cast<double>(traces.size()) + 0.5));
                std::mt19937_64 rng(seed);
                std::sample(traces.begin(), traces.end(), std::back_inserter(tune), n, rng);
            }
            if (tune.empty()) raise(ErrorKind::validation, "tune split selected no traces");
            auto search = grid_search_alpha(tune, parse_grid(grid_csv));
            nlohmann::ordered_json j;
            j["schema_version"] = kReportSchema;
            j["tune_n"] = tune.size();
            nlohmann::ordered_json rows = nlohmann::json::array();
            std::cout << "alpha    R@5 (tune split, n=" << tune.size() << ")\n";
            for (const auto& row : search.table) {
                std::cout << row.alpha << "    " << row.mean_r5 << "\n";
                rows.push_back({{"alpha", row.alpha}, {"mean_r_at_5", row.mean_r5}});
            }
            j["table"] = std::move(rows);
            j["best_alpha"] = search.best_alpha;
            std::cout << "best alpha: " << search.best_alpha << "\n";
            write_json(j, out_path);
            return 0;
        }

        if (*cmd_ablate) {
            RunConfig cfg;
            cfg.mock = mock;
            cfg.mock_dim = mock_dim;
            cfg.embed_backend.base_url = embed_url;
            cfg.embed_backend.model_name = embed_model;
            cfg.chat_backend.base_url = chat_url;
            cfg.chat_backend.model_name = chat_model;
            auto backends = make_backends(cfg);
            Corpus corpus = load_corpus(corpus_path, !no_dedup, dedup_title);
            auto queryset = load_queryset(queries_path, &corpus);
            auto traces_c = read_traces(traces_path);

            fs::create_directories(outdir);
            std::vector<RetrievalTrace> traces_a, traces_b;
            std::size_t errors = 0;
            for (const auto& t : traces_c) {
                if (t.error) {
                    ++errors;
                    traces_a.push_back(t);
                    traces_b.push_back(t);
                    continue;
                }
                traces_a.push_back(rejudge_trace(t, corpus, JudgeCondition::A(), nullptr));
                traces_b.push_back(rejudge_trace(t, corpus, JudgeCondition::B(), backends.chat.get()));
            }
            write_traces(traces_a, (fs::path(outdir) / "traces_A.jsonl").string());
            write_traces(traces_b, (fs::path(outdir) / "traces_B.jsonl").string());
            write_traces(traces_c, (fs::path(outdir) / "traces_C.jsonl").string());

            auto by_b = traces_by_query(traces_b);
            auto by_c = traces_by_query(traces_c);
            EvalReport report_c = evaluate_run(queryset.queries, by_c);
            report_c.comparisons.push_back(compare_conditions(
                per_query_r5(queryset.queries, traces_by_query(traces_b)),
                per_query_r5(queryset.queries, traces_by_query(traces_a)), "A->B"));
            report_c.comparisons.push_back(compare_conditions(
                per_query_r5(queryset.queries, by_c), per_query_r5(queryset.queries, by_b), "B->C"));

            // per-subtype B->C, Bonferroni over the subtype family
            std::map<std::string, std::vector<QueryRecord>> by_subtype;
            for (const auto& q : queryset.queries) by_subtype[to_string(q.subtype)].push_back(q);
            std::vector<Comparison> subtype_comps;
            for (const auto& [name, qs] : by_subtype)
                subtype_comps.push_back(compare_conditions(per_query_r5(qs, by_c),
                                                           per_query_r5(qs, by_b),
                                                           "B->C[" + name + "]"));
            for (auto& c : subtype_comps) {
                if (!c.ties_only) c.p_bonferroni = bonferroni(c.p, subtype_comps.size());
                report_c.comparisons.push_back(c);
            }

            nlohmann::ordered_json j = to_json(report_c);
            j["condition_means"] = {{"A", mean_r5_of(traces_a)},
                                    {"B", mean_r5_of(traces_b)},
                                    {"C", mean_r5_of(traces_c)}};
            std::cout << "A " << mean_r5_of(traces_a) << "  B " << mean_r5_of(traces_b) << "  C "
                      << mean_r5_of(traces_c) << "\n"
                      << render_text(report_c);
            write_json(j, (fs::path(outdir) / "ablation_report.json").string());
            return errors ? 1 : 0;
        }

        if (*cmd_mech) {
            nlohmann::ordered_json j;
            if (exp == "H") {
                if (traces_b_path.empty() || traces_c_path.empty() || queries_path.empty())
                    raise(ErrorKind::config, "mech --exp H needs --traces-b --traces-c --queries");
                auto queryset = load_queryset(queries_path);
                auto analysis = flip_analysis(traces_by_query(read_traces(traces_b_path)),
                                              traces_by_query(read_traces(traces_c_path)),
                                              queryset.queries);
                j = to_json(analysis);
                for (const auto& [name, row] : analysis.per_subtype)
                    std::cout << name << ": n=" << row.n << " flip_rate=" << row.flip_rate
                              << " flip_win=" << row.flip_win_pct
                              << " delta_vs_noflip=" << row.delta_vs_noflip << "\n";
            } else if (exp == "G") {
                if (traces_c_path.empty() || corpus_path.empty())
                    raise(ErrorKind::config, "mech --exp G needs --traces-c --corpus");
                RunConfig cfg;
                cfg.mock = mock;
                cfg.mock_dim = mock_dim;
                cfg.chat_backend.base_url = chat_url;
                cfg.chat_backend.model_name = chat_model;
                cfg.embed_backend.base_url = embed_url;
                cfg.embed_backend.model_name = embed_model;
                auto backends = make_backends(cfg);
                Corpus corpus = load_corpus(corpus_path, !no_dedup, dedup_title);
                auto traces_c = read_traces(traces_c_path);
                std::vector<std::pair<std::string, SubstituteSource>> variants;
                if (variant == "all" || variant == "A1")
                    variants.emplace_back("A1", SubstituteSource::real_bridge);
                if (variant == "all" || variant == "G")
                    variants.emplace_back("G", SubstituteSource::svo_text);
                if (variant == "all" || variant == "A5")
                    variants.emplace_back("A5", SubstituteSource::lowest_svo_pool);
                if (variants.empty())
                    raise(ErrorKind::config, "unknown --variant '" + variant + "'");
                nlohmann::ordered_json rows = nlohmann::json::array();
                for (const auto& [name, src] : variants) {
                    auto result = run_bridge_substitution(traces_c, corpus, src, *backends.chat);
                    auto rj = to_json(result);
                    rj["row"] = name;
                    std::cout << name << " (" << result.variant << "): R@5 " << result.mean_r5
                              << "\n";
                    rows.push_back(std::move(rj));
                }
                j["schema_version"] = kReportSchema;
                j["experiment"] = "G";
                j["rows"] = std::move(rows);
            } else if (exp == "E" || exp == "F") {
                if (traces_b_path.empty() || traces_c_path.empty() || corpus_path.empty())
                    raise(ErrorKind::config,
                          "mech --exp " + exp + " needs --traces-b --traces-c --corpus");
                RunConfig cfg;
                cfg.mock = mock;
                cfg.mock_dim = mock_dim;
                cfg.embed_backend.base_url = embed_url;
                cfg.embed_backend.model_name = embed_model;
                auto backends = make_backends(cfg);
                Corpus corpus = load_corpus(corpus_path, !no_dedup, dedup_title);
                ensure_embeddings(corpus, *backends.embedder, cache_path);
                auto by_b = traces_by_query(read_traces(traces_b_path));
                auto traces_c = read_traces(traces_c_path);
                std::vector<double> xs, deltas;
                std::map<std::string, std::pair<double, std::size_t>> subtype_acc;
                std::size_t skipped = 0;
                nlohmann::ordered_json per_query = nlohmann::json::array();
                for (const auto& tc : traces_c) {
                    if (tc.error) continue;
                    auto ib = by_b.find(tc.query_id);
                    if (ib == by_b.end())
                        raise(ErrorKind::validation,
                              "query '" + tc.query_id + "' missing from traces-b");
                    const double delta = recall_at_k(tc.top5, tc.gold_ids, 5) -
                                         recall_at_k(ib->second.top5, ib->second.gold_ids, 5);
                    double x = 0.0;
                    nlohmann::ordered_json row;
                    row["query_id"] = tc.query_id;
                    if (exp == "E") {
                        std::vector<Vec> pool_embs;
                        for (const auto& e : tc.pool.entries) {
                            const Passage* p = corpus.find(e.passage_id);
                            if (p && p->embedding) pool_embs.push_back(*p->embedding);
                        }
                        if (pool_embs.size() < 2) {
                            ++skipped;
                            continue;
                        }
                        x = pool_diversity(pool_embs);
                        row["pool_diversity"] = x;
                    } else {
                        auto g2 = identify_g2(tc);
                        row["g2_rule"] = g2.rule;
                        if (!g2.g2_id) {
                            ++skipped;
                            per_query.push_back(std::move(row));
                            continue;
                        }
                        const Passage* b = corpus.find(tc.bridge_id);
                        const Passage* g = corpus.find(*g2.g2_id);
                        if (!b || !b->embedding || !g || !g->embedding) {
                            ++skipped;
                            per_query.push_back(std::move(row));
                            continue;
                        }
                        x = bridge_info(*b->embedding, *g->embedding);
                        row["bridge_info"] = x;
                        row["g2_id"] = *g2.g2_id;
                    }
                    row["delta_r5"] = delta;
                    per_query.push_back(std::move(row));
                    xs.push_back(x);
                    deltas.push_back(delta);
                    auto& acc = subtype_acc[tc.subtype];
                    acc.first += x;
                    acc.second += 1;
                }
                j["schema_version"] = kReportSchema;
                j["experiment"] = exp;
                j["n"] = xs.size();
                j["skipped"] = skipped;
                nlohmann::ordered_json subtype_means;
                for (const auto& [name, acc] : subtype_acc)
                    subtype_means[name] = acc.first / static_cast<double>(acc.second);
                j[exp == "E" ? "mean_pool_diversity_by_subtype" : "mean_bridge_info_by_subtype"] =
                    std::move(subtype_means);
                try {
                    j["spearman_vs_delta"] = spearman(xs, deltas);
                } catch (const Error& e) {
                    j["spearman_vs_delta"] = nullptr;
                    j["spearman_note"] = e.what();
                }
                j["per_query"] = std::move(per_query);
                std::cout << "exp " << exp << ": n=" << xs.size() << " skipped=" << skipped;
                if (!j["spearman_vs_delta"].is_null())
                    std::cout << " spearman=" << j["spearman_vs_delta"].get<double>();
                std::cout << "\n";
            } else {
                raise(ErrorKind::config, "unknown --exp '" + exp + "' (want E|F|G|H)");
            }
            write_json(j, out_path);
            return 0;
        }

        if (*cmd_blind) {
            const auto canon_tune = fs::weakly_canonical(tune_traces_path);
            const auto canon_eval = fs::weakly_canonical(eval_traces_path);
            if (canon_tune == canon_eval)
                raise(ErrorKind::config,
                      "blind-eval requires distinct tune and eval trace files, got '" +
                          canon_tune.string() + "' twice");
            auto tune_traces = read_traces(tune_traces_path);
            auto search = grid_search_alpha(tune_traces, parse_grid(grid_csv));
            auto eval_traces = read_traces(eval_traces_path);
            auto queryset = load_queryset(queries_path);
            std::map<std::string, RetrievalTrace> refused;
            for (const auto& t : eval_traces) {
                if (t.error) continue;
                RetrievalTrace r = t;
                const FusedRanking ranking = refuse_trace(t, search.best_alpha);
                r.alpha = search.best_alpha;
                r.pit_judge = ranking.pit_judge;
                r.pit_svo = ranking.pit_svo;
                r.fused = ranking.fused;
                r.top5 = ranking.top5;
                refused.emplace(r.query_id, std::move(r));
            }
            EvalReport report = evaluate_run(queryset.queries, refused);
            nlohmann::ordered_json j = to_json(report);
            j["blind_alpha"] = search.best_alpha;
            std::cout << "blind alpha " << search.best_alpha << " -> mean R@5 " << report.mean_r5
                      << "\n";
            write_json(j, out_path);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::config ? 2 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
