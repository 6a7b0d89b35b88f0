#pragma once

#include <atomic>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "bridgerag/backends.hpp"
#include "bridgerag/config.hpp"
#include "bridgerag/corpus.hpp"
#include "bridgerag/judge.hpp"
#include "bridgerag/pipeline.hpp"
#include "bridgerag/trace.hpp"

namespace bridgerag {

/// Runs the five-stage pipeline over an embedded corpus. Per query:
/// 6 retrieval passes (1 hop-1 + 3 SVO + 2 entity) and 3 chat calls under
/// conditions B/C (2 under A: SVO + entities, no judge).
class Engine {
public:
    Engine(const Corpus& corpus, EmbeddingBackend& embedder, ChatBackend& chat, RunConfig config)
        : corpus_(corpus), embedder_(embedder), chat_(chat), config_(std::move(config)),
          retriever_(corpus) {
        config_.validate();
        if (corpus_.dim == 0) raise(ErrorKind::validation, "engine requires an embedded corpus");
    }

    const Retriever& retriever() const { return retriever_; }
    const RunConfig& config() const { return config_; }

    RetrievalTrace run_query(const QueryRecord& query) {
        RetrievalTrace t;
        t.config_fingerprint = config_.fingerprint();
        t.query_id = query.id;
        t.question = query.question;
        t.subtype = to_string(query.subtype);
        t.gold_ids = query.gold_ids;
        t.condition = config_.condition;
        t.alpha = config_.alpha;
        try {
            fill_trace(query, t);
        } catch (const Error& e) {
            t.error = e.what(); // partial trace survives; the batch moves on
        }
        return t;
    }

    /// Bounded worker pool; traces come back in query order so repeat runs
    /// are byte-identical.
    std::vector<RetrievalTrace> run_all(const std::vector<QueryRecord>& queries) {
        std::vector<RetrievalTrace> traces(queries.size());
        std::atomic<std::size_t> next{0};
        const int workers =
            std::max(1, std::min<int>(config_.workers, static_cast<int>(queries.size())));
        auto worker = [&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= queries.size()) break;
                traces[i] = run_query(queries[i]);
            }
        };
        if (workers == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(workers));
            for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        return traces;
    }

private:
    void fill_trace(const QueryRecord& query, RetrievalTrace& t) {
        const JudgeCondition condition = config_.judge_condition();

        // hop-1: bridge selection (pass 1)
        const Vec qvec = embedder_.embed_one(query.question);
        Bridge bridge = select_bridge(retriever_, qvec, config_.k1);
        t.hop1_hits = bridge.hop1_hits;
        t.bridge_id = bridge.passage_id;
        t.bridge_score = bridge.score;
        const Passage* bridge_passage = corpus_.find(bridge.passage_id);
        if (!bridge_passage)
            raise(ErrorKind::validation, "bridge '" + bridge.passage_id + "' not in corpus");

        for (const auto& gid : query.gold_ids) {
            const Passage* g = corpus_.find(gid);
            if (g && g->embedding) t.gold_query_cos[gid] = cosine(qvec, *g->embedding);
        }

        // SVO expansion (chat 1; passes 2-4)
        const SvoQueries svo =
            generate_svo_queries(chat_, query.question, bridge_passage->text, config_.n_svo);
        t.svo_queries = svo.queries;
        auto svo_entries = svo_retrieve(retriever_, embedder_, svo, config_.k2, config_.svo_cap);

        // dual-entity expansion (chat 2; passes 5-6)
        const EntityExtraction extraction =
            extract_entities(chat_, query.question, bridge_passage->text);
        t.e1 = extraction.entities.e1;
        t.e2 = extraction.entities.e2;
        auto e1_entries =
            entity_retrieve(retriever_, embedder_, extraction.entities.e1, config_.entity_k, kSourceE1);
        auto e2_entries =
            entity_retrieve(retriever_, embedder_, extraction.entities.e2, config_.entity_k, kSourceE2);

        t.pool = assemble_pool(svo_entries, e1_entries, e2_entries, config_.pool_cap);

        // judge (chat 3 under B/C/substituted; skipped under A)
        JudgeInputs in;
        in.question = query.question;
        in.bridge_text = bridge_passage->text;
        in.e1 = t.e1;
        in.e2 = t.e2;
        in.svo_queries = svo.queries;
        if (condition.kind == ConditionKind::bridge_substitute &&
            *condition.substitute_source == SubstituteSource::lowest_svo_pool) {
            const PoolEntry& low = lowest_svo_pool_entry(t.pool);
            const Passage* p = corpus_.find(low.passage_id);
            if (!p) raise(ErrorKind::validation, "pool id '" + low.passage_id + "' not in corpus");
            in.substitute_passage = p->text;
        }
        const auto ids = t.pool.ids();
        for (const auto& id : ids) {
            const Passage* p = corpus_.find(id);
            if (!p) raise(ErrorKind::validation, "pool id '" + id + "' not in corpus");
            in.candidate_texts.push_back(p->text);
        }
        t.judge = judge_pool(chat_, in, ids, condition);

        const FusedRanking ranking = fuse_and_rank(t.judge, t.pool, config_.alpha);
        t.pit_judge = ranking.pit_judge;
        t.pit_svo = ranking.pit_svo;
        t.fused = ranking.fused;
        t.top5 = ranking.top5;
        if (!query.gold_ids.empty()) {
            std::set<std::string> gold(query.gold_ids.begin(), query.gold_ids.end());
            std::size_t hit = 0;
            for (const auto& id : t.top5) hit += gold.count(id);
            t.r_at_5 = static_cast<double>(hit) / static_cast<double>(gold.size());
        }
    }

    const Corpus& corpus_;
    EmbeddingBackend& embedder_;
    ChatBackend& chat_;
    RunConfig config_;
    Retriever retriever_;
};

} // namespace bridgerag
