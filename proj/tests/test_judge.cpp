#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "bridgerag/judge.hpp"
#include "bridgerag/mock_backends.hpp"
#include "support/oracles.hpp"

using namespace bridgerag;

namespace {

CandidatePool pool_of(const std::vector<std::pair<std::string, std::optional<double>>>& members) {
    CandidatePool pool;
    int rank = 0;
    for (const auto& [id, svo] : members) {
        PoolEntry e;
        e.passage_id = id;
        e.svo_score = svo;
        e.sources = svo ? kSourceSvo : kSourceE1;
        e.score = svo.value_or(0.0);
        e.pool_rank = rank++;
        pool.entries.push_back(e);
    }
    return pool;
}

JudgeInputs inputs_for(std::size_t n_candidates) {
    JudgeInputs in;
    in.question = "who did what";
    in.bridge_text = "the bridge passage text";
    in.e1 = "Entity One";
    in.e2 = "Entity Two";
    in.svo_queries = {"a does b", "c does d", "e does f"};
    for (std::size_t i = 0; i < n_candidates; ++i)
        in.candidate_texts.push_back("candidate text " + std::to_string(i));
    return in;
}

} // namespace

TEST_CASE("condition labels round-trip") {
    for (const auto* label :
         {"A", "B", "C", "S:real_bridge", "S:svo_text", "S:lowest_svo_pool"})
        CHECK(JudgeCondition::parse(label).label() == label);
    CHECK_THROWS_AS(JudgeCondition::parse("D"), Error);
    CHECK_FALSE(JudgeCondition::A().uses_judge());
    CHECK_FALSE(JudgeCondition::B().uses_bridge_slot());
    CHECK(JudgeCondition::C().uses_bridge_slot());
}

TEST_CASE("build_judge_prompt per condition") {
    auto in = inputs_for(20);
    SECTION("tripartite: bridge, entities, 20 numbered candidates") {
        auto req = build_judge_prompt(in, JudgeCondition::C(), 8192);
        CHECK(req.system == kJudgeSystemTripartite);
        CHECK(req.user.find("Bridge passage: the bridge passage text") != std::string::npos);
        CHECK(req.user.find("Bridge entity 1: Entity One") != std::string::npos);
        CHECK(req.user.find("Bridge entity 2: Entity Two") != std::string::npos);
        for (int i = 1; i <= 20; ++i)
            CHECK(req.user.find("Candidate " + std::to_string(i) + ": ") != std::string::npos);
        CHECK(req.user.find("Candidate 21:") == std::string::npos);
        CHECK(req.user.find("JSON array") != std::string::npos);
    }
    SECTION("two_way omits bridge and entity slots") {
        auto req = build_judge_prompt(in, JudgeCondition::B(), 8192);
        CHECK(req.system == kJudgeSystemTwoWay);
        CHECK(req.user.find("Bridge passage:") == std::string::npos);
        CHECK(req.user.find("Bridge entity") == std::string::npos);
        CHECK(req.user.find("Candidate 20: ") != std::string::npos);
    }
    SECTION("svo_text substitution joins the queries with newlines") {
        auto req = build_judge_prompt(in, JudgeCondition::substitute(SubstituteSource::svo_text),
                                      8192);
        CHECK(req.user.find("Bridge passage: a does b\nc does d\ne does f") != std::string::npos);
    }
    SECTION("real_bridge substitution is byte-identical to tripartite") {
        auto c = build_judge_prompt(in, JudgeCondition::C(), 8192);
        auto s = build_judge_prompt(in, JudgeCondition::substitute(SubstituteSource::real_bridge),
                                    8192);
        CHECK(c.system == s.system);
        CHECK(c.user == s.user);
    }
    SECTION("lowest_svo_pool needs the passage provided") {
        CHECK_THROWS_AS(
            build_judge_prompt(in, JudgeCondition::substitute(SubstituteSource::lowest_svo_pool),
                               8192),
            Error);
        in.substitute_passage = "hard negative text";
        auto req = build_judge_prompt(
            in, JudgeCondition::substitute(SubstituteSource::lowest_svo_pool), 8192);
        CHECK(req.user.find("Bridge passage: hard negative text") != std::string::npos);
    }
    SECTION("budget overflow names the overage") {
        try {
            build_judge_prompt(in, JudgeCondition::C(), 40);
            FAIL("expected budget error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::budget);
            CHECK(std::string(e.what()).find("exceeds budget of 40 by") != std::string::npos);
        }
    }
    SECTION("condition A has no prompt; empty pool rejected") {
        CHECK_THROWS_AS(build_judge_prompt(in, JudgeCondition::A(), 8192), Error);
        in.candidate_texts.clear();
        CHECK_THROWS_AS(build_judge_prompt(in, JudgeCondition::C(), 8192), Error);
    }
}

TEST_CASE("parse_judge_response") {
    const std::vector<std::string> pool{"c1", "c2"};
    SECTION("plain two-candidate array") {
        auto v = parse_judge_response(R"([{"index":1,"score":9},{"index":2,"score":3}])", pool,
                                      JudgeCondition::C());
        CHECK(v.scores.at("c1") == 9);
        CHECK(v.scores.at("c2") == 3);
        CHECK(v.warnings.empty());
    }
    SECTION("score 12 clamps to 10 with a warning") {
        auto v = parse_judge_response(R"([{"index":1,"score":12},{"index":2,"score":3}])", pool,
                                      JudgeCondition::C());
        CHECK(v.scores.at("c1") == 10);
        REQUIRE(v.warnings.size() == 1);
        CHECK(v.warnings[0].code == "score_clamped");
    }
    SECTION("missing candidate scores zero with a warning") {
        auto v = parse_judge_response(R"([{"index":1,"score":7}])", pool, JudgeCondition::C());
        CHECK(v.scores.at("c2") == 0);
        REQUIRE(v.warnings.size() == 1);
        CHECK(v.warnings[0].code == "missing_candidate");
    }
    SECTION("duplicate index: first wins, warning") {
        auto v = parse_judge_response(
            R"([{"index":1,"score":7},{"index":1,"score":2},{"index":2,"score":5}])", pool,
            JudgeCondition::C());
        CHECK(v.scores.at("c1") == 7);
        REQUIRE(v.warnings.size() == 1);
        CHECK(v.warnings[0].code == "duplicate_index");
    }
    SECTION("out-of-range index: warning, still total") {
        auto v = parse_judge_response(
            R"([{"index":1,"score":7},{"index":9,"score":2},{"index":2,"score":5}])", pool,
            JudgeCondition::C());
        CHECK(v.scores.size() == 2);
        CHECK(v.warnings[0].code == "extra_index");
    }
    SECTION("array embedded in prose still parses") {
        auto v = parse_judge_response(
            "Here are my scores:\n[{\"index\":1,\"score\":4},{\"index\":2,\"score\":6}]\nDone.",
            pool, JudgeCondition::C());
        CHECK(v.scores.at("c2") == 6);
    }
    SECTION("fractional scores round to integers") {
        auto v = parse_judge_response(R"([{"index":1,"score":7.6},{"index":2,"score":2.4}])",
                                      pool, JudgeCondition::C());
        CHECK(v.scores.at("c1") == 8);
        CHECK(v.scores.at("c2") == 2);
    }
    SECTION("garbage is a parse error") {
        CHECK_THROWS_MATCHES(parse_judge_response("no array here", pool, JudgeCondition::C()),
                             Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                                 return e.kind() == ErrorKind::parse;
                             }));
    }
    SECTION("totality over random subsets") {
        std::mt19937_64 rng(31);
        std::vector<std::string> big_pool;
        for (int i = 0; i < 20; ++i) big_pool.push_back("p" + std::to_string(i));
        for (int trial = 0; trial < 100; ++trial) {
            nlohmann::json arr = nlohmann::json::array();
            std::uniform_int_distribution<int> flip(0, 1), score(-3, 14);
            for (int i = 1; i <= 20; ++i)
                if (flip(rng)) arr.push_back({{"index", i}, {"score", score(rng)}});
            auto v = parse_judge_response(arr.dump(), big_pool, JudgeCondition::C());
            CHECK(v.scores.size() == big_pool.size());
            for (const auto& [_, s] : v.scores) {
                CHECK(s >= 0);
                CHECK(s <= 10);
            }
        }
    }
}

TEST_CASE("judge_pool call counts") {
    MockChatBackend chat;
    auto in = inputs_for(3);
    const std::vector<std::string> ids{"c1", "c2", "c3"};
    SECTION("condition A: no verdict, zero calls") {
        auto v = judge_pool(chat, in, ids, JudgeCondition::A());
        CHECK_FALSE(v.has_value());
        CHECK(chat.chat_calls() == 0);
    }
    SECTION("condition C: exactly one call") {
        auto v = judge_pool(chat, in, ids, JudgeCondition::C());
        REQUIRE(v.has_value());
        CHECK(v->scores.size() == 3);
        CHECK(chat.chat_calls() == 1);
    }
    SECTION("undecodable verdict: one fresh chat call, then success") {
        chat.script(PromptKind::judge, {"word salad", R"([{"index":1,"score":5},
            {"index":2,"score":4},{"index":3,"score":3}])"});
        auto v = judge_pool(chat, in, ids, JudgeCondition::C());
        REQUIRE(v.has_value());
        CHECK(chat.chat_calls() == 2);
    }
    SECTION("undecodable twice: error") {
        chat.script(PromptKind::judge, {"nope", "still nope"});
        CHECK_THROWS_AS(judge_pool(chat, in, ids, JudgeCondition::C()), Error);
        CHECK(chat.chat_calls() == 2);
    }
    SECTION("empty pool is an error") {
        CHECK_THROWS_AS(judge_pool(chat, JudgeInputs{}, {}, JudgeCondition::C()), Error);
    }
}

TEST_CASE("lowest_svo_pool_entry") {
    auto pool = pool_of({{"b", 0.4}, {"a", 0.2}, {"c", 0.2}, {"d", std::nullopt}});
    CHECK(lowest_svo_pool_entry(pool).passage_id == "a"); // min score, tie by id
    auto entity_only = pool_of({{"x", std::nullopt}});
    CHECK_THROWS_MATCHES(lowest_svo_pool_entry(entity_only), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.kind() == ErrorKind::insufficient_data;
                         }));
}

TEST_CASE("pit_rank worked examples") {
    const std::vector<std::string> universe{"a", "b", "c"};
    SECTION("distinct scores") {
        auto pit = pit_rank({{"a", 0.1}, {"b", 0.5}, {"c", 0.3}}, universe);
        CHECK(pit.at("a") == Catch::Approx(1.0 / 3));
        CHECK(pit.at("b") == 1.0);
        CHECK(pit.at("c") == Catch::Approx(2.0 / 3));
    }
    SECTION("all equal: all 1.0") {
        auto pit = pit_rank({{"a", 2.0}, {"b", 2.0}, {"c", 2.0}}, universe);
        for (const auto& id : universe) CHECK(pit.at(id) == 1.0);
    }
    SECTION("ties share the upper percentile") {
        auto pit = pit_rank({{"a", 2.0}, {"b", 2.0}, {"c", 1.0}}, universe);
        CHECK(pit.at("a") == 1.0);
        CHECK(pit.at("b") == 1.0);
        CHECK(pit.at("c") == Catch::Approx(1.0 / 3));
    }
    SECTION("missing score errors") {
        CHECK_THROWS_AS(pit_rank({{"a", 1.0}}, universe), Error);
    }
}

TEST_CASE("pit_rank equals counting oracle and is transform-invariant") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> coarse(0, 5);
    for (int trial = 0; trial < 200; ++trial) {
        std::map<std::string, double> scores;
        std::vector<std::string> universe;
        const int n = 2 + trial % 12;
        for (int i = 0; i < n; ++i) {
            const std::string id = "c" + std::to_string(i);
            universe.push_back(id);
            scores[id] = static_cast<double>(coarse(rng)); // ties on purpose
        }
        auto pit = pit_rank(scores, universe);
        auto expect = oracle::pit_oracle(scores);
        for (const auto& id : universe) {
            CHECK(pit.at(id) == expect.at(id));
            CHECK(pit.at(id) > 0.0);
            CHECK(pit.at(id) <= 1.0);
        }
        // strictly increasing transform leaves PIT exactly unchanged
        std::vector<double> values;
        for (const auto& id : universe) values.push_back(scores.at(id));
        auto transformed = oracle::increasing_transform(values, rng);
        std::map<std::string, double> tscores;
        for (std::size_t i = 0; i < universe.size(); ++i) tscores[universe[i]] = transformed[i];
        auto tpit = pit_rank(tscores, universe);
        for (const auto& id : universe) CHECK(tpit.at(id) == pit.at(id));
    }
}

TEST_CASE("fuse_and_rank arithmetic and boundaries") {
    // two candidates: x tops the judge, y tops svo
    auto pool = pool_of({{"x", 0.2}, {"y", 0.9}});
    JudgeVerdict v;
    v.scores = {{"x", 9}, {"y", 1}};
    v.condition = JudgeCondition::C();

    SECTION("worked fusion value") {
        auto r = fuse_and_rank(v, pool, 0.1);
        // pit_judge(x)=1.0, pit_svo(x)=0.5 -> 0.9*1.0 + 0.1*0.5 = 0.95
        CHECK(r.fused.at("x") == Catch::Approx(0.95).margin(1e-15));
        CHECK(r.alpha == 0.1);
        for (const auto& [_, f] : r.fused) {
            CHECK(f > 0.0);
            CHECK(f <= 1.0);
        }
    }
    SECTION("alpha 0 is the judge-PIT ranking; alpha 1 the SVO-PIT ranking") {
        auto r0 = fuse_and_rank(v, pool, 0.0);
        CHECK(r0.top5.front() == "x");
        CHECK(r0.fused == r0.pit_judge);
        auto r1 = fuse_and_rank(v, pool, 1.0);
        CHECK(r1.top5.front() == "y");
        CHECK(r1.fused == r1.pit_svo);
    }
    SECTION("no verdict: ranking is SVO percentile alone") {
        auto r = fuse_and_rank(std::nullopt, pool, 0.1);
        CHECK(r.pit_judge.empty());
        CHECK(r.fused == r.pit_svo);
        CHECK(r.top5.front() == "y");
    }
    SECTION("alpha out of range") {
        CHECK_THROWS_AS(fuse_and_rank(v, pool, -0.1), Error);
        CHECK_THROWS_AS(fuse_and_rank(v, pool, 1.1), Error);
    }
}

TEST_CASE("fusion: double top-1 dominance and transform invariance of top5") {
    std::mt19937_64 rng(53);
    std::uniform_int_distribution<int> js(0, 10);
    std::uniform_real_distribution<double> ss(0.0, 1.0);
    std::uniform_real_distribution<double> alphas(0.05, 0.95);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 6 + trial % 10;
        CandidatePool pool;
        JudgeVerdict v;
        v.condition = JudgeCondition::C();
        for (int i = 0; i < n; ++i) {
            char idb[8];
            std::snprintf(idb, sizeof idb, "c%02d", i);
            PoolEntry e;
            e.passage_id = idb;
            e.svo_score = ss(rng);
            e.sources = kSourceSvo;
            e.score = *e.svo_score;
            pool.entries.push_back(e);
            v.scores[idb] = js(rng);
        }
        const double alpha = alphas(rng);
        auto r = fuse_and_rank(v, pool, alpha);

        // a candidate top-1 under both PIT maps is top-1 under fusion
        std::string top_j, top_s;
        for (const auto& [id, p] : r.pit_judge)
            if (p == 1.0 && (top_j.empty() || id < top_j)) top_j = id;
        for (const auto& [id, p] : r.pit_svo)
            if (p == 1.0 && (top_s.empty() || id < top_s)) top_s = id;
        if (!top_j.empty() && top_j == top_s) {
            // unique double-max within ties implies fused max
            CHECK(r.fused.at(top_j) == 1.0);
        }

        // transform either raw score set: top5 unchanged
        std::vector<double> svo_vals;
        for (const auto& e : pool.entries) svo_vals.push_back(*e.svo_score);
        auto tr = oracle::increasing_transform(svo_vals, rng);
        CandidatePool tpool = pool;
        for (std::size_t i = 0; i < tpool.entries.size(); ++i) tpool.entries[i].svo_score = tr[i];
        auto r2 = fuse_and_rank(v, tpool, alpha);
        CHECK(r2.top5 == r.top5);
    }
}

TEST_CASE("judge verdict via mock rule end to end") {
    // fixture rule: bridge-linked candidates score 10, the rest bucket on
    // raw query overlap
    MockChatBackend chat;
    JudgeInputs in;
    in.question = "who married the star of filmx";
    in.bridge_text = "actorx star filmx";
    in.e1 = "actorx";
    in.e2 = "filmx";
    in.candidate_texts = {"spousex married actorx", "dirx directed filmx",
                          "completely unrelated text"};
    const std::vector<std::string> ids{"g2", "d", "z"};
    auto v = judge_pool(chat, in, ids, JudgeCondition::C());
    REQUIRE(v.has_value());
    CHECK(v->scores.at("g2") == 10); // contains the bridge-linked actorx
    CHECK(v->scores.at("d") == 2);   // shares {filmx} with the query
    CHECK(v->scores.at("z") == 0);
}
