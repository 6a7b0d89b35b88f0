#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "bridgerag/corpus.hpp"
#include "support/oracles.hpp"

using namespace bridgerag;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    auto dir = fs::temp_directory_path() / "bridgerag_corpus_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

Corpus random_corpus(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    Corpus c;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        Vec v(dim);
        for (auto& x : v) x = gauss(rng);
        char id[16];
        std::snprintf(id, sizeof id, "p%04zu", i);
        c.passages.push_back({id, "", "text " + std::to_string(i), v});
    }
    c.dim = dim;
    c.rebuild_index();
    return c;
}

} // namespace

TEST_CASE("ingest dedup") {
    std::vector<RawRecord> same_text{{"a", "", "hello world"}, {"b", "", "hello world"}};
    CHECK(ingest_corpus(same_text, true).corpus.size() == 1);
    CHECK(ingest_corpus(same_text, false).corpus.size() == 2);

    std::vector<RawRecord> distinct{{"a", "", "x"}, {"b", "", "y"}, {"c", "", "z"}};
    auto r = ingest_corpus(distinct, true);
    REQUIRE(r.corpus.size() == 3);
    CHECK(r.corpus.passages[0].id == "a");
    CHECK(r.corpus.passages[2].id == "c");
}

TEST_CASE("ingest dedup normalizes outer whitespace only") {
    std::vector<RawRecord> recs{{"a", "", "  hello world\n"}, {"b", "", "hello world"}};
    CHECK(ingest_corpus(recs, true).corpus.size() == 1);
    std::vector<RawRecord> inner{{"a", "", "hello  world"}, {"b", "", "hello world"}};
    CHECK(ingest_corpus(inner, true).corpus.size() == 2);
}

TEST_CASE("ingest id conflicts and empty text") {
    std::vector<RawRecord> conflict{{"a", "", "one"}, {"a", "", "two"}};
    CHECK_THROWS_MATCHES(ingest_corpus(conflict, true), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.kind() == ErrorKind::duplicate_id;
                         }));
    std::vector<RawRecord> same_id{{"a", "", "one"}, {"a", "", "one"}};
    CHECK(ingest_corpus(same_id, true).corpus.size() == 1); // dedup eats it first
    CHECK_THROWS_AS(ingest_corpus(same_id, false), Error);

    std::vector<RawRecord> empty{{"a", "", "  "}, {"b", "", "kept"}};
    auto r = ingest_corpus(empty, true);
    CHECK(r.corpus.size() == 1);
    CHECK(r.rejected_empty == 1);
}

TEST_CASE("ingest with dedup is idempotent") {
    std::vector<RawRecord> recs{{"a", "t", "x"}, {"b", "t", "x"}, {"c", "t", "y"}};
    auto once = ingest_corpus(recs, true);
    std::vector<RawRecord> again;
    for (const auto& p : once.corpus.passages) again.push_back({p.id, p.title, p.text});
    auto twice = ingest_corpus(again, true);
    REQUIRE(twice.corpus.size() == once.corpus.size());
    CHECK(twice.deduped == 0);
    for (std::size_t i = 0; i < once.corpus.size(); ++i)
        CHECK(twice.corpus.passages[i].id == once.corpus.passages[i].id);
}

TEST_CASE("load_queryset") {
    auto path = temp_file("queries.jsonl");
    write_file(path,
               R"({"id":"q1","question":"who?","gold_ids":["a","b"]})" "\n"
               R"({"id":"q2","question":"what?","gold_ids":["b"],"subtype":"comparison"})" "\n");
    auto qs = load_queryset(path.string());
    REQUIRE(qs.queries.size() == 2);
    CHECK(qs.queries[0].gold_ids.size() == 2);
    CHECK(qs.queries[1].subtype == Subtype::comparison);
    CHECK(qs.subtype_warnings == 0);

    write_file(path, R"({"id":"q1","question":"who?"})" "\n");
    CHECK_THROWS_AS(load_queryset(path.string()), Error); // missing gold_ids

    write_file(path, R"({"id":"q1","question":"q","gold_ids":["a"],"subtype":"weird"})" "\n");
    auto warned = load_queryset(path.string());
    CHECK(warned.queries[0].subtype == Subtype::unknown);
    CHECK(warned.subtype_warnings == 1);
}

TEST_CASE("load_queryset validates gold ids against a corpus") {
    std::vector<RawRecord> recs{{"a", "", "x"}};
    auto corpus = ingest_corpus(recs, true).corpus;
    auto path = temp_file("queries_v.jsonl");
    write_file(path, R"({"id":"q9","question":"q","gold_ids":["missing"]})" "\n");
    try {
        load_queryset(path.string(), &corpus);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::validation);
        CHECK(std::string(e.what()).find("q9") != std::string::npos);
    }
}

TEST_CASE("cosine basics") {
    Vec u{1.0, 2.0, 3.0};
    CHECK(cosine(u, u) == Catch::Approx(1.0).margin(1e-15));
    CHECK(cosine({1, 0}, {0, 1}) == 0.0);
    CHECK(cosine(u, {-1.0, -2.0, -3.0}) == Catch::Approx(-1.0).margin(1e-15));
    CHECK_THROWS_MATCHES(cosine({0, 0}, {1, 0}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.kind() == ErrorKind::zero_vector;
                         }));
    CHECK_THROWS_AS(cosine({1, 2}, {1, 2, 3}), Error);
}

TEST_CASE("cosine is symmetric and scale-invariant") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.01, 50.0);
    for (int trial = 0; trial < 200; ++trial) {
        Vec u(12), v(12);
        for (auto& x : u) x = gauss(rng);
        for (auto& x : v) x = gauss(rng);
        const double base = cosine(u, v);
        CHECK(cosine(v, u) == Catch::Approx(base).margin(1e-12));
        Vec su = u;
        const double a = scale(rng);
        for (auto& x : su) x *= a;
        CHECK(cosine(su, v) == Catch::Approx(base).margin(1e-12));
    }
}

TEST_CASE("top_k basics") {
    std::mt19937_64 rng(3);
    auto corpus = random_corpus(3, 8, rng);
    const Vec& probe = *corpus.passages[1].embedding;
    auto hits = top_k(corpus, probe, 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].passage_id == "p0001");
    CHECK(hits[0].score == Catch::Approx(1.0).margin(1e-12));

    auto full = top_k(corpus, probe, 10); // k > size: full ranking
    CHECK(full.size() == 3);
}

TEST_CASE("top_k declared tie-break: lower id first") {
    Corpus c;
    c.passages.push_back({"zz", "", "t", Vec{1.0, 0.0}});
    c.passages.push_back({"aa", "", "t", Vec{1.0, 0.0}});
    c.passages.push_back({"mm", "", "t", Vec{0.0, 1.0}});
    c.dim = 2;
    c.rebuild_index();
    auto hits = top_k(c, {1.0, 0.0}, 2);
    CHECK(hits[0].passage_id == "aa");
    CHECK(hits[1].passage_id == "zz");
}

TEST_CASE("top_k equals full-sort oracle and is prefix-consistent") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t n : {5ul, 100ul, 1000ul}) {
        auto corpus = random_corpus(n, 64, rng);
        Vec q(64);
        for (auto& x : q) x = gauss(rng);

        // oracle: score everything, full sort with the declared tie-break
        std::vector<RankedHit> all;
        for (const auto& p : corpus.passages) all.push_back({p.id, cosine(q, *p.embedding)});
        std::stable_sort(all.begin(), all.end(), [](const RankedHit& a, const RankedHit& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.passage_id < b.passage_id;
        });

        for (std::size_t k : {1ul, 3ul, n / 2, n}) {
            if (k == 0) continue;
            auto hits = top_k(corpus, q, k);
            REQUIRE(hits.size() == std::min(k, n));
            for (std::size_t i = 0; i < hits.size(); ++i) {
                CHECK(hits[i].passage_id == all[i].passage_id);
                CHECK(hits[i].score == all[i].score);
            }
        }
        auto k3 = top_k(corpus, q, 3);
        auto k7 = top_k(corpus, q, 7);
        for (std::size_t i = 0; i < k3.size(); ++i) CHECK(k3[i] == k7[i]);
    }
}

TEST_CASE("top_k rejects unembedded corpora and bad k") {
    Corpus c;
    c.passages.push_back({"a", "", "t", std::nullopt});
    c.rebuild_index();
    CHECK_THROWS_AS(top_k(c, {1.0}, 1), Error);
    Corpus empty;
    CHECK_THROWS_AS(top_k(empty, {1.0}, 1), Error);
}

TEST_CASE("embedding cache round trip and invalidation") {
    std::mt19937_64 rng(5);
    auto corpus = random_corpus(4, 6, rng);
    auto path = temp_file("cache.jsonl");
    write_embedding_cache(corpus, path.string(), "embedder-x");

    Corpus fresh;
    for (const auto& p : corpus.passages) fresh.passages.push_back({p.id, p.title, p.text, {}});
    fresh.rebuild_index();
    auto status = load_embedding_cache(fresh, path.string(), "embedder-x");
    REQUIRE(status.applied);
    CHECK(fresh.dim == 6);
    for (std::size_t i = 0; i < corpus.size(); ++i)
        CHECK(*fresh.passages[i].embedding == *corpus.passages[i].embedding);

    // different embedder id invalidates rather than errors
    Corpus other = fresh;
    auto stale = load_embedding_cache(other, path.string(), "embedder-y");
    CHECK_FALSE(stale.applied);
    CHECK(!stale.reason.empty());

    // corrupt schema header is a version error
    write_file(path, R"({"schema":"bridgerag-embcache/999","dim":6,"embedder":"embedder-x"})" "\n");
    CHECK_THROWS_MATCHES(load_embedding_cache(other, path.string(), "embedder-x"), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.kind() == ErrorKind::version_mismatch;
                         }));
}
