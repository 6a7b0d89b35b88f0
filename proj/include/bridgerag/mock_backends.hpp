#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bridgerag/backends.hpp"

namespace bridgerag {

// ---------------------------------------------------------------------------
// Deterministic text primitives shared by the mock backends (and reused by
// test oracles as the ground-truth rule definition).
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Whitespace split, ASCII-lowercased, leading/trailing non-alphanumerics
/// stripped. Empty tokens dropped.
inline std::vector<std::string> mock_tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        std::size_t b = 0, e = cur.size();
        while (b < e && !std::isalnum(static_cast<unsigned char>(cur[b]))) ++b;
        while (e > b && !std::isalnum(static_cast<unsigned char>(cur[e - 1]))) --e;
        if (e > b) out.push_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    flush();
    return out;
}

inline std::set<std::string> mock_token_set(std::string_view text) {
    auto toks = mock_tokenize(text);
    return {toks.begin(), toks.end()};
}

/// Coordinate a token lands on in the bag-of-words mock embedding space.
inline std::size_t mock_token_coordinate(std::string_view token, std::size_t dim) {
    return static_cast<std::size_t>(fnv1a64(token) % dim);
}

// ---------------------------------------------------------------------------
// Mock embedding backend: token-hash bag of words, L2-normalized. A pure
// function of (text, dim), so repeat calls are byte-identical and lexical
// overlap translates into cosine similarity.
// ---------------------------------------------------------------------------

class MockEmbeddingBackend : public EmbeddingBackend {
public:
    explicit MockEmbeddingBackend(std::size_t dim = 256) : dim_(dim) {
        if (dim_ == 0) raise(ErrorKind::config, "mock embedder dimension must be >= 1");
    }

    std::string embedder_id() const override { return "mock-bow-" + std::to_string(dim_); }

    std::size_t dim() const { return dim_; }

    static Vec embed_text(std::string_view text, std::size_t dim) {
        Vec v(dim, 0.0);
        double norm2 = 0.0;
        auto toks = mock_tokenize(text);
        if (toks.empty())
            raise(ErrorKind::zero_vector, "text has no tokens: '" + std::string(text) + "'");
        for (const auto& t : toks) v[mock_token_coordinate(t, dim)] += 1.0;
        for (double x : v) norm2 += x * x;
        const double norm = std::sqrt(norm2);
        for (double& x : v) x /= norm;
        return v;
    }

protected:
    std::vector<Vec> do_embed(const std::vector<std::string>& texts) override {
        std::vector<Vec> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_text(t, dim_));
        return out;
    }

private:
    std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Mock chat backend: a rule table dispatched on the prompt kind carried by
// the system message. Each rule is a pure function of the user message, so
// a temperature-0 call is reproducible byte for byte. Individual responses
// can be scripted per kind to drive parser edge cases in tests.
// ---------------------------------------------------------------------------

enum class PromptKind { svo, entities, judge, unknown };

class MockChatBackend : public ChatBackend {
public:
    static PromptKind classify(std::string_view system) {
        if (system.find("retrieval judge") != std::string_view::npos) return PromptKind::judge;
        if (system.find("targeted retrieval queries") != std::string_view::npos)
            return PromptKind::svo;
        if (system.find("bridge entities") != std::string_view::npos) return PromptKind::entities;
        return PromptKind::unknown;
    }

    /// Queue fixed responses for one prompt kind; consumed FIFO before the
    /// rule generator is consulted.
    void script(PromptKind kind, std::vector<std::string> responses) {
        std::lock_guard lk(mu_);
        auto& q = scripted_[kind];
        for (auto& r : responses) q.push_back(std::move(r));
    }

    // --- rule generators, exposed for oracle reuse ---

    /// First bridge token absent from the question: the mock's stand-in for
    /// the bridge-new entity. Falls back to the first bridge token, then to
    /// the first question token when the bridge is empty.
    static std::string bridge_anchor(const std::string& bridge,
                                     const std::vector<std::string>& qtoks) {
        std::set<std::string> qset(qtoks.begin(), qtoks.end());
        auto btoks = mock_tokenize(bridge);
        for (const auto& t : btoks)
            if (!qset.count(t)) return t;
        if (!btoks.empty()) return btoks.front();
        return qtoks.front();
    }

    /// SVO rule: anchor = first bridge token absent from the question (the
    /// bridge-new entity), paired with question tokens at positions
    /// 1, 2, last, 3, 4, ... (mod length).
    static std::string svo_rule(const std::string& user) {
        const std::string question = line_after(user, "Question: ");
        const std::string bridge = block_between(user, "First-hop passage: ", "\n\nGenerate exactly ");
        int n = 3;
        if (auto pos = user.find("Generate exactly "); pos != std::string::npos)
            n = std::stoi(user.substr(pos + 17));
        auto qtoks = mock_tokenize(question);
        if (qtoks.empty()) raise(ErrorKind::protocol, "mock svo rule: empty question");
        const std::string anchor = bridge_anchor(bridge, qtoks);
        nlohmann::ordered_json out;
        auto& arr = out["queries"] = nlohmann::json::array();
        const std::size_t len = qtoks.size();
        for (int i = 0; i < n; ++i) {
            std::size_t idx;
            if (i == 0) idx = 1 % len;
            else if (i == 1) idx = 2 % len;
            else if (i == 2) idx = len - 1;
            else idx = static_cast<std::size_t>(i) % len;
            arr.push_back(anchor + " " + qtoks[idx]);
        }
        return out.dump();
    }

    /// Entity rule: e1 = first bridge token absent from the question, e2 =
    /// last question token. Falls back to the duplicated-entity form when
    /// the bridge adds no new token.
    static std::string entity_rule(const std::string& user) {
        const std::string question = line_after(user, "Question: ");
        const std::string bridge =
            block_between(user, "Bridge passage:\n", "\n\nThe bridge passage establishes");
        auto qtoks = mock_tokenize(question);
        if (qtoks.empty()) raise(ErrorKind::protocol, "mock entity rule: empty question");
        std::set<std::string> qset(qtoks.begin(), qtoks.end());
        std::string e1;
        for (const auto& t : mock_tokenize(bridge)) {
            if (!qset.count(t)) {
                e1 = t;
                break;
            }
        }
        const std::string e2 = qtoks.back();
        if (e1.empty()) e1 = e2;
        return e1 + " | " + e2;
    }

    /// Judge rule. With a bridge slot present, a candidate sharing any token
    /// with (bridge tokens minus query tokens) scores 10: it carries the
    /// bridge-linked entity. Everything else is bucketed by raw query-token
    /// overlap, min(9, 2*|shared|).
    static std::string judge_rule(const std::string& user) {
        const std::string query = line_after(user, "Query: ");
        std::string bridge;
        if (user.find("Bridge passage: ") != std::string::npos)
            bridge = block_between(user, "Bridge passage: ", "\n\nCandidate 1: ");
        auto candidates = parse_candidates(user);
        if (candidates.empty()) raise(ErrorKind::protocol, "mock judge rule: no candidates");
        const auto qset = mock_token_set(query);
        std::set<std::string> link;
        if (!bridge.empty()) {
            for (const auto& t : mock_token_set(bridge))
                if (!qset.count(t)) link.insert(t);
        }
        nlohmann::ordered_json arr = nlohmann::json::array();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto cset = mock_token_set(candidates[i]);
            int score = 0;
            bool linked = false;
            if (!bridge.empty()) {
                for (const auto& t : cset)
                    if (link.count(t)) {
                        linked = true;
                        break;
                    }
            }
            if (linked) {
                score = 10;
            } else {
                std::size_t shared = 0;
                for (const auto& t : cset) shared += qset.count(t);
                score = static_cast<int>(std::min<std::size_t>(9, 2 * shared));
            }
            arr.push_back({{"index", i + 1}, {"score", score}});
        }
        return arr.dump();
    }

    // --- prompt-parsing helpers (format fixed by prompts.hpp / judge.hpp) ---

    static std::string line_after(const std::string& text, const std::string& prefix) {
        auto pos = text.find(prefix);
        if (pos == std::string::npos)
            raise(ErrorKind::protocol, "mock parser: missing '" + prefix + "'");
        pos += prefix.size();
        auto end = text.find('\n', pos);
        return text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    }

    static std::string block_between(const std::string& text, const std::string& from,
                                     const std::string& until) {
        auto b = text.find(from);
        if (b == std::string::npos)
            raise(ErrorKind::protocol, "mock parser: missing '" + from + "'");
        b += from.size();
        auto e = text.find(until, b);
        if (e == std::string::npos) e = text.size();
        return text.substr(b, e - b);
    }

    static std::vector<std::string> parse_candidates(const std::string& user) {
        std::vector<std::string> out;
        for (std::size_t i = 1;; ++i) {
            const std::string tag = "Candidate " + std::to_string(i) + ": ";
            auto b = user.find(tag);
            if (b == std::string::npos) break;
            b += tag.size();
            const std::string next = "\nCandidate " + std::to_string(i + 1) + ": ";
            auto e = user.find(next, b);
            if (e == std::string::npos) e = user.find("\n\nScore each candidate", b);
            if (e == std::string::npos) e = user.size();
            out.push_back(user.substr(b, e - b));
        }
        return out;
    }

protected:
    std::string do_chat(const ChatRequest& req) override {
        const PromptKind kind = classify(req.system);
        {
            std::lock_guard lk(mu_);
            auto it = scripted_.find(kind);
            if (it != scripted_.end() && !it->second.empty()) {
                std::string r = std::move(it->second.front());
                it->second.pop_front();
                return r;
            }
        }
        switch (kind) {
            case PromptKind::svo: return svo_rule(req.user);
            case PromptKind::entities: return entity_rule(req.user);
            case PromptKind::judge: return judge_rule(req.user);
            case PromptKind::unknown:
                raise(ErrorKind::protocol, "mock chat: unrecognized prompt kind");
        }
        raise(ErrorKind::protocol, "unreachable");
    }

private:
    std::mutex mu_;
    std::map<PromptKind, std::deque<std::string>> scripted_;
};

} // namespace bridgerag
