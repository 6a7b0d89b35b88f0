#pragma once

#include <string>
#include <vector>

#include "bridgerag/backends.hpp"

namespace bridgerag {

// Prompt text for the three pipeline calls. The system messages double as
// the dispatch key for the deterministic mock backend ("retrieval judge",
// "targeted retrieval queries", "bridge entities"), so changes here must be
// mirrored in MockChatBackend::classify.

inline constexpr const char* kSvoSystem = "You generate targeted retrieval queries for multi-hop QA.";

inline constexpr const char* kEntitySystem = "You extract bridge entities for multi-hop QA.";

inline constexpr const char* kJudgeSystemTripartite =
    "You are a retrieval judge for multi-hop QA. Given a query, a bridge passage, and candidate "
    "passages, score each candidate from 0 to 10 for whether it is the next supporting passage "
    "needed to answer the query, given the bridge context. Output exactly one JSON array of "
    "{\"index\", \"score\"} objects and nothing else.";

inline constexpr const char* kJudgeSystemTwoWay =
    "You are a retrieval judge for multi-hop QA. Given a query and candidate passages, score each "
    "candidate from 0 to 10 for whether it is a supporting passage needed to answer the query. "
    "Output exactly one JSON array of {\"index\", \"score\"} objects and nothing else.";

inline ChatRequest svo_prompt(const std::string& question, const std::string& bridge_text, int n) {
    ChatRequest req;
    req.system = kSvoSystem;
    req.user = "Question: " + question + "\nFirst-hop passage: " + bridge_text +
               "\n\nGenerate exactly " + std::to_string(n) +
               " targeted queries in Subject-Verb-Object form to retrieve the second supporting "
               "passage. Output JSON: {\"queries\": [\"...\", \"...\", \"...\"]}";
    req.max_output_tokens = 256;
    return req;
}

inline ChatRequest entity_prompt(const std::string& question, const std::string& bridge_text) {
    ChatRequest req;
    req.system = kEntitySystem;
    req.user = "Question: " + question + "\n\nBridge passage:\n" + bridge_text +
               "\n\nThe bridge passage establishes a key intermediate entity. Based on the "
               "question and bridge, identify the TWO most relevant answer-side entities needed "
               "to answer the question.\n\nReply with ONLY two short entities separated by \" | \" "
               "(each 1-6 words, e.g. \"Westminster | 1975\" or \"Michael Curtiz | Edith "
               "Carlmar\"). No other text. If only one entity exists, repeat: \"entity1 | "
               "entity1\".";
    req.max_output_tokens = 64;
    return req;
}

} // namespace bridgerag
