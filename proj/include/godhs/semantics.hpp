#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "godhs/geometry.hpp"

namespace godhs {

inline constexpr const char* kUnknownRoomType = "unknown";

/// Feature order used when the knowledge base has no entry for a carrier.
inline constexpr Feature kDefaultFeatureOrder[] = {
    Feature::kTop, Feature::kInside, Feature::kSides, Feature::kBottom};

/// Deterministic priors standing in for the language model. Scores are
/// explicit so the argsort behaviour is testable.
struct KnowledgeBase {
  int version = 1;
  std::vector<std::string> room_types;
  // object label -> room type -> association score
  std::map<std::string, std::map<std::string, double>> room_inference;
  // target label -> room type -> score
  std::map<std::string, std::map<std::string, double>> room_priors;
  // target label -> carrier label -> score
  std::map<std::string, std::map<std::string, double>> carrier_priors;
  // carrier label -> target label (or "*") -> ordered feature list
  std::map<std::string, std::map<std::string, std::vector<Feature>>>
      carrier_features;
};

KnowledgeBase kb_from_json(const std::string& text);
KnowledgeBase load_kb(const std::string& path);

// Pure knowledge-base decisions.
std::string mock_infer_room_type(const KnowledgeBase& kb,
                                 const std::vector<std::string>& observed);
std::vector<std::string> mock_rank_rooms(const KnowledgeBase& kb,
                                         const std::vector<std::string>& rooms,
                                         const std::string& target);
std::vector<std::string> mock_classify_carriers(
    const KnowledgeBase& kb, const std::vector<std::string>& labels,
    const std::string& target);
std::vector<std::string> mock_rank_carriers(
    const KnowledgeBase& kb, const std::vector<std::string>& labels,
    const std::string& target);
/// Returns the ordered feature list and whether the KB had an entry
/// (false = default order used).
std::pair<std::vector<Feature>, bool> mock_rank_features(
    const KnowledgeBase& kb, const std::string& carrier_label,
    const std::string& target);

enum class RankLevel {
  kRoomInfer,
  kRoomRank,
  kCarrierClassify,
  kCarrierRank,
  kFeatureRank,
};

const char* to_string(RankLevel level);

struct RankRequest {
  RankLevel level = RankLevel::kRoomRank;
  std::string target;
  std::vector<std::string> candidates;  // closed output vocabulary
  std::vector<std::string> observed;    // room inference: objects seen
  std::string context;                  // free text, prompts only
};

struct RankResponse {
  std::vector<std::string> labels;  // ordered subset of candidates
  bool valid = true;   // false: fallback or default order produced it
  int retries = 0;
  std::string raw;  // last raw model reply, empty on the mock path
};

class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual RankResponse rank(const RankRequest& req) = 0;
  virtual std::string name() const = 0;
};

class MockRanker : public Ranker {
 public:
  explicit MockRanker(const KnowledgeBase& kb) : kb_(&kb) {}
  RankResponse rank(const RankRequest& req) override;
  std::string name() const override { return "mock"; }

 private:
  const KnowledgeBase* kb_;
};

/// Prompt templates, version 1. Deterministic text per request.
std::string build_prompt(const RankRequest& req);
std::string correction_instruction(const std::vector<std::string>& vocabulary);

struct ParseResult {
  std::vector<std::string> labels;
  int retries = 0;
  bool valid = false;
};

/// Normalizes a raw model reply against a closed vocabulary: case-folds,
/// splits on commas/newlines, strips list markers and edge punctuation,
/// drops out-of-vocabulary tokens and duplicates. While the result is empty
/// and budget remains, requery is called with a correction instruction and
/// its reply is parsed in turn.
ParseResult parse_and_correct(
    const std::string& raw, const std::vector<std::string>& vocabulary,
    int retry_budget,
    const std::function<std::string(const std::string&)>& requery);

// Ranker-backed decision helpers shared by every backend. Rank helpers for
// rooms and carriers return full permutations (missing candidates appended
// in input order after a partial reply).
std::string infer_room_type(Ranker& ranker,
                            const std::vector<std::string>& observed,
                            const std::vector<std::string>& room_vocab);
RankResponse rank_rooms(Ranker& ranker, const std::vector<std::string>& rooms,
                        const std::string& target);
RankResponse classify_carriers(Ranker& ranker,
                               const std::vector<std::string>& labels,
                               const std::string& target,
                               const std::string& room_context);
RankResponse rank_carriers(Ranker& ranker,
                           const std::vector<std::string>& labels,
                           const std::string& target,
                           const std::string& room_context);
/// candidates: the features actually worth asking about (defaults to all
/// four). Guaranteed non-empty result (default order on fallback).
std::vector<Feature> rank_features(Ranker& ranker,
                                   const std::string& carrier_label,
                                   const std::string& target,
                                   const std::vector<Feature>& candidates,
                                   bool* flagged = nullptr);

}  // namespace godhs
