#include "godhs/semantics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "godhs/errors.hpp"
#include "json.hpp"

namespace godhs {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string fold(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string join(const std::vector<std::string>& v, const char* sep = ", ") {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

double score_of(const std::map<std::string, std::map<std::string, double>>& m,
                const std::string& outer, const std::string& inner) {
  const auto it = m.find(outer);
  if (it == m.end()) return 0.0;
  const auto jt = it->second.find(inner);
  return jt == it->second.end() ? 0.0 : jt->second;
}

}  // namespace

KnowledgeBase kb_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("knowledge base: ") + e.what());
  }
  if (!j.is_object())
    throw ParseError("knowledge base: top level must be an object");
  KnowledgeBase kb;
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw ParseError("knowledge base: missing integer version");
  kb.version = j["version"].get<int>();
  if (kb.version != 1) throw ParseError("knowledge base: unsupported version");

  if (!j.contains("room_types") || !j["room_types"].is_array())
    throw ParseError("knowledge base: missing room_types");
  for (const auto& v : j["room_types"])
    kb.room_types.push_back(v.get<std::string>());

  auto load_scores =
      [&](const char* key,
          std::map<std::string, std::map<std::string, double>>& dst) {
        if (!j.contains(key)) throw ParseError(
            std::string("knowledge base: missing ") + key);
        for (const auto& [outer, inner] : j[key].items()) {
          for (const auto& [name, score] : inner.items()) {
            const double v = score.get<double>();
            if (!std::isfinite(v))
              throw ParseError("knowledge base: non-finite score in " +
                               std::string(key));
            dst[outer][name] = v;
          }
        }
      };
  load_scores("room_inference", kb.room_inference);
  load_scores("room_priors", kb.room_priors);
  load_scores("carrier_priors", kb.carrier_priors);

  if (!j.contains("carrier_features"))
    throw ParseError("knowledge base: missing carrier_features");
  for (const auto& [carrier, per_target] : j["carrier_features"].items()) {
    for (const auto& [target, list] : per_target.items()) {
      std::vector<Feature> feats;
      std::set<Feature> seen;
      for (const auto& fj : list) {
        const auto f = feature_from_string(fj.get<std::string>());
        if (!f)
          throw ParseError("knowledge base: unknown feature for carrier " +
                           carrier);
        if (!seen.insert(*f).second)
          throw ParseError("knowledge base: duplicate feature for carrier " +
                           carrier);
        feats.push_back(*f);
      }
      kb.carrier_features[carrier][target] = std::move(feats);
    }
  }

  // Priors must reference known room types.
  std::set<std::string> types(kb.room_types.begin(), kb.room_types.end());
  for (const auto& [obj, scores] : kb.room_inference)
    for (const auto& [type, v] : scores)
      if (!types.count(type))
        throw ParseError("knowledge base: room_inference uses unknown type " +
                         type);
  for (const auto& [target, scores] : kb.room_priors)
    for (const auto& [type, v] : scores)
      if (!types.count(type))
        throw ParseError("knowledge base: room_priors uses unknown type " +
                         type);
  return kb;
}

KnowledgeBase load_kb(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("knowledge base: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return kb_from_json(buf.str());
}

std::string mock_infer_room_type(const KnowledgeBase& kb,
                                 const std::vector<std::string>& observed) {
  std::string best;
  double best_score = 0.0;
  for (const std::string& type : kb.room_types) {
    double s = 0.0;
    for (const std::string& obj : observed)
      s += score_of(kb.room_inference, obj, type);
    if (s > best_score || (s == best_score && s > 0.0 && type < best)) {
      best = type;
      best_score = s;
    }
  }
  return best_score > 0.0 ? best : kUnknownRoomType;
}

std::vector<std::string> mock_rank_rooms(const KnowledgeBase& kb,
                                         const std::vector<std::string>& rooms,
                                         const std::string& target) {
  std::vector<std::string> out = rooms;
  std::stable_sort(out.begin(), out.end(),
                   [&](const std::string& a, const std::string& b) {
                     return score_of(kb.room_priors, target, a) >
                            score_of(kb.room_priors, target, b);
                   });
  return out;
}

std::vector<std::string> mock_classify_carriers(
    const KnowledgeBase& kb, const std::vector<std::string>& labels,
    const std::string& target) {
  std::vector<std::string> out;
  for (const std::string& l : labels)
    if (score_of(kb.carrier_priors, target, l) > 0.0) out.push_back(l);
  return out;
}

std::vector<std::string> mock_rank_carriers(
    const KnowledgeBase& kb, const std::vector<std::string>& labels,
    const std::string& target) {
  std::vector<std::string> out = labels;
  std::stable_sort(out.begin(), out.end(),
                   [&](const std::string& a, const std::string& b) {
                     return score_of(kb.carrier_priors, target, a) >
                            score_of(kb.carrier_priors, target, b);
                   });
  return out;
}

std::pair<std::vector<Feature>, bool> mock_rank_features(
    const KnowledgeBase& kb, const std::string& carrier_label,
    const std::string& target) {
  const auto it = kb.carrier_features.find(carrier_label);
  if (it != kb.carrier_features.end()) {
    const auto jt = it->second.find(target);
    if (jt != it->second.end()) return {jt->second, true};
    const auto wt = it->second.find("*");
    if (wt != it->second.end()) return {wt->second, true};
  }
  return {{std::begin(kDefaultFeatureOrder), std::end(kDefaultFeatureOrder)},
          false};
}

const char* to_string(RankLevel level) {
  switch (level) {
    case RankLevel::kRoomInfer:
      return "room-infer";
    case RankLevel::kRoomRank:
      return "room-rank";
    case RankLevel::kCarrierClassify:
      return "carrier-classify";
    case RankLevel::kCarrierRank:
      return "carrier-rank";
    case RankLevel::kFeatureRank:
      return "feature-rank";
  }
  return "?";
}

RankResponse MockRanker::rank(const RankRequest& req) {
  RankResponse resp;
  switch (req.level) {
    case RankLevel::kRoomInfer: {
      const std::string type = mock_infer_room_type(*kb_, req.observed);
      for (const std::string& c : req.candidates)
        if (c == type) {
          resp.labels.push_back(type);
          break;
        }
      break;
    }
    case RankLevel::kRoomRank:
      resp.labels = mock_rank_rooms(*kb_, req.candidates, req.target);
      break;
    case RankLevel::kCarrierClassify:
      resp.labels = mock_classify_carriers(*kb_, req.candidates, req.target);
      break;
    case RankLevel::kCarrierRank:
      resp.labels = mock_rank_carriers(*kb_, req.candidates, req.target);
      break;
    case RankLevel::kFeatureRank: {
      const auto [feats, found] =
          mock_rank_features(*kb_, req.context, req.target);
      for (const Feature f : feats)
        for (const std::string& c : req.candidates)
          if (c == to_string(f)) {
            resp.labels.push_back(c);
            break;
          }
      resp.valid = found && !resp.labels.empty();
      break;
    }
  }
  return resp;
}

std::string build_prompt(const RankRequest& req) {
  std::string p = "You are the reasoning module of an indoor service robot.\n";
  switch (req.level) {
    case RankLevel::kRoomInfer:
      p += "Task: infer the room category from the objects observed in it.\n";
      p += "Observed objects: " + join(req.observed) + ".\n";
      p += "Allowed room types: " + join(req.candidates) + ".\n";
      p += "Example: objects 'bed, dressing table' -> bedroom.\n";
      p += "Reply with exactly one room type from the allowed list, no other "
           "text.";
      break;
    case RankLevel::kRoomRank:
      p += "Task: order the rooms by how likely they contain the target "
           "object.\n";
      p += "Target object: " + req.target + ".\n";
      p += "Rooms: " + join(req.candidates) + ".\n";
      p += "Example: target 'towel', rooms 'kitchen, bathroom' -> bathroom, "
           "kitchen.\n";
      p += "Reply with a comma-separated ordering of all listed rooms, most "
           "likely first, no other text.";
      break;
    case RankLevel::kCarrierClassify:
      p += "Task: select which of the observed objects could hold or contain "
           "the target object.\n";
      p += "Target object: " + req.target + ".\n";
      if (!req.context.empty()) p += "Room: " + req.context + ".\n";
      p += "Observed objects: " + join(req.candidates) + ".\n";
      p += "Example: target 'apple', objects 'fridge, wall, chair' -> fridge, "
           "chair.\n";
      p += "Reply with a comma-separated subset of the observed objects, or "
           "'none' if none qualify, no other text.";
      break;
    case RankLevel::kCarrierRank:
      p += "Task: order the carriers by how likely they hold the target "
           "object.\n";
      p += "Target object: " + req.target + ".\n";
      if (!req.context.empty()) p += "Room: " + req.context + ".\n";
      p += "Carriers: " + join(req.candidates) + ".\n";
      p += "Example: target 'orange', carriers 'coffee table, fridge' -> "
           "fridge, coffee table.\n";
      p += "Reply with a comma-separated ordering of all listed carriers, "
           "most likely first, no other text.";
      break;
    case RankLevel::kFeatureRank:
      p += "Task: decide which regions of a carrier are worth searching for "
           "the target object, in order.\n";
      p += "Carrier: " + req.context + ".\n";
      p += "Target object: " + req.target + ".\n";
      p += "Region vocabulary: top, bottom, sides, inside.\n";
      p += "Offered regions: " + join(req.candidates) + ".\n";
      p += "Example: a 'bathtub' should return 'top'.\n";
      p += "Reply with a comma-separated ordered list drawn from the offered "
           "regions, most promising first, no other text.";
      break;
  }
  return p;
}

std::string correction_instruction(
    const std::vector<std::string>& vocabulary) {
  return "Correction (v1): the previous reply contained no valid option. "
         "Reply with only a comma-separated list of options from: " +
         join(vocabulary) + ". No other text.";
}

namespace {

std::vector<std::string> tokenize_reply(
    const std::string& raw, const std::vector<std::string>& vocabulary) {
  std::vector<std::pair<std::string, std::string>> vocab;  // folded, original
  for (const std::string& v : vocabulary) vocab.push_back({fold(v), v});

  std::vector<std::string> out;
  std::set<std::string> seen;
  std::string token;
  auto flush = [&]() {
    // Trim whitespace.
    size_t b = token.find_first_not_of(" \t\r");
    size_t e = token.find_last_not_of(" \t\r");
    std::string t =
        b == std::string::npos ? std::string() : token.substr(b, e - b + 1);
    token.clear();
    if (t.empty()) return;
    // Leading list markers: bullets or an index like "1." / "2)".
    size_t i = 0;
    while (i < t.size() && (t[i] == '-' || t[i] == '*' || t[i] == '>')) ++i;
    size_t digits = i;
    while (digits < t.size() &&
           std::isdigit(static_cast<unsigned char>(t[digits])))
      ++digits;
    if (digits > i && digits < t.size() &&
        (t[digits] == '.' || t[digits] == ')' || t[digits] == ':'))
      i = digits + 1;
    t = t.substr(i);
    // Edge punctuation.
    const std::string punct = ".,:;!?'\"`()[]{}<> \t";
    b = t.find_first_not_of(punct);
    e = t.find_last_not_of(punct);
    t = b == std::string::npos ? std::string() : t.substr(b, e - b + 1);
    if (t.empty()) return;
    const std::string folded = fold(t);
    for (const auto& [fv, orig] : vocab)
      if (fv == folded) {
        if (seen.insert(orig).second) out.push_back(orig);
        return;
      }
  };
  for (const char c : raw) {
    if (c == ',' || c == '\n' || c == ';') {
      flush();
    } else {
      token += c;
    }
  }
  flush();
  return out;
}

}  // namespace

ParseResult parse_and_correct(
    const std::string& raw, const std::vector<std::string>& vocabulary,
    int retry_budget,
    const std::function<std::string(const std::string&)>& requery) {
  if (retry_budget < 0)
    throw ArgumentError("parse_and_correct: negative retry budget");
  ParseResult res;
  res.labels = tokenize_reply(raw, vocabulary);
  while (res.labels.empty() && res.retries < retry_budget && requery) {
    const std::string again = requery(correction_instruction(vocabulary));
    ++res.retries;
    res.labels = tokenize_reply(again, vocabulary);
  }
  res.valid = !res.labels.empty();
  return res;
}

namespace {

// Drops labels outside the candidate set, then appends any candidate the
// ranker left out, in input order. Result: a permutation of candidates.
void complete_permutation(std::vector<std::string>& out,
                          const std::vector<std::string>& candidates) {
  std::vector<std::string> kept;
  for (const std::string& l : out)
    if (std::find(candidates.begin(), candidates.end(), l) !=
            candidates.end() &&
        std::find(kept.begin(), kept.end(), l) == kept.end())
      kept.push_back(l);
  for (const std::string& c : candidates)
    if (std::find(kept.begin(), kept.end(), c) == kept.end())
      kept.push_back(c);
  out = std::move(kept);
}

}  // namespace

std::string infer_room_type(Ranker& ranker,
                            const std::vector<std::string>& observed,
                            const std::vector<std::string>& room_vocab) {
  RankRequest req;
  req.level = RankLevel::kRoomInfer;
  req.candidates = room_vocab;
  req.observed = observed;
  const RankResponse resp = ranker.rank(req);
  return resp.labels.empty() ? kUnknownRoomType : resp.labels.front();
}

RankResponse rank_rooms(Ranker& ranker, const std::vector<std::string>& rooms,
                        const std::string& target) {
  RankRequest req;
  req.level = RankLevel::kRoomRank;
  req.target = target;
  req.candidates = rooms;
  RankResponse resp = ranker.rank(req);
  complete_permutation(resp.labels, rooms);
  return resp;
}

RankResponse classify_carriers(Ranker& ranker,
                               const std::vector<std::string>& labels,
                               const std::string& target,
                               const std::string& room_context) {
  RankRequest req;
  req.level = RankLevel::kCarrierClassify;
  req.target = target;
  req.candidates = labels;
  req.context = room_context;
  RankResponse resp = ranker.rank(req);
  std::vector<std::string> kept;
  for (const std::string& l : resp.labels)
    if (std::find(labels.begin(), labels.end(), l) != labels.end() &&
        std::find(kept.begin(), kept.end(), l) == kept.end())
      kept.push_back(l);
  resp.labels = std::move(kept);
  return resp;
}

RankResponse rank_carriers(Ranker& ranker,
                           const std::vector<std::string>& labels,
                           const std::string& target,
                           const std::string& room_context) {
  RankRequest req;
  req.level = RankLevel::kCarrierRank;
  req.target = target;
  req.candidates = labels;
  req.context = room_context;
  RankResponse resp = ranker.rank(req);
  complete_permutation(resp.labels, labels);
  return resp;
}

std::vector<Feature> rank_features(Ranker& ranker,
                                   const std::string& carrier_label,
                                   const std::string& target,
                                   const std::vector<Feature>& candidates,
                                   bool* flagged) {
  RankRequest req;
  req.level = RankLevel::kFeatureRank;
  req.target = target;
  req.context = carrier_label;
  for (const Feature f : candidates) req.candidates.push_back(to_string(f));
  const RankResponse resp = ranker.rank(req);

  std::vector<Feature> out;
  for (const std::string& l : resp.labels) {
    const auto f = feature_from_string(l);
    if (f && std::find(candidates.begin(), candidates.end(), *f) !=
                 candidates.end() &&
        std::find(out.begin(), out.end(), *f) == out.end())
      out.push_back(*f);
  }
  bool flag = !resp.valid;
  if (out.empty()) {
    for (const Feature f : kDefaultFeatureOrder)
      if (std::find(candidates.begin(), candidates.end(), f) !=
          candidates.end())
        out.push_back(f);
    flag = true;
  }
  if (flagged) *flagged = flag;
  return out;
}

}  // namespace godhs
