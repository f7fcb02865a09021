#include "godhs/llm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "godhs/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace godhs {

using ordered_json = nlohmann::ordered_json;

namespace {

struct SplitUrl {
  std::string base;  // scheme://host:port
  std::string path;  // leading slash, may be empty
};

SplitUrl split_url(const std::string& url) {
  const size_t scheme = url.find("://");
  if (scheme == std::string::npos)
    throw TransportError("endpoint must start with http://");
  const size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, ""};
  return {url.substr(0, slash), url.substr(slash)};
}

std::string completions_path(const std::string& endpoint_path) {
  if (endpoint_path.find("chat/completions") != std::string::npos)
    return endpoint_path;
  std::string p = endpoint_path;
  while (!p.empty() && p.back() == '/') p.pop_back();
  return p + "/v1/chat/completions";
}

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string LlmClient::complete(const std::string& prompt) {
  std::lock_guard<std::mutex> lock(mu_);
  const SplitUrl url = split_url(cfg_.endpoint);
  if (url.base.rfind("https://", 0) == 0)
    throw TransportError("https endpoints are not supported");

  httplib::Client cli(url.base);
  const auto sec = static_cast<time_t>(cfg_.timeout_s);
  const auto usec = static_cast<time_t>(
      std::max(0.0, (cfg_.timeout_s - static_cast<double>(sec)) * 1e6));
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);

  ordered_json body;
  body["model"] = cfg_.model;
  body["messages"] = ordered_json::array(
      {ordered_json{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = 0;
  body["stream"] = false;

  const httplib::Result res =
      cli.Post(completions_path(url.path), body.dump(), "application/json");
  if (!res)
    throw TransportError("endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw TransportError("endpoint status " + std::to_string(res->status));
  try {
    const ordered_json j = ordered_json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content")
        .get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("malformed completion body");
  }
}

TranscriptLog::TranscriptLog(const std::string& path) : path_(path) {
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw ArgumentError("transcript: cannot write " + path_);
}

void TranscriptLog::append(const std::string& level, const std::string& prompt,
                           const std::string& raw,
                           const std::vector<std::string>& validated,
                           int retries) {
  ordered_json j;
  j["timestamp"] = iso_timestamp();
  j["level"] = level;
  j["prompt"] = prompt;
  j["raw"] = raw;
  j["validated"] = validated;
  j["retries"] = retries;
  std::lock_guard<std::mutex> lock(mu_);
  std::ofstream out(path_, std::ios::app);
  out << j.dump() << "\n";
}

std::vector<TranscriptLog::Entry> TranscriptLog::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("transcript: cannot open " + path);
  std::vector<Entry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("transcript line " + std::to_string(lineno) + ": " +
                       e.what());
    }
    Entry e;
    try {
      e.timestamp = j.at("timestamp").get<std::string>();
      e.level = j.at("level").get<std::string>();
      e.prompt = j.at("prompt").get<std::string>();
      e.raw = j.at("raw").get<std::string>();
      for (const auto& v : j.at("validated"))
        e.validated.push_back(v.get<std::string>());
      e.retries = j.at("retries").get<int>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError("transcript line " + std::to_string(lineno) +
                       ": missing field");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

RankResponse LlmRanker::rank(const RankRequest& req) {
  const std::string prompt = build_prompt(req);
  std::vector<std::string> vocab = req.candidates;
  const bool classify = req.level == RankLevel::kCarrierClassify;
  if (classify) vocab.push_back("none");

  RankResponse resp;
  std::string last_raw;
  try {
    last_raw = client_->complete(prompt);
    const ParseResult pr = parse_and_correct(
        last_raw, vocab, client_->config().retry_budget,
        [&](const std::string& instruction) {
          last_raw = client_->complete(prompt + "\n\n" + instruction);
          return last_raw;
        });
    resp.retries = pr.retries;
    if (pr.valid) {
      resp.labels = pr.labels;
      if (classify)
        resp.labels.erase(
            std::remove(resp.labels.begin(), resp.labels.end(), "none"),
            resp.labels.end());
      resp.valid = true;
    } else {
      const int retries = resp.retries;
      resp = mock_.rank(req);
      resp.retries = retries;
      resp.valid = false;
    }
  } catch (const TransportError&) {
    resp = mock_.rank(req);
    resp.valid = false;
  }
  resp.raw = last_raw;
  if (log_)
    log_->append(to_string(req.level), prompt, last_raw, resp.labels,
                 resp.retries);
  return resp;
}

ReplayRanker::ReplayRanker(const std::string& transcript_path)
    : entries_(TranscriptLog::read(transcript_path)) {}

RankResponse ReplayRanker::rank(const RankRequest& req) {
  if (next_ >= entries_.size())
    throw ValidationError("transcript exhausted at request " +
                          std::to_string(next_ + 1));
  const TranscriptLog::Entry& e = entries_[next_];
  if (e.level != to_string(req.level))
    throw ValidationError("transcript divergence at record " +
                          std::to_string(next_ + 1) + ": recorded level " +
                          e.level + ", requested " + to_string(req.level));
  ++next_;
  RankResponse resp;
  resp.labels = e.validated;
  resp.retries = e.retries;
  resp.raw = e.raw;
  resp.valid = true;
  return resp;
}

}  // namespace godhs
