#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "godhs/semantics.hpp"

namespace godhs {

struct LlmConfig {
  std::string endpoint = "http://127.0.0.1:11434";
  std::string model = "qwen2.5:7b";
  double timeout_s = 30.0;
  int retry_budget = 2;
};

/// Single-turn chat-completions client (temperature 0, stream off).
/// Requests to one endpoint are serialized.
class LlmClient {
 public:
  explicit LlmClient(const LlmConfig& cfg) : cfg_(cfg) {}
  virtual ~LlmClient() = default;

  /// Returns the assistant text verbatim. Throws TransportError on
  /// connect/timeout/status/shape failures.
  virtual std::string complete(const std::string& prompt);

  const LlmConfig& config() const { return cfg_; }

 protected:
  LlmConfig cfg_;

 private:
  std::mutex mu_;
};

/// Append-only line-delimited log of semantic queries; the replay source.
class TranscriptLog {
 public:
  struct Entry {
    std::string timestamp;
    std::string level;
    std::string prompt;
    std::string raw;
    std::vector<std::string> validated;
    int retries = 0;
  };

  explicit TranscriptLog(const std::string& path);
  void append(const std::string& level, const std::string& prompt,
              const std::string& raw,
              const std::vector<std::string>& validated, int retries);
  const std::string& path() const { return path_; }

  static std::vector<Entry> read(const std::string& path);

 private:
  std::string path_;
  std::mutex mu_;
};

/// Language-model-backed ranker: prompt, query, validate, retry, and fall
/// back to the knowledge base when the model fails. Total: always returns
/// a usable response.
class LlmRanker : public Ranker {
 public:
  LlmRanker(LlmClient& client, const KnowledgeBase& kb,
            TranscriptLog* log = nullptr)
      : client_(&client), mock_(kb), log_(log) {}

  RankResponse rank(const RankRequest& req) override;
  std::string name() const override { return "llm"; }

 private:
  LlmClient* client_;
  MockRanker mock_;
  TranscriptLog* log_;
};

/// Serves recorded decisions back in order; any divergence from the
/// recorded request stream is an error.
class ReplayRanker : public Ranker {
 public:
  explicit ReplayRanker(const std::string& transcript_path);

  RankResponse rank(const RankRequest& req) override;
  std::string name() const override { return "replay"; }
  size_t remaining() const { return entries_.size() - next_; }

 private:
  std::vector<TranscriptLog::Entry> entries_;
  size_t next_ = 0;
};

}  // namespace godhs
