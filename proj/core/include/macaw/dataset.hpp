// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "macaw/config.hpp"
#include "macaw/error.hpp"
#include "macaw/tokenizer.hpp"
#include "macaw/training.hpp"

namespace macaw {

struct MediaEntry {
  ModalityKind kind = ModalityKind::Image;
  std::string path;
  /// Source video frame count; 0 when unknown.
  std::size_t frames = 0;

  bool operator==(const MediaEntry&) const = default;
};

/// One captioned media item fed to the generation service.
struct CaptionRecord {
  std::string id;
  std::vector<MediaEntry> media;
  std::string caption;
  std::string source;
};

/// One supervised (instruction, response) pair grounded in media. Text-only
/// sources use an empty media list.
struct InstructionExample {
  std::string id;
  std::string source;
  std::vector<MediaEntry> media;
  std::string instruction;
  std::string response;

  bool operator==(const InstructionExample&) const = default;
};

/// Instruction-generation prompt for one caption. The wording follows the
/// caption's media kind: "video" when the record carries a video, "image"
/// otherwise. Throws EmptyCaption.
std::string build_prompt(const CaptionRecord& caption);

inline constexpr std::size_t kMaxPairsPerCompletion = 10;

/// Pairs a "Q:" line with the next non-blank line when it starts with "A:".
/// Keeps at most ten pairs. Throws NoPairsFound.
std::vector<std::pair<std::string, std::string>> parse_qa_pairs(std::string_view completion);

struct GenerationRequest {
  std::string prompt;
  std::size_t max_tokens = 1024;
  double temperature = 0.7;
};

struct GenerationResponse {
  std::string text;
};

/// Chat-completion style text service. Implementations report failures by
/// throwing Error{ClientError}.
class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  virtual GenerationResponse complete(const GenerationRequest& request) = 0;
};

/// 16 lowercase hex digits of FNV-1a-64 over the prompt bytes.
std::string prompt_hash(std::string_view prompt);

/// Offline client: replays `<dir>/<prompt_hash>.txt`.
class MockGenerationClient : public GenerationClient {
 public:
  explicit MockGenerationClient(std::filesystem::path fixtures_dir);
  GenerationResponse complete(const GenerationRequest& request) override;

 private:
  std::filesystem::path dir_;
};

struct RetryPolicy {
  std::size_t max_retries = 3;
  std::chrono::milliseconds backoff{0};
  /// Minimum spacing between consecutive requests.
  std::chrono::milliseconds rate_limit{0};
};

/// Wraps another client with retries (exponential backoff) and a request
/// rate limit. Thread-safe if the inner client is.
class RetryingClient : public GenerationClient {
 public:
  RetryingClient(GenerationClient& inner, RetryPolicy policy) : inner_(inner), policy_(policy) {}
  GenerationResponse complete(const GenerationRequest& request) override;

 private:
  void wait_for_slot();

  GenerationClient& inner_;
  RetryPolicy policy_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_slot_{};
};

struct GenerationOptions {
  std::size_t max_tokens = 1024;
  double temperature = 0.7;
  /// Requests in flight at once. Output order never depends on this.
  std::size_t concurrency = 1;
};

struct SkippedCaption {
  std::string id;
  std::string reason;
};

struct GenerationResult {
  std::vector<InstructionExample> examples;
  std::vector<SkippedCaption> skipped;
  /// Number of captions (from the front of the input) covered by this result.
  std::size_t completed = 0;
};

/// Raised when the client fails after retries. `partial` holds everything
/// produced for captions before the failing one.
class GenerationAborted : public Error {
 public:
  GenerationAborted(const std::string& what, GenerationResult partial)
      : Error(Errc::ClientError, what), partial_(std::move(partial)) {}
  const GenerationResult& partial() const noexcept { return partial_; }

 private:
  GenerationResult partial_;
};

/// One prompt per caption; every parsed pair becomes an example carrying the
/// caption's media. Example ids are "<caption id>-q<k>", k counting from 1.
GenerationResult generate_examples(const std::vector<CaptionRecord>& captions, GenerationClient& client,
                                   const GenerationOptions& options = {});

/// Uniform sample without replacement of n examples from each source,
/// concatenated in source order, then shuffled. Throws SourceTooSmall.
std::vector<InstructionExample> mix(const std::vector<std::pair<std::string, std::vector<InstructionExample>>>& sources,
                                    std::size_t n_per_source, std::uint64_t seed);

/// Groups examples by their source tag, in first-appearance order.
std::vector<std::pair<std::string, std::vector<InstructionExample>>> group_by_source(
    const std::vector<InstructionExample>& examples);

struct SourceStats {
  std::string source;
  std::size_t items = 0;
  double avg_instruction_words = 0.0;
  double avg_response_words = 0.0;
};

std::size_t word_count(std::string_view text);
/// Per-source rows in first-appearance order. Throws EmptyDataset.
std::vector<SourceStats> stats(const std::vector<InstructionExample>& examples);
/// Plain-text table with columns Dataset, Items, Ins. Len., Res. Len.
std::string format_stats(const std::vector<SourceStats>& rows);

// JSONL I/O. One object per line, UTF-8, no BOM.
//   captions: {"id", "source", "media": [{"kind", "path"[, "frames"]}], "caption"}
//   examples: {"id", "source", "media": [...], "instruction", "response"}
std::string to_jsonl_line(const InstructionExample& example);
std::string to_jsonl(const std::vector<InstructionExample>& examples);
InstructionExample parse_example_line(std::string_view line);
CaptionRecord parse_caption_line(std::string_view line);
/// Throws SchemaError with the line number on malformed input.
std::vector<InstructionExample> read_examples(const std::filesystem::path& path);
std::vector<CaptionRecord> read_captions(const std::filesystem::path& path);
void write_examples(const std::filesystem::path& path, const std::vector<InstructionExample>& examples);

/// Encodes media and frames text. Relative media paths resolve against
/// `base_dir`. Throws SchemaError when one example lists a kind twice.
TrainingExample to_training_example(const InstructionExample& example, const Vocab& vocab,
                                    const ModalityConfig& modality, const std::filesystem::path& base_dir = {});
std::vector<TrainingExample> to_training_examples(const std::vector<InstructionExample>& examples, const Vocab& vocab,
                                                  const ModalityConfig& modality,
                                                  const std::filesystem::path& base_dir = {});

}  // namespace macaw
