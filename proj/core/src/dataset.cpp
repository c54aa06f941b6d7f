// SPDX-License-Identifier: Apache-2.0
#include "macaw/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "macaw/encoders.hpp"
#include "macaw/rng.hpp"

namespace macaw {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::string_view kWhitespace = " \t\r\n\f\v";

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(kWhitespace);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kWhitespace);
  return s.substr(b, e - b + 1);
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

constexpr std::string_view kPromptTemplate =
    "This is the caption of an image/video: {caption}. This image/video contains important information that "
    "needs to be conveyed through high-quality instructions.\n"
    "\n"
    "Your task is to provide ten pairs of instructions and responses that are related to the content of the "
    "image/video caption like dialogue concentrating on the content of the image/video without explicitly "
    "mentioning the caption or the word 'caption'.\n"
    "\n"
    "Your focus should be on describing, explaining, or analyzing various aspects of the image/video, as well as "
    "providing some QA pairs. The purpose of this exercise is to fine-tune a language model so that it can "
    "generate accurate and relevant responses.\n"
    "\n"
    "In each pair, the first line should start with \"Q:\" and contain an instruction related to the image/video, "
    "while the second line should start with \"A:\" and provide a response to the instruction.\n"
    "\n"
    "Please ensure that your instructions are diverse and of high quality, accurately reflecting the content of "
    "the image and providing useful information to the language model:";

ojson media_to_json(const std::vector<MediaEntry>& media) {
  ojson arr = ojson::array();
  for (const auto& m : media) {
    ojson e;
    e["kind"] = std::string(modality_name(m.kind));
    e["path"] = m.path;
    if (m.frames != 0) e["frames"] = m.frames;
    arr.push_back(std::move(e));
  }
  return arr;
}

template <typename T>
T field(const ojson& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(Errc::SchemaError, std::string("missing field \"") + key + "\"");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::SchemaError, std::string("field \"") + key + "\" has the wrong type");
  }
}

std::vector<MediaEntry> media_from_json(const ojson& j) {
  auto it = j.find("media");
  if (it == j.end()) throw Error(Errc::SchemaError, "missing field \"media\"");
  if (!it->is_array()) throw Error(Errc::SchemaError, "field \"media\" must be an array");
  std::vector<MediaEntry> out;
  for (const auto& e : *it) {
    if (!e.is_object()) throw Error(Errc::SchemaError, "media entries must be objects");
    MediaEntry m;
    try {
      m.kind = parse_modality(field<std::string>(e, "kind"));
    } catch (const Error& err) {
      if (err.code() == Errc::SchemaError) throw;
      throw Error(Errc::SchemaError, err.what());
    }
    m.path = field<std::string>(e, "path");
    if (e.contains("frames")) m.frames = field<std::size_t>(e, "frames");
    out.push_back(std::move(m));
  }
  return out;
}

ojson parse_object(std::string_view line) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::SchemaError, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::SchemaError, "record must be a JSON object");
  return j;
}

template <typename Record, typename Parse>
std::vector<Record> read_jsonl(const std::filesystem::path& path, Parse parse) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, path.string() + ": cannot open");
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) {
      throw Error(Errc::SchemaError, path.string() + ":1: byte order mark is not allowed");
    }
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse(line));
    } catch (const Error& e) {
      throw Error(Errc::SchemaError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string with_thousands(std::size_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out.push_back(',');
    out.push_back(digits[i]);
  }
  return out;
}

}  // namespace

std::string build_prompt(const CaptionRecord& caption) {
  std::string text(trim(caption.caption));
  if (text.empty()) throw Error(Errc::EmptyCaption, "caption " + caption.id + " is empty");
  if (text.back() == '.') text.pop_back();
  const bool video = std::any_of(caption.media.begin(), caption.media.end(),
                                 [](const MediaEntry& m) { return m.kind == ModalityKind::Video; });
  std::string prompt(kPromptTemplate);
  replace_all(prompt, "an image/video", video ? "a video" : "an image");
  replace_all(prompt, "image/video", video ? "video" : "image");
  replace_all(prompt, "{caption}", text);
  return prompt;
}

std::vector<std::pair<std::string, std::string>> parse_qa_pairs(std::string_view completion) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::optional<std::string> question;
  std::size_t pos = 0;
  while (pos <= completion.size() && pairs.size() < kMaxPairsPerCompletion) {
    auto nl = completion.find('\n', pos);
    if (nl == std::string_view::npos) nl = completion.size();
    const auto line = trim(completion.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    if (line.starts_with("Q:")) {
      question = std::string(trim(line.substr(2)));
    } else if (line.starts_with("A:") && question) {
      std::string answer(trim(line.substr(2)));
      if (!question->empty() && !answer.empty()) pairs.emplace_back(std::move(*question), std::move(answer));
      question.reset();
    } else {
      question.reset();
    }
  }
  if (pairs.empty()) throw Error(Errc::NoPairsFound, "completion contains no Q:/A: pairs");
  return pairs;
}

std::string prompt_hash(std::string_view prompt) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(prompt)));
  return buf;
}

MockGenerationClient::MockGenerationClient(std::filesystem::path fixtures_dir) : dir_(std::move(fixtures_dir)) {
  if (!std::filesystem::is_directory(dir_)) {
    throw Error(Errc::ConfigError, dir_.string() + ": fixtures directory does not exist");
  }
}

GenerationResponse MockGenerationClient::complete(const GenerationRequest& request) {
  const auto path = dir_ / (prompt_hash(request.prompt) + ".txt");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::ClientError, "no fixture " + path.filename().string() + " for prompt");
  std::ostringstream ss;
  ss << f.rdbuf();
  return {ss.str()};
}

void RetryingClient::wait_for_slot() {
  if (policy_.rate_limit.count() == 0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    slot = std::max(std::chrono::steady_clock::now(), next_slot_);
    next_slot_ = slot + policy_.rate_limit;
  }
  std::this_thread::sleep_until(slot);
}

GenerationResponse RetryingClient::complete(const GenerationRequest& request) {
  for (std::size_t attempt = 0;; ++attempt) {
    wait_for_slot();
    try {
      return inner_.complete(request);
    } catch (const Error& e) {
      if (e.code() != Errc::ClientError) throw;
      if (attempt >= policy_.max_retries) {
        throw Error(Errc::ClientError,
                    "gave up after " + std::to_string(attempt + 1) + " attempts: " + e.what());
      }
    }
    std::this_thread::sleep_for(policy_.backoff * (std::int64_t{1} << std::min<std::size_t>(attempt, 20)));
  }
}

GenerationResult generate_examples(const std::vector<CaptionRecord>& captions, GenerationClient& client,
                                   const GenerationOptions& options) {
  const std::size_t n = captions.size();
  std::vector<std::string> prompts;
  prompts.reserve(n);
  for (const auto& c : captions) {
    if (c.media.empty()) throw Error(Errc::SchemaError, "caption " + c.id + " has no media");
    prompts.push_back(build_prompt(c));
  }

  std::vector<std::optional<std::string>> completions(n);
  std::vector<std::exception_ptr> failures(n);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> first_failure{n};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || i > first_failure.load()) return;
      try {
        completions[i] = client.complete({prompts[i], options.max_tokens, options.temperature}).text;
      } catch (...) {
        failures[i] = std::current_exception();
        std::size_t cur = first_failure.load();
        while (i < cur && !first_failure.compare_exchange_weak(cur, i)) {
        }
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.concurrency, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  GenerationResult result;
  for (std::size_t i = 0; i < n; ++i) {
    if (failures[i]) {
      std::string what = "caption " + captions[i].id + ": ";
      try {
        std::rethrow_exception(failures[i]);
      } catch (const std::exception& e) {
        what += e.what();
      }
      throw GenerationAborted(what, std::move(result));
    }
    const auto& c = captions[i];
    try {
      auto pairs = parse_qa_pairs(*completions[i]);
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        result.examples.push_back(InstructionExample{c.id + "-q" + std::to_string(k + 1), c.source, c.media,
                                                     std::move(pairs[k].first), std::move(pairs[k].second)});
      }
    } catch (const Error& e) {
      if (e.code() != Errc::NoPairsFound) throw;
      result.skipped.push_back({c.id, e.what()});
    }
    result.completed = i + 1;
  }
  return result;
}

std::vector<InstructionExample> mix(const std::vector<std::pair<std::string, std::vector<InstructionExample>>>& sources,
                                    std::size_t n_per_source, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<InstructionExample> out;
  out.reserve(n_per_source * sources.size());
  for (const auto& [name, examples] : sources) {
    if (examples.size() < n_per_source) {
      throw Error(Errc::SourceTooSmall, "source " + name + " has " + std::to_string(examples.size()) +
                                            " examples, fewer than " + std::to_string(n_per_source));
    }
    std::vector<std::size_t> idx(examples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i = 0; i < n_per_source; ++i) out.push_back(examples[idx[i]]);
  }
  rng.shuffle(std::span<InstructionExample>(out));
  return out;
}

std::vector<std::pair<std::string, std::vector<InstructionExample>>> group_by_source(
    const std::vector<InstructionExample>& examples) {
  std::vector<std::pair<std::string, std::vector<InstructionExample>>> groups;
  for (const auto& ex : examples) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == ex.source; });
    if (it == groups.end()) it = groups.insert(groups.end(), {ex.source, {}});
    it->second.push_back(ex);
  }
  return groups;
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while ((pos = text.find_first_not_of(kWhitespace, pos)) != std::string_view::npos) {
    ++n;
    pos = text.find_first_of(kWhitespace, pos);
    if (pos == std::string_view::npos) break;
  }
  return n;
}

std::vector<SourceStats> stats(const std::vector<InstructionExample>& examples) {
  if (examples.empty()) throw Error(Errc::EmptyDataset, "no examples to summarise");
  std::vector<SourceStats> rows;
  std::vector<std::pair<std::size_t, std::size_t>> words;
  for (const auto& ex : examples) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SourceStats& r) { return r.source == ex.source; });
    if (it == rows.end()) {
      it = rows.insert(rows.end(), SourceStats{ex.source});
      words.emplace_back(0, 0);
    }
    auto& w = words[static_cast<std::size_t>(it - rows.begin())];
    ++it->items;
    w.first += word_count(ex.instruction);
    w.second += word_count(ex.response);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].avg_instruction_words = static_cast<double>(words[i].first) / static_cast<double>(rows[i].items);
    rows[i].avg_response_words = static_cast<double>(words[i].second) / static_cast<double>(rows[i].items);
  }
  return rows;
}

std::string format_stats(const std::vector<SourceStats>& rows) {
  std::size_t name_w = std::string_view("Dataset").size();
  for (const auto& r : rows) name_w = std::max(name_w, r.source.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "Dataset" << std::right << "  " << std::setw(10)
     << "Items" << "  " << std::setw(10) << "Ins. Len." << "  " << std::setw(10) << "Res. Len." << '\n';
  os << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(name_w)) << r.source << std::right << "  " << std::setw(10)
       << with_thousands(r.items) << "  " << std::setw(10) << r.avg_instruction_words << "  " << std::setw(10)
       << r.avg_response_words << '\n';
  }
  return os.str();
}

std::string to_jsonl_line(const InstructionExample& example) {
  ojson j;
  j["id"] = example.id;
  j["source"] = example.source;
  j["media"] = media_to_json(example.media);
  j["instruction"] = example.instruction;
  j["response"] = example.response;
  return j.dump();
}

std::string to_jsonl(const std::vector<InstructionExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += to_jsonl_line(ex);
    out += '\n';
  }
  return out;
}

InstructionExample parse_example_line(std::string_view line) {
  const auto j = parse_object(line);
  InstructionExample ex;
  ex.id = field<std::string>(j, "id");
  ex.source = field<std::string>(j, "source");
  ex.media = media_from_json(j);
  ex.instruction = field<std::string>(j, "instruction");
  ex.response = field<std::string>(j, "response");
  if (trim(ex.instruction).empty() || trim(ex.response).empty()) {
    throw Error(Errc::SchemaError, "example " + ex.id + " has empty text");
  }
  return ex;
}

CaptionRecord parse_caption_line(std::string_view line) {
  const auto j = parse_object(line);
  CaptionRecord c;
  c.id = field<std::string>(j, "id");
  c.source = field<std::string>(j, "source");
  c.media = media_from_json(j);
  c.caption = field<std::string>(j, "caption");
  if (c.media.empty()) throw Error(Errc::SchemaError, "caption " + c.id + " has no media");
  return c;
}

std::vector<InstructionExample> read_examples(const std::filesystem::path& path) {
  return read_jsonl<InstructionExample>(path, parse_example_line);
}

std::vector<CaptionRecord> read_captions(const std::filesystem::path& path) {
  return read_jsonl<CaptionRecord>(path, parse_caption_line);
}

void write_examples(const std::filesystem::path& path, const std::vector<InstructionExample>& examples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::IoError, path.string() + ": cannot open for writing");
  const std::string text = to_jsonl(examples);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error(Errc::IoError, path.string() + ": write failed");
}

TrainingExample to_training_example(const InstructionExample& example, const Vocab& vocab,
                                    const ModalityConfig& modality, const std::filesystem::path& base_dir) {
  TrainingExample out;
  for (const auto& m : example.media) {
    std::filesystem::path p(m.path);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    // Missing media fingerprints the path as written, so the features do
    // not depend on where the dataset file lives.
    auto ref = std::filesystem::exists(p) ? MediaRef::from_path(m.kind, p.string())
                                          : MediaRef{m.kind, p.string(), fnv1a64(m.path), 0};
    ref.frame_count = m.frames;
    auto& slot = m.kind == ModalityKind::Image   ? out.input.image
                 : m.kind == ModalityKind::Video ? out.input.video
                                                 : out.input.audio;
    if (slot) {
      throw Error(Errc::SchemaError,
                  "example " + example.id + " lists " + std::string(modality_name(m.kind)) + " twice");
    }
    slot = encode_media(ref, modality);
  }
  out.input.instruction = frame_instruction(vocab, example.instruction);
  out.response = frame_response(vocab, example.response);
  return out;
}

std::vector<TrainingExample> to_training_examples(const std::vector<InstructionExample>& examples, const Vocab& vocab,
                                                  const ModalityConfig& modality,
                                                  const std::filesystem::path& base_dir) {
  std::vector<TrainingExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(to_training_example(ex, vocab, modality, base_dir));
  return out;
}

}  // namespace macaw
