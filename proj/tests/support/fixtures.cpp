// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include <fstream>
#include <sstream>

#include "macaw/cli.hpp"
#include "macaw/encoders.hpp"
#include "macaw/rng.hpp"
#include "macaw/tokenizer.hpp"

namespace macaw::testing {

std::filesystem::path data_dir() { return MACAW_TEST_DATA_DIR; }
std::filesystem::path default_config_path() { return MACAW_DEFAULT_CONFIG; }

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("macaw-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunConfig tiny_config(std::size_t d_model) {
  RunConfig cfg;
  cfg.model.d_model = d_model;
  cfg.model.layers = 2;
  cfg.model.heads = 2;
  cfg.model.ffn_width = 2 * d_model;
  cfg.model.vocab_size = 260;
  cfg.model.max_seq_len = 128;
  cfg.train.max_seq_len = 128;
  cfg.modality.image = {8, 6, 4};
  cfg.modality.video = {6, 5, 4};
  cfg.modality.audio = {10, 4, 4};
  return cfg;
}

TrainingExample synthetic_example(const ModalityConfig& cfg, std::uint64_t seed, bool image, bool video, bool audio,
                                  const std::string& instruction, const std::string& response) {
  const Vocab vocab;
  TrainingExample ex;
  if (image) ex.input.image = stub_encode({ModalityKind::Image, "", mix64(seed * 3 + 0), 0}, cfg);
  if (video) ex.input.video = encode_video({ModalityKind::Video, "", mix64(seed * 3 + 1), 48}, cfg);
  if (audio) ex.input.audio = stub_encode({ModalityKind::Audio, "", mix64(seed * 3 + 2), 0}, cfg);
  ex.input.instruction = frame_instruction(vocab, instruction);
  ex.response = frame_response(vocab, response);
  return ex;
}

std::vector<TrainingExample> overfit_examples(const ModalityConfig& cfg) {
  static const char* colors[] = {"red",  "blue", "green", "amber", "violet", "white", "black", "gray",
                                 "pink", "teal", "gold",  "brown", "cyan",   "lime",  "navy",  "olive"};
  static const char* things[] = {"fox",  "boat", "tree", "car",  "kite", "dog",  "bird", "lamp",
                                 "cup",  "bike", "fish", "moon", "door", "hat",  "ship", "bell"};
  std::vector<TrainingExample> out;
  for (std::uint64_t i = 0; i < 16; ++i) {
    const bool video = i % 4 == 3;
    out.push_back(synthetic_example(cfg, 1000 + i, !video, video, i % 2 == 1,
                                    "What is in clip " + std::to_string(i) + "?",
                                    std::string("a ") + colors[i] + " " + things[i]));
  }
  return out;
}

CliResult run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"macaw"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  CliResult r;
  r.code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

}  // namespace macaw::testing
