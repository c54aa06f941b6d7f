// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "macaw/cognitive.hpp"
#include "macaw/config.hpp"
#include "macaw/training.hpp"

namespace macaw::testing {

std::filesystem::path data_dir();
std::filesystem::path default_config_path();

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::string read_file(const std::filesystem::path& path);

/// Small model for gradient checks and fast property tests.
RunConfig tiny_config(std::size_t d_model = 16);

/// Synthetic example with the chosen modalities present.
TrainingExample synthetic_example(const ModalityConfig& cfg, std::uint64_t seed, bool image, bool video, bool audio,
                                  const std::string& instruction, const std::string& response);

/// Sixteen short memorisation targets over mixed modality combinations.
std::vector<TrainingExample> overfit_examples(const ModalityConfig& cfg);

/// Runs the CLI in-process; returns the exit code and captured streams.
struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};
CliResult run_cli(const std::vector<std::string>& args);

}  // namespace macaw::testing
