// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cspan/error.hpp"
#include "cspan/gradcheck_suite.hpp"
#include "cspan/model.hpp"
#include "cspan/training.hpp"

namespace cspan::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kNumeric = 3 };

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Everything a subcommand consumes.
struct RunConfig {
  CspanConfig model = CspanConfig::base();
  TrainConfig train;
  std::string train_path;
  std::string test_path;
  std::string embeddings = "random";  ///< "random", "random:RANGE" or "glove:PATH"
  bool trainable_embeddings = true;
  std::string out = "out";
  std::string suite = "fusion";
  std::size_t seeds = 3;
  std::string ops;  ///< comma list, empty = all
  std::string checkpoint;
  std::string text;
};

using Settings = std::vector<std::pair<std::string, std::string>>;

/// Recognized keys, in the order render() writes them. Each is also a
/// `--key` flag.
const std::vector<std::string>& known_keys();

/// `key = value` per line, `#` starts a comment. Throws ConfigError on a
/// malformed line or an unknown key.
Settings parse_config_text(std::string_view text);
Settings read_config_file(const std::filesystem::path& path);

/// Applies the layers in order (later wins per key). A preset is applied
/// before every explicit key regardless of which layer set it.
RunConfig resolve(const std::vector<Settings>& layers);

/// The resolved view as config text; parse_config_text(render(c)) resolves
/// back to c.
std::string render(const RunConfig& config);

/// Synthetic sources look like "order:N:L"; anything else is a CSV path.
std::vector<LabeledText> load_split(const std::string& source, std::uint64_t seed, bool test_split);

/// Entry point; `args` excludes the program name. `extra_cases` are appended
/// to the gradcheck registry.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const std::vector<GradCheckCase>& extra_cases = {});

}  // namespace cspan::cli
