#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace ctxprobe::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kCapability = 3, kScorerFailure = 4, kPartial = 5 };

inline constexpr int kConfigVersion = 1;

// Flat run configuration with every key at its default. Probe parameters
// left null fall back to the probe's own defaults.
nlohmann::json default_config();

// Overlays `overrides` on `base`; unknown keys and mistyped values throw
// InvalidArgument.
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides);

// Parses "key=value" with the value typed after the key's default.
std::pair<std::string, nlohmann::json> parse_setting(const std::string& assignment);

// Rows of a CSV file as header -> value maps (RFC 4180 quoting).
std::vector<std::vector<std::string>> read_csv(std::istream& in);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctxprobe::cli
