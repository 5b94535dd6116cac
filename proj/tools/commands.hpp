#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace zsl::cli {

// A setting that can come from the defaults, a JSON config file (`key`) or a
// command-line flag (`--key` with '_' spelled '-'), in increasing priority.
struct Knob {
  std::string key;
  nlohmann::json fallback;  // also fixes the value type
  std::string help;
};

struct Command {
  std::string name;
  std::string description;
  std::vector<Knob> knobs;
  std::function<int(const nlohmann::json& resolved)> run;
};

std::vector<Command> all_commands();

// Merges defaults, the optional config file and explicit flags into one
// object. Unknown config keys and badly typed values are ValidationErrors.
// flags[i] is the raw text given for knobs[i], if any.
nlohmann::json resolve(const Command& command, const std::vector<std::optional<std::string>>& flags,
                       const std::string& config_path);

}  // namespace zsl::cli
