// zsl: data generation, training, evaluation, ablation and attention maps for
// attribute-based zero-shot learning with a small ViT.
//
// Exit codes: 0 success, 2 invalid input or usage, 3 numeric failure,
// 4 I/O error, 1 anything unexpected.

#include <cstdio>
#include <exception>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "zsl/errors.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (char& c : s) {
    if (c == '_') c = '-';
  }
  return "--" + s;
}

struct Registered {
  zsl::cli::Command command;
  CLI::App* app = nullptr;
  std::vector<std::string> raw;
  std::vector<CLI::Option*> options;
  std::string config_path;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot learning with implicit (rotation) and explicit (ViT) attention"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::vector<std::unique_ptr<Registered>> regs;
  for (auto& cmd : zsl::cli::all_commands()) {
    auto r = std::make_unique<Registered>();
    r->command = std::move(cmd);
    r->app = app.add_subcommand(r->command.name, r->command.description);
    r->raw.resize(r->command.knobs.size());
    r->app->add_option("--config", r->config_path, "JSON file with any of the settings below (flags win)");
    for (std::size_t i = 0; i < r->command.knobs.size(); ++i) {
      const auto& k = r->command.knobs[i];
      std::string def = k.fallback.is_string() ? k.fallback.get<std::string>() : k.fallback.dump();
      std::string help = k.help + (def.empty() ? "" : " [default: " + def + "]");
      r->options.push_back(r->app->add_option(flag_name(k.key), r->raw[i], help));
    }
    regs.push_back(std::move(r));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  for (auto& r : regs) {
    if (!r->app->parsed()) continue;
    try {
      std::vector<std::optional<std::string>> flags(r->raw.size());
      for (std::size_t i = 0; i < r->raw.size(); ++i) {
        if (r->options[i]->count() > 0) flags[i] = r->raw[i];
      }
      const auto resolved = zsl::cli::resolve(r->command, flags, r->config_path);
      return r->command.run(resolved);
    } catch (const zsl::NumericError& e) {
      std::fprintf(stderr, "numeric error: %s\n", e.what());
      return kExitNumeric;
    } catch (const zsl::IoError& e) {
      std::fprintf(stderr, "I/O error: %s\n", e.what());
      return kExitIo;
    } catch (const zsl::Error& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitValidation;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "internal error: %s\n", e.what());
      return 1;
    }
  }
  return kExitValidation;
}
