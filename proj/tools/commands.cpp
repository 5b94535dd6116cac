#include "commands.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "zsl/attention_viz.hpp"
#include "zsl/checkpoint.hpp"
#include "zsl/dataset.hpp"
#include "zsl/errors.hpp"
#include "zsl/gzsl.hpp"
#include "zsl/synthetic.hpp"
#include "zsl/trainer.hpp"

namespace zsl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json coerce(const Knob& knob, const json& value, const std::string& origin) {
  const auto bad = [&](const std::string& why) {
    return ValidationError(origin + ": '" + knob.key + "' " + why + " (got " + value.dump() + ")");
  };
  if (knob.fallback.is_string()) {
    if (value.is_string()) return value;
    if (value.is_number()) return value.dump();
    throw bad("must be a string");
  }
  if (knob.fallback.is_number_unsigned()) {
    if (value.is_number_unsigned()) return value;
    if (value.is_number_integer()) throw bad("must be non-negative");
    if (value.is_string()) {
      const std::string s = value.get<std::string>();
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) return v;
    }
    throw bad("must be a non-negative integer");
  }
  if (knob.fallback.is_number()) {
    if (value.is_number()) return value.get<double>();
    if (value.is_string()) {
      const std::string s = value.get<std::string>();
      double v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) return v;
    }
    throw bad("must be a number");
  }
  throw ContractError("knob '" + knob.key + "' has an unsupported type");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

fs::path make_out_dir(const json& cfg) {
  const std::string out = cfg.at("out");
  if (out.empty()) throw ValidationError("--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
  return out;
}

void echo_config(const fs::path& dir, const std::string& command, const json& cfg) {
  json j = cfg;
  j["command"] = command;
  write_text(dir / "config.resolved.json", j.dump(2) + "\n");
}

void require_dir(const std::string& key, const std::string& path) {
  if (path.empty()) throw ValidationError("--" + key + " is required");
  if (!fs::is_directory(path)) throw IoError(key + " directory not found: " + path);
}

void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw ValidationError("--" + key + " is required");
  if (!fs::is_regular_file(path)) throw IoError(key + " file not found: " + path);
}

std::optional<double> parse_gamma(const std::string& s) {
  if (s == "sweep") return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ValidationError("gamma must be a number or 'sweep', got '" + s + "'");
  }
  return v;
}

// "a:b:step" (inclusive) or "g1,g2,...".
std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> g;
  const auto num = [&](const std::string& t) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
      throw ValidationError("bad gamma grid value '" + t + "'");
    }
    return v;
  };
  if (s.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::istringstream in(s);
    std::string p;
    while (std::getline(in, p, ':')) parts.push_back(p);
    if (parts.size() != 3) throw ValidationError("gamma grid range must be start:stop:step");
    const double a = num(parts[0]), b = num(parts[1]), step = num(parts[2]);
    if (!(step > 0) || b < a) throw ValidationError("gamma grid range needs step > 0 and stop >= start");
    const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= n; ++i) g.push_back(a + static_cast<double>(i) * step);
  } else {
    for (const auto& t : split_list(s)) g.push_back(num(t));
  }
  if (g.empty()) throw ValidationError("gamma grid is empty");
  return g;
}

std::size_t env_threads() {
  const char* v = std::getenv("ZSL_NUM_THREADS");
  if (!v || !*v) return 1;
  std::size_t n = 0;
  auto [ptr, ec] = std::from_chars(v, v + std::strlen(v), n);
  if (ec != std::errc() || *ptr != '\0' || n == 0) throw ValidationError(std::string("ZSL_NUM_THREADS must be a positive integer, got '") + v + "'");
  return n;
}

// --- shared knob groups ----------------------------------------------------

std::vector<Knob> model_knobs() {
  return {
      {"image_size", 32u, "square image side the dataset is resized to"},
      {"patch", 8u, "ViT patch size"},
      {"dim", 64u, "ViT hidden dimension"},
      {"depth", 4u, "number of encoder layers"},
      {"heads", 4u, "attention heads per layer"},
      {"mlp_ratio", 4u, "MLP hidden width as a multiple of dim"},
  };
}

std::vector<Knob> train_knobs() {
  return {
      {"epochs", 30u, "training epochs"},
      {"steps_per_epoch", 100u, "optimizer steps per epoch"},
      {"lr", 1e-4, "Adam learning rate"},
      {"lambda1", 1.0, "weight of the rotation cross-entropy"},
      {"lambda2", 1.0, "weight of the attribute MSE"},
      {"labelled_per_batch", 32u, "labelled seen-class images per batch"},
      {"rotation_sources", 8u, "source images per batch, each rotated 4 ways"},
      {"external_dir", "", "directory of PPM images for the external rotation pools"},
      {"gamma", "sweep", "calibration factor for reports, or 'sweep' for the best-H point of 0:1:0.01"},
  };
}

std::vector<Knob> concat(std::vector<Knob> a, const std::vector<Knob>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

ViTConfig model_config(const json& cfg, std::size_t num_attributes) {
  ViTConfig c;
  c.height = c.width = cfg.at("image_size");
  c.channels = 3;
  c.patch = cfg.at("patch");
  c.dim = cfg.at("dim");
  c.depth = cfg.at("depth");
  c.heads = cfg.at("heads");
  c.mlp_ratio = cfg.at("mlp_ratio");
  c.num_attributes = num_attributes;
  c.validate();
  return c;
}

TrainConfig train_config(const json& cfg) {
  TrainConfig t;
  t.epochs = cfg.at("epochs");
  t.steps_per_epoch = cfg.at("steps_per_epoch");
  t.lr = cfg.at("lr");
  t.lambda1 = cfg.at("lambda1");
  t.lambda2 = cfg.at("lambda2");
  t.seed = cfg.at("seed");
  t.geometry.labelled = cfg.at("labelled_per_batch");
  t.geometry.rotation_sources = cfg.at("rotation_sources");
  const std::string ext = cfg.at("external_dir");
  if (!ext.empty()) t.pool.external_dir = ext;
  t.gamma = parse_gamma(cfg.at("gamma"));
  if (cfg.contains("pool")) t.pool.mode = parse_pool_mode(cfg.at("pool").get<std::string>());
  if (cfg.contains("checkpoint_every")) t.checkpoint_every = cfg.at("checkpoint_every");
  if (cfg.contains("eval_every")) t.eval_every = cfg.at("eval_every");
  t.validate();
  return t;
}

DatasetBundle load_data(const json& cfg) {
  const std::string data = cfg.at("data");
  require_dir("data", data);
  LoadOptions opt;
  opt.image_size = cfg.at("image_size");
  return load_dataset(data, opt);
}

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04zu.ckpt", epoch);
  return buf;
}

// --- commands ----------------------------------------------------------------

int cmd_gen_synth(const json& cfg) {
  SyntheticSpec spec;
  spec.num_classes = cfg.at("classes");
  spec.num_seen = cfg.at("seen");
  spec.num_attributes = cfg.at("attributes");
  spec.image_size = cfg.at("image_size");
  spec.samples_per_class = cfg.at("samples_per_class");
  spec.noise_std = cfg.at("noise");
  spec.test_fraction = cfg.at("test_fraction");
  spec.validate();
  const fs::path out = make_out_dir(cfg);
  Rng rng(cfg.at("seed").get<std::uint64_t>());
  const DatasetBundle b = generate_synthetic(spec, rng, out);
  echo_config(out, "gen-synth", cfg);
  std::cout << "classes=" << b.attributes.num_classes() << " (seen " << b.splits.seen_classes.size() << ", unseen "
            << b.splits.unseen_classes.size() << ") M=" << b.attributes.num_attributes()
            << " samples=" << b.images.size() << " (train " << b.splits.train_samples.size() << ", test_seen "
            << b.splits.test_seen.size() << ", test_unseen " << b.splits.test_unseen.size() << ")\n";
  return 0;
}

int cmd_train(const json& cfg) {
  const std::string resume_path = cfg.at("resume");
  if (!resume_path.empty()) require_file("resume", resume_path);
  const std::string ext = cfg.at("external_dir");
  if (!ext.empty()) require_dir("external_dir", ext);
  const TrainConfig tc = train_config(cfg);
  const DatasetBundle bundle = load_data(cfg);
  const ViTConfig mc = model_config(cfg, bundle.attributes.num_attributes());
  const fs::path out = make_out_dir(cfg);
  echo_config(out, "train", cfg);

  std::optional<TrainingState> resume;
  ViTModel model = [&] {
    if (resume_path.empty()) return init_model(mc, tc.seed);
    Checkpoint ck = load_checkpoint(resume_path);
    if (!(ck.model.config() == mc)) throw ValidationError("checkpoint model geometry differs from the resolved config");
    if (!ck.state) throw ValidationError(resume_path + " holds weights only; resuming needs optimizer state");
    resume = std::move(ck.state);
    return std::move(ck.model);
  }();
  const std::uint64_t initial_hash = model.parameter_hash();

  const fs::path ckdir = out / "checkpoints";
  TrainHooks hooks;
  hooks.on_checkpoint = [&](const ViTModel& m, const TrainingState& s) {
    fs::create_directories(ckdir);
    save_checkpoint(ckdir / epoch_name(s.epochs_done), m, &s);
  };
  const std::size_t report_every = std::max<std::size_t>(1, tc.steps_per_epoch);
  hooks.on_step = [&](const StepRecord& r) {
    if ((r.step + 1) % report_every == 0) {
      std::printf("epoch %zu step %llu l_tot=%.5f l_mse=%.5f l_ce=%.5f (%.1fs)\n", r.epoch + 1,
                  static_cast<unsigned long long>(r.step + 1), r.loss.l_tot, r.loss.l_mse, r.loss.l_ce, r.wall_seconds);
      std::fflush(stdout);
    }
  };

  TrainResult result;
  try {
    result = train(model, bundle, tc, std::move(resume), hooks);
  } catch (const NonFiniteLoss& e) {
    std::string ids;
    for (const auto& id : e.batch_ids()) ids += (ids.empty() ? "" : ",") + id;
    throw NumericError(std::string(e.what()) + "; batch samples: " + ids);
  }
  save_checkpoint(out / "final.ckpt", model, &result.state);
  write_text(out / "train_log.jsonl", train_log_jsonl(result.log, false));

  const ScoreMatrix scores = score_test_set(model, bundle);
  write_scores_csv(scores, out / "scores.csv");
  const GzslReport report = evaluate_scores(scores, tc.gamma);
  write_text(out / "report.json", report_to_json(report).dump(2) + "\n");

  json run;
  run["pool"] = pool_mode_name(tc.pool.mode);
  run["seed"] = tc.seed;
  run["initial_parameter_hash"] = initial_hash;
  run["final_parameter_hash"] = model.parameter_hash();
  run["steps_done"] = result.state.steps_done;
  run["epochs_done"] = result.state.epochs_done;
  run["resumed_from"] = resume_path;
  run["parameter_count"] = parameter_count(mc);
  write_text(out / "run.json", run.dump(2) + "\n");

  std::printf("%s gamma=%.2f\n", format_report(report).c_str(), report.gamma);
  return 0;
}

int cmd_eval(const json& cfg) {
  const std::string scores_path = cfg.at("scores");
  const std::string ck_path = cfg.at("checkpoint");
  if (scores_path.empty() == ck_path.empty()) throw ValidationError("give either --scores or --checkpoint with --data");
  const std::string grid_text = cfg.at("gamma_grid");
  const std::vector<double> grid = grid_text.empty() ? std::vector<double>{} : parse_grid(grid_text);
  const double gamma = cfg.at("gamma");

  ScoreMatrix scores;
  if (!scores_path.empty()) {
    require_file("scores", scores_path);
    scores = read_scores_csv(scores_path);
  } else {
    require_file("checkpoint", ck_path);
    const DatasetBundle bundle = load_data(cfg);
    Checkpoint ck = load_checkpoint(ck_path);
    scores = score_test_set(ck.model, bundle);
  }

  GzslReport report;
  std::optional<GammaSweep> sweep;
  if (grid.empty()) {
    report = evaluate(scores, gamma);
  } else {
    sweep = gamma_sweep(scores, grid);
    report = sweep->reports[sweep->best];
  }

  const std::string out_text = cfg.at("out");
  if (!out_text.empty()) {
    const fs::path out = make_out_dir(cfg);
    echo_config(out, "eval", cfg);
    write_text(out / "report.json", report_to_json(report).dump(2) + "\n");
    if (!ck_path.empty()) write_scores_csv(scores, out / "scores.csv");
    if (sweep) {
      std::ostringstream csv;
      csv << "gamma,S,U,H\n";
      for (const auto& r : sweep->reports) csv << r.gamma << ',' << r.seen << ',' << r.unseen << ',' << r.harmonic << "\n";
      write_text(out / "sweep.csv", csv.str());
    }
  }
  if (sweep) {
    std::printf("%8s %6s %6s %6s\n", "gamma", "S", "U", "H");
    for (const auto& r : sweep->reports) std::printf("%8.3f %6.1f %6.1f %6.1f\n", r.gamma, r.seen, r.unseen, r.harmonic);
  }
  for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("%s gamma=%.2f\n", format_report(report).c_str(), report.gamma);
  return 0;
}

int cmd_ablate(const json& cfg) {
  const std::string ext = cfg.at("external_dir");
  if (!ext.empty()) require_dir("external_dir", ext);
  std::vector<PoolMode> modes;
  const std::string mode_text = cfg.at("modes");
  if (mode_text.empty()) {
    modes = ext.empty() ? std::vector<PoolMode>{PoolMode::kNone, PoolMode::kSeen, PoolMode::kSeenAndUnseen}
                        : std::vector<PoolMode>{PoolMode::kSeenAndUnseen, PoolMode::kExternal,
                                                PoolMode::kExternalAndUnseen, PoolMode::kExternalAndSeen};
  } else {
    for (const auto& m : split_list(mode_text)) modes.push_back(parse_pool_mode(m));
  }
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(cfg.at("seeds"))) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("bad seed '" + s + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ValidationError("--seeds needs at least one seed");
  std::size_t threads = cfg.at("threads");
  if (threads == 0) threads = env_threads();

  json base = cfg;
  base["seed"] = seeds.front();
  TrainConfig tc = train_config(base);
  const DatasetBundle bundle = load_data(cfg);
  const ViTConfig mc = model_config(cfg, bundle.attributes.num_attributes());
  const fs::path out = make_out_dir(cfg);
  echo_config(out, "ablate", cfg);

  json results = json::array();
  std::string tables;
  for (std::uint64_t seed : seeds) {
    tc.seed = seed;
    // The 'none' pool has no rotated images, so its loss is the attribute term alone.
    const std::vector<AblationRow> rows = run_ablation(bundle, mc, modes, tc, threads);
    const std::string table = format_ablation_table(rows);
    tables += "seed " + std::to_string(seed) + "\n" + table + "\n";
    std::printf("seed %llu\n%s\n", static_cast<unsigned long long>(seed), table.c_str());
    for (const auto& r : rows) {
      json j = report_to_json(r.report);
      j["mode"] = pool_mode_name(r.mode);
      j["seed"] = seed;
      j["initial_parameter_hash"] = r.initial_hash;
      results.push_back(j);
    }
  }
  write_text(out / "ablation.json", results.dump(2) + "\n");
  write_text(out / "ablation.txt", tables);
  return 0;
}

int cmd_viz(const json& cfg) {
  const std::string ck_path = cfg.at("checkpoint");
  require_file("checkpoint", ck_path);
  const std::vector<std::string> ids = split_list(cfg.at("samples"));
  if (ids.empty()) throw ValidationError("--samples needs at least one sample id");
  const DatasetBundle bundle = load_data(cfg);
  std::vector<std::string> unknown;
  for (const auto& id : ids) {
    if (!bundle.has_image(id)) unknown.push_back(id);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown sample id(s):";
    for (const auto& id : unknown) msg += " " + id;
    msg += "\nvalid ids:";
    for (const auto& im : bundle.images) msg += " " + im.id;
    throw ValidationError(msg);
  }
  Checkpoint ck = load_checkpoint(ck_path);
  const ViTConfig& mc = ck.model.config();
  if (mc.height != cfg.at("image_size").get<std::size_t>()) {
    throw ValidationError("checkpoint expects " + std::to_string(mc.height) + "px images; set --image-size");
  }
  const fs::path out = make_out_dir(cfg);
  echo_config(out, "viz", cfg);
  for (const auto& id : ids) {
    const ImageRecord& rec = bundle.image(id);
    const ForwardOutput f = forward(ck.model, rec.pixels);
    const AttentionMap map = rollout(f.trace, mc.height, mc.width, id);
    const VizFiles files = write_visualization(out, map, rec.pixels);
    std::printf("%s -> %s, %s\n", id.c_str(), files.map.filename().c_str(), files.fusion.filename().c_str());
  }
  return 0;
}

}  // namespace

json resolve(const Command& command, const std::vector<std::optional<std::string>>& flags,
             const std::string& config_path) {
  json resolved = json::object();
  for (const auto& k : command.knobs) resolved[k.key] = k.fallback;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config " + config_path);
    json file;
    try {
      in >> file;
    } catch (const json::exception& e) {
      throw ValidationError(config_path + ": " + e.what());
    }
    if (!file.is_object()) throw ValidationError(config_path + ": config must be a JSON object");
    for (const auto& [key, value] : file.items()) {
      auto it = std::find_if(command.knobs.begin(), command.knobs.end(), [&](const Knob& k) { return k.key == key; });
      if (it == command.knobs.end()) throw ValidationError(config_path + ": unknown key '" + key + "' for " + command.name);
      resolved[key] = coerce(*it, value, config_path);
    }
  }
  for (std::size_t i = 0; i < command.knobs.size(); ++i) {
    if (flags[i]) resolved[command.knobs[i].key] = coerce(command.knobs[i], *flags[i], "command line");
  }
  return resolved;
}

std::vector<Command> all_commands() {
  std::vector<Command> cmds;
  cmds.push_back({"gen-synth",
                  "Generate a procedural attribute dataset",
                  {
                      {"out", "", "output dataset directory"},
                      {"seed", 7u, "random seed"},
                      {"classes", 10u, "number of classes"},
                      {"seen", 8u, "number of seen classes"},
                      {"attributes", 16u, "attributes per class (at most 16 drawable primitives)"},
                      {"image_size", 32u, "image side in pixels"},
                      {"samples_per_class", 100u, "images per class"},
                      {"noise", 0.05, "std of additive pixel noise"},
                      {"test_fraction", 0.2, "share of each seen class held out for testing"},
                  },
                  cmd_gen_synth});
  cmds.push_back({"train",
                  "Train the ViT with attribute regression and rotation prediction",
                  concat(concat(
                             {
                                 {"data", "", "dataset directory"},
                                 {"out", "", "output directory"},
                                 {"seed", 7u, "random seed (weights and batches)"},
                                 {"pool", "seen", "rotated image pool: none, seen, seen+unseen, external, external+unseen, external+seen"},
                                 {"checkpoint_every", 1u, "save a checkpoint every N epochs (0 = never)"},
                                 {"eval_every", 0u, "evaluate on the test splits every N epochs (0 = never)"},
                                 {"resume", "", "checkpoint with optimizer state to continue from"},
                             },
                             model_knobs()),
                         train_knobs()),
                  cmd_train});
  cmds.push_back({"eval",
                  "GZSL evaluation from a checkpoint or a scores CSV",
                  {
                      {"checkpoint", "", "trained checkpoint (with --data)"},
                      {"data", "", "dataset directory"},
                      {"scores", "", "scores CSV instead of a checkpoint"},
                      {"image_size", 32u, "square image side the dataset is resized to"},
                      {"gamma", 0.0, "calibration factor"},
                      {"gamma_grid", "", "sweep grid, start:stop:step or a comma list; reports the best H"},
                      {"out", "", "optional directory for report.json, scores.csv and sweep.csv"},
                  },
                  cmd_eval});
  cmds.push_back({"ablate",
                  "Compare rotation pools from identical initial weights",
                  concat(concat(
                             {
                                 {"data", "", "dataset directory"},
                                 {"out", "", "output directory"},
                                 {"modes", "", "comma list of pools (default: none,seen,seen+unseen, or the four table rows with --external-dir)"},
                                 {"seeds", "7", "comma list of seeds"},
                                 {"threads", 0u, "concurrent runs (0 = ZSL_NUM_THREADS, default 1)"},
                             },
                             model_knobs()),
                         train_knobs()),
                  cmd_ablate});
  cmds.push_back({"viz",
                  "Attention rollout maps and fusions for chosen samples",
                  {
                      {"checkpoint", "", "trained checkpoint"},
                      {"data", "", "dataset directory"},
                      {"samples", "", "comma list of sample ids"},
                      {"image_size", 32u, "square image side the dataset is resized to"},
                      {"out", "", "output directory"},
                  },
                  cmd_viz});
  return cmds;
}

}  // namespace zsl::cli
