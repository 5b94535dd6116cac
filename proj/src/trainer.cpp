#include "zsl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "zsl/ops.hpp"

namespace zsl {

void TrainConfig::validate() const {
  if (steps_per_epoch == 0) throw ValidationError("steps_per_epoch must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be positive");
  if (!std::isfinite(lambda1) || !std::isfinite(lambda2) || lambda1 < 0.0 || lambda2 < 0.0) {
    throw ValidationError("loss weights must be finite and non-negative");
  }
  if (geometry.labelled == 0) throw ValidationError("batch needs at least one labelled image");
  if (pool.mode != PoolMode::kNone && geometry.rotation_sources == 0) {
    throw ValidationError("rotation pool '" + std::string(pool_mode_name(pool.mode)) + "' needs rotation sources per batch");
  }
  if (gamma && !std::isfinite(*gamma)) throw ValidationError("gamma must be finite");
}

NonFiniteLoss::NonFiniteLoss(std::uint64_t step, std::vector<std::string> batch_ids, std::string what)
    : NumericError(std::move(what)), step_(step), batch_ids_(std::move(batch_ids)) {}

std::string train_log_jsonl(const TrainLog& log, bool with_timestamps) {
  std::ostringstream os;
  for (const auto& s : log.steps) {
    nlohmann::json j;
    j["type"] = "step";
    j["step"] = s.step;
    j["epoch"] = s.epoch;
    j["l_mse"] = s.loss.l_mse;
    j["l_ce"] = s.loss.l_ce;
    j["l_tot"] = s.loss.l_tot;
    j["lambda1"] = s.loss.lambda1;
    j["lambda2"] = s.loss.lambda2;
    if (with_timestamps) j["wall_seconds"] = s.wall_seconds;
    os << j.dump() << "\n";
  }
  for (const auto& e : log.evals) {
    nlohmann::json j;
    j["type"] = "eval";
    j["epoch"] = e.epoch;
    j["step"] = e.step;
    j["report"] = report_to_json(e.report);
    os << j.dump() << "\n";
  }
  return os.str();
}

ViTModel init_model(const ViTConfig& config, std::uint64_t seed) {
  Rng rng = Rng(seed).fork("init");
  return ViTModel::initialize(config, rng);
}

TrainingState initial_training_state(const ViTModel& model, const TrainConfig& config) {
  TrainingState s;
  s.adam = make_adam_state(model.parameters(), config.lr);
  s.batch_rng = Rng(config.seed).fork("batches");
  return s;
}

std::vector<std::vector<double>> predict_attributes(const ViTModel& model, std::span<const Tensor> images,
                                                    std::size_t chunk) {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  const std::size_t m = model.config().num_attributes;
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const std::size_t n = std::min(chunk, images.size() - start);
    EncodeOutput enc = encode(model, images.subspan(start, n));
    Tensor pred = attribute_head(model, enc.representation);
    auto v = pred.values();
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(v.begin() + i * m, v.begin() + (i + 1) * m);
  }
  return out;
}

ScoreMatrix score_test_set(const ViTModel& model, const DatasetBundle& bundle, std::size_t chunk) {
  ScoreMatrix matrix = make_score_matrix(bundle);
  std::vector<const ImageRecord*> recs;
  for (const auto& id : bundle.splits.test_seen) recs.push_back(&bundle.image(id));
  for (const auto& id : bundle.splits.test_unseen) recs.push_back(&bundle.image(id));
  std::vector<Tensor> images;
  images.reserve(recs.size());
  for (const auto* r : recs) images.push_back(r->pixels);
  const auto preds = predict_attributes(model, images, chunk);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const int c = *recs[i]->class_id;
    append_row(matrix, bundle.attributes, recs[i]->id, c, bundle.is_seen(c),
               cosine_scores(preds[i], bundle.attributes, recs[i]->id));
  }
  return matrix;
}

GzslReport evaluate_scores(const ScoreMatrix& scores, std::optional<double> gamma) {
  if (gamma) return evaluate(scores, *gamma);
  const auto grid = default_gamma_grid();
  GammaSweep sweep = gamma_sweep(scores, grid);
  return sweep.reports[sweep.best];
}

namespace {

bool all_finite(const ViTModel& model) {
  for (const auto& p : model.parameters()) {
    for (double v : p.tensor.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::vector<std::string> batch_ids(const Batch& b) {
  std::vector<std::string> ids;
  for (const auto& it : b.labelled) ids.push_back(it.sample_id);
  for (const auto& it : b.rotated) ids.push_back(it.source_id + "@" + std::to_string(it.angle));
  return ids;
}

}  // namespace

TrainResult train(ViTModel& model, const DatasetBundle& bundle, const TrainConfig& config,
                  std::optional<TrainingState> resume, const TrainHooks& hooks) {
  config.validate();
  const ViTConfig& mc = model.config();
  if (mc.height != mc.width) throw ValidationError("training needs square images for the rotation task");
  if (!bundle.images.empty() && bundle.images.front().pixels.shape() != Shape{mc.height, mc.width, mc.channels}) {
    throw ValidationError("dataset images " + shape_str(bundle.images.front().pixels.shape()) +
                          " do not match the model geometry");
  }
  if (bundle.attributes.num_attributes() != mc.num_attributes) {
    throw ValidationError("dataset has M=" + std::to_string(bundle.attributes.num_attributes()) +
                          ", model regression head has " + std::to_string(mc.num_attributes));
  }
  const RotationPool pool = resolve_pool(bundle, config.pool, mc.height);

  TrainResult result;
  result.state = resume ? std::move(*resume) : initial_training_state(model, config);
  TrainingState& state = result.state;
  if (state.adam.m.size() != model.parameters().size()) {
    throw ValidationError("optimizer state does not match the model");
  }

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t m = mc.num_attributes;
  for (std::size_t epoch = state.epochs_done; epoch < config.epochs; ++epoch) {
    for (std::size_t s = 0; s < config.steps_per_epoch; ++s) {
      const std::uint64_t step = state.steps_done;
      Batch batch = build_batch(bundle, pool, config.geometry, state.batch_rng);

      std::vector<Tensor> images;
      images.reserve(batch.labelled.size() + batch.rotated.size());
      std::vector<double> targets;
      targets.reserve(batch.labelled.size() * m);
      for (const auto& it : batch.labelled) {
        images.push_back(it.pixels);
        targets.insert(targets.end(), it.target.begin(), it.target.end());
      }
      std::vector<int> angles;
      for (const auto& it : batch.rotated) {
        images.push_back(it.pixels);
        angles.push_back(it.angle);
      }

      Graph graph;
      GraphScope scope(graph);
      model.zero_grad();
      EncodeOutput enc = encode(model, images);

      const std::size_t nl = batch.labelled.size();
      std::vector<std::size_t> lrows(nl);
      for (std::size_t i = 0; i < nl; ++i) lrows[i] = i;
      Tensor attr = attribute_head(model, select_rows(enc.representation, lrows));
      Tensor mse = mse_loss(attr, Tensor({nl, m}, std::move(targets)));

      Tensor ce;
      if (!batch.rotated.empty()) {
        std::vector<std::size_t> rrows(batch.rotated.size());
        for (std::size_t i = 0; i < rrows.size(); ++i) rrows[i] = nl + i;
        ce = rotation_ce(rotation_head(model, select_rows(enc.representation, rrows)), angles);
      }
      TotalLoss loss = total_loss(ce, mse, config.lambda1, config.lambda2);
      if (!std::isfinite(loss.breakdown.l_tot)) {
        throw NonFiniteLoss(step, batch_ids(batch),
                            "non-finite loss at step " + std::to_string(step) + " (batch " + std::to_string(step) +
                                "): l_mse=" + std::to_string(loss.breakdown.l_mse) +
                                " l_ce=" + std::to_string(loss.breakdown.l_ce));
      }
      graph.backward(loss.total);
      adam_step(model.parameters(), state.adam);
      if (!all_finite(model)) {
        throw NonFiniteLoss(step, batch_ids(batch), "non-finite parameter after step " + std::to_string(step));
      }
      ++state.steps_done;

      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.loss = loss.breakdown;
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.log.steps.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
    }
    state.epochs_done = epoch + 1;
    if (config.eval_every && state.epochs_done % config.eval_every == 0) {
      result.log.evals.push_back(
          EvalRecord{state.epochs_done, state.steps_done, evaluate_scores(score_test_set(model, bundle), config.gamma)});
    }
    if (config.checkpoint_every && state.epochs_done % config.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(model, state);
    }
  }
  return result;
}

std::vector<AblationRow> run_ablation(const DatasetBundle& bundle, const ViTConfig& model_config,
                                      std::span<const PoolMode> modes, const TrainConfig& config,
                                      std::size_t threads) {
  std::vector<AblationRow> rows(modes.size());
  auto run_one = [&](std::size_t i) {
    TrainConfig cfg = config;
    cfg.pool.mode = modes[i];
    ViTModel model = init_model(model_config, config.seed);
    rows[i].mode = modes[i];
    rows[i].initial_hash = model.parameter_hash();
    rows[i].log = train(model, bundle, cfg).log;
    rows[i].report = evaluate_scores(score_test_set(model, bundle), cfg.gamma);
  };
  threads = std::max<std::size_t>(1, std::min(threads, modes.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < modes.size(); ++i) run_one(i);
    return rows;
  }
  std::mutex mu;
  std::exception_ptr failure;
  std::size_t next = 0;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= modes.size() || failure) return;
          i = next++;
        }
        try {
          run_one(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof(line), "%-28s | %6s | %6s | %6s | %6s\n", "Source of rotated images", "S", "U", "H", "gamma");
  os << line;
  os << std::string(28, '-') << "-+--------+--------+--------+-------\n";
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-28s | %6.1f | %6.1f | %6.1f | %6.2f\n", std::string(pool_mode_name(r.mode)).c_str(),
                  r.report.seen, r.report.unseen, r.report.harmonic, r.report.gamma);
    os << line;
  }
  return os.str();
}

}  // namespace zsl
