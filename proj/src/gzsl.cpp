#include "zsl/gzsl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "zsl/errors.hpp"

namespace zsl {

void ScoreMatrix::validate() const {
  const std::size_t r = sample_ids.size(), c = class_ids.size();
  if (true_class.size() != r || sample_seen.size() != r) throw ValidationError("score matrix: row metadata size mismatch");
  if (class_seen.size() != c) throw ValidationError("score matrix: column metadata size mismatch");
  if (scores.size() != r * c) throw ValidationError("score matrix: expected " + std::to_string(r * c) + " scores");
  if (c == 0) throw ValidationError("score matrix has no classes");
  for (std::size_t j = 1; j < c; ++j) {
    if (class_ids[j - 1] >= class_ids[j]) throw ValidationError("score matrix columns must be in ascending class id order");
  }
  for (std::size_t i = 0; i < r; ++i) {
    auto it = std::lower_bound(class_ids.begin(), class_ids.end(), true_class[i]);
    if (it == class_ids.end() || *it != true_class[i]) {
      throw ValidationError("sample '" + sample_ids[i] + "' has true class " + std::to_string(true_class[i]) +
                            " with no score column");
    }
    const auto col = static_cast<std::size_t>(it - class_ids.begin());
    if (class_seen[col] != sample_seen[i]) {
      throw ValidationError("sample '" + sample_ids[i] + "' seen flag disagrees with its class column");
    }
  }
}

std::vector<double> cosine_scores(std::span<const double> prediction, const AttributeMatrix& attributes,
                                  std::string_view sample_id) {
  const std::size_t m = attributes.num_attributes();
  if (prediction.size() != m) {
    throw DimensionError("prediction has " + std::to_string(prediction.size()) + " attributes, classes have " +
                         std::to_string(m));
  }
  double pn = 0.0;
  for (double v : prediction) pn += v * v;
  pn = std::sqrt(pn);
  if (!(pn > 0.0)) {
    throw NumericError("zero-norm attribute prediction for sample '" + std::string(sample_id) + "'");
  }
  std::vector<double> out;
  out.reserve(attributes.num_classes());
  for (int c : attributes.class_ids()) {
    auto row = attributes.row(c);
    double dot = 0.0, yn = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      dot += prediction[i] * row[i];
      yn += row[i] * row[i];
    }
    yn = std::sqrt(yn);
    if (!(yn > 0.0)) throw NumericError("class " + std::to_string(c) + " has a zero-norm attribute vector");
    out.push_back(std::clamp(dot / (pn * yn), -1.0, 1.0));
  }
  return out;
}

ScoreMatrix make_score_matrix(const DatasetBundle& bundle) {
  ScoreMatrix m;
  m.class_ids = bundle.attributes.class_ids();
  std::sort(m.class_ids.begin(), m.class_ids.end());
  for (int c : m.class_ids) m.class_seen.push_back(bundle.is_seen(c));
  return m;
}

void append_row(ScoreMatrix& matrix, const AttributeMatrix& attributes, std::string sample_id, int true_class,
                bool seen, std::span<const double> scores) {
  if (scores.size() != matrix.cols()) throw DimensionError("score row width does not match class count");
  matrix.sample_ids.push_back(std::move(sample_id));
  matrix.true_class.push_back(true_class);
  matrix.sample_seen.push_back(seen);
  for (int c : matrix.class_ids) matrix.scores.push_back(scores[attributes.index_of(c)]);
}

ScoreMatrix calibrated_stack(const ScoreMatrix& scores, double gamma) {
  if (!std::isfinite(gamma)) throw ContractError("calibration factor must be finite");
  ScoreMatrix out = scores;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c)
      if (out.class_seen[c]) out.at(r, c) -= gamma;
  return out;
}

ScoreMatrix calibrated_stack(const ScoreMatrix& scores, double gamma, std::span<const int> seen_classes) {
  ScoreMatrix relabelled = scores;
  const std::set<int> seen(seen_classes.begin(), seen_classes.end());
  for (std::size_t c = 0; c < relabelled.cols(); ++c) relabelled.class_seen[c] = seen.count(relabelled.class_ids[c]) != 0;
  return calibrated_stack(relabelled, gamma);
}

double harmonic_mean(double seen, double unseen) {
  const double s = seen + unseen;
  return s == 0.0 ? 0.0 : 2.0 * seen * unseen / s;
}

GzslReport evaluate(const ScoreMatrix& scores, double gamma) {
  scores.validate();
  const ScoreMatrix cal = gamma == 0.0 ? scores : calibrated_stack(scores, gamma);
  const std::size_t cols = cal.cols();
  std::vector<std::size_t> total(cols, 0), correct(cols, 0);
  for (std::size_t r = 0; r < cal.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (cal.at(r, c) > cal.at(r, best)) best = c;
    }
    const auto truth = static_cast<std::size_t>(
        std::lower_bound(cal.class_ids.begin(), cal.class_ids.end(), cal.true_class[r]) - cal.class_ids.begin());
    ++total[truth];
    if (best == truth) ++correct[truth];
  }

  GzslReport rep;
  rep.gamma = gamma;
  double s_sum = 0.0, u_sum = 0.0;
  std::size_t s_n = 0, u_n = 0;
  for (std::size_t c = 0; c < cols; ++c) {
    if (total[c] == 0) {
      rep.warnings.push_back("class " + std::to_string(cal.class_ids[c]) + " has no test samples; excluded from " +
                             (cal.class_seen[c] ? "S" : "U"));
      continue;
    }
    const double acc = 100.0 * static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    rep.per_class_acc[cal.class_ids[c]] = acc;
    if (cal.class_seen[c]) {
      s_sum += acc;
      ++s_n;
    } else {
      u_sum += acc;
      ++u_n;
    }
  }
  if (s_n == 0) rep.warnings.push_back("no seen class has test samples; S set to 0");
  if (u_n == 0) rep.warnings.push_back("no unseen class has test samples; U set to 0");
  rep.seen = s_n ? s_sum / static_cast<double>(s_n) : 0.0;
  rep.unseen = u_n ? u_sum / static_cast<double>(u_n) : 0.0;
  rep.harmonic = harmonic_mean(rep.seen, rep.unseen);
  return rep;
}

GammaSweep gamma_sweep(const ScoreMatrix& scores, std::span<const double> gammas) {
  if (gammas.empty()) throw ContractError("gamma sweep needs at least one value");
  if (!std::is_sorted(gammas.begin(), gammas.end())) throw ContractError("gamma sweep values must be sorted ascending");
  GammaSweep sweep;
  for (double g : gammas) {
    sweep.reports.push_back(evaluate(scores, g));
    if (sweep.reports.back().harmonic > sweep.reports[sweep.best].harmonic) sweep.best = sweep.reports.size() - 1;
  }
  return sweep;
}

std::vector<double> default_gamma_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 100; ++i) g.push_back(i / 100.0);
  return g;
}

nlohmann::json report_to_json(const GzslReport& report) {
  nlohmann::json j;
  j["S"] = report.seen;
  j["U"] = report.unseen;
  j["H"] = report.harmonic;
  j["gamma"] = report.gamma;
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [c, acc] : report.per_class_acc) per[std::to_string(c)] = acc;
  j["per_class_acc"] = per;
  j["warnings"] = report.warnings;
  return j;
}

std::string format_report(const GzslReport& report) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "S=%.1f U=%.1f H=%.1f", report.seen, report.unseen, report.harmonic);
  return buf;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T number(const std::string& s, const std::string& where) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError(where + ": bad number '" + s + "'");
  return v;
}

}  // namespace

void write_scores_csv(const ScoreMatrix& scores, const std::filesystem::path& path) {
  scores.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,true_class,seen_flag";
  for (std::size_t c = 0; c < scores.cols(); ++c) out << ',' << scores.class_ids[c] << ':' << (scores.class_seen[c] ? 's' : 'u');
  out << "\n";
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    out << scores.sample_ids[r] << ',' << scores.true_class[r] << ',' << (scores.sample_seen[r] ? 1 : 0);
    for (std::size_t c = 0; c < scores.cols(); ++c) out << ',' << fmt(scores.at(r, c));
    out << "\n";
  }
}

ScoreMatrix read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  auto head = split(line);
  if (head.size() < 4 || head[0] != "sample_id" || head[1] != "true_class" || head[2] != "seen_flag") {
    throw ValidationError(path.string() + ": header must start with sample_id,true_class,seen_flag");
  }
  ScoreMatrix m;
  for (std::size_t i = 3; i < head.size(); ++i) {
    const auto colon = head[i].find(':');
    if (colon == std::string::npos || colon + 2 != head[i].size() ||
        (head[i][colon + 1] != 's' && head[i][colon + 1] != 'u')) {
      throw ValidationError(path.string() + ": class column '" + head[i] + "' must look like <id>:s or <id>:u");
    }
    m.class_ids.push_back(number<int>(head[i].substr(0, colon), path.string() + " header"));
    m.class_seen.push_back(head[i][colon + 1] == 's');
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    auto cells = split(line);
    if (cells.size() != head.size()) throw ValidationError(where + ": expected " + std::to_string(head.size()) + " columns");
    m.sample_ids.push_back(cells[0]);
    m.true_class.push_back(number<int>(cells[1], where));
    if (cells[2] != "0" && cells[2] != "1") throw ValidationError(where + ": seen_flag must be 0 or 1");
    m.sample_seen.push_back(cells[2] == "1");
    for (std::size_t i = 3; i < cells.size(); ++i) m.scores.push_back(number<double>(cells[i], where));
  }
  m.validate();
  return m;
}

}  // namespace zsl
