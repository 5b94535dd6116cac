#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsl/dataset.hpp"

namespace zsl {

// Test-sample x class score table. Columns are ordered by ascending class id.
struct ScoreMatrix {
  std::vector<std::string> sample_ids;
  std::vector<int> true_class;
  std::vector<bool> sample_seen;  // true class is a seen class
  std::vector<int> class_ids;
  std::vector<bool> class_seen;
  std::vector<double> scores;  // rows x cols, row-major

  std::size_t rows() const { return sample_ids.size(); }
  std::size_t cols() const { return class_ids.size(); }
  double at(std::size_t r, std::size_t c) const { return scores[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return scores[r * cols() + c]; }

  // Shape, ordering and seen-flag consistency; throws ValidationError.
  void validate() const;
};

// Cosine similarity of a predicted attribute vector with every class row, in
// the attribute matrix's class order. Throws NumericError on a zero-norm
// prediction, naming sample_id.
std::vector<double> cosine_scores(std::span<const double> prediction, const AttributeMatrix& attributes,
                                  std::string_view sample_id = {});

// Empty matrix with columns for every class in the bundle (ascending id).
ScoreMatrix make_score_matrix(const DatasetBundle& bundle);
// Appends one row; `scores` is in the bundle attribute-matrix class order.
void append_row(ScoreMatrix& matrix, const AttributeMatrix& attributes, std::string sample_id, int true_class,
                bool seen, std::span<const double> scores);

// Subtracts gamma from every seen-class column.
ScoreMatrix calibrated_stack(const ScoreMatrix& scores, double gamma);
ScoreMatrix calibrated_stack(const ScoreMatrix& scores, double gamma, std::span<const int> seen_classes);

struct GzslReport {
  std::map<int, double> per_class_acc;  // percent
  double seen = 0.0;                    // S, percent
  double unseen = 0.0;                  // U, percent
  double harmonic = 0.0;                // H, percent
  double gamma = 0.0;
  std::vector<std::string> warnings;
};

// 2SU / (S + U), 0 when S + U = 0.
double harmonic_mean(double seen, double unseen);

// Calibrated argmax (ties to the lowest class id), per-class top-1, S and U
// as unweighted means over classes, H. Classes with no test samples are
// left out of the means and reported in warnings.
GzslReport evaluate(const ScoreMatrix& scores, double gamma);

struct GammaSweep {
  std::vector<GzslReport> reports;
  std::size_t best = 0;  // first index with maximal H
  double best_gamma() const { return reports.at(best).gamma; }
};

// gammas must be sorted ascending.
GammaSweep gamma_sweep(const ScoreMatrix& scores, std::span<const double> gammas);

// 0.00, 0.01, ..., 1.00
std::vector<double> default_gamma_grid();

nlohmann::json report_to_json(const GzslReport& report);
// "S=89.9 U=53.7 H=67.2" style, one decimal.
std::string format_report(const GzslReport& report);

// CSV: header "sample_id,true_class,seen_flag,<id>:<s|u>,...", then one row
// per sample with seen_flag 0/1 and the scores.
void write_scores_csv(const ScoreMatrix& scores, const std::filesystem::path& path);
ScoreMatrix read_scores_csv(const std::filesystem::path& path);

}  // namespace zsl
