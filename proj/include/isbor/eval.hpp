#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "isbor/data.hpp"
#include "isbor/trainer.hpp"

namespace isbor {

double mae(const Labels& y_true, const Labels& y_pred);
double accuracy(const Labels& y_true, const Labels& y_pred);

// MAE of always predicting the most frequent training category on `test`.
double majority_baseline_mae(const Labels& train, const Labels& test, int r);

struct EvalReport {
  double mae = 0.0;
  double accuracy = 0.0;
  Index n_active = 0;
  double fit_seconds = 0.0;
  double kernel_seconds = 0.0;
  double theta = 0.0;
  std::uint64_t seed = 0;
};

EvalReport evaluate(const ModelState& model, const Dataset& test);

inline const std::vector<double> kNarrowThetaGrid{1e-2, 1e-1, 1.0, 10.0};
inline const std::vector<double> kWideThetaGrid{1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0};

struct CvRow {
  double theta = 0.0;
  double mean_mae = 0.0;  // +inf when no fold produced a model
  std::vector<double> fold_mae;
  int folds_used = 0;
  std::vector<std::string> errors;
};

struct CvResult {
  double best_theta = 0.0;
  std::vector<CvRow> table;
  std::vector<Split> folds;           // train/validation rows of each fold
  std::vector<int> skipped_folds;     // fold training part lacked a category
};

/// k-fold CV over the theta grid by mean validation MAE; ties go to the larger theta.
CvResult cross_validate(const Dataset& train, const std::vector<double>& theta_grid, int k,
                        std::uint64_t seed, const TrainConfig& cfg);

struct ExperimentConfig {
  std::vector<Index> sizes{1000};
  int partitions = 30;
  std::vector<double> theta_grid = kNarrowThetaGrid;
  int folds = 5;
  bool cross_validate = true;  // otherwise theta_grid.front() is used
  std::uint64_t seed = 0;
  int workers = 1;
  TrainConfig train;
};

struct ExperimentRow {
  Index size = 0;
  int partition = 0;
  EvalReport report;
  std::string error;  // non-empty when the cell failed
};

struct SizeSummary {
  Index size = 0;
  int runs = 0;
  double mae_mean = 0.0;
  double mae_std = 0.0;  // sample standard deviation over partitions
  double fit_seconds_mean = 0.0;
  double n_active_mean = 0.0;
};

/// Per size and partition: CV on the training part, fit, evaluate on the rest.
std::vector<ExperimentRow> run_experiment(const Dataset& D, const ExperimentConfig& cfg);
std::vector<SizeSummary> summarize(const std::vector<ExperimentRow>& rows);

// Flat `key = value` experiment description; '#' starts a comment.
// Data comes from `data` (a CSV path), or from `synthetic` (number of points
// to generate with `seed`). Relative paths are taken as given.
struct ExperimentFile {
  ExperimentConfig config;
  std::string data;
  Index synthetic = 0;
  std::string manifest;  // optional shape check against `name`
  std::string name;
  std::string report;    // empty means standard output
  std::string format = "csv";  // or "jsonl"
};

ExperimentFile parse_experiment_config(const std::string& text,
                                       const std::string& source = "<string>");
ExperimentFile load_experiment_config(const std::string& path);

void write_report_csv(std::ostream& out, const std::vector<ExperimentRow>& rows);
void write_report_jsonl(std::ostream& out, const std::vector<ExperimentRow>& rows);

}  // namespace isbor
