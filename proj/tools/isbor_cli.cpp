// Command-line front end: train, predict, evaluate, synth, cv, experiment.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "isbor/data.hpp"
#include "isbor/errors.hpp"
#include "isbor/eval.hpp"
#include "isbor/trainer.hpp"

using namespace isbor;

namespace {

struct TrainFlags {
  int max_its = TrainConfig{}.max_its;
  double min_delta = TrainConfig{}.min_delta;
  std::uint64_t seed = 0;
  bool no_standardize = false;
  bool no_reestimate = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--max-its", max_its, "Maximum outer iterations")->check(CLI::PositiveNumber);
    cmd->add_option("--min-delta", min_delta, "Stop when the log-marginal changes by less")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Seed for initialization and folds");
    cmd->add_flag("--no-standardize", no_standardize, "Use features as given");
    cmd->add_flag("--no-reestimate", no_reestimate, "Never re-estimate an active precision");
  }

  TrainConfig config() const {
    TrainConfig c;
    c.max_its = max_its;
    c.min_delta = min_delta;
    c.seed = seed;
    c.standardize = !no_standardize;
    c.enable_reestimate = !no_reestimate;
    return c;
  }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

void print_cv(std::ostream& out, const CvResult& cv) {
  out << "theta,mean_mae,folds_used\n";
  for (const auto& row : cv.table) {
    out << row.theta << ',' << row.mean_mae << ',' << row.folds_used << '\n';
    for (const auto& e : row.errors) std::cerr << "theta " << row.theta << ": " << e << '\n';
  }
  for (int f : cv.skipped_folds) std::cerr << "fold " << f << " skipped: a category is absent\n";
}

// Opens `path` for writing, or returns stdout for an empty path.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty()) return;
    file_.open(path);
    if (!file_) throw InputError("cannot write '" + path + "'");
  }
  std::ostream& get() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

// Reads a data file for a model: labelled (d + 1 columns) or features only (d).
Dataset load_for_model(const ModelState& m, const std::string& path, bool& labeled) {
  const Dataset raw = load_csv(path, false);
  if (raw.dim() == m.dim() + 1) {
    labeled = true;
    return relabel(load_csv(path, true), m.label_values);
  }
  if (raw.dim() == m.dim()) {
    labeled = false;
    return raw;
  }
  throw InputError(path + ": model expects d = " + std::to_string(m.dim()) + " features (plus an optional label), file has " +
                   std::to_string(raw.dim()) + " columns");
}

long long label_of(const ModelState& m, int category) {
  return static_cast<int>(m.label_values.size()) >= category ? m.label_values[category - 1] : category;
}

int cmd_train(const std::string& data, std::optional<double> theta, bool cv, std::vector<double> grid,
              int folds, const TrainFlags& tf, const std::string& out) {
  const Dataset d = load_csv(data);
  const TrainConfig cfg = tf.config();
  double th = theta.value_or(0.0);
  if (cv) {
    const CvResult res = cross_validate(d, grid, folds, cfg.seed, cfg);
    print_cv(std::cerr, res);
    th = res.best_theta;
    std::cerr << "selected theta " << th << '\n';
  }
  const ModelState m = fit(d, cfg, th);
  if (!out.empty()) save_model_file(m, out);
  std::cout << "N=" << d.size() << " M=" << m.size() << " theta=" << th
            << " log_marginal=" << fmt(m.log_marginal_history.back()) << " sigma=" << fmt(m.sigma) << " b=";
  const auto c = m.b.cutpoints();
  for (std::size_t k = 0; k < c.size(); ++k) std::cout << (k ? "," : "") << fmt(c[k]);
  std::cout << " iterations=" << m.info.iterations << " stop=\"" << m.info.stop_reason
            << "\" seconds=" << fmt(m.info.fit_seconds) << '\n';
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data, const std::string& out,
                bool proba) {
  const ModelState m = load_model_file(model_path);
  bool labeled = false;
  const Dataset d = load_for_model(m, data, labeled);
  Output o(out);
  std::ostream& os = o.get();
  os.precision(17);
  os << "category,score";
  if (proba)
    for (int k = 1; k <= m.categories(); ++k) os << ",p" << label_of(m, k);
  os << '\n';
  Labels pred;
  pred.reserve(static_cast<std::size_t>(d.size()));
  std::vector<double> x(static_cast<std::size_t>(d.dim()));
  for (Index i = 0; i < d.size(); ++i) {
    for (Index k = 0; k < d.dim(); ++k) x[k] = d.X(i, k);
    const Prediction p = predict(m, x);
    pred.push_back(p.category);
    os << label_of(m, p.category) << ',' << p.score;
    if (proba)
      for (double v : predict_proba(m, x)) os << ',' << v;
    os << '\n';
  }
  if (labeled) std::cerr << "mae=" << mae(d.y, pred) << " accuracy=" << accuracy(d.y, pred) << '\n';
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data) {
  const ModelState m = load_model_file(model_path);
  bool labeled = false;
  const Dataset d = load_for_model(m, data, labeled);
  if (!labeled) throw InputError(data + ": evaluation needs a label column");
  const EvalReport r = evaluate(m, d);
  std::cout << "n=" << d.size() << " mae=" << r.mae << " accuracy=" << r.accuracy << " M=" << r.n_active
            << " theta=" << r.theta << '\n';
  return 0;
}

int cmd_experiment(const std::string& config, std::optional<int> workers, std::optional<std::uint64_t> seed,
                   std::optional<std::string> report, std::optional<std::string> format) {
  ExperimentFile f = load_experiment_config(config);
  if (workers) f.config.workers = *workers;
  if (seed) f.config.seed = *seed;
  if (report) f.report = *report;
  if (format) f.format = *format;

  Dataset d;
  if (f.synthetic > 0) {
    d = generate_synthetic(f.synthetic, f.config.seed);
  } else {
    d = load_csv(f.data);
  }
  if (!f.manifest.empty()) {
    const auto entry = find_manifest_entry(load_manifest(f.manifest), f.name);
    if (!entry) throw InputError(f.manifest + ": no entry named '" + f.name + "'");
    check_against_manifest(d, *entry);
  }
  const auto rows = run_experiment(d, f.config);
  Output o(f.report);
  if (f.format == "jsonl")
    write_report_jsonl(o.get(), rows);
  else
    write_report_csv(o.get(), rows);
  int failed = 0;
  for (const auto& r : rows)
    if (!r.error.empty()) {
      ++failed;
      std::cerr << "size " << r.size << " partition " << r.partition << ": " << r.error << '\n';
    }
  for (const auto& s : summarize(rows))
    std::cerr << "size " << s.size << ": runs " << s.runs << " mae " << fmt(s.mae_mean) << " +- "
              << fmt(s.mae_std) << " M " << fmt(s.n_active_mean) << " fit " << fmt(s.fit_seconds_mean)
              << "s\n";
  return failed == static_cast<int>(rows.size()) && !rows.empty() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse Bayesian ordinal regression"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // train
  auto* train = app.add_subcommand("train", "Fit a model to a labelled CSV file");
  std::string train_data, train_out;
  std::optional<double> theta;
  bool train_cv = false;
  std::vector<double> train_grid = kNarrowThetaGrid;
  int train_folds = 5;
  TrainFlags train_flags;
  train->add_option("--data", train_data, "CSV file, label in the last column")->required();
  auto* theta_opt = train->add_option("--theta", theta, "RBF width")->check(CLI::NonNegativeNumber);
  auto* cv_opt = train->add_flag("--cv", train_cv, "Choose theta by cross-validation");
  theta_opt->excludes(cv_opt);
  train->add_option("--grid", train_grid, "Theta grid for --cv")->delimiter(',');
  train->add_option("--folds", train_folds, "Folds for --cv")->check(CLI::Range(2, 1000));
  train->add_option("--out", train_out, "Model file to write");
  train_flags.add(train);

  // predict
  auto* pred = app.add_subcommand("predict", "Predict categories for a CSV file");
  std::string pred_model, pred_data, pred_out;
  bool pred_proba = false;
  pred->add_option("--model", pred_model, "Model file")->required();
  pred->add_option("--data", pred_data, "CSV file, with or without a label column")->required();
  pred->add_option("--out", pred_out, "Output CSV (default: standard output)");
  pred->add_flag("--proba", pred_proba, "Append class probabilities");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Report MAE and accuracy on a labelled CSV file");
  std::string ev_model, ev_data;
  ev->add_option("--model", ev_model, "Model file")->required();
  ev->add_option("--data", ev_data, "Labelled CSV file")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Write the synthetic saddle data set");
  Index synth_n = 21000;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--n", synth_n, "Number of points")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Seed");
  synth->add_option("--out", synth_out, "CSV file to write")->required();

  // cv
  auto* cvc = app.add_subcommand("cv", "Cross-validate the RBF width");
  std::string cv_data;
  std::vector<double> cv_grid = kNarrowThetaGrid;
  int cv_folds = 5;
  TrainFlags cv_flags;
  cvc->add_option("--data", cv_data, "Labelled CSV file")->required();
  cvc->add_option("--grid", cv_grid, "Comma-separated theta values")->delimiter(',');
  cvc->add_option("--folds", cv_folds, "Number of folds")->check(CLI::Range(2, 1000));
  cv_flags.add(cvc);

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run a size x partition experiment from a config file");
  std::string exp_config;
  std::optional<int> exp_workers;
  std::optional<std::uint64_t> exp_seed;
  std::optional<std::string> exp_report, exp_format;
  exp->add_option("--config", exp_config, "key = value config file")->required();
  exp->add_option("--workers", exp_workers, "Worker threads")->check(CLI::PositiveNumber);
  exp->add_option("--seed", exp_seed, "Override the config seed");
  exp->add_option("--report", exp_report, "Report file (default: standard output)");
  exp->add_option("--format", exp_format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) {
      if (!theta && !train_cv) throw CLI::RequiredError("--theta or --cv");
      return cmd_train(train_data, theta, train_cv, train_grid, train_folds, train_flags, train_out);
    }
    if (*pred) return cmd_predict(pred_model, pred_data, pred_out, pred_proba);
    if (*ev) return cmd_evaluate(ev_model, ev_data);
    if (*synth) {
      write_csv(generate_synthetic(synth_n, synth_seed), synth_out);
      return 0;
    }
    if (*cvc) {
      const TrainConfig cfg = cv_flags.config();
      const CvResult res = cross_validate(load_csv(cv_data), cv_grid, cv_folds, cfg.seed, cfg);
      print_cv(std::cout, res);
      std::cout << "best theta " << res.best_theta << '\n';
      return 0;
    }
    if (*exp) return cmd_experiment(exp_config, exp_workers, exp_seed, exp_report, exp_format);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "isbor: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
