#include "isbor/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string_view>
#include <thread>

#include <json.hpp>

#include "isbor/errors.hpp"

namespace isbor {

double mae(const Labels& y_true, const Labels& y_pred) {
  if (y_true.size() != y_pred.size())
    throw InputError("mae: " + std::to_string(y_true.size()) + " labels vs " +
                     std::to_string(y_pred.size()) + " predictions");
  if (y_true.empty()) throw InputError("mae: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += std::abs(y_true[i] - y_pred[i]);
  return s / static_cast<double>(y_true.size());
}

double accuracy(const Labels& y_true, const Labels& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty()) throw InputError("accuracy: bad lengths");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hit += y_true[i] == y_pred[i];
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

double majority_baseline_mae(const Labels& train, const Labels& test, int r) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(r + 1), 0);
  for (int y : train) ++counts.at(y);
  const int mode = static_cast<int>(std::max_element(counts.begin() + 1, counts.end()) - counts.begin());
  return mae(test, Labels(test.size(), mode));
}

EvalReport evaluate(const ModelState& model, const Dataset& test) {
  EvalReport rep;
  const Labels pred = predict_labels(model, test.X);
  rep.mae = mae(test.y, pred);
  rep.accuracy = accuracy(test.y, pred);
  rep.n_active = model.size();
  rep.fit_seconds = model.info.fit_seconds;
  rep.kernel_seconds = model.info.kernel_seconds;
  rep.theta = model.kernel.theta;
  return rep;
}

CvResult cross_validate(const Dataset& train, const std::vector<double>& theta_grid, int k,
                        std::uint64_t seed, const TrainConfig& cfg) {
  if (k < 2) throw InputError("cross-validation needs k >= 2");
  if (theta_grid.empty()) throw InputError("theta grid is empty");
  if (train.size() < k) throw InputError("fewer samples than folds");

  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(stream_seed(seed, Stream::Folds));
  std::shuffle(order.begin(), order.end(), rng);

  CvResult res;
  std::vector<Dataset> fold_train, fold_val;
  for (int f = 0; f < k; ++f) {
    Split s;
    for (std::size_t i = 0; i < order.size(); ++i)
      (static_cast<int>(i % k) == f ? s.test : s.train).push_back(order[i]);
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    Dataset tr = subset(train, s.train);
    if (!missing_categories(tr).empty()) {
      res.skipped_folds.push_back(f);
      fold_train.emplace_back();
      fold_val.emplace_back();
    } else {
      fold_train.push_back(std::move(tr));
      fold_val.push_back(subset(train, s.test));
    }
    res.folds.push_back(std::move(s));
  }
  if (static_cast<int>(res.skipped_folds.size()) == k)
    throw InputError("every fold's training part is missing a category");

  double best = std::numeric_limits<double>::infinity();
  res.best_theta = theta_grid.front();
  for (double theta : theta_grid) {
    CvRow row;
    row.theta = theta;
    for (int f = 0; f < k; ++f) {
      if (std::find(res.skipped_folds.begin(), res.skipped_folds.end(), f) != res.skipped_folds.end())
        continue;
      TrainConfig c = cfg;
      c.seed = stream_seed(cfg.seed, Stream::Folds, static_cast<std::uint64_t>(f));
      try {
        const ModelState m = fit(fold_train[f], c, theta);
        row.fold_mae.push_back(mae(fold_val[f].y, predict_labels(m, fold_val[f].X)));
      } catch (const std::exception& e) {
        row.errors.push_back("fold " + std::to_string(f) + ": " + e.what());
      }
    }
    row.folds_used = static_cast<int>(row.fold_mae.size());
    row.mean_mae = row.fold_mae.empty()
                       ? std::numeric_limits<double>::infinity()
                       : std::accumulate(row.fold_mae.begin(), row.fold_mae.end(), 0.0) / row.folds_used;
    const bool better = row.mean_mae < best - 1e-12;
    const bool tie_larger = std::abs(row.mean_mae - best) <= 1e-12 && theta > res.best_theta;
    if (better || tie_larger) {
      best = row.mean_mae;
      res.best_theta = theta;
    }
    res.table.push_back(std::move(row));
  }
  return res;
}

namespace {

ExperimentRow run_cell(const Dataset& D, const ExperimentConfig& cfg, Index size, int p,
                       const Split& split) {
  ExperimentRow row;
  row.size = size;
  row.partition = p;
  row.report.seed = cfg.seed;
  try {
    const Dataset train = subset(D, split.train);
    const Dataset test = subset(D, split.test);
    TrainConfig tc = cfg.train;
    tc.seed = stream_seed(cfg.seed, Stream::Init, static_cast<std::uint64_t>(size) * 1000 + p);
    double theta = cfg.theta_grid.front();
    if (cfg.cross_validate && cfg.theta_grid.size() > 1)
      theta = cross_validate(train, cfg.theta_grid, cfg.folds, tc.seed, tc).best_theta;
    const ModelState m = fit(train, tc, theta);
    row.report = evaluate(m, test);
    row.report.seed = cfg.seed;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

}  // namespace

std::vector<ExperimentRow> run_experiment(const Dataset& D, const ExperimentConfig& cfg) {
  validate(D);
  if (cfg.theta_grid.empty()) throw InputError("theta grid is empty");
  struct Cell {
    Index size;
    int partition;
    Split split;
  };
  std::vector<Cell> cells;
  for (Index size : cfg.sizes) {
    auto splits = partition(D.size(), size, cfg.partitions,
                            stream_seed(cfg.seed, Stream::Partition, static_cast<std::uint64_t>(size)));
    for (int p = 0; p < cfg.partitions; ++p) cells.push_back({size, p, std::move(splits[p])});
  }
  std::vector<ExperimentRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++)
      rows[i] = run_cell(D, cfg, cells[i].size, cells[i].partition, cells[i].split);
  };
  const int n_workers = std::max(1, cfg.workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

std::vector<SizeSummary> summarize(const std::vector<ExperimentRow>& rows) {
  std::map<Index, std::vector<const ExperimentRow*>> by_size;
  for (const auto& r : rows)
    if (r.error.empty()) by_size[r.size].push_back(&r);
  std::vector<SizeSummary> out;
  for (const auto& [size, rs] : by_size) {
    SizeSummary s;
    s.size = size;
    s.runs = static_cast<int>(rs.size());
    for (const auto* r : rs) {
      s.mae_mean += r->report.mae;
      s.fit_seconds_mean += r->report.fit_seconds;
      s.n_active_mean += static_cast<double>(r->report.n_active);
    }
    s.mae_mean /= s.runs;
    s.fit_seconds_mean /= s.runs;
    s.n_active_mean /= s.runs;
    double ss = 0.0;
    for (const auto* r : rs) ss += (r->report.mae - s.mae_mean) * (r->report.mae - s.mae_mean);
    s.mae_std = s.runs > 1 ? std::sqrt(ss / (s.runs - 1)) : 0.0;
    out.push_back(s);
  }
  return out;
}

namespace {

std::string csv_quote(const std::string& s) {
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

void write_report_csv(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  const auto old = out.precision(17);
  out << "size,partition,theta,mae,accuracy,n_active,fit_seconds,seed,error\n";
  for (const auto& r : rows) {
    out << r.size << ',' << r.partition << ',' << r.report.theta << ',' << r.report.mae << ','
        << r.report.accuracy << ',' << r.report.n_active << ',' << r.report.fit_seconds << ','
        << r.report.seed << ',' << csv_quote(r.error) << '\n';
  }
  out.precision(old);
}

void write_report_jsonl(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  for (const auto& r : rows) {
    nlohmann::json j{{"size", r.size},
                     {"partition", r.partition},
                     {"theta", r.report.theta},
                     {"mae", r.report.mae},
                     {"accuracy", r.report.accuracy},
                     {"n_active", r.report.n_active},
                     {"fit_seconds", r.report.fit_seconds},
                     {"kernel_seconds", r.report.kernel_seconds},
                     {"seed", r.report.seed}};
    if (!r.error.empty()) j["error"] = r.error;
    out << j.dump() << '\n';
  }
}

namespace {

std::string_view trim(std::string_view v) {
  while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.remove_prefix(1);
  while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back()))) v.remove_suffix(1);
  return v;
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= v.size(); ++k) {
    if (k == v.size() || v[k] == ',' || std::isspace(static_cast<unsigned char>(v[k]))) {
      if (k > start) out.push_back(v.substr(start, k - start));
      start = k + 1;
    }
  }
  return out;
}

struct ConfigReader {
  const std::string& source;
  std::size_t line = 0;

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(source + ": " + msg, line); }

  double real(std::string_view v) const {
    double x = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(x))
      fail("not a number: '" + std::string(v) + "'");
    return x;
  }
  long long integer(std::string_view v) const {
    long long x = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      fail("not an integer: '" + std::string(v) + "'");
    return x;
  }
  bool boolean(std::string_view v) const {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail("not a boolean: '" + std::string(v) + "'");
  }
};

}  // namespace

ExperimentFile parse_experiment_config(const std::string& text, const std::string& source) {
  ExperimentFile f;
  ExperimentConfig& c = f.config;
  ConfigReader rd{source};
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++rd.line;
    std::string_view l = raw;
    if (const auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) rd.fail("expected key = value");
    const std::string key(trim(l.substr(0, eq)));
    const std::string_view val = trim(l.substr(eq + 1));
    if (val.empty()) rd.fail("empty value for '" + key + "'");

    if (key == "data") f.data = val;
    else if (key == "synthetic") f.synthetic = rd.integer(val);
    else if (key == "manifest") f.manifest = val;
    else if (key == "name") f.name = val;
    else if (key == "report") f.report = val;
    else if (key == "format") {
      if (val != "csv" && val != "jsonl") rd.fail("format must be csv or jsonl");
      f.format = val;
    } else if (key == "sizes") {
      c.sizes.clear();
      for (auto v : split_list(val)) c.sizes.push_back(rd.integer(v));
    } else if (key == "thetas") {
      c.theta_grid.clear();
      for (auto v : split_list(val)) c.theta_grid.push_back(rd.real(v));
    } else if (key == "partitions") c.partitions = static_cast<int>(rd.integer(val));
    else if (key == "folds") c.folds = static_cast<int>(rd.integer(val));
    else if (key == "cv") c.cross_validate = rd.boolean(val);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(rd.integer(val));
    else if (key == "workers") c.workers = static_cast<int>(rd.integer(val));
    else if (key == "max_its") c.train.max_its = static_cast<int>(rd.integer(val));
    else if (key == "min_delta") c.train.min_delta = rd.real(val);
    else if (key == "min_gain") c.train.min_gain = rd.real(val);
    else if (key == "alpha_init") c.train.alpha_init = rd.real(val);
    else if (key == "sigma_init") c.train.sigma_init = rd.real(val);
    else if (key == "reestimate") c.train.enable_reestimate = rd.boolean(val);
    else if (key == "standardize") c.train.standardize = rd.boolean(val);
    else if (key == "low_rank_scan") c.train.low_rank_scan = rd.boolean(val);
    else rd.fail("unknown key '" + key + "'");
  }
  if (f.data.empty() == (f.synthetic == 0)) {
    rd.line = 0;
    rd.fail("exactly one of 'data' and 'synthetic' is required");
  }
  if (!f.manifest.empty() && f.name.empty()) {
    rd.line = 0;
    rd.fail("'manifest' needs 'name'");
  }
  return f;
}

ExperimentFile load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path);
}

}  // namespace isbor
