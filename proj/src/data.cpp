#include "isbor/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "isbor/errors.hpp"

namespace isbor {

void validate(const Dataset& d) {
  if (static_cast<Index>(d.y.size()) != d.X.rows())
    throw InputError("dataset has " + std::to_string(d.X.rows()) + " rows but " +
                     std::to_string(d.y.size()) + " labels");
  if (d.r < 2) throw InputError("dataset needs at least 2 categories");
  for (std::size_t i = 0; i < d.y.size(); ++i)
    if (d.y[i] < 1 || d.y[i] > d.r)
      throw InputError("label " + std::to_string(d.y[i]) + " at row " + std::to_string(i) +
                       " outside 1.." + std::to_string(d.r));
  if (!d.X.allFinite()) throw InputError("dataset contains non-finite features");
}

std::vector<int> missing_categories(const Dataset& d) {
  std::vector<char> seen(static_cast<std::size_t>(d.r + 1), 0);
  for (int y : d.y)
    if (y >= 1 && y <= d.r) seen[y] = 1;
  std::vector<int> out;
  for (int k = 1; k <= d.r; ++k)
    if (!seen[k]) out.push_back(k);
  return out;
}

Dataset subset(const Dataset& d, const std::vector<Index>& rows) {
  Dataset out;
  out.X.resize(static_cast<Index>(rows.size()), d.X.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= d.X.rows()) throw InputError("subset row out of range");
    out.X.row(static_cast<Index>(i)) = d.X.row(rows[i]);
    out.y.push_back(d.y[rows[i]]);
  }
  out.r = d.r;
  out.names = d.names;
  out.label_values = d.label_values;
  return out;
}

std::uint64_t stream_seed(std::uint64_t seed, Stream stream, std::uint64_t sub) {
  // splitmix64 over the three words.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ static_cast<std::uint64_t>(stream)) ^ sub);
}

double synthetic_score(double x1, double x2, const SyntheticOptions& opts) {
  return 10.0 * (x1 - opts.center) * (x2 - opts.center);
}

int synthetic_category(double score, const SyntheticOptions& opts) {
  const int r = static_cast<int>(opts.cutpoints.size()) + 1;
  int y = 1;
  while (y < r && score > opts.cutpoints[y - 1]) ++y;
  return y;
}

Dataset generate_synthetic(Index n_total, std::uint64_t seed, const SyntheticOptions& opts,
                           Vector* scores) {
  if (n_total < 1) throw InputError("n_total must be at least 1");
  std::mt19937_64 rng(stream_seed(seed, Stream::Synthetic));
  std::uniform_real_distribution<double> unif(opts.lo, opts.hi);
  std::normal_distribution<double> noise(0.0, opts.noise_sd);

  Dataset d;
  d.r = static_cast<int>(opts.cutpoints.size()) + 1;
  d.X.resize(n_total, 2);
  d.y.resize(static_cast<std::size_t>(n_total));
  d.names = {"x1", "x2"};
  if (scores) scores->resize(n_total);
  for (Index i = 0; i < n_total; ++i) {
    const double x1 = unif(rng);
    const double x2 = unif(rng);
    const double score = synthetic_score(x1, x2, opts) + noise(rng);
    d.X(i, 0) = x1;
    d.X(i, 1) = x2;
    d.y[i] = synthetic_category(score, opts);
    if (scores) (*scores)[i] = score;
  }
  d.label_values.resize(static_cast<std::size_t>(d.r));
  std::iota(d.label_values.begin(), d.label_values.end(), 1LL);
  return d;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  const bool comma = line.find(',') != std::string_view::npos;
  std::size_t i = 0;
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  if (comma) {
    while (true) {
      const std::size_t j = line.find(',', i);
      out.push_back(trim(line.substr(i, j == std::string_view::npos ? j : j - i)));
      if (j == std::string_view::npos) break;
      i = j + 1;
    }
  } else {
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      out.push_back(line.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

bool parse_double(std::string_view s, double& v) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& source, bool labeled) {
  const std::size_t nlab = labeled ? 1 : 0;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<double>> rows;
  std::vector<long long> raw_labels;
  std::vector<std::string> names;
  std::size_t width = 0;
  bool first = true;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line) || line[0] == '#') continue;
    const auto fields = split_fields(line);
    std::vector<double> vals(fields.size());
    bool numeric = true;
    for (std::size_t k = 0; k < fields.size() && numeric; ++k)
      numeric = parse_double(fields[k], vals[k]);
    if (first && !numeric) {
      for (std::size_t k = 0; k + nlab < fields.size(); ++k) names.emplace_back(fields[k]);
      width = fields.size();
      first = false;
      continue;
    }
    first = false;
    if (fields.size() < 1 + nlab)
      throw ParseError(source + (labeled ? ": need at least one feature and a label" : ": empty row"),
                       line_no);
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw ParseError(source + ": row has " + std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(width),
                       line_no);
    if (!numeric) {
      for (std::size_t k = 0; k < fields.size(); ++k) {
        double v;
        if (!parse_double(fields[k], v))
          throw ParseError(source + ": non-numeric value '" + std::string(fields[k]) +
                               "' in column " + std::to_string(k + 1),
                           line_no);
      }
    }
    for (std::size_t k = 0; k + nlab < vals.size(); ++k)
      if (!std::isfinite(vals[k]))
        throw ParseError(source + ": non-finite feature in column " + std::to_string(k + 1), line_no);
    if (!labeled) {
      rows.push_back(std::move(vals));
      continue;
    }
    const double lab = vals.back();
    if (!std::isfinite(lab) || lab != std::round(lab))
      throw ParseError(source + ": label must be an integer", line_no);
    raw_labels.push_back(static_cast<long long>(lab));
    vals.pop_back();
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ParseError(source + ": no data rows");

  Dataset d;
  d.names = std::move(names);
  const Index n = static_cast<Index>(rows.size());
  const Index dim = static_cast<Index>(rows.front().size());
  d.X.resize(n, dim);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < dim; ++k) d.X(i, k) = rows[i][k];

  std::set<long long> distinct(raw_labels.begin(), raw_labels.end());
  d.label_values.assign(distinct.begin(), distinct.end());
  std::map<long long, int> rank;
  for (std::size_t k = 0; k < d.label_values.size(); ++k) rank[d.label_values[k]] = static_cast<int>(k) + 1;
  d.r = static_cast<int>(d.label_values.size());
  d.y.reserve(raw_labels.size());
  for (long long v : raw_labels) d.y.push_back(rank[v]);
  return d;
}

Dataset load_csv(const std::string& path, bool labeled) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open data file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path, labeled);
}

Dataset relabel(const Dataset& d, const std::vector<long long>& label_values) {
  std::map<long long, int> rank;
  for (std::size_t k = 0; k < label_values.size(); ++k) rank[label_values[k]] = static_cast<int>(k) + 1;
  Dataset out = d;
  out.r = static_cast<int>(label_values.size());
  out.label_values = label_values;
  for (Index i = 0; i < d.size(); ++i) {
    const int y = d.y[i];
    const long long v = d.label_values.empty() ? y : d.label_values[y - 1];
    const auto it = rank.find(v);
    if (it == rank.end())
      throw InputError("label " + std::to_string(v) + " is not a category of the model");
    out.y[i] = it->second;
  }
  return out;
}

void write_csv(const Dataset& d, const std::string& path, bool header) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  if (header) {
    for (Index k = 0; k < d.dim(); ++k)
      out << (static_cast<std::size_t>(k) < d.names.size() ? d.names[k] : "x" + std::to_string(k + 1))
          << ',';
    out << "label\n";
  }
  char buf[64];
  for (Index i = 0; i < d.size(); ++i) {
    for (Index k = 0; k < d.dim(); ++k) {
      const auto res = std::to_chars(buf, buf + sizeof buf, d.X(i, k));
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    const int y = d.y[i];
    out << (d.label_values.empty() ? static_cast<long long>(y) : d.label_values[y - 1]) << '\n';
  }
}

std::pair<Dataset, Scaler> standardize(const Dataset& train) {
  if (train.size() == 0) throw InputError("cannot standardize an empty dataset");
  Scaler s;
  s.mean = train.X.colwise().mean().transpose();
  s.scale.resize(train.dim());
  for (Index k = 0; k < train.dim(); ++k) {
    const double var = (train.X.col(k).array() - s.mean[k]).square().mean();
    s.scale[k] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return {apply_scaler(s, train), s};
}

Dataset apply_scaler(const Scaler& s, const Dataset& d) {
  if (s.dim() != d.dim())
    throw InputError("scaler expects " + std::to_string(s.dim()) + " features, data has " +
                     std::to_string(d.dim()));
  Dataset out = d;
  for (Index i = 0; i < out.size(); ++i)
    apply_scaler_inplace(s, std::span<double>(out.X.row(i).data(), static_cast<std::size_t>(out.dim())));
  return out;
}

void apply_scaler_inplace(const Scaler& s, std::span<double> x) {
  if (static_cast<Index>(x.size()) != s.dim()) throw InputError("scaler dimension mismatch");
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = (x[k] - s.mean[k]) / s.scale[k];
}

std::vector<Split> partition(Index n, Index train_size, int n_partitions, std::uint64_t seed) {
  if (train_size < 1 || train_size >= n)
    throw InputError("train size " + std::to_string(train_size) + " must be in [1, " +
                     std::to_string(n) + ")");
  if (n_partitions < 1) throw InputError("need at least one partition");
  std::vector<Split> out;
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (int p = 0; p < n_partitions; ++p) {
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(stream_seed(seed, Stream::Partition, static_cast<std::uint64_t>(p)));
    std::shuffle(idx.begin(), idx.end(), rng);
    Split s;
    s.train.assign(idx.begin(), idx.begin() + train_size);
    s.test.assign(idx.begin() + train_size, idx.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest '" + path + "'");
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (blank(line)) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.name >> e.n >> e.d >> e.r)) throw ParseError(path + ": expected 'name N d r'", line_no);
    out.push_back(e);
  }
  return out;
}

std::optional<ManifestEntry> find_manifest_entry(const std::vector<ManifestEntry>& m,
                                                 const std::string& name) {
  for (const auto& e : m)
    if (e.name == name) return e;
  return std::nullopt;
}

void check_against_manifest(const Dataset& d, const ManifestEntry& e) {
  if (d.size() != e.n)
    throw InputError(e.name + ": expected " + std::to_string(e.n) + " rows, found " + std::to_string(d.size()));
  if (d.dim() != e.d)
    throw InputError(e.name + ": expected " + std::to_string(e.d) + " features, found " + std::to_string(d.dim()));
  if (d.r != e.r)
    throw InputError(e.name + ": expected " + std::to_string(e.r) + " categories, found " + std::to_string(d.r));
}

}  // namespace isbor
