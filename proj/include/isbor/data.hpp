#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "isbor/types.hpp"

namespace isbor {

struct Dataset {
  RowMatrix X;                      // N x d
  Labels y;                         // 1..r
  int r = 0;
  std::vector<std::string> names;   // feature names, may be empty
  std::vector<long long> label_values;  // original label of category k at [k-1]

  Index size() const { return X.rows(); }
  Index dim() const { return X.cols(); }
};

// Throws InputError unless labels are 1..r and every feature is finite.
void validate(const Dataset& d);
// Categories declared in 1..r that have no sample.
std::vector<int> missing_categories(const Dataset& d);

Dataset subset(const Dataset& d, const std::vector<Index>& rows);

// Independent RNG streams derived from one user seed.
enum class Stream : std::uint64_t { Synthetic = 1, Partition = 2, Folds = 3, Init = 4 };
std::uint64_t stream_seed(std::uint64_t seed, Stream stream, std::uint64_t sub = 0);

struct SyntheticOptions {
  double lo = 0.0;
  double hi = 10.0;
  double center = 5.0;  // score = 10 (x1 - center)(x2 - center) + eps
  double noise_sd = 0.5;
  std::vector<double> cutpoints{-60.0, -9.0, 15.0, 60.0};
};

// Noise-free part of the score.
double synthetic_score(double x1, double x2, const SyntheticOptions& opts = {});
// Category of a (noisy) score under the generator's cut-points.
int synthetic_category(double score, const SyntheticOptions& opts = {});

// Uniform points on [lo, hi]^2 labelled by thresholding a noisy saddle score.
// The noisy scores are written to `scores` when given.
Dataset generate_synthetic(Index n_total, std::uint64_t seed, const SyntheticOptions& opts = {},
                           Vector* scores = nullptr);

// Comma- (or whitespace-) separated numeric features with an integer label in
// the last column. A non-numeric first row is taken as a header. Labels are
// remapped in sorted order to 1..r.
// With labeled = false every column is a feature and y stays empty.
Dataset load_csv(const std::string& path, bool labeled = true);
Dataset parse_csv(const std::string& text, const std::string& source = "<string>",
                  bool labeled = true);
// Re-expresses d's labels as categories 1..r of `label_values` (as recorded
// in a model). Throws InputError on a label value not listed there.
Dataset relabel(const Dataset& d, const std::vector<long long>& label_values);
// Writes features and the original label values (1..r when no mapping is recorded).
void write_csv(const Dataset& d, const std::string& path, bool header = true);

struct Scaler {
  Vector mean;
  Vector scale;  // 1 for zero-variance features
  Index dim() const { return mean.size(); }
};

std::pair<Dataset, Scaler> standardize(const Dataset& train);
Dataset apply_scaler(const Scaler& s, const Dataset& d);
void apply_scaler_inplace(const Scaler& s, std::span<double> x);

struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
};

// Random disjoint train/test splits; partition k uses its own RNG sub-stream.
std::vector<Split> partition(Index n, Index train_size, int n_partitions, std::uint64_t seed);

struct ManifestEntry {
  std::string name;
  Index n = 0;
  Index d = 0;
  int r = 0;
};

// One record per line: `name N d r`. '#' starts a comment.
std::vector<ManifestEntry> load_manifest(const std::string& path);
std::optional<ManifestEntry> find_manifest_entry(const std::vector<ManifestEntry>& m,
                                                 const std::string& name);
// Throws InputError naming the first mismatching field.
void check_against_manifest(const Dataset& d, const ManifestEntry& e);

}  // namespace isbor
