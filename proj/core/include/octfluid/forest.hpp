#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "octfluid/regions.hpp"

namespace octfluid::forest {

using regions::Features;

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 0;  // 0 = unlimited
  int min_samples_leaf = 1;
  int features_per_split = 4;  // ceil(sqrt(16))
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-sample weights that rebalance the two classes:
/// w_pos = N(neg) / N, w_neg = N(pos) / N.
struct ClassWeights {
  double w_pos = 0.5;
  double w_neg = 0.5;

  static ClassWeights from_counts(std::size_t n_pos, std::size_t n_neg);
};

class Forest {
 public:
  /// Trains one weighted-Gini tree per bootstrap draw. With a single label
  /// class a constant classifier is returned and constant() reports it.
  static Forest train(std::span<const Features> samples, std::span<const std::uint8_t> labels,
                      const ForestConfig& config);

  /// Mean over trees of the weighted positive fraction at the reached leaf.
  double predict_proba(const Features& sample) const;
  bool constant() const { return constant_; }
  const ClassWeights& weights() const { return weights_; }
  std::size_t n_trees() const { return trees_.size(); }

  /// "OCTF" magic, u32 version, then the node tables.
  void save(const std::filesystem::path& path) const;
  static Forest load(const std::filesystem::path& path);

  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // go left when x[feature] <= threshold
    std::int32_t left = -1, right = -1;
    double value = 0.0;  // weighted positive fraction (leaves)

    bool operator==(const Node&) const = default;
  };
  /// For tests and tools: build a forest from explicit trees.
  static Forest from_trees(std::vector<std::vector<Node>> trees);
  const std::vector<std::vector<Node>>& trees() const { return trees_; }

 private:
  std::vector<std::vector<Node>> trees_;
  ClassWeights weights_;
  bool constant_ = false;
};

/// 2PR/(P+R); 0 when P + R = 0. Positive iff score >= threshold.
double f_measure(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold);

struct SweepResult {
  double threshold = 0.5;
  double f_measure = 0.0;
  std::vector<double> oof_scores;  // pooled out-of-fold probabilities (CV sweep only)
};

/// Tries t = k/100 for k = 0..100 and keeps the first maximum of F.
SweepResult best_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Seeded stratified 5-fold CV: pools out-of-fold probabilities, then applies
/// best_threshold. Needs >= 5 samples of each label (DataError otherwise).
SweepResult sweep_threshold(std::span<const Features> samples, std::span<const std::uint8_t> labels,
                            const ForestConfig& config, int folds = 5);

struct VetResult {
  std::vector<std::size_t> retained;  // candidate indices with p >= threshold
  std::vector<std::uint8_t> labels;   // volume-sized label array of retained pixels
};

/// Scores every candidate (probability stored on all of them) and keeps those
/// with p >= threshold. Candidates' pixels index B-scan `bscan` of `dims`.
VetResult vet(std::span<regions::CandidateRegion> candidates, const Forest& forest, double threshold,
              const Dims& dims);

}  // namespace octfluid::forest
