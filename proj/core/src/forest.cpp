#include "octfluid/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "octfluid/rng.hpp"

namespace octfluid::forest {

void ForestConfig::validate() const {
  if (n_trees < 1) throw ValidationError("n_trees must be >= 1");
  if (max_depth < 0) throw ValidationError("max_depth must be >= 0");
  if (min_samples_leaf < 1) throw ValidationError("min_samples_leaf must be >= 1");
  if (features_per_split < 1 || features_per_split > int(regions::kNumFeatures))
    throw ValidationError("features_per_split must lie in [1, 16]");
}

ClassWeights ClassWeights::from_counts(std::size_t n_pos, std::size_t n_neg) {
  const double total = double(n_pos + n_neg);
  if (total == 0) return {};
  return {double(n_neg) / total, double(n_pos) / total};
}

namespace {

struct Entry {
  std::uint32_t index;
  std::uint32_t count;  // bootstrap multiplicity
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const Features> x, std::span<const std::uint8_t> y, const ForestConfig& cfg,
              ClassWeights w, Rng& rng)
      : x_(x), y_(y), cfg_(cfg), w_(w), rng_(rng) {}

  std::vector<Forest::Node> build(std::vector<Entry> entries) {
    nodes_.clear();
    grow(std::move(entries), 0);
    return std::move(nodes_);
  }

 private:
  struct Counts {
    std::uint64_t pos = 0, neg = 0;
  };

  Counts count(const std::vector<Entry>& e) const {
    Counts c;
    for (const auto& s : e) (y_[s.index] ? c.pos : c.neg) += s.count;
    return c;
  }

  // W * gini(node) with class-weighted counts.
  double weighted_impurity(std::uint64_t pos, std::uint64_t neg) const {
    const double wp = w_.w_pos * double(pos), wn = w_.w_neg * double(neg);
    const double total = wp + wn;
    return total > 0 ? total - (wp * wp + wn * wn) / total : 0.0;
  }

  double leaf_value(const Counts& c) const {
    const double wp = w_.w_pos * double(c.pos), wn = w_.w_neg * double(c.neg);
    return wp + wn > 0 ? wp / (wp + wn) : 0.0;
  }

  int grow(std::vector<Entry> entries, int depth) {
    const int id = int(nodes_.size());
    nodes_.emplace_back();
    const Counts c = count(entries);
    nodes_[std::size_t(id)].value = leaf_value(c);
    const std::uint64_t total = c.pos + c.neg;
    if (c.pos == 0 || c.neg == 0) return id;
    if (cfg_.max_depth > 0 && depth >= cfg_.max_depth) return id;
    if (total < 2 * std::uint64_t(cfg_.min_samples_leaf)) return id;

    const double parent = weighted_impurity(c.pos, c.neg);
    std::array<int, regions::kNumFeatures> order;
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(order.begin(), order.end());

    int best_f = -1;
    double best_thr = 0.0, best_score = parent;
    int examined = 0;
    std::vector<Entry> sorted;
    for (int f : order) {
      if (examined >= cfg_.features_per_split && best_f >= 0) break;
      sorted = entries;
      std::sort(sorted.begin(), sorted.end(), [&](const Entry& a, const Entry& b) {
        return x_[a.index][std::size_t(f)] < x_[b.index][std::size_t(f)];
      });
      const double lo = x_[sorted.front().index][std::size_t(f)];
      const double hi = x_[sorted.back().index][std::size_t(f)];
      if (!(lo < hi)) continue;  // constant here; does not count toward the draw
      ++examined;
      Counts left;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        (y_[sorted[i].index] ? left.pos : left.neg) += sorted[i].count;
        const double v = x_[sorted[i].index][std::size_t(f)];
        const double vn = x_[sorted[i + 1].index][std::size_t(f)];
        if (!(v < vn)) continue;
        const std::uint64_t nl = left.pos + left.neg, nr = total - nl;
        if (nl < std::uint64_t(cfg_.min_samples_leaf) || nr < std::uint64_t(cfg_.min_samples_leaf)) continue;
        const double score =
            weighted_impurity(left.pos, left.neg) + weighted_impurity(c.pos - left.pos, c.neg - left.neg);
        if (score < best_score - 1e-12 * parent) {
          best_score = score;
          best_f = f;
          double thr = v + (vn - v) / 2.0;
          if (!(thr < vn)) thr = v;
          best_thr = thr;
        }
      }
    }
    if (best_f < 0) return id;

    std::vector<Entry> l, r;
    for (const auto& e : entries) (x_[e.index][std::size_t(best_f)] <= best_thr ? l : r).push_back(e);
    entries.clear();
    entries.shrink_to_fit();
    nodes_[std::size_t(id)].feature = best_f;
    nodes_[std::size_t(id)].threshold = best_thr;
    const int li = grow(std::move(l), depth + 1);
    nodes_[std::size_t(id)].left = li;
    const int ri = grow(std::move(r), depth + 1);
    nodes_[std::size_t(id)].right = ri;
    return id;
  }

  std::span<const Features> x_;
  std::span<const std::uint8_t> y_;
  const ForestConfig& cfg_;
  ClassWeights w_;
  Rng& rng_;
  std::vector<Forest::Node> nodes_;
};

double tree_predict(const std::vector<Forest::Node>& tree, const Features& s) {
  std::size_t i = 0;
  while (tree[i].feature >= 0) i = std::size_t(s[std::size_t(tree[i].feature)] <= tree[i].threshold ? tree[i].left : tree[i].right);
  return tree[i].value;
}

}  // namespace

Forest Forest::train(std::span<const Features> samples, std::span<const std::uint8_t> labels,
                     const ForestConfig& config) {
  config.validate();
  if (samples.size() != labels.size()) throw DimensionError("forest: samples and labels differ in length");
  for (const auto& s : samples)
    for (double v : s)
      if (!std::isfinite(v)) throw ValidationError("forest: non-finite feature value");
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l ? 1 : 0;
  const std::size_t n_neg = labels.size() - n_pos;

  Forest f;
  f.weights_ = ClassWeights::from_counts(n_pos, n_neg);
  if (n_pos == 0 || n_neg == 0) {
    f.constant_ = true;
    Node leaf;
    leaf.value = n_pos > 0 ? 1.0 : 0.0;
    f.trees_.push_back({leaf});
    return f;
  }
  for (int t = 0; t < config.n_trees; ++t) {
    Rng rng = derive_rng(config.seed, Stream::Forest, std::uint64_t(t));
    std::vector<Entry> entries;
    if (config.bootstrap) {
      std::vector<std::uint32_t> counts(samples.size(), 0);
      for (std::size_t i = 0; i < samples.size(); ++i)
        ++counts[std::size_t(rng.uniform_int(0, std::int64_t(samples.size()) - 1))];
      for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i]) entries.push_back({std::uint32_t(i), counts[i]});
    } else {
      for (std::size_t i = 0; i < samples.size(); ++i) entries.push_back({std::uint32_t(i), 1});
    }
    TreeBuilder builder(samples, labels, config, f.weights_, rng);
    f.trees_.push_back(builder.build(std::move(entries)));
  }
  return f;
}

double Forest::predict_proba(const Features& sample) const {
  double sum = 0.0;
  for (const auto& t : trees_) sum += tree_predict(t, sample);
  return std::clamp(sum / double(trees_.size()), 0.0, 1.0);
}

Forest Forest::from_trees(std::vector<std::vector<Node>> trees) {
  if (trees.empty()) throw ValidationError("forest needs at least one tree");
  Forest f;
  f.trees_ = std::move(trees);
  return f;
}

namespace {
constexpr char kMagic[4] = {'O', 'C', 'T', 'F'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void Forest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write forest '" + path.string() + "'");
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write(kMagic, 4);
  put(kVersion);
  put(std::uint8_t(constant_ ? 1 : 0));
  put(weights_.w_pos);
  put(weights_.w_neg);
  put(std::uint32_t(trees_.size()));
  for (const auto& t : trees_) {
    put(std::uint32_t(t.size()));
    for (const auto& n : t) {
      put(n.feature);
      put(n.threshold);
      put(n.left);
      put(n.right);
      put(n.value);
    }
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Forest Forest::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open forest '" + path.string() + "'");
  auto get = [&](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (std::size_t(in.gcount()) != sizeof v) throw FormatError("truncated forest '" + path.string() + "'");
  };
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("'" + path.string() + "' is not a forest file");
  std::uint32_t version = 0;
  get(version);
  if (version != kVersion) throw FormatError("unsupported forest version");
  Forest f;
  std::uint8_t constant = 0;
  get(constant);
  f.constant_ = constant != 0;
  get(f.weights_.w_pos);
  get(f.weights_.w_neg);
  std::uint32_t n_trees = 0;
  get(n_trees);
  if (n_trees == 0 || n_trees > 100000) throw FormatError("bad tree count");
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    std::uint32_t n = 0;
    get(n);
    if (n == 0 || n > (1U << 26)) throw FormatError("bad node count");
    std::vector<Node> tree(n);
    for (auto& node : tree) {
      get(node.feature);
      get(node.threshold);
      get(node.left);
      get(node.right);
      get(node.value);
      if (node.feature >= int(regions::kNumFeatures)) throw FormatError("bad split feature");
      if (node.feature >= 0 && (node.left <= 0 || node.right <= 0 || node.left >= int(n) || node.right >= int(n)))
        throw FormatError("bad child index");
    }
    f.trees_.push_back(std::move(tree));
  }
  return f;
}

double f_measure(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i]) ++tp;
    else if (pred) ++fp;
    else if (labels[i]) ++fn;
  }
  const double precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
  const double recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

SweepResult best_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  SweepResult r;
  r.f_measure = -1.0;
  for (int k = 0; k <= 100; ++k) {
    const double t = k / 100.0;
    const double f = f_measure(scores, labels, t);
    if (f > r.f_measure) {
      r.f_measure = f;
      r.threshold = t;
    }
  }
  return r;
}

SweepResult sweep_threshold(std::span<const Features> samples, std::span<const std::uint8_t> labels,
                            const ForestConfig& config, int folds) {
  if (samples.size() != labels.size()) throw DimensionError("forest: samples and labels differ in length");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (int(pos.size()) < folds || int(neg.size()) < folds)
    throw DataError("threshold sweep needs at least " + std::to_string(folds) + " samples of each label (have " +
                    std::to_string(pos.size()) + " positive, " + std::to_string(neg.size()) + " negative)");
  Rng rng = derive_rng(config.seed, Stream::Folds);
  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  std::vector<int> fold(labels.size());
  for (std::size_t k = 0; k < pos.size(); ++k) fold[pos[k]] = int(k % std::size_t(folds));
  for (std::size_t k = 0; k < neg.size(); ++k) fold[neg[k]] = int(k % std::size_t(folds));

  SweepResult result;
  result.oof_scores.assign(labels.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<Features> tx;
    std::vector<std::uint8_t> ty;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (fold[i] != f) {
        tx.push_back(samples[i]);
        ty.push_back(labels[i]);
      }
    ForestConfig fc = config;
    fc.seed = derive_seed(config.seed, Stream::Folds, std::uint64_t(f) + 1);
    const Forest model = Forest::train(tx, ty, fc);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (fold[i] == f) result.oof_scores[i] = model.predict_proba(samples[i]);
  }
  const SweepResult best = best_threshold(result.oof_scores, labels);
  result.threshold = best.threshold;
  result.f_measure = best.f_measure;
  return result;
}

VetResult vet(std::span<regions::CandidateRegion> candidates, const Forest& forest, double threshold,
              const Dims& dims) {
  VetResult r;
  r.labels.assign(dims.voxels(), 0);
  const std::size_t plane = dims.bscan_size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& c = candidates[i];
    c.probability = forest.predict_proba(c.features);
    if (c.probability < threshold) continue;
    if (c.bscan < 0 || std::uint32_t(c.bscan) >= dims.n_bscans) throw DimensionError("candidate B-scan out of range");
    r.retained.push_back(i);
    for (int p : c.pixels) r.labels[std::size_t(c.bscan) * plane + std::size_t(p)] = static_cast<std::uint8_t>(c.cls);
  }
  return r;
}

}  // namespace octfluid::forest
