#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "octfluid/detect.hpp"
#include "octfluid/forest.hpp"
#include "octfluid/io.hpp"
#include "octfluid/pipeline.hpp"

namespace octfluid::evaluate {

struct EvalConfig {
  pipeline::PreprocessConfig preprocess;
  unet::NetConfig net;
  trainer::TrainConfig train;
  forest::ForestConfig forest;
  int min_region = 3;
  int top_k = 10;
  int cv_folds = 5;
  double fallback_threshold = 0.5;  // used when the CV sweep is impossible
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> warm_start;  // checkpoint to start training from

  void validate() const;
};

using LogFn = std::function<void(const std::string&)>;

/// How one class's vetting threshold was obtained.
struct ClassDecision {
  double threshold = 0.5;
  bool swept = false;     // false: fallback threshold
  bool constant = false;  // forest saw a single label class
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Trained network plus one forest and threshold per fluid class.
struct Model {
  unet::Network net;
  std::array<forest::Forest, 3> forests;
  std::array<ClassDecision, 3> decisions;
  std::vector<double> step_losses;
};

/// Forest stage of training: candidates of the network's own segmentation of
/// the training volumes, labelled against their truth.
void fit_forests(Model& model, std::span<const pipeline::Prepared> training, const EvalConfig& config,
                 std::uint64_t fold_seed);

/// Trains network and forests on prepared volumes with truth.
Model fit(std::span<const pipeline::Prepared> training, const EvalConfig& config, std::uint64_t fold_seed,
          const LogFn& log = {});

struct Detection {
  LabelMask raw_corrected;     // network labels, corrected frame
  LabelMask vetted_corrected;  // retained regions, corrected frame
  LabelMask vetted;            // retained regions, original frame
  std::vector<regions::CandidateRegion> candidates;
  std::array<std::vector<double>, 3> bscan_prob;
  std::array<double, 3> volume_prob{};
};

Detection apply(Model& model, const pipeline::Prepared& volume, const EvalConfig& config);

struct VolumeRecord {
  std::string id;
  std::array<detect::SegmentationMetrics, 3> metrics;
  std::array<double, 3> volume_prob{};
  std::array<bool, 3> gt_present{};
};

VolumeRecord score(const pipeline::Prepared& volume, const Detection& detection);

struct Stat {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // population form
};
Stat stat(std::span<const double> values);

struct ClassSummary {
  Stat dice;
  Stat avd_vox;
  Stat avd_mm3;
  std::optional<double> auc;  // absent when only one presence label occurs
  std::vector<detect::RocPoint> roc;
};

struct FoldRecord {
  std::string held_out;
  bool skipped = false;
  std::array<ClassDecision, 3> decisions{};
  double final_loss = 0.0;
};

struct LooResult {
  std::vector<VolumeRecord> records;
  std::vector<FoldRecord> folds;
  std::array<ClassSummary, 3> summary;
};

std::array<ClassSummary, 3> summarize(std::span<const VolumeRecord> records);

/// Leave-one-out over every manifest entry: train on the others, evaluate the
/// held-out volume in its original frame. Folds whose training set has no
/// fluid are skipped.
LooResult leave_one_out(const DatasetManifest& manifest, const EvalConfig& config, const LogFn& log = {});

/// volume,class,dice,avd_vox,avd_mm3,vol_prob,gt_present
void write_metrics_csv(const std::filesystem::path& path, std::span<const VolumeRecord> records);
/// class,threshold,fpr,tpr
void write_roc_csv(const std::filesystem::path& path, const std::array<ClassSummary, 3>& summary);
/// fold,held_out,skipped,final_loss,<class>_threshold,<class>_swept,...
void write_folds_csv(const std::filesystem::path& path, std::span<const FoldRecord> folds);
std::string summary_text(const std::array<ClassSummary, 3>& summary);

/// Parses a metrics CSV back (used by the roc command).
std::vector<VolumeRecord> read_metrics_csv(const std::filesystem::path& path);

/// Loads a manifest entry and prepares it.
pipeline::Prepared load_prepared(const DatasetManifest& manifest, const ManifestEntry& entry,
                                 const pipeline::PreprocessConfig& config);

}  // namespace octfluid::evaluate
