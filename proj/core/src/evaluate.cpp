#include "octfluid/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "octfluid/rng.hpp"

namespace octfluid::evaluate {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::size_t class_index(FluidClass c) { return std::size_t(code(c) - 1); }

}  // namespace

void EvalConfig::validate() const {
  preprocess.validate();
  net.validate();
  train.validate();
  forest.validate();
  if (min_region < 1) throw ValidationError("min_region must be >= 1");
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  if (cv_folds < 2) throw ValidationError("cv_folds must be >= 2");
  if (!(fallback_threshold >= 0.0 && fallback_threshold <= 1.0))
    throw ValidationError("fallback_threshold must lie in [0, 1]");
}

void fit_forests(Model& model, std::span<const pipeline::Prepared> training, const EvalConfig& config,
                 std::uint64_t fold_seed) {
  std::array<std::vector<forest::Features>, 3> x;
  std::array<std::vector<std::uint8_t>, 3> y;
  for (const auto& p : training) {
    if (!p.truth) throw DataError("training volume '" + p.id + "' has no truth");
    const LabelMask seg = pipeline::segment(model.net, p);
    for (const auto& c : pipeline::candidates(p, seg, config.min_region)) {
      x[class_index(c.cls)].push_back(c.features);
      y[class_index(c.cls)].push_back(*c.label ? 1 : 0);
    }
  }
  for (std::size_t k = 0; k < 3; ++k) {
    ClassDecision& d = model.decisions[k];
    d = ClassDecision{};
    d.threshold = config.fallback_threshold;
    for (auto l : y[k]) (l ? d.n_pos : d.n_neg) += 1;
    forest::ForestConfig fc = config.forest;
    fc.seed = derive_seed(fold_seed, Stream::Forest, k + 1);
    if (x[k].empty()) {
      // Nothing to learn from: pass the network's output through.
      forest::Forest::Node leaf;
      leaf.value = 1.0;
      model.forests[k] = forest::Forest::from_trees({{leaf}});
      d.constant = true;
      continue;
    }
    model.forests[k] = forest::Forest::train(x[k], y[k], fc);
    d.constant = model.forests[k].constant();
    if (d.n_pos >= std::size_t(config.cv_folds) && d.n_neg >= std::size_t(config.cv_folds)) {
      d.threshold = forest::sweep_threshold(x[k], y[k], fc, config.cv_folds).threshold;
      d.swept = true;
    }
  }
}

Model fit(std::span<const pipeline::Prepared> training, const EvalConfig& config, std::uint64_t fold_seed,
          const LogFn& log) {
  config.validate();
  Model model;
  model.net = config.warm_start ? unet::Network::load(*config.warm_start, config.net)
                                : unet::Network::build(config.net, config.seed);
  std::vector<trainer::Sample> samples;
  for (const auto& p : training) {
    if (!p.truth) throw DataError("training volume '" + p.id + "' has no truth");
    auto s = pipeline::make_samples(p);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  trainer::TrainConfig tc = config.train;
  tc.seed = derive_seed(fold_seed, Stream::Batch, 0);
  trainer::ProgressFn progress;
  if (log)
    progress = [&](std::int64_t step, double loss) {
      if (step % 100 == 0) log("  step " + std::to_string(step) + " loss " + fmt(loss));
    };
  model.step_losses = trainer::train(model.net, samples, tc, progress).step_losses;
  fit_forests(model, training, config, fold_seed);
  return model;
}

Detection apply(Model& model, const pipeline::Prepared& volume, const EvalConfig& config) {
  Detection d;
  d.raw_corrected = pipeline::segment(model.net, volume);
  d.candidates = pipeline::candidates(volume, d.raw_corrected, config.min_region);
  const Dims& dims = volume.corrected.dims();
  std::vector<std::uint8_t> labels(dims.voxels(), 0);
  for (std::size_t k = 0; k < 3; ++k) {
    const FluidClass cls = kFluidClasses[k];
    std::vector<regions::CandidateRegion> mine;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < d.candidates.size(); ++i)
      if (d.candidates[i].cls == cls) {
        mine.push_back(d.candidates[i]);
        where.push_back(i);
      }
    const auto vetted = forest::vet(mine, model.forests[k], model.decisions[k].threshold, dims);
    for (std::size_t i = 0; i < mine.size(); ++i) d.candidates[where[i]].probability = mine[i].probability;
    for (std::size_t v = 0; v < labels.size(); ++v)
      if (vetted.labels[v]) labels[v] = vetted.labels[v];
    d.bscan_prob[k] = detect::bscan_probabilities(d.candidates, cls, dims.n_bscans);
    d.volume_prob[k] = detect::volume_probability(d.bscan_prob[k], std::size_t(config.top_k));
  }
  d.vetted_corrected = LabelMask(dims, volume.corrected.spacing(), std::move(labels));
  d.vetted = preproc::undo_shifts(d.vetted_corrected, volume.shifts);
  return d;
}

VolumeRecord score(const pipeline::Prepared& volume, const Detection& detection) {
  if (!volume.truth_original) throw DataError("volume '" + volume.id + "' has no truth to score against");
  VolumeRecord r;
  r.id = volume.id;
  for (std::size_t k = 0; k < 3; ++k) {
    const FluidClass cls = kFluidClasses[k];
    r.metrics[k] = detect::segmentation_metrics(*volume.truth_original, detection.vetted, cls);
    r.volume_prob[k] = detection.volume_prob[k];
    r.gt_present[k] = volume.truth_original->contains(cls);
  }
  return r;
}

Stat stat(std::span<const double> v) {
  Stat s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= double(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / double(v.size()));
  return s;
}

std::array<ClassSummary, 3> summarize(std::span<const VolumeRecord> records) {
  std::array<ClassSummary, 3> out;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> dice, vox, mm3, scores;
    std::vector<std::uint8_t> labels;
    for (const auto& r : records) {
      const auto& m = r.metrics[k];
      if (m.dice) dice.push_back(*m.dice);
      if (m.avd_vox) vox.push_back(*m.avd_vox);
      if (m.avd_mm3) mm3.push_back(*m.avd_mm3);
      scores.push_back(r.volume_prob[k]);
      labels.push_back(r.gt_present[k] ? 1 : 0);
    }
    out[k].dice = stat(dice);
    out[k].avd_vox = stat(vox);
    out[k].avd_mm3 = stat(mm3);
    const bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;
    if (both) {
      out[k].roc = detect::roc_curve(scores, labels);
      out[k].auc = detect::roc_auc(scores, labels);
    }
  }
  return out;
}

pipeline::Prepared load_prepared(const DatasetManifest& manifest, const ManifestEntry& entry,
                                 const pipeline::PreprocessConfig& config) {
  const Volume vol = io::read_volume(manifest.resolve(entry.volume));
  const LabelMask mask = io::read_mask(manifest.resolve(entry.mask), vol.dims());
  return pipeline::prepare(entry.id, vol, mask, config);
}

LooResult leave_one_out(const DatasetManifest& manifest, const EvalConfig& config, const LogFn& log) {
  config.validate();
  if (manifest.entries.size() < 3) throw DataError("leave-one-out needs at least 3 volumes");
  std::vector<pipeline::Prepared> prepared;
  for (const auto& e : manifest.entries) prepared.push_back(load_prepared(manifest, e, config.preprocess));

  LooResult result;
  for (std::size_t f = 0; f < prepared.size(); ++f) {
    FoldRecord fold;
    fold.held_out = prepared[f].id;
    std::vector<pipeline::Prepared> training;
    bool fluid = false;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      if (i == f) continue;
      training.push_back(prepared[i]);
      for (FluidClass c : kFluidClasses) fluid = fluid || prepared[i].truth->contains(c);
    }
    if (!fluid) {
      if (log) log("fold " + std::to_string(f) + ": no fluid in training volumes, skipped");
      fold.skipped = true;
      result.folds.push_back(fold);
      continue;
    }
    if (log) log("fold " + std::to_string(f) + ": holding out " + fold.held_out);
    Model model = fit(training, config, derive_seed(config.seed, Stream::Folds, 1000 + f), log);
    fold.decisions = model.decisions;
    fold.final_loss = model.step_losses.empty() ? 0.0 : model.step_losses.back();
    const Detection det = apply(model, prepared[f], config);
    result.records.push_back(score(prepared[f], det));
    if (log) {
      std::string line = "  ";
      for (std::size_t k = 0; k < 3; ++k) {
        const auto& r = result.records.back();
        line += std::string(class_name(kFluidClasses[k])) + " dice=" +
                (r.metrics[k].dice ? fmt(*r.metrics[k].dice) : std::string("-")) + " p=" + fmt(r.volume_prob[k]) +
                (r.gt_present[k] ? "(+) " : "(-) ");
      }
      log(line);
    }
    result.folds.push_back(fold);
  }
  result.summary = summarize(result.records);
  return result;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const VolumeRecord> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "volume,class,dice,avd_vox,avd_mm3,vol_prob,gt_present\n";
  for (const auto& r : records)
    for (std::size_t k = 0; k < 3; ++k)
      out << r.id << "," << class_name(kFluidClasses[k]) << "," << fmt(r.metrics[k].dice) << ","
          << fmt(r.metrics[k].avd_vox) << "," << fmt(r.metrics[k].avd_mm3) << "," << fmt(r.volume_prob[k]) << ","
          << (r.gt_present[k] ? 1 : 0) << "\n";
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_roc_csv(const std::filesystem::path& path, const std::array<ClassSummary, 3>& summary) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "class,threshold,fpr,tpr\n";
  for (std::size_t k = 0; k < 3; ++k)
    for (const auto& p : summary[k].roc)
      out << class_name(kFluidClasses[k]) << "," << (std::isinf(p.threshold) ? std::string("inf") : fmt(p.threshold))
          << "," << fmt(p.fpr) << "," << fmt(p.tpr) << "\n";
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_folds_csv(const std::filesystem::path& path, std::span<const FoldRecord> folds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "fold,held_out,skipped,final_loss";
  for (FluidClass c : kFluidClasses)
    for (const char* col : {"threshold", "swept", "constant", "n_pos", "n_neg"})
      out << "," << class_name(c) << "_" << col;
  out << "\n";
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto& r = folds[f];
    out << f << "," << r.held_out << "," << (r.skipped ? 1 : 0) << "," << fmt(r.final_loss);
    for (const auto& d : r.decisions)
      out << "," << fmt(d.threshold) << "," << (d.swept ? 1 : 0) << "," << (d.constant ? 1 : 0) << "," << d.n_pos
          << "," << d.n_neg;
    out << "\n";
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string summary_text(const std::array<ClassSummary, 3>& summary) {
  std::ostringstream out;
  out << "class,n_dice,dice_mean,dice_std,avd_vox_mean,avd_vox_std,avd_mm3_mean,avd_mm3_std,auc\n";
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& s = summary[k];
    out << class_name(kFluidClasses[k]) << "," << s.dice.n << "," << fmt(s.dice.mean) << "," << fmt(s.dice.std)
        << "," << fmt(s.avd_vox.mean) << "," << fmt(s.avd_vox.std) << "," << fmt(s.avd_mm3.mean) << ","
        << fmt(s.avd_mm3.std) << "," << fmt(s.auc) << "\n";
  }
  return out.str();
}

std::vector<VolumeRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "volume,class,dice,avd_vox,avd_mm3,vol_prob,gt_present")
    throw FormatError("'" + path.string() + "' is not a metrics CSV");
  std::vector<VolumeRecord> out;
  auto opt = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
  };
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw FormatError("metrics CSV line " + std::to_string(lineno) + ": expected 7 fields");
    try {
      const std::size_t k = class_index(class_from_name(f[1]));
      if (out.empty() || out.back().id != f[0]) {
        out.emplace_back();
        out.back().id = f[0];
      }
      auto& r = out.back();
      r.metrics[k] = {opt(f[2]), opt(f[3]), opt(f[4])};
      r.volume_prob[k] = std::stod(f[5]);
      r.gt_present[k] = f[6] == "1";
    } catch (const std::logic_error&) {
      throw FormatError("metrics CSV line " + std::to_string(lineno) + ": bad value");
    }
  }
  return out;
}

}  // namespace octfluid::evaluate
