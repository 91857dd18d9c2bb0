#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "figures.hpp"
#include "json.hpp"
#include "octfluid/evaluate.hpp"
#include "octfluid/phantom.hpp"

#ifndef OCTFLUID_VERSION
#define OCTFLUID_VERSION "unknown"
#endif

namespace octfluid::cli {

namespace {

using nlohmann::ordered_json;

std::size_t class_index(FluidClass c) { return std::size_t(code(c) - 1); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

DatasetManifest open_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("manifest '" + path.string() + "' not found");
  auto m = DatasetManifest::read(path);
  m.validate();
  return m;
}

/// Machine-readable record of a run: command, version, seed and the full
/// config snapshot. No timestamps, so reruns are byte-identical.
void write_run_manifest(const fs::path& out, const std::string& command, const RunConfig& config,
                        const ordered_json& inputs, const std::vector<std::string>& outputs) {
  ordered_json j;
  j["command"] = command;
  j["version"] = OCTFLUID_VERSION;
  j["seed"] = config.settings().eval.seed;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config.snapshot()) cfg[k] = v;
  j["config"] = cfg;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  write_text(out / "run.json", j.dump(2) + "\n");
}

pipeline::Prepared prepare_entry(const DatasetManifest& m, const ManifestEntry& e,
                                 const pipeline::PreprocessConfig& config) {
  const Volume vol = io::read_volume(m.resolve(e.volume));
  std::optional<LabelMask> truth;
  if (!e.mask.empty() && fs::exists(m.resolve(e.mask))) truth = io::read_mask(m.resolve(e.mask), vol.dims());
  return pipeline::prepare(e.id, vol, truth, config);
}

std::vector<pipeline::Prepared> prepare_all(const DatasetManifest& m, const pipeline::PreprocessConfig& config) {
  std::vector<pipeline::Prepared> out;
  for (const auto& e : m.entries) out.push_back(prepare_entry(m, e, config));
  return out;
}

// Model directory layout.
fs::path net_path(const fs::path& dir) { return dir / "net.octw"; }
fs::path forest_path(const fs::path& dir, FluidClass c) {
  return dir / ("forest_" + std::string(class_name(c)) + ".octf");
}

void save_model(const evaluate::Model& model, const fs::path& dir) {
  make_dir(dir);
  model.net.save(net_path(dir));
  ordered_json j;
  j["net"] = {{"depth", model.net.config().depth},
              {"base_channels", model.net.config().base_channels},
              {"keep_prob", model.net.config().keep_prob}};
  for (FluidClass c : kFluidClasses) {
    const auto k = class_index(c);
    model.forests[k].save(forest_path(dir, c));
    const auto& d = model.decisions[k];
    j["classes"][std::string(class_name(c))] = {{"threshold", d.threshold}, {"swept", d.swept},
                                                {"constant", d.constant}, {"n_pos", d.n_pos},
                                                {"n_neg", d.n_neg}};
  }
  write_text(dir / "model.json", j.dump(2) + "\n");
}

evaluate::Model load_model(const fs::path& dir) {
  for (const auto& p : {net_path(dir), dir / "model.json"})
    if (!fs::exists(p)) throw IoError("model file '" + p.string() + "' not found");
  evaluate::Model model;
  model.net = unet::Network::load(net_path(dir));
  std::ifstream in(dir / "model.json");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
    for (FluidClass c : kFluidClasses) {
      const auto k = class_index(c);
      const auto& e = j.at("classes").at(std::string(class_name(c)));
      auto& d = model.decisions[k];
      d.threshold = e.at("threshold").get<double>();
      d.swept = e.at("swept").get<bool>();
      d.constant = e.at("constant").get<bool>();
      d.n_pos = e.at("n_pos").get<std::size_t>();
      d.n_neg = e.at("n_neg").get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError("'" + (dir / "model.json").string() + "': " + ex.what());
  }
  for (FluidClass c : kFluidClasses) {
    if (!fs::exists(forest_path(dir, c))) throw IoError("model file '" + forest_path(dir, c).string() + "' not found");
    model.forests[class_index(c)] = forest::Forest::load(forest_path(dir, c));
  }
  return model;
}

ordered_json manifest_input(const fs::path& p) { return {{"manifest", fs::absolute(p).lexically_normal().string()}}; }

}  // namespace

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

void cmd_phantom(const RunConfig& config, const PhantomArgs& args) {
  const Settings& s = config.settings();
  if (args.n < 1) throw ValidationError("--n must be >= 1");
  auto profile = phantom::DeviceProfile::named(args.profile);
  profile.width = std::uint32_t(s.width);
  profile.height = std::uint32_t(s.height);
  if (s.n_bscans > 0) profile.n_bscans = std::uint32_t(s.n_bscans);
  profile.noise = s.noise;
  if (s.width < 16 || s.height < 16) throw ValidationError("phantom B-scans must be at least 16x16");
  make_dir(args.out);
  phantom::generate_dataset(args.seed, profile, fluid_preset(s.preset), args.n, args.out);
  RunConfig snap = config;
  snap.settings().eval.seed = args.seed;
  write_run_manifest(args.out, "phantom", snap,
                     {{"profile", args.profile}, {"n", args.n}}, {"manifest.txt", "presence.csv"});
}

void cmd_preprocess(const RunConfig& config, const fs::path& manifest, const fs::path& out) {
  const auto m = open_manifest(manifest);
  make_dir(out);
  std::vector<std::string> outputs;
  for (const auto& e : m.entries) {
    const auto p = prepare_entry(m, e, config.settings().eval.preprocess);
    io::write_volume(out / (e.id + "_corrected.octv"), p.corrected);
    io::write_surfaces(out / (e.id + "_surfaces.octs"), p.surfaces);
    if (p.truth) io::write_mask(out / (e.id + "_truth_corrected.octm"), *p.truth);
    std::string shifts = "bscan,shift\n";
    for (std::size_t z = 0; z < p.shifts.shifts.size(); ++z)
      shifts += std::to_string(z) + "," + std::to_string(p.shifts.shifts[z]) + "\n";
    write_text(out / (e.id + "_shifts.csv"), shifts);
    const std::size_t mid = p.dmaps.size() / 2;
    distmap::write_heatmap_ppm(out / (e.id + "_distmap.ppm"), p.dmaps[mid]);
    outputs.push_back(e.id);
  }
  write_run_manifest(out, "preprocess", config, manifest_input(manifest), outputs);
}

void cmd_train(const RunConfig& config, const fs::path& manifest, const fs::path& out) {
  const auto& ec = config.settings().eval;
  ec.validate();
  const auto m = open_manifest(manifest);
  const auto prepared = prepare_all(m, ec.preprocess);
  const auto model = evaluate::fit(prepared, ec, ec.seed, [](const std::string& s) { std::cerr << s << "\n"; });
  save_model(model, out);
  trainer::write_loss_csv(out / "loss.csv", model.step_losses);
  write_run_manifest(out, "train", config, manifest_input(manifest), {"net.octw", "model.json", "loss.csv"});
}

void cmd_segment(const RunConfig& config, const fs::path& model_dir, const fs::path& manifest, const fs::path& out) {
  const auto m = open_manifest(manifest);
  auto model = load_model(model_dir);
  make_dir(out);
  std::vector<std::string> outputs;
  for (const auto& e : m.entries) {
    const auto p = prepare_entry(m, e, config.settings().eval.preprocess);
    const LabelMask seg = preproc::undo_shifts(pipeline::segment(model.net, p), p.shifts);
    io::write_mask(out / (e.id + "_seg.octm"), seg);
    outputs.push_back(e.id + "_seg.octm");
  }
  write_run_manifest(out, "segment", config, manifest_input(manifest), outputs);
}

void cmd_vet(const RunConfig& config, const fs::path& model_dir, const fs::path& manifest, const fs::path& out) {
  const auto& ec = config.settings().eval;
  ec.validate();
  const auto m = open_manifest(manifest);
  auto model = load_model(model_dir);
  make_dir(out);
  std::vector<std::string> outputs{"candidates.csv"};
  bool first = true;
  for (const auto& e : m.entries) {
    const auto p = prepare_entry(m, e, ec.preprocess);
    const auto det = evaluate::apply(model, p, ec);
    io::write_mask(out / (e.id + "_vetted.octm"), det.vetted);
    regions::write_candidates_csv(out / "candidates.csv", e.id, det.candidates, !first);
    first = false;
    outputs.push_back(e.id + "_vetted.octm");
  }
  write_run_manifest(out, "vet", config, manifest_input(manifest), outputs);
}

void cmd_detect(const RunConfig& config, const fs::path& model_dir, const fs::path& manifest, const fs::path& out) {
  const auto& ec = config.settings().eval;
  ec.validate();
  const auto m = open_manifest(manifest);
  auto model = load_model(model_dir);
  make_dir(out);
  std::string bscans = "volume,class,bscan,probability\n";
  std::string volumes = "volume,class,vol_prob\n";
  std::vector<evaluate::VolumeRecord> scored;
  for (const auto& e : m.entries) {
    const auto p = prepare_entry(m, e, ec.preprocess);
    const auto det = evaluate::apply(model, p, ec);
    for (FluidClass c : kFluidClasses) {
      const auto k = class_index(c);
      const std::string name(class_name(c));
      for (std::size_t z = 0; z < det.bscan_prob[k].size(); ++z)
        bscans += e.id + "," + name + "," + std::to_string(z) + "," + fmt(det.bscan_prob[k][z]) + "\n";
      volumes += e.id + "," + name + "," + fmt(det.volume_prob[k]) + "\n";
    }
    if (p.truth_original) scored.push_back(evaluate::score(p, det));
  }
  write_text(out / "bscan_probabilities.csv", bscans);
  write_text(out / "volume_probabilities.csv", volumes);
  std::vector<std::string> outputs{"bscan_probabilities.csv", "volume_probabilities.csv"};
  if (scored.size() == m.entries.size()) {
    evaluate::write_metrics_csv(out / "metrics.csv", scored);
    outputs.push_back("metrics.csv");
  }
  write_run_manifest(out, "detect", config, manifest_input(manifest), outputs);
}

void cmd_eval(const RunConfig& config, const fs::path& manifest, const fs::path& out) {
  const auto m = open_manifest(manifest);
  make_dir(out);
  const auto result =
      evaluate::leave_one_out(m, config.settings().eval, [](const std::string& s) { std::cerr << s << "\n"; });
  evaluate::write_metrics_csv(out / "metrics.csv", result.records);
  evaluate::write_roc_csv(out / "roc.csv", result.summary);
  evaluate::write_folds_csv(out / "folds.csv", result.folds);
  const std::string summary = evaluate::summary_text(result.summary);
  write_text(out / "summary.csv", summary);
  std::cout << summary;
  write_run_manifest(out, "eval", config, manifest_input(manifest),
                     {"metrics.csv", "roc.csv", "folds.csv", "summary.csv"});
}

void cmd_render(const fs::path& volume, const fs::path& mask, const std::optional<fs::path>& truth,
                const fs::path& out) {
  for (const auto& p : {volume, mask})
    if (!fs::exists(p)) throw IoError("'" + p.string() + "' not found");
  if (truth && !fs::exists(*truth)) throw IoError("'" + truth->string() + "' not found");
  const Volume vol = io::read_volume(volume);
  const LabelMask labels = io::read_mask(mask, vol.dims());
  std::optional<LabelMask> gt;
  if (truth) gt = io::read_mask(*truth, vol.dims());
  render_volume(vol, labels, gt, out);
}

void cmd_roc(const fs::path& scores, const fs::path& out_svg) {
  if (!fs::exists(scores)) throw IoError("'" + scores.string() + "' not found");
  const auto records = evaluate::read_metrics_csv(scores);
  std::vector<RocSeries> series;
  std::string skipped;
  for (FluidClass c : kFluidClasses) {
    const auto k = class_index(c);
    std::vector<double> s;
    std::vector<std::uint8_t> l;
    for (const auto& r : records) {
      s.push_back(r.volume_prob[k]);
      l.push_back(r.gt_present[k] ? 1 : 0);
    }
    const bool both = std::count(l.begin(), l.end(), 1) > 0 && std::count(l.begin(), l.end(), 0) > 0;
    if (!both) {
      skipped += " " + std::string(class_name(c));
      continue;
    }
    series.push_back({c, detect::roc_curve(s, l), detect::roc_auc(s, l)});
  }
  if (series.empty()) throw MetricError("no class has both present and absent volumes; ROC is undefined");
  if (!skipped.empty()) std::cerr << "note: single-label classes left out:" << skipped << "\n";
  if (out_svg.has_parent_path()) make_dir(out_svg.parent_path());
  write_text(out_svg, roc_svg(series));
  for (const auto& s : series) std::cout << class_name(s.cls) << " AUC=" << fmt(s.auc) << "\n";
}

}  // namespace octfluid::cli
