#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace octfluid::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw ValidationError("config key '" + key + "': '" + value + "' is not " + want);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad(key, v, "a boolean");
}

std::string show(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
std::string show(bool v) { return v ? "true" : "false"; }
template <typename T>
std::string show(T v) requires std::is_integral_v<T> {
  return std::to_string(v);
}

// Table entry bound to one field reachable from Settings.
template <typename T, typename Access>
KeyInfo field(std::string name, std::string group, std::string help, Access access) {
  KeyInfo k{std::move(name), std::move(group), std::move(help), {}, {}};
  k.set = [access, key = k.name](Settings& s, const std::string& v) {
    T& f = access(s);
    if constexpr (std::is_same_v<T, bool>)
      f = parse_bool(key, v);
    else
      f = parse_number<T>(key, v);
  };
  k.get = [access](const Settings& s) { return show(access(s)); };
  return k;
}

template <typename E, typename Access>
KeyInfo choice(std::string name, std::string group, std::string help,
               std::vector<std::pair<std::string, E>> options, Access access) {
  std::string names;
  for (const auto& [n, _] : options) names += (names.empty() ? "" : " | ") + n;
  KeyInfo k{std::move(name), std::move(group), help + " (" + names + ")", {}, {}};
  k.set = [options, access, key = k.name, names](Settings& s, const std::string& v) {
    for (const auto& [n, e] : options)
      if (n == v) {
        access(s) = e;
        return;
      }
    throw ValidationError("config key '" + key + "': '" + v + "' is not one of " + names);
  };
  k.get = [options, access](const Settings& s) {
    const E cur = access(s);
    for (const auto& [n, e] : options)
      if (e == cur) return n;
    return std::string("?");
  };
  return k;
}

std::vector<KeyInfo> build_keys() {
  using S = Settings;
  std::vector<KeyInfo> k;
  // phantom
  k.push_back(choice<std::string>("phantom.preset", "phantom", "fluid blob preset",
                                  {{"easy", "easy"}, {"standard", "standard"}},
                                  [](auto& s) -> auto& { return s.preset; }));
  k.push_back(field<int>("phantom.width", "phantom", "B-scan width in pixels", [](auto& s) -> auto& { return s.width; }));
  k.push_back(field<int>("phantom.height", "phantom", "B-scan height in pixels", [](auto& s) -> auto& { return s.height; }));
  k.push_back(field<int>("phantom.n_bscans", "phantom", "B-scans per volume, 0 = device default",
                         [](auto& s) -> auto& { return s.n_bscans; }));
  k.push_back(field<double>("phantom.noise", "phantom", "multiplicative speckle amplitude",
                            [](auto& s) -> auto& { return s.noise; }));
  // preprocess
  k.push_back(field<bool>("preprocess.motion", "preprocess", "axial motion correction",
                          [](auto& s) -> auto& { return s.eval.preprocess.motion; }));
  k.push_back(field<double>("preprocess.bv_lambda", "preprocess", "ROF smoothing weight",
                            [](auto& s) -> auto& { return s.eval.preprocess.bv_lambda; }));
  k.push_back(field<int>("preprocess.bv_iters", "preprocess", "ROF iterations, 0 disables smoothing",
                         [](auto& s) -> auto& { return s.eval.preprocess.bv_iters; }));
  k.push_back(field<int>("preprocess.rpe_margin", "preprocess", "minimum RPE depth below the ILM (rows)",
                         [](auto& s) -> auto& { return s.eval.preprocess.layers.rpe_margin; }));
  k.push_back(field<double>("preprocess.topmost_bias", "preprocess", "ILM cost bias toward the top",
                            [](auto& s) -> auto& { return s.eval.preprocess.layers.topmost_bias; }));
  k.push_back(choice<distmap::Form>("preprocess.distmap", "preprocess", "distance map form",
                                    {{"normalized", distmap::Form::NormalizedSpan},
                                     {"signed", distmap::Form::SignedVerbatim}},
                                    [](auto& s) -> auto& { return s.eval.preprocess.form; }));
  // net
  k.push_back(field<int>("net.depth", "net", "pooling levels", [](auto& s) -> auto& { return s.eval.net.depth; }));
  k.push_back(field<int>("net.base_channels", "net", "channels of the first block",
                         [](auto& s) -> auto& { return s.eval.net.base_channels; }));
  k.push_back(field<double>("net.keep_prob", "net", "dropout keep probability",
                            [](auto& s) -> auto& { return s.eval.net.keep_prob; }));
  // train
  k.push_back(field<double>("train.lr", "train", "learning rate",
                            [](auto& s) -> auto& { return s.eval.train.learning_rate; }));
  k.push_back(field<int>("train.epochs", "train", "passes over the B-scans",
                         [](auto& s) -> auto& { return s.eval.train.epochs; }));
  k.push_back(field<int>("train.max_steps", "train", "step cap, 0 = epochs only",
                         [](auto& s) -> auto& { return s.eval.train.max_steps; }));
  k.push_back(field<int>("train.batch_size", "train", "B-scans per step",
                         [](auto& s) -> auto& { return s.eval.train.batch_size; }));
  k.push_back(field<bool>("train.flip", "train", "random horizontal flips",
                          [](auto& s) -> auto& { return s.eval.train.flip; }));
  k.push_back(field<bool>("train.rotate", "train", "random rotations",
                          [](auto& s) -> auto& { return s.eval.train.rotate; }));
  k.push_back(field<bool>("train.zoom", "train", "random zoom", [](auto& s) -> auto& { return s.eval.train.zoom; }));
  k.push_back(field<double>("train.max_rotation_deg", "train", "rotation range in degrees",
                            [](auto& s) -> auto& { return s.eval.train.max_rotation_deg; }));
  k.push_back(field<double>("train.zoom_min", "train", "smallest zoom factor",
                            [](auto& s) -> auto& { return s.eval.train.zoom_min; }));
  k.push_back(field<double>("train.zoom_max", "train", "largest zoom factor",
                            [](auto& s) -> auto& { return s.eval.train.zoom_max; }));
  k.push_back(choice<trainer::Optimizer>("train.optimizer", "train", "update rule",
                                         {{"adam", trainer::Optimizer::Adam}, {"sgd", trainer::Optimizer::Sgd}},
                                         [](auto& s) -> auto& { return s.eval.train.optimizer; }));
  k.push_back(field<double>("train.beta1", "train", "Adam first-moment decay",
                            [](auto& s) -> auto& { return s.eval.train.beta1; }));
  k.push_back(field<double>("train.beta2", "train", "Adam second-moment decay",
                            [](auto& s) -> auto& { return s.eval.train.beta2; }));
  k.push_back(field<double>("train.epsilon", "train", "Adam denominator offset",
                            [](auto& s) -> auto& { return s.eval.train.epsilon; }));
  k.push_back(choice<trainer::LossMaskMode>("train.loss_mask", "train", "pixels entering the loss",
                                            {{"hard", trainer::LossMaskMode::HardPixel},
                                             {"predicted", trainer::LossMaskMode::PredictedOnly},
                                             {"all", trainer::LossMaskMode::AllPixels}},
                                            [](auto& s) -> auto& { return s.eval.train.loss_mask; }));
  k.push_back(field<int>("train.dense_warmup_steps", "train", "leading steps trained on every pixel",
                         [](auto& s) -> auto& { return s.eval.train.dense_warmup_steps; }));
  // forest
  k.push_back(field<int>("forest.n_trees", "forest", "trees per class",
                         [](auto& s) -> auto& { return s.eval.forest.n_trees; }));
  k.push_back(field<int>("forest.max_depth", "forest", "tree depth cap, 0 = unlimited",
                         [](auto& s) -> auto& { return s.eval.forest.max_depth; }));
  k.push_back(field<int>("forest.min_samples_leaf", "forest", "smallest leaf",
                         [](auto& s) -> auto& { return s.eval.forest.min_samples_leaf; }));
  k.push_back(field<int>("forest.features_per_split", "forest", "features tried per split",
                         [](auto& s) -> auto& { return s.eval.forest.features_per_split; }));
  k.push_back(field<bool>("forest.bootstrap", "forest", "bootstrap each tree",
                          [](auto& s) -> auto& { return s.eval.forest.bootstrap; }));
  // eval
  k.push_back(field<int>("eval.min_region", "eval", "smallest candidate region (pixels)",
                         [](auto& s) -> auto& { return s.eval.min_region; }));
  k.push_back(field<int>("eval.top_k", "eval", "B-scans averaged for the volume probability",
                         [](auto& s) -> auto& { return s.eval.top_k; }));
  k.push_back(field<int>("eval.cv_folds", "eval", "folds of the threshold sweep",
                         [](auto& s) -> auto& { return s.eval.cv_folds; }));
  k.push_back(field<double>("eval.fallback_threshold", "eval", "vetting threshold when no sweep is possible",
                            [](auto& s) -> auto& { return s.eval.fallback_threshold; }));
  // run
  k.push_back(field<std::uint64_t>("seed", "run", "master seed", [](auto& s) -> auto& { return s.eval.seed; }));
  KeyInfo warm{"train.warm_start", "train", "checkpoint to start from (empty = fresh network)", {}, {}};
  warm.set = [](S& s, const std::string& v) {
    s.eval.warm_start = v.empty() ? std::nullopt : std::optional<std::filesystem::path>(v);
  };
  warm.get = [](const S& s) { return s.eval.warm_start ? s.eval.warm_start->string() : std::string(); };
  k.push_back(std::move(warm));
  return k;
}

}  // namespace

const std::vector<KeyInfo>& RunConfig::keys() {
  static const std::vector<KeyInfo> table = build_keys();
  return table;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& k : keys())
    if (k.name == key) {
      k.set(settings_, value);
      return;
    }
  throw ValidationError("unknown config key '" + key + "'");
}

void RunConfig::assign(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    assign(line);
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::snapshot() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, k.get(settings_));
  return out;
}

std::string RunConfig::describe(const std::vector<std::string>& groups) {
  const Settings defaults;
  std::ostringstream out;
  out << "Config keys (--set key=value or --config FILE):\n";
  for (const auto& k : keys()) {
    if (std::find(groups.begin(), groups.end(), k.group) == groups.end()) continue;
    std::string line = "  " + k.name + "=" + k.get(defaults);
    if (line.size() < 34) line.resize(34, ' ');
    out << line << " " << k.help << "\n";
  }
  return out.str();
}

phantom::FluidSpec fluid_preset(const std::string& name) {
  if (name == "easy") return phantom::FluidSpec::easy();
  if (name == "standard") return phantom::FluidSpec::standard();
  throw ValidationError("unknown fluid preset '" + name + "'");
}

}  // namespace octfluid::cli
