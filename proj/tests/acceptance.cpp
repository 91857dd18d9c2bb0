// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Tolerances and workloads are fixed here, not configurable.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "octfluid/detect.hpp"
#include "octfluid/evaluate.hpp"
#include "octfluid/forest.hpp"
#include "octfluid/phantom.hpp"
#include "octfluid/pipeline.hpp"
#include "octfluid/preproc.hpp"
#include "octfluid/regions.hpp"
#include "oracles.hpp"

using namespace octfluid;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

phantom::DeviceProfile desk_profile() {
  auto p = phantom::DeviceProfile::named("spectralis");
  p.width = 64;
  p.height = 64;
  p.n_bscans = 16;
  return p;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const double ops = gradcheck::op_suite(2024);
  const double net = gradcheck::unet_check(2, 16, SIZE_MAX, 7);
  const double secs = seconds_since(t0);
  const double worst = std::max(ops, net);
  return {worst < 1e-4 && secs < 120.0, "ops " + fmt("%.2e", ops) + ", U-Net(base 2) " + fmt("%.2e", net) +
                                            " < 1e-4; " + fmt("%.1f", secs) + " s < 120 s"};
}

Outcome overfit_gate() {
  const auto t0 = Clock::now();
  const auto ph = phantom::generate_volume(1, desk_profile(), phantom::FluidSpec::easy());
  const auto prepared = pipeline::prepare("overfit", ph.volume, ph.mask, {});
  std::vector<trainer::Sample> samples;
  for (auto& s : pipeline::make_samples(prepared)) {
    const bool fluid = std::any_of(s.labels.begin(), s.labels.end(), [](std::uint8_t l) { return l != 0; });
    if (fluid && samples.size() < 4) samples.push_back(std::move(s));
  }
  if (samples.size() < 4) return {false, "phantom has fewer than 4 fluid B-scans"};

  // A capacity test: the network must be able to memorise four scans, so
  // the regularisers (dropout, augmentation) are off.
  unet::NetConfig nc;
  nc.base_channels = 8;
  nc.keep_prob = 1.0;
  auto net = unet::Network::build(nc, 1);
  trainer::TrainConfig tc;
  tc.learning_rate = 1e-4;
  tc.max_steps = 600;
  tc.batch_size = 4;
  tc.flip = tc.rotate = tc.zoom = false;
  double best = 0.0;
  std::int64_t reached = -1;
  trainer::train(net, samples, tc, [&](std::int64_t step, double) {
    if (reached >= 0 || step % 25 != 0) return;
    best = std::max(best, trainer::fluid_dice(net, samples));
    if (best >= 0.95) reached = step;
  });
  const double secs = seconds_since(t0);
  return {reached >= 0 && secs < 300.0,
          "fluid-Dice " + fmt("%.4f", best) + (reached >= 0 ? " >= 0.95 at step " + std::to_string(reached) : " < 0.95") +
              " (limit 600); " + fmt("%.1f", secs) + " s < 300 s"};
}

evaluate::EvalConfig loo_config() {
  evaluate::EvalConfig c;
  c.net.base_channels = 8;
  c.net.keep_prob = 1.0;
  c.train.learning_rate = 1e-3;
  c.train.max_steps = 1500;
  c.train.dense_warmup_steps = 1000;
  c.train.flip = c.train.rotate = c.train.zoom = false;
  c.seed = 1;
  return c;
}

struct LooRun {
  evaluate::LooResult result;
  double seconds = 0.0;
};

LooRun run_loo(const fs::path& dir, bool verbose) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto manifest = phantom::generate_dataset(7, desk_profile(), phantom::FluidSpec::easy(), 12, dir / "data");
  const auto t0 = Clock::now();
  evaluate::LogFn log;
  if (verbose) log = [](const std::string& s) { std::fprintf(stderr, "    %s\n", s.c_str()); };
  LooRun run{evaluate::leave_one_out(manifest, loo_config(), log), 0.0};
  run.seconds = seconds_since(t0);
  evaluate::write_metrics_csv(dir / "metrics.csv", run.result.records);
  evaluate::write_roc_csv(dir / "roc.csv", run.result.summary);
  evaluate::write_folds_csv(dir / "folds.csv", run.result.folds);
  std::ofstream(dir / "summary.csv") << evaluate::summary_text(run.result.summary);
  return run;
}

Outcome loo_outcome(const LooRun& run) {
  bool pass = run.seconds < 1800.0;
  std::string d;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& s = run.result.summary[k];
    const bool dice_ok = s.dice.n > 0 && s.dice.mean >= 0.60;
    const bool auc_ok = s.auc && *s.auc >= 0.90;
    pass = pass && dice_ok && auc_ok;
    d += std::string(class_name(kFluidClasses[k])) + " Dice " + fmt("%.3f", s.dice.mean) + " (n=" +
         std::to_string(s.dice.n) + ") AUC " + (s.auc ? fmt("%.3f", *s.auc) : std::string("n/a")) + "; ";
  }
  return {pass, d + "need Dice >= 0.60, AUC >= 0.90; " + fmt("%.0f", run.seconds) + " s < 1800 s"};
}

Outcome oracle_equivalences() {
  std::size_t mismatches = 0;
  // Components on every 4x4 binary image.
  for (int bits = 0; bits < (1 << 16); ++bits) {
    std::vector<std::uint8_t> img(16);
    for (int i = 0; i < 16; ++i) img[std::size_t(i)] = std::uint8_t((bits >> i) & 1);
    const auto c = regions::components_8(img, 4, 4);
    if (std::set<std::vector<int>>(c.begin(), c.end()) != oracle::flood_fill_components(img, 4, 4)) ++mismatches;
  }
  const std::size_t comp_bad = mismatches;

  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double auc_err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + gen() % 50;
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = t % 2 ? double(gen() % 9) / 8.0 : uni(gen);
      l[i] = std::uint8_t(gen() % 2);
    }
    l[0] = 0;
    l[1] = 1;
    auc_err = std::max(auc_err, std::abs(detect::roc_auc(s, l) - oracle::concordance_auc(s, l)));
  }

  std::size_t sweep_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + gen() % 80;
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = t % 3 == 0 ? double(gen() % 101) / 100.0 : uni(gen);
      l[i] = std::uint8_t(uni(gen) < s[i]);
    }
    const auto got = forest::best_threshold(s, l);
    const auto want = oracle::exhaustive_threshold(s, l);
    if (got.threshold != want.threshold || std::abs(got.f_measure - want.f) > 1e-12) ++sweep_bad;
  }

  std::size_t dp_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const int w = 1 + int(gen() % 6), h = 2 + int(gen() % 7);
    std::vector<double> cost(std::size_t(w * h));
    for (auto& c : cost) c = double(gen() % 10);
    const auto b = oracle::brute_force_path(cost, w, h);
    const auto p = preproc::min_cost_path(cost, std::size_t(w), std::size_t(h));
    if (p.cost != b.cost || std::find(b.optima.begin(), b.optima.end(), p.rows) == b.optima.end()) ++dp_bad;
  }

  std::size_t topk_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> p(1 + gen() % 49);
    for (auto& v : p) v = uni(gen);
    if (std::abs(detect::volume_probability(p, 10) - oracle::top_k_mean(p, 10)) > 1e-12) ++topk_bad;
  }

  const bool pass = comp_bad == 0 && auc_err <= 1e-12 && sweep_bad == 0 && dp_bad == 0 && topk_bad == 0;
  return {pass, "components " + std::to_string(comp_bad) + "/65536 mismatches; AUC max |diff| " + fmt("%.1e", auc_err) +
                    " <= 1e-12; sweep " + std::to_string(sweep_bad) + "/1000; DP " + std::to_string(dp_bad) +
                    "/1000; top-10 " + std::to_string(topk_bad) + "/1000"};
}

Outcome formula_checks() {
  using namespace autograd;
  Tape t;
  const Var p = t.input(Tensor(Shape{1, 4, 3, 5}, 0.25));
  const std::vector<std::uint8_t> labels = {0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2};
  const std::vector<std::uint8_t> mask(15, 1);
  const double loss = t.value(masked_cross_entropy(t, p, labels, mask))[0];
  const bool loss_ok = std::abs(loss - std::log(4.0)) <= 1e-9;

  const auto w = forest::ClassWeights::from_counts(10, 90);
  const bool w_ok = std::abs(w.w_pos - 0.9) <= 1e-12 && std::abs(w.w_neg - 0.1) <= 1e-12;

  const std::vector<int> big = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, inner = {3, 4, 5};
  const double r = regions::overlap_ratio(big, inner);

  const std::vector<float> ilm = {4.0F, 7.5F}, rpe = {20.0F, 19.0F};
  const auto m = distmap::relative_distance_map(ilm, rpe, 2, 32);
  const bool d_ok = m.at(0, 4) == 0.0 && m.at(0, 20) == 1.0 && std::abs(m.at(1, 19) - 1.0) < 1e-12;

  const bool pass = loss_ok && w_ok && r == 1.0 && d_ok;
  return {pass, "loss " + fmt("%.12f", loss) + " vs ln4 " + fmt("%.12f", std::log(4.0)) + " (+-1e-9); weights (" +
                    fmt("%.3f", w.w_pos) + ", " + fmt("%.3f", w.w_neg) + "); nested r = " + fmt("%.3f", r) +
                    "; distance map endpoints " + (d_ok ? "0/1" : "wrong")};
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  return sa == sb;
}

Outcome determinism(const fs::path& a, const fs::path& b, double second_run_secs) {
  std::string d;
  bool pass = true;
  for (const char* f : {"metrics.csv", "roc.csv", "folds.csv", "summary.csv"}) {
    const bool same = same_bytes(a / f, b / f);
    pass = pass && same;
    d += std::string(f) + (same ? " identical; " : " DIFFERS; ");
  }
  // Checkpoint round-trip.
  unet::NetConfig nc;
  nc.base_channels = 4;
  auto net = unet::Network::build(nc, 3);
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (auto& p : net.parameters())
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += 0.01 * uni(gen);
  autograd::Tensor x(autograd::Shape{2, 2, 49, 64});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = uni(gen);
  net.save(b / "ckpt.octw");
  auto back = unet::Network::load(b / "ckpt.octw");
  const bool ck = net.predict(x) == back.predict(x);
  pass = pass && ck;
  return {pass, d + "checkpoint forward " + (ck ? "bit-exact" : "DIFFERS") + "; second run " +
                    fmt("%.0f", second_run_secs) + " s"};
}

Outcome preprocessing_properties() {
  std::mt19937_64 gen(50);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::size_t rises = 0;
  double worst_rise = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t w = 8 + gen() % 40, h = 8 + gen() % 40;
    const double lambda = 0.01 + 0.3 * uni(gen);
    std::vector<double> f(w * h);
    for (auto& v : f) v = uni(gen);
    preproc::RofTrace trace;
    preproc::rof_denoise(f, w, h, lambda, 200, &trace);
    double prev = preproc::rof_energy(f, f, w, h, lambda);
    for (double e : trace.energies) {
      worst_rise = std::max(worst_rise, e - prev);
      if (e > prev + 1e-9) ++rises;
      prev = e;
    }
  }

  std::size_t hit = 0, total = 0;
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    const auto ph = phantom::generate_volume(seed, desk_profile(), phantom::FluidSpec::standard());
    const auto r = preproc::motion_correct(ph.volume);
    for (std::size_t z = 0; z < ph.jitter.size(); ++z) {
      hit += r.table.shifts[z] == -ph.jitter[z] ? 1 : 0;
      ++total;
    }
  }
  const double rate = double(hit) / double(total);
  return {rises == 0 && rate >= 0.95, "ROF energy rises > 1e-9: " + std::to_string(rises) + " (largest rise " +
                                          fmt("%.1e", worst_rise) + "); shifts recovered on " + std::to_string(hit) +
                                          "/" + std::to_string(total) + " B-scans (" + fmt("%.1f", 100 * rate) +
                                          "% >= 95%)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"octfluid acceptance suite"};
  std::vector<int> only;
  std::string workdir = (fs::temp_directory_path() / "octfluid_acceptance").string();
  bool verbose = false;
  app.add_option("--only", only, "Run only these criteria (1-7)");
  app.add_option("--workdir", workdir, "Scratch directory for the leave-one-out runs");
  app.add_flag("-v,--verbose", verbose, "Log leave-one-out progress to stderr");
  CLI11_PARSE(app, argc, argv);
  auto selected = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  if (selected(1)) report(1, "gradient suite", gradient_suite);
  if (selected(2)) report(2, "overfit gate", overfit_gate);
  const fs::path run_a = fs::path(workdir) / "loo_a", run_b = fs::path(workdir) / "loo_b";
  if (selected(3) || selected(6)) report(3, "phantom leave-one-out", [&] { return loo_outcome(run_loo(run_a, verbose)); });
  if (selected(4)) report(4, "oracle equivalences", oracle_equivalences);
  if (selected(5)) report(5, "formula checks", formula_checks);
  if (selected(6))
    report(6, "determinism", [&] {
      const LooRun again = run_loo(run_b, verbose);
      return determinism(run_a, run_b, again.seconds);
    });
  if (selected(7)) report(7, "preprocessing properties", preprocessing_properties);
  std::printf("%s: %d failed\n", failures ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED", failures);
  return failures ? 1 : 0;
}
