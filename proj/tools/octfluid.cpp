// octfluid: phantom generation, preprocessing, training, segmentation,
// vetting, detection, evaluation and figures for retinal OCT fluid.
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace octfluid;
using namespace octfluid::cli;

namespace {

struct Common {
  std::vector<std::string> sets;
  std::string config_file;
};

// --config/--set on a subcommand, with the keys it reads listed in --help.
void add_config(CLI::App* cmd, Common& c, const std::vector<std::string>& groups) {
  cmd->add_option("--config", c.config_file, "key=value config file");
  cmd->add_option("--set", c.sets, "override one config key (repeatable)")->type_name("KEY=VALUE");
  cmd->footer(RunConfig::describe(groups));
}

RunConfig resolve(const Common& c) {
  RunConfig rc;
  if (!c.config_file.empty()) rc.load(c.config_file);
  for (const auto& s : c.sets) rc.assign(s);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retinal OCT fluid segmentation and detection"};
  app.require_subcommand(1);
  Common common;
  int status = kExitOk;
  const std::vector<std::string> all = {"preprocess", "net", "train", "forest", "eval", "run"};

  PhantomArgs ph;
  auto* phantom = app.add_subcommand("phantom", "generate a synthetic dataset with ground truth");
  phantom->add_option("--profile", ph.profile, "device profile (cirrus | spectralis | topcon)")->capture_default_str();
  phantom->add_option("--n", ph.n, "number of volumes")->capture_default_str();
  phantom->add_option("--seed", ph.seed, "dataset seed")->capture_default_str();
  phantom->add_option("--out", ph.out, "output directory")->required();
  add_config(phantom, common, {"phantom"});
  phantom->callback([&] { status = guarded([&] { cmd_phantom(resolve(common), ph); }); });

  fs::path manifest, out, model;
  auto with_manifest = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", manifest, "dataset manifest")->required();
    cmd->add_option("--out", out, "output directory")->required();
  };

  auto* pre = app.add_subcommand("preprocess", "motion-correct, smooth and segment layers");
  with_manifest(pre);
  add_config(pre, common, {"preprocess"});
  pre->callback([&] { status = guarded([&] { cmd_preprocess(resolve(common), manifest, out); }); });

  auto* train = app.add_subcommand("train", "train network and forests on every manifest volume");
  with_manifest(train);
  add_config(train, common, all);
  train->callback([&] { status = guarded([&] { cmd_train(resolve(common), manifest, out); }); });

  auto with_model = [&](CLI::App* cmd) {
    cmd->add_option("--model", model, "model directory written by train")->required();
    with_manifest(cmd);
  };
  auto* seg = app.add_subcommand("segment", "network labels for every manifest volume");
  with_model(seg);
  add_config(seg, common, {"preprocess"});
  seg->callback([&] { status = guarded([&] { cmd_segment(resolve(common), model, manifest, out); }); });

  auto* vet = app.add_subcommand("vet", "forest-vetted labels and scored candidates");
  with_model(vet);
  add_config(vet, common, {"preprocess", "eval"});
  vet->callback([&] { status = guarded([&] { cmd_vet(resolve(common), model, manifest, out); }); });

  auto* det = app.add_subcommand("detect", "B-scan and volume fluid probabilities");
  with_model(det);
  add_config(det, common, {"preprocess", "eval"});
  det->callback([&] { status = guarded([&] { cmd_detect(resolve(common), model, manifest, out); }); });

  auto* eval = app.add_subcommand("eval", "leave-one-out evaluation");
  with_manifest(eval);
  add_config(eval, common, all);
  eval->callback([&] { status = guarded([&] { cmd_eval(resolve(common), manifest, out); }); });

  fs::path volume, mask;
  std::optional<fs::path> truth;
  auto* render = app.add_subcommand("render", "overlay PPMs: IRF red, SRF yellow, PED blue");
  render->add_option("--volume", volume, "volume file")->required();
  render->add_option("--mask", mask, "label mask to overlay")->required();
  render->add_option("--truth", truth, "ground truth shown on the left");
  render->add_option("--out", out, "output directory")->required();
  render->callback([&] { status = guarded([&] { cmd_render(volume, mask, truth, out); }); });

  fs::path scores;
  auto* roc = app.add_subcommand("roc", "ROC curves with AUCs from a metrics CSV");
  roc->add_option("--scores", scores, "metrics CSV (eval or detect output)")->required();
  roc->add_option("--out", out, "SVG path")->required();
  roc->callback([&] { status = guarded([&] { cmd_roc(scores, out); }); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }
  return status;
}
