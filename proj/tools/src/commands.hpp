#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "run_config.hpp"

namespace octfluid::cli {

namespace fs = std::filesystem;

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 2;
inline constexpr int kExitInvalid = 3;

/// Runs a command body and maps failures to exit codes: missing or
/// unreadable inputs give 2, everything else the library rejects gives 3.
int guarded(const std::function<void()>& body);

struct PhantomArgs {
  std::string profile = "spectralis";
  int n = 12;
  std::uint64_t seed = 7;
  fs::path out;
};
void cmd_phantom(const RunConfig& config, const PhantomArgs& args);

/// Motion-corrected volumes, surfaces, shift tables and distance-map
/// heatmaps for every manifest entry.
void cmd_preprocess(const RunConfig& config, const fs::path& manifest, const fs::path& out);

/// Trains network and forests on every manifest entry; writes a model dir.
void cmd_train(const RunConfig& config, const fs::path& manifest, const fs::path& out);

/// Raw network labels per volume, in the original frame.
void cmd_segment(const RunConfig& config, const fs::path& model, const fs::path& manifest, const fs::path& out);

/// Forest-vetted labels per volume plus a scored candidates CSV.
void cmd_vet(const RunConfig& config, const fs::path& model, const fs::path& manifest, const fs::path& out);

/// Per-B-scan and per-volume class probabilities; with truth also the
/// segmentation metrics (metrics CSV layout).
void cmd_detect(const RunConfig& config, const fs::path& model, const fs::path& manifest, const fs::path& out);

/// Leave-one-out over the manifest.
void cmd_eval(const RunConfig& config, const fs::path& manifest, const fs::path& out);

void cmd_render(const fs::path& volume, const fs::path& mask, const std::optional<fs::path>& truth,
                const fs::path& out);

/// ROC SVG from a metrics CSV, one curve per class that has both labels.
void cmd_roc(const fs::path& scores, const fs::path& out_svg);

}  // namespace octfluid::cli
