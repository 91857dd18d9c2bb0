#include "figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace octfluid::cli {

std::array<std::uint8_t, 3> class_color(FluidClass c) {
  switch (c) {
    case FluidClass::IRF: return {255, 0, 0};
    case FluidClass::SRF: return {255, 255, 0};
    case FluidClass::PED: return {0, 0, 255};
    default: break;
  }
  throw ValidationError("background has no overlay color");
}

Rgb overlay(std::span<const float> bscan, std::span<const std::uint8_t> labels, int width, int height) {
  const std::size_t n = std::size_t(width) * height;
  if (bscan.size() != n || labels.size() != n) throw DimensionError("overlay: image and labels differ in size");
  Rgb img{width, height, std::vector<std::uint8_t>(3 * n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double g = std::clamp(double(bscan[i]), 0.0, 1.0) * 255.0;
    std::uint8_t* px = img.pixels.data() + 3 * i;
    if (labels[i] == 0) {
      px[0] = px[1] = px[2] = std::uint8_t(std::lround(g));
      continue;
    }
    if (labels[i] > 3) throw ValidationError("overlay: label " + std::to_string(labels[i]) + " out of range");
    const auto c = class_color(FluidClass(labels[i]));
    for (int ch = 0; ch < 3; ++ch) px[ch] = std::uint8_t(std::lround(0.5 * g + 0.5 * c[std::size_t(ch)]));
  }
  return img;
}

Rgb side_by_side(const Rgb& left, const Rgb& right) {
  if (left.height != right.height) throw DimensionError("side_by_side: heights differ");
  Rgb out{left.width + right.width, left.height, {}};
  out.pixels.reserve(3 * std::size_t(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    const auto* a = left.pixels.data() + 3 * std::size_t(y) * left.width;
    const auto* b = right.pixels.data() + 3 * std::size_t(y) * right.width;
    out.pixels.insert(out.pixels.end(), a, a + 3 * left.width);
    out.pixels.insert(out.pixels.end(), b, b + 3 * right.width);
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Rgb& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), std::streamsize(image.pixels.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Rgb read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string magic;
  int maxval = 0;
  Rgb img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P6" || maxval != 255 || img.width <= 0 || img.height <= 0)
    throw FormatError("'" + path.string() + "' is not an 8-bit binary PPM");
  in.get();
  img.pixels.resize(3 * std::size_t(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
  if (!in) throw IoError("'" + path.string() + "' is truncated");
  return img;
}

std::vector<std::filesystem::path> render_volume(const Volume& volume, const LabelMask& labels,
                                                 const std::optional<LabelMask>& truth,
                                                 const std::filesystem::path& out_dir) {
  require_same_dims(volume, labels);
  if (truth) require_same_dims(volume, *truth);
  std::filesystem::create_directories(out_dir);
  const int w = int(volume.width()), h = int(volume.height());
  std::vector<std::filesystem::path> written;
  for (std::size_t z = 0; z < volume.n_bscans(); ++z) {
    Rgb img = overlay(volume.bscan(z), labels.bscan(z), w, h);
    if (truth) img = side_by_side(overlay(volume.bscan(z), truth->bscan(z), w, h), img);
    char name[32];
    std::snprintf(name, sizeof name, "bscan_%03zu.ppm", z);
    write_ppm(out_dir / name, img);
    written.push_back(out_dir / name);
  }
  return written;
}

std::string roc_svg(std::span<const RocSeries> series) {
  constexpr int kSize = 400, kMargin = 50;
  const auto px = [](double v) { return kMargin + v * kSize; };
  const auto py = [](double v) { return kMargin + (1.0 - v) * kSize; };
  std::ostringstream out;
  char buf[96];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize + 2 * kMargin << "\" height=\""
      << kSize + 2 * kMargin << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" fill=\"white\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  out << "<text x=\"" << kMargin + kSize / 2 << "\" y=\"" << kSize + 2 * kMargin - 12
      << "\" text-anchor=\"middle\">false positive rate</text>\n";
  out << "<text x=\"14\" y=\"" << kMargin + kSize / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << kMargin + kSize / 2 << ")\">true positive rate</text>\n";
  int row = 0;
  for (const auto& s : series) {
    const auto c = class_color(s.cls);
    std::snprintf(buf, sizeof buf, "rgb(%d,%d,%d)", c[0], c[1], c[2]);
    const std::string color = buf;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : s.points) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(p.fpr), py(p.tpr));
      out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof buf, "%s AUC=%.3f", std::string(class_name(s.cls)).c_str(), s.auc);
    const double ly = py(0) - 12 - 18.0 * (double(series.size()) - 1 - row);
    out << "<line x1=\"" << px(0.55) << "\" y1=\"" << ly - 4 << "\" x2=\"" << px(0.62) << "\" y2=\"" << ly - 4
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << px(0.64) << "\" y=\"" << ly << "\">" << buf << "</text>\n";
    ++row;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace octfluid::cli
