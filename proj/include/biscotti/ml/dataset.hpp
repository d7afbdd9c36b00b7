#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biscotti/error.hpp"
#include "biscotti/rng.hpp"

namespace biscotti::ml {

/// Labeled examples stored row-major.
struct Dataset {
  std::size_t dim = 0;
  int num_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

  void add(std::span<const double> x, int y) {
    if (x.size() != dim) throw InvalidArgument("feature dimension mismatch");
    if (y < 0 || y >= num_classes) throw InvalidArgument("label out of range");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(y);
  }

  std::size_t count_label(int y) const { return std::size_t(std::count(labels.begin(), labels.end(), y)); }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out{dim, num_classes, {}, {}};
    out.features.reserve(idx.size() * dim);
    for (auto i : idx) out.add(row(i), labels[i]);
    return out;
  }
};

enum class DatasetKind { SyntheticBlobs, SyntheticImages, IdxImages, CsvTabular };

struct DatasetParams {
  std::size_t examples = 1000;
  std::size_t dim = 24;
  int classes = 2;
  /// Relative class frequencies; empty means balanced.
  std::vector<double> class_weights;
  /// Distance of each class mean from the origin, in units of the noise sd.
  double separation = 1.5;
  double noise = 1.0;
  /// Appends a constant 1 feature so linear models get an intercept.
  bool bias_feature = true;
  /// Side length of square synthetic images.
  std::size_t image_side = 12;
  std::string images_path;
  std::string labels_path;
  std::string csv_path;
  /// Cap on loaded examples; 0 loads everything.
  std::size_t limit = 0;
};

namespace detail {

inline int draw_class(Rng& rng, const std::vector<double>& weights, int classes) {
  if (weights.empty()) return int(rng.below(uint64_t(classes)));
  double total = 0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (int c = 0; c < classes; ++c) {
    u -= weights[std::size_t(c)];
    if (u < 0) return c;
  }
  return classes - 1;
}

inline std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline uint32_t be32(std::span<const uint8_t> b, std::size_t off) {
  if (off + 4 > b.size()) throw ParseError("truncated IDX header", off);
  return uint32_t(b[off]) << 24 | uint32_t(b[off + 1]) << 16 | uint32_t(b[off + 2]) << 8 | b[off + 3];
}

}  // namespace detail

/// Gaussian blobs around well-separated class means.
inline Dataset make_synthetic_blobs(const DatasetParams& p, uint64_t seed) {
  if (p.classes < 2 || p.dim == 0) throw InvalidArgument("blobs need >= 2 classes and dim >= 1");
  if (!p.class_weights.empty() && p.class_weights.size() != std::size_t(p.classes))
    throw InvalidArgument("class_weights size must equal classes");
  Rng rng(derive_seed(seed, {0xb10b}));
  std::vector<std::vector<double>> means(std::size_t(p.classes), std::vector<double>(p.dim));
  if (p.classes == 2) {
    double norm = 0;
    for (auto& v : means[0]) {
      v = rng.gaussian();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < p.dim; ++j) {
      means[0][j] = -p.separation * p.noise * means[0][j] / norm;
      means[1][j] = -means[0][j];
    }
  } else {
    for (auto& m : means) {
      double norm = 0;
      for (auto& v : m) {
        v = rng.gaussian();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (auto& v : m) v *= p.separation * p.noise / norm;
    }
  }
  std::size_t dim = p.dim + (p.bias_feature ? 1 : 0);
  Dataset d{dim, p.classes, {}, {}};
  d.features.reserve(p.examples * dim);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < p.examples; ++i) {
    int y = detail::draw_class(rng, p.class_weights, p.classes);
    for (std::size_t j = 0; j < p.dim; ++j) x[j] = means[std::size_t(y)][j] + p.noise * rng.gaussian();
    if (p.bias_feature) x[p.dim] = 1.0;
    d.add(x, y);
  }
  return d;
}

/// Grayscale images in [0, 1]: each class has a prototype made of a few
/// Gaussian bumps; examples add pixel noise and a random brightness factor.
inline Dataset make_synthetic_images(const DatasetParams& p, uint64_t seed) {
  if (p.classes < 2 || p.image_side < 2) throw InvalidArgument("images need >= 2 classes and side >= 2");
  Rng rng(derive_seed(seed, {0x1a6e}));
  std::size_t side = p.image_side, dim = side * side;
  std::vector<std::vector<double>> proto(std::size_t(p.classes), std::vector<double>(dim, 0.0));
  for (auto& img : proto) {
    for (int bump = 0; bump < 3; ++bump) {
      double cx = rng.uniform(0, double(side)), cy = rng.uniform(0, double(side));
      double r = rng.uniform(1.0, double(side) / 3.0);
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
          double dx = double(x) - cx, dy = double(y) - cy;
          img[y * side + x] += std::exp(-(dx * dx + dy * dy) / (2 * r * r));
        }
    }
    double mx = *std::max_element(img.begin(), img.end());
    for (auto& v : img) v /= mx;
  }
  Dataset d{dim, p.classes, {}, {}};
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < p.examples; ++i) {
    int y = detail::draw_class(rng, p.class_weights, p.classes);
    double gain = rng.uniform(0.6, 1.0);
    for (std::size_t j = 0; j < dim; ++j)
      x[j] = std::clamp(gain * proto[std::size_t(y)][j] + p.noise * rng.gaussian(), 0.0, 1.0);
    d.add(x, y);
  }
  return d;
}

/// Parses IDX image (magic 0x00000803) and label (magic 0x00000801) files.
/// Pixels are scaled to [0, 1].
inline Dataset parse_idx(std::span<const uint8_t> images, std::span<const uint8_t> labels, std::size_t limit = 0) {
  if (detail::be32(images, 0) != 0x00000803) throw ParseError("bad IDX image magic", 0);
  if (detail::be32(labels, 0) != 0x00000801) throw ParseError("bad IDX label magic", 0);
  std::size_t n = detail::be32(images, 4), rows = detail::be32(images, 8), cols = detail::be32(images, 12);
  std::size_t nl = detail::be32(labels, 4);
  if (nl != n) throw ParseError("label count does not match image count", 4);
  std::size_t dim = rows * cols;
  if (dim == 0) throw ParseError("empty IDX image dimensions", 8);
  if (images.size() < 16 + n * dim) throw ParseError("truncated IDX image data", images.size());
  if (labels.size() < 8 + n) throw ParseError("truncated IDX label data", labels.size());
  if (limit) n = std::min(n, limit);
  int classes = 0;
  for (std::size_t i = 0; i < n; ++i) classes = std::max(classes, int(labels[8 + i]) + 1);
  Dataset d{dim, std::max(classes, 2), {}, {}};
  d.features.reserve(n * dim);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) x[j] = images[16 + i * dim + j] / 255.0;
    d.add(x, labels[8 + i]);
  }
  return d;
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit = 0) {
  return parse_idx(detail::read_file(images_path), detail::read_file(labels_path), limit);
}

/// Numeric CSV with a header row; the final column is an integer label.
inline Dataset parse_csv(std::string_view text, std::size_t limit = 0) {
  std::size_t pos = text.find('\n');
  if (pos == std::string_view::npos) throw ParseError("missing header row", text.size());
  std::size_t columns = 1;
  for (std::size_t i = 0; i < pos; ++i) columns += text[i] == ',';
  if (columns < 2) throw ParseError("need at least one feature and a label column", 0);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t off = pos + 1;
  while (off < text.size() && (!limit || rows.size() < limit)) {
    std::size_t end = text.find('\n', off);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(off, end - off);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      std::vector<double> vals;
      std::size_t s = 0;
      while (true) {
        std::size_t comma = line.find(',', s);
        std::string_view cell = line.substr(s, comma == std::string_view::npos ? line.size() - s : comma - s);
        while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
        while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
        double v = 0;
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
          throw ParseError("non-numeric CSV cell", off + s);
        vals.push_back(v);
        if (comma == std::string_view::npos) break;
        s = comma + 1;
      }
      if (vals.size() != columns) throw ParseError("wrong number of CSV columns", off);
      double y = vals.back();
      if (y < 0 || y != std::floor(y)) throw ParseError("label must be a non-negative integer", off);
      labels.push_back(int(y));
      vals.pop_back();
      rows.push_back(std::move(vals));
    }
    off = end + 1;
  }
  if (rows.empty()) throw ParseError("no data rows", text.size());
  int classes = 2;
  for (int y : labels) classes = std::max(classes, y + 1);
  Dataset d{columns - 1, classes, {}, {}};
  for (std::size_t i = 0; i < rows.size(); ++i) d.add(rows[i], labels[i]);
  return d;
}

inline Dataset load_csv(const std::string& path, std::size_t limit = 0) {
  auto bytes = detail::read_file(path);
  return parse_csv({reinterpret_cast<const char*>(bytes.data()), bytes.size()}, limit);
}

inline Dataset make_dataset(DatasetKind kind, const DatasetParams& p, uint64_t seed) {
  switch (kind) {
    case DatasetKind::SyntheticBlobs: return make_synthetic_blobs(p, seed);
    case DatasetKind::SyntheticImages: return make_synthetic_images(p, seed);
    case DatasetKind::IdxImages: return load_idx(p.images_path, p.labels_path, p.limit);
    case DatasetKind::CsvTabular: return load_csv(p.csv_path, p.limit);
  }
  throw InvalidArgument("unknown dataset kind");
}

/// Shuffles and splits into `parts` near-equal partitions.
inline std::vector<Dataset> partition(const Dataset& d, std::size_t parts, uint64_t seed) {
  if (parts == 0) throw InvalidArgument("partition count must be positive");
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  std::vector<Dataset> out;
  for (std::size_t p = 0; p < parts; ++p) {
    std::size_t lo = p * idx.size() / parts, hi = (p + 1) * idx.size() / parts;
    out.push_back(d.subset(std::span<const std::size_t>(idx).subspan(lo, hi - lo)));
  }
  return out;
}

}  // namespace biscotti::ml
