#pragma once

// Occlusion saliency: squared change of the cross-entropy loss when a small
// patch of the input is set to zero.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qeclab/geometry.hpp"
#include "qeclab/hld.hpp"
#include "qeclab/model_io.hpp"
#include "qeclab/nn.hpp"

namespace qeclab {

enum class SaliencyReference { Predicted, True };

struct OcclusionConfig {
  int patch_h = 2;
  int patch_w = 2;
  int stride = 1;
  double mask_value = 0.0;
  SaliencyReference reference = SaliencyReference::Predicted;
  std::optional<LogicalClass> true_label;  // required for SaliencyReference::True
  int mask_channel = -1;                   // -1 masks every channel jointly
};

/// Row-major real grid.
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int r, int c, double fill = 0.0) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  double max() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }
  double min() const { return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end()); }
  std::pair<int, int> argmax() const {
    const auto it = std::max_element(values.begin(), values.end());
    const auto i = static_cast<int>(it - values.begin());
    return {i / cols, i % cols};
  }
};

struct SaliencyMap {
  Grid coarse;   // one value per patch position
  Grid full;     // upsampled to the input extent
  int patch_h = 2;
  int patch_w = 2;
  int stride = 1;
  LogicalClass reference = LogicalClass::I;
  LogicalClass predicted = LogicalClass::I;
  std::array<double, 4> probabilities{};
  double base_loss = 0.0;
};

inline int patch_positions(int extent, int patch, int stride) {
  if (patch < 1 || stride < 1) throw std::invalid_argument("patch and stride must be >= 1");
  if (patch > extent) throw std::invalid_argument("patch does not fit the input");
  return (extent - patch) / stride + 1;
}

/// Each input cell takes the maximum over the patch positions covering it;
/// uncovered cells are 0.
inline Grid upsample_overlay(const Grid& coarse, int height, int width, int patch_h, int patch_w, int stride) {
  Grid full(height, width, 0.0);
  for (int i = 0; i < coarse.rows; ++i) {
    for (int j = 0; j < coarse.cols; ++j) {
      const double v = coarse.at(i, j);
      for (int r = i * stride; r < std::min(height, i * stride + patch_h); ++r) {
        for (int c = j * stride; c < std::min(width, j * stride + patch_w); ++c) full.at(r, c) = std::max(full.at(r, c), v);
      }
    }
  }
  return full;
}

inline Grid upsample_overlay(const SaliencyMap& map, const CodeLayout& layout) {
  return upsample_overlay(map.coarse, layout.size(), layout.size(), map.patch_h, map.patch_w, map.stride);
}

/// Saliency at every patch position, evaluated in one batched forward pass.
inline SaliencyMap occlusion_saliency(const ModelFile& model, const InputTensor& input, const OcclusionConfig& cfg = {}) {
  check_input(model.spec, input);
  if (cfg.mask_channel < -1 || cfg.mask_channel >= input.channels) throw std::invalid_argument("mask channel out of range");
  const int rows = patch_positions(input.height, cfg.patch_h, cfg.stride);
  const int cols = patch_positions(input.width, cfg.patch_w, cfg.stride);
  const int positions = rows * cols;
  const std::size_t in_size = input.values.size();
  const std::size_t plane = static_cast<std::size_t>(input.height) * input.width;

  std::vector<double> batch((positions + 1) * in_size);
  std::copy(input.values.begin(), input.values.end(), batch.begin());
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double* x = batch.data() + (1 + i * cols + j) * in_size;
      std::copy(input.values.begin(), input.values.end(), x);
      for (int ch = 0; ch < input.channels; ++ch) {
        if (cfg.mask_channel >= 0 && ch != cfg.mask_channel) continue;
        for (int r = i * cfg.stride; r < i * cfg.stride + cfg.patch_h; ++r) {
          for (int c = j * cfg.stride; c < j * cfg.stride + cfg.patch_w; ++c) {
            x[ch * plane + static_cast<std::size_t>(r) * input.width + c] = cfg.mask_value;
          }
        }
      }
    }
  }
  nn::Network net(model.spec);
  const nn::Matrix& probs = net.forward(model.params, batch, positions + 1);

  SaliencyMap map;
  map.patch_h = cfg.patch_h;
  map.patch_w = cfg.patch_w;
  map.stride = cfg.stride;
  std::vector<double> p0(probs.rows());
  for (Eigen::Index k = 0; k < probs.rows(); ++k) p0[k] = probs(k, 0);
  const Prediction pred = prediction_from(p0);
  map.predicted = pred.cls;
  map.probabilities = pred.probabilities;
  if (cfg.reference == SaliencyReference::True) {
    if (!cfg.true_label) throw std::invalid_argument("true-label saliency needs a label");
    map.reference = *cfg.true_label;
  } else {
    map.reference = pred.cls;
  }
  const int ref = static_cast<int>(map.reference);
  auto loss = [&](int col) { return -std::log(std::max(probs(ref, col), nn::kLogFloor)); };
  map.base_loss = loss(0);
  map.coarse = Grid(rows, cols);
  for (int k = 0; k < positions; ++k) {
    const double diff = map.base_loss - loss(k + 1);
    map.coarse.values[k] = diff * diff;
  }
  map.full = upsample_overlay(map.coarse, input.height, input.width, cfg.patch_h, cfg.patch_w, cfg.stride);
  return map;
}

inline void write_csv(std::ostream& os, const Grid& g) {
  os << std::setprecision(17);
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) os << (c ? "," : "") << g.at(r, c);
    os << "\n";
  }
}

/// Binary 8-bit graymap (P5), scaled so the maximum maps to 255.
inline void write_pgm(std::ostream& os, const Grid& g, int scale = 1) {
  if (scale < 1) throw std::invalid_argument("pgm scale must be >= 1");
  const double hi = g.max();
  os << "P5\n" << g.cols * scale << " " << g.rows * scale << "\n255\n";
  for (int r = 0; r < g.rows * scale; ++r) {
    for (int c = 0; c < g.cols * scale; ++c) {
      const double v = g.at(r / scale, c / scale);
      const auto byte = static_cast<unsigned char>(hi > 0 ? std::lround(255.0 * v / hi) : 0);
      os.put(static_cast<char>(byte));
    }
  }
}

inline nlohmann::json grid_to_json(const Grid& g) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < g.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < g.cols; ++c) row.push_back(g.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json saliency_to_json(const SaliencyMap& m) {
  return {
      {"coarse", grid_to_json(m.coarse)},
      {"upsampled", grid_to_json(m.full)},
      {"patch", {m.patch_h, m.patch_w}},
      {"stride", m.stride},
      {"predicted_class", std::string(to_string(m.predicted))},
      {"reference_class", std::string(to_string(m.reference))},
      {"probabilities", m.probabilities},
      {"max", m.coarse.max()},
      {"min", m.coarse.min()},
  };
}

}  // namespace qeclab
