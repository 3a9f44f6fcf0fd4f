#pragma once

// High-level decoder: a classifier that predicts the logical class left
// behind by the simple decoder, plus the architecture tables it is built from.

#include <array>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qeclab/decoders.hpp"
#include "qeclab/geometry.hpp"
#include "qeclab/model_io.hpp"
#include "qeclab/nn.hpp"
#include "qeclab/noise.hpp"

namespace qeclab {

struct ArchitectureEntry {
  int distance = 0;
  NoiseKind noise = NoiseKind::Depolarizing;
  int conv_layers = 0;
  int dense_layers = 0;
  int dense_width = 0;
  double published_params = 0.0;  // published total, 0 for extrapolated entries
  bool extrapolated() const { return published_params == 0.0; }
};

inline const std::vector<ArchitectureEntry>& architecture_table() {
  static const std::vector<ArchitectureEntry> table = {
      {3, NoiseKind::Depolarizing, 2, 1, 128, 0.0},
      {5, NoiseKind::Depolarizing, 2, 1, 256, 0.0},
      {7, NoiseKind::Depolarizing, 3, 1, 512, 2.7e6},
      {9, NoiseKind::Depolarizing, 4, 1, 1024, 8.0e6},
      {11, NoiseKind::Depolarizing, 6, 2, 1024, 9.2e6},
      {3, NoiseKind::Phenomenological, 2, 1, 128, 0.0},
      {5, NoiseKind::Phenomenological, 2, 1, 256, 0.0},
      {7, NoiseKind::Phenomenological, 3, 2, 1024, 6.4e6},
      {9, NoiseKind::Phenomenological, 3, 2, 1024, 12.2e6},
      {11, NoiseKind::Phenomenological, 4, 2, 512, 7.7e6},
  };
  return table;
}

inline std::optional<ArchitectureEntry> find_architecture(int d, NoiseKind kind) {
  for (const auto& e : architecture_table()) {
    if (e.distance == d && e.noise == kind) return e;
  }
  return std::nullopt;
}

inline int input_channels(NoiseKind kind, int cycles) {
  if (kind == NoiseKind::Depolarizing) return 1;
  if (cycles < 1) throw std::invalid_argument("cycles must be >= 1");
  return cycles + 1;
}

/// 64 3x3 filters per conv layer, the first 'same'-padded and the rest
/// 'valid'; `dilated` sets dilation 2 on every conv layer after the first.
inline nn::ModelSpec build_cnn(int d, NoiseKind kind, bool dilated, int cycles = 3) {
  const auto entry = find_architecture(d, kind);
  if (!entry) {
    throw std::invalid_argument("no architecture for d=" + std::to_string(d) + " noise=" + std::string(to_string(kind)));
  }
  const int n = 2 * d - 1;
  nn::ModelSpec spec;
  spec.input = {input_channels(kind, cycles), n, n};
  for (int l = 0; l < entry->conv_layers; ++l) {
    nn::Conv2D c;
    c.padding = l == 0 ? nn::Padding::Same : nn::Padding::Valid;
    c.dilation = (dilated && l > 0) ? 2 : 1;
    spec.layers.push_back(c);
    spec.layers.push_back(nn::Activation{nn::ActivationKind::Relu});
  }
  spec.layers.push_back(nn::Flatten{});
  for (int l = 0; l < entry->dense_layers; ++l) {
    spec.layers.push_back(nn::Dense{entry->dense_width});
    spec.layers.push_back(nn::Activation{nn::ActivationKind::Relu});
  }
  spec.layers.push_back(nn::Dense{4});
  spec.layers.push_back(nn::Activation{nn::ActivationKind::Softmax});
  nn::validate(spec);
  return spec;
}

inline nn::ModelSpec build_ffnn(int d, const std::array<int, 3>& widths, int channels = 1) {
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument("ffnn widths must be positive");
  }
  const int n = 2 * d - 1;
  nn::ModelSpec spec;
  spec.input = {channels, n, n};
  spec.layers.push_back(nn::Flatten{});
  for (int w : widths) {
    spec.layers.push_back(nn::Dense{w});
    spec.layers.push_back(nn::Activation{nn::ActivationKind::Relu});
  }
  spec.layers.push_back(nn::Dense{4});
  spec.layers.push_back(nn::Activation{nn::ActivationKind::Softmax});
  nn::validate(spec);
  return spec;
}

/// Machine-readable listing of the architecture table, one entry per line.
inline std::string architecture_manifest() {
  std::ostringstream os;
  os << "# d noise conv_layers dense_layers dense_width params params_dilated published_params\n";
  for (const auto& e : architecture_table()) {
    os << e.distance << " " << to_string(e.noise) << " " << e.conv_layers << " " << e.dense_layers << " "
       << e.dense_width << " " << nn::param_count(build_cnn(e.distance, e.noise, false)) << " "
       << nn::param_count(build_cnn(e.distance, e.noise, true)) << " ";
    if (e.extrapolated()) {
      os << "-";
    } else {
      os << e.published_params;
    }
    os << "\n";
  }
  return os.str();
}

struct Prediction {
  std::array<double, 4> probabilities{};
  LogicalClass cls = LogicalClass::I;
};

inline void check_input(const nn::ModelSpec& spec, const InputTensor& input) {
  if (input.channels != spec.input.channels || input.height != spec.input.height || input.width != spec.input.width) {
    throw std::invalid_argument("input tensor shape does not match the model");
  }
}

inline Prediction prediction_from(std::span<const double> probs) {
  if (probs.size() != 4) throw std::invalid_argument("model must have 4 output classes");
  Prediction p;
  int best = 0;
  for (int k = 0; k < 4; ++k) {
    p.probabilities[k] = probs[k];
    if (probs[k] > probs[best]) best = k;
  }
  p.cls = logical_class_from_code(best);
  return p;
}

inline Prediction predict(const ModelFile& model, const InputTensor& input) {
  check_input(model.spec, input);
  return prediction_from(nn::forward(model.spec, model.params, input.values));
}

/// Simple-decoder correction for `final_syndrome`, fixed up by the logical
/// representative of `predicted`.
inline Correction hld_correction(const Syndrome& final_syndrome, const CodeLayout& layout, LogicalClass predicted) {
  Correction c = simple_decode(final_syndrome, layout);
  c *= logical_operator(predicted, layout);
  return c;
}

struct HldDecodeResult {
  Correction correction;
  Prediction prediction;
};

/// `syndromes` is the model input stack; its last entry must be the perfect
/// syndrome the simple decoder acts on.
inline HldDecodeResult decode_full_detailed(const std::vector<Syndrome>& syndromes, const CodeLayout& layout,
                                            const ModelFile& model) {
  if (syndromes.empty()) throw std::invalid_argument("decode_full needs the final syndrome");
  const Prediction pred = predict(model, encode_input(syndromes, layout));
  return {hld_correction(syndromes.back(), layout, pred.cls), pred};
}

inline Correction decode_full(const std::vector<Syndrome>& syndromes, const CodeLayout& layout,
                              const ModelFile& model) {
  return decode_full_detailed(syndromes, layout, model).correction;
}

struct TrainingStage {
  std::string name;
  const nn::SampleSource* train_set = nullptr;
  nn::TrainConfig config;
  const nn::SampleSource* eval_set = nullptr;
};

struct ProtocolResult {
  nn::Parameters params;
  std::vector<std::vector<nn::EpochStats>> histories;
};

/// Runs the stages in order, each warm-starting from the previous stage's
/// weights. The first stage uses its own init_parameters if set.
inline ProtocolResult train_protocol(const nn::ModelSpec& spec, const std::vector<TrainingStage>& stages,
                                     const nn::EpochCallback& on_epoch = {}) {
  if (stages.empty()) throw std::invalid_argument("train_protocol needs at least one stage");
  for (const auto& st : stages) {
    if (!st.train_set) throw std::invalid_argument("stage '" + st.name + "' has no training set");
    if (!(st.train_set->shape() == spec.input)) {
      throw std::invalid_argument("stage '" + st.name + "' dataset shape does not match the model");
    }
  }
  ProtocolResult out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    nn::TrainConfig cfg = stages[i].config;
    if (i > 0) cfg.init_parameters = &out.params;
    nn::TrainResult r = nn::train(spec, *stages[i].train_set, cfg, stages[i].eval_set, on_epoch);
    out.params = std::move(r.params);
    out.histories.push_back(std::move(r.history));
  }
  return out;
}

}  // namespace qeclab
