#pragma once

// Monte Carlo logical error rates. All decoders in one evaluation see the same
// samples (record i of the seed's stream), so comparisons are paired.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qeclab/dataset.hpp"
#include "qeclab/decoders.hpp"
#include "qeclab/hld.hpp"
#include "qeclab/model_io.hpp"
#include "qeclab/parallel.hpp"

namespace qeclab {

enum class DecoderKind { Simple, Mwpm, Hld, AlwaysI };

inline std::string_view to_string(DecoderKind k) {
  switch (k) {
    case DecoderKind::Simple: return "simple";
    case DecoderKind::Mwpm: return "mwpm";
    case DecoderKind::Hld: return "hld";
    case DecoderKind::AlwaysI: return "always-i";
  }
  return "?";
}

inline DecoderKind decoder_from_string(std::string_view s) {
  if (s == "simple") return DecoderKind::Simple;
  if (s == "mwpm") return DecoderKind::Mwpm;
  if (s == "hld") return DecoderKind::Hld;
  if (s == "always-i") return DecoderKind::AlwaysI;
  throw std::invalid_argument("unknown decoder: " + std::string(s));
}

struct EvalPoint {
  std::string decoder;
  int d = 0;
  NoiseConfig noise;
  std::uint64_t n = 0;
  std::uint64_t failures = 0;
  double rate = 0.0;
  double stderr_ = 0.0;
  double accuracy() const { return 1.0 - rate; }
};

inline EvalPoint make_point(std::string decoder, int d, const NoiseConfig& noise, std::uint64_t n,
                            std::uint64_t failures) {
  EvalPoint p{std::move(decoder), d, noise, n, failures, 0.0, 0.0};
  p.rate = n ? static_cast<double>(failures) / static_cast<double>(n) : 0.0;
  p.stderr_ = n ? std::sqrt(p.rate * (1.0 - p.rate) / static_cast<double>(n)) : 0.0;
  return p;
}

/// Per-decoder, per-sample failure flags plus the summary points.
struct PairedOutcome {
  std::vector<EvalPoint> points;
  std::vector<std::vector<std::uint8_t>> failed;  // [decoder][sample]
};

namespace detail {

// Failure of a correction: the residual must have a trivial true syndrome and
// logical class I.
inline bool fails(const PauliError& error, const Correction& correction, const CodeLayout& layout) {
  const PauliError residual = compose(error, correction);
  if (!syndrome_of(residual, layout).trivial()) return true;
  return logical_class(residual, layout) != LogicalClass::I;
}

}  // namespace detail

/// Decoder semantics:
///   simple    simple decoder on the perfect (final) syndrome
///   always-i  the HLD baseline that always predicts I; identical outcomes to simple
///   mwpm      depolarizing: MWPM on the perfect syndrome;
///             phenomenological: MWPM on the last noisy cycle only
///   hld       model prediction on the full input stack, fixed-up simple correction
inline PairedOutcome evaluate_paired(const std::vector<DecoderKind>& decoders, const CodeLayout& layout,
                                     const NoiseConfig& noise, std::uint64_t n, std::uint64_t master_seed,
                                     int threads = 1, const ModelFile* model = nullptr) {
  if (n == 0) throw std::invalid_argument("n_samples must be >= 1");
  if (decoders.empty()) throw std::invalid_argument("no decoders given");
  noise.validate();
  bool need_model = false;
  for (DecoderKind k : decoders) need_model |= k == DecoderKind::Hld;
  if (need_model) {
    if (!model) throw std::invalid_argument("hld decoder needs a model");
    const int size = layout.size();
    if (model->spec.input.channels != noise.channels() || model->spec.input.height != size ||
        model->spec.input.width != size) {
      throw std::invalid_argument("model input shape does not match the evaluation configuration");
    }
  }
  PairedOutcome out;
  out.failed.assign(decoders.size(), std::vector<std::uint8_t>(n, 0));
  const SeedSpec seed{master_seed};
  constexpr std::size_t kBatch = 256;

  parallel_chunks(n, threads, [&](std::size_t lo, std::size_t hi) {
    std::optional<nn::Network> net;
    if (need_model) net.emplace(model->spec);
    std::vector<double> inputs;
    std::vector<Sample> batch;
    for (std::size_t start = lo; start < hi; start += kBatch) {
      const std::size_t end = std::min(hi, start + kBatch);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(draw_sample(layout, noise, seed, i));
      std::vector<LogicalClass> predicted;
      if (need_model) {
        const std::size_t in_size = static_cast<std::size_t>(noise.channels()) * layout.cell_count();
        inputs.resize(batch.size() * in_size);
        for (std::size_t k = 0; k < batch.size(); ++k) {
          const InputTensor t = encode_input(batch[k].syndromes, layout);
          std::copy(t.values.begin(), t.values.end(), inputs.begin() + static_cast<std::ptrdiff_t>(k * in_size));
        }
        const nn::Matrix& probs = net->forward(model->params, inputs, static_cast<int>(batch.size()));
        for (std::size_t k = 0; k < batch.size(); ++k) {
          Eigen::Index arg = 0;
          probs.col(static_cast<Eigen::Index>(k)).maxCoeff(&arg);
          predicted.push_back(logical_class_from_code(static_cast<int>(arg)));
        }
      }
      for (std::size_t k = 0; k < batch.size(); ++k) {
        const Sample& s = batch[k];
        const std::size_t i = start + k;
        for (std::size_t j = 0; j < decoders.size(); ++j) {
          bool f = false;
          switch (decoders[j]) {
            case DecoderKind::Simple:
            case DecoderKind::AlwaysI:
              f = s.label != LogicalClass::I;
              break;
            case DecoderKind::Hld:
              f = predicted[k] != s.label;
              break;
            case DecoderKind::Mwpm:
              f = detail::fails(s.error, mwpm_decode(noise.kind == NoiseKind::Depolarizing
                                                         ? s.syndromes.back()
                                                         : s.syndromes[s.syndromes.size() - 2],
                                                     layout),
                                layout);
              break;
          }
          out.failed[j][i] = f;
        }
      }
    }
  });

  for (std::size_t j = 0; j < decoders.size(); ++j) {
    std::uint64_t failures = 0;
    for (auto f : out.failed[j]) failures += f;
    out.points.push_back(make_point(std::string(to_string(decoders[j])), layout.distance(), noise, n, failures));
  }
  return out;
}

inline EvalPoint logical_error_rate(DecoderKind decoder, const CodeLayout& layout, const NoiseConfig& noise,
                                    std::uint64_t n, std::uint64_t master_seed, int threads = 1,
                                    const ModelFile* model = nullptr) {
  return evaluate_paired({decoder}, layout, noise, n, master_seed, threads, model).points.front();
}

/// Evaluates every decoder at every probability. For phenomenological noise
/// q follows p unless `q_override` is given. Each probability point reuses
/// the same master seed, so decoders stay paired within a point.
inline std::vector<EvalPoint> sweep_curve(const std::vector<DecoderKind>& decoders, const CodeLayout& layout,
                                          NoiseConfig base, const std::vector<double>& probabilities,
                                          std::uint64_t n, std::uint64_t master_seed, int threads = 1,
                                          const ModelFile* model = nullptr, std::optional<double> q_override = {}) {
  if (probabilities.empty()) throw std::invalid_argument("probability list is empty");
  std::vector<EvalPoint> rows;
  for (double p : probabilities) {
    NoiseConfig noise = base;
    noise.p = p;
    if (noise.kind == NoiseKind::Phenomenological) noise.q = q_override.value_or(p);
    auto r = evaluate_paired(decoders, layout, noise, n, master_seed, threads, model);
    rows.insert(rows.end(), r.points.begin(), r.points.end());
  }
  return rows;
}

inline constexpr const char* kEvalCsvHeader = "decoder,d,p,q,cycles,n,rate,stderr,accuracy";

inline void write_eval_csv(std::ostream& os, const std::vector<EvalPoint>& rows) {
  os << kEvalCsvHeader << "\n";
  std::ostringstream line;
  for (const auto& r : rows) {
    line.str("");
    line << std::setprecision(12) << r.decoder << "," << r.d << "," << r.noise.p << ","
         << (r.noise.kind == NoiseKind::Depolarizing ? 0.0 : r.noise.q) << ","
         << (r.noise.kind == NoiseKind::Depolarizing ? 1 : r.noise.cycles) << "," << r.n << "," << r.rate << ","
         << r.stderr_ << "," << r.accuracy() << "\n";
    os << line.str();
  }
}

/// Standard error of the difference of two paired failure-rate estimates.
inline double paired_difference_stderr(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("paired vectors must match and be non-empty");
  const double n = static_cast<double>(a.size());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d;
    sum_sq += d * d;
  }
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return std::sqrt(var / n);
}

}  // namespace qeclab
