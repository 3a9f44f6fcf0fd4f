#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qeclab/geometry.hpp"

namespace qeclab {

/// splitmix64 finalizer.
inline constexpr std::uint64_t avalanche(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based seeding: the stream for record `index` depends only on
/// (master_seed, stream, index), never on scheduling.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream = 0;

  std::uint64_t record_seed(std::uint64_t index) const {
    std::uint64_t h = avalanche(master_seed + 0x9e3779b97f4a7c15ULL);
    h = avalanche(h ^ (stream * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL));
    return avalanche(h + index * 0x9e3779b97f4a7c15ULL);
  }
  SeedSpec substream(std::uint64_t tag) const { return {master_seed, avalanche(stream ^ (tag + 1))}; }
};

using Rng = std::mt19937_64;

inline Rng record_rng(const SeedSpec& seed, std::uint64_t index) { return Rng(seed.record_seed(index)); }

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n).
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

enum class NoiseKind : std::uint8_t { Depolarizing = 0, Phenomenological = 1 };

inline std::string_view to_string(NoiseKind k) {
  return k == NoiseKind::Depolarizing ? "depolarizing" : "phenomenological";
}

inline NoiseKind noise_kind_from_string(std::string_view s) {
  if (s == "depolarizing" || s == "depol") return NoiseKind::Depolarizing;
  if (s == "phenomenological" || s == "noisy" || s == "phenom") return NoiseKind::Phenomenological;
  throw std::invalid_argument("unknown noise kind: " + std::string(s));
}

struct DepolarizingParams {
  double p = 0.0;
  void validate() const {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("depolarizing p must be in [0, 1)");
  }
};

struct PhenomenologicalParams {
  double p = 0.0;
  double q = 0.0;
  int cycles = 1;
  void validate() const {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("depolarizing p must be in [0, 1)");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("measurement flip q must be in [0, 1]");
    if (cycles < 1) throw std::invalid_argument("cycles must be >= 1");
  }
};

/// Applies one round of depolarizing noise in place: each data cell, visited
/// in row-major order, gets X, Y or Z with probability p/3 each.
inline void depolarize(PauliError& error, const CodeLayout& layout, double p, Rng& rng) {
  if (p <= 0.0) return;
  constexpr Pauli kChoice[3] = {Pauli::X, Pauli::Y, Pauli::Z};
  for (const Cell& c : layout.data_cells()) {
    const double u = uniform01(rng);
    if (u < p) {
      int k = static_cast<int>(3.0 * u / p);
      if (k > 2) k = 2;
      error.apply(c, kChoice[k]);
    }
  }
}

inline PauliError sample_depolarizing(const CodeLayout& layout, const DepolarizingParams& params,
                                      const SeedSpec& seed, std::uint64_t index) {
  params.validate();
  PauliError e(layout);
  Rng rng = record_rng(seed, index);
  depolarize(e, layout, params.p, rng);
  return e;
}

/// Flips each stabilizer outcome independently with probability q.
inline void flip_measurements(Syndrome& s, const CodeLayout& layout, double q, Rng& rng) {
  if (q <= 0.0) return;
  for (const Cell& m : layout.measurement_cells()) {
    if (uniform01(rng) < q) s.toggle(m);
  }
}

struct NoisyCycles {
  PauliError cumulative;
  std::vector<Syndrome> noisy;
  Syndrome final_perfect;
};

/// R rounds of (fresh depolarizing noise, imperfect measurement), followed by
/// one perfect extraction of the accumulated error.
inline NoisyCycles run_noisy_cycles(const CodeLayout& layout, const PhenomenologicalParams& params,
                                    const SeedSpec& seed, std::uint64_t index) {
  params.validate();
  Rng rng = record_rng(seed, index);
  NoisyCycles out{PauliError(layout), {}, Syndrome(layout)};
  out.noisy.reserve(static_cast<std::size_t>(params.cycles));
  for (int t = 0; t < params.cycles; ++t) {
    depolarize(out.cumulative, layout, params.p, rng);
    Syndrome s = syndrome_of(out.cumulative, layout);
    flip_measurements(s, layout, params.q, rng);
    out.noisy.push_back(std::move(s));
  }
  out.final_perfect = syndrome_of(out.cumulative, layout);
  return out;
}

}  // namespace qeclab
