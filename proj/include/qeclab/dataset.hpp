#pragma once

// SYQD dataset files.
//
// Header (little-endian): "SYQD", u16 version=1, u16 d, u16 C, u16 R,
// u8 noise_kind, f64 p, f64 q, u64 record_count, u64 master_seed.
// Each record: u8 label, then C channels of bit-packed outcomes over the
// measurement cells (r+c odd, row-major), bit i of the channel in byte i/8 at
// position i%8, 1 = flipped, each channel padded to whole bytes.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qeclab/decoders.hpp"
#include "qeclab/geometry.hpp"
#include "qeclab/nn.hpp"
#include "qeclab/noise.hpp"
#include "qeclab/parallel.hpp"

namespace qeclab {

inline constexpr std::array<char, 4> kDatasetMagic = {'S', 'Y', 'Q', 'D'};
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 4 + 4 * 2 + 1 + 4 * 8;

struct NoiseConfig {
  NoiseKind kind = NoiseKind::Depolarizing;
  double p = 0.1;
  double q = 0.0;
  int cycles = 1;

  void validate() const {
    if (kind == NoiseKind::Depolarizing) {
      DepolarizingParams{p}.validate();
    } else {
      PhenomenologicalParams{p, q, cycles}.validate();
    }
  }
  int channels() const { return kind == NoiseKind::Depolarizing ? 1 : cycles + 1; }
};

struct DatasetHeader {
  std::uint16_t version = kDatasetVersion;
  std::uint16_t distance = 0;
  std::uint16_t channels = 1;
  std::uint16_t cycles = 1;
  NoiseKind noise = NoiseKind::Depolarizing;
  double p = 0.0;
  double q = 0.0;
  std::uint64_t record_count = 0;
  std::uint64_t master_seed = 0;

  int measurement_bits() const { return 2 * distance * (distance - 1); }
  std::size_t channel_bytes() const { return (static_cast<std::size_t>(measurement_bits()) + 7) / 8; }
  std::size_t record_bytes() const { return 1 + channels * channel_bytes(); }
  bool operator==(const DatasetHeader&) const = default;
};

inline DatasetHeader make_header(const CodeLayout& layout, const NoiseConfig& noise, std::uint64_t count,
                                 std::uint64_t seed) {
  DatasetHeader h;
  h.distance = static_cast<std::uint16_t>(layout.distance());
  h.channels = static_cast<std::uint16_t>(noise.channels());
  h.cycles = static_cast<std::uint16_t>(noise.kind == NoiseKind::Depolarizing ? 1 : noise.cycles);
  h.noise = noise.kind;
  h.p = noise.p;
  h.q = noise.kind == NoiseKind::Depolarizing ? 0.0 : noise.q;
  h.record_count = count;
  h.master_seed = seed;
  return h;
}

/// Simple-decoder label: the logical class of error * simple_decode(syndrome).
inline LogicalClass label_record(const PauliError& cumulative, const Syndrome& decode_syndrome,
                                 const CodeLayout& layout) {
  if (syndrome_of(cumulative, layout) != decode_syndrome) {
    throw std::invalid_argument("label_record: syndrome does not belong to the error");
  }
  return logical_class(compose(cumulative, simple_decode(decode_syndrome, layout)), layout);
}

/// Appends one record (label + packed channels) to `out`.
inline void pack_record(const std::vector<Syndrome>& stack, LogicalClass label, const CodeLayout& layout,
                        unsigned char* out) {
  out[0] = static_cast<unsigned char>(label);
  const auto& cells = layout.measurement_cells();
  const std::size_t cb = (cells.size() + 7) / 8;
  for (std::size_t ch = 0; ch < stack.size(); ++ch) {
    unsigned char* dst = out + 1 + ch * cb;
    std::fill(dst, dst + cb, 0);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (stack[ch].flipped(cells[i])) dst[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
    }
  }
}

/// A record as labelled syndrome stack (for tests and inspection).
struct RecordView {
  LogicalClass label = LogicalClass::I;
  std::vector<Syndrome> syndromes;
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(DatasetHeader header)
      : header_(header), bytes_(header.record_bytes() * header.record_count, 0) {
    check_header(header_);
  }

  static void check_header(const DatasetHeader& h) {
    if (h.version != kDatasetVersion) throw std::runtime_error("unsupported dataset version");
    if (h.distance < 3 || h.distance > 25 || h.distance % 2 == 0) throw std::runtime_error("dataset: bad distance");
    if (h.channels < 1) throw std::runtime_error("dataset: channel count must be >= 1");
    const int expect = h.noise == NoiseKind::Depolarizing ? 1 : h.cycles + 1;
    if (h.channels != expect) throw std::runtime_error("dataset: channel count inconsistent with noise kind");
  }

  const DatasetHeader& header() const { return header_; }
  std::size_t size() const { return static_cast<std::size_t>(header_.record_count); }
  std::size_t record_bytes() const { return header_.record_bytes(); }
  unsigned char* record(std::size_t i) { return bytes_.data() + i * record_bytes(); }
  const unsigned char* record(std::size_t i) const { return bytes_.data() + i * record_bytes(); }
  const std::vector<unsigned char>& bytes() const { return bytes_; }
  int label(std::size_t i) const { return record(i)[0]; }

  bool channel_bit(std::size_t i, int ch, std::size_t bit) const {
    const unsigned char* rec = record(i) + 1 + static_cast<std::size_t>(ch) * header_.channel_bytes();
    return (rec[bit / 8] >> (bit % 8)) & 1u;
  }

  RecordView view(std::size_t i, const CodeLayout& layout) const {
    RecordView v;
    v.label = logical_class_from_code(label(i));
    const auto& cells = layout.measurement_cells();
    for (int ch = 0; ch < header_.channels; ++ch) {
      Syndrome s(layout);
      for (std::size_t b = 0; b < cells.size(); ++b) {
        if (channel_bit(i, ch, b)) s.set(cells[b], true);
      }
      v.syndromes.push_back(std::move(s));
    }
    return v;
  }

  std::array<std::uint64_t, 4> label_histogram() const {
    std::array<std::uint64_t, 4> h{};
    for (std::size_t i = 0; i < size(); ++i) h[label(i) & 3]++;
    return h;
  }

  void append(const Dataset& other) {
    if (other.record_bytes() != record_bytes()) throw std::invalid_argument("dataset record layouts differ");
    bytes_.insert(bytes_.end(), other.bytes_.begin(), other.bytes_.end());
    header_.record_count += other.header_.record_count;
  }

  /// Applies a seeded permutation to the record order.
  void shuffle(std::uint64_t seed) {
    std::vector<std::size_t> order(size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_below(rng, i))]);
    }
    std::vector<unsigned char> out(bytes_.size());
    const std::size_t rb = record_bytes();
    for (std::size_t i = 0; i < order.size(); ++i) std::memcpy(out.data() + i * rb, record(order[i]), rb);
    bytes_.swap(out);
  }

  DatasetHeader& mutable_header() { return header_; }

 private:
  DatasetHeader header_;
  std::vector<unsigned char> bytes_;
};

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>;
  const U bits = std::bit_cast<U>(v);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(const unsigned char*& p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  p += sizeof(T);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline void write_header(std::ostream& os, const DatasetHeader& h) {
  os.write(kDatasetMagic.data(), 4);
  detail::put_le(os, h.version);
  detail::put_le(os, h.distance);
  detail::put_le(os, h.channels);
  detail::put_le(os, h.cycles);
  detail::put_le(os, static_cast<std::uint8_t>(h.noise));
  detail::put_le(os, h.p);
  detail::put_le(os, h.q);
  detail::put_le(os, h.record_count);
  detail::put_le(os, h.master_seed);
}

inline DatasetHeader read_header(std::istream& is) {
  unsigned char buf[kDatasetHeaderBytes];
  is.read(reinterpret_cast<char*>(buf), kDatasetHeaderBytes);
  if (static_cast<std::size_t>(is.gcount()) != kDatasetHeaderBytes) throw std::runtime_error("dataset: truncated header");
  if (std::memcmp(buf, kDatasetMagic.data(), 4) != 0) throw std::runtime_error("dataset: bad magic");
  const unsigned char* p = buf + 4;
  DatasetHeader h;
  h.version = detail::get_le<std::uint16_t>(p);
  h.distance = detail::get_le<std::uint16_t>(p);
  h.channels = detail::get_le<std::uint16_t>(p);
  h.cycles = detail::get_le<std::uint16_t>(p);
  const auto kind = detail::get_le<std::uint8_t>(p);
  if (kind > 1) throw std::runtime_error("dataset: unknown noise kind");
  h.noise = static_cast<NoiseKind>(kind);
  h.p = detail::get_le<double>(p);
  h.q = detail::get_le<double>(p);
  h.record_count = detail::get_le<std::uint64_t>(p);
  h.master_seed = detail::get_le<std::uint64_t>(p);
  Dataset::check_header(h);
  return h;
}

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  write_header(os, ds.header());
  os.write(reinterpret_cast<const char*>(ds.bytes().data()), static_cast<std::streamsize>(ds.bytes().size()));
  if (!os) throw std::runtime_error("failed writing dataset");
}

inline Dataset read_dataset(std::istream& is) {
  const DatasetHeader h = read_header(is);
  Dataset ds(h);
  const std::size_t n = ds.bytes().size();
  is.read(reinterpret_cast<char*>(ds.record(0)), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw std::runtime_error("dataset: truncated records");
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("dataset: trailing bytes after records");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.label(i) > 3) throw std::runtime_error("dataset: invalid label in record " + std::to_string(i));
  }
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(os, ds);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_dataset(is);
}

struct Sample {
  PauliError error;
  std::vector<Syndrome> syndromes;  // model input stack, perfect syndrome last
  LogicalClass label = LogicalClass::I;
};

/// Record `index` of the (noise, seed) stream.
inline Sample draw_sample(const CodeLayout& layout, const NoiseConfig& noise, const SeedSpec& seed,
                          std::uint64_t index) {
  if (noise.kind == NoiseKind::Depolarizing) {
    PauliError e = sample_depolarizing(layout, {noise.p}, seed, index);
    Syndrome s = syndrome_of(e, layout);
    const LogicalClass label = label_record(e, s, layout);
    return {std::move(e), {std::move(s)}, label};
  }
  NoisyCycles nc = run_noisy_cycles(layout, {noise.p, noise.q, noise.cycles}, seed, index);
  const LogicalClass label = label_record(nc.cumulative, nc.final_perfect, layout);
  std::vector<Syndrome> stack = std::move(nc.noisy);
  stack.push_back(std::move(nc.final_perfect));
  return {std::move(nc.cumulative), std::move(stack), label};
}

inline Dataset generate_dataset(const CodeLayout& layout, const NoiseConfig& noise, std::uint64_t count,
                                std::uint64_t master_seed, int threads = 1) {
  if (count == 0) throw std::invalid_argument("dataset count must be >= 1");
  noise.validate();
  Dataset ds(make_header(layout, noise, count, master_seed));
  const SeedSpec seed{master_seed};
  parallel_for(count, threads, [&](std::size_t i) {
    const Sample s = draw_sample(layout, noise, seed, i);
    pack_record(s.syndromes, s.label, layout, ds.record(i));
  });
  return ds;
}

enum class ChainKind : std::uint8_t { X = 0, Z = 1, Both = 2 };

struct AugmentationSpec {
  int chain_length = 5;
};

struct ChainSample {
  ChainKind kind = ChainKind::X;
  std::vector<Cell> x_chain;  // one column
  std::vector<Cell> z_chain;  // one row
  PauliError error;
  Syndrome syndrome;
  LogicalClass label = LogicalClass::I;
};

namespace detail {

// L contiguous data cells along one line; `vertical` walks rows within a
// column. Lines with fewer than L data cells are skipped.
inline std::vector<Cell> draw_line_chain(const CodeLayout& layout, int L, bool vertical, Rng& rng) {
  const int n = layout.size();
  const int d = layout.distance();
  // Even lines hold d data cells, odd lines d-1.
  std::vector<int> lines;
  for (int k = 0; k < n; ++k) {
    const int cells = (k % 2 == 0) ? d : d - 1;
    if (cells >= L) lines.push_back(k);
  }
  const int line = lines[uniform_below(rng, lines.size())];
  const int cells = (line % 2 == 0) ? d : d - 1;
  const int offset = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cells - L + 1)));
  const int first = (line % 2) + 2 * offset;
  std::vector<Cell> chain;
  for (int k = 0; k < L; ++k) {
    const int along = first + 2 * k;
    chain.push_back(vertical ? Cell{along, line} : Cell{line, along});
  }
  return chain;
}

}  // namespace detail

/// Pure chain sample: X-chain in a column, Z-chain in a row, or both, with
/// probability 1/3 each.
inline ChainSample inject_chain(const CodeLayout& layout, const AugmentationSpec& spec, const SeedSpec& seed,
                                std::uint64_t index) {
  if (spec.chain_length < 1 || spec.chain_length > layout.distance()) {
    throw std::invalid_argument("chain length must be in [1, d]");
  }
  Rng rng = record_rng(seed, index);
  ChainSample out{static_cast<ChainKind>(uniform_below(rng, 3)), {}, {}, PauliError(layout), Syndrome(layout),
                  LogicalClass::I};
  if (out.kind != ChainKind::Z) out.x_chain = detail::draw_line_chain(layout, spec.chain_length, true, rng);
  if (out.kind != ChainKind::X) out.z_chain = detail::draw_line_chain(layout, spec.chain_length, false, rng);
  PauliError x(layout);
  for (const Cell& c : out.x_chain) x.set(c, Pauli::X);
  PauliError z(layout);
  for (const Cell& c : out.z_chain) z.set(c, Pauli::Z);
  out.error = compose(x, z);
  out.syndrome = syndrome_of(out.error, layout);
  out.label = label_record(out.error, out.syndrome, layout);
  return out;
}

inline Dataset generate_chain_dataset(const CodeLayout& layout, const AugmentationSpec& spec, std::uint64_t count,
                                      std::uint64_t master_seed, int threads = 1) {
  if (spec.chain_length < 1 || spec.chain_length > layout.distance()) {
    throw std::invalid_argument("chain length must be in [1, d]");
  }
  Dataset ds(make_header(layout, NoiseConfig{NoiseKind::Depolarizing, 0.0}, count, master_seed));
  const SeedSpec seed{master_seed};
  parallel_for(count, threads, [&](std::size_t i) {
    const ChainSample c = inject_chain(layout, spec, seed, i);
    pack_record({c.syndrome}, c.label, layout, ds.record(i));
  });
  return ds;
}

struct EnhancedCounts {
  std::uint64_t chains = 0;
  std::uint64_t base = 0;
  double base_p = 0.1;
  std::uint64_t hard = 0;
  double hard_p = 0.13;
};

/// Chain records, then base-p records, then hard-p records, globally shuffled.
/// The header records base_p as p and hard_p as q.
inline Dataset build_enhanced_set(const CodeLayout& layout, const AugmentationSpec& spec, const EnhancedCounts& counts,
                                  std::uint64_t master_seed, int threads = 1) {
  const std::uint64_t total = counts.chains + counts.base + counts.hard;
  if (total == 0) throw std::invalid_argument("enhanced set needs at least one record");
  const SeedSpec root{master_seed};
  DatasetHeader h = make_header(layout, NoiseConfig{NoiseKind::Depolarizing, counts.base_p}, 0, master_seed);
  h.q = counts.hard_p;
  Dataset ds(h);
  auto part = [&](std::uint64_t n, auto&& make) {
    if (n) ds.append(make(n));
  };
  part(counts.chains, [&](std::uint64_t n) {
    return generate_chain_dataset(layout, spec, n, root.substream(1).record_seed(0), threads);
  });
  part(counts.base, [&](std::uint64_t n) {
    return generate_dataset(layout, {NoiseKind::Depolarizing, counts.base_p}, n, root.substream(2).record_seed(0),
                            threads);
  });
  part(counts.hard, [&](std::uint64_t n) {
    return generate_dataset(layout, {NoiseKind::Depolarizing, counts.hard_p}, n, root.substream(3).record_seed(0),
                            threads);
  });
  ds.shuffle(root.substream(4).record_seed(0));
  return ds;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

/// Seeded split with eval size floor(fraction * count).
inline Split split_eval(std::size_t count, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split fraction must be in (0, 1)");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_below(rng, i))]);
  }
  const auto n_eval = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(count)));
  Split s;
  s.eval.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end());
  std::sort(s.eval.begin(), s.eval.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

/// Training view over a dataset, optionally restricted to an index subset.
class DatasetSource : public nn::SampleSource {
 public:
  explicit DatasetSource(const Dataset& ds) : DatasetSource(ds, {}, true) {}
  DatasetSource(const Dataset& ds, std::vector<std::size_t> indices) : DatasetSource(ds, std::move(indices), false) {}

  std::size_t size() const override { return all_ ? ds_->size() : indices_.size(); }
  nn::Shape3 shape() const override {
    return {ds_->header().channels, layout_.size(), layout_.size()};
  }
  void fill(std::size_t index, double* out) const override {
    const std::size_t i = resolve(index);
    const std::size_t plane = layout_.cell_count();
    std::fill(out, out + plane * ds_->header().channels, 0.0);
    const unsigned char* rec = ds_->record(i) + 1;
    const std::size_t cb = ds_->header().channel_bytes();
    for (int ch = 0; ch < ds_->header().channels; ++ch) {
      double* dst = out + ch * plane;
      const unsigned char* src = rec + ch * cb;
      for (std::size_t b = 0; b < offsets_.size(); ++b) dst[offsets_[b]] = ((src[b / 8] >> (b % 8)) & 1u) ? -1.0 : 1.0;
    }
  }
  int label(std::size_t index) const override { return ds_->label(resolve(index)); }

 private:
  DatasetSource(const Dataset& ds, std::vector<std::size_t> indices, bool all)
      : ds_(&ds), layout_(ds.header().distance), indices_(std::move(indices)), all_(all) {
    for (const Cell& c : layout_.measurement_cells()) offsets_.push_back(layout_.index(c));
    for (std::size_t i : indices_) {
      if (i >= ds.size()) throw std::out_of_range("dataset index out of range");
    }
  }
  std::size_t resolve(std::size_t index) const { return all_ ? index : indices_[index]; }

  const Dataset* ds_;
  CodeLayout layout_;
  std::vector<std::size_t> indices_;
  bool all_;
  std::vector<std::size_t> offsets_;
};

}  // namespace qeclab
