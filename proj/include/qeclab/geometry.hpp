#pragma once

// Planar surface-code lattice on a (2d-1) x (2d-1) grid.
//
// Cell (r, c) is a data qubit when r + c is even, an X-type stabilizer when r
// is even and c odd, and a Z-type stabilizer when r is odd and c even. X-type
// error chains terminate on the top/bottom borders (the "X sides"), Z-type
// chains on the left/right borders (the "Z sides").

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qeclab {

enum class CellRole : std::uint8_t { Data, StabX, StabZ };

enum class Pauli : std::uint8_t { I = 0, X = 1, Z = 2, Y = 3 };

/// Logical class of a trivial-syndrome residual. Wire codes are 0..3.
enum class LogicalClass : std::uint8_t { I = 0, X = 1, Z = 2, Y = 3 };

inline constexpr LogicalClass operator*(LogicalClass a, LogicalClass b) {
  return static_cast<LogicalClass>(static_cast<std::uint8_t>(a) ^ static_cast<std::uint8_t>(b));
}

inline constexpr std::string_view to_string(LogicalClass c) {
  constexpr std::array<std::string_view, 4> names{"I", "X", "Z", "Y"};
  return names[static_cast<std::size_t>(c)];
}

inline LogicalClass logical_class_from_code(int code) {
  if (code < 0 || code > 3) {
    throw std::invalid_argument("logical class code out of range: " + std::to_string(code));
  }
  return static_cast<LogicalClass>(code);
}

inline LogicalClass logical_class_from_string(std::string_view s) {
  if (s == "I") return LogicalClass::I;
  if (s == "X") return LogicalClass::X;
  if (s == "Z") return LogicalClass::Z;
  if (s == "Y") return LogicalClass::Y;
  throw std::invalid_argument("unknown logical class: " + std::string(s));
}

struct Cell {
  int row = 0;
  int col = 0;
  friend constexpr bool operator==(const Cell&, const Cell&) = default;
  friend constexpr auto operator<=>(const Cell&, const Cell&) = default;
};

class CodeLayout {
 public:
  static constexpr int kMinDistance = 3;
  static constexpr int kMaxDistance = 25;

  explicit CodeLayout(int distance) : distance_(distance) {
    if (distance < kMinDistance || distance > kMaxDistance || distance % 2 == 0) {
      throw std::invalid_argument("code distance must be odd and in [3, 25], got " +
                                  std::to_string(distance));
    }
    size_ = 2 * distance - 1;
    for (int r = 0; r < size_; ++r) {
      for (int c = 0; c < size_; ++c) {
        switch (role(r, c)) {
          case CellRole::Data: data_.push_back({r, c}); break;
          case CellRole::StabX: stab_x_.push_back({r, c}); break;
          case CellRole::StabZ: stab_z_.push_back({r, c}); break;
        }
        if ((r + c) % 2 == 1) measurement_.push_back({r, c});
      }
    }
    for (int r = 0; r < size_; r += 2) logical_x_.push_back({r, 0});
    for (int c = 0; c < size_; c += 2) logical_z_.push_back({0, c});
  }

  int distance() const { return distance_; }
  int size() const { return size_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(size_) * size_; }

  static constexpr CellRole role(int r, int c) {
    if ((r + c) % 2 == 0) return CellRole::Data;
    return r % 2 == 0 ? CellRole::StabX : CellRole::StabZ;
  }
  static constexpr CellRole role(Cell cell) { return role(cell.row, cell.col); }

  bool contains(Cell cell) const {
    return cell.row >= 0 && cell.col >= 0 && cell.row < size_ && cell.col < size_;
  }
  std::size_t index(Cell cell) const {
    return static_cast<std::size_t>(cell.row) * size_ + cell.col;
  }
  std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * size_ + c; }
  Cell cell_at(std::size_t idx) const {
    return {static_cast<int>(idx / size_), static_cast<int>(idx % size_)};
  }

  const std::vector<Cell>& data_cells() const { return data_; }
  const std::vector<Cell>& stab_x_cells() const { return stab_x_; }
  const std::vector<Cell>& stab_z_cells() const { return stab_z_; }
  /// All stabilizer cells (r + c odd) in row-major order.
  const std::vector<Cell>& measurement_cells() const { return measurement_; }

  /// Column 0 data cells: an X string joining the top and bottom borders.
  const std::vector<Cell>& logical_x_support() const { return logical_x_; }
  /// Row 0 data cells: a Z string joining the left and right borders.
  const std::vector<Cell>& logical_z_support() const { return logical_z_; }

  /// Grid-adjacent cells, clipped to the lattice.
  std::vector<Cell> neighbors(Cell cell) const {
    std::vector<Cell> out;
    out.reserve(4);
    constexpr std::array<std::array<int, 2>, 4> kSteps{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    for (const auto& [dr, dc] : kSteps) {
      Cell n{cell.row + dr, cell.col + dc};
      if (contains(n)) out.push_back(n);
    }
    return out;
  }

  friend bool operator==(const CodeLayout& a, const CodeLayout& b) {
    return a.distance_ == b.distance_;
  }

 private:
  int distance_;
  int size_;
  std::vector<Cell> data_, stab_x_, stab_z_, measurement_;
  std::vector<Cell> logical_x_, logical_z_;
};

inline CodeLayout build_layout(int distance) { return CodeLayout(distance); }

/// Phase-free Pauli operator on the data qubits, stored as per-cell X and Z
/// bits over the full grid. Bits on stabilizer cells are always zero.
class PauliError {
 public:
  PauliError() = default;
  explicit PauliError(const CodeLayout& layout)
      : size_(layout.size()), x_(layout.cell_count(), 0), z_(layout.cell_count(), 0) {}

  int grid_size() const { return size_; }
  bool empty() const { return weight() == 0; }

  Pauli at(Cell cell) const {
    const auto i = idx(cell);
    return static_cast<Pauli>(x_[i] | (z_[i] << 1));
  }

  void set(Cell cell, Pauli p) {
    check_data(cell);
    const auto i = idx(cell);
    x_[i] = static_cast<std::uint8_t>(p) & 1U;
    z_[i] = (static_cast<std::uint8_t>(p) >> 1) & 1U;
  }

  /// Multiplies the operator at `cell` by `p` (phase ignored).
  void apply(Cell cell, Pauli p) {
    check_data(cell);
    const auto i = idx(cell);
    x_[i] ^= static_cast<std::uint8_t>(p) & 1U;
    z_[i] ^= (static_cast<std::uint8_t>(p) >> 1) & 1U;
  }

  bool has_x(Cell cell) const { return x_[idx(cell)] != 0; }
  bool has_z(Cell cell) const { return z_[idx(cell)] != 0; }

  const std::vector<std::uint8_t>& x_part() const { return x_; }
  const std::vector<std::uint8_t>& z_part() const { return z_; }

  std::size_t weight() const {
    std::size_t w = 0;
    for (std::size_t i = 0; i < x_.size(); ++i) w += (x_[i] | z_[i]) != 0;
    return w;
  }

  PauliError& operator*=(const PauliError& other) {
    if (other.size_ != size_) throw std::invalid_argument("composing Pauli errors of different layouts");
    for (std::size_t i = 0; i < x_.size(); ++i) {
      x_[i] ^= other.x_[i];
      z_[i] ^= other.z_[i];
    }
    return *this;
  }

  friend bool operator==(const PauliError&, const PauliError&) = default;

 private:
  std::size_t idx(Cell cell) const {
    if (cell.row < 0 || cell.col < 0 || cell.row >= size_ || cell.col >= size_) {
      throw std::out_of_range("cell outside lattice");
    }
    return static_cast<std::size_t>(cell.row) * size_ + cell.col;
  }
  void check_data(Cell cell) const {
    if (CodeLayout::role(cell) != CellRole::Data) {
      throw std::invalid_argument("Pauli operators act only on data cells (" + std::to_string(cell.row) +
                                  "," + std::to_string(cell.col) + ")");
    }
  }

  int size_ = 0;
  std::vector<std::uint8_t> x_, z_;
};

inline PauliError compose(const PauliError& a, const PauliError& b) {
  PauliError out = a;
  out *= b;
  return out;
}

/// Stabilizer flip bits over the full grid; only stabilizer cells can be set.
class Syndrome {
 public:
  Syndrome() = default;
  explicit Syndrome(const CodeLayout& layout) : size_(layout.size()), bits_(layout.cell_count(), 0) {}

  int grid_size() const { return size_; }
  bool flipped(Cell cell) const { return bits_[idx(cell)] != 0; }
  void set(Cell cell, bool value) {
    if (CodeLayout::role(cell) == CellRole::Data) {
      throw std::invalid_argument("syndrome bits live on stabilizer cells only");
    }
    bits_[idx(cell)] = value ? 1 : 0;
  }
  void toggle(Cell cell) { set(cell, !flipped(cell)); }

  bool trivial() const {
    for (auto b : bits_) {
      if (b) return false;
    }
    return true;
  }
  std::size_t defect_count() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  Syndrome& operator^=(const Syndrome& other) {
    if (other.size_ != size_) throw std::invalid_argument("syndrome size mismatch");
    for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] ^= other.bits_[i];
    return *this;
  }
  friend Syndrome operator^(Syndrome a, const Syndrome& b) { return a ^= b; }
  friend bool operator==(const Syndrome&, const Syndrome&) = default;

 private:
  std::size_t idx(Cell cell) const {
    if (cell.row < 0 || cell.col < 0 || cell.row >= size_ || cell.col >= size_) {
      throw std::out_of_range("cell outside lattice");
    }
    return static_cast<std::size_t>(cell.row) * size_ + cell.col;
  }
  int size_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Z stabilizers see X components, X stabilizers see Z components.
inline Syndrome syndrome_of(const PauliError& error, const CodeLayout& layout) {
  if (error.grid_size() != layout.size()) throw std::invalid_argument("error does not match layout");
  Syndrome s(layout);
  const int n = layout.size();
  const auto& xs = error.x_part();
  const auto& zs = error.z_part();
  for (const Cell& m : layout.measurement_cells()) {
    const bool z_type = CodeLayout::role(m) == CellRole::StabZ;
    const auto& bits = z_type ? xs : zs;
    std::uint8_t parity = 0;
    if (m.row > 0) parity ^= bits[layout.index(m.row - 1, m.col)];
    if (m.row + 1 < n) parity ^= bits[layout.index(m.row + 1, m.col)];
    if (m.col > 0) parity ^= bits[layout.index(m.row, m.col - 1)];
    if (m.col + 1 < n) parity ^= bits[layout.index(m.row, m.col + 1)];
    if (parity) s.set(m, true);
  }
  return s;
}

/// Logical class of a residual with trivial syndrome. X parity is read
/// against the row-0 Z representative, Z parity against the column-0 X
/// representative.
inline LogicalClass logical_class(const PauliError& residual, const CodeLayout& layout) {
  if (!syndrome_of(residual, layout).trivial()) {
    throw std::invalid_argument("logical_class requires a residual with trivial syndrome");
  }
  unsigned a = 0;
  unsigned b = 0;
  for (const Cell& c : layout.logical_z_support()) a ^= residual.has_x(c);
  for (const Cell& c : layout.logical_x_support()) b ^= residual.has_z(c);
  return static_cast<LogicalClass>(a | (b << 1));
}

/// Pauli operator realizing a logical class with the pinned representatives.
inline PauliError logical_operator(LogicalClass cls, const CodeLayout& layout) {
  PauliError op(layout);
  const auto code = static_cast<std::uint8_t>(cls);
  if (code & 1U) {
    for (const Cell& c : layout.logical_x_support()) op.apply(c, Pauli::X);
  }
  if (code & 2U) {
    for (const Cell& c : layout.logical_z_support()) op.apply(c, Pauli::Z);
  }
  return op;
}

/// Channels-first network input: one channel per syndrome, +1 for an
/// unflipped stabilizer, -1 for a flipped one, 0 on data cells.
struct InputTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int ch, int r, int c) const {
    return values[(static_cast<std::size_t>(ch) * height + r) * width + c];
  }
};

inline InputTensor encode_input(const std::vector<Syndrome>& stack, const CodeLayout& layout) {
  if (stack.empty()) throw std::invalid_argument("encode_input needs at least one syndrome");
  const int n = layout.size();
  InputTensor t{static_cast<int>(stack.size()), n, n,
                std::vector<double>(stack.size() * layout.cell_count(), 0.0)};
  for (std::size_t ch = 0; ch < stack.size(); ++ch) {
    if (stack[ch].grid_size() != n) throw std::invalid_argument("syndrome does not match layout");
    const auto& bits = stack[ch].bits();
    double* out = t.values.data() + ch * layout.cell_count();
    for (const Cell& m : layout.measurement_cells()) {
      const auto i = layout.index(m);
      out[i] = bits[i] ? -1.0 : 1.0;
    }
  }
  return t;
}

}  // namespace qeclab
