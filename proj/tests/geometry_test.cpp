#include "qeclab/geometry.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

namespace qeclab {
namespace {

PauliError random_error(const CodeLayout& layout, std::mt19937_64& rng) {
  PauliError e(layout);
  std::uniform_int_distribution<int> pick(0, 3);
  for (const Cell& c : layout.data_cells()) e.set(c, static_cast<Pauli>(pick(rng)));
  return e;
}

// The stabilizer operator of a measurement cell: X (StabX) or Z (StabZ) on
// its grid neighbours.
PauliError stabilizer_operator(const CodeLayout& layout, Cell m) {
  PauliError op(layout);
  const Pauli p = CodeLayout::role(m) == CellRole::StabX ? Pauli::X : Pauli::Z;
  for (const Cell& n : layout.neighbors(m)) op.apply(n, p);
  return op;
}

PauliError random_stabilizer_product(const CodeLayout& layout, std::mt19937_64& rng) {
  PauliError out(layout);
  for (const Cell& m : layout.measurement_cells()) {
    if (rng() & 1U) out *= stabilizer_operator(layout, m);
  }
  return out;
}

TEST(Layout, CountsForDistanceThree) {
  const CodeLayout layout = build_layout(3);
  EXPECT_EQ(layout.size(), 5);
  EXPECT_EQ(layout.data_cells().size(), 13u);
  EXPECT_EQ(layout.stab_x_cells().size(), 6u);
  EXPECT_EQ(layout.stab_z_cells().size(), 6u);
}

TEST(Layout, InvariantsAcrossDistances) {
  for (int d = 3; d <= 25; d += 2) {
    const CodeLayout layout(d);
    ASSERT_EQ(layout.size(), 2 * d - 1);
    EXPECT_EQ(layout.data_cells().size(), static_cast<std::size_t>(d * d + (d - 1) * (d - 1)));
    EXPECT_EQ(layout.stab_x_cells().size(), static_cast<std::size_t>(d * (d - 1)));
    EXPECT_EQ(layout.stab_z_cells().size(), static_cast<std::size_t>(d * (d - 1)));
    EXPECT_EQ(layout.logical_x_support().size(), static_cast<std::size_t>(d));
    EXPECT_EQ(layout.logical_z_support().size(), static_cast<std::size_t>(d));
    for (int r = 0; r < layout.size(); ++r) {
      for (int c = 0; c < layout.size(); ++c) {
        const CellRole role = CodeLayout::role(r, c);
        if ((r + c) % 2 == 0) {
          EXPECT_EQ(role, CellRole::Data);
        } else if (r % 2 == 0) {
          EXPECT_EQ(role, CellRole::StabX);
        } else {
          EXPECT_EQ(role, CellRole::StabZ);
        }
      }
    }
  }
}

TEST(Layout, DistanceSevenGrid) { EXPECT_EQ(build_layout(7).size(), 13); }

TEST(Layout, LogicalSupportsAtDistanceFive) {
  const CodeLayout layout(5);
  const std::vector<Cell> expected{{0, 0}, {2, 0}, {4, 0}, {6, 0}, {8, 0}};
  EXPECT_EQ(layout.logical_x_support(), expected);
  const std::vector<Cell> expected_z{{0, 0}, {0, 2}, {0, 4}, {0, 6}, {0, 8}};
  EXPECT_EQ(layout.logical_z_support(), expected_z);
}

TEST(Layout, RejectsInvalidDistance) {
  EXPECT_THROW(build_layout(4), std::invalid_argument);
  EXPECT_THROW(build_layout(1), std::invalid_argument);
  EXPECT_THROW(build_layout(27), std::invalid_argument);
  EXPECT_THROW(build_layout(-3), std::invalid_argument);
}

TEST(Syndrome, EmptyErrorIsTrivial) {
  const CodeLayout layout(5);
  EXPECT_TRUE(syndrome_of(PauliError(layout), layout).trivial());
}

TEST(Syndrome, SingleXInTheBulk) {
  const CodeLayout layout(3);
  PauliError e(layout);
  e.set({2, 2}, Pauli::X);
  const Syndrome s = syndrome_of(e, layout);
  EXPECT_EQ(s.defect_count(), 2u);
  EXPECT_TRUE(s.flipped({1, 2}));
  EXPECT_TRUE(s.flipped({3, 2}));
}

TEST(Syndrome, SingleYFlipsBothSpecies) {
  const CodeLayout layout(3);
  PauliError e(layout);
  e.set({2, 2}, Pauli::Y);
  const Syndrome s = syndrome_of(e, layout);
  EXPECT_EQ(s.defect_count(), 4u);
  for (Cell c : {Cell{1, 2}, Cell{3, 2}, Cell{2, 1}, Cell{2, 3}}) EXPECT_TRUE(s.flipped(c));
}

TEST(Syndrome, SingleXFlipCountsDependOnBorderProximity) {
  for (int d : {3, 5, 7}) {
    const CodeLayout layout(d);
    for (const Cell& c : layout.data_cells()) {
      PauliError e(layout);
      e.set(c, Pauli::X);
      const Syndrome s = syndrome_of(e, layout);
      std::size_t z_flips = 0;
      for (const Cell& m : layout.stab_z_cells()) z_flips += s.flipped(m);
      EXPECT_EQ(z_flips, s.defect_count());
      const bool on_top_or_bottom = c.row == 0 || c.row == layout.size() - 1;
      if (c.row % 2 == 1) {
        // Odd-row data cells sit between two StabZ cells in the same row.
        EXPECT_EQ(z_flips, 2u);
      } else {
        EXPECT_EQ(z_flips, on_top_or_bottom ? 1u : 2u) << c.row << "," << c.col;
      }
    }
  }
}

TEST(Syndrome, LinearityOverRandomPairs) {
  std::mt19937_64 rng(7);
  for (int d : {3, 5, 7}) {
    const CodeLayout layout(d);
    for (int trial = 0; trial < 1000; ++trial) {
      const PauliError a = random_error(layout, rng);
      const PauliError b = random_error(layout, rng);
      ASSERT_EQ(syndrome_of(compose(a, b), layout), syndrome_of(a, layout) ^ syndrome_of(b, layout));
    }
  }
}

TEST(Compose, GroupTable) {
  const CodeLayout layout(3);
  PauliError x(layout);
  x.set({0, 0}, Pauli::X);
  PauliError z(layout);
  z.set({0, 0}, Pauli::Z);
  EXPECT_EQ(compose(x, z).at({0, 0}), Pauli::Y);
  EXPECT_TRUE(compose(x, x).empty());

  PauliError z2(layout);
  z2.set({2, 0}, Pauli::Z);
  const PauliError both = compose(x, z2);
  EXPECT_EQ(both.at({0, 0}), Pauli::X);
  EXPECT_EQ(both.at({2, 0}), Pauli::Z);
  EXPECT_EQ(both.weight(), 2u);
}

TEST(Compose, SelfInverseForRandomErrors) {
  std::mt19937_64 rng(3);
  const CodeLayout layout(5);
  for (int i = 0; i < 50; ++i) {
    const PauliError e = random_error(layout, rng);
    EXPECT_TRUE(compose(e, e).empty());
  }
}

TEST(Compose, RejectsMismatchedLayouts) {
  EXPECT_THROW(compose(PauliError(CodeLayout(3)), PauliError(CodeLayout(5))), std::invalid_argument);
}

TEST(Pauli, OnlyDataCellsAccepted) {
  const CodeLayout layout(3);
  PauliError e(layout);
  EXPECT_THROW(e.set({0, 1}, Pauli::X), std::invalid_argument);
  EXPECT_THROW(e.set({9, 9}, Pauli::X), std::out_of_range);
}

TEST(LogicalClass, Representatives) {
  const CodeLayout layout(5);
  EXPECT_EQ(logical_class(PauliError(layout), layout), LogicalClass::I);
  for (LogicalClass c : {LogicalClass::I, LogicalClass::X, LogicalClass::Z, LogicalClass::Y}) {
    EXPECT_EQ(logical_class(logical_operator(c, layout), layout), c);
  }
}

TEST(LogicalClass, StabilizerActsTrivially) {
  const CodeLayout layout(3);
  PauliError z(layout);
  for (const Cell& n : layout.neighbors({1, 2})) z.apply(n, Pauli::Z);
  ASSERT_EQ(z.weight(), 4u);
  EXPECT_TRUE(syndrome_of(z, layout).trivial());
  EXPECT_EQ(logical_class(z, layout), LogicalClass::I);
  for (const Cell& m : layout.measurement_cells()) {
    EXPECT_EQ(logical_class(stabilizer_operator(layout, m), layout), LogicalClass::I);
  }
}

TEST(LogicalClass, RejectsNontrivialSyndrome) {
  const CodeLayout layout(3);
  PauliError e(layout);
  e.set({2, 2}, Pauli::X);
  EXPECT_THROW(logical_class(e, layout), std::invalid_argument);
}

TEST(LogicalClass, KleinFourGroup) {
  const LogicalClass all[] = {LogicalClass::I, LogicalClass::X, LogicalClass::Z, LogicalClass::Y};
  for (auto a : all) {
    EXPECT_EQ(a * a, LogicalClass::I);
    EXPECT_EQ(a * LogicalClass::I, a);
    for (auto b : all) EXPECT_EQ(a * b, b * a);
  }
  EXPECT_EQ(LogicalClass::X * LogicalClass::Z, LogicalClass::Y);
}

TEST(LogicalClass, RepresentativeIndependence) {
  std::mt19937_64 rng(11);
  const LogicalClass all[] = {LogicalClass::I, LogicalClass::X, LogicalClass::Z, LogicalClass::Y};
  for (int d : {3, 5, 7}) {
    const CodeLayout layout(d);
    for (int trial = 0; trial < 500; ++trial) {
      const LogicalClass cls = all[rng() % 4];
      const PauliError residual = compose(random_stabilizer_product(layout, rng), logical_operator(cls, layout));
      ASSERT_TRUE(syndrome_of(residual, layout).trivial());
      ASSERT_EQ(logical_class(residual, layout), cls);

      // Deform the pinned representatives by random same-type stabilizers
      // and re-read the parities against the deformed supports.
      PauliError z_rep = logical_operator(LogicalClass::Z, layout);
      PauliError x_rep = logical_operator(LogicalClass::X, layout);
      for (const Cell& m : layout.stab_z_cells()) {
        if (rng() & 1U) z_rep *= stabilizer_operator(layout, m);
      }
      for (const Cell& m : layout.stab_x_cells()) {
        if (rng() & 1U) x_rep *= stabilizer_operator(layout, m);
      }
      unsigned a = 0;
      unsigned b = 0;
      for (const Cell& c : layout.data_cells()) {
        a ^= residual.has_x(c) & z_rep.has_z(c);
        b ^= residual.has_z(c) & x_rep.has_x(c);
      }
      ASSERT_EQ(static_cast<LogicalClass>(a | (b << 1)), cls);
    }
  }
}

TEST(LogicalClass, EveryVerticalXChainIsLogicalX) {
  // Straight column chains and chains that hop columns through odd rows.
  for (int d : {3, 5, 7}) {
    const CodeLayout layout(d);
    for (int col = 0; col < layout.size(); col += 2) {
      PauliError e(layout);
      for (int r = 0; r < layout.size(); r += 2) e.apply({r, col}, Pauli::X);
      ASSERT_TRUE(syndrome_of(e, layout).trivial());
      EXPECT_EQ(logical_class(e, layout), LogicalClass::X);
    }
    std::mt19937_64 rng(static_cast<std::uint64_t>(d));
    for (int trial = 0; trial < 100; ++trial) {
      // Random walk from top to bottom: at each odd row, shift sideways by
      // a run of horizontal hops before continuing down.
      PauliError e(layout);
      int col = 2 * static_cast<int>(rng() % static_cast<std::uint64_t>(d));
      e.apply({0, col}, Pauli::X);
      for (int r = 1; r < layout.size(); r += 2) {
        const int shift = static_cast<int>(rng() % 3) - 1;
        int target = std::clamp(col + 2 * shift, 0, layout.size() - 1);
        while (col != target) {
          const int step = target > col ? 1 : -1;
          e.apply({r, col + step}, Pauli::X);
          col += 2 * step;
        }
        e.apply({r + 1, col}, Pauli::X);
      }
      ASSERT_TRUE(syndrome_of(e, layout).trivial());
      EXPECT_EQ(logical_class(e, layout), LogicalClass::X);
    }
  }
}

TEST(EncodeInput, SingleTrivialSyndrome) {
  const CodeLayout layout(3);
  const InputTensor t = encode_input({Syndrome(layout)}, layout);
  EXPECT_EQ(t.channels, 1);
  EXPECT_EQ(t.height, 5);
  EXPECT_EQ(t.width, 5);
  int plus = 0;
  int zero = 0;
  for (double v : t.values) {
    plus += v == 1.0;
    zero += v == 0.0;
  }
  EXPECT_EQ(plus, 12);
  EXPECT_EQ(zero, 13);
}

TEST(EncodeInput, ChannelsFollowStackOrder) {
  const CodeLayout layout(3);
  std::vector<Syndrome> stack(4, Syndrome(layout));
  stack[2].set({1, 2}, true);
  const InputTensor t = encode_input(stack, layout);
  EXPECT_EQ(t.channels, 4);
  EXPECT_EQ(t.at(2, 1, 2), -1.0);
  EXPECT_EQ(t.at(1, 1, 2), 1.0);
  EXPECT_EQ(t.at(3, 0, 0), 0.0);
}

TEST(EncodeInput, RejectsEmptyStack) {
  EXPECT_THROW(encode_input({}, CodeLayout(3)), std::invalid_argument);
}

}  // namespace
}  // namespace qeclab
