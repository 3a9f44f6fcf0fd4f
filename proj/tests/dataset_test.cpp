#include "qeclab/dataset.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

namespace qeclab {
namespace {

TEST(Label, Examples) {
  const CodeLayout l3(3);
  EXPECT_EQ(label_record(PauliError(l3), Syndrome(l3), l3), LogicalClass::I);

  PauliError top(l3);
  top.set({0, 2}, Pauli::X);
  EXPECT_EQ(label_record(top, syndrome_of(top, l3), l3), LogicalClass::I);

  const CodeLayout l5(5);
  PauliError mid(l5);
  mid.set({4, 4}, Pauli::X);
  EXPECT_EQ(label_record(mid, syndrome_of(mid, l5), l5), LogicalClass::X);

  EXPECT_THROW(label_record(top, Syndrome(l3), l3), std::invalid_argument);
}

TEST(Header, LayoutAndSizes) {
  const CodeLayout layout(5);
  const DatasetHeader h = make_header(layout, {NoiseKind::Phenomenological, 0.01, 0.01, 3}, 7, 99);
  EXPECT_EQ(h.channels, 4);
  EXPECT_EQ(h.cycles, 3);
  EXPECT_EQ(h.measurement_bits(), 40);
  EXPECT_EQ(h.channel_bytes(), 5u);
  EXPECT_EQ(h.record_bytes(), 21u);

  std::stringstream buf;
  write_header(buf, h);
  const std::string s = buf.str();
  ASSERT_EQ(s.size(), kDatasetHeaderBytes);
  EXPECT_EQ(s.substr(0, 4), "SYQD");
  EXPECT_EQ(static_cast<unsigned char>(s[4]), 1);   // version lo
  EXPECT_EQ(static_cast<unsigned char>(s[6]), 5);   // d lo
  EXPECT_EQ(static_cast<unsigned char>(s[8]), 4);   // C lo
  EXPECT_EQ(static_cast<unsigned char>(s[10]), 3);  // R lo
  EXPECT_EQ(static_cast<unsigned char>(s[12]), 1);  // noise kind
  EXPECT_EQ(static_cast<unsigned char>(s[29]), 7);  // count lo
  EXPECT_EQ(static_cast<unsigned char>(s[37]), 99); // seed lo
  EXPECT_EQ(read_header(buf), h);
}

TEST(Record, BitPacking) {
  const CodeLayout layout(3);
  Syndrome s(layout);
  s.set({0, 1}, true);  // measurement cell 0
  s.set({4, 3}, true);  // measurement cell 11
  unsigned char rec[3];
  pack_record({s}, LogicalClass::Z, layout, rec);
  EXPECT_EQ(rec[0], 2);
  EXPECT_EQ(rec[1], 0x01);
  EXPECT_EQ(rec[2], 0x08);
}

TEST(Generate, RejectsBadInput) {
  const CodeLayout layout(3);
  EXPECT_THROW(generate_dataset(layout, {NoiseKind::Depolarizing, 0.1}, 0, 1), std::invalid_argument);
  EXPECT_THROW(generate_dataset(layout, {NoiseKind::Depolarizing, 1.2}, 10, 1), std::invalid_argument);
  EXPECT_THROW(generate_dataset(layout, {NoiseKind::Phenomenological, 0.1, 0.1, 0}, 10, 1), std::invalid_argument);
}

TEST(Generate, RoundTripBothNoiseKinds) {
  const CodeLayout layout(5);
  for (const NoiseConfig noise : {NoiseConfig{NoiseKind::Depolarizing, 0.1}, NoiseConfig{NoiseKind::Phenomenological, 0.02, 0.02, 3}}) {
    const Dataset ds = generate_dataset(layout, noise, 300, 17);
    std::stringstream buf;
    write_dataset(buf, ds);
    EXPECT_EQ(buf.str().size(), kDatasetHeaderBytes + 300 * ds.record_bytes());
    const Dataset back = read_dataset(buf);
    EXPECT_EQ(back.header(), ds.header());
    EXPECT_EQ(back.bytes(), ds.bytes());
    const SeedSpec seed{17};
    for (std::size_t i = 0; i < 300; ++i) {
      const Sample s = draw_sample(layout, noise, seed, i);
      const RecordView v = back.view(i, layout);
      ASSERT_EQ(v.label, s.label);
      ASSERT_EQ(v.syndromes, s.syndromes);
    }
  }
}

TEST(Generate, DeterministicAcrossThreadCounts) {
  const CodeLayout layout(7);
  const NoiseConfig noise{NoiseKind::Depolarizing, 0.1};
  const Dataset a = generate_dataset(layout, noise, 1000, 5, 1);
  const Dataset b = generate_dataset(layout, noise, 1000, 5, 4);
  const Dataset c = generate_dataset(layout, noise, 1000, 5, 3);
  EXPECT_EQ(a.bytes(), b.bytes());
  EXPECT_EQ(a.bytes(), c.bytes());
  EXPECT_NE(a.bytes(), generate_dataset(layout, noise, 1000, 6, 1).bytes());
}

TEST(Generate, IdentityIsTheMostFrequentClass) {
  const CodeLayout layout(5);
  const Dataset ds = generate_dataset(layout, {NoiseKind::Depolarizing, 0.1}, 100000, 2024, 2);
  const auto h = ds.label_histogram();
  EXPECT_GT(h[0], h[1]);
  EXPECT_GT(h[0], h[2]);
  EXPECT_GT(h[0], h[3]);
  EXPECT_EQ(h[0] + h[1] + h[2] + h[3], 100000u);
}

TEST(Read, RejectsCorruptFiles) {
  std::stringstream bad("SYQX0000000000000000000000000000000000000000000000000");
  EXPECT_THROW(read_dataset(bad), std::runtime_error);

  const CodeLayout layout(3);
  const Dataset ds = generate_dataset(layout, {NoiseKind::Depolarizing, 0.1}, 10, 1);
  std::stringstream buf;
  write_dataset(buf, ds);
  const std::string s = buf.str();
  std::stringstream truncated(s.substr(0, s.size() - 1));
  EXPECT_THROW(read_dataset(truncated), std::runtime_error);
  std::stringstream trailing(s + "x");
  EXPECT_THROW(read_dataset(trailing), std::runtime_error);
  std::string bad_label = s;
  bad_label[kDatasetHeaderBytes] = 9;
  std::stringstream labelled(bad_label);
  EXPECT_THROW(read_dataset(labelled), std::runtime_error);
}

TEST(Chains, StructureAndMixture) {
  const CodeLayout layout(7);
  const AugmentationSpec spec{5};
  const SeedSpec seed{42};
  const int n = 10000;
  int kinds[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) {
    const ChainSample c = inject_chain(layout, spec, seed, i);
    kinds[static_cast<int>(c.kind)]++;
    ASSERT_EQ(c.x_chain.size(), c.kind == ChainKind::Z ? 0u : 5u);
    ASSERT_EQ(c.z_chain.size(), c.kind == ChainKind::X ? 0u : 5u);
    for (std::size_t k = 0; k < c.x_chain.size(); ++k) {
      ASSERT_EQ(CodeLayout::role(c.x_chain[k]), CellRole::Data);
      ASSERT_EQ(c.x_chain[k].col, c.x_chain[0].col);
      if (k) ASSERT_EQ(c.x_chain[k].row, c.x_chain[k - 1].row + 2);
    }
    for (std::size_t k = 0; k < c.z_chain.size(); ++k) {
      ASSERT_EQ(CodeLayout::role(c.z_chain[k]), CellRole::Data);
      ASSERT_EQ(c.z_chain[k].row, c.z_chain[0].row);
      if (k) ASSERT_EQ(c.z_chain[k].col, c.z_chain[k - 1].col + 2);
    }
    ASSERT_EQ(c.syndrome, syndrome_of(c.error, layout));
  }
  const double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
  for (int k : kinds) EXPECT_LT(std::abs(k - n / 3.0), 3 * sigma);
}

TEST(Chains, LengthOneIsASingleError) {
  const CodeLayout layout(5);
  for (int i = 0; i < 50; ++i) {
    const ChainSample c = inject_chain(layout, {1}, SeedSpec{7}, i);
    // The mixed kind draws one X and one Z cell independently.
    EXPECT_EQ(c.error.weight(), c.kind == ChainKind::Both ? c.z_chain[0] == c.x_chain[0] ? 1u : 2u : 1u);
  }
  EXPECT_THROW(inject_chain(layout, {6}, SeedSpec{7}, 0), std::invalid_argument);
  EXPECT_THROW(inject_chain(layout, {0}, SeedSpec{7}, 0), std::invalid_argument);
}

TEST(Chains, FullSpanChainsAreLogical) {
  // L = d only fits on even lines, where a single chain spans the lattice.
  const CodeLayout layout(5);
  for (int i = 0; i < 300; ++i) {
    const ChainSample c = inject_chain(layout, {5}, SeedSpec{8}, i);
    EXPECT_NE(c.label, LogicalClass::I);
    const LogicalClass expect = c.kind == ChainKind::X ? LogicalClass::X
                                : c.kind == ChainKind::Z ? LogicalClass::Z
                                                         : LogicalClass::Y;
    EXPECT_EQ(c.label, expect);
  }
}

TEST(Enhanced, CountsRatiosAndDeterminism) {
  const CodeLayout layout(5);
  const EnhancedCounts counts{200, 1000, 0.1, 200, 0.13};
  const Dataset a = build_enhanced_set(layout, {5}, counts, 9, 1);
  EXPECT_EQ(a.size(), 1400u);
  EXPECT_DOUBLE_EQ(a.header().p, 0.1);
  EXPECT_DOUBLE_EQ(a.header().q, 0.13);
  EXPECT_EQ(a.bytes(), build_enhanced_set(layout, {5}, counts, 9, 3).bytes());

  // Shuffling permutes records: the multiset is the concatenation.
  std::multiset<std::string> shuffled;
  for (std::size_t i = 0; i < a.size(); ++i) {
    shuffled.emplace(reinterpret_cast<const char*>(a.record(i)), a.record_bytes());
  }
  const SeedSpec root{9};
  Dataset parts = generate_chain_dataset(layout, {5}, 200, root.substream(1).record_seed(0));
  parts.append(generate_dataset(layout, {NoiseKind::Depolarizing, 0.1}, 1000, root.substream(2).record_seed(0)));
  parts.append(generate_dataset(layout, {NoiseKind::Depolarizing, 0.13}, 200, root.substream(3).record_seed(0)));
  std::multiset<std::string> concat;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    concat.emplace(reinterpret_cast<const char*>(parts.record(i)), parts.record_bytes());
  }
  EXPECT_EQ(shuffled, concat);
  EXPECT_NE(a.bytes(), parts.bytes());

  EXPECT_THROW(build_enhanced_set(layout, {5}, {0, 0, 0.1, 0, 0.13}, 1), std::invalid_argument);
}

TEST(Split, FloorRuleAndDeterminism) {
  const Split s = split_eval(100000, 0.1, 3);
  EXPECT_EQ(s.eval.size(), 10000u);
  EXPECT_EQ(s.train.size(), 90000u);
  const Split small = split_eval(3, 0.5, 3);
  EXPECT_EQ(small.eval.size(), 1u);
  EXPECT_EQ(small.train.size(), 2u);
  EXPECT_EQ(split_eval(3, 0.5, 3).eval, small.eval);
  std::set<std::size_t> all(s.eval.begin(), s.eval.end());
  all.insert(s.train.begin(), s.train.end());
  EXPECT_EQ(all.size(), 100000u);
  EXPECT_THROW(split_eval(10, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(split_eval(10, 1.0, 1), std::invalid_argument);
}

TEST(Source, FillsEncodedInputs) {
  const CodeLayout layout(5);
  const NoiseConfig noise{NoiseKind::Phenomenological, 0.05, 0.05, 3};
  const Dataset ds = generate_dataset(layout, noise, 50, 4);
  const DatasetSource src(ds);
  EXPECT_EQ(src.size(), 50u);
  EXPECT_EQ(src.shape(), (nn::Shape3{4, 9, 9}));
  std::vector<double> buf(4 * 81);
  const SeedSpec seed{4};
  for (std::size_t i = 0; i < 50; ++i) {
    src.fill(i, buf.data());
    const Sample s = draw_sample(layout, noise, seed, i);
    EXPECT_EQ(buf, encode_input(s.syndromes, layout).values);
    EXPECT_EQ(src.label(i), static_cast<int>(s.label));
  }
  const DatasetSource sub(ds, {3, 7});
  EXPECT_EQ(sub.size(), 2u);
  EXPECT_EQ(sub.label(1), ds.label(7));
  EXPECT_THROW(DatasetSource(ds, {50}), std::out_of_range);
}

}  // namespace
}  // namespace qeclab
