#include "qeclab/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace qeclab::nn {
namespace {

double uniform(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = uniform(rng);
  return t;
}

// Direct-loop cross-correlation used as an independent oracle.
Tensor naive_conv(const Tensor& in, const Tensor& k, const Tensor& bias, int stride, int dil, Padding pad) {
  const int C = static_cast<int>(in.shape[0]), H = static_cast<int>(in.shape[1]), W = static_cast<int>(in.shape[2]);
  const int F = static_cast<int>(k.shape[0]), KH = static_cast<int>(k.shape[2]), KW = static_cast<int>(k.shape[3]);
  int pt = 0, pl = 0, ph = 0, pw = 0;
  if (pad == Padding::Same) {
    ph = (KH - 1) * dil;
    pw = (KW - 1) * dil;
    pt = ph / 2;
    pl = pw / 2;
  }
  const int OH = (H + ph - ((KH - 1) * dil + 1)) / stride + 1;
  const int OW = (W + pw - ((KW - 1) * dil + 1)) / stride + 1;
  Tensor out({static_cast<std::size_t>(F), static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)});
  for (int f = 0; f < F; ++f)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox) {
        double acc = bias.data[f];
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < KH; ++i)
            for (int j = 0; j < KW; ++j) {
              const int y = oy * stride + i * dil - pt;
              const int x = ox * stride + j * dil - pl;
              if (y < 0 || x < 0 || y >= H || x >= W) continue;
              acc += in.data[(c * H + y) * W + x] * k.data[((f * C + c) * KH + i) * KW + j];
            }
        out.data[(f * OH + oy) * OW + ox] = acc;
      }
  return out;
}

TEST(Conv2d, OnesGiveNine) {
  const Tensor in({1, 3, 3}, 1.0);
  const Tensor k({1, 1, 3, 3}, 1.0);
  const Tensor b({1}, 0.0);
  const Tensor out = conv2d(in, k, b, 1, 1, Padding::Valid);
  ASSERT_EQ(out.shape, (std::vector<std::size_t>{1, 1, 1}));
  EXPECT_DOUBLE_EQ(out.data[0], 9.0);
}

TEST(Conv2d, OutputExtents) {
  EXPECT_EQ(conv_output_extent(13, 3, 1, 1, Padding::Same), 13);
  EXPECT_EQ(conv_output_extent(13, 3, 1, 1, Padding::Valid), 11);
  EXPECT_EQ(conv_output_extent(13, 3, 1, 2, Padding::Valid), 9);
  EXPECT_EQ(conv_output_extent(13, 3, 2, 1, Padding::Same), 7);
  EXPECT_EQ(conv_output_extent(9, 3, 2, 1, Padding::Valid), 4);
  EXPECT_EQ(conv_output_extent(3, 3, 1, 2, Padding::Valid), 0);
}

TEST(Conv2d, MatchesDirectLoops) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const int stride = 1 + trial % 2;
    const int dil = 1 + (trial / 2) % 2;
    const Padding pad = (trial / 4) % 2 ? Padding::Same : Padding::Valid;
    const Tensor in = random_tensor({3, 9, 8}, rng);
    const Tensor k = random_tensor({4, 3, 3, 3}, rng);
    const Tensor b = random_tensor({4}, rng);
    const Tensor fast = conv2d(in, k, b, stride, dil, pad);
    const Tensor slow = naive_conv(in, k, b, stride, dil, pad);
    ASSERT_EQ(fast.shape, slow.shape);
    for (std::size_t i = 0; i < fast.size(); ++i) ASSERT_NEAR(fast.data[i], slow.data[i], 1e-12);
  }
}

TEST(Conv2d, DilationEqualsZeroInflatedKernel) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor in = random_tensor({2, 11, 11}, rng);
    const Tensor k = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    Tensor inflated({3, 2, 5, 5}, 0.0);
    for (int f = 0; f < 3; ++f)
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            inflated.data[((f * 2 + c) * 5 + 2 * i) * 5 + 2 * j] = k.data[((f * 2 + c) * 3 + i) * 3 + j];
    const Padding pad = trial % 2 ? Padding::Same : Padding::Valid;
    const Tensor dilated = conv2d(in, k, b, 1, 2, pad);
    const Tensor reference = conv2d(in, inflated, b, 1, 1, pad);
    ASSERT_EQ(dilated.shape, reference.shape);
    for (std::size_t i = 0; i < dilated.size(); ++i) ASSERT_NEAR(dilated.data[i], reference.data[i], 1e-12);
  }
}

TEST(Conv2d, RejectsBadShapes) {
  const Tensor in({2, 3, 3}, 1.0);
  EXPECT_THROW(conv2d(in, Tensor({1, 1, 3, 3}), Tensor({1}), 1, 1, Padding::Valid), std::invalid_argument);
  EXPECT_THROW(conv2d(in, Tensor({1, 2, 3, 3}), Tensor({1}), 1, 2, Padding::Valid), std::invalid_argument);
}

ModelSpec small_cnn() {
  return ModelSpec{{2, 7, 7},
                   {Conv2D{4, 3, 3, 1, 1, Padding::Same}, Activation{ActivationKind::Relu},
                    Conv2D{3, 3, 3, 1, 2, Padding::Valid}, Activation{ActivationKind::Relu},
                    Conv2D{3, 3, 3, 2, 1, Padding::Same}, Activation{ActivationKind::Relu}, Flatten{}, Dense{6},
                    Activation{ActivationKind::Relu}, Dense{4}, Activation{ActivationKind::Softmax}},
                   4};
}

TEST(Model, ShapeInferenceAndCounts) {
  const ModelSpec spec = small_cnn();
  const auto shapes = infer_shapes(spec);
  EXPECT_EQ(shapes[0].height, 7);
  EXPECT_EQ(shapes[2].height, 3);
  EXPECT_EQ(shapes[4].height, 2);
  EXPECT_EQ(shapes[6].size(), 12);
  const std::size_t expected = (4 * 2 * 9 + 4) + (3 * 4 * 9 + 3) + (3 * 3 * 9 + 3) + (12 * 6 + 6) + (6 * 4 + 4);
  EXPECT_EQ(param_count(spec), expected);

  const ModelSpec head{{512, 1, 1}, {Flatten{}, Dense{4}, Activation{ActivationKind::Softmax}}, 4};
  EXPECT_EQ(param_count(head), 2052u);
}

TEST(Model, ValidationErrors) {
  ModelSpec no_softmax{{1, 5, 5}, {Flatten{}, Dense{4}}, 4};
  EXPECT_THROW(validate(no_softmax), std::invalid_argument);
  ModelSpec early_softmax{{1, 5, 5}, {Flatten{}, Activation{ActivationKind::Softmax}, Dense{4},
                                      Activation{ActivationKind::Softmax}}, 4};
  EXPECT_THROW(validate(early_softmax), std::invalid_argument);
  ModelSpec dense_on_grid{{1, 5, 5}, {Dense{4}, Activation{ActivationKind::Softmax}}, 4};
  EXPECT_THROW(validate(dense_on_grid), std::invalid_argument);
  ModelSpec shrinks_away{{1, 3, 3}, {Conv2D{2, 3, 3, 1, 1, Padding::Valid}, Conv2D{2, 3, 3, 1, 1, Padding::Valid},
                                     Flatten{}, Dense{4}, Activation{ActivationKind::Softmax}}, 4};
  EXPECT_THROW(validate(shrinks_away), std::invalid_argument);
  ModelSpec zero_stride{{1, 5, 5}, {Conv2D{2, 3, 3, 0, 1, Padding::Valid}, Flatten{}, Dense{4},
                                    Activation{ActivationKind::Softmax}}, 4};
  EXPECT_THROW(validate(zero_stride), std::invalid_argument);
}

TEST(Forward, ZeroWeightsGiveUniform) {
  const ModelSpec spec = small_cnn();
  const Parameters params = zero_parameters(spec);
  std::vector<double> input(2 * 7 * 7, 1.0);
  const auto probs = forward(spec, params, input);
  for (double p : probs) EXPECT_DOUBLE_EQ(p, 0.25);
  EXPECT_NEAR(loss_xent(probs, 2), std::log(4.0), 1e-15);
}

TEST(Forward, ProbabilitiesSumToOne) {
  const ModelSpec spec = small_cnn();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Parameters params = init_parameters(spec, static_cast<std::uint64_t>(trial));
    for (auto& t : params.tensors)
      for (double& v : t.data) v *= 3.0;
    std::vector<double> input(2 * 7 * 7);
    for (double& v : input) v = uniform(rng);
    const auto probs = forward(spec, params, input);
    double sum = 0.0;
    for (double p : probs) {
      EXPECT_GE(p, 0.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Forward, ArgmaxInvariantUnderLogitShift) {
  const ModelSpec spec = small_cnn();
  Parameters params = init_parameters(spec, 9);
  std::vector<double> input(2 * 7 * 7, -1.0);
  const auto before = forward(spec, params, input);
  for (double& b : params.tensors.back().data) b += 17.5;
  const auto after = forward(spec, params, input);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(before[i], after[i], 1e-12);
}

TEST(Loss, FloorAndIdentity) {
  EXPECT_NEAR(loss_xent(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 0), 1.3862943611198906, 1e-12);
  EXPECT_EQ(loss_xent(std::vector<double>{0.0, 1.0, 0.0, 0.0}, 1), 0.0);
  const double tiny = loss_xent(std::vector<double>{1e-15, 1.0, 0.0, 0.0}, 0);
  EXPECT_TRUE(std::isfinite(tiny));
  EXPECT_NEAR(tiny, -std::log(1e-12), 1e-9);
  EXPECT_THROW(loss_xent(std::vector<double>{1.0}, 3), std::invalid_argument);
}

// Central differences on randomly chosen parameters of every tensor.
void gradient_check(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Parameters params = init_parameters(spec, seed);
  for (auto& t : params.tensors)
    for (double& v : t.data) v += 0.05 * uniform(rng);
  const int in_size = spec.input.channels * spec.input.height * spec.input.width;
  std::vector<double> input(static_cast<std::size_t>(in_size));
  for (double& v : input) v = uniform(rng);
  const int label = static_cast<int>(rng() % 4);
  const Parameters grads = backward(spec, params, input, label);
  const double h = 1e-5;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    for (int probe = 0; probe < 20; ++probe) {
      const std::size_t i = rng() % params.tensors[t].size();
      const double saved = params.tensors[t].data[i];
      params.tensors[t].data[i] = saved + h;
      const double lp = loss_xent(forward(spec, params, input), label);
      params.tensors[t].data[i] = saved - h;
      const double lm = loss_xent(forward(spec, params, input), label);
      params.tensors[t].data[i] = saved;
      const double numeric = (lp - lm) / (2 * h);
      const double analytic = grads.tensors[t].data[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      EXPECT_LT(std::abs(numeric - analytic) / denom, 1e-4)
          << "tensor " << t << " index " << i << " numeric " << numeric << " analytic " << analytic;
    }
  }
}

TEST(Backward, GradientCheckConvStack) { gradient_check(small_cnn(), 21); }

TEST(Backward, GradientCheckDenseStack) {
  const ModelSpec spec{{1, 5, 5}, {Flatten{}, Dense{7}, Activation{ActivationKind::Relu}, Dense{5},
                                   Activation{ActivationKind::Relu}, Dense{4}, Activation{ActivationKind::Softmax}}, 4};
  gradient_check(spec, 22);
}

TEST(Backward, GradientCheckDilatedSamePadding) {
  const ModelSpec spec{{1, 9, 9}, {Conv2D{3, 3, 3, 1, 2, Padding::Same}, Activation{ActivationKind::Relu},
                                   Conv2D{2, 3, 3, 1, 2, Padding::Valid}, Flatten{}, Dense{4},
                                   Activation{ActivationKind::Softmax}}, 4};
  gradient_check(spec, 23);
}

TEST(Backward, BiasGradientIsSoftmaxMinusOneHot) {
  // Zero input and zero hidden weights: only the output bias path is live.
  const ModelSpec spec{{1, 3, 3}, {Flatten{}, Dense{4}, Activation{ActivationKind::Softmax}}, 4};
  Parameters params = init_parameters(spec, 5);
  params.tensors[1].data = {0.3, -0.2, 0.1, 0.5};
  const std::vector<double> input(9, 0.0);
  const auto probs = forward(spec, params, input);
  const Parameters grads = backward(spec, params, input, 2);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(grads.tensors[1].data[k], probs[k] - (k == 2 ? 1.0 : 0.0), 1e-14);
  for (double w : grads.tensors[0].data) EXPECT_EQ(w, 0.0);
}

TEST(Backward, ReluSubgradientAtZeroIsZero) {
  // Hidden pre-activations are exactly zero: nothing flows to the first layer.
  const ModelSpec spec{{1, 2, 2}, {Flatten{}, Dense{3}, Activation{ActivationKind::Relu}, Dense{4},
                                   Activation{ActivationKind::Softmax}}, 4};
  Parameters params = init_parameters(spec, 6);
  const std::vector<double> input(4, 0.0);
  const Parameters grads = backward(spec, params, input, 1);
  for (double g : grads.tensors[0].data) EXPECT_EQ(g, 0.0);
  for (double g : grads.tensors[1].data) EXPECT_EQ(g, 0.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  const ModelSpec spec = small_cnn();
  Parameters params = init_parameters(spec, 1);
  const Parameters before = params;
  AdamState state = AdamState::for_parameters(params);
  adam_step(params, zero_parameters(spec), state, {});
  EXPECT_EQ(state.step, 1);
  for (std::size_t t = 0; t < params.tensors.size(); ++t) EXPECT_EQ(params.tensors[t].data, before.tensors[t].data);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  Parameters params;
  params.tensors.push_back(Tensor({3}, 0.0));
  Parameters grads;
  grads.tensors.push_back(Tensor({3}));
  grads.tensors[0].data = {0.5, -2.0, 1e-3};
  AdamState state;
  const AdamConfig cfg;
  double prev[3] = {0, 0, 0};
  for (int i = 0; i < 200; ++i) {
    for (int k = 0; k < 3; ++k) prev[k] = params.tensors[0].data[k];
    adam_step(params, grads, state, cfg);
  }
  EXPECT_EQ(state.step, 200);
  for (int k = 0; k < 3; ++k) {
    const double step = params.tensors[0].data[k] - prev[k];
    const double sign = grads.tensors[0].data[k] > 0 ? -1.0 : 1.0;
    EXPECT_NEAR(step, sign * cfg.learning_rate, 1e-5 * cfg.learning_rate);
  }
}

class ToySource : public SampleSource {
 public:
  ToySource(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n; ++i) {
      std::vector<double> x(25);
      for (double& v : x) v = (rng() & 1U) ? 1.0 : -1.0;
      // Label = quadrant with the largest sum.
      double sums[4] = {0, 0, 0, 0};
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) sums[(r >= 3) * 2 + (c >= 3)] += x[r * 5 + c];
      labels_.push_back(static_cast<int>(std::max_element(sums, sums + 4) - sums));
      data_.push_back(std::move(x));
    }
  }
  std::size_t size() const override { return data_.size(); }
  Shape3 shape() const override { return {1, 5, 5}; }
  void fill(std::size_t i, double* out) const override { std::copy(data_[i].begin(), data_[i].end(), out); }
  int label(std::size_t i) const override { return labels_[i]; }

 private:
  std::vector<std::vector<double>> data_;
  std::vector<int> labels_;
};

ModelSpec toy_cnn() {
  return ModelSpec{{1, 5, 5}, {Conv2D{8, 3, 3, 1, 1, Padding::Same}, Activation{ActivationKind::Relu}, Flatten{},
                               Dense{16}, Activation{ActivationKind::Relu}, Dense{4},
                               Activation{ActivationKind::Softmax}}, 4};
}

TEST(Train, LossDecreasesOnToyProblem) {
  const ToySource data(200, 3);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 17;
  const TrainResult r = train(toy_cnn(), data, cfg);
  ASSERT_EQ(r.history.size(), 5u);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
}

TEST(Train, BitReproducible) {
  const ToySource data(100, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 5;
  const TrainResult a = train(toy_cnn(), data, cfg);
  const TrainResult b = train(toy_cnn(), data, cfg);
  for (std::size_t t = 0; t < a.params.tensors.size(); ++t) EXPECT_EQ(a.params.tensors[t].data, b.params.tensors[t].data);
}

TEST(Train, WarmStartUsesInitialParameters) {
  const ToySource data(100, 4);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 5;
  const TrainResult first = train(toy_cnn(), data, cfg);
  TrainConfig warm = cfg;
  warm.init_parameters = &first.params;
  const TrainResult second = train(toy_cnn(), data, warm);
  // The warm-started run begins where the first ended, so its first-epoch
  // loss is below the cold run's first-epoch loss.
  EXPECT_LT(second.history.front().train_loss, first.history.front().train_loss);
}

TEST(Train, RejectsBadConfig) {
  const ToySource data(10, 1);
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(train(toy_cnn(), data, cfg), std::invalid_argument);
  cfg.batch_size = 4;
  cfg.epochs = 0;
  EXPECT_THROW(train(toy_cnn(), data, cfg), std::invalid_argument);
  ModelSpec wrong = toy_cnn();
  wrong.input = {2, 5, 5};
  cfg.epochs = 1;
  EXPECT_THROW(train(wrong, data, cfg), std::invalid_argument);
}

}  // namespace
}  // namespace qeclab::nn
