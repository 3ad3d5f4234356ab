#include "dsac/adam.hpp"
#include "dsac/architecture.hpp"
#include "dsac/gradcheck.hpp"
#include "dsac/layer.hpp"
#include "dsac/network.hpp"
#include "dsac/ops.hpp"
#include "dsac/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace dsac {
namespace {

MatD mat(std::initializer_list<std::initializer_list<double>> rows) {
  MatD m(Index(rows.size()), Index(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

MatD random_matrix(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  MatD m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

TEST(Tensor, RejectsShapeDataMismatch) {
  EXPECT_THROW(TensorF({2, 3}, VecF::Zero(5)), ShapeError);
  EXPECT_THROW(TensorF(Shape{0, 3}), ShapeError);
  TensorF t({2, 3});
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(shape_product(t.shape()), t.size());
}

TEST(Matmul, IdentityAndHandValues) {
  EXPECT_EQ(matmul(MatD::Identity(2, 2), mat({{3}, {4}})), mat({{3}, {4}}));
  EXPECT_EQ(matmul(mat({{1, 2}, {3, 4}}), mat({{1}, {1}})), mat({{3}, {7}}));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(MatD::Zero(2, 3), MatD::Zero(2, 3));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(ExtractPatches, SmallImageEnumeratesReceptiveFields) {
  TensorD img({1, 3, 3});
  for (Index i = 0; i < 9; ++i) img[i] = double(i + 1);
  const MatD p = extract_patches(img, 2, 1);
  ASSERT_EQ(p.rows(), 4);
  ASSERT_EQ(p.cols(), 4);
  EXPECT_EQ(p, mat({{1, 2, 4, 5}, {2, 3, 5, 6}, {4, 5, 7, 8}, {5, 6, 8, 9}}));
}

TEST(ExtractPatches, AtariFirstLayerGeometry) {
  const MatF p = extract_patches(TensorF({4, 84, 84}), 8, 4);
  EXPECT_EQ(p.rows(), 400);
  EXPECT_EQ(p.cols(), 256);
}

TEST(ExtractPatches, FullWindowIsFlattenedInput) {
  TensorD img({2, 3, 3});
  for (Index i = 0; i < img.size(); ++i) img[i] = 0.5 * double(i);
  const MatD p = extract_patches(img, 3, 1);
  ASSERT_EQ(p.rows(), 1);
  EXPECT_EQ(RowVec<double>(p.row(0)), img.row());
}

TEST(ExtractPatches, KernelLargerThanImageIsGeometryError) {
  EXPECT_THROW(extract_patches(TensorD({1, 3, 3}), 4, 1), GeometryError);
}

TEST(FoldPatches, IsAdjointOfExtraction) {
  std::mt19937_64 rng(3);
  const ConvGeometry g{2, 7, 6, 3, 2, 0, 1};
  const MatD x = random_matrix(2, g.in_features(), rng);
  const MatD y = random_matrix(2 * g.patch_count(), g.patch_dim(), rng);
  const double lhs = (extract_patches(x, g).array() * y.array()).sum();
  const double rhs = (x.array() * fold_patches(y, g).array()).sum();
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(DenseForward, HandValues) {
  auto p = LayerParams<double>::dense(2, 1);
  p.weights = mat({{1, 1}});
  p.bias = VecD::Ones(1);
  EXPECT_EQ(dense_forward(p, mat({{2, 3}})), mat({{6}}));

  auto id = LayerParams<double>::dense(3, 3);
  id.weights = MatD::Identity(3, 3);
  const MatD x = mat({{1, -2, 3}});
  EXPECT_EQ(dense_forward(id, x), x);

  EXPECT_EQ(dense_forward(id, MatD(0, 3)).rows(), 0);
  EXPECT_THROW(dense_forward(id, MatD::Zero(1, 2)), ShapeError);
}

TEST(ConvForward, OnesKernelSumsWindows) {
  auto p = LayerParams<double>::conv({1, 3, 3, 2, 1, 0, 1});
  p.weights.setOnes();
  const MatD out = conv_forward(p, MatD::Ones(1, 9));
  EXPECT_EQ(out, MatD::Constant(1, 4, 4.0));
}

TEST(ConvForward, UnitKernelIsChannelIdentity) {
  auto p = LayerParams<double>::conv({3, 4, 5, 1, 1, 0, 3});
  p.weights = MatD::Identity(3, 3);
  std::mt19937_64 rng(1);
  const MatD x = random_matrix(2, 60, rng);
  EXPECT_TRUE(conv_forward(p, x).isApprox(x, 1e-15));
}

TEST(ConvForward, AtariGeometryChain) {
  const ConvGeometry c1{4, 84, 84, 8, 4, 0, 32};
  const ConvGeometry c2{32, c1.out_height(), c1.out_width(), 4, 2, 0, 64};
  const ConvGeometry c3{64, c2.out_height(), c2.out_width(), 3, 1, 0, 64};
  EXPECT_EQ(c1.out_height(), 20);
  EXPECT_EQ(c2.out_height(), 9);
  EXPECT_EQ(c3.out_height(), 7);
  EXPECT_EQ(c3.out_features(), 3136);
}

TEST(ConvForward, MatchesPatchwiseDenseOnRandomInputs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const ConvGeometry g{2, 6 + trial % 3, 7, 3, 1 + trial % 2, 0, 4};
    auto p = LayerParams<double>::conv(g);
    p.weights = random_matrix(4, g.patch_dim(), rng);
    p.bias = random_matrix(4, 1, rng).col(0);
    const MatD x = random_matrix(3, g.in_features(), rng);
    const MatD out = conv_forward(p, x);
    for (Index b = 0; b < 3; ++b) {
      TensorD img({g.in_channels, g.in_height, g.in_width}, x.row(b).transpose());
      const MatD patches = extract_patches(img, g.kernel, g.stride);
      const MatD dense = (patches * p.weights.transpose()).rowwise() + p.bias.transpose();
      for (Index c = 0; c < 4; ++c)
        for (Index i = 0; i < g.patch_count(); ++i)
          EXPECT_NEAR(out(b, c * g.patch_count() + i), dense(i, c), 1e-12);
    }
  }
}

TEST(LeakyRelu, HandValues) {
  const MatD y = leaky_relu(mat({{2, -1, 0}}), 0.01);
  EXPECT_DOUBLE_EQ(y(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(y(0, 1), -0.01);
  EXPECT_DOUBLE_EQ(y(0, 2), 0.0);
}

TEST(LogSoftmax, HandValuesAndStability) {
  const MatD a = log_softmax(mat({{0, 0}, {1000, 0}, {1, 0}}));
  EXPECT_NEAR(a(0, 0), -0.693147, 1e-6);
  EXPECT_NEAR(a(0, 1), -0.693147, 1e-6);
  EXPECT_NEAR(a(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(a(1, 1), -1000.0, 1e-9);
  EXPECT_NEAR(a(2, 0), -0.313262, 1e-6);
  EXPECT_NEAR(a(2, 1), -1.313262, 1e-6);
}

TEST(LogSoftmax, RowsExponentiateToOne) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const MatD logits = random_matrix(4, 1 + trial % 9, rng) * double(1 + trial % 50);
    const MatD p = log_softmax(logits).array().exp();
    for (Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-6);
    EXPECT_TRUE(all_finite(p));
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  VecD theta = VecD::Zero(1);
  VecD g = VecD::Constant(1, 3.0);
  auto state = AdamState<double>::zeros(1);
  adam_step<double>(theta, g, state, 0.001);
  EXPECT_NEAR(theta[0], -0.001, 1e-9);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ZeroGradientLeavesParametersButAdvancesStep) {
  VecD theta = VecD::LinSpaced(4, -1, 1);
  const VecD before = theta;
  auto state = AdamState<double>::zeros(4);
  adam_step<double>(theta, VecD::Zero(4), state, 0.1);
  EXPECT_EQ(theta, before);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ConstantPositiveGradientDecreasesMonotonically) {
  VecD theta = VecD::Zero(1);
  auto state = AdamState<double>::zeros(1);
  double last = theta[0];
  for (int i = 0; i < 2; ++i) {
    adam_step<double>(theta, VecD::Ones(1), state, 0.01);
    EXPECT_LT(theta[0], last);
    last = theta[0];
  }
}

TEST(Adam, ShapeMismatchThrows) {
  VecD theta = VecD::Zero(2);
  auto state = AdamState<double>::zeros(2);
  EXPECT_THROW(adam_step<double>(theta, VecD::Zero(3), state, 0.1), ShapeError);
}

TEST(Backward, SquaredLossDenseGradientMatchesHandFormula) {
  std::mt19937_64 rng(2);
  auto p = LayerParams<double>::dense(3, 3);
  p.weights = MatD::Identity(3, 3);
  // Positive inputs keep leaky ReLU in its identity branch.
  const MatD x = random_matrix(4, 3, rng).cwiseAbs().array() + 0.1;
  const MatD target = random_matrix(4, 3, rng);
  NetworkD net({p}, 0.01);
  const auto trace = net.forward(x);
  const MatD upstream = (trace.output - target) / 4.0;
  const auto g = net.backward(trace, upstream);
  EXPECT_TRUE(g.weights[0].isApprox(upstream.transpose() * x, 1e-12));
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(4);
  ArchitectureOptions arch;
  arch.vector_hidden = {5, 5};
  arch.hidden_units = 6;
  const NetworkD net = build_network<double>({7}, 3, true, arch, rng, 0.0, 9.0);
  const auto trace = net.forward(random_matrix(2, 7, rng));
  const auto g = net.backward(trace, MatD::Zero(2, 3));
  EXPECT_EQ(g.flat().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.input.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, WithoutForwardIsStateError) {
  std::mt19937_64 rng(4);
  const NetworkD net = build_network<double>({4}, 2, false, ArchitectureOptions{}, rng, 0.0, 9.0);
  EXPECT_THROW(net.backward(ForwardTrace<double>{}, MatD::Zero(1, 2)), StateError);
}

TEST(Gradcheck, AllLayerKindsAndLossesWithinTolerance) {
  const auto report = run_gradcheck(50);
  for (const auto& c : report.cases) {
    EXPECT_TRUE(c.passed) << c.name << " max rel err " << c.max_relative_error;
    EXPECT_EQ(c.configurations, 50) << c.name;
  }
}

TEST(Gradcheck, FiniteDifferenceOfQuadratic) {
  VecD x(3);
  x << 1.0, -2.0, 0.5;
  const VecD g = finite_difference_gradient([](const VecD& v) { return v.squaredNorm(); }, x);
  EXPECT_LT(max_relative_error(2.0 * x, g), 1e-8);
}

TEST(KaimingInit, BoundsAndZeroBias) {
  std::mt19937_64 rng(9);
  auto p = LayerParams<float>::dense(100, 50);
  kaiming_uniform(p, 0.01f, rng);
  const double bound = std::sqrt(2.0 / (1.0 + 1e-4)) * std::sqrt(3.0 / 100.0);
  EXPECT_LE(p.weights.cwiseAbs().maxCoeff(), bound + 1e-6);
  EXPECT_GT(p.weights.cwiseAbs().maxCoeff(), 0.8 * bound);
  EXPECT_EQ(p.bias.cwiseAbs().maxCoeff(), 0.0f);
}

}  // namespace
}  // namespace dsac
