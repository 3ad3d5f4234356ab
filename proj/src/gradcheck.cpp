#include "dsac/gradcheck.hpp"

#include "dsac/network.hpp"
#include "dsac/rng.hpp"
#include "dsac/sac_losses.hpp"

#include <cmath>
#include <random>

namespace dsac {

VecD finite_difference_gradient(const std::function<double(const VecD&)>& f, const VecD& x,
                                double h) {
  VecD grad(x.size());
  VecD probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const VecD& analytic, const VecD& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("gradient sizes differ");
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

namespace {

// Finite differences straddling a leaky-ReLU kink are meaningless; such draws are rejected.
constexpr double kKinkMargin = 1e-3;

MatD normal_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatD m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Index uniform_index(Index lo, Index hi, Rng& rng) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

double uniform_real(double lo, double hi, Rng& rng) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool away_from_kinks(const ForwardTrace<double>& t) {
  for (const auto& l : t.layers)
    if (l.pre_activation.size() && l.pre_activation.cwiseAbs().minCoeff() < kKinkMargin) return false;
  return true;
}

double weighted_sum(const MatD& r, const MatD& y) { return (r.array() * y.array()).sum(); }

VecD flatten(const MatD& m) { return m.reshaped<Eigen::RowMajor>(); }

MatD unflatten(const VecD& v, Index rows, Index cols) {
  return Eigen::Map<const MatD>(v.data(), rows, cols);
}

void randomize(NetworkD& net, Rng& rng, bool decorrelate) {
  VecD p = net.flat_parameters();
  std::normal_distribution<double> n(0.0, 0.6);
  for (Index i = 0; i < p.size(); ++i) p[i] = n(rng);
  net.set_flat_parameters(p);
  if (!decorrelate) return;
  for (Index l = 0; l < net.layer_count(); ++l) {
    const Index d = net.layer(l).row_dim();
    auto kind = net.layer(l).kind == LayerKind::Conv ? DecorrelationKind::Patchwise
                                                     : DecorrelationKind::Dense;
    DecorrelationState<double> s{MatD::Identity(d, d) + normal_matrix(d, d, rng, 0.2), 0.0, kind, 9.0};
    net.set_decorrelation(l, std::move(s));
  }
}

NetworkD random_dense_net(Rng& rng, Index in, Index out, double slope) {
  const Index hidden = uniform_index(2, 6, rng);
  std::vector<LayerParams<double>> layers{LayerParams<double>::dense(in, hidden),
                                          LayerParams<double>::dense(hidden, out)};
  return NetworkD(std::move(layers), slope);
}

NetworkD random_conv_net(Rng& rng, Index out, double slope, Index& in_features) {
  ConvGeometry g;
  g.in_channels = uniform_index(1, 2, rng);
  g.kernel = uniform_index(1, 3, rng);
  g.stride = uniform_index(1, 2, rng);
  g.in_height = g.kernel + uniform_index(0, 3, rng);
  g.in_width = g.kernel + uniform_index(0, 3, rng);
  g.out_channels = uniform_index(1, 3, rng);
  std::vector<LayerParams<double>> layers{LayerParams<double>::conv(g),
                                          LayerParams<double>::dense(g.out_features(), out)};
  in_features = g.in_features();
  return NetworkD(std::move(layers), slope);
}

// Weighted-sum loss through a network: checks parameter and input gradients.
double check_network(const NetworkD& net, const MatD& input, const MatD& weights) {
  const auto trace = net.forward(input);
  const auto g = net.backward(trace, weights, true);
  NetworkD work = net;
  const VecD theta = net.flat_parameters();
  const VecD numeric_params = finite_difference_gradient(
      [&](const VecD& p) {
        work.set_flat_parameters(p);
        return weighted_sum(weights, work.predict(input));
      },
      theta);
  const VecD numeric_input = finite_difference_gradient(
      [&](const VecD& x) { return weighted_sum(weights, net.predict(unflatten(x, input.rows(), input.cols()))); },
      flatten(input));
  return std::max(max_relative_error(g.flat(), numeric_params),
                  max_relative_error(flatten(g.input), numeric_input));
}

template <typename Draw>
GradcheckCase run_case(const std::string& name, int configurations, Rng& rng, double tol, Draw draw) {
  GradcheckCase c{name, 0, 0.0, false};
  int attempts = 0;
  while (c.configurations < configurations) {
    if (++attempts > configurations * 50) break;
    const std::optional<double> err = draw(rng);
    if (!err) continue;  // rejected draw (near a kink)
    ++c.configurations;
    c.max_relative_error = std::max(c.max_relative_error, *err);
  }
  c.passed = c.configurations == configurations && c.max_relative_error < tol;
  return c;
}

std::optional<double> draw_network(Rng& rng, bool conv, bool decorrelate) {
  const double slope = uniform_real(0.01, 0.3, rng);
  const Index out = uniform_index(1, 4, rng);
  Index in = uniform_index(2, 6, rng);
  NetworkD net = conv ? random_conv_net(rng, out, slope, in) : random_dense_net(rng, in, out, slope);
  randomize(net, rng, decorrelate);
  const Index batch = uniform_index(1, 3, rng);
  const MatD input = normal_matrix(batch, in, rng);
  if (!away_from_kinks(net.forward(input))) return std::nullopt;
  return check_network(net, input, normal_matrix(batch, out, rng));
}

// Small actor / critic network over either a flat or an image observation.
struct SacFixture {
  NetworkD net;
  MatD states;
  Index actions = 0;
};

std::optional<SacFixture> draw_sac_fixture(Rng& rng) {
  const double slope = uniform_real(0.01, 0.3, rng);
  const Index actions = uniform_index(2, 4, rng);
  const bool conv = std::bernoulli_distribution(0.5)(rng);
  Index in = uniform_index(2, 6, rng);
  NetworkD net = conv ? random_conv_net(rng, actions, slope, in)
                      : random_dense_net(rng, in, actions, slope);
  randomize(net, rng, std::bernoulli_distribution(0.5)(rng));
  const MatD states = normal_matrix(uniform_index(1, 4, rng), in, rng);
  if (!away_from_kinks(net.forward(states))) return std::nullopt;
  return SacFixture{std::move(net), states, actions};
}

double check_parameters(const NetworkD& net, const ForwardTrace<double>& trace,
                        const MatD& output_grad, const std::function<double(const NetworkD&)>& loss) {
  const VecD analytic = net.backward(trace, output_grad, false).flat();
  NetworkD work = net;
  const VecD numeric = finite_difference_gradient(
      [&](const VecD& p) {
        work.set_flat_parameters(p);
        return loss(work);
      },
      net.flat_parameters());
  return max_relative_error(analytic, numeric);
}

}  // namespace

GradcheckReport run_gradcheck(int configurations, std::uint64_t seed, double tolerance) {
  GradcheckReport report;
  report.tolerance = tolerance;
  SeedSequence seeds(seed);
  std::uint64_t stream = 0;
  auto next_rng = [&] { return Rng(splitmix64(seeds.master() + ++stream)); };

  {
    Rng rng = next_rng();
    report.cases.push_back(run_case("dense", configurations, rng, tolerance,
                                    [](Rng& r) { return draw_network(r, false, false); }));
  }
  {
    Rng rng = next_rng();
    report.cases.push_back(run_case("conv", configurations, rng, tolerance,
                                    [](Rng& r) { return draw_network(r, true, false); }));
  }
  {
    Rng rng = next_rng();
    report.cases.push_back(run_case("decorrelated_dense", configurations, rng, tolerance,
                                    [](Rng& r) { return draw_network(r, false, true); }));
  }
  {
    Rng rng = next_rng();
    report.cases.push_back(run_case("decorrelated_conv", configurations, rng, tolerance,
                                    [](Rng& r) { return draw_network(r, true, true); }));
  }
  {
    Rng rng = next_rng();
    report.cases.push_back(run_case(
        "leaky_relu", configurations, rng, tolerance, [](Rng& r) -> std::optional<double> {
          const double slope = uniform_real(0.01, 0.3, r);
          const MatD x = normal_matrix(uniform_index(1, 4, r), uniform_index(1, 6, r), r);
          if (x.cwiseAbs().minCoeff() < kKinkMargin) return std::nullopt;
          const MatD w = normal_matrix(x.rows(), x.cols(), r);
          const VecD numeric = finite_difference_gradient(
              [&](const VecD& v) {
                return weighted_sum(w, leaky_relu(unflatten(v, x.rows(), x.cols()), slope));
              },
              flatten(x));
          return max_relative_error(flatten(leaky_relu_backward(x, w, slope)), numeric);
        }));
  }
  {
    Rng rng = next_rng();
    report.cases.push_back(run_case(
        "log_softmax", configurations, rng, tolerance, [](Rng& r) -> std::optional<double> {
          const MatD x = normal_matrix(uniform_index(1, 4, r), uniform_index(1, 6, r), r, 2.0);
          const MatD w = normal_matrix(x.rows(), x.cols(), r);
          const VecD numeric = finite_difference_gradient(
              [&](const VecD& v) {
                return weighted_sum(w, log_softmax(unflatten(v, x.rows(), x.cols())));
              },
              flatten(x));
          return max_relative_error(flatten(log_softmax_backward(log_softmax(x), w)), numeric);
        }));
  }
  {
    Rng rng = next_rng();
    report.cases.push_back(run_case(
        "q_loss", configurations, rng, tolerance, [](Rng& r) -> std::optional<double> {
          auto fx = draw_sac_fixture(r);
          if (!fx) return std::nullopt;
          const Index batch = fx->states.rows();
          std::vector<Index> taken(static_cast<std::size_t>(batch));
          for (auto& a : taken) a = uniform_index(0, fx->actions - 1, r);
          const VecD targets = normal_matrix(batch, 1, r).col(0);
          const auto trace = fx->net.forward(fx->states);
          const auto l = q_loss<double>(trace.output, taken, targets);
          return check_parameters(fx->net, trace, l.grad, [&](const NetworkD& n) {
            return q_loss<double>(n.predict(fx->states), taken, targets).loss;
          });
        }));
  }
  {
    Rng rng = next_rng();
    report.cases.push_back(run_case(
        "policy_loss", configurations, rng, tolerance, [](Rng& r) -> std::optional<double> {
          auto fx = draw_sac_fixture(r);
          if (!fx) return std::nullopt;
          const Index batch = fx->states.rows();
          const MatD q1 = normal_matrix(batch, fx->actions, r);
          const MatD q2 = normal_matrix(batch, fx->actions, r);
          const double alpha = uniform_real(0.05, 1.0, r);
          const auto trace = fx->net.forward(fx->states);
          const auto l = policy_loss<double>(distribution_from_logits(trace.output), q1, q2, alpha);
          return check_parameters(fx->net, trace, l.grad, [&](const NetworkD& n) {
            return policy_loss<double>(distribution_from_logits(n.predict(fx->states)), q1, q2, alpha).loss;
          });
        }));
  }
  {
    Rng rng = next_rng();
    report.cases.push_back(run_case(
        "alpha_loss", configurations, rng, tolerance, [](Rng& r) -> std::optional<double> {
          const MatD logits = normal_matrix(uniform_index(1, 4, r), uniform_index(2, 6, r), r);
          const auto pi = distribution_from_logits(logits);
          const double target = uniform_real(-6.0, 0.0, r);
          VecD la(1);
          la[0] = uniform_real(-3.0, 1.0, r);
          const auto l = alpha_loss<double>(la[0], pi, target);
          const VecD numeric = finite_difference_gradient(
              [&](const VecD& v) { return alpha_loss<double>(v[0], pi, target).loss; }, la);
          return max_relative_error(flatten(l.grad), numeric);
        }));
  }
  return report;
}

}  // namespace dsac
