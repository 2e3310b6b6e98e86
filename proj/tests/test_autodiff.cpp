#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "natlog/autodiff.hpp"

using namespace natlog;
using ad::Parameter;
using ad::Tape;
using ad::Var;

namespace {

using Fn = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

Parameter<double> random_param(const std::string& name, std::size_t r, std::size_t c, std::mt19937_64& rng) {
  Parameter<double> p(name, r, c);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& x : p.value) x = d(rng);
  return p;
}

/// Max relative error between reverse-mode and central-difference gradients
/// of the scalar `f` with respect to every entry of `params`.
double check(std::vector<Parameter<double>>& params, const Fn& f) {
  auto eval = [&](bool record) {
    Tape<double> tape(record);
    std::vector<Var<double>> vs;
    for (auto& p : params) vs.push_back(tape.param(p));
    auto out = f(tape, vs);
    if (record) tape.backward(out);
    return out.scalar();
  };
  for (auto& p : params) p.zero_grad();
  eval(true);
  double worst = 0.0;
  const double eps = 1e-6;
  for (auto& p : params)
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double orig = p.value[k];
      p.value[k] = orig + eps;
      const double up = eval(false);
      p.value[k] = orig - eps;
      const double down = eval(false);
      p.value[k] = orig;
      const double num = (up - down) / (2 * eps);
      worst = std::max(worst, std::abs(num - p.grad[k]) / std::max({std::abs(num), std::abs(p.grad[k]), 1e-6}));
    }
  return worst;
}

/// Reduce a tensor to a scalar with fixed non-uniform weights.
Var<double> weigh(Tape<double>& t, Var<double> x) {
  std::vector<double> w(x.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 5);
  return ad::dot(t.constant(x.rows(), x.cols(), w), x);
}

}  // namespace

class AutodiffOps : public ::testing::Test {
 protected:
  std::mt19937_64 rng{42};
};

TEST_F(AutodiffOps, Elementwise) {
  std::vector<Parameter<double>> ps{random_param("a", 3, 2, rng), random_param("b", 3, 2, rng)};
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::add(v[0], v[1])); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::sub(v[0], v[1])); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::mul(v[0], v[1])); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::scale(v[0], 2.5)); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::tanh(v[0])); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::sigmoid(v[1])); }), 1e-6);
}

TEST_F(AutodiffOps, Products) {
  std::vector<Parameter<double>> ps{random_param("w", 4, 3, rng), random_param("x", 3, 1, rng),
                                    random_param("b", 5, 3, rng)};
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::matvec(v[0], v[1])); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::matmul_nt(v[0], v[2])); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::matmul_tn(v[2], v[2])); }), 1e-6);
  EXPECT_LT(check(ps, [](auto&, auto& v) { return ad::dot(v[1], v[1]); }), 1e-6);
}

TEST_F(AutodiffOps, Softmaxes) {
  std::vector<Parameter<double>> ps{random_param("a", 4, 3, rng), random_param("z", 7, 1, rng)};
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::softmax(v[1])); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::softmax_cols(v[0])); }), 1e-6);
  EXPECT_LT(check(ps, [](auto&, auto& v) { return ad::softmax_nll(v[1], 3); }), 1e-6);
}

TEST_F(AutodiffOps, Normalize) {
  std::vector<Parameter<double>> ps{random_param("a", 7, 1, rng)};
  for (auto& x : ps[0].value) x = std::abs(x) + 0.1;
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::normalize(v[0])); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::log_floor(v[0], 1e-300)); }), 1e-6);
}

TEST_F(AutodiffOps, Structural) {
  std::vector<Parameter<double>> ps{random_param("a", 3, 4, rng), random_param("b", 2, 1, rng)};
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::row(v[0], 1)); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::col(v[0], 2)); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::slice(v[1], 1, 1)); }), 1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::concat(v[1], ad::row(v[0], 0))); }), 1e-6);
  EXPECT_LT(check(ps,
                  [](auto& t, auto& v) {
                    std::vector<Var<double>> rows{ad::row(v[0], 2), ad::row(v[0], 0)};
                    return weigh(t, ad::stack_rows<double>(rows));
                  }),
            1e-6);
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::rowwise_dot(v[0], v[0])); }), 1e-6);
}

TEST_F(AutodiffOps, AttentionStyleReads) {
  std::vector<Parameter<double>> ps{random_param("q", 3, 1, rng), random_param("x0", 3, 1, rng),
                                    random_param("x1", 3, 1, rng)};
  EXPECT_LT(check(ps,
                  [](auto& t, auto& v) {
                    std::vector<Var<double>> xs{v[1], v[2]};
                    auto w = ad::softmax(ad::dots(v[0], std::span<const Var<double>>(xs)));
                    return weigh(t, ad::weighted_sum(w, std::span<const Var<double>>(xs)));
                  }),
            1e-6);
}

TEST_F(AutodiffOps, LstmCell) {
  std::vector<Parameter<double>> ps{random_param("pre", 8, 1, rng), random_param("c", 2, 1, rng)};
  EXPECT_LT(check(ps, [](auto& t, auto& v) { return weigh(t, ad::lstm_cell(v[0], v[1])); }), 1e-6);
}

TEST_F(AutodiffOps, ParameterRowsAccumulate) {
  Parameter<double> e("e", 3, 2);
  e.value = {1, 2, 3, 4, 5, 6};
  Tape<double> tape(true);
  auto a = tape.param_row(e, 1);
  auto b = tape.param_row(e, 1);
  tape.backward(ad::dot(ad::add(a, b), tape.constant(2, 1, {1.0, 10.0})));
  EXPECT_EQ(e.grad, (std::vector<double>{0, 0, 2, 20, 0, 0}));
}

TEST(Autodiff, NonRecordingTapeLeavesGradientsAlone) {
  Parameter<double> p("p", 2, 1);
  p.value = {1, 2};
  Tape<double> tape(false);
  auto v = tape.param(p);
  EXPECT_FALSE(tape.needs_grad(v.id()));
  EXPECT_DOUBLE_EQ(ad::dot(v, v).scalar(), 5.0);
  EXPECT_EQ(p.grad, (std::vector<double>{0, 0}));
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape<double> tape(false);
  auto a = tape.constant(2, 1, {1, 2});
  auto b = tape.constant(3, 1, {1, 2, 3});
  EXPECT_THROW(ad::add(a, b), ContractViolation);
  EXPECT_THROW(tape.constant(2, 2, {1.0}), ContractViolation);
}
