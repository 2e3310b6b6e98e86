#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "natlog/checkpoint.hpp"
#include "natlog/error.hpp"
#include "natlog/model.hpp"

namespace natlog {

/// One supervised pair: model input plus its gold NLI label.
struct LabeledInput {
  ModelInput input;
  NliLabel label = NliLabel::Neutral;
};

struct TrainOptions {
  std::size_t epochs = 32;
  std::size_t batch_size = 32;
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 13;  ///< shuffling and dropout stream
  std::function<void(std::size_t epoch, double train_loss, double dev_acc)> on_epoch;
};

class Adam {
 public:
  Adam(double lr, double b1, double b2, double eps) : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  /// Applies one update using the accumulated gradients scaled by `grad_scale`.
  void step(const std::vector<ad::Parameter<float>*>& params, float grad_scale) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->size(), 0.0f);
        v_.emplace_back(p->size(), 0.0f);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
    const float lr = static_cast<float>(lr_ * std::sqrt(c2) / c1);
    const float eps = static_cast<float>(eps_ * std::sqrt(c2));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        const float g = p.grad[k] * grad_scale;
        m[k] = b1 * m[k] + (1.0f - b1) * g;
        v[k] = b2 * v[k] + (1.0f - b2) * g * g;
        p.value[k] -= lr * m[k] / (std::sqrt(v[k]) + eps);
      }
    }
  }

  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<std::vector<float>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<float>>& second_moments() const noexcept { return v_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

inline Checkpoint snapshot(Model<float>& model, const Adam& adam, std::uint64_t epoch) {
  Checkpoint ck = snapshot(model, epoch);
  ck.optimizer_step = adam.steps();
  for (std::size_t i = 0; i < adam.first_moments().size(); ++i) {
    ck.first_moments.push_back({"adam.m." + ck.parameters[i].name, adam.first_moments()[i]});
    ck.second_moments.push_back({"adam.v." + ck.parameters[i].name, adam.second_moments()[i]});
  }
  return ck;
}

/// Fraction of examples whose predicted label equals the gold label.
template <class T>
double evaluate_accuracy(Model<T>& model, const std::vector<LabeledInput>& data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) correct += model.predict(ex.input).label == ex.label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct TrainResult {
  Checkpoint best;                 ///< best-dev model (ties keep the earlier epoch)
  Checkpoint last;                 ///< state after the final epoch
  std::vector<EpochStats> history;
};

/// Mini-batch Adam on the grouped cross-entropy. Deterministic for fixed seeds.
/// With zero epochs the initial model is returned as both best and last.
inline TrainResult train(const std::vector<LabeledInput>& train_set, const std::vector<LabeledInput>& dev_set,
                         const ModelConfig& config, const Vocabulary& vocab, const TrainOptions& opts) {
  if (train_set.empty()) throw ValidationError("training set is empty");
  if (opts.batch_size == 0) throw ContractViolation("batch size must be positive");
  Model<float> model(config, vocab);
  model.initialize();
  Adam adam(opts.learning_rate, opts.beta1, opts.beta2, opts.adam_eps);
  auto params = model.parameters();
  std::mt19937_64 rng(opts.seed);

  TrainResult result;
  result.best = snapshot(model, adam, 0);
  result.best.dev_accuracy = dev_set.empty() ? 0.0 : evaluate_accuracy(model, dev_set);
  result.last = result.best;
  double best_dev = dev_set.empty() ? -1.0 : result.best.dev_accuracy;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      model.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train_set[order[i]];
        ad::Tape<float> tape(true);
        auto fw = model.forward(tape, ex.input, &rng);
        auto loss = model.loss(fw, ex.label);
        total_loss += loss.scalar();
        tape.backward(loss);
      }
      adam.step(params, 1.0f / static_cast<float>(end - start));
    }
    EpochStats stats{epoch, total_loss / static_cast<double>(train_set.size()), 0.0};
    if (!dev_set.empty()) stats.dev_accuracy = evaluate_accuracy(model, dev_set);
    result.history.push_back(stats);
    if (opts.on_epoch) opts.on_epoch(epoch, stats.train_loss, stats.dev_accuracy);

    result.last = snapshot(model, adam, epoch);
    result.last.dev_accuracy = stats.dev_accuracy;
    if (dev_set.empty() || stats.dev_accuracy > best_dev) {
      best_dev = stats.dev_accuracy;
      result.best = result.last;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::string worst;  ///< "param[index]" of the largest error
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient is
/// zero from dividing rounding noise by zero.
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t samples_per_group = 200;
  std::uint64_t seed = 7;
  double floor = 1e-6;
};

/// Compares reverse-mode gradients of the loss summed over `examples` with central
/// differences, for a random sample of entries in every parameter group. Dropout is off.
inline GradCheckReport grad_check(Model<double>& model, const std::vector<LabeledInput>& examples,
                                  const GradCheckOptions& opts = {}) {
  if (examples.empty()) throw ValidationError("grad_check needs at least one example");
  auto total_loss = [&]() {
    double s = 0.0;
    for (const auto& ex : examples) {
      ad::Tape<double> tape(false);
      auto fw = model.forward(tape, ex.input, nullptr);
      s += model.loss(fw, ex.label).scalar();
    }
    return s;
  };

  model.zero_grad();
  for (const auto& ex : examples) {
    ad::Tape<double> tape(true);
    auto fw = model.forward(tape, ex.input, nullptr);
    tape.backward(model.loss(fw, ex.label));
  }

  std::mt19937_64 rng(opts.seed);
  GradCheckReport report;
  for (auto& [name, group] : model.parameter_groups()) {
    std::vector<std::pair<ad::Parameter<double>*, std::size_t>> entries;
    for (auto* p : group)
      for (std::size_t k = 0; k < p->size(); ++k) entries.emplace_back(p, k);
    if (entries.size() > opts.samples_per_group) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opts.samples_per_group);
    }
    GradCheckGroup g{name, entries.size(), 0.0, ""};
    for (auto [p, k] : entries) {
      const double orig = p->value[k];
      p->value[k] = orig + opts.eps;
      const double up = total_loss();
      p->value[k] = orig - opts.eps;
      const double down = total_loss();
      p->value[k] = orig;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double err = relative_error(p->grad[k], numeric, opts.floor);
      if (err > g.max_rel_error) {
        g.max_rel_error = err;
        g.worst = p->name + "[" + std::to_string(k) + "]";
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, g.max_rel_error);
    report.groups.push_back(g);
  }
  return report;
}

}  // namespace natlog
