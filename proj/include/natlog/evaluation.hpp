#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "natlog/checkpoint.hpp"
#include "natlog/dataset.hpp"
#include "natlog/metrics.hpp"
#include "natlog/model.hpp"
#include "natlog/training.hpp"

namespace natlog {

/// Predicted relation after every hypothesis position (argmax of each sequential state).
template <class T>
std::vector<Relation> predicted_path(const Prediction<T>& pred) {
  if (pred.trace.tree) throw ContractViolation("predicted_path: aggregation paths need sequential mode");
  std::vector<Relation> out;
  for (const auto& s : pred.trace.aggregation.states) out.push_back(argmax(s));
  return out;
}

/// Accuracy, aggregation P/R/F1 and confusion counts of `model` on `data`.
template <class T>
Report evaluate_model(Model<T>& model, const Generator& gen, const std::vector<Example>& data) {
  std::vector<NliLabel> preds, golds;
  std::vector<std::vector<Relation>> paths, gold_paths;
  const bool seq = model.config().aggregation == AggregationMode::Sequential;
  for (const auto& ex : data) {
    auto pred = model.predict(gen.to_input(ex).input);
    preds.push_back(pred.label);
    golds.push_back(ex.label);
    if (seq) {
      paths.push_back(predicted_path(pred));
      gold_paths.push_back(ex.gold_path());
    }
  }
  Report r;
  r.accuracy = accuracy(preds, golds);
  r.per_class_counts = per_class_counts(preds, golds);
  if (seq) r.prf = aggregation_prf(paths, gold_paths);
  return r;
}

/// Anything that can be fitted on examples and then label new ones.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual void fit(const std::vector<Example>& train, const std::vector<Example>& dev) = 0;
  virtual NliLabel predict(const Example& ex) = 0;
};

inline double learner_accuracy(Learner& l, const std::vector<Example>& data) {
  std::vector<NliLabel> p, g;
  for (const auto& ex : data) {
    p.push_back(l.predict(ex));
    g.push_back(ex.label);
  }
  return accuracy(p, g);
}

/// Fits on upward data, selects on upward dev, reports downward test accuracy.
inline Report transfer_eval(Learner& learner, const std::vector<Example>& train_up,
                            const std::vector<Example>& dev_up, const std::vector<Example>& test_down) {
  for (const auto* set : {&train_up, &dev_up})
    for (const auto& ex : *set)
      if (ex.direction() != "up") throw ValidationError("transfer_eval: training data must be upward only");
  for (const auto& ex : test_down)
    if (ex.direction() != "down") throw ValidationError("transfer_eval: test data must be downward only");
  learner.fit(train_up, dev_up);
  Report r;
  r.up_dev_acc = learner_accuracy(learner, dev_up);
  r.down_test_acc = learner_accuracy(learner, test_down);
  r.accuracy = r.down_test_acc;
  return r;
}

/// The symbolic prover fed the gold lexical relation and context of every edit.
class SymbolicLearner final : public Learner {
 public:
  void fit(const std::vector<Example>&, const std::vector<Example>&) override {}
  NliLabel predict(const Example& ex) override {
    std::vector<Relation> lex;
    std::vector<Projectivity> ctx;
    std::vector<std::size_t> pos;
    for (const auto& e : ex.edits) {
      lex.push_back(e.relation);
      ctx.push_back(parse_context(e.context));
      pos.push_back(e.position);
    }
    return prove(lex, ctx, pos).label;
  }
};

/// The full differentiable model, trained with best-dev selection.
class NeuralLearner final : public Learner {
 public:
  NeuralLearner(const Generator& gen, ModelConfig config, Vocabulary vocab, TrainOptions opts)
      : gen_(gen), config_(std::move(config)), vocab_(std::move(vocab)), opts_(std::move(opts)) {}

  void fit(const std::vector<Example>& train_set, const std::vector<Example>& dev) override {
    std::vector<LabeledInput> tr, dv;
    for (const auto& ex : train_set) tr.push_back(gen_.to_input(ex));
    for (const auto& ex : dev) dv.push_back(gen_.to_input(ex));
    result_ = train(tr, dv, config_, vocab_, opts_);
    model_ = std::make_unique<Model<float>>(restore(result_.best));
  }

  NliLabel predict(const Example& ex) override {
    if (!model_) throw ContractViolation("NeuralLearner: predict before fit");
    return model_->predict(gen_.to_input(ex).input).label;
  }

  Model<float>& model() { return *model_; }
  const TrainResult& result() const noexcept { return result_; }

 private:
  const Generator& gen_;
  ModelConfig config_;
  Vocabulary vocab_;
  TrainOptions opts_;
  TrainResult result_;
  std::unique_ptr<Model<float>> model_;
};

/// Bag-of-embeddings baseline: mean premise and hypothesis embeddings, their
/// difference and product, one tanh hidden layer, softmax over the three labels.
class BagOfEmbeddings final : public Learner {
 public:
  struct Options {
    std::size_t dim = 32;
    std::size_t hidden = 32;
    std::size_t epochs = 32;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 13;
  };

  BagOfEmbeddings(Vocabulary vocab, Options opts)
      : vocab_(std::move(vocab)),
        opts_(opts),
        emb_("bow.embedding", vocab_.size(), opts.dim),
        w1_("bow.w1", opts.hidden, 4 * opts.dim),
        b1_("bow.b1", opts.hidden, 1),
        w2_("bow.w2", kNumLabels, opts.hidden),
        b2_("bow.b2", kNumLabels, 1) {}

  void fit(const std::vector<Example>& train_set, const std::vector<Example>& dev) override {
    if (train_set.empty()) throw ValidationError("training set is empty");
    std::mt19937_64 rng(opts_.seed);
    init_uniform(emb_, rng, 0.5);
    init_uniform(w1_, rng, 1.0 / std::sqrt(static_cast<double>(w1_.cols)));
    init_uniform(w2_, rng, 1.0 / std::sqrt(static_cast<double>(w2_.cols)));
    Adam adam(opts_.learning_rate, 0.9, 0.999, 1e-8);
    const auto params = parameters();
    auto best = values();
    double best_dev = dev.empty() ? 0.0 : learner_accuracy(*this, dev);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t epoch = 0; epoch < opts_.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += opts_.batch_size) {
        const std::size_t end = std::min(order.size(), start + opts_.batch_size);
        for (auto* p : params) p->zero_grad();
        for (std::size_t i = start; i < end; ++i) {
          ad::Tape<float> tape(true);
          const auto& ex = train_set[order[i]];
          tape.backward(ad::softmax_nll(logits(tape, ex), static_cast<std::size_t>(ex.label)));
        }
        adam.step(params, 1.0f / static_cast<float>(end - start));
      }
      if (!dev.empty()) {
        const double acc = learner_accuracy(*this, dev);
        if (acc > best_dev) {
          best_dev = acc;
          best = values();
        }
      } else {
        best = values();
      }
    }
    set_values(best);
  }

  NliLabel predict(const Example& ex) override {
    ad::Tape<float> tape(false);
    auto z = logits(tape, ex);
    return decide_label(std::array<float, kNumLabels>{z[0], z[1], z[2]});
  }

 private:
  ad::Var<float> mean_embedding(ad::Tape<float>& tape, const std::vector<std::string>& tokens) {
    std::vector<ad::Var<float>> rows;
    for (auto id : vocab_.ids(tokens)) rows.push_back(tape.param_row(emb_, id));
    auto sum = rows[0];
    for (std::size_t i = 1; i < rows.size(); ++i) sum = ad::add(sum, rows[i]);
    return ad::scale(sum, 1.0f / static_cast<float>(rows.size()));
  }

  ad::Var<float> logits(ad::Tape<float>& tape, const Example& ex) {
    auto p = mean_embedding(tape, ex.premise);
    auto h = mean_embedding(tape, ex.hypothesis);
    std::vector<ad::Var<float>> parts{p, h, ad::sub(p, h), ad::mul(p, h)};
    auto x = ad::concat<float>(parts);
    auto hid = ad::tanh(ad::add(ad::matvec(tape.param(w1_), x), tape.param(b1_)));
    return ad::add(ad::matvec(tape.param(w2_), hid), tape.param(b2_));
  }

  std::vector<ad::Parameter<float>*> parameters() { return {&emb_, &w1_, &b1_, &w2_, &b2_}; }
  std::vector<std::vector<float>> values() {
    std::vector<std::vector<float>> out;
    for (auto* p : parameters()) out.push_back(p->value);
    return out;
  }
  void set_values(const std::vector<std::vector<float>>& v) {
    auto ps = parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = v[i];
  }

  Vocabulary vocab_;
  Options opts_;
  ad::Parameter<float> emb_, w1_, b1_, w2_, b2_;
};

}  // namespace natlog
