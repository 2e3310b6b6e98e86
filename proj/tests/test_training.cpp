#include <gtest/gtest.h>

#include <sstream>

#include "natlog/checkpoint.hpp"
#include "natlog/dataset.hpp"
#include "natlog/training.hpp"

using namespace natlog;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.embed_dim = 8;
  c.hidden_dim = 8;
  return c;
}

Vocabulary vocab_of(const Generator& gen) {
  Vocabulary v;
  for (const auto& w : gen.vocabularies().all_words()) v.add(w);
  return v;
}

std::vector<LabeledInput> inputs(const Generator& gen, const std::vector<Example>& data) {
  std::vector<LabeledInput> out;
  for (const auto& ex : data) out.push_back(gen.to_input(ex));
  return out;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRateAgainstTheGradient) {
  ad::Parameter<float> p("p", 3, 1);
  p.value = {1.0f, 2.0f, 3.0f};
  p.grad = {0.5f, -4.0f, 0.0f};
  Adam adam(0.01, 0.9, 0.999, 1e-8);
  adam.step({&p}, 1.0f);
  EXPECT_NEAR(p.value[0], 0.99f, 1e-6);
  EXPECT_NEAR(p.value[1], 2.01f, 1e-6);
  EXPECT_FLOAT_EQ(p.value[2], 3.0f);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Generator gen(default_vocabularies());
  Model<float> m(tiny_config(), vocab_of(gen));
  m.initialize();
  Checkpoint ck = snapshot(m, 4);
  ck.dev_accuracy = 0.625;
  ck.optimizer_step = 9;
  for (const auto& a : ck.parameters) {
    ck.first_moments.push_back({a.name, std::vector<float>(a.data.size(), 0.25f)});
    ck.second_moments.push_back({a.name, std::vector<float>(a.data.size(), 0.5f)});
  }
  const auto bytes = serialize(ck);
  const auto back = deserialize(bytes);
  EXPECT_EQ(back.parameters, ck.parameters);
  EXPECT_EQ(back.first_moments, ck.first_moments);
  EXPECT_EQ(back.second_moments, ck.second_moments);
  EXPECT_EQ(back.epoch, 4u);
  EXPECT_EQ(back.optimizer_step, 9u);
  EXPECT_EQ(back.vocabulary, ck.vocabulary);
  EXPECT_EQ(serialize(back), bytes);

  auto restored = restore(back);
  const auto data = gen.generate(5, 2, 3);
  for (const auto& ex : data) {
    const auto in = gen.to_input(ex).input;
    EXPECT_EQ(restored.predict(in).probs, m.predict(in).probs);
  }
}

TEST(Checkpoint, RejectsCorruptInput) {
  Generator gen(default_vocabularies());
  Model<float> m(tiny_config(), vocab_of(gen));
  const auto bytes = serialize(snapshot(m));
  EXPECT_THROW(deserialize("XXXX" + bytes.substr(4)), ParseError);
  EXPECT_THROW(deserialize(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(deserialize(bytes + "x"), ParseError);
  auto ck = snapshot(m);
  ck.parameters[0].data.pop_back();
  EXPECT_THROW(restore(ck), ValidationError);
}

TEST(Training, ZeroEpochsReturnsInitialModel) {
  Generator gen(default_vocabularies());
  const auto tr = inputs(gen, gen.generate(8, 1, 1));
  TrainOptions opts;
  opts.epochs = 0;
  auto r = train(tr, {}, tiny_config(), vocab_of(gen), opts);
  Model<float> init(tiny_config(), vocab_of(gen));
  init.initialize();
  EXPECT_EQ(r.best.parameters, snapshot(init).parameters);
  EXPECT_TRUE(r.history.empty());
}

TEST(Training, DeterministicAndLossDecreases) {
  Generator gen(default_vocabularies());
  const auto tr = inputs(gen, gen.generate(64, 1, 2));
  const auto dv = inputs(gen, gen.generate(16, 1, 3));
  TrainOptions opts;
  opts.epochs = 6;
  opts.learning_rate = 5e-3;
  auto a = train(tr, dv, tiny_config(), vocab_of(gen), opts);
  auto b = train(tr, dv, tiny_config(), vocab_of(gen), opts);
  EXPECT_EQ(a.last.parameters, b.last.parameters);
  ASSERT_EQ(a.history.size(), 6u);
  EXPECT_LT(a.history.back().train_loss, a.history.front().train_loss);
  double best = 0.0;
  for (const auto& h : a.history) best = std::max(best, h.dev_accuracy);
  EXPECT_GE(a.best.dev_accuracy, best);
  EXPECT_EQ(a.last.optimizer_step, 6u * 2u);
  EXPECT_THROW(train({}, dv, tiny_config(), vocab_of(gen), opts), ValidationError);
}

TEST(GradCheck, EveryGroupAgreesWithFiniteDifferences) {
  Generator gen(default_vocabularies());
  auto cfg = tiny_config();
  cfg.embed_dim = 4;
  cfg.hidden_dim = 4;
  Model<double> m(cfg, vocab_of(gen));
  m.initialize();
  const auto ex = inputs(gen, gen.generate(3, 2, 17));
  GradCheckOptions opts;
  opts.samples_per_group = 40;
  auto report = grad_check(m, ex, opts);
  EXPECT_FALSE(report.groups.empty());
  for (const auto& g : report.groups) EXPECT_LT(g.max_rel_error, 1e-4) << g.name << " worst " << g.worst;
}

TEST(GradCheck, TreeModeAgreesWithFiniteDifferences) {
  Generator gen(default_vocabularies());
  auto cfg = tiny_config();
  cfg.embed_dim = 4;
  cfg.hidden_dim = 4;
  cfg.aggregation = AggregationMode::Tree;
  Model<double> m(cfg, vocab_of(gen));
  m.initialize();
  GradCheckOptions opts;
  opts.samples_per_group = 40;
  auto report = grad_check(m, inputs(gen, gen.generate(2, 2, 19)), opts);
  EXPECT_LT(report.max_rel_error, 1e-4);
}
