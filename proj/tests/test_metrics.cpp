#include <gtest/gtest.h>

#include "natlog/evaluation.hpp"

using namespace natlog;

namespace {

constexpr Relation E = Relation::Equivalence;
constexpr Relation F = Relation::ForwardEntailment;
constexpr Relation A = Relation::Alternation;
constexpr Relation I = Relation::Independence;

}  // namespace

TEST(Metrics, AggregationEvents) {
  EXPECT_TRUE(aggregation_events({E, E, E}).empty());
  auto ev = aggregation_events({E, F, F, A});
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0], std::make_pair(std::size_t{1}, F));
  EXPECT_EQ(ev[1], std::make_pair(std::size_t{3}, A));
}

TEST(Metrics, PrecisionRecallF1) {
  auto perfect = aggregation_prf({{E, F, A}}, {{E, F, A}});
  EXPECT_DOUBLE_EQ(perfect.f1, 1.0);
  // Gold events (1,⊏),(2,|); predicted (0,|),(1,⊏),(2,#).
  auto s = aggregation_prf({{A, F, I}}, {{E, F, A}});
  EXPECT_EQ(s.predicted_events, 3u);
  EXPECT_EQ(s.gold_events, 2u);
  EXPECT_EQ(s.correct_events, 1u);
  EXPECT_DOUBLE_EQ(s.precision, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.recall, 0.5);
  EXPECT_DOUBLE_EQ(s.f1, 0.4);
  auto empty = aggregation_prf({{E, E}}, {{E, E}});
  EXPECT_DOUBLE_EQ(empty.f1, 0.0);
  EXPECT_THROW(aggregation_prf({{E}}, {{E, E}}), ContractViolation);
}

TEST(Metrics, AccuracyAndConfusion) {
  std::vector<NliLabel> p{NliLabel::Entailment, NliLabel::Neutral, NliLabel::Neutral, NliLabel::Contradiction};
  std::vector<NliLabel> g{NliLabel::Entailment, NliLabel::Entailment, NliLabel::Neutral, NliLabel::Contradiction};
  EXPECT_DOUBLE_EQ(accuracy(p, g), 0.75);
  auto c = per_class_counts(p, g);
  EXPECT_EQ(c["entailment->neutral"], 1u);
  EXPECT_EQ(c["neutral->neutral"], 1u);
  EXPECT_THROW(accuracy(p, {}), ContractViolation);
}

TEST(Metrics, ReportJsonKeepsMissingFieldsNull) {
  Report r;
  r.accuracy = 0.5;
  auto j = r.to_json();
  EXPECT_EQ(j["accuracy"], 0.5);
  EXPECT_TRUE(j["f1"].is_null());
  EXPECT_TRUE(j["up_dev_acc"].is_null());
  EXPECT_FALSE(j.contains("gap"));
  r.up_dev_acc = 0.9;
  r.down_test_acc = 0.6;
  EXPECT_NEAR(r.to_json()["gap"].get<double>(), 0.3, 1e-12);
}

TEST(Evaluation, SymbolicLearnerIsExactOnGeneratedData) {
  Generator gen(default_vocabularies());
  SymbolicLearner s;
  for (std::size_t hops : {1u, 2u}) EXPECT_DOUBLE_EQ(learner_accuracy(s, gen.generate(300, hops, 9)), 1.0);
}

TEST(Evaluation, TransferRejectsWrongDirections) {
  Generator gen(default_vocabularies());
  GeneratorOptions up, down;
  up.direction = "up";
  down.direction = "down";
  const auto u = gen.generate(20, 1, 1, up);
  const auto d = gen.generate(20, 1, 2, down);
  SymbolicLearner s;
  EXPECT_THROW(transfer_eval(s, d, u, d), ValidationError);
  EXPECT_THROW(transfer_eval(s, u, u, u), ValidationError);
  auto r = transfer_eval(s, u, u, d);
  EXPECT_DOUBLE_EQ(*r.up_dev_acc, 1.0);
  EXPECT_DOUBLE_EQ(*r.down_test_acc, 1.0);
}

TEST(Evaluation, BagOfEmbeddingsFitsTrainingData) {
  Generator gen(default_vocabularies());
  Vocabulary v;
  for (const auto& w : gen.vocabularies().all_words()) v.add(w);
  BagOfEmbeddings::Options o;
  o.epochs = 20;
  BagOfEmbeddings bow(v, o);
  const auto tr = gen.generate(200, 1, 3);
  bow.fit(tr, {});
  EXPECT_GT(learner_accuracy(bow, tr), 0.7);
}
