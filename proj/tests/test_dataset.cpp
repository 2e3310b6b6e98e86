#include <gtest/gtest.h>

#include <sstream>

#include "natlog/dataset.hpp"

using namespace natlog;

class DatasetTest : public ::testing::Test {
 protected:
  Generator gen{default_vocabularies()};
};

TEST(Lexicon, RelationsFromTheHierarchy) {
  const auto v = default_vocabularies();
  const auto& s = v.subjects;
  EXPECT_EQ(s.relation("cats", "animals"), Relation::ForwardEntailment);
  EXPECT_EQ(s.relation("animals", "kittens"), Relation::ReverseEntailment);
  EXPECT_EQ(s.relation("cats", "dogs"), Relation::Alternation);
  EXPECT_EQ(s.relation("rabbits", "bunnies"), Relation::Equivalence);
  EXPECT_EQ(s.relation("kids", "adults"), Relation::Alternation);
  EXPECT_EQ(s.relation("students", "musicians"), Relation::Independence);
  EXPECT_EQ(s.relation("children", "students"), Relation::Independence);
  EXPECT_EQ(s.relation("cats", "people"), Relation::Alternation);
  for (const auto& w : s.related("mammals", Relation::ReverseEntailment))
    EXPECT_EQ(s.relation("mammals", w), Relation::ReverseEntailment);
  Lexicon l;
  l.add("a");
  EXPECT_THROW(l.add("a"), ContractViolation);
}

TEST(Prover, DiffAttributesEditsToHypothesisPositions) {
  const auto p = split_words("all cats run");
  auto ins = diff_edits(p, split_words("all black cats run"));
  ASSERT_EQ(ins.size(), 1u);
  EXPECT_EQ(ins[0].type, EditType::Insertion);
  EXPECT_EQ(ins[0].position, 1u);
  auto del = diff_edits(split_words("all black cats run"), p);
  ASSERT_EQ(del.size(), 1u);
  EXPECT_EQ(del[0].type, EditType::Deletion);
  EXPECT_EQ(del[0].position, 1u);
  auto tail = diff_edits(split_words("all cats run quickly"), p);
  EXPECT_EQ(tail[0].position, 2u);
  auto sub = diff_edits(p, split_words("all dogs run"), [](const auto&, const auto&) { return true; });
  ASSERT_EQ(sub.size(), 1u);
  EXPECT_EQ(sub[0].type, EditType::Substitution);
  EXPECT_TRUE(diff_edits(p, split_words("ALL Cats run")).empty());
}

TEST(Prover, FoldsProjectedRelations) {
  auto proof = prove({Relation::ForwardEntailment}, {parse_context("all.arg1")}, {1});
  EXPECT_EQ(proof.final_relation, Relation::ReverseEntailment);
  EXPECT_EQ(proof.label, NliLabel::Neutral);
  proof = prove({Relation::ForwardEntailment, Relation::Alternation},
                {parse_context("all.arg2"), parse_context("all.arg2")}, {2, 2});
  EXPECT_EQ(proof.final_relation, Relation::Alternation);
  EXPECT_EQ(proof.label, NliLabel::Contradiction);
  EXPECT_EQ(proof.trajectory(4), (std::vector<Relation>{Relation::Equivalence, Relation::Equivalence,
                                                        Relation::Alternation, Relation::Alternation}));
  EXPECT_THROW(prove({Relation::Equivalence, Relation::Equivalence},
                     {parse_context("none"), parse_context("none")}, {2, 1}),
               ContractViolation);
}

TEST_F(DatasetTest, GenerationIsDeterministicAndReDerivable) {
  for (std::size_t hops : {1u, 2u}) {
    const auto a = gen.generate(300, hops, 42);
    EXPECT_EQ(a, gen.generate(300, hops, 42));
    EXPECT_NE(a, gen.generate(300, hops, 43));
    for (const auto& ex : a) {
      ASSERT_EQ(ex.hops(), hops);
      ASSERT_NO_THROW(gen.recheck(ex)) << join_words(ex.premise) << " / " << join_words(ex.hypothesis);
      ASSERT_EQ(ex.aggregation.size(), hops);
      EXPECT_EQ(label_of(ex.aggregation.back()), ex.label);
      EXPECT_NO_THROW(mark_polarity(ex.premise, gen.grammar()));
      EXPECT_NO_THROW(mark_polarity(ex.hypothesis, gen.grammar()));
    }
  }
}

TEST_F(DatasetTest, EveryLabelAndEditTypeOccurs) {
  const auto data = gen.generate(2000, 2, 7);
  const auto report = label_report(data);
  EXPECT_EQ(report["count"], 2000);
  for (const char* l : {"entailment", "neutral", "contradiction"}) EXPECT_GT(report["labels"].value(l, 0), 0) << l;
  for (const char* t : {"insertion", "deletion", "substitution"}) EXPECT_GT(report["edit_types"].value(t, 0), 0) << t;
  for (const char* d : {"up", "down"}) EXPECT_GT(report["directions"].value(d, 0), 0) << d;
}

TEST_F(DatasetTest, DirectionAndEditTypeFilters) {
  GeneratorOptions up;
  up.direction = "up";
  for (const auto& ex : gen.generate(100, 2, 5, up)) EXPECT_EQ(ex.direction(), "up");
  GeneratorOptions subs;
  subs.edit_types = {EditType::Substitution};
  subs.direction = "down";
  for (const auto& ex : gen.generate(100, 1, 5, subs)) {
    EXPECT_EQ(ex.edits[0].type, EditType::Substitution);
    EXPECT_EQ(ex.direction(), "down");
  }
  EXPECT_THROW(gen.generate(1, 3, 5), ContractViolation);
}

TEST_F(DatasetTest, JsonlRoundTripAndValidation) {
  const auto data = gen.generate(50, 2, 11);
  std::stringstream ss;
  save_jsonl(data, ss);
  EXPECT_EQ(load_jsonl(ss), data);

  auto j = to_json(data[0]);
  j["label"] = data[0].label == NliLabel::Entailment ? "contradiction" : "entailment";
  EXPECT_THROW(example_from_json(j), ValidationError);
  j = to_json(data[0]);
  j["aggregation"].erase(0);
  EXPECT_THROW(example_from_json(j), ValidationError);
  j = to_json(data[0]);
  j.erase("premise");
  EXPECT_THROW(example_from_json(j), ValidationError);
  std::stringstream bad("{\"premise\": 1}\n");
  EXPECT_THROW(load_jsonl(bad), ValidationError);
}

TEST_F(DatasetTest, GoldPathEndsInTheFinalAggregation) {
  for (const auto& ex : gen.generate(100, 2, 13)) {
    const auto path = ex.gold_path();
    ASSERT_EQ(path.size(), ex.hypothesis.size());
    EXPECT_EQ(path.back(), ex.aggregation.back());
    EXPECT_EQ(path[ex.edits[0].position], ex.aggregation[0]);
  }
}
