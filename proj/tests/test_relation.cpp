#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "natlog/relation.hpp"

using namespace natlog;

TEST(Relation, JoinTableMatchesFixture) {
  for (std::size_t u = 0; u < 7; ++u)
    for (std::size_t v = 0; v < 7; ++v)
      EXPECT_EQ(to_token(join(parse_relation(fixtures::kColumns[u]), parse_relation(fixtures::kColumns[v]))),
                fixtures::kJoin[u][v])
          << fixtures::kColumns[u] << " join " << fixtures::kColumns[v];
}

TEST(Relation, ProjectionTableMatchesFixture) {
  for (const auto& row : fixtures::kProjection) {
    const auto rho = parse_context(row.context);
    for (std::size_t k = 0; k < 7; ++k)
      EXPECT_EQ(to_token(rho(parse_relation(fixtures::kColumns[k]))), row.image[k]) << row.context;
  }
}

TEST(Relation, JoinExamples) {
  EXPECT_EQ(join(Relation::ForwardEntailment, Relation::Alternation), Relation::Alternation);
  EXPECT_EQ(join(Relation::Negation, Relation::Negation), Relation::Equivalence);
  EXPECT_EQ(join(Relation::ForwardEntailment, Relation::ReverseEntailment), Relation::Independence);
  for (Relation r : kAllRelations) {
    EXPECT_EQ(join(Relation::Equivalence, r), r);
    EXPECT_EQ(join(r, Relation::Equivalence), r);
    EXPECT_EQ(join(Relation::Independence, r), Relation::Independence);
  }
}

TEST(Relation, JoinAllFoldsFromEquivalence) {
  std::vector<Relation> empty;
  EXPECT_EQ(join_all(empty), Relation::Equivalence);
  std::vector<Relation> seq{Relation::ForwardEntailment, Relation::Alternation};
  EXPECT_EQ(join_all(seq), Relation::Alternation);
}

TEST(Relation, ProjectionExamples) {
  EXPECT_EQ(parse_context("all.arg1")(Relation::ReverseEntailment), Relation::ForwardEntailment);
  EXPECT_EQ(parse_context("all.arg2")(Relation::Alternation), Relation::Alternation);
  EXPECT_EQ(parse_context("some.arg1")(Relation::Negation), Relation::Cover);
  for (const auto& row : fixtures::kProjection) EXPECT_TRUE(parse_context(row.context).preserves_equivalence());
}

TEST(Relation, LabelMapping) {
  EXPECT_EQ(label_of(Relation::Equivalence), NliLabel::Entailment);
  EXPECT_EQ(label_of(Relation::ForwardEntailment), NliLabel::Entailment);
  EXPECT_EQ(label_of(Relation::Negation), NliLabel::Contradiction);
  EXPECT_EQ(label_of(Relation::Alternation), NliLabel::Contradiction);
  EXPECT_EQ(label_of(Relation::ReverseEntailment), NliLabel::Neutral);
  EXPECT_EQ(label_of(Relation::Cover), NliLabel::Neutral);
  EXPECT_EQ(label_of(Relation::Independence), NliLabel::Neutral);
}

TEST(Relation, GroupingUsesMaxByDefault) {
  RelationVector<double> s{0.1, 0.3, 0.05, 0.2, 0.1, 0.05, 0.2};
  auto g = group_to_nli(s);
  EXPECT_DOUBLE_EQ(g[0], 0.3);
  EXPECT_DOUBLE_EQ(g[1], 0.2);
  EXPECT_DOUBLE_EQ(g[2], 0.2);
  auto sum = group_to_nli(s, Grouping::Sum);
  EXPECT_DOUBLE_EQ(sum[0], 0.4);
  EXPECT_DOUBLE_EQ(sum[1], 0.3);
  EXPECT_NEAR(sum[2], 0.3, 1e-15);
}

TEST(Relation, TiesResolveToNeutral) {
  EXPECT_EQ(decide_label(std::array<double, 3>{0.4, 0.4, 0.2}), NliLabel::Neutral);
  EXPECT_EQ(decide_label(std::array<double, 3>{0.5, 0.3, 0.2}), NliLabel::Entailment);
  EXPECT_EQ(decide_label(std::array<double, 3>{0.2, 0.5, 0.3}), NliLabel::Contradiction);
}

TEST(Relation, ParseRoundTrip) {
  for (Relation r : kAllRelations) EXPECT_EQ(parse_relation(to_token(r)), r);
  EXPECT_THROW(parse_relation("bogus"), ParseError);
  EXPECT_THROW(parse_context("most.arg1"), ParseError);
  for (auto y : {NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral})
    EXPECT_EQ(parse_label(to_string(y)), y);
}

TEST(Relation, SoftProjectionConservesMassAndMatchesHandComputation) {
  RelationVector<double> p{};
  p[index(Relation::Alternation)] = 0.8;
  p[index(Relation::Negation)] = 0.1;
  p[index(Relation::Independence)] = 0.1;
  auto q = soft_project(parse_context("all.arg2"), p);
  EXPECT_DOUBLE_EQ(q[index(Relation::Alternation)], 0.9);
  EXPECT_DOUBLE_EQ(q[index(Relation::Independence)], 0.1);
}

TEST(Relation, JoinDistOfPointMassesIsPointMassOfJoin) {
  for (Relation u : kAllRelations)
    for (Relation v : kAllRelations) {
      auto out = join_dist<double>(one_hot<double>(u), one_hot<double>(v));
      EXPECT_EQ(argmax(out), join(u, v));
      EXPECT_DOUBLE_EQ(out[index(join(u, v))], 1.0);
    }
}

TEST(Relation, DistributionValidation) {
  EXPECT_THROW(RelationDistribution<double>(RelationVector<double>{0.5, 0.6, 0, 0, 0, 0, 0}), ContractViolation);
  EXPECT_THROW(RelationDistribution<double>(RelationVector<double>{-0.1, 1.1, 0, 0, 0, 0, 0}), ContractViolation);
  EXPECT_NO_THROW(RelationDistribution<double>::point(Relation::Cover));
}
