#include <gtest/gtest.h>

#include "natlog/polarity.hpp"

using namespace natlog;

namespace {

ControlledGrammar toy_grammar() {
  ControlledGrammar g;
  g.nouns = {"cats", "animals", "dogs", "fish"};
  g.verbs = {"playing", "eating", "run", "see"};
  g.modifiers = {"outside"};
  g.adjectives = {"black"};
  g.adverbs = {"quickly"};
  return g;
}

nlohmann::json identity_rows(std::size_t n) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json rho;
    for (Relation r : kAllRelations) rho[std::string(to_token(r))] = std::string(to_token(r));
    rows.push_back({{"token", "w"}, {"rho", rho}});
  }
  return rows;
}

}  // namespace

TEST(Polarity, AllMarksBothArguments) {
  auto s = mark_polarity(split_words("all cats outside are playing"), toy_grammar());
  EXPECT_EQ(s.contexts[1], "all.arg1");
  EXPECT_EQ(s.contexts[2], "all.arg1");
  EXPECT_EQ(s.contexts[4], "all.arg2");
  EXPECT_EQ(s.projectivities[1], parse_context("all.arg1"));
  EXPECT_EQ(s.projectivities[4], parse_context("all.arg2"));
}

TEST(Polarity, SomeRowsAreUpward) {
  auto s = mark_polarity(split_words("some dogs run"), toy_grammar());
  EXPECT_EQ(s.projectivities[1], upward_projectivity());
  EXPECT_EQ(s.projectivities[2], upward_projectivity());
  for (Relation r : {Relation::Equivalence, Relation::ForwardEntailment, Relation::ReverseEntailment})
    EXPECT_EQ(upward_projectivity()(r), r);
}

TEST(Polarity, NoQuantifierGivesUpwardEverywhere) {
  auto s = mark_polarity(split_words("cats run quickly"), toy_grammar());
  for (const auto& rho : s.projectivities) EXPECT_EQ(rho, upward_projectivity());
  auto t = mark_polarity(split_words("the cats run"), toy_grammar());
  for (const auto& rho : t.projectivities) EXPECT_EQ(rho, upward_projectivity());
}

TEST(Polarity, NoIsDownwardInBothArguments) {
  auto s = mark_polarity(split_words("no black cats see fish"), toy_grammar());
  EXPECT_TRUE(is_downward(s.projectivities[2]));
  EXPECT_TRUE(is_downward(s.projectivities[4]));
}

TEST(Polarity, ParseErrorNamesOffendingToken) {
  try {
    mark_polarity(split_words("all cats zebra run"), toy_grammar());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("zebra"), std::string::npos);
  }
  EXPECT_THROW(mark_polarity(split_words("all some cats run"), toy_grammar()), ParseError);
  EXPECT_THROW(mark_polarity({}, toy_grammar()), ParseError);
}

TEST(Polarity, ProducedParseIsBinaryOverAllTokens) {
  auto s = mark_polarity(split_words("all black cats outside see black dogs quickly"), toy_grammar());
  ASSERT_TRUE(s.parse.has_value());
  EXPECT_TRUE(s.parse->is_binary());
  std::vector<std::size_t> expect(s.size());
  for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = i;
  EXPECT_EQ(s.parse->leaves(), expect);
}

TEST(Polarity, IngestAnnotations) {
  auto toks = split_words("a b c d e");
  auto s = ingest_annotations(toks, identity_rows(5));
  EXPECT_EQ(s.size(), 5u);
  EXPECT_THROW(ingest_annotations(toks, identity_rows(4)), ValidationError);
  auto rows = identity_rows(5);
  rows[2]["rho"].erase("cov");
  EXPECT_THROW(ingest_annotations(toks, rows), ValidationError);
}

TEST(Polarity, BinarizeIsRightBranching) {
  auto t = binarize(parse_tree("(0 1 2)"));
  EXPECT_EQ(t.to_string(), "(0 (1 2))");
  auto flat = binarize(flat_tree(5));
  EXPECT_EQ(flat.depth(), 4u);
  EXPECT_EQ(flat.to_string(), "(0 (1 (2 (3 4))))");
}

TEST(Polarity, BinarizeIsIdempotentAndKeepsBinaryTrees) {
  auto b = parse_tree("(0 ((1 2) (3 4)))");
  EXPECT_EQ(binarize(b).to_string(), b.to_string());
  auto t = binarize(parse_tree("((0 1 2) 3 (4 5 6 7))"));
  EXPECT_EQ(binarize(t).to_string(), t.to_string());
}

TEST(Polarity, TreeSpanValidation) {
  EXPECT_THROW(validate_spans(parse_tree("(0 2)"), 3), ValidationError);
  EXPECT_THROW(parse_tree("(0 1"), ParseError);
  EXPECT_NO_THROW(validate_spans(parse_tree("(0 (1 2))"), 3));
}
