// Acceptance checks: one PASS/FAIL line per criterion. Exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "natlog/evaluation.hpp"

using namespace natlog;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

Vocabulary vocab_of(const Generator& gen) {
  Vocabulary v;
  for (const auto& w : gen.vocabularies().all_words()) v.add(w);
  return v;
}

std::vector<Example> concat(std::vector<Example> a, const std::vector<Example>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

RelationVector<double> random_dist(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  RelationVector<double> v;
  double total = 0.0;
  for (auto& x : v) total += (x = d(rng));
  for (auto& x : v) x /= total;
  return v;
}

// 1. Join and projection tables against the hand-transcribed fixtures.
Outcome tables() {
  const auto t0 = Clock::now();
  int join_ok = 0, proj_ok = 0;
  for (std::size_t u = 0; u < 7; ++u)
    for (std::size_t v = 0; v < 7; ++v)
      join_ok += to_token(join(parse_relation(fixtures::kColumns[u]), parse_relation(fixtures::kColumns[v]))) ==
                 fixtures::kJoin[u][v];
  for (const auto& row : fixtures::kProjection) {
    const auto rho = parse_context(row.context);
    for (std::size_t k = 0; k < 7; ++k) proj_ok += to_token(rho(parse_relation(fixtures::kColumns[k]))) == row.image[k];
  }
  const double t = seconds_since(t0);
  std::ostringstream os;
  os << "join " << join_ok << "/49, projection " << proj_ok << "/42, " << t << " s";
  return {join_ok == 49 && proj_ok == 42 && t < 1.0, os.str()};
}

// 2. "all animals outside are eating" / "all cats outside are playing" in symbolic mode.
Outcome worked_example() {
  ControlledGrammar g;
  g.nouns = {"animals", "cats"};
  g.modifiers = {"outside"};
  g.verbs = {"eating", "playing"};
  const auto p = mark_polarity(split_words("all animals outside are eating"), g);
  const auto h = mark_polarity(split_words("all cats outside are playing"), g);
  const auto proof = prove_pair(p, h, {Relation::ReverseEntailment, Relation::Alternation},
                                [](const std::string&, const std::string&) { return true; });
  const bool ok = proof.steps.size() == 2 && proof.steps[0].projected == Relation::ForwardEntailment &&
                  proof.steps[1].projected == Relation::Alternation &&
                  proof.final_relation == Relation::Alternation && proof.label == NliLabel::Contradiction;
  std::ostringstream os;
  os << "projected {";
  for (const auto& s : proof.steps) os << " " << to_symbol(s.projected);
  os << " } -> " << to_symbol(proof.final_relation) << " -> " << to_string(proof.label);
  return {ok, os.str()};
}

// 3. Soft aggregation on one-hot inputs with bypassed gates against the symbolic fold.
Outcome oracle_equivalence() {
  AggregationParams<double> params(4, 4, 4);
  const AggregationOptions bypass{false, false};
  std::size_t agree = 0, total = 0;
  for (Relation a : kAllRelations)
    for (Relation b : kAllRelations)
      for (Relation c : kAllRelations) {
        std::vector<RelationVector<double>> seq{one_hot<double>(a), one_hot<double>(b), one_hot<double>(c)};
        const std::vector<Relation> rels{a, b, c};
        agree += argmax(run_sequential<double>(seq, {}, params, bypass).states.back()) == join_all(rels);
        ++total;
      }
  const std::size_t short_agree = agree;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, 8), rel(0, kNumRelations - 1);
  for (int i = 0; i < 10000; ++i) {
    std::vector<Relation> rels(len(rng));
    std::vector<RelationVector<double>> seq;
    for (auto& r : rels) {
      r = relation_at(rel(rng));
      seq.push_back(one_hot<double>(r));
    }
    agree += argmax(run_sequential<double>(seq, {}, params, bypass).states.back()) == join_all(rels);
    ++total;
  }
  std::ostringstream os;
  os << "length-3 " << short_agree << "/343, random " << agree - short_agree << "/10000";
  return {agree == total, os.str()};
}

// 4. Analytic gradients against central differences in double precision.
Outcome gradients() {
  const Generator gen(default_vocabularies());
  ModelConfig c;
  c.embed_dim = 8;
  c.hidden_dim = 8;
  c.seed = 5;
  Model<double> model(c, vocab_of(gen));
  model.initialize();
  std::vector<LabeledInput> in;
  for (const auto& ex : gen.generate(5, 2, 99)) in.push_back(gen.to_input(ex));
  GradCheckOptions opts;
  opts.eps = 1e-5;
  const auto report = grad_check(model, in, opts);
  std::ostringstream os;
  os << std::scientific;
  for (const auto& g : report.groups) os << g.name << " " << g.max_rel_error << ", ";
  os << "max " << report.max_rel_error << " on " << in.size() << " examples";
  return {report.groups.size() == 5 && report.max_rel_error < 1e-4, os.str()};
}

// 5. Soft projection conserves mass; the all.arg2 example gives p̄(|) = 0.9.
Outcome projection_mass() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> rel(0, kNumRelations - 1);
  double worst = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    Projectivity::Map map;
    for (auto& r : map) r = relation_at(rel(rng));
    const auto out = soft_project(Projectivity(map), random_dist(rng));
    double total = 0.0;
    for (double x : out) total += x;
    worst = std::max(worst, std::abs(total - 1.0));
  }
  RelationVector<double> raw{};
  raw[index(Relation::Alternation)] = 0.8;
  raw[index(Relation::Negation)] = 0.1;
  raw[index(Relation::Independence)] = 0.1;
  const double alt = soft_project(parse_context("all.arg2"), raw)[index(Relation::Alternation)];
  const bool example_ok = alt == 0.9;
  std::ostringstream os;
  os << "max |sum-1| " << std::scientific << worst << " over 1e6 calls, p(|) = " << std::setprecision(17) << alt;
  return {worst <= 1e-12 && example_ok, os.str()};
}

// 6. Every generated 2-hop example survives symbolic re-derivation.
Outcome generator_validity() {
  const auto t0 = Clock::now();
  const Generator gen(default_vocabularies());
  const auto data = gen.generate(5000, 2, 6);
  std::size_t valid = 0;
  for (const auto& ex : data) {
    try {
      gen.recheck(ex);
      ++valid;
    } catch (const ValidationError&) {
    }
  }
  const double t = seconds_since(t0);
  std::ostringstream os;
  os << valid << "/" << data.size() << " valid, " << t << " s";
  return {valid == data.size() && t < 30.0, os.str()};
}

/// Gold projected one-hot relation per hypothesis position (≡ where nothing is edited).
std::vector<RelationVector<double>> gold_local(const Example& ex) {
  std::vector<Relation> at(ex.hypothesis.size(), Relation::Equivalence);
  for (const auto& e : ex.edits) at[e.position] = join(at[e.position], project(parse_context(e.context), e.relation));
  std::vector<RelationVector<double>> out;
  for (Relation r : at) out.push_back(one_hot<double>(r));
  return out;
}

// 7. Aggregation-path F1 for gold local distributions and for an always-≡ predictor.
Outcome path_metrics() {
  const Generator gen(default_vocabularies());
  const auto data = concat(gen.generate(500, 1, 71), gen.generate(500, 2, 72));
  AggregationParams<double> params(8, 8, 8);
  std::mt19937_64 rng(3);
  params.initialize(rng);
  std::normal_distribution<double> nd;
  std::vector<std::vector<Relation>> predicted, constant, gold;
  for (const auto& ex : data) {
    std::vector<std::vector<double>> reprs(ex.hypothesis.size(), std::vector<double>(8));
    for (auto& r : reprs)
      for (auto& x : r) x = nd(rng);
    const auto tr = run_sequential<double>(gold_local(ex), reprs, params, AggregationOptions{});
    std::vector<Relation> path;
    for (const auto& s : tr.states) path.push_back(argmax(s));
    predicted.push_back(path);
    constant.emplace_back(ex.hypothesis.size(), Relation::Equivalence);
    gold.push_back(ex.gold_path());
  }
  const double f1_gold = aggregation_prf(predicted, gold).f1;
  const double f1_eq = aggregation_prf(constant, gold).f1;
  std::ostringstream os;
  os << "gold-local F1 " << f1_gold << ", always-eq F1 " << f1_eq;
  return {f1_gold == 1.0 && f1_eq == 0.0, os.str()};
}

/// Settings used for the learning checks: residual encoder, lr 2e-3, dropout 0.1, d = 64.
ModelConfig desk_config() {
  ModelConfig c;
  c.embed_dim = 64;
  c.hidden_dim = 64;
  c.dropout = 0.1;
  c.residual = true;
  return c;
}

TrainOptions desk_options() {
  TrainOptions o;
  o.epochs = 32;
  o.learning_rate = 2e-3;
  return o;
}

// 8. End-to-end learning on 4k examples, and the constraint ablation.
Outcome learning() {
  const auto t0 = Clock::now();
  const Generator gen(default_vocabularies());
  const auto train_set = concat(gen.generate(2000, 1, 1), gen.generate(2000, 2, 2));
  const auto test = concat(gen.generate(250, 1, 3), gen.generate(250, 2, 4));
  const auto dev = concat(gen.generate(250, 1, 5), gen.generate(250, 2, 6));

  NeuralLearner full(gen, desk_config(), vocab_of(gen), desk_options());
  full.fit(train_set, dev);
  const auto r_full = evaluate_model(full.model(), gen, test);

  auto ablated_cfg = desk_config();
  ablated_cfg.equivalence_constraint = false;
  ablated_cfg.collapse_constraint = false;
  NeuralLearner ablated(gen, ablated_cfg, vocab_of(gen), desk_options());
  ablated.fit(train_set, dev);
  const auto r_abl = evaluate_model(ablated.model(), gen, test);

  const double t = seconds_since(t0);
  std::ostringstream os;
  os << "test acc " << *r_full.accuracy << " (>= 0.85), F1 " << r_full.prf->f1 << " vs ablation F1 " << r_abl.prf->f1
     << " (acc " << *r_abl.accuracy << "), " << t << " s";
  return {*r_full.accuracy >= 0.85 && r_full.prf->f1 > r_abl.prf->f1 && t < 600.0, os.str()};
}

// 9. Upward-only training, downward testing.
Outcome transfer() {
  const Generator gen(default_vocabularies());
  GeneratorOptions up, down;
  up.direction = "up";
  down.direction = "down";
  const auto train_up = concat(gen.generate(1000, 1, 11, up), gen.generate(1000, 2, 12, up));
  const auto dev_up = concat(gen.generate(150, 1, 13, up), gen.generate(150, 2, 14, up));
  const auto test_down = concat(gen.generate(250, 1, 15, down), gen.generate(250, 2, 16, down));

  auto opts = desk_options();
  opts.epochs = 16;
  NeuralLearner full(gen, desk_config(), vocab_of(gen), opts);
  const auto r_full = transfer_eval(full, train_up, dev_up, test_down);
  BagOfEmbeddings bow(vocab_of(gen), BagOfEmbeddings::Options{});
  const auto r_bow = transfer_eval(bow, train_up, dev_up, test_down);
  SymbolicLearner sym;
  const auto r_sym = transfer_eval(sym, train_up, dev_up, test_down);

  const double gap = *r_full.down_test_acc - *r_bow.down_test_acc;
  std::ostringstream os;
  os << "down acc full " << *r_full.down_test_acc << " (up dev " << *r_full.up_dev_acc << "), bag-of-embeddings "
     << *r_bow.down_test_acc << " (up dev " << *r_bow.up_dev_acc << "), gap " << gap << "; symbolic up "
     << *r_sym.up_dev_acc << " down " << *r_sym.down_test_acc;
  return {gap >= 0.15 && *r_sym.up_dev_acc == 1.0 && *r_sym.down_test_acc == 1.0, os.str()};
}

// 10. Identical seeds give identical checkpoints; save and load preserve outputs.
Outcome determinism() {
  const Generator gen(default_vocabularies());
  const auto data = concat(gen.generate(150, 1, 31), gen.generate(150, 2, 32));
  const auto dev = gen.generate(50, 2, 33);
  std::vector<LabeledInput> tr, dv;
  for (const auto& ex : data) tr.push_back(gen.to_input(ex));
  for (const auto& ex : dev) dv.push_back(gen.to_input(ex));
  ModelConfig c;
  c.embed_dim = 16;
  c.hidden_dim = 16;
  TrainOptions o;
  o.epochs = 3;
  const auto a = train(tr, dv, c, vocab_of(gen), o);
  const auto b = train(tr, dv, c, vocab_of(gen), o);
  const bool same = serialize(a.last) == serialize(b.last) && serialize(a.best) == serialize(b.best);

  const std::string path = "acceptance_roundtrip.ckpt";
  save_checkpoint(a.last, path);
  auto loaded = restore(load_checkpoint(path));
  auto original = restore(a.last);
  std::remove(path.c_str());
  bool exact = true;
  for (const auto& ex : dev) {
    const auto in = gen.to_input(ex).input;
    const auto p = original.predict(in), q = loaded.predict(in);
    exact = exact && p.probs == q.probs && p.trace.aggregation.states == q.trace.aggregation.states;
  }
  std::ostringstream os;
  os << "checkpoints " << (same ? "identical" : "differ") << ", round trip " << (exact ? "bit-exact" : "differs");
  return {same && exact, os.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"tables", tables},
      {"worked example", worked_example},
      {"oracle equivalence", oracle_equivalence},
      {"gradients", gradients},
      {"projection mass", projection_mass},
      {"generator validity", generator_validity},
      {"path metrics", path_metrics},
      {"learning", learning},
      {"transfer", transfer},
      {"determinism", determinism},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
