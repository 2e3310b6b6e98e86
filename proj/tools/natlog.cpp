// natlog: command-line front end for inference, training, evaluation and data generation.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "natlog/checkpoint.hpp"
#include "natlog/dataset.hpp"
#include "natlog/evaluation.hpp"
#include "natlog/prover.hpp"
#include "natlog/training.hpp"

using namespace natlog;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config_path;
  bool json_out = false;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

/// Seed resolution: --seed, then NATLOG_SEED, then the config file, then `fallback`.
std::uint64_t resolve_seed(const Common& c, const json& config, std::uint64_t fallback) {
  if (c.seed_set) return c.seed;
  if (const char* env = std::getenv("NATLOG_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ContractViolation(std::string("NATLOG_SEED is not an integer: ") + env);
    }
  }
  if (config.contains("seed")) return config["seed"].get<std::uint64_t>();
  return fallback;
}

json load_config(const Common& c) { return c.config_path.empty() ? json::object() : read_json_file(c.config_path); }

/// Default grammar extended with the word lists of an optional grammar file.
ControlledGrammar make_grammar(const std::string& path) {
  ControlledGrammar g = default_vocabularies().grammar();
  if (path.empty()) return g;
  const json j = read_json_file(path);
  const std::pair<const char*, std::set<std::string>*> fields[] = {
      {"quantifiers", &g.quantifiers}, {"determiners", &g.determiners}, {"adjectives", &g.adjectives},
      {"nouns", &g.nouns},             {"modifiers", &g.modifiers},     {"auxiliaries", &g.auxiliaries},
      {"verbs", &g.verbs},             {"adverbs", &g.adverbs}};
  for (const auto& [key, set] : fields)
    if (j.contains(key))
      for (const auto& w : j[key]) set->insert(lowercase(w.get<std::string>()));
  return g;
}

AnnotatedSentence annotate(const std::vector<std::string>& tokens, const std::string& annotations,
                           const ControlledGrammar& grammar) {
  if (!annotations.empty()) return ingest_annotations(tokens, read_json_file(annotations));
  return mark_polarity(tokens, grammar);
}

std::vector<std::string> sentence(const std::string& text, const char* what) {
  auto toks = split_words(text);
  if (toks.empty()) throw ContractViolation(std::string(what) + " is empty");
  return toks;
}

void print_probs(const std::array<float, kNumLabels>& p) {
  std::cout << std::fixed << std::setprecision(4) << "entailment " << p[0] << "  contradiction " << p[1]
            << "  neutral " << p[2] << "\n";
}

json probs_json(const std::array<float, kNumLabels>& p) {
  return {{"entailment", p[0]}, {"contradiction", p[1]}, {"neutral", p[2]}};
}

// ---------------------------------------------------------------------------
// infer / trace

struct InferArgs {
  std::string premise, hypothesis, checkpoint, mode = "seq", trace_path, relations, grammar;
  std::string premise_annotations, hypothesis_annotations;
};

int run_symbolic(const InferArgs& a, const Common& c) {
  const Generator gen(default_vocabularies());
  const auto grammar = make_grammar(a.grammar);
  const auto p = annotate(sentence(a.premise, "premise"), a.premise_annotations, grammar);
  const auto h = annotate(sentence(a.hypothesis, "hypothesis"), a.hypothesis_annotations, grammar);

  std::vector<Relation> rels;
  SubstitutionTest substitutable = [&](const std::string& x, const std::string& y) { return gen.same_class(x, y); };
  if (!a.relations.empty()) {
    std::stringstream ss(a.relations);
    for (std::string tok; std::getline(ss, tok, ',');) rels.push_back(parse_relation(tok));
    substitutable = [](const std::string&, const std::string&) { return true; };
  } else {
    for (const auto& e : diff_edits(p.tokens, h.tokens, substitutable)) {
      switch (e.type) {
        case EditType::Insertion: rels.push_back(Relation::ReverseEntailment); break;
        case EditType::Deletion: rels.push_back(Relation::ForwardEntailment); break;
        case EditType::Substitution:
          rels.push_back(gen.word_relation(lowercase(p.tokens[*e.premise_index]), lowercase(h.tokens[*e.hypothesis_index])));
          break;
      }
    }
  }
  const Proof proof = prove_pair(p, h, rels, substitutable);
  const auto path = proof.trajectory(h.size());

  json steps = json::array();
  for (const auto& s : proof.steps)
    steps.push_back({{"position", s.position},
                     {"token", h.tokens[s.position]},
                     {"lexical", std::string(to_symbol(s.lexical))},
                     {"projected", std::string(to_symbol(s.projected))},
                     {"state", std::string(to_symbol(s.state))}});
  std::vector<std::string> path_syms;
  for (Relation r : path) path_syms.emplace_back(to_symbol(r));
  json out = {{"mode", "symbolic"},
              {"label", std::string(to_string(proof.label))},
              {"relation", std::string(to_symbol(proof.final_relation))},
              {"steps", steps},
              {"path", path_syms}};
  if (!a.trace_path.empty()) write_text(a.trace_path, out.dump(2) + "\n");
  if (c.json_out) {
    std::cout << out.dump() << "\n";
  } else {
    std::cout << to_string(proof.label) << " (" << to_symbol(proof.final_relation) << ")\n";
    for (const auto& s : proof.steps)
      std::cout << "  " << h.tokens[s.position] << ": " << to_symbol(s.lexical) << " -> " << to_symbol(s.projected)
                << " => " << to_symbol(s.state) << "\n";
  }
  return 0;
}

int run_infer(const InferArgs& a, const Common& c, bool trace_only) {
  if (a.mode == "symbolic") return run_symbolic(a, c);
  if (a.checkpoint.empty()) throw ContractViolation("--checkpoint is required unless --mode symbolic");
  Checkpoint ck = load_checkpoint(a.checkpoint);
  ck.config.aggregation = a.mode == "tree" ? AggregationMode::Tree : AggregationMode::Sequential;
  auto model = restore(ck);
  const auto grammar = make_grammar(a.grammar);
  ModelInput in{sentence(a.premise, "premise"),
                annotate(sentence(a.hypothesis, "hypothesis"), a.hypothesis_annotations, grammar)};
  const auto pred = model.predict(in);
  const json trace = trace_to_json(pred.trace);
  validate_trace_json(trace);
  if (!a.trace_path.empty()) write_text(a.trace_path, trace.dump(2) + "\n");
  if (trace_only) {
    if (a.trace_path.empty()) std::cout << trace.dump(2) << "\n";
    return 0;
  }
  if (c.json_out) {
    std::cout << json{{"mode", a.mode}, {"label", std::string(to_string(pred.label))}, {"probs", probs_json(pred.probs)},
                      {"path", trace["path"]}}
                     .dump()
              << "\n";
  } else {
    std::cout << to_string(pred.label) << "\n";
    print_probs(pred.probs);
    std::cout << "path:";
    for (const auto& r : trace["path"]) std::cout << " " << to_symbol(parse_relation(r.get<std::string>()));
    std::cout << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string train_path, dev_path, out = "natlog.ckpt";
  std::size_t epochs = 0, batch = 0, dim = 0;
  double lr = 0, dropout = -1;
  std::string aggregation;
  bool no_constraints = false;
};

Vocabulary vocabulary_for(const std::vector<const std::vector<Example>*>& sets) {
  Vocabulary v;
  for (const auto& w : default_vocabularies().all_words()) v.add(w);
  for (const auto* s : sets)
    for (const auto& ex : *s) {
      for (const auto& w : ex.premise) v.add(w);
      for (const auto& w : ex.hypothesis) v.add(w);
    }
  return v;
}

int run_train(const TrainArgs& a, CLI::App& sub, const Common& c) {
  const json config = load_config(c);
  ModelConfig mc = config.contains("model") ? config["model"].get<ModelConfig>() : ModelConfig{};
  TrainOptions opts;
  if (config.contains("train")) {
    const auto& t = config["train"];
    opts.epochs = t.value("epochs", opts.epochs);
    opts.batch_size = t.value("batch_size", opts.batch_size);
    opts.learning_rate = t.value("learning_rate", opts.learning_rate);
  }
  if (sub.count("--epochs")) opts.epochs = a.epochs;
  if (sub.count("--batch-size")) opts.batch_size = a.batch;
  if (sub.count("--lr")) opts.learning_rate = a.lr;
  if (sub.count("--dropout")) mc.dropout = a.dropout;
  if (sub.count("--dim")) mc.embed_dim = mc.hidden_dim = a.dim;
  if (sub.count("--aggregation")) mc.aggregation = a.aggregation == "tree" ? AggregationMode::Tree : AggregationMode::Sequential;
  if (a.no_constraints) mc.equivalence_constraint = mc.collapse_constraint = false;
  const std::uint64_t seed = resolve_seed(c, config, mc.seed);
  mc.seed = seed;
  opts.seed = seed;
  mc.validate();

  const Generator gen(default_vocabularies());
  const auto train_ex = load_jsonl(a.train_path);
  const auto dev_ex = a.dev_path.empty() ? std::vector<Example>{} : load_jsonl(a.dev_path);
  std::vector<LabeledInput> tr, dv;
  for (const auto& ex : train_ex) tr.push_back(gen.to_input(ex));
  for (const auto& ex : dev_ex) dv.push_back(gen.to_input(ex));
  if (!c.json_out)
    opts.on_epoch = [](std::size_t e, double loss, double dev) {
      std::cerr << "epoch " << e << " loss " << loss << " dev " << dev << "\n";
    };
  const auto result = train(tr, dv, mc, vocabulary_for({&train_ex, &dev_ex}), opts);
  save_checkpoint(result.best, a.out);
  json summary = {{"checkpoint", a.out}, {"epochs", opts.epochs}, {"best_epoch", result.best.epoch},
                  {"best_dev_accuracy", result.best.dev_accuracy}, {"seed", seed}};
  if (c.json_out)
    std::cout << summary.dump() << "\n";
  else
    std::cout << "saved " << a.out << " (epoch " << result.best.epoch << ", dev " << result.best.dev_accuracy << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string data, checkpoint, predictions, mode;
};

int run_eval(const EvalArgs& a, const Common& c) {
  const auto gold = load_jsonl(a.data);
  Report r;
  if (!a.predictions.empty()) {
    const auto pred = load_jsonl(a.predictions);
    if (pred.size() != gold.size()) throw ValidationError("predictions and data have different lengths");
    std::vector<NliLabel> pl, gl;
    std::vector<std::vector<Relation>> pp, gp;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (pred[i].hypothesis != gold[i].hypothesis) throw ValidationError("prediction " + std::to_string(i) + " is for a different pair");
      pl.push_back(pred[i].label);
      gl.push_back(gold[i].label);
      pp.push_back(pred[i].gold_path());
      gp.push_back(gold[i].gold_path());
    }
    r.accuracy = accuracy(pl, gl);
    r.per_class_counts = per_class_counts(pl, gl);
    r.prf = aggregation_prf(pp, gp);
  } else if (a.mode == "symbolic") {
    SymbolicLearner s;
    std::vector<NliLabel> pl, gl;
    for (const auto& ex : gold) {
      pl.push_back(s.predict(ex));
      gl.push_back(ex.label);
    }
    r.accuracy = accuracy(pl, gl);
    r.per_class_counts = per_class_counts(pl, gl);
  } else {
    if (a.checkpoint.empty()) throw ContractViolation("eval needs --checkpoint, --predictions or --mode symbolic");
    Checkpoint ck = load_checkpoint(a.checkpoint);
    if (!a.mode.empty()) ck.config.aggregation = a.mode == "tree" ? AggregationMode::Tree : AggregationMode::Sequential;
    auto model = restore(ck);
    r = evaluate_model(model, Generator(default_vocabularies()), gold);
  }
  if (c.json_out) {
    std::cout << r.to_json().dump() << "\n";
  } else {
    std::cout << "accuracy " << *r.accuracy << "\n";
    if (r.prf) std::cout << "aggregation P " << r.prf->precision << " R " << r.prf->recall << " F1 " << r.prf->f1 << "\n";
    for (const auto& [k, n] : r.per_class_counts) std::cout << "  " << k << " " << n << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gen-2hop

struct GenArgs {
  std::size_t count = 1000, hops = 2;
  std::string direction, out, edit_types;
};

int run_gen(const GenArgs& a, const Common& c) {
  const json config = load_config(c);
  const std::uint64_t seed = resolve_seed(c, config, 1);
  GeneratorOptions opts;
  opts.direction = a.direction;
  if (!a.edit_types.empty()) {
    opts.edit_types.clear();
    std::stringstream ss(a.edit_types);
    for (std::string t; std::getline(ss, t, ',');) opts.edit_types.push_back(parse_edit_type(t));
  }
  const Generator gen(default_vocabularies());
  const auto data = gen.generate(a.count, a.hops, seed, opts);
  for (const auto& ex : data) gen.recheck(ex);
  if (a.out.empty()) {
    save_jsonl(data, std::cout);
  } else {
    save_jsonl(data, a.out);
    const auto report = label_report(data);
    if (c.json_out)
      std::cout << report.dump() << "\n";
    else
      std::cout << "wrote " << data.size() << " examples to " << a.out << "\n" << report.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// grad-check

struct GradArgs {
  std::size_t examples = 5, samples = 200, dim = 8;
  std::string aggregation = "seq";
};

int run_grad(const GradArgs& a, const Common& c) {
  const json config = load_config(c);
  ModelConfig mc = config.contains("model") ? config["model"].get<ModelConfig>() : ModelConfig{};
  mc.embed_dim = mc.hidden_dim = a.dim;
  mc.aggregation = a.aggregation == "tree" ? AggregationMode::Tree : AggregationMode::Sequential;
  const std::uint64_t seed = resolve_seed(c, config, 7);
  mc.seed = seed;
  const Generator gen(default_vocabularies());
  const auto data = gen.generate(a.examples, 2, seed);
  std::vector<LabeledInput> in;
  for (const auto& ex : data) in.push_back(gen.to_input(ex));
  Model<double> model(mc, vocabulary_for({&data}));
  model.initialize();
  GradCheckOptions opts;
  opts.samples_per_group = a.samples;
  opts.seed = seed;
  const auto report = grad_check(model, in, opts);
  const bool ok = report.max_rel_error < 1e-4;
  if (c.json_out) {
    json groups = json::array();
    for (const auto& g : report.groups)
      groups.push_back({{"name", g.name}, {"checked", g.checked}, {"max_rel_error", g.max_rel_error}, {"worst", g.worst}});
    std::cout << json{{"max_rel_error", report.max_rel_error}, {"pass", ok}, {"groups", groups}}.dump() << "\n";
  } else {
    for (const auto& g : report.groups)
      std::cout << std::left << std::setw(12) << g.name << " checked " << std::setw(4) << g.checked << " max rel err "
                << std::scientific << g.max_rel_error << " at " << g.worst << "\n";
    std::cout << "max rel err " << std::scientific << report.max_rel_error << (ok ? " ok" : " FAIL") << "\n";
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"natlog: neural natural logic inference"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* s) {
    s->add_option("--seed", common.seed, "random seed (falls back to NATLOG_SEED)")
        ->each([&](const std::string&) { common.seed_set = true; });
    s->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    s->add_flag("--json", common.json_out, "machine-readable output");
  };

  InferArgs ia;
  auto add_infer = [&](CLI::App* s, bool symbolic) {
    s->add_option("--premise,-p", ia.premise, "premise sentence")->required();
    s->add_option("--hypothesis,-y", ia.hypothesis, "hypothesis sentence")->required();
    s->add_option("--checkpoint,-c", ia.checkpoint, "model checkpoint");
    s->add_option("--trace", ia.trace_path, "write the trace JSON here");
    s->add_option("--grammar", ia.grammar, "JSON word lists extending the built-in grammar")->check(CLI::ExistingFile);
    s->add_option("--hypothesis-annotations", ia.hypothesis_annotations, "projectivity rows for the hypothesis")
        ->check(CLI::ExistingFile);
    if (symbolic) {
      s->add_option("--mode", ia.mode, "seq, tree or symbolic")->check(CLI::IsMember({"seq", "tree", "symbolic"}));
      s->add_option("--relations", ia.relations, "comma-separated lexical relation per edit (symbolic mode)");
      s->add_option("--premise-annotations", ia.premise_annotations, "projectivity rows for the premise")
          ->check(CLI::ExistingFile);
    } else {
      s->add_option("--mode", ia.mode, "seq or tree")->check(CLI::IsMember({"seq", "tree"}));
    }
    add_common(s);
  };
  auto* infer = app.add_subcommand("infer", "label a sentence pair");
  add_infer(infer, true);
  auto* trace = app.add_subcommand("trace", "print the explanation trace of a sentence pair");
  add_infer(trace, false);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model on JSONL examples");
  train_cmd->add_option("--train", ta.train_path, "training JSONL")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", ta.dev_path, "dev JSONL for model selection")->check(CLI::ExistingFile);
  train_cmd->add_option("--out,-o", ta.out, "checkpoint path");
  train_cmd->add_option("--epochs", ta.epochs, "training epochs");
  train_cmd->add_option("--batch-size", ta.batch, "mini-batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", ta.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--dropout", ta.dropout, "dropout rate");
  train_cmd->add_option("--dim", ta.dim, "embedding and hidden size");
  train_cmd->add_option("--aggregation", ta.aggregation, "seq or tree")->check(CLI::IsMember({"seq", "tree"}));
  train_cmd->add_flag("--no-constraints", ta.no_constraints, "disable the local relation constraints");
  add_common(train_cmd);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate on JSONL examples");
  eval->add_option("--data,-d", ea.data, "gold JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint,-c", ea.checkpoint, "model checkpoint");
  eval->add_option("--predictions", ea.predictions, "predicted examples JSONL, scored against --data")
      ->check(CLI::ExistingFile);
  eval->add_option("--mode", ea.mode, "seq, tree or symbolic")->check(CLI::IsMember({"seq", "tree", "symbolic"}));
  add_common(eval);

  GenArgs ga;
  auto* gen = app.add_subcommand("gen-2hop", "generate synthetic 1-hop or 2-hop examples");
  gen->add_option("--count,-n", ga.count, "number of examples");
  gen->add_option("--hops", ga.hops, "edits per example")->check(CLI::IsMember({1, 2}));
  gen->add_option("--direction", ga.direction, "keep only up or down examples")->check(CLI::IsMember({"up", "down"}));
  gen->add_option("--edit-types", ga.edit_types, "comma-separated insertion,deletion,substitution");
  gen->add_option("--out,-o", ga.out, "output JSONL (stdout when absent)");
  add_common(gen);

  GradArgs gra;
  auto* grad = app.add_subcommand("grad-check", "compare analytic and finite-difference gradients");
  grad->add_option("--examples", gra.examples, "number of random examples")->check(CLI::PositiveNumber);
  grad->add_option("--samples", gra.samples, "entries checked per parameter group")->check(CLI::PositiveNumber);
  grad->add_option("--dim", gra.dim, "embedding and hidden size")->check(CLI::PositiveNumber);
  grad->add_option("--aggregation", gra.aggregation, "seq or tree")->check(CLI::IsMember({"seq", "tree"}));
  add_common(grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*infer) return run_infer(ia, common, false);
    if (*trace) return run_infer(ia, common, true);
    if (*train_cmd) return run_train(ta, *train_cmd, common);
    if (*eval) return run_eval(ea, common);
    if (*gen) return run_gen(ga, common);
    if (*grad) return run_grad(gra, common);
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
