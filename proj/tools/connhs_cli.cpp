// Command-line entry point: corpus generation, graph building, pre-training
// and the evaluation harnesses.
//
// Exit codes: 0 success, 2 config or input error, 3 training divergence.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "connhs/connhs.hpp"

namespace {

using namespace connhs;

constexpr int kExitInput = 2;
constexpr int kExitDivergence = 3;

// Values given on the command line; each overrides the config file.
struct Overrides {
  std::string config_path;
  std::optional<std::string> bundle, output, checkpoint, log;
  std::optional<std::uint64_t> seed;
  std::optional<double> rho_t, rho_e, rho_k;
  std::optional<int> gamma_e, gamma_k;
  std::optional<double> tau, sift_threshold;
  std::optional<std::string> mode;
  std::optional<int> max_epochs, patience;
  std::optional<double> learning_rate;
  std::optional<bool> record_timing;
  std::optional<int> hidden_dim, layers, proj_dim, attention_dim;
  std::optional<std::string> gate, aggregation;
  std::optional<int> classifier_epochs;
  std::optional<double> classifier_learning_rate;
  std::optional<bool> normalize;
  std::optional<double> label_rate;
  std::optional<std::string> sweep_param;
  std::optional<std::vector<double>> sweep_values;
  std::optional<std::vector<std::string>> modes;
  std::optional<std::vector<double>> label_rates;
};

void add_config_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--bundle", o.bundle, "Input corpus bundle");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--rho-t", o.rho_t, "Title similarity threshold");
  cmd->add_option("--rho-e", o.rho_e, "Event similarity threshold");
  cmd->add_option("--rho-k", o.rho_k, "Keyword similarity threshold");
  cmd->add_option("--gamma-e", o.gamma_e, "Event pair-count threshold");
  cmd->add_option("--gamma-k", o.gamma_k, "Keyword pair-count threshold");
}

void add_training_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--tau", o.tau, "Contrastive temperature");
  cmd->add_option("--sift-threshold", o.sift_threshold, "Attribute sifting threshold");
  cmd->add_option("--mode", o.mode, "Loss mode: NHS, NHS_gs, NHS_na, NT_Xent");
  cmd->add_option("--max-epochs", o.max_epochs, "Maximum pre-training epochs");
  cmd->add_option("--patience", o.patience, "Early-stopping patience");
  cmd->add_option("--learning-rate", o.learning_rate, "Adam learning rate");
  cmd->add_option("--record-timing", o.record_timing, "Record wall-clock times (true/false)");
  cmd->add_option("--hidden-dim", o.hidden_dim, "RW-GCN width");
  cmd->add_option("--layers", o.layers, "RW-GCN depth");
  cmd->add_option("--proj-dim", o.proj_dim, "Projection head width");
  cmd->add_option("--attention-dim", o.attention_dim, "CGAN attention width");
  cmd->add_option("--gate", o.gate, "Gate kind: scalar or elementwise");
  cmd->add_option("--aggregation", o.aggregation, "Neighbor aggregation: mean or sum");
}

void add_eval_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--out", o.output, "Output prefix; writes <prefix>.json and <prefix>.csv");
  cmd->add_option("--label-rate", o.label_rate, "Fraction of training documents labeled");
  cmd->add_option("--classifier-epochs", o.classifier_epochs, "Logistic regression epochs");
  cmd->add_option("--classifier-learning-rate", o.classifier_learning_rate, "Logistic regression step size");
  cmd->add_option("--normalize", o.normalize, "Unit-normalize representations (true/false)");
  cmd->add_option("--checkpoint", o.checkpoint, "Also save the pre-trained parameters");
}

template <class T, class U>
void apply(const std::optional<T>& v, U& target) {
  if (v) target = *v;
}

std::uint64_t parse_seed(const std::string& text, const std::string& source) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text.front() == '-') {
    throw InputError(source + ": '" + text + "' is not a nonnegative integer");
  }
  return v;
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("CONNHS_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  return parse_seed(s, "CONNHS_SEED");
}

// Precedence: defaults < config file < CONNHS_SEED < flags.
ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw InputError("cannot open config '" + o.config_path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("config '" + o.config_path + "': " + e.what());
    }
    if (!j.is_object()) throw InputError("config '" + o.config_path + "' must be a JSON object");
    c = config_from_json(j);
  }
  if (auto s = env_seed()) c.train.seed = *s;
  apply(o.seed, c.train.seed);
  apply(o.bundle, c.io.bundle);
  apply(o.output, c.io.output);
  apply(o.checkpoint, c.io.checkpoint);
  apply(o.log, c.io.log);
  apply(o.rho_t, c.thresholds.rho_t);
  apply(o.rho_e, c.thresholds.rho_e);
  apply(o.rho_k, c.thresholds.rho_k);
  apply(o.gamma_e, c.thresholds.gamma_e);
  apply(o.gamma_k, c.thresholds.gamma_k);
  apply(o.tau, c.loss.tau);
  apply(o.sift_threshold, c.loss.sift_threshold);
  if (o.mode) c.loss.mode = parse_loss_mode(*o.mode);
  apply(o.max_epochs, c.train.max_epochs);
  apply(o.patience, c.train.patience);
  // A shorter run given on the command line caps the inherited patience.
  if (o.max_epochs && !o.patience && c.train.max_epochs > 0 && c.train.patience > c.train.max_epochs) {
    c.train.patience = c.train.max_epochs;
  }
  apply(o.learning_rate, c.train.learning_rate);
  apply(o.record_timing, c.train.record_timing);
  apply(o.hidden_dim, c.arch.hidden_dim);
  apply(o.layers, c.arch.layers);
  apply(o.proj_dim, c.arch.proj_dim);
  apply(o.attention_dim, c.arch.attention_dim);
  if (o.gate) c.arch.gate = parse_gate_kind(*o.gate);
  if (o.aggregation) c.arch.aggregation = parse_aggregation(*o.aggregation);
  apply(o.classifier_epochs, c.classifier.lr.epochs);
  apply(o.classifier_learning_rate, c.classifier.lr.learning_rate);
  apply(o.normalize, c.classifier.normalize);
  apply(o.label_rate, c.label_rate);
  apply(o.sweep_param, c.harness.sweep_param);
  apply(o.sweep_values, c.harness.sweep_values);
  apply(o.label_rates, c.harness.label_rates);
  if (o.modes) {
    c.harness.modes.clear();
    for (const auto& m : *o.modes) c.harness.modes.push_back(parse_loss_mode(m));
  }
  c.validate();
  return c;
}

Corpus load_input(const ExperimentConfig& c) {
  if (c.io.bundle.empty()) throw InputError("--bundle is required");
  return load_bundle(c.io.bundle);
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

void write_results(const ExperimentConfig& c, const std::vector<ExperimentResult>& results) {
  std::ostringstream json, csv;
  write_results_json(json, results, c);
  write_results_csv(csv, results, c);
  write_file(c.io.output + ".json", json.str());
  write_file(c.io.output + ".csv", csv.str());
  for (const auto& r : results) {
    std::cout << r.run_id << " mode=" << to_string(r.mode) << " label_rate=" << r.label_rate
              << " accuracy=" << r.metrics.accuracy << " f1_macro=" << r.metrics.f1 << '\n';
  }
}

void require_output(const ExperimentConfig& c) {
  if (c.io.output.empty()) throw InputError("--out is required");
}

int cmd_gen(SyntheticSpec spec, const std::optional<std::uint64_t>& seed, const std::string& out) {
  if (auto s = env_seed()) spec.seed = *s;
  if (seed) spec.seed = *seed;
  const auto corpus = generate_synthetic(spec);
  save_bundle(out, corpus);
  std::cout << "wrote " << corpus.size() << " documents to " << out << '\n';
  return 0;
}

int cmd_build_graph(const Overrides& o, const std::string& out) {
  const auto c = resolve_config(o);
  const auto corpus = load_input(c);
  const auto g = build_graph(corpus, c.thresholds);
  if (!out.empty()) write_file(out, graph_to_json(g).dump() + "\n");
  for (auto r : kRelations) std::cout << to_string(r) << ' ' << g.relation(r).edge_count() << '\n';
  return 0;
}

int cmd_train(const Overrides& o) {
  const auto c = resolve_config(o);
  if (c.io.checkpoint.empty()) throw InputError("--checkpoint is required");
  const auto corpus = load_input(c);
  const auto g = build_graph(corpus, c.thresholds);
  auto tcfg = c.train_config();
  tcfg.checkpoint_path = c.io.checkpoint;
  const auto result = pretrain(corpus, g, tcfg, c.arch);
  if (!c.io.log.empty()) save_training_log(c.io.log, result.log);
  std::cout << "epochs " << result.log.size();
  if (!result.log.empty()) std::cout << " initial_loss " << result.log.front().loss << " final_loss " << result.log.back().loss;
  std::cout << '\n';
  return 0;
}

int cmd_eval(const Overrides& o) {
  const auto c = resolve_config(o);
  require_output(c);
  const auto corpus = load_input(c);
  write_results(c, {run_experiment(corpus, c)});
  return 0;
}

int cmd_sweep(const Overrides& o) {
  const auto c = resolve_config(o);
  require_output(c);
  if (c.harness.sweep_param.empty()) throw InputError("--param is required");
  if (c.harness.sweep_values.empty()) throw InputError("--values is required");
  const auto corpus = load_input(c);
  write_results(c, run_sensitivity_sweep(corpus, c, c.harness.sweep_param, c.harness.sweep_values));
  return 0;
}

int cmd_ablate(const Overrides& o) {
  const auto c = resolve_config(o);
  require_output(c);
  if (c.harness.modes.empty()) throw InputError("--modes must name at least one mode");
  const auto corpus = load_input(c);
  write_results(c, run_ablation(corpus, c, c.harness.modes));
  return 0;
}

int cmd_label_rate(const Overrides& o) {
  const auto c = resolve_config(o);
  require_output(c);
  if (c.harness.label_rates.empty()) throw InputError("--rates must list at least one rate");
  for (double r : c.harness.label_rates) {
    if (!(r > 0.0 && r <= 1.0)) throw InputError("--rates: " + std::to_string(r) + " is outside (0, 1]");
  }
  const auto corpus = load_input(c);
  write_results(c, run_label_rate_sweep(corpus, c, c.harness.label_rates));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-relational text graph contrastive pre-training and evaluation"};
  app.require_subcommand(1);
  Overrides o;

  SyntheticSpec spec;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a planted-cluster synthetic corpus bundle");
  gen->add_option("--clusters", spec.n_clusters, "Number of clusters")->check(CLI::PositiveNumber);
  gen->add_option("--per", spec.docs_per_cluster, "Documents per cluster")->check(CLI::PositiveNumber);
  gen->add_option("--dim", spec.dim, "Embedding dimension")->check(CLI::PositiveNumber);
  gen->add_option("--noise", spec.intra_noise, "Per-coordinate noise scale")->check(CLI::NonNegativeNumber);
  gen->add_option("--confuser-rate", spec.cross_confuser_rate, "Fraction of confuser documents")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--out", gen_out, "Output bundle path")->required();

  std::string graph_out;
  auto* bg = app.add_subcommand("build-graph", "Build the multi-relational graph and print edge counts");
  add_config_flags(bg, o);
  bg->add_option("--out", graph_out, "Graph export path");

  auto* train = app.add_subcommand("train", "Contrastive pre-training; writes a checkpoint and a log");
  add_config_flags(train, o);
  add_training_flags(train, o);
  train->add_option("--checkpoint", o.checkpoint, "Checkpoint output path");
  train->add_option("--log", o.log, "Training log CSV path");

  auto* eval = app.add_subcommand("eval", "Single end-to-end run");
  add_config_flags(eval, o);
  add_training_flags(eval, o);
  add_eval_flags(eval, o);

  auto* sweep = app.add_subcommand("sweep", "Sensitivity sweep over one hyperparameter");
  add_config_flags(sweep, o);
  add_training_flags(sweep, o);
  add_eval_flags(sweep, o);
  sweep->add_option("--param", o.sweep_param, "Parameter name")
      ->check(CLI::IsMember(sweepable_parameters()));
  sweep->add_option("--values", o.sweep_values, "Values, comma separated")->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "Compare loss modes");
  add_config_flags(ablate, o);
  add_training_flags(ablate, o);
  add_eval_flags(ablate, o);
  ablate->add_option("--modes", o.modes, "Loss modes, comma separated")->delimiter(',');

  auto* rates = app.add_subcommand("label-rate", "Few-label sweep over labeled fractions");
  add_config_flags(rates, o);
  add_training_flags(rates, o);
  add_eval_flags(rates, o);
  rates->add_option("--rates", o.label_rates, "Label rates, comma separated")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (gen->parsed()) return cmd_gen(spec, gen_seed, gen_out);
    if (bg->parsed()) return cmd_build_graph(o, graph_out);
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (ablate->parsed()) return cmd_ablate(o);
    if (rates->parsed()) return cmd_label_rate(o);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
