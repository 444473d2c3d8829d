#pragma once

// Experiment harness: one end-to-end run (graph -> pre-training -> encoding ->
// logistic regression -> metrics) and the few-label, ablation and sensitivity
// sweeps built on it.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "connhs/classifier.hpp"
#include "connhs/contrastive.hpp"
#include "connhs/corpus.hpp"
#include "connhs/error.hpp"
#include "connhs/graph.hpp"
#include "connhs/neural.hpp"
#include "connhs/trainer.hpp"

namespace connhs {

struct ClassifierConfig {
  LrConfig lr;
  // Scale each representation to unit length before fitting and predicting.
  bool normalize = false;

  bool operator==(const ClassifierConfig& o) const {
    return lr.epochs == o.lr.epochs && lr.learning_rate == o.lr.learning_rate && normalize == o.normalize;
  }
};

struct HarnessConfig {
  std::string sweep_param;
  std::vector<double> sweep_values;
  std::vector<LossMode> modes = {LossMode::NHS, LossMode::NHS_gs, LossMode::NHS_na, LossMode::NT_Xent};
  std::vector<double> label_rates = {0.01, 0.02, 0.05, 0.10};
};

struct IoConfig {
  std::string bundle;
  std::string output;
  std::string checkpoint;
  std::string log;
};

struct ExperimentConfig {
  ThresholdConfig thresholds;
  LossConfig loss;
  TrainConfig train;
  Architecture arch;
  ClassifierConfig classifier;
  double label_rate = 0.1;
  HarnessConfig harness;
  IoConfig io;

  void validate() const {
    thresholds.validate();
    loss.validate();
    TrainConfig t = train;
    t.loss = loss;
    t.validate();
    if (!(label_rate > 0.0 && label_rate <= 1.0)) throw InputError("label_rate must lie in (0, 1]");
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.loss = loss;
    return t;
  }
};

// ---------------------------------------------------------------------------
// Config <-> JSON. Missing keys keep their defaults.

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["thresholds"] = {{"rho_t", c.thresholds.rho_t},     {"rho_e", c.thresholds.rho_e},
                     {"rho_k", c.thresholds.rho_k},     {"gamma_e", c.thresholds.gamma_e},
                     {"gamma_k", c.thresholds.gamma_k}};
  j["loss"] = {{"tau", c.loss.tau}, {"sift_threshold", c.loss.sift_threshold}, {"mode", to_string(c.loss.mode)}};
  j["train"] = {{"max_epochs", c.train.max_epochs},       {"patience", c.train.patience},
                {"learning_rate", c.train.learning_rate}, {"seed", c.train.seed},
                {"record_timing", c.train.record_timing}};
  j["arch"] = architecture_to_json(c.arch);
  j["classifier"] = {{"epochs", c.classifier.lr.epochs},
                     {"learning_rate", c.classifier.lr.learning_rate},
                     {"normalize", c.classifier.normalize}};
  j["label_rate"] = c.label_rate;
  std::vector<std::string> modes;
  for (auto m : c.harness.modes) modes.emplace_back(to_string(m));
  j["harness"] = {{"sweep_param", c.harness.sweep_param},
                  {"sweep_values", c.harness.sweep_values},
                  {"modes", modes},
                  {"label_rates", c.harness.label_rates}};
  j["io"] = {{"bundle", c.io.bundle}, {"output", c.io.output}, {"checkpoint", c.io.checkpoint}, {"log", c.io.log}};
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  try {
    if (auto t = j.find("thresholds"); t != j.end()) {
      c.thresholds.rho_t = t->value("rho_t", c.thresholds.rho_t);
      c.thresholds.rho_e = t->value("rho_e", c.thresholds.rho_e);
      c.thresholds.rho_k = t->value("rho_k", c.thresholds.rho_k);
      c.thresholds.gamma_e = t->value("gamma_e", c.thresholds.gamma_e);
      c.thresholds.gamma_k = t->value("gamma_k", c.thresholds.gamma_k);
    }
    if (auto l = j.find("loss"); l != j.end()) {
      c.loss.tau = l->value("tau", c.loss.tau);
      c.loss.sift_threshold = l->value("sift_threshold", c.loss.sift_threshold);
      if (l->contains("mode")) c.loss.mode = parse_loss_mode(l->at("mode").get<std::string>());
    }
    if (auto t = j.find("train"); t != j.end()) {
      c.train.max_epochs = t->value("max_epochs", c.train.max_epochs);
      c.train.patience = t->value("patience", c.train.patience);
      c.train.learning_rate = t->value("learning_rate", c.train.learning_rate);
      c.train.seed = t->value("seed", c.train.seed);
      c.train.record_timing = t->value("record_timing", c.train.record_timing);
    }
    if (auto a = j.find("arch"); a != j.end()) c.arch = architecture_from_json(*a, c.arch);
    if (auto k = j.find("classifier"); k != j.end()) {
      c.classifier.lr.epochs = k->value("epochs", c.classifier.lr.epochs);
      c.classifier.lr.learning_rate = k->value("learning_rate", c.classifier.lr.learning_rate);
      c.classifier.normalize = k->value("normalize", c.classifier.normalize);
    }
    c.label_rate = j.value("label_rate", c.label_rate);
    if (auto h = j.find("harness"); h != j.end()) {
      c.harness.sweep_param = h->value("sweep_param", c.harness.sweep_param);
      c.harness.sweep_values = h->value("sweep_values", c.harness.sweep_values);
      c.harness.label_rates = h->value("label_rates", c.harness.label_rates);
      if (h->contains("modes")) {
        c.harness.modes.clear();
        for (const auto& m : h->at("modes")) c.harness.modes.push_back(parse_loss_mode(m.get<std::string>()));
      }
    }
    if (auto io = j.find("io"); io != j.end()) {
      c.io.bundle = io->value("bundle", c.io.bundle);
      c.io.output = io->value("output", c.io.output);
      c.io.checkpoint = io->value("checkpoint", c.io.checkpoint);
      c.io.log = io->value("log", c.io.log);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------

struct ExperimentResult {
  std::string run_id;
  LossMode mode = LossMode::NHS;
  double label_rate = 0.0;
  std::string swept_param;
  std::optional<double> swept_value;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  int epochs_trained = 0;
  double wall_time_ms = 0.0;
};

inline std::vector<int> class_indices(const Corpus& corpus, const std::vector<std::size_t>& rows) {
  const auto& classes = corpus.class_set();
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto i : rows) {
    const auto& label = corpus.docs()[i].label;
    if (!label) throw InputError("document '" + corpus.docs()[i].id + "' has no label");
    const auto it = std::lower_bound(classes.begin(), classes.end(), *label);
    out.push_back(static_cast<int>(it - classes.begin()));
  }
  return out;
}

inline Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows, bool normalize) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k]));
    if (normalize) {
      const double norm = out.row(static_cast<Eigen::Index>(k)).norm();
      if (norm > 0.0) out.row(static_cast<Eigen::Index>(k)) /= norm;
    }
  }
  return out;
}

// Fits the classifier on the labeled training documents and scores the
// labeled test documents. reps has one row per corpus document.
inline MetricsReport evaluate_representations(const Corpus& corpus, const Matrix& reps, double label_rate,
                                              const ClassifierConfig& cfg) {
  if (static_cast<std::size_t>(reps.rows()) != corpus.size()) throw InputError("representation rows differ from corpus");
  const auto views = split_views(corpus, label_rate);
  std::vector<std::size_t> train_rows, test_rows;
  for (const auto& id : views.labeled) train_rows.push_back(*corpus.index_of(id));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& d = corpus.docs()[i];
    if (d.split == Split::test && d.label) test_rows.push_back(i);
  }
  if (test_rows.empty()) throw InputError("corpus has no labeled test documents");
  const auto model = train_lr(select_rows(reps, train_rows, cfg.normalize), class_indices(corpus, train_rows),
                              static_cast<int>(corpus.class_set().size()), cfg.lr);
  const auto predicted = predict(model, select_rows(reps, test_rows, cfg.normalize));
  return compute_metrics(predicted, class_indices(corpus, test_rows), corpus.class_set());
}

// Logistic regression on the raw content vectors, no graph and no pre-training.
inline MetricsReport raw_embedding_baseline(const Corpus& corpus, double label_rate, const ClassifierConfig& cfg) {
  return evaluate_representations(corpus, feature_matrix(corpus), label_rate, cfg);
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct Pretrained {
  TrainResult train;
  Encoding encoding;
};

inline Pretrained pretrain_and_encode(const Corpus& corpus, const ExperimentConfig& cfg) {
  const auto graph = build_graph(corpus, cfg.thresholds);
  Architecture arch = cfg.arch;
  arch.input_dim = static_cast<int>(corpus.dim());
  auto tcfg = cfg.train_config();
  if (!cfg.io.checkpoint.empty()) tcfg.checkpoint_path = cfg.io.checkpoint;
  Pretrained p;
  p.train = pretrain(corpus, graph, tcfg, arch);
  p.encoding = encode(corpus, graph, p.train.params);
  return p;
}

}  // namespace detail

inline ExperimentResult run_experiment(const Corpus& corpus, const ExperimentConfig& cfg, std::string run_id = "run-0") {
  cfg.validate();
  const auto start = detail::Clock::now();
  const auto pre = detail::pretrain_and_encode(corpus, cfg);
  ExperimentResult r;
  r.run_id = std::move(run_id);
  r.mode = cfg.loss.mode;
  r.label_rate = cfg.label_rate;
  r.seed = cfg.train.seed;
  r.metrics = evaluate_representations(corpus, pre.encoding.fused, cfg.label_rate, cfg.classifier);
  r.epochs_trained = static_cast<int>(pre.train.log.size());
  if (cfg.train.record_timing) r.wall_time_ms = detail::elapsed_ms(start);
  return r;
}

// Pre-trains once (the contrastive stage sees no labels) and evaluates every rate.
inline std::vector<ExperimentResult> run_label_rate_sweep(const Corpus& corpus, const ExperimentConfig& cfg,
                                                          const std::vector<double>& rates) {
  cfg.validate();
  const auto start = detail::Clock::now();
  const auto pre = detail::pretrain_and_encode(corpus, cfg);
  const double shared_ms = cfg.train.record_timing ? detail::elapsed_ms(start) : 0.0;
  std::vector<ExperimentResult> out;
  for (std::size_t k = 0; k < rates.size(); ++k) {
    const auto t0 = detail::Clock::now();
    ExperimentResult r;
    r.run_id = "label-rate-" + std::to_string(k);
    r.mode = cfg.loss.mode;
    r.label_rate = rates[k];
    r.swept_param = "label_rate";
    r.swept_value = rates[k];
    r.seed = cfg.train.seed;
    r.metrics = evaluate_representations(corpus, pre.encoding.fused, rates[k], cfg.classifier);
    r.epochs_trained = static_cast<int>(pre.train.log.size());
    if (cfg.train.record_timing) r.wall_time_ms = shared_ms + detail::elapsed_ms(t0);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<ExperimentResult> run_ablation(const Corpus& corpus, const ExperimentConfig& cfg,
                                                  const std::vector<LossMode>& modes) {
  std::vector<ExperimentResult> out;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    ExperimentConfig c = cfg;
    c.loss.mode = modes[k];
    out.push_back(run_experiment(corpus, c, std::string("ablate-") + to_string(modes[k])));
  }
  return out;
}

inline const std::vector<std::string>& sweepable_parameters() {
  static const std::vector<std::string> names = {"rho_t",   "rho_e", "rho_k",         "gamma_e",
                                                 "gamma_k", "tau",   "sift_threshold"};
  return names;
}

// Returns cfg with the named hyperparameter set to value.
inline ExperimentConfig with_parameter(ExperimentConfig cfg, const std::string& name, double value) {
  auto as_int = [&](double v) {
    if (v != std::floor(v)) throw InputError(name + " takes integer values, got " + std::to_string(v));
    return static_cast<int>(v);
  };
  if (name == "rho_t") {
    cfg.thresholds.rho_t = value;
  } else if (name == "rho_e") {
    cfg.thresholds.rho_e = value;
  } else if (name == "rho_k") {
    cfg.thresholds.rho_k = value;
  } else if (name == "gamma_e") {
    cfg.thresholds.gamma_e = as_int(value);
  } else if (name == "gamma_k") {
    cfg.thresholds.gamma_k = as_int(value);
  } else if (name == "tau") {
    cfg.loss.tau = value;
  } else if (name == "sift_threshold") {
    cfg.loss.sift_threshold = value;
  } else {
    throw InputError("unknown sweep parameter '" + name + "'");
  }
  return cfg;
}

inline std::vector<ExperimentResult> run_sensitivity_sweep(const Corpus& corpus, const ExperimentConfig& cfg,
                                                           const std::string& parameter,
                                                           const std::vector<double>& values) {
  std::vector<ExperimentResult> out;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const auto c = with_parameter(cfg, parameter, values[k]);
    auto r = run_experiment(corpus, c, "sweep-" + parameter + "-" + std::to_string(k));
    r.swept_param = parameter;
    r.swept_value = values[k];
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Result files. Both embed the resolved config.

inline nlohmann::ordered_json result_to_json(const ExperimentResult& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["mode"] = to_string(r.mode);
  j["label_rate"] = r.label_rate;
  j["swept_param"] = r.swept_param.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.swept_param);
  j["swept_value"] = r.swept_value ? nlohmann::ordered_json(*r.swept_value) : nlohmann::ordered_json(nullptr);
  j["seed"] = r.seed;
  j["accuracy"] = r.metrics.accuracy;
  j["precision_macro"] = r.metrics.precision;
  j["f1_macro"] = r.metrics.f1;
  j["epochs_trained"] = r.epochs_trained;
  j["wall_time_ms"] = r.wall_time_ms;
  return j;
}

inline nlohmann::ordered_json results_document(const std::vector<ExperimentResult>& results,
                                               const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["config"] = config_to_json(cfg);
  auto runs = nlohmann::ordered_json::array();
  for (const auto& r : results) runs.push_back(result_to_json(r));
  j["runs"] = std::move(runs);
  return j;
}

inline void write_results_json(std::ostream& out, const std::vector<ExperimentResult>& results,
                               const ExperimentConfig& cfg) {
  out << results_document(results, cfg).dump(2) << '\n';
}

// Tidy CSV; the first line is a '#' comment carrying the config as JSON.
inline void write_results_csv(std::ostream& out, const std::vector<ExperimentResult>& results,
                              const ExperimentConfig& cfg) {
  out << "# config: " << config_to_json(cfg).dump() << '\n';
  out << "run_id,mode,label_rate,swept_param,swept_value,seed,accuracy,precision_macro,f1_macro,"
         "epochs_trained,wall_time_ms\n";
  std::ostringstream line;
  line << std::setprecision(17);
  for (const auto& r : results) {
    line.str("");
    line << r.run_id << ',' << to_string(r.mode) << ',' << r.label_rate << ',' << r.swept_param << ',';
    if (r.swept_value) line << *r.swept_value;
    line << ',' << r.seed << ',' << r.metrics.accuracy << ',' << r.metrics.precision << ',' << r.metrics.f1 << ','
         << r.epochs_trained << ',' << r.wall_time_ms << '\n';
    out << line.str();
  }
}

}  // namespace connhs
