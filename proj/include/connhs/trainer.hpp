#pragma once

// Contrastive pre-training loop, Adam, and the inference pass that produces
// the fused document representations.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "connhs/contrastive.hpp"
#include "connhs/error.hpp"
#include "connhs/graph.hpp"
#include "connhs/neural.hpp"

namespace connhs {

struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  ModelParameters first_moment;
  ModelParameters second_moment;

  static OptimizerState for_parameters(const ModelParameters& p, double learning_rate = 1e-3) {
    OptimizerState s;
    s.learning_rate = learning_rate;
    s.first_moment = zeros_like(p);
    s.second_moment = zeros_like(p);
    return s;
  }
};

// Bias-corrected Adam update, applied in place.
inline void adam_step(ModelParameters& params, const Gradients& grads, OptimizerState& state) {
  std::vector<std::span<double>> p, m, v;
  std::vector<std::span<const double>> g;
  for_each_tensor(params, [&](const std::string&, std::span<double> s, auto, auto) { p.push_back(s); });
  for_each_tensor(grads, [&](const std::string&, std::span<const double> s, auto, auto) { g.push_back(s); });
  for_each_tensor(state.first_moment, [&](const std::string&, std::span<double> s, auto, auto) { m.push_back(s); });
  for_each_tensor(state.second_moment, [&](const std::string&, std::span<double> s, auto, auto) { v.push_back(s); });
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw InputError("adam_step: parameter, gradient and moment layouts differ");
  }
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (g[t].size() != p[t].size() || m[t].size() != p[t].size() || v[t].size() != p[t].size()) {
      throw InputError("adam_step: tensor shapes differ");
    }
    for (double x : g[t]) {
      if (!std::isfinite(x)) throw DivergenceError("adam_step: non-finite gradient");
    }
  }
  ++state.step_count;
  const auto step = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, step);
  const double c2 = 1.0 - std::pow(state.beta2, step);
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t k = 0; k < p[t].size(); ++k) {
      m[t][k] = state.beta1 * m[t][k] + (1.0 - state.beta1) * g[t][k];
      v[t][k] = state.beta2 * v[t][k] + (1.0 - state.beta2) * g[t][k] * g[t][k];
      const double m_hat = m[t][k] / c1;
      const double v_hat = v[t][k] / c2;
      p[t][k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

struct TrainConfig {
  int max_epochs = 500;
  int patience = 50;
  double learning_rate = 1e-3;
  LossConfig loss;
  std::uint64_t seed = 0;
  std::optional<std::string> checkpoint_path;
  // Off by default so that logs are byte-identical across runs.
  bool record_timing = false;

  void validate() const {
    if (max_epochs < 0) throw InputError("max_epochs must be nonnegative");
    if (patience < 1) throw InputError("patience must be positive");
    if (max_epochs > 0 && patience > max_epochs) throw InputError("patience must not exceed max_epochs");
    if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
    loss.validate();
  }
};

// One training step's worth of pipeline evaluation.
struct PipelineStep {
  double loss = 0.0;
  Gradients grads;
  NegativeMask mask;
};

// Per-relation propagation, fusion, projection, similarity scoring, negative
// selection and the contrastive loss. The mask is a discrete function of the
// parameters and carries no gradient.
inline double pipeline_loss(const ModelParameters& params, const Matrix& x, const MultiRelationalTextGraph& g,
                            const LossConfig& cfg) {
  const auto reps = relation_stacks(params, x, g);
  const auto fused = cgan_forward(reps, params.cgan);
  const auto mask = nhs_select_negatives(g, similarity_matrix(fused.fused), cfg);
  RelationMatrices views;
  for (std::size_t r = 0; r < kNumRelations; ++r) views[r] = project(reps[r], params.projection);
  return nhs_loss(views, mask, cfg);
}

inline PipelineStep pipeline_loss_and_gradients(const ModelParameters& params, const Matrix& x,
                                                const MultiRelationalTextGraph& g, const LossConfig& cfg) {
  const ModelForward f = forward_model(params, x, g);
  PipelineStep step;
  step.mask = nhs_select_negatives(g, similarity_matrix(f.cgan.fused), cfg);
  auto lg = nhs_loss_backward(f.projected, step.mask, cfg);
  step.loss = lg.loss;
  step.grads = backward_model(params, f, g, lg.d_views);
  return step;
}

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double mean_negatives_per_anchor = 0.0;
  std::size_t structure_sifted = 0;
  std::size_t attribute_sifted = 0;
  double wall_time_ms = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  ModelParameters params;
  std::vector<EpochRecord> log;
};

inline TrainResult pretrain(const Corpus& corpus, const MultiRelationalTextGraph& graph, const TrainConfig& cfg,
                            const Architecture& arch) {
  cfg.validate();
  if (graph.n != corpus.size()) throw InputError("graph was not built from this corpus");
  Architecture resolved = arch;
  if (resolved.input_dim <= 0) resolved.input_dim = static_cast<int>(corpus.dim());
  TrainResult result;
  result.params = init_parameters(resolved, cfg.seed);
  const Matrix x = feature_matrix(corpus);
  auto state = OptimizerState::for_parameters(result.params, cfg.learning_rate);

  using Clock = std::chrono::steady_clock;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto start = Clock::now();
    PipelineStep step;
    try {
      step = pipeline_loss_and_gradients(result.params, x, graph, cfg.loss);
    } catch (const InputError& e) {
      throw DivergenceError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(step.loss)) throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
    try {
      adam_step(result.params, step.grads, state);
    } catch (const DivergenceError& e) {
      throw DivergenceError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = step.loss;
    rec.mean_negatives_per_anchor = step.mask.mean_negatives_per_anchor();
    rec.structure_sifted = step.mask.structure_sifted;
    rec.attribute_sifted = step.mask.attribute_sifted;
    if (cfg.record_timing) {
      rec.wall_time_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    }
    result.log.push_back(rec);
    if (step.loss < best) {
      best = step.loss;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  if (cfg.checkpoint_path) save_checkpoint(*cfg.checkpoint_path, result.params, cfg.seed);
  return result;
}

struct Encoding {
  RelationMatrices per_relation;
  Matrix fused;
  Matrix attention;
};

// Inference pass: per-relation propagation and fusion only.
inline Encoding encode(const Corpus& corpus, const MultiRelationalTextGraph& graph, const ModelParameters& params) {
  const Matrix x = feature_matrix(corpus);
  Encoding e;
  e.per_relation = relation_stacks(params, x, graph);
  auto out = cgan_forward(e.per_relation, params.cgan);
  e.fused = std::move(out.fused);
  e.attention = std::move(out.attention);
  return e;
}

inline void write_training_log(std::ostream& out, const std::vector<EpochRecord>& log) {
  out << "epoch,loss,mean_negatives_per_anchor,structure_sifted,attribute_sifted,wall_time_ms\n";
  std::ostringstream line;
  line << std::setprecision(17);
  for (const auto& r : log) {
    line.str("");
    line << r.epoch << ',' << r.loss << ',' << r.mean_negatives_per_anchor << ',' << r.structure_sifted << ','
         << r.attribute_sifted << ',' << r.wall_time_ms << '\n';
    out << line.str();
  }
}

inline void save_training_log(const std::string& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write training log '" + path + "'");
  write_training_log(out, log);
}

}  // namespace connhs
