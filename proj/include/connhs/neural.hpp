#pragma once

// Learnable forward computation with hand-derived reverse-mode gradients:
//   relation-aware graph convolution (RW-GCN) per semantic subgraph,
//   cross-graph attention fusion (CGAN),
//   projection head feeding the contrastive loss.
// Everything runs in double precision and single-threaded, so results are
// reproducible bit for bit.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "connhs/corpus.hpp"
#include "connhs/error.hpp"
#include "connhs/graph.hpp"
#include "connhs/random.hpp"

namespace connhs {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RelationMatrices = std::array<Matrix, kNumRelations>;

struct LinearMap {
  Matrix weight;  // out_dim x in_dim
  Vector bias;    // out_dim

  LinearMap() = default;
  LinearMap(Eigen::Index in_dim, Eigen::Index out_dim)
      : weight(Matrix::Zero(out_dim, in_dim)), bias(Vector::Zero(out_dim)) {}

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }

  // Applies the map to every row of x.
  Matrix apply(const Matrix& x) const {
    if (x.cols() != in_dim()) {
      throw InputError("linear map expects " + std::to_string(in_dim()) + " input columns, got " +
                       std::to_string(x.cols()));
    }
    Matrix y = x * weight.transpose();
    y.rowwise() += bias.transpose();
    return y;
  }

  bool operator==(const LinearMap& o) const { return weight == o.weight && bias == o.bias; }
};

enum class GateKind { scalar, elementwise };

// How the gated edge vectors of a node are combined.
enum class Aggregation { sum, mean };

enum class Activation { identity, relu };

struct RwGcnLayerParams {
  LinearMap gate;       // edge vector -> 1 (scalar) or d_in (elementwise), then sigmoid
  LinearMap transform;  // [x_i, agg_i] (2 d_in) -> d_out

  bool operator==(const RwGcnLayerParams&) const = default;
};

struct CganParams {
  LinearMap p_net;  // d -> a
  Vector k_vec;     // a

  bool operator==(const CganParams& o) const { return p_net == o.p_net && k_vec == o.k_vec; }
};

struct ProjectionParams {
  LinearMap layer1;  // d -> d_proj, followed by ReLU
  LinearMap layer2;  // d_proj -> d_proj

  bool operator==(const ProjectionParams&) const = default;
};

struct Architecture {
  int input_dim = 0;
  int hidden_dim = 0;
  int layers = 2;
  int proj_dim = 0;
  int attention_dim = 0;
  GateKind gate = GateKind::scalar;
  Aggregation aggregation = Aggregation::mean;

  // Fills unset sizes: hidden = input, projection = 2 x hidden, attention = ceil(hidden / 2).
  static Architecture defaults_for(int input_dim) {
    Architecture a;
    a.input_dim = input_dim;
    return a.resolved();
  }

  Architecture resolved() const {
    Architecture a = *this;
    if (a.hidden_dim <= 0) a.hidden_dim = a.input_dim;
    if (a.proj_dim <= 0) a.proj_dim = 2 * a.rep_dim();
    if (a.attention_dim <= 0) a.attention_dim = (a.rep_dim() + 1) / 2;
    return a;
  }

  // Width of per-relation and fused representations.
  int rep_dim() const { return layers == 0 ? input_dim : hidden_dim; }

  void validate() const {
    if (input_dim < 1) throw InputError("architecture: input_dim must be positive");
    if (layers < 0) throw InputError("architecture: layers must be nonnegative");
    if (layers > 0 && hidden_dim < 1) throw InputError("architecture: hidden_dim must be positive");
    if (proj_dim < 1) throw InputError("architecture: proj_dim must be positive");
    if (attention_dim < 1) throw InputError("architecture: attention_dim must be positive");
  }

  bool operator==(const Architecture&) const = default;
};

struct ModelParameters {
  Architecture arch;
  std::array<std::vector<RwGcnLayerParams>, kNumRelations> per_relation;
  CganParams cgan;
  ProjectionParams projection;

  bool operator==(const ModelParameters&) const = default;
};

// Same layout as ModelParameters, one entry per learnable scalar.
using Gradients = ModelParameters;

// Visits every learnable tensor in a fixed order as a flat row-major span.
// f(name, span, rows, cols).
template <typename Params, typename F>
void for_each_tensor(Params& p, F&& f) {
  auto visit_matrix = [&](const std::string& name, auto& m) {
    f(name, std::span(m.data(), static_cast<std::size_t>(m.size())), m.rows(), m.cols());
  };
  auto visit_vector = [&](const std::string& name, auto& v) {
    f(name, std::span(v.data(), static_cast<std::size_t>(v.size())), v.size(), Eigen::Index{-1});
  };
  auto visit_linear = [&](const std::string& name, auto& lin) {
    visit_matrix(name + ".weight", lin.weight);
    visit_vector(name + ".bias", lin.bias);
  };
  for (auto r : kRelations) {
    auto& layers = p.per_relation[index(r)];
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = std::string(to_string(r)) + ".layer" + std::to_string(l);
      visit_linear(prefix + ".gate", layers[l].gate);
      visit_linear(prefix + ".transform", layers[l].transform);
    }
  }
  visit_linear("cgan.p_net", p.cgan.p_net);
  visit_vector("cgan.k_vec", p.cgan.k_vec);
  visit_linear("projection.layer1", p.projection.layer1);
  visit_linear("projection.layer2", p.projection.layer2);
}

inline std::size_t parameter_count(const ModelParameters& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, std::span<const double> s, auto, auto) { n += s.size(); });
  return n;
}

inline ModelParameters zeros_like(const ModelParameters& p) {
  ModelParameters z = p;
  for_each_tensor(z, [](const std::string&, std::span<double> s, auto, auto) {
    std::fill(s.begin(), s.end(), 0.0);
  });
  return z;
}

// Zero-valued parameters with the shapes implied by arch.
inline ModelParameters make_parameters(const Architecture& arch_in) {
  const Architecture arch = arch_in.resolved();
  arch.validate();
  ModelParameters p;
  p.arch = arch;
  for (auto r : kRelations) {
    auto& layers = p.per_relation[index(r)];
    for (int l = 0; l < arch.layers; ++l) {
      const int d_in = l == 0 ? arch.input_dim : arch.hidden_dim;
      RwGcnLayerParams layer;
      layer.gate = LinearMap(d_in, arch.gate == GateKind::scalar ? 1 : d_in);
      layer.transform = LinearMap(2 * d_in, arch.hidden_dim);
      layers.push_back(std::move(layer));
    }
  }
  const int d = arch.rep_dim();
  p.cgan.p_net = LinearMap(d, arch.attention_dim);
  p.cgan.k_vec = Vector::Zero(arch.attention_dim);
  p.projection.layer1 = LinearMap(d, arch.proj_dim);
  p.projection.layer2 = LinearMap(arch.proj_dim, arch.proj_dim);
  return p;
}

// Glorot-uniform weights, zero biases. The attention vector k is treated as an
// a x 1 weight.
inline ModelParameters init_parameters(const Architecture& arch, std::uint64_t seed) {
  ModelParameters p = make_parameters(arch);
  Rng rng(seed);
  auto glorot = [&](std::span<double> w, double fan_in, double fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& x : w) x = rng.uniform(-bound, bound);
  };
  auto init_linear = [&](LinearMap& lin) {
    glorot(std::span(lin.weight.data(), static_cast<std::size_t>(lin.weight.size())),
           static_cast<double>(lin.in_dim()), static_cast<double>(lin.out_dim()));
  };
  for (auto& layers : p.per_relation) {
    for (auto& layer : layers) {
      init_linear(layer.gate);
      init_linear(layer.transform);
    }
  }
  init_linear(p.cgan.p_net);
  glorot(std::span(p.cgan.k_vec.data(), static_cast<std::size_t>(p.cgan.k_vec.size())),
         static_cast<double>(p.cgan.k_vec.size()), 1.0);
  init_linear(p.projection.layer1);
  init_linear(p.projection.layer2);
  return p;
}

// Node feature matrix (content vectors, one row per document).
inline Matrix feature_matrix(const Corpus& corpus) {
  Matrix x(static_cast<Eigen::Index>(corpus.size()), static_cast<Eigen::Index>(corpus.dim()));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& v = corpus.docs()[i].content_vec;
    for (std::size_t k = 0; k < v.size(); ++k) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[k];
  }
  return x;
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// RW-GCN

struct RwGcnCache {
  Matrix input;   // n x d_in
  Matrix gates;   // directed edges (in neighbor-list order) x gate width
  Matrix concat;  // n x 2 d_in, [x_i, agg_i]
  Matrix pre;     // n x d_out, before the activation
  Activation activation = Activation::identity;
  Aggregation aggregation = Aggregation::sum;
};

inline RwGcnCache rwgcn_forward_cached(const Matrix& x, const RelationAdjacency& adj,
                                       const RwGcnLayerParams& layer, Activation activation,
                                       Aggregation aggregation = Aggregation::sum) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (static_cast<std::size_t>(n) != adj.size()) throw InputError("rwgcn: adjacency size differs from feature rows");
  if (layer.gate.in_dim() != d || layer.transform.in_dim() != 2 * d) {
    throw InputError("rwgcn: layer expects input width " + std::to_string(layer.gate.in_dim()) + ", got " +
                     std::to_string(d));
  }
  const Eigen::Index gate_width = layer.gate.out_dim();
  if (gate_width != 1 && gate_width != d) throw InputError("rwgcn: gate width must be 1 or d_in");

  RwGcnCache c;
  c.input = x;
  c.activation = activation;
  c.aggregation = aggregation;
  c.gates.resize(static_cast<Eigen::Index>(2 * adj.edge_count()), gate_width);
  c.concat.resize(n, 2 * d);
  c.concat.leftCols(d) = x;
  Eigen::Index e = 0;
  Vector edge(d), agg(d), s(gate_width);
  for (Eigen::Index i = 0; i < n; ++i) {
    agg.setZero();
    for (auto j : adj.neighbors(static_cast<std::size_t>(i))) {
      edge = (x.row(j) - x.row(i)).transpose();
      s = layer.gate.weight * edge + layer.gate.bias;
      for (Eigen::Index k = 0; k < gate_width; ++k) s[k] = sigmoid(s[k]);
      if (gate_width == 1) {
        agg += s[0] * edge;
      } else {
        agg += s.cwiseProduct(edge);
      }
      c.gates.row(e++) = s.transpose();
    }
    const auto degree = adj.neighbors(static_cast<std::size_t>(i)).size();
    if (aggregation == Aggregation::mean && degree > 0) agg /= static_cast<double>(degree);
    c.concat.row(i).tail(d) = agg.transpose();
  }
  c.pre = layer.transform.apply(c.concat);
  return c;
}

inline Matrix activate(const Matrix& pre, Activation a) {
  return a == Activation::relu ? Matrix(pre.cwiseMax(0.0)) : pre;
}

// One relation-aware convolution: for each node i,
//   agg_i = sum_{j in N(i)} sigmoid(gate(x_j - x_i)) * (x_j - x_i)
//   out_i = act(transform([x_i, agg_i]))
// Mean aggregation divides agg_i by |N(i)|.
inline Matrix rwgcn_forward(const Matrix& x, const RelationAdjacency& adj, const RwGcnLayerParams& layer,
                            Activation activation = Activation::identity,
                            Aggregation aggregation = Aggregation::sum) {
  return activate(rwgcn_forward_cached(x, adj, layer, activation, aggregation).pre, activation);
}

// Accumulates parameter gradients into grad and returns d(loss)/d(input).
inline Matrix rwgcn_backward(const RwGcnCache& c, const RelationAdjacency& adj, const RwGcnLayerParams& layer,
                             const Matrix& d_out, RwGcnLayerParams& grad) {
  const Eigen::Index n = c.input.rows(), d = c.input.cols();
  const Eigen::Index gate_width = layer.gate.out_dim();
  Matrix d_pre = d_out;
  if (c.activation == Activation::relu) d_pre = d_pre.cwiseProduct((c.pre.array() > 0.0).cast<double>().matrix());

  grad.transform.weight.noalias() += d_pre.transpose() * c.concat;
  grad.transform.bias += d_pre.colwise().sum().transpose();
  const Matrix d_concat = d_pre * layer.transform.weight;
  Matrix d_x = d_concat.leftCols(d);

  Eigen::Index e = 0;
  Vector edge(d), d_agg(d), d_edge(d), d_gate(gate_width);
  for (Eigen::Index i = 0; i < n; ++i) {
    d_agg = d_concat.row(i).tail(d).transpose();
    const auto degree = adj.neighbors(static_cast<std::size_t>(i)).size();
    if (c.aggregation == Aggregation::mean && degree > 0) d_agg /= static_cast<double>(degree);
    for (auto j : adj.neighbors(static_cast<std::size_t>(i))) {
      edge = (c.input.row(j) - c.input.row(i)).transpose();
      const auto s = c.gates.row(e++);
      if (gate_width == 1) {
        d_edge = s[0] * d_agg;
        d_gate[0] = d_agg.dot(edge) * s[0] * (1.0 - s[0]);
      } else {
        d_edge = s.transpose().cwiseProduct(d_agg);
        d_gate = d_agg.cwiseProduct(edge).cwiseProduct(
            (s.transpose().array() * (1.0 - s.transpose().array())).matrix());
      }
      grad.gate.weight.noalias() += d_gate * edge.transpose();
      grad.gate.bias += d_gate;
      d_edge.noalias() += layer.gate.weight.transpose() * d_gate;
      d_x.row(j) += d_edge.transpose();
      d_x.row(i) -= d_edge.transpose();
    }
  }
  return d_x;
}

// Hidden layers use ReLU, the last layer is linear. An empty stack is the identity.
inline Matrix rwgcn_stack(const Matrix& x, const RelationAdjacency& adj,
                          const std::vector<RwGcnLayerParams>& layers,
                          Aggregation aggregation = Aggregation::sum) {
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto act = l + 1 == layers.size() ? Activation::identity : Activation::relu;
    h = rwgcn_forward(h, adj, layers[l], act, aggregation);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Cross-graph attention

struct CganOutput {
  Matrix fused;      // n x d
  Matrix attention;  // n x 3, rows sum to one
  RelationMatrices hidden;  // tanh(p_net(x_{i,r})), kept for backward
};

inline CganOutput cgan_forward(const RelationMatrices& reps, const CganParams& params) {
  const Eigen::Index n = reps[0].rows(), d = reps[0].cols();
  for (const auto& m : reps) {
    if (m.rows() != n || m.cols() != d) throw InputError("cgan: per-relation matrices differ in shape");
  }
  if (params.p_net.in_dim() != d || params.k_vec.size() != params.p_net.out_dim()) {
    throw InputError("cgan: parameter shapes do not match representation width");
  }
  CganOutput out;
  Matrix logits(n, static_cast<Eigen::Index>(kNumRelations));
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    out.hidden[r] = params.p_net.apply(reps[r]).array().tanh().matrix();
    logits.col(static_cast<Eigen::Index>(r)) = out.hidden[r] * params.k_vec;
  }
  out.attention.resize(n, static_cast<Eigen::Index>(kNumRelations));
  out.fused = Matrix::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = logits.row(i).maxCoeff();
    const auto ex = (logits.row(i).array() - m).exp();
    out.attention.row(i) = ex / ex.sum();
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      out.fused.row(i) += out.attention(i, static_cast<Eigen::Index>(r)) * reps[r].row(i);
    }
  }
  return out;
}

// Accumulates into grad; returns gradients for the three inputs.
inline RelationMatrices cgan_backward(const RelationMatrices& reps, const CganParams& params,
                                      const CganOutput& out, const Matrix& d_fused, CganParams& grad) {
  const Eigen::Index n = reps[0].rows();
  constexpr auto R = static_cast<Eigen::Index>(kNumRelations);
  RelationMatrices d_reps;
  Matrix d_alpha(n, R);
  for (Eigen::Index r = 0; r < R; ++r) {
    d_reps[r] = out.attention.col(r).asDiagonal() * d_fused;
    d_alpha.col(r) = reps[r].cwiseProduct(d_fused).rowwise().sum();
  }
  // Softmax Jacobian per row.
  const Vector weighted = out.attention.cwiseProduct(d_alpha).rowwise().sum();
  Matrix d_logit = out.attention.cwiseProduct(d_alpha - weighted.replicate(1, R));
  for (Eigen::Index r = 0; r < R; ++r) {
    const Matrix& t = out.hidden[r];
    grad.k_vec.noalias() += t.transpose() * d_logit.col(r);
    Matrix d_pre = d_logit.col(r) * params.k_vec.transpose();
    d_pre = d_pre.cwiseProduct((1.0 - t.array().square()).matrix());
    grad.p_net.weight.noalias() += d_pre.transpose() * reps[r];
    grad.p_net.bias += d_pre.colwise().sum().transpose();
    d_reps[r].noalias() += d_pre * params.p_net.weight;
  }
  return d_reps;
}

// ---------------------------------------------------------------------------
// Projection head

struct ProjectionCache {
  Matrix input;
  Matrix hidden_pre;
  Matrix hidden;
};

inline Matrix project(const Matrix& h, const ProjectionParams& params, ProjectionCache* cache = nullptr) {
  Matrix pre = params.layer1.apply(h);
  Matrix hidden = pre.cwiseMax(0.0);
  Matrix u = params.layer2.apply(hidden);
  if (cache) *cache = {h, std::move(pre), std::move(hidden)};
  return u;
}

inline Matrix project_backward(const ProjectionCache& c, const ProjectionParams& params, const Matrix& d_u,
                               ProjectionParams& grad) {
  grad.layer2.weight.noalias() += d_u.transpose() * c.hidden;
  grad.layer2.bias += d_u.colwise().sum().transpose();
  Matrix d_hidden = d_u * params.layer2.weight;
  d_hidden = d_hidden.cwiseProduct((c.hidden_pre.array() > 0.0).cast<double>().matrix());
  grad.layer1.weight.noalias() += d_hidden.transpose() * c.input;
  grad.layer1.bias += d_hidden.colwise().sum().transpose();
  return d_hidden * params.layer1.weight;
}

// ---------------------------------------------------------------------------
// Whole-model forward and backward

struct ModelForward {
  std::array<std::vector<RwGcnCache>, kNumRelations> layer_caches;
  RelationMatrices reps;  // H_t, H_k, H_e
  CganOutput cgan;        // fused H'
  std::array<ProjectionCache, kNumRelations> projection_caches;
  RelationMatrices projected;  // U_t, U_k, U_e
};

inline void check_model_inputs(const ModelParameters& params, const Matrix& x, const MultiRelationalTextGraph& g) {
  if (static_cast<std::size_t>(x.rows()) != g.n) throw InputError("feature rows differ from graph size");
  if (x.cols() != params.arch.input_dim) {
    throw InputError("feature width " + std::to_string(x.cols()) + " differs from model input_dim " +
                     std::to_string(params.arch.input_dim));
  }
}

inline RelationMatrices relation_stacks(const ModelParameters& params, const Matrix& x,
                                        const MultiRelationalTextGraph& g,
                                        std::array<std::vector<RwGcnCache>, kNumRelations>* caches = nullptr) {
  check_model_inputs(params, x, g);
  RelationMatrices reps;
  for (auto r : kRelations) {
    const auto ri = index(r);
    const auto& layers = params.per_relation[ri];
    Matrix h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto act = l + 1 == layers.size() ? Activation::identity : Activation::relu;
      auto c = rwgcn_forward_cached(h, g.relation(r), layers[l], act, params.arch.aggregation);
      h = activate(c.pre, act);
      if (caches) (*caches)[ri].push_back(std::move(c));
    }
    reps[ri] = std::move(h);
  }
  return reps;
}

inline ModelForward forward_model(const ModelParameters& params, const Matrix& x, const MultiRelationalTextGraph& g) {
  ModelForward f;
  f.reps = relation_stacks(params, x, g, &f.layer_caches);
  f.cgan = cgan_forward(f.reps, params.cgan);
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    f.projected[r] = project(f.reps[r], params.projection, &f.projection_caches[r]);
  }
  return f;
}

// Backpropagates gradients on the projected views (and optionally on the fused
// representation) into a fresh Gradients.
inline Gradients backward_model(const ModelParameters& params, const ModelForward& f,
                                const MultiRelationalTextGraph& g, const RelationMatrices& d_projected,
                                const Matrix* d_fused = nullptr) {
  Gradients grad = zeros_like(params);
  RelationMatrices d_reps;
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    d_reps[r] = project_backward(f.projection_caches[r], params.projection, d_projected[r], grad.projection);
  }
  if (d_fused) {
    const auto d_from_cgan = cgan_backward(f.reps, params.cgan, f.cgan, *d_fused, grad.cgan);
    for (std::size_t r = 0; r < kNumRelations; ++r) d_reps[r] += d_from_cgan[r];
  }
  for (auto r : kRelations) {
    const auto ri = index(r);
    const auto& layers = params.per_relation[ri];
    Matrix d = d_reps[ri];
    for (std::size_t l = layers.size(); l-- > 0;) {
      d = rwgcn_backward(f.layer_caches[ri][l], g.relation(r), layers[l], d, grad.per_relation[ri][l]);
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

// Central differences (f(p + eps) - f(p - eps)) / (2 eps) per scalar parameter.
inline Gradients finite_difference_gradient(const std::function<double(const ModelParameters&)>& loss_fn,
                                            const ModelParameters& params, double epsilon = 1e-5) {
  ModelParameters probe = params;
  Gradients grad = zeros_like(params);
  std::vector<std::span<double>> probe_spans, grad_spans;
  for_each_tensor(probe, [&](const std::string&, std::span<double> s, auto, auto) { probe_spans.push_back(s); });
  for_each_tensor(grad, [&](const std::string&, std::span<double> s, auto, auto) { grad_spans.push_back(s); });
  for (std::size_t t = 0; t < probe_spans.size(); ++t) {
    for (std::size_t k = 0; k < probe_spans[t].size(); ++k) {
      double& x = probe_spans[t][k];
      const double saved = x;
      x = saved + epsilon;
      const double plus = loss_fn(probe);
      x = saved - epsilon;
      const double minus = loss_fn(probe);
      x = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw DivergenceError("finite differences: non-finite loss");
      }
      grad_spans[t][k] = (plus - minus) / (2.0 * epsilon);
    }
  }
  return grad;
}

// Largest |a - b| / max(|a|, |b|, floor) over all entries. The floor keeps
// entries that are zero up to rounding from dominating the ratio.
inline double max_relative_error(const Gradients& a, const Gradients& b, double floor = 1e-6) {
  std::vector<std::span<const double>> sa, sb;
  for_each_tensor(a, [&](const std::string&, std::span<const double> s, auto, auto) { sa.push_back(s); });
  for_each_tensor(b, [&](const std::string&, std::span<const double> s, auto, auto) { sb.push_back(s); });
  if (sa.size() != sb.size()) throw InputError("gradient layouts differ");
  double worst = 0.0;
  for (std::size_t t = 0; t < sa.size(); ++t) {
    if (sa[t].size() != sb[t].size()) throw InputError("gradient layouts differ");
    for (std::size_t k = 0; k < sa[t].size(); ++k) {
      const double x = sa[t][k], y = sb[t][k];
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints: architecture, seed and every tensor in row-major order.

inline constexpr const char* kCheckpointSchema = "connhs-checkpoint/1";

inline const char* to_string(GateKind g) { return g == GateKind::scalar ? "scalar" : "elementwise"; }

inline GateKind parse_gate_kind(const std::string& s) {
  if (s == "scalar") return GateKind::scalar;
  if (s == "elementwise") return GateKind::elementwise;
  throw InputError("unknown gate kind '" + s + "'");
}

inline const char* to_string(Aggregation a) { return a == Aggregation::sum ? "sum" : "mean"; }

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "sum") return Aggregation::sum;
  if (s == "mean") return Aggregation::mean;
  throw InputError("unknown aggregation '" + s + "'");
}

inline nlohmann::ordered_json architecture_to_json(const Architecture& a) {
  nlohmann::ordered_json j;
  j["input_dim"] = a.input_dim;
  j["hidden_dim"] = a.hidden_dim;
  j["layers"] = a.layers;
  j["proj_dim"] = a.proj_dim;
  j["attention_dim"] = a.attention_dim;
  j["gate"] = to_string(a.gate);
  j["aggregation"] = to_string(a.aggregation);
  return j;
}

inline Architecture architecture_from_json(const nlohmann::json& j, Architecture a = {}) {
  a.input_dim = j.value("input_dim", a.input_dim);
  a.hidden_dim = j.value("hidden_dim", a.hidden_dim);
  a.layers = j.value("layers", a.layers);
  a.proj_dim = j.value("proj_dim", a.proj_dim);
  a.attention_dim = j.value("attention_dim", a.attention_dim);
  if (j.contains("gate")) a.gate = parse_gate_kind(j.at("gate").get<std::string>());
  if (j.contains("aggregation")) a.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  return a;
}

struct Checkpoint {
  ModelParameters params;
  std::uint64_t seed = 0;
};

inline void write_checkpoint(std::ostream& out, const ModelParameters& params, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["schema"] = kCheckpointSchema;
  j["seed"] = seed;
  j["arch"] = architecture_to_json(params.arch);
  auto tensors = nlohmann::ordered_json::array();
  for_each_tensor(params, [&](const std::string& name, std::span<const double> s, Eigen::Index rows,
                              Eigen::Index cols) {
    nlohmann::ordered_json t;
    t["name"] = name;
    t["shape"] = cols < 0 ? nlohmann::ordered_json::array({rows}) : nlohmann::ordered_json::array({rows, cols});
    t["data"] = std::vector<double>(s.begin(), s.end());
    tensors.push_back(std::move(t));
  });
  j["tensors"] = std::move(tensors);
  out << j.dump() << '\n';
}

inline Checkpoint read_checkpoint(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
  if (j.value("schema", "") != kCheckpointSchema) throw InputError("checkpoint: unexpected schema");
  Checkpoint c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.params = make_parameters(architecture_from_json(j.at("arch")));
    const auto& tensors = j.at("tensors");
    std::size_t t = 0;
    for_each_tensor(c.params, [&](const std::string& name, std::span<double> s, Eigen::Index rows,
                                  Eigen::Index cols) {
      if (t >= tensors.size()) throw InputError("checkpoint: missing tensor '" + name + "'");
      const auto& tj = tensors[t++];
      if (tj.at("name").get<std::string>() != name) throw InputError("checkpoint: expected tensor '" + name + "'");
      const auto shape = tj.at("shape").get<std::vector<Eigen::Index>>();
      const std::vector<Eigen::Index> expect =
          cols < 0 ? std::vector<Eigen::Index>{rows} : std::vector<Eigen::Index>{rows, cols};
      if (shape != expect) throw InputError("checkpoint: shape mismatch for '" + name + "'");
      const auto data = tj.at("data").get<std::vector<double>>();
      if (data.size() != s.size()) throw InputError("checkpoint: size mismatch for '" + name + "'");
      std::copy(data.begin(), data.end(), s.begin());
    });
    if (t != tensors.size()) throw InputError("checkpoint: unexpected extra tensors");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const ModelParameters& params, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, params, seed);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace connhs
