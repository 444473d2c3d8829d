#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. Plain loops over std::vector; nothing here calls library math.

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "connhs/connhs.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;
using PairSet = std::set<std::pair<std::size_t, std::size_t>>;

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline Rows rows_of(const connhs::Matrix& m) {
  Rows out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

inline std::size_t count_pairs(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                               double rho) {
  std::size_t c = 0;
  for (const auto& x : a) {
    for (const auto& y : b) c += cosine(x, y) > rho ? 1 : 0;
  }
  return c;
}

// Edge sets (i < j) for title, keyword and event relations.
inline std::array<PairSet, 3> graph(const connhs::Corpus& corpus, const connhs::ThresholdConfig& t) {
  std::array<PairSet, 3> out;
  const auto& d = corpus.docs();
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      if (cosine(d[i].title_vec, d[j].title_vec) > t.rho_t) out[0].insert({i, j});
      if (count_pairs(d[i].keyword_vecs, d[j].keyword_vecs, t.rho_k) > static_cast<std::size_t>(t.gamma_k)) {
        out[1].insert({i, j});
      }
      if (count_pairs(d[i].event_vecs, d[j].event_vecs, t.rho_e) > static_cast<std::size_t>(t.gamma_e)) {
        out[2].insert({i, j});
      }
    }
  }
  return out;
}

inline PairSet edges_of(const connhs::RelationAdjacency& adj) {
  PairSet out;
  for (std::size_t i = 0; i < adj.size(); ++i) {
    for (auto j : adj.neighbors(i)) {
      if (i < j) out.insert({i, j});
    }
  }
  return out;
}

// Negative set of anchor i: every j other than i, minus first-order neighbors
// in any relation (structure rule) and nodes scoring above the threshold
// (attribute rule), each rule enabled per mode.
inline std::vector<std::vector<std::size_t>> negatives(std::size_t n, const std::array<PairSet, 3>& edges,
                                                       const Rows& score, double threshold, bool structure,
                                                       bool attribute) {
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      bool neighbor = false;
      for (const auto& e : edges) neighbor = neighbor || e.count({std::min(i, j), std::max(i, j)}) > 0;
      if (structure && neighbor) continue;
      if (attribute && score[i][j] > threshold) continue;
      out[i].push_back(j);
    }
  }
  return out;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// y = W v + b with W stored out x in.
inline std::vector<double> affine(const connhs::LinearMap& m, const std::vector<double>& v) {
  std::vector<double> y(static_cast<std::size_t>(m.weight.rows()));
  for (Eigen::Index o = 0; o < m.weight.rows(); ++o) {
    double s = m.bias[o];
    for (Eigen::Index k = 0; k < m.weight.cols(); ++k) s += m.weight(o, k) * v[static_cast<std::size_t>(k)];
    y[static_cast<std::size_t>(o)] = s;
  }
  return y;
}

// One relation-wise layer from its defining formula:
//   s_ij = sigmoid(W_g (x_j - x_i) + b_g)
//   a_i  = sum_j s_ij * (x_j - x_i)   (divided by deg(i) for mean)
//   out  = act(W [x_i, a_i] + b)
inline Rows rwgcn(const Rows& x, const PairSet& edges, const connhs::RwGcnLayerParams& p, bool relu, bool mean) {
  const std::size_t n = x.size(), d = n ? x[0].size() : 0;
  std::vector<std::vector<std::size_t>> nb(n);
  for (auto [i, j] : edges) {
    nb[i].push_back(j);
    nb[j].push_back(i);
  }
  Rows out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> a(d, 0.0);
    for (auto j : nb[i]) {
      std::vector<double> e(d);
      for (std::size_t k = 0; k < d; ++k) e[k] = x[j][k] - x[i][k];
      auto s = affine(p.gate, e);
      for (std::size_t k = 0; k < d; ++k) a[k] += sigmoid(s.size() == 1 ? s[0] : s[k]) * e[k];
    }
    if (mean && !nb[i].empty()) {
      for (auto& v : a) v /= static_cast<double>(nb[i].size());
    }
    std::vector<double> cat(x[i]);
    cat.insert(cat.end(), a.begin(), a.end());
    out[i] = affine(p.transform, cat);
    if (relu) {
      for (auto& v : out[i]) v = std::max(0.0, v);
    }
  }
  return out;
}

inline Rows rwgcn_stack(Rows x, const PairSet& edges, const std::vector<connhs::RwGcnLayerParams>& layers, bool mean) {
  for (std::size_t l = 0; l < layers.size(); ++l) x = rwgcn(x, edges, layers[l], l + 1 < layers.size(), mean);
  return x;
}

struct Fusion {
  Rows fused;
  Rows alpha;
};

// alpha_ir = softmax_r(k . tanh(P h_ir + b)), fused_i = sum_r alpha_ir h_ir.
inline Fusion cgan(const std::array<Rows, 3>& h, const connhs::CganParams& p) {
  const std::size_t n = h[0].size(), d = n ? h[0][0].size() : 0;
  Fusion f{Rows(n, std::vector<double>(d, 0.0)), Rows(n, std::vector<double>(3))};
  for (std::size_t i = 0; i < n; ++i) {
    double logits[3], z = 0;
    for (int r = 0; r < 3; ++r) {
      auto t = affine(p.p_net, h[r][i]);
      logits[r] = 0;
      for (std::size_t k = 0; k < t.size(); ++k) logits[r] += p.k_vec[static_cast<Eigen::Index>(k)] * std::tanh(t[k]);
    }
    for (double l : logits) z += std::exp(l);
    for (int r = 0; r < 3; ++r) {
      f.alpha[i][r] = std::exp(logits[r]) / z;
      for (std::size_t k = 0; k < d; ++k) f.fused[i][k] += f.alpha[i][r] * h[r][i][k];
    }
  }
  return f;
}

inline Rows projection(const Rows& h, const connhs::ProjectionParams& p) {
  Rows out;
  for (const auto& row : h) {
    auto a = affine(p.layer1, row);
    for (auto& v : a) v = std::max(0.0, v);
    out.push_back(affine(p.layer2, a));
  }
  return out;
}

// Term-by-term contrastive loss: for each anchor (i, r') the positives are
// node i in the other two views, intra negatives D_i^{r'} in view r', inter
// negatives D_i^{r} in each other view r.
inline double loss(const std::array<Rows, 3>& u, const std::array<std::vector<std::vector<std::size_t>>, 3>& d,
                   double tau) {
  const std::size_t n = u[0].size();
  double total = 0;
  for (int rp = 0; rp < 3; ++rp) {
    for (std::size_t i = 0; i < n; ++i) {
      double pos = 0, intra = 0, inter = 0;
      for (int r = 0; r < 3; ++r) {
        if (r == rp) continue;
        pos += std::exp(cosine(u[rp][i], u[r][i]) / tau);
        for (auto j : d[r][i]) inter += std::exp(cosine(u[rp][i], u[r][j]) / tau);
      }
      for (auto j : d[rp][i]) intra += std::exp(cosine(u[rp][i], u[rp][j]) / tau);
      total += -std::log(pos / (pos + intra + inter));
    }
  }
  return total / (3.0 * static_cast<double>(n));
}

inline std::array<Rows, 3> rows_of(const connhs::RelationMatrices& m) {
  return {rows_of(m[0]), rows_of(m[1]), rows_of(m[2])};
}

inline std::array<std::vector<std::vector<std::size_t>>, 3> sets_of(const connhs::NegativeMask& m) {
  std::array<std::vector<std::vector<std::size_t>>, 3> out;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < m.n(); ++i) {
      const auto& s = m.negatives(connhs::kRelations[r], i);
      out[r].emplace_back(s.begin(), s.end());
    }
  }
  return out;
}

}  // namespace oracle
