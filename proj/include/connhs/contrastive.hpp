#pragma once

// Neighbor-hierarchical-sifting negative selection and the multi-view
// contrastive loss built on it.
//
// For an anchor node i in view r', positives are node i in the two other views.
// Negatives for view r come from D_i^(r). Under full sifting D_i^(r) drops
//   - i itself,
//   - first-order neighbors of i in any relation (structure sift),
//   - nodes whose fused-representation similarity to i exceeds a cutoff
//     (attribute sift, aimed at similar high-order neighbors).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "connhs/error.hpp"
#include "connhs/graph.hpp"
#include "connhs/neural.hpp"

namespace connhs {

enum class LossMode {
  NHS,      // structure and attribute sift
  NHS_gs,   // attribute sift only (graph-structure signal removed)
  NHS_na,   // structure sift only (node-attribute signal removed)
  NT_Xent,  // no sifting
};

inline const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::NHS: return "NHS";
    case LossMode::NHS_gs: return "NHS_gs";
    case LossMode::NHS_na: return "NHS_na";
    case LossMode::NT_Xent: return "NT_Xent";
  }
  return "?";
}

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "NHS") return LossMode::NHS;
  if (s == "NHS_gs" || s == "NHS-gs") return LossMode::NHS_gs;
  if (s == "NHS_na" || s == "NHS-na") return LossMode::NHS_na;
  if (s == "NT_Xent" || s == "NT-Xent") return LossMode::NT_Xent;
  throw InputError("unknown loss mode '" + s + "'");
}

inline bool uses_structure_sift(LossMode m) { return m == LossMode::NHS || m == LossMode::NHS_na; }
inline bool uses_attribute_sift(LossMode m) { return m == LossMode::NHS || m == LossMode::NHS_gs; }

struct LossConfig {
  double tau = 0.5;
  double sift_threshold = 0.8;
  LossMode mode = LossMode::NHS;

  void validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InputError("tau must be positive");
    if (!(sift_threshold >= -1.0 && sift_threshold <= 1.0)) {
      throw InputError("sift_threshold must lie in [-1, 1]");
    }
  }

  bool operator==(const LossConfig&) const = default;
};

// Pairwise cosine similarities of fused node representations.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  explicit SimilarityMatrix(Matrix values) : values_(std::move(values)) {}

  std::size_t n() const { return static_cast<std::size_t>(values_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Matrix& values() const { return values_; }

 private:
  Matrix values_;
};

namespace detail {

// Rows shorter than this are divided by it instead of their length, so a zero row has cosine 0 with everything.
inline constexpr double kNormFloor = 1e-12;

inline Matrix normalize_rows(const Matrix& m, Vector* norms = nullptr) {
  Matrix out(m.rows(), m.cols());
  if (norms) norms->resize(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    const double divisor = std::max(norm, kNormFloor);
    out.row(i) = m.row(i) / divisor;
    if (norms) (*norms)[i] = norm;
  }
  return out;
}

}  // namespace detail

inline SimilarityMatrix similarity_matrix(const Matrix& fused) {
  const Matrix unit = detail::normalize_rows(fused);
  const Eigen::Index n = unit.rows();
  Matrix s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::clamp(unit.row(i).dot(unit.row(j)), -1.0, 1.0);
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return SimilarityMatrix(std::move(s));
}

// Admissible negatives per (view, anchor), as sorted node indices.
class NegativeMask {
 public:
  NegativeMask() = default;
  explicit NegativeMask(std::size_t n) {
    for (auto& v : sets_) v.assign(n, {});
  }

  std::size_t n() const { return sets_[0].size(); }
  std::span<const std::uint32_t> negatives(Relation view, std::size_t anchor) const {
    return sets_[index(view)][anchor];
  }
  std::vector<std::uint32_t>& mutable_negatives(Relation view, std::size_t anchor) {
    return sets_[index(view)][anchor];
  }
  bool contains(Relation view, std::size_t anchor, std::size_t j) const {
    const auto& s = sets_[index(view)][anchor];
    return std::binary_search(s.begin(), s.end(), static_cast<std::uint32_t>(j));
  }

  // Mean |D_i^(r)| over all views and anchors.
  double mean_negatives_per_anchor() const {
    if (n() == 0) return 0.0;
    std::size_t total = 0;
    for (const auto& view : sets_) {
      for (const auto& s : view) total += s.size();
    }
    return static_cast<double>(total) / static_cast<double>(kNumRelations * n());
  }

  bool empty() const {
    for (const auto& view : sets_) {
      for (const auto& s : view) {
        if (!s.empty()) return false;
      }
    }
    return true;
  }

  // (anchor, j) pairs, j != anchor, removed by the structure sift.
  std::size_t structure_sifted = 0;
  // (anchor, j) pairs removed by the attribute sift and not already by structure.
  std::size_t attribute_sifted = 0;

  bool operator==(const NegativeMask&) const = default;

 private:
  std::array<std::vector<std::vector<std::uint32_t>>, kNumRelations> sets_;
};

inline NegativeMask nhs_select_negatives(const MultiRelationalTextGraph& graph, const SimilarityMatrix& score,
                                         const LossConfig& cfg) {
  if (score.n() != graph.n) throw InputError("nhs_select_negatives: score size differs from graph size");
  const std::size_t n = graph.n;
  const bool structure = uses_structure_sift(cfg.mode);
  const bool attribute = uses_attribute_sift(cfg.mode);
  NegativeMask mask(n);
  std::vector<char> neighbor(n, 0);
  std::vector<std::uint32_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (structure) {
      for (const auto& adj : graph.adjacencies) {
        for (auto j : adj.neighbors(i)) neighbor[j] = 1;
      }
    }
    kept.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (structure && neighbor[j]) {
        ++mask.structure_sifted;
      } else if (attribute && score(i, j) > cfg.sift_threshold) {
        ++mask.attribute_sifted;
      } else {
        kept.push_back(static_cast<std::uint32_t>(j));
      }
    }
    for (auto r : kRelations) mask.mutable_negatives(r, i) = kept;
    if (structure) {
      for (const auto& adj : graph.adjacencies) {
        for (auto j : adj.neighbors(i)) neighbor[j] = 0;
      }
    }
  }
  return mask;
}

struct LossAndGradient {
  double loss = 0.0;
  RelationMatrices d_views;  // d(loss) / d(projected rows), same shapes as the views
};

namespace detail {

inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline void check_views(const RelationMatrices& views, const NegativeMask& mask, const LossConfig& cfg) {
  cfg.validate();
  const auto n = views[0].rows(), d = views[0].cols();
  if (n == 0 || d == 0) throw InputError("nhs_loss: empty view");
  for (const auto& v : views) {
    if (v.rows() != n || v.cols() != d) throw InputError("nhs_loss: views differ in shape");
  }
  if (mask.n() != static_cast<std::size_t>(n)) throw InputError("nhs_loss: mask size differs from view size");
}

// Shared by the value-only and value-plus-gradient entry points.
inline double nhs_loss_impl(const RelationMatrices& views, const NegativeMask& mask, const LossConfig& cfg,
                            RelationMatrices* d_views) {
  check_views(views, mask, cfg);
  const Eigen::Index n = views[0].rows();
  RelationMatrices unit;
  std::array<Vector, kNumRelations> norms;
  for (std::size_t r = 0; r < kNumRelations; ++r) unit[r] = normalize_rows(views[r], &norms[r]);

  // coef[a][r](i, j) = d(loss) / d(cos(unit[a].row(i), unit[r].row(j))).
  std::array<RelationMatrices, kNumRelations> coef;
  if (d_views) {
    for (auto& row : coef) {
      for (auto& m : row) m = Matrix::Zero(n, n);
    }
  }
  const double inv_tau = 1.0 / cfg.tau;
  const double scale = 1.0 / (static_cast<double>(kNumRelations) * static_cast<double>(n));

  // Logits for one anchor: positives first, then negatives; sources records
  // (view, node) for each logit.
  std::vector<double> logits, weights;
  std::vector<std::pair<std::size_t, std::uint32_t>> sources;
  double total = 0.0;
  for (std::size_t a = 0; a < kNumRelations; ++a) {
    const Relation anchor_view = kRelations[a];
    // sims[r] = unit[a] * unit[r]^T, one row per anchor.
    RelationMatrices sims;
    for (std::size_t r = 0; r < kNumRelations; ++r) sims[r].noalias() = unit[a] * unit[r].transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      logits.clear();
      sources.clear();
      for (std::size_t r = 0; r < kNumRelations; ++r) {
        if (r == a) continue;
        logits.push_back(sims[r](i, i) * inv_tau);
        sources.emplace_back(r, static_cast<std::uint32_t>(i));
      }
      const std::size_t n_pos = logits.size();
      for (auto j : mask.negatives(anchor_view, static_cast<std::size_t>(i))) {
        logits.push_back(sims[a](i, j) * inv_tau);
        sources.emplace_back(a, j);
      }
      for (std::size_t r = 0; r < kNumRelations; ++r) {
        if (r == a) continue;
        for (auto j : mask.negatives(kRelations[r], static_cast<std::size_t>(i))) {
          logits.push_back(sims[r](i, j) * inv_tau);
          sources.emplace_back(r, j);
        }
      }
      if (logits.size() == n_pos) continue;  // no negatives: the term is exactly zero
      // One shared shift; every logit lies within 2 / tau of the maximum.
      const double shift = *std::max_element(logits.begin(), logits.end());
      weights.resize(logits.size());
      double pos = 0.0, all = 0.0;
      for (std::size_t t = 0; t < logits.size(); ++t) {
        weights[t] = std::exp(logits[t] - shift);
        all += weights[t];
        if (t < n_pos) pos += weights[t];
      }
      double log_pos = shift + std::log(pos);
      if (pos == 0.0) log_pos = log_sum_exp(std::span<const double>(logits.data(), n_pos));
      total += shift + std::log(all) - log_pos;
      if (!d_views) continue;
      for (std::size_t t = 0; t < logits.size(); ++t) {
        double coef_t = weights[t] / all;
        if (t < n_pos) coef_t -= std::exp(logits[t] - log_pos);
        coef_t *= inv_tau * scale;
        const auto [r, j] = sources[t];
        coef[a][r](i, j) += coef_t;
      }
    }
  }
  if (d_views) {
    RelationMatrices d_unit;
    for (auto& m : d_unit) m = Matrix::Zero(n, views[0].cols());
    for (std::size_t a = 0; a < kNumRelations; ++a) {
      for (std::size_t r = 0; r < kNumRelations; ++r) {
        d_unit[a].noalias() += coef[a][r] * unit[r];
        d_unit[r].noalias() += coef[a][r].transpose() * unit[a];
      }
    }
    // Back through row normalization: d u = (d u_hat - (d u_hat . u_hat) u_hat) / |u|.
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      Matrix g(n, views[r].cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        if (norms[r][i] < kNormFloor) {
          g.row(i) = d_unit[r].row(i) / kNormFloor;
          continue;
        }
        const double along = d_unit[r].row(i).dot(unit[r].row(i));
        g.row(i) = (d_unit[r].row(i) - along * unit[r].row(i)) / norms[r][i];
      }
      (*d_views)[r] = std::move(g);
    }
  }
  return total * scale;
}

}  // namespace detail

// Mean over all 3n anchors of -log(pos / (pos + intra-view neg + inter-view neg)),
// with exp(cos / tau) terms.
inline double nhs_loss(const RelationMatrices& views, const NegativeMask& mask, const LossConfig& cfg) {
  return detail::nhs_loss_impl(views, mask, cfg, nullptr);
}

inline LossAndGradient nhs_loss_backward(const RelationMatrices& views, const NegativeMask& mask,
                                         const LossConfig& cfg) {
  LossAndGradient out;
  out.loss = detail::nhs_loss_impl(views, mask, cfg, &out.d_views);
  return out;
}

}  // namespace connhs
