#pragma once

// Multi-relational text graph: title, keyword and event relations built by
// similarity thresholding over document features.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "connhs/corpus.hpp"
#include "connhs/error.hpp"

namespace connhs {

enum class Relation : std::uint8_t { title = 0, keyword = 1, event = 2 };

inline constexpr std::size_t kNumRelations = 3;
inline constexpr std::array<Relation, kNumRelations> kRelations = {Relation::title, Relation::keyword,
                                                                   Relation::event};

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::title: return "title";
    case Relation::keyword: return "keyword";
    case Relation::event: return "event";
  }
  return "?";
}

inline std::size_t index(Relation r) { return static_cast<std::size_t>(r); }

// Cosine of the angle between x and y. Throws on zero vectors or length mismatch.
inline double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw InputError("cosine_similarity: length mismatch (" + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()) + ")");
  }
  double dot = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) throw InputError("cosine_similarity: zero vector");
  const double s = dot / (std::sqrt(xx) * std::sqrt(yy));
  return std::clamp(s, -1.0, 1.0);
}

struct ThresholdConfig {
  double rho_t = 0.7;
  double rho_e = 0.6;
  double rho_k = 0.6;
  int gamma_e = 3;
  int gamma_k = 6;

  void validate() const {
    for (double rho : {rho_t, rho_e, rho_k}) {
      if (!(rho >= -1.0 && rho <= 1.0)) throw InputError("similarity thresholds must lie in [-1, 1]");
    }
    if (gamma_e < 0 || gamma_k < 0) throw InputError("association coefficients must be nonnegative");
  }

  bool operator==(const ThresholdConfig&) const = default;
};

// Symmetric, irreflexive boolean relation over n nodes, stored as sorted
// neighbor lists.
class RelationAdjacency {
 public:
  RelationAdjacency() = default;
  RelationAdjacency(Relation relation, std::size_t n) : relation_(relation), neighbors_(n) {}

  // Only valid while building; call finalize() afterwards.
  void add_edge(std::size_t i, std::size_t j) {
    if (i == j) throw InputError("self loops are not allowed");
    if (i >= neighbors_.size() || j >= neighbors_.size()) throw InputError("edge endpoint out of range");
    neighbors_[i].push_back(static_cast<std::uint32_t>(j));
    neighbors_[j].push_back(static_cast<std::uint32_t>(i));
  }

  void finalize() {
    for (auto& nb : neighbors_) {
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
  }

  Relation relation() const { return relation_; }
  std::size_t size() const { return neighbors_.size(); }
  std::span<const std::uint32_t> neighbors(std::size_t i) const { return neighbors_[i]; }

  bool has_edge(std::size_t i, std::size_t j) const {
    const auto& nb = neighbors_[i];
    return std::binary_search(nb.begin(), nb.end(), static_cast<std::uint32_t>(j));
  }

  std::size_t edge_count() const {
    std::size_t total = 0;
    for (const auto& nb : neighbors_) total += nb.size();
    return total / 2;
  }

  // Undirected edges (i < j) in lexicographic order.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < neighbors_.size(); ++i) {
      for (auto j : neighbors_[i]) {
        if (i < j) out.emplace_back(i, j);
      }
    }
    return out;
  }

  bool operator==(const RelationAdjacency&) const = default;

 private:
  Relation relation_ = Relation::title;
  std::vector<std::vector<std::uint32_t>> neighbors_;
};

struct MultiRelationalTextGraph {
  std::size_t n = 0;
  std::array<RelationAdjacency, kNumRelations> adjacencies;
  std::vector<std::string> node_order;

  const RelationAdjacency& relation(Relation r) const { return adjacencies[index(r)]; }

  // First-order neighbor in any relation.
  bool adjacent_any(std::size_t i, std::size_t j) const {
    return std::any_of(adjacencies.begin(), adjacencies.end(),
                       [&](const RelationAdjacency& a) { return a.has_edge(i, j); });
  }

  bool operator==(const MultiRelationalTextGraph&) const = default;
};

inline RelationAdjacency build_title_relation(const Corpus& corpus, double rho_t) {
  const auto& docs = corpus.docs();
  RelationAdjacency adj(Relation::title, docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (std::size_t j = i + 1; j < docs.size(); ++j) {
      if (cosine_similarity(docs[i].title_vec, docs[j].title_vec) > rho_t) adj.add_edge(i, j);
    }
  }
  adj.finalize();
  return adj;
}

// Number of (a, b) in set_a x set_b whose similarity strictly exceeds rho.
inline std::size_t count_matching_pairs(const std::vector<Vec>& set_a, const std::vector<Vec>& set_b,
                                        double rho) {
  std::size_t count = 0;
  for (const auto& a : set_a) {
    for (const auto& b : set_b) {
      if (cosine_similarity(a, b) > rho) ++count;
    }
  }
  return count;
}

enum class AssociationFeature { event, keyword };

inline RelationAdjacency build_association_relation(const Corpus& corpus, AssociationFeature feature,
                                                    double rho, int gamma) {
  const auto& docs = corpus.docs();
  const Relation rel = feature == AssociationFeature::event ? Relation::event : Relation::keyword;
  auto features = [&](const DocumentFeatures& d) -> const std::vector<Vec>& {
    return feature == AssociationFeature::event ? d.event_vecs : d.keyword_vecs;
  };
  RelationAdjacency adj(rel, docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (std::size_t j = i + 1; j < docs.size(); ++j) {
      const auto count = count_matching_pairs(features(docs[i]), features(docs[j]), rho);
      if (static_cast<long long>(count) > gamma) adj.add_edge(i, j);
    }
  }
  adj.finalize();
  return adj;
}

inline MultiRelationalTextGraph build_graph(const Corpus& corpus, const ThresholdConfig& cfg) {
  cfg.validate();
  MultiRelationalTextGraph g;
  g.n = corpus.size();
  g.adjacencies[index(Relation::title)] = build_title_relation(corpus, cfg.rho_t);
  g.adjacencies[index(Relation::keyword)] =
      build_association_relation(corpus, AssociationFeature::keyword, cfg.rho_k, cfg.gamma_k);
  g.adjacencies[index(Relation::event)] =
      build_association_relation(corpus, AssociationFeature::event, cfg.rho_e, cfg.gamma_e);
  g.node_order.reserve(corpus.size());
  for (const auto& d : corpus.docs()) g.node_order.push_back(d.id);
  return g;
}

// A single-relation view of the multi-relational graph.
struct SemanticSubgraph {
  Relation relation;
  RelationAdjacency adjacency;
  std::vector<std::string> node_order;
};

inline std::array<SemanticSubgraph, kNumRelations> separate(const MultiRelationalTextGraph& g) {
  std::array<SemanticSubgraph, kNumRelations> views;
  for (auto r : kRelations) views[index(r)] = {r, g.relation(r), g.node_order};
  return views;
}

inline nlohmann::ordered_json graph_to_json(const MultiRelationalTextGraph& g) {
  nlohmann::ordered_json j;
  j["n"] = g.n;
  j["node_order"] = g.node_order;
  nlohmann::ordered_json rels = nlohmann::ordered_json::object();
  for (auto r : kRelations) {
    auto edges = nlohmann::ordered_json::array();
    for (auto [a, b] : g.relation(r).edges()) edges.push_back({a, b});
    rels[to_string(r)] = std::move(edges);
  }
  j["relations"] = std::move(rels);
  return j;
}

inline MultiRelationalTextGraph graph_from_json(const nlohmann::json& j) {
  MultiRelationalTextGraph g;
  try {
    g.n = j.at("n").get<std::size_t>();
    g.node_order = j.at("node_order").get<std::vector<std::string>>();
    if (g.node_order.size() != g.n) throw InputError("graph: node_order length differs from n");
    for (auto r : kRelations) {
      RelationAdjacency adj(r, g.n);
      for (const auto& e : j.at("relations").at(to_string(r))) {
        const auto a = e.at(0).get<std::size_t>(), b = e.at(1).get<std::size_t>();
        if (a >= g.n || b >= g.n || a == b) throw InputError("graph: invalid edge");
        adj.add_edge(a, b);
      }
      adj.finalize();
      g.adjacencies[index(r)] = std::move(adj);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("graph: ") + e.what());
  }
  return g;
}

}  // namespace connhs
