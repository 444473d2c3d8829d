#pragma once

// Random inputs shared by the unit and acceptance suites.

#include <string>
#include <vector>

#include "connhs/connhs.hpp"

namespace fixtures {

using namespace connhs;

// Vectors clustered around a few random centers so every threshold regime
// produces a mix of edges and non-edges.
inline Vec near(Rng& rng, const Vec& center, double noise) {
  Vec v(center);
  for (auto& x : v) x += rng.normal(0.0, noise);
  return v;
}

inline Corpus random_corpus(Rng& rng, std::size_t n, int dim, int max_keywords = 5, int max_events = 4,
                            int centers = 3, double noise = 0.5) {
  std::vector<Vec> c(static_cast<std::size_t>(centers), Vec(static_cast<std::size_t>(dim)));
  for (auto& v : c) {
    for (auto& x : v) x = rng.normal();
  }
  std::vector<DocumentFeatures> docs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& home = c[static_cast<std::size_t>(rng.integer(0, centers - 1))];
    DocumentFeatures d;
    d.id = "d" + std::to_string(i);
    d.content_vec = near(rng, home, noise);
    d.title_vec = near(rng, home, noise);
    const auto nk = rng.integer(0, max_keywords), ne = rng.integer(0, max_events);
    for (std::int64_t k = 0; k < nk; ++k) d.keyword_vecs.push_back(near(rng, c[static_cast<std::size_t>(rng.integer(0, centers - 1))], noise));
    for (std::int64_t k = 0; k < ne; ++k) d.event_vecs.push_back(near(rng, c[static_cast<std::size_t>(rng.integer(0, centers - 1))], noise));
    d.label = std::to_string(i % 2);
    d.split = i % 5 == 4 ? Split::test : Split::train;
    docs.push_back(std::move(d));
  }
  return Corpus::from_documents(std::move(docs), "fixture");
}

inline RelationAdjacency random_adjacency(Rng& rng, Relation r, std::size_t n, double p) {
  RelationAdjacency a(r, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.uniform() < p) a.add_edge(i, j);
    }
  }
  a.finalize();
  return a;
}

inline MultiRelationalTextGraph random_graph(Rng& rng, std::size_t n, double p) {
  MultiRelationalTextGraph g;
  g.n = n;
  for (auto r : kRelations) g.adjacencies[index(r)] = random_adjacency(rng, r, n, p);
  for (std::size_t i = 0; i < n; ++i) g.node_order.push_back("n" + std::to_string(i));
  return g;
}

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, sd);
  }
  return m;
}

inline void randomize(LinearMap& m, Rng& rng, double sd = 0.5) {
  m.weight = random_matrix(rng, m.weight.rows(), m.weight.cols(), sd);
  for (Eigen::Index k = 0; k < m.bias.size(); ++k) m.bias[k] = rng.normal(0.0, sd);
}

// Glorot weights plus nonzero biases, so bias gradients are exercised too.
inline ModelParameters random_parameters(const Architecture& arch, std::uint64_t seed) {
  auto p = init_parameters(arch, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for_each_tensor(p, [&](const std::string& name, std::span<double> s, auto, auto cols) {
    if (cols < 0 && name.find("bias") != std::string::npos) {
      for (auto& x : s) x = rng.normal(0.0, 0.1);
    }
  });
  return p;
}

inline RelationMatrices random_views(Rng& rng, Eigen::Index n, Eigen::Index d) {
  return {random_matrix(rng, n, d), random_matrix(rng, n, d), random_matrix(rng, n, d)};
}

}  // namespace fixtures
