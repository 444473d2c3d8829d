#pragma once

// Document feature model, embedding-bundle I/O and synthetic corpora.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "connhs/error.hpp"
#include "connhs/random.hpp"

namespace connhs {

using Vec = std::vector<double>;

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct DocumentFeatures {
  std::string id;
  Vec content_vec;
  Vec title_vec;
  std::vector<Vec> keyword_vecs;
  std::vector<Vec> event_vecs;
  std::optional<std::string> label;
  Split split = Split::train;

  bool operator==(const DocumentFeatures&) const = default;
};

// Validated, immutable collection of documents sharing one embedding dimension.
class Corpus {
 public:
  Corpus() = default;

  // Throws InputError on duplicate ids, dimension mismatch or non-finite values.
  // A nonzero declared_dim overrides the dimension inferred from the first document.
  static Corpus from_documents(std::vector<DocumentFeatures> docs, std::string encoder = "",
                               std::size_t declared_dim = 0);

  const std::vector<DocumentFeatures>& docs() const { return docs_; }
  std::size_t size() const { return docs_.size(); }
  std::size_t dim() const { return dim_; }
  const std::string& encoder() const { return encoder_; }
  // Sorted; index in this vector is the class index used by classifiers.
  const std::vector<std::string>& class_set() const { return classes_; }
  std::optional<std::size_t> index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const Corpus& other) const {
    return dim_ == other.dim_ && encoder_ == other.encoder_ && docs_ == other.docs_;
  }

 private:
  std::vector<DocumentFeatures> docs_;
  std::size_t dim_ = 0;
  std::string encoder_;
  std::vector<std::string> classes_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline void check_vector(const Vec& v, std::size_t dim, const std::string& id,
                         const std::string& field) {
  if (v.size() != dim) {
    throw InputError("dimension mismatch in record '" + id + "' field '" + field + "': expected " +
                     std::to_string(dim) + ", got " + std::to_string(v.size()));
  }
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw InputError("non-finite value in record '" + id + "' field '" + field + "'");
    }
  }
}

}  // namespace detail

inline Corpus Corpus::from_documents(std::vector<DocumentFeatures> docs, std::string encoder,
                                     std::size_t declared_dim) {
  Corpus c;
  c.encoder_ = std::move(encoder);
  c.dim_ = declared_dim;
  if (c.dim_ == 0 && !docs.empty()) c.dim_ = docs.front().content_vec.size();
  std::set<std::string> classes;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& d = docs[i];
    if (!c.index_.emplace(d.id, i).second) throw InputError("duplicate document id '" + d.id + "'");
    if (c.dim_ == 0) throw InputError("record '" + d.id + "' has an empty content_vec");
    detail::check_vector(d.content_vec, c.dim_, d.id, "content_vec");
    detail::check_vector(d.title_vec, c.dim_, d.id, "title_vec");
    for (const auto& v : d.keyword_vecs) detail::check_vector(v, c.dim_, d.id, "keyword_vecs");
    for (const auto& v : d.event_vecs) detail::check_vector(v, c.dim_, d.id, "event_vecs");
    if (d.label) classes.insert(*d.label);
  }
  c.classes_.assign(classes.begin(), classes.end());
  c.docs_ = std::move(docs);
  return c;
}

// ---------------------------------------------------------------------------
// Bundle format: JSON Lines, manifest first, one document per line.

inline constexpr const char* kBundleSchema = "connhs-bundle/1";

namespace detail {

using ojson = nlohmann::ordered_json;

inline const nlohmann::json& require(const nlohmann::json& rec, const char* field,
                                     const std::string& where) {
  auto it = rec.find(field);
  if (it == rec.end()) throw InputError(where + ": missing field '" + field + "'");
  return *it;
}

inline Vec parse_vec(const nlohmann::json& j, const std::string& where, const char* field) {
  if (!j.is_array()) throw InputError(where + ": field '" + field + "' must be an array");
  Vec v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw InputError(where + ": field '" + field + "' must contain numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

inline std::vector<Vec> parse_vec_list(const nlohmann::json& j, const std::string& where,
                                       const char* field) {
  if (!j.is_array()) throw InputError(where + ": field '" + field + "' must be an array");
  std::vector<Vec> out;
  for (const auto& v : j) out.push_back(parse_vec(v, where, field));
  return out;
}

inline ojson vec_json(const Vec& v) {
  ojson a = ojson::array();
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace detail

inline Corpus read_bundle(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("bundle: missing manifest line");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("bundle manifest: ") + e.what());
  }
  if (!manifest.is_object()) throw InputError("bundle manifest: expected an object");
  const auto& schema = detail::require(manifest, "schema", "bundle manifest");
  if (!schema.is_string() || schema.get<std::string>() != kBundleSchema) {
    throw InputError(std::string("bundle manifest: schema must be '") + kBundleSchema + "'");
  }
  const auto& dim_j = detail::require(manifest, "dim", "bundle manifest");
  if (!dim_j.is_number_integer() || dim_j.get<long long>() < 1) {
    throw InputError("bundle manifest: dim must be a positive integer");
  }
  const auto dim = static_cast<std::size_t>(dim_j.get<long long>());
  std::string encoder;
  if (auto it = manifest.find("encoder"); it != manifest.end()) {
    if (!it->is_string()) throw InputError("bundle manifest: encoder must be a string");
    encoder = it->get<std::string>();
  }

  std::vector<DocumentFeatures> docs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string where = "record at line " + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw InputError(where + ": expected an object");
    const auto& id = detail::require(rec, "id", where);
    if (!id.is_string()) throw InputError(where + ": field 'id' must be a string");
    DocumentFeatures d;
    d.id = id.get<std::string>();
    where = "record '" + d.id + "' (line " + std::to_string(line_no) + ")";
    const auto& label = detail::require(rec, "label", where);
    if (label.is_string()) {
      d.label = label.get<std::string>();
    } else if (!label.is_null()) {
      throw InputError(where + ": field 'label' must be a string or null");
    }
    const auto& split = detail::require(rec, "split", where);
    if (split == "train") {
      d.split = Split::train;
    } else if (split == "test") {
      d.split = Split::test;
    } else {
      throw InputError(where + ": field 'split' must be \"train\" or \"test\"");
    }
    d.content_vec = detail::parse_vec(detail::require(rec, "content_vec", where), where, "content_vec");
    d.title_vec = detail::parse_vec(detail::require(rec, "title_vec", where), where, "title_vec");
    d.keyword_vecs =
        detail::parse_vec_list(detail::require(rec, "keyword_vecs", where), where, "keyword_vecs");
    d.event_vecs =
        detail::parse_vec_list(detail::require(rec, "event_vecs", where), where, "event_vecs");
    docs.push_back(std::move(d));
  }
  return Corpus::from_documents(std::move(docs), encoder, dim);
}

inline Corpus load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open bundle '" + path + "'");
  return read_bundle(in);
}

inline void write_bundle(std::ostream& out, const Corpus& corpus) {
  detail::ojson manifest;
  manifest["schema"] = kBundleSchema;
  manifest["dim"] = corpus.dim();
  manifest["encoder"] = corpus.encoder();
  out << manifest.dump() << '\n';
  for (const auto& d : corpus.docs()) {
    detail::ojson rec;
    rec["id"] = d.id;
    rec["label"] = d.label ? detail::ojson(*d.label) : detail::ojson(nullptr);
    rec["split"] = to_string(d.split);
    rec["content_vec"] = detail::vec_json(d.content_vec);
    rec["title_vec"] = detail::vec_json(d.title_vec);
    detail::ojson kws = detail::ojson::array();
    for (const auto& v : d.keyword_vecs) kws.push_back(detail::vec_json(v));
    rec["keyword_vecs"] = std::move(kws);
    detail::ojson evs = detail::ojson::array();
    for (const auto& v : d.event_vecs) evs.push_back(detail::vec_json(v));
    rec["event_vecs"] = std::move(evs);
    out << rec.dump() << '\n';
  }
}

inline std::string serialize_bundle(const Corpus& corpus) {
  std::ostringstream out;
  write_bundle(out, corpus);
  return out.str();
}

inline void save_bundle(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write bundle '" + path + "'");
  write_bundle(out, corpus);
}

// ---------------------------------------------------------------------------
// Synthetic corpora with planted clusters.

struct SyntheticSpec {
  int n_clusters = 4;
  int docs_per_cluster = 50;
  int dim = 32;
  double intra_noise = 0.3;
  // Fraction of documents whose first keyword sits near another cluster's centroid.
  double cross_confuser_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_clusters < 1) throw InputError("n_clusters must be positive");
    if (docs_per_cluster < 1) throw InputError("docs_per_cluster must be positive");
    if (dim < 1) throw InputError("dim must be positive");
    if (!(intra_noise >= 0.0) || !std::isfinite(intra_noise)) {
      throw InputError("intra_noise must be a nonnegative finite number");
    }
    if (!(cross_confuser_rate >= 0.0 && cross_confuser_rate <= 1.0)) {
      throw InputError("cross_confuser_rate must lie in [0, 1]");
    }
  }
};

// Keyword and event vectors are drawn at this fraction of intra_noise.
inline constexpr double kFeatureNoiseFactor = 0.5;

namespace detail {

// Unit-norm cluster centroids. When the clusters fit in the embedding space the
// centroids are mutually orthogonal; otherwise they are random directions.
inline std::vector<Vec> make_centroids(Rng& rng, int n_clusters, int dim) {
  std::vector<Vec> cs;
  for (int k = 0; k < n_clusters; ++k) {
    Vec v(static_cast<std::size_t>(dim));
    for (;;) {
      for (auto& x : v) x = rng.normal();
      if (k < dim) {
        for (const auto& prev : cs) {
          double dot = 0.0;
          for (int i = 0; i < dim; ++i) dot += v[i] * prev[i];
          for (int i = 0; i < dim; ++i) v[i] -= dot * prev[i];
        }
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (auto& x : v) x /= norm;
        break;
      }
    }
    cs.push_back(std::move(v));
  }
  return cs;
}

inline Vec jitter(Rng& rng, const Vec& center, double scale) {
  Vec v = center;
  for (auto& x : v) x += scale * rng.normal();
  return v;
}

}  // namespace detail

inline Corpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto centroids = detail::make_centroids(rng, spec.n_clusters, spec.dim);
  const double feature_noise = kFeatureNoiseFactor * spec.intra_noise;
  const int train_per_cluster = (4 * spec.docs_per_cluster + 2) / 5;

  std::vector<DocumentFeatures> docs;
  docs.reserve(static_cast<std::size_t>(spec.n_clusters) * spec.docs_per_cluster);
  for (int k = 0; k < spec.n_clusters; ++k) {
    const Vec& c = centroids[k];
    for (int m = 0; m < spec.docs_per_cluster; ++m) {
      DocumentFeatures d;
      d.id = "doc-" + std::to_string(k) + "-" + std::to_string(m);
      d.label = std::to_string(k);
      d.split = m < train_per_cluster ? Split::train : Split::test;
      d.content_vec = detail::jitter(rng, c, spec.intra_noise);
      d.title_vec = detail::jitter(rng, c, spec.intra_noise);
      const auto n_kw = rng.integer(2, 4);
      for (std::int64_t i = 0; i < n_kw; ++i) d.keyword_vecs.push_back(detail::jitter(rng, c, feature_noise));
      const auto n_ev = rng.integer(1, 3);
      for (std::int64_t i = 0; i < n_ev; ++i) d.event_vecs.push_back(detail::jitter(rng, c, feature_noise));
      const bool confuse = rng.uniform() < spec.cross_confuser_rate;
      if (confuse && spec.n_clusters > 1) {
        const auto other = (k + 1 + rng.integer(0, spec.n_clusters - 2)) % spec.n_clusters;
        d.keyword_vecs.front() = detail::jitter(rng, centroids[other], feature_noise);
      }
      docs.push_back(std::move(d));
    }
  }
  return Corpus::from_documents(std::move(docs), "synthetic");
}

// ---------------------------------------------------------------------------
// Few-label views of the training split.

struct LabelViews {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
};

// Stratified: the first ceil(rate * |train_c|) training documents of each class,
// in corpus order. The subsets are nested as the rate grows.
inline LabelViews split_views(const Corpus& corpus, double label_rate) {
  if (!(label_rate > 0.0 && label_rate <= 1.0)) throw InputError("label_rate must lie in (0, 1]");
  // Guards ceil() against products such as 0.1 * 30 = 3.0000000000000004.
  constexpr double kSlack = 1e-9;
  std::map<std::string, std::vector<std::string>> per_class;
  std::size_t n_train = 0;
  for (const auto& d : corpus.docs()) {
    if (d.split != Split::train) continue;
    if (!d.label) throw InputError("training document '" + d.id + "' has no label");
    per_class[*d.label].push_back(d.id);
    ++n_train;
  }
  if (per_class.empty()) throw InputError("corpus has no labeled training documents");
  const auto total = static_cast<std::size_t>(std::ceil(label_rate * n_train - kSlack));
  if (total < per_class.size()) {
    throw InputError("label_rate " + std::to_string(label_rate) + " yields " + std::to_string(total) +
                     " labeled documents for " + std::to_string(per_class.size()) + " classes");
  }
  std::set<std::string> chosen;
  for (const auto& [label, ids] : per_class) {
    auto take = static_cast<std::size_t>(std::ceil(label_rate * ids.size() - kSlack));
    take = std::clamp<std::size_t>(take, 1, ids.size());
    chosen.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
  }
  LabelViews views;
  for (const auto& d : corpus.docs()) {
    if (d.split != Split::train) continue;
    (chosen.count(d.id) ? views.labeled : views.unlabeled).push_back(d.id);
  }
  return views;
}

}  // namespace connhs
