#include "frn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "frn/errors.hpp"
#include "frn/features.hpp"

namespace frn {

double auc(std::span<const double> positive_scores, std::span<const double> negative_scores) {
  const std::size_t P = positive_scores.size(), N = negative_scores.size();
  if (P == 0 || N == 0) {
    throw EvaluationError("auc: both classes need at least one score (got " +
                          std::to_string(P) + " positive, " + std::to_string(N) +
                          " negative)");
  }
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> all;
  all.reserve(P + N);
  for (double s : positive_scores) all.push_back({s, true});
  for (double s : negative_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });
  // Ranks are 1-based; a tie group spanning ranks [i+1, j] gets (i+1+j)/2.
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].positive) positive_rank_sum += rank;
    }
    i = j;
  }
  const double u = positive_rank_sum - 0.5 * static_cast<double>(P) * static_cast<double>(P + 1);
  return u / (static_cast<double>(P) * static_cast<double>(N));
}

EvalReport compat_report(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw EvaluationError("compat_report: score and label counts differ");
  }
  std::vector<double> pos, neg;
  EvalReport report;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    const auto bin = static_cast<std::size_t>(std::clamp(s, 0.0, 1.0) * 10.0);
    const std::size_t b = std::min<std::size_t>(bin, 9);
    if (labels[i] == 1) {
      pos.push_back(s);
      ++report.pos_histogram[b];
    } else {
      neg.push_back(s);
      ++report.neg_histogram[b];
    }
  }
  if (pos.empty() || neg.empty()) {
    throw EvaluationError("eval_compat: the dataset must contain both labels");
  }
  report.auc = auc(pos, neg);
  report.n_pos = pos.size();
  report.n_neg = neg.size();
  report.mean_pos = std::accumulate(pos.begin(), pos.end(), 0.0) / pos.size();
  report.mean_neg = std::accumulate(neg.begin(), neg.end(), 0.0) / neg.size();
  return report;
}

template <typename T>
std::vector<double> compat_scores(const ModelParams<T>& params, const ExampleSet& examples) {
  const auto scores = score_outfits<T>(params, examples.inputs());
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back(static_cast<double>(s.m_s));
  return out;
}

template <typename T>
EvalReport eval_compat(const ModelParams<T>& params, const ExampleSet& examples) {
  const std::vector<double> scores = compat_scores(params, examples);
  return compat_report(scores, examples.labels());
}

template <typename T>
FitbReport eval_fitb(const ModelParams<T>& params, std::span<const FitbQuery> queries,
                     const ItemResolver& resolver, std::size_t batch_size) {
  FitbReport report;
  std::vector<std::vector<ItemInput>> outfits;
  std::vector<const FitbQuery*> scored;
  for (const FitbQuery& q : queries) {
    try {
      const std::vector<ItemInput> partial = resolver.resolve(q.partial);
      std::vector<std::vector<ItemInput>> four;
      for (const auto& candidate : q.candidates) {
        std::vector<ItemInput> outfit = partial;
        outfit.push_back(resolver.resolve(candidate));
        four.push_back(std::move(outfit));
      }
      for (auto& o : four) outfits.push_back(std::move(o));
      scored.push_back(&q);
    } catch (const InputError& e) {
      ++report.n_failed;
      report.failures.push_back(q.query_id + ": " + e.what());
    }
  }
  const auto scores = score_outfits<T>(params, outfits, batch_size);
  for (std::size_t k = 0; k < scored.size(); ++k) {
    FitbOutcome outcome;
    outcome.query_id = scored[k]->query_id;
    outcome.answer = scored[k]->answer_index;
    for (std::size_t c = 0; c < 4; ++c) {
      outcome.scores[c] = static_cast<double>(scores[4 * k + c].m_s);
    }
    for (std::size_t c = 1; c < 4; ++c) {
      if (outcome.scores[c] > outcome.scores[outcome.chosen]) outcome.chosen = c;
    }
    for (std::size_t c = 0; c < 4; ++c) {
      if (c != outcome.chosen && outcome.scores[c] == outcome.scores[outcome.chosen]) {
        outcome.tie = true;
      }
    }
    if (outcome.tie) ++report.n_ties;
    if (outcome.chosen == outcome.answer) ++report.n_correct;
    report.outcomes.push_back(std::move(outcome));
  }
  report.n_queries = scored.size();
  report.accuracy = report.n_queries == 0
                        ? 0.0
                        : static_cast<double>(report.n_correct) /
                              static_cast<double>(report.n_queries);
  return report;
}

template <typename T>
std::vector<ItemRecord> compute_embeddings(const ModelParams<T>& params,
                                           std::span<const ItemInput> items) {
  std::vector<ItemRecord> out;
  out.reserve(items.size());
  for (const ItemInput& item : items) {
    const std::vector<T> v = embed_item(params, item);
    ItemRecord rec;
    rec.item_id = std::string(item.item_id);
    rec.x.assign(v.begin(), v.end());
    out.push_back(std::move(rec));
  }
  return out;
}

template <typename T>
void export_embeddings(const ModelParams<T>& params, std::span<const ItemInput> items,
                       const std::filesystem::path& path) {
  write_features(compute_embeddings(params, items), path, params.config.projection_dim);
}

namespace {

using Matrix = std::vector<std::vector<double>>;

std::vector<double> mat_vec(const Matrix& m, const std::vector<double>& v) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t r = 0; r < m.size(); ++r) {
    for (std::size_t c = 0; c < v.size(); ++c) out[r] += m[r][c] * v[c];
  }
  return out;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

// Dominant eigenpair of a symmetric PSD matrix. Returns eigenvalue 0 and a
// zero vector when the matrix is (numerically) zero.
std::pair<double, std::vector<double>> dominant_eigen(const Matrix& cov) {
  const std::size_t d = cov.size();
  // Start from the column with the largest norm; it cannot be orthogonal to
  // the dominant eigenvector unless the matrix is zero.
  std::size_t best = 0;
  double best_norm = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) s += cov[r][c] * cov[r][c];
    if (s > best_norm) {
      best_norm = s;
      best = c;
    }
  }
  if (best_norm == 0.0) return {0.0, std::vector<double>(d, 0.0)};
  std::vector<double> u(d);
  for (std::size_t r = 0; r < d; ++r) u[r] = cov[r][best];
  const double n0 = norm(u);
  for (double& e : u) e /= n0;
  for (int iter = 0; iter < 1000; ++iter) {
    std::vector<double> w = mat_vec(cov, u);
    const double nw = norm(w);
    if (nw == 0.0) return {0.0, std::vector<double>(d, 0.0)};
    for (double& e : w) e /= nw;
    double delta = 0.0;
    for (std::size_t r = 0; r < d; ++r) delta += (w[r] - u[r]) * (w[r] - u[r]);
    u = std::move(w);
    if (std::sqrt(delta) < 1e-9) break;
  }
  const std::vector<double> cu = mat_vec(cov, u);
  double lambda = 0.0;
  for (std::size_t r = 0; r < d; ++r) lambda += u[r] * cu[r];
  return {lambda, u};
}

void fix_sign(std::vector<double>& v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (!v.empty() && v[arg] < 0.0) {
    for (double& e : v) e = -e;
  }
}

}  // namespace

Pca2d pca2d(std::span<const std::vector<double>> vectors) {
  const std::size_t n = vectors.size();
  if (n < 2) throw EvaluationError("pca2d: need at least 2 vectors");
  const std::size_t d = vectors.front().size();
  if (d == 0) throw EvaluationError("pca2d: vectors are empty");
  for (const auto& v : vectors) {
    if (v.size() != d) throw DimensionError("pca2d: vectors differ in length");
  }
  std::vector<double> mean(d, 0.0);
  for (const auto& v : vectors) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += v[k];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  Matrix centred(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) centred[i][k] = vectors[i][k] - mean[k];
  }
  Matrix cov(d, std::vector<double>(d, 0.0));
  for (const auto& row : centred) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) cov[a][b] += row[a] * row[b];
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      cov[a][b] /= static_cast<double>(n - 1);
      cov[b][a] = cov[a][b];
    }
  }

  Pca2d result;
  auto [l1, u1] = dominant_eigen(cov);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) cov[a][b] -= l1 * u1[a] * u1[b];
  }
  auto [l2, u2] = dominant_eigen(cov);
  if (!(l2 > 1e-12 * std::max(l1, 1e-300))) {
    result.rank_deficient = true;
    l2 = 0.0;
    u2.assign(d, 0.0);
  }
  if (!(l1 > 0.0)) {
    l1 = 0.0;
    u1.assign(d, 0.0);
  }
  fix_sign(u1);
  fix_sign(u2);
  result.explained_variance = {l1, l2};
  result.coords.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = 0.0, y = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      x += centred[i][k] * u1[k];
      y += centred[i][k] * u2[k];
    }
    result.coords[i] = {x, y};
  }
  result.components = {std::move(u1), std::move(u2)};
  return result;
}

void write_coordinates(const std::filesystem::path& path, std::span<const std::string> ids,
                       const Pca2d& pca) {
  if (ids.size() != pca.coords.size()) {
    throw DimensionError("write_coordinates: id and coordinate counts differ");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(9);
  out << "id\tx\ty\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << '\t' << pca.coords[i][0] << '\t' << pca.coords[i][1] << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

nlohmann::json to_json(const EvalReport& report) {
  return {{"auc", report.auc},
          {"n_pos", report.n_pos},
          {"n_neg", report.n_neg},
          {"mean_pos_score", report.mean_pos},
          {"mean_neg_score", report.mean_neg},
          {"pos_histogram", report.pos_histogram},
          {"neg_histogram", report.neg_histogram}};
}

nlohmann::json to_json(const FitbReport& report, bool include_outcomes) {
  nlohmann::json j = {{"accuracy", report.accuracy},
                      {"n_queries", report.n_queries},
                      {"n_correct", report.n_correct},
                      {"n_ties", report.n_ties},
                      {"n_failed", report.n_failed},
                      {"failures", report.failures}};
  if (include_outcomes) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& o : report.outcomes) {
      rows.push_back({{"query_id", o.query_id},
                      {"scores", o.scores},
                      {"chosen", o.chosen},
                      {"answer", o.answer},
                      {"tie", o.tie}});
    }
    j["outcomes"] = std::move(rows);
  }
  return j;
}

#define FRN_INSTANTIATE(T)                                                                \
  template std::vector<double> compat_scores(const ModelParams<T>&, const ExampleSet&);   \
  template EvalReport eval_compat(const ModelParams<T>&, const ExampleSet&);              \
  template FitbReport eval_fitb(const ModelParams<T>&, std::span<const FitbQuery>,        \
                                const ItemResolver&, std::size_t);                        \
  template std::vector<ItemRecord> compute_embeddings(const ModelParams<T>&,              \
                                                      std::span<const ItemInput>);        \
  template void export_embeddings(const ModelParams<T>&, std::span<const ItemInput>,      \
                                  const std::filesystem::path&);

FRN_INSTANTIATE(float)
FRN_INSTANTIATE(double)

#undef FRN_INSTANTIATE

}  // namespace frn
