#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "frn/dataset.hpp"
#include "frn/model.hpp"
#include "frn/sampling.hpp"

namespace frn {

// Mann-Whitney AUC from rank sums; tied scores share their average rank, so
// each tied (positive, negative) pair counts 1/2. Throws EvaluationError
// when either class is empty.
double auc(std::span<const double> positive_scores, std::span<const double> negative_scores);

struct EvalReport {
  double auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double mean_pos = 0.0;
  double mean_neg = 0.0;
  // Ten equal-width bins over [0, 1].
  std::array<std::size_t, 10> pos_histogram{};
  std::array<std::size_t, 10> neg_histogram{};
};

EvalReport compat_report(std::span<const double> scores, std::span<const int> labels);

template <typename T>
std::vector<double> compat_scores(const ModelParams<T>& params, const ExampleSet& examples);

template <typename T>
EvalReport eval_compat(const ModelParams<T>& params, const ExampleSet& examples);

struct FitbOutcome {
  std::string query_id;
  std::array<double, 4> scores{};
  std::size_t chosen = 0;
  std::size_t answer = 0;
  bool tie = false;  // the winning score is shared; lowest index was taken
};

struct FitbReport {
  double accuracy = 0.0;
  std::size_t n_queries = 0;  // scored queries
  std::size_t n_correct = 0;
  std::size_t n_ties = 0;
  std::size_t n_failed = 0;   // excluded because an item could not be resolved
  std::vector<FitbOutcome> outcomes;
  std::vector<std::string> failures;
};

// For each query, scores partial + candidate for every candidate and picks
// the argmax (lowest index on ties).
template <typename T>
FitbReport eval_fitb(const ModelParams<T>& params, std::span<const FitbQuery> queries,
                     const ItemResolver& resolver, std::size_t batch_size = 256);

// Item id -> projected embedding v.
template <typename T>
std::vector<ItemRecord> compute_embeddings(const ModelParams<T>& params,
                                           std::span<const ItemInput> items);

// Writes embeddings in the FRNF format (dim = projection_dim).
template <typename T>
void export_embeddings(const ModelParams<T>& params, std::span<const ItemInput> items,
                       const std::filesystem::path& path);

struct Pca2d {
  std::vector<std::array<double, 2>> coords;
  std::array<std::vector<double>, 2> components;
  std::array<double, 2> explained_variance{};
  bool rank_deficient = false;  // second component zeroed
};

// Mean-centres, then extracts the top two covariance eigenvectors by power
// iteration with deflation (tolerance 1e-9, at most 1000 iterations). Each
// component's largest-magnitude entry is made positive.
Pca2d pca2d(std::span<const std::vector<double>> vectors);

// Tab-separated "id x y" rows with a header line.
void write_coordinates(const std::filesystem::path& path, std::span<const std::string> ids,
                       const Pca2d& pca);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const FitbReport& report, bool include_outcomes = false);

}  // namespace frn
