#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace uma {

using Embedding = std::vector<double>;

/// Dense row-major matrix of affinities. Rows are candidate detections,
/// columns are occluded tracklets.
struct AffinityMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  AffinityMatrix() = default;
  AffinityMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Maximum-total assignment of size min(rows, cols). `row_to_col[r]` is the
/// matched column or -1. Runs in O(n^3); ties resolve deterministically in
/// index order. Throws ContractError on a non-finite entry.
struct Assignment {
  std::vector<long> row_to_col;
  double total = 0.0;  // summed over rows in ascending order
};
Assignment hungarian(const AffinityMatrix& values);

/// Index positions of k evenly spaced samples from a sequence of length n
/// (k clamped to n). k = 3, n = 9 gives {0, 4, 8}.
std::vector<std::size_t> even_sample_indices(std::size_t n, std::size_t k);

/// Mean dot product between `detection` and K evenly spaced tracklet embeddings.
double tracklet_affinity(const std::vector<Embedding>& tracklet, const Embedding& detection, std::size_t k);

AffinityMatrix build_cost_matrix(const std::vector<Embedding>& candidates,
                                 const std::vector<std::vector<Embedding>>& tracklets, std::size_t k);

struct AssociationResult {
  /// (candidate index, tracklet index)
  std::vector<std::pair<std::size_t, std::size_t>> recovered;
  /// Candidate indices left unassigned or gated out.
  std::vector<std::size_t> births;
};

/// Hungarian assignment over the cost matrix followed by the gate: a matched
/// pair with affinity < alpha is rejected and its candidate becomes a birth.
AssociationResult associate(const std::vector<Embedding>& candidates,
                            const std::vector<std::vector<Embedding>>& tracklets, double alpha, std::size_t k);

}  // namespace uma
