#include "uma/association.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "uma/errors.hpp"

namespace uma {

namespace {

// Minimum-cost assignment for n <= m with potentials (shortest augmenting
// paths). cost is n x m, row-major. Returns column per row.
std::vector<long> min_cost_assignment(const std::vector<double>& cost, std::size_t n, std::size_t m) {
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<long> row_to_col(n, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = static_cast<long>(j - 1);
  }
  return row_to_col;
}

double dot(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) {
    throw DimensionError("embedding sizes differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Assignment hungarian(const AffinityMatrix& values) {
  for (std::size_t i = 0; i < values.values.size(); ++i) {
    if (!std::isfinite(values.values[i])) {
      throw ContractError("hungarian: non-finite entry at (" + std::to_string(i / values.cols) + ", " +
                          std::to_string(i % values.cols) + ")");
    }
  }
  Assignment out;
  out.row_to_col.assign(values.rows, -1);
  if (values.rows == 0 || values.cols == 0) return out;

  const bool transpose = values.rows > values.cols;
  const std::size_t n = transpose ? values.cols : values.rows;
  const std::size_t m = transpose ? values.rows : values.cols;
  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = -(transpose ? values(j, i) : values(i, j));
  }
  const auto assigned = min_cost_assignment(cost, n, m);
  for (std::size_t i = 0; i < n; ++i) {
    if (assigned[i] < 0) continue;
    if (transpose) {
      out.row_to_col[static_cast<std::size_t>(assigned[i])] = static_cast<long>(i);
    } else {
      out.row_to_col[i] = assigned[i];
    }
  }
  for (std::size_t r = 0; r < values.rows; ++r) {
    if (out.row_to_col[r] >= 0) out.total += values(r, static_cast<std::size_t>(out.row_to_col[r]));
  }
  return out;
}

std::vector<std::size_t> even_sample_indices(std::size_t n, std::size_t k) {
  if (k == 0) throw ContractError("even_sample_indices: k must be >= 1");
  k = std::min(k, n);
  std::vector<std::size_t> idx;
  if (k == 0) return idx;
  if (k == 1) return {n - 1};
  for (std::size_t s = 0; s < k; ++s) {
    // round(s * (n - 1) / (k - 1)) in integer arithmetic
    idx.push_back((2 * s * (n - 1) + (k - 1)) / (2 * (k - 1)));
  }
  return idx;
}

double tracklet_affinity(const std::vector<Embedding>& tracklet, const Embedding& detection, std::size_t k) {
  if (tracklet.empty()) throw ContractError("tracklet_affinity: empty tracklet");
  const auto idx = even_sample_indices(tracklet.size(), k);
  double sum = 0;
  for (auto i : idx) sum += dot(detection, tracklet[i]);
  return sum / static_cast<double>(idx.size());
}

AffinityMatrix build_cost_matrix(const std::vector<Embedding>& candidates,
                                 const std::vector<std::vector<Embedding>>& tracklets, std::size_t k) {
  AffinityMatrix c(candidates.size(), tracklets.size());
  for (std::size_t d = 0; d < candidates.size(); ++d) {
    for (std::size_t t = 0; t < tracklets.size(); ++t) c(d, t) = tracklet_affinity(tracklets[t], candidates[d], k);
  }
  return c;
}

AssociationResult associate(const std::vector<Embedding>& candidates,
                            const std::vector<std::vector<Embedding>>& tracklets, double alpha, std::size_t k) {
  AssociationResult result;
  const auto c = build_cost_matrix(candidates, tracklets, k);
  const auto assignment = hungarian(c);
  for (std::size_t d = 0; d < candidates.size(); ++d) {
    const long t = assignment.row_to_col[d];
    if (t >= 0 && !(c(d, static_cast<std::size_t>(t)) < alpha)) {
      result.recovered.emplace_back(d, static_cast<std::size_t>(t));
    } else {
      result.births.push_back(d);
    }
  }
  return result;
}

}  // namespace uma
