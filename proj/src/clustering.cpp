#include "anchorflow/clustering.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "anchorflow/random.hpp"

namespace anchorflow {

namespace {

constexpr int kMaxIterations = 100;
constexpr double kMoveTolerance = 1e-6;

double cluster_log_likelihood(double count, double scatter, double n_total) {
  const double variance = std::max(scatter / (2.0 * count), kVarianceFloor);
  return count * std::log(count / n_total) -
         count * std::log(2.0 * std::numbers::pi * variance) - scatter / (2.0 * variance);
}

int nearest_center(const Eigen::Vector2d& p, const std::vector<Eigen::Vector2d>& centers) {
  int best = 0;
  double best_d = (p - centers[0]).squaredNorm();
  for (int c = 1; c < static_cast<int>(centers.size()); ++c) {
    const double d = (p - centers[c]).squaredNorm();
    if (d < best_d) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

void refresh_statistics(FlowClustering& cl) {
  const int k = static_cast<int>(cl.clusters.size());
  std::vector<Eigen::Vector2d> sums(k, Eigen::Vector2d::Zero());
  std::vector<Index> counts(k, 0);
  for (Index i = 0; i < cl.size(); ++i) {
    sums[cl.assignment[i]] += cl.points.row(i).transpose();
    ++counts[cl.assignment[i]];
  }
  for (int c = 0; c < k; ++c) {
    cl.clusters[c].count = counts[c];
    cl.clusters[c].mean = counts[c] ? Eigen::Vector2d(sums[c] / double(counts[c]))
                                    : Eigen::Vector2d::Zero();
    cl.clusters[c].scatter = 0.0;
  }
  for (Index i = 0; i < cl.size(); ++i) {
    auto& c = cl.clusters[cl.assignment[i]];
    c.scatter += (cl.points.row(i).transpose() - c.mean).squaredNorm();
  }
  for (auto& c : cl.clusters)
    c.variance = c.count ? std::max(c.scatter / (2.0 * c.count), kVarianceFloor) : kVarianceFloor;
}

FlowClustering kmeans_flow(const DisplacementField& field, int k_init, std::uint64_t seed) {
  if (k_init < 1) fail(ErrorCode::kInvalidInput, "k_init must be >= 1");
  FlowClustering out;
  for (Index c = 0; c < field.cells(); ++c)
    if (field.valid[c]) out.cells.push_back(c);
  const Index n = out.size();
  out.points.resize(n, 2);
  for (Index i = 0; i < n; ++i) out.points.row(i) = field.displacement.row(out.cells[i]);
  if (n == 0) {
    out.k_lowered = true;
    return out;
  }
  int k = k_init;
  if (n < k) {
    k = static_cast<int>(n);
    out.k_lowered = true;
  }

  auto point = [&](Index i) -> Eigen::Vector2d { return out.points.row(i).transpose(); };

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<Eigen::Vector2d> centers{point(static_cast<Index>(rng.below(n)))};
  std::vector<double> d2(n);
  for (Index i = 0; i < n; ++i) d2[i] = (point(i) - centers[0]).squaredNorm();
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (total <= 0.0) break;  // every point already coincides with a center
    const double r = rng.uniform() * total;
    double cum = 0.0;
    Index pick = n - 1;
    for (Index i = 0; i < n; ++i) {
      cum += d2[i];
      if (cum > r && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(point(pick));
    for (Index i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (point(i) - centers.back()).squaredNorm());
  }

  // Lloyd iterations.
  out.assignment.assign(n, 0);
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    for (Index i = 0; i < n; ++i) out.assignment[i] = nearest_center(point(i), centers);

    std::vector<Eigen::Vector2d> sums(centers.size(), Eigen::Vector2d::Zero());
    std::vector<Index> counts(centers.size(), 0);
    for (Index i = 0; i < n; ++i) {
      sums[out.assignment[i]] += point(i);
      ++counts[out.assignment[i]];
    }
    std::vector<Eigen::Vector2d> next;
    double max_move = 0.0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (counts[c] == 0) {
        max_move = std::numeric_limits<double>::infinity();  // dropped: not converged
        continue;
      }
      const Eigen::Vector2d m = sums[c] / double(counts[c]);
      max_move = std::max(max_move, (m - centers[c]).norm());
      next.push_back(m);
    }
    centers = std::move(next);
    if (max_move < kMoveTolerance) break;
  }
  for (Index i = 0; i < n; ++i) out.assignment[i] = nearest_center(point(i), centers);

  // Compact ids so that only non-empty clusters remain.
  std::vector<Index> counts(centers.size(), 0);
  for (int a : out.assignment) ++counts[a];
  std::vector<int> remap(centers.size(), -1);
  int next_id = 0;
  for (std::size_t c = 0; c < centers.size(); ++c)
    if (counts[c] > 0) remap[c] = next_id++;
  for (int& a : out.assignment) a = remap[a];
  out.clusters.assign(next_id, FlowCluster{});
  refresh_statistics(out);
  return out;
}

double bic(const FlowClustering& cl) {
  const double n = static_cast<double>(cl.size());
  if (n == 0) return 0.0;
  double log_l = 0.0;
  for (const auto& c : cl.clusters)
    if (c.count > 0) log_l += cluster_log_likelihood(double(c.count), c.scatter, n);
  const double params = 4.0 * cl.k() - 1.0;
  return -2.0 * log_l + params * std::log(n);
}

FlowClustering bic_merge(const FlowClustering& clustering) {
  FlowClustering cl = clustering;
  if (cl.k() <= 1) return cl;
  const double n = static_cast<double>(cl.size());
  const double log_n = std::log(n);

  double current = bic(cl);
  while (cl.k() > 1) {
    int best_a = -1, best_b = -1;
    double best = current;
    for (int a = 0; a < cl.k(); ++a) {
      const auto& A = cl.clusters[a];
      const double la = cluster_log_likelihood(double(A.count), A.scatter, n);
      for (int b = a + 1; b < cl.k(); ++b) {
        const auto& B = cl.clusters[b];
        const double na = double(A.count), nb = double(B.count);
        const double merged_scatter =
            A.scatter + B.scatter + na * nb / (na + nb) * (A.mean - B.mean).squaredNorm();
        const double lb = cluster_log_likelihood(nb, B.scatter, n);
        const double lm = cluster_log_likelihood(na + nb, merged_scatter, n);
        const double candidate = current - 2.0 * (lm - la - lb) - 4.0 * log_n;
        if (candidate < best) {
          best = candidate;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (best_a < 0) break;
    for (int& id : cl.assignment) {
      if (id == best_b)
        id = best_a;
      else if (id > best_b)
        --id;
    }
    cl.clusters.erase(cl.clusters.begin() + best_b);
    refresh_statistics(cl);
    current = bic(cl);
  }
  return cl;
}

}  // namespace anchorflow
