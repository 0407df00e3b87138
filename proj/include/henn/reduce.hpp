#pragma once

// Projections of a layer to the plane, used by the Delaunay layer graph.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "henn/core.hpp"
#include "henn/delaunay.hpp"
#include "henn/random.hpp"

namespace henn {

enum class Reducer : std::uint8_t { PCA = 0, RandomProjection = 1 };

inline const char* reducer_name(Reducer r) { return r == Reducer::PCA ? "pca" : "rp"; }

/// Projects the rows `ids` onto their top two principal axes.
inline std::vector<Point2> reduce_pca(const PointSet& ps, std::span<const Id> ids) {
  const auto d = static_cast<Eigen::Index>(ps.dim());
  const auto n = static_cast<Eigen::Index>(ids.size());
  std::vector<Point2> out(ids.size());
  if (n == 0) return out;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (Id id : ids) mean += Eigen::Map<const Eigen::VectorXf>(ps[id].data(), d).cast<double>();
  mean /= static_cast<double>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (Id id : ids) {
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXf>(ps[id].data(), d).cast<double>() - mean;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(x);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascending; a 1-d input has a single axis and projects to a line.
  Eigen::VectorXd ax = eig.eigenvectors().col(d - 1);
  Eigen::VectorXd ay = d > 1 ? Eigen::VectorXd(eig.eigenvectors().col(d - 2)) : Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x =
        Eigen::Map<const Eigen::VectorXf>(ps[ids[static_cast<std::size_t>(i)]].data(), d).cast<double>() - mean;
    out[static_cast<std::size_t>(i)] = {ax.dot(x), ay.dot(x)};
  }
  return out;
}

/// Johnson-Lindenstrauss style projection with N(0, 1/2) entries.
inline std::vector<Point2> reduce_random_projection(const PointSet& ps, std::span<const Id> ids, Rng& rng) {
  const std::size_t d = ps.dim();
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(2.0));
  std::vector<double> px(d), py(d);
  for (auto& v : px) v = gauss(rng);
  for (auto& v : py) v = gauss(rng);
  std::vector<Point2> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto row = ps[ids[i]];
    double x = 0.0, y = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      x += px[j] * row[j];
      y += py[j] * row[j];
    }
    out[i] = {x, y};
  }
  return out;
}

}  // namespace henn
