#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "sigmadiff/assembly.hpp"
#include "sigmadiff/mesh.hpp"

namespace sigmadiff {

/// Uniform-grid point locator with clamped-barycentric fallback for points
/// that miss the polygonal mesh by a boundary-approximation sliver.
class PointLocator {
public:
  struct Hit {
    int triangle = -1;
    std::array<double, 3> bary{0.0, 0.0, 0.0};  // clamped to the triangle
    double distance = 0.0;                      // 0 when inside
  };

  explicit PointLocator(MeshPtr mesh) : mesh_(std::move(mesh)) {
    const Mesh& m = *mesh_;
    lo_ = hi_ = m.vertices[0];
    for (const auto& v : m.vertices) {
      lo_ = lo_.cwiseMin(v);
      hi_ = hi_.cwiseMax(v);
    }
    n_ = std::max(1, static_cast<int>(std::sqrt(m.num_triangles() / 2.0)));
    cells_.resize(static_cast<std::size_t>(n_) * n_);
    for (int t = 0; t < m.num_triangles(); ++t) {
      Eigen::Vector2d tlo = m.vertices[m.triangles[t][0]];
      Eigen::Vector2d thi = tlo;
      for (int k = 1; k < 3; ++k) {
        tlo = tlo.cwiseMin(m.vertices[m.triangles[t][k]]);
        thi = thi.cwiseMax(m.vertices[m.triangles[t][k]]);
      }
      const auto [i0, j0] = cell_of(tlo);
      const auto [i1, j1] = cell_of(thi);
      for (int i = i0; i <= i1; ++i)
        for (int j = j0; j <= j1; ++j)
          cells_[static_cast<std::size_t>(i) * n_ + j].push_back(t);
    }
  }

  Hit locate(const Eigen::Vector2d& x) const {
    const Mesh& m = *mesh_;
    Hit best;
    best.distance = std::numeric_limits<double>::infinity();

    auto consider = [&](int t) {
      const auto& tri = m.triangles[t];
      const Eigen::Vector2d& a = m.vertices[tri[0]];
      const Eigen::Vector2d& b = m.vertices[tri[1]];
      const Eigen::Vector2d& c = m.vertices[tri[2]];
      const double total = triangle_signed_area(a, b, c);
      std::array<double, 3> l{triangle_signed_area(x, b, c) / total,
                              triangle_signed_area(a, x, c) / total,
                              triangle_signed_area(a, b, x) / total};
      const double min_l = std::min({l[0], l[1], l[2]});
      if (min_l >= -1e-13) {
        best = Hit{t, l, 0.0};
        return true;
      }
      const auto [p, bary] = closest_point(a, b, c, x);
      const double d = (p - x).norm();
      if (d < best.distance) best = Hit{t, bary, d};
      return false;
    };

    const auto [ci, cj] = cell_of(x);
    for (int ring = 0; ring <= n_; ++ring) {
      bool any = false;
      for (int i = std::max(0, ci - ring); i <= std::min(n_ - 1, ci + ring); ++i)
        for (int j = std::max(0, cj - ring); j <= std::min(n_ - 1, cj + ring);
             ++j) {
          if (ring > 0 && std::abs(i - ci) != ring && std::abs(j - cj) != ring)
            continue;
          any = true;
          for (int t : cells_[static_cast<std::size_t>(i) * n_ + j])
            if (consider(t)) return best;
        }
      // A strict hit ends the search above; one extra ring is enough for the
      // clamped fallback since slivers are thinner than a grid cell.
      if (best.triangle >= 0 && ring >= 1) break;
      if (!any && ring > 0) break;
    }
    return best;
  }

private:
  std::pair<int, int> cell_of(const Eigen::Vector2d& x) const {
    const Eigen::Vector2d span = hi_ - lo_;
    int i = static_cast<int>((x.x() - lo_.x()) / std::max(span.x(), 1e-300) * n_);
    int j = static_cast<int>((x.y() - lo_.y()) / std::max(span.y(), 1e-300) * n_);
    return {std::clamp(i, 0, n_ - 1), std::clamp(j, 0, n_ - 1)};
  }

  static std::pair<Eigen::Vector2d, std::array<double, 3>> closest_point(
      const Eigen::Vector2d& a, const Eigen::Vector2d& b,
      const Eigen::Vector2d& c, const Eigen::Vector2d& x) {
    const std::array<const Eigen::Vector2d*, 3> v{&a, &b, &c};
    Eigen::Vector2d best_p = a;
    std::array<double, 3> best_l{1.0, 0.0, 0.0};
    double best_d = std::numeric_limits<double>::infinity();
    for (int e = 0; e < 3; ++e) {
      const Eigen::Vector2d& p = *v[e];
      const Eigen::Vector2d& q = *v[(e + 1) % 3];
      const Eigen::Vector2d d = q - p;
      const double s =
          std::clamp(d.dot(x - p) / std::max(d.squaredNorm(), 1e-300), 0.0, 1.0);
      const Eigen::Vector2d proj = p + s * d;
      const double dist = (proj - x).norm();
      if (dist < best_d) {
        best_d = dist;
        best_p = proj;
        best_l = {0.0, 0.0, 0.0};
        best_l[e] = 1.0 - s;
        best_l[(e + 1) % 3] = s;
      }
    }
    return {best_p, best_l};
  }

  MeshPtr mesh_;
  Eigen::Vector2d lo_, hi_;
  int n_ = 1;
  std::vector<std::vector<int>> cells_;
};

/// Nodal value of f at x; zero when x misses the mesh by more than
/// `miss_tol` (extension by zero outside the support).
inline double interpolate_value(const Field& f, const PointLocator& loc,
                                const Eigen::Vector2d& x, double miss_tol) {
  const auto hit = loc.locate(x);
  if (hit.triangle < 0 || hit.distance > miss_tol) return 0.0;
  const auto& tri = f.mesh->triangles[hit.triangle];
  return hit.bary[0] * f.values[tri[0]] + hit.bary[1] * f.values[tri[1]] +
         hit.bary[2] * f.values[tri[2]];
}

/// Transfers f onto the target mesh by point location and barycentric
/// interpolation; target vertices outside the source mesh receive zero.
/// The miss tolerance absorbs the O(h^2) polygonal boundary gap between
/// non-nested meshes.
inline Field transfer(const Field& f, MeshPtr target) {
  const PointLocator loc(f.mesh);
  const double miss_tol = 0.26 * f.mesh->h * f.mesh->h + 1e-12;
  Field out = Field::zero(std::move(target));
  for (int i = 0; i < out.mesh->num_vertices(); ++i)
    out.values[i] = interpolate_value(f, loc, out.mesh->vertices[i], miss_tol);
  return out;
}

/// Extension by zero of a truncated-domain eigenfunction or solution onto a
/// containing mesh.
inline Field extend_by_zero(const Field& f, MeshPtr containing) {
  return transfer(f, std::move(containing));
}

}  // namespace sigmadiff
