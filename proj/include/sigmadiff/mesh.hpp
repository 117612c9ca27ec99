#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "sigmadiff/util.hpp"

namespace sigmadiff {

/// Computational domain. The origin (the zero of sigma) must lie strictly
/// inside disk and truncated_plane domains; the annulus excises a ball
/// around it.
struct DomainSpec {
  enum class Kind { disk, annulus, truncated_plane };

  Kind kind = Kind::disk;
  double radius = 1.0;        // outer radius
  double inner_radius = 0.0;  // annulus only
  Eigen::Vector2d center = Eigen::Vector2d::Zero();

  static DomainSpec disk(double radius,
                         const Eigen::Vector2d& center = Eigen::Vector2d::Zero()) {
    return {Kind::disk, radius, 0.0, center};
  }
  static DomainSpec annulus(double outer_radius, double inner_radius) {
    return {Kind::annulus, outer_radius, inner_radius, Eigen::Vector2d::Zero()};
  }
  static DomainSpec truncated_plane(
      double outer_radius,
      const Eigen::Vector2d& center = Eigen::Vector2d::Zero()) {
    return {Kind::truncated_plane, outer_radius, 0.0, center};
  }

  bool models_unbounded() const { return kind == Kind::truncated_plane; }

  void validate() const {
    if (!(radius > 0.0))
      throw ValidationError("domain: radius must be positive");
    switch (kind) {
      case Kind::disk:
      case Kind::truncated_plane:
        // Origin strictly inside; the cap keeps the origin-vertex snap from
        // degrading mesh quality.
        if (!(center.norm() < 0.5 * radius))
          throw ValidationError(
              "domain: origin must lie well inside the domain "
              "(|center| < radius/2)");
        break;
      case Kind::annulus:
        if (!(inner_radius > 0.0 && inner_radius < radius))
          throw ValidationError(
              "domain: annulus requires 0 < inner_radius < outer_radius");
        if (center.norm() > 1e-15 * radius)
          throw ValidationError(
              "domain: annulus is concentric with the excised ball; center "
              "must be the origin");
        break;
    }
  }
};

/// Conforming triangulation with per-vertex boundary flags. Immutable after
/// construction; safe to share across threads.
struct Mesh {
  DomainSpec spec;
  int level = 0;
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::uint8_t> boundary_flags;
  double h = 0.0;                       // max edge length
  std::vector<double> origin_distance;  // |x| per vertex

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
};

using MeshPtr = std::shared_ptr<const Mesh>;

inline double triangle_signed_area(const Eigen::Vector2d& a,
                                   const Eigen::Vector2d& b,
                                   const Eigen::Vector2d& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) -
                (b.y() - a.y()) * (c.x() - a.x()));
}

inline double triangle_area(const Mesh& m, int t) {
  const auto& tri = m.triangles[t];
  return triangle_signed_area(m.vertices[tri[0]], m.vertices[tri[1]],
                              m.vertices[tri[2]]);
}

inline double mesh_area(const Mesh& m) {
  double a = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) a += triangle_area(m, t);
  return a;
}

namespace detail {

inline void finalize_mesh(Mesh& m) {
  for (auto& tri : m.triangles) {
    if (triangle_signed_area(m.vertices[tri[0]], m.vertices[tri[1]],
                             m.vertices[tri[2]]) < 0.0)
      std::swap(tri[1], tri[2]);
  }
  double hmax = 0.0;
  for (const auto& tri : m.triangles)
    for (int e = 0; e < 3; ++e)
      hmax = std::max(hmax, (m.vertices[tri[e]] - m.vertices[tri[(e + 1) % 3]])
                                .norm());
  m.h = hmax;
  m.origin_distance.resize(m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    m.origin_distance[i] = m.vertices[i].norm();
}

/// Counts how many triangles reference each undirected edge.
inline std::map<std::pair<int, int>, int> edge_counts(const Mesh& m) {
  std::map<std::pair<int, int>, int> counts;
  for (const auto& tri : m.triangles)
    for (int e = 0; e < 3; ++e) {
      int a = tri[e], b = tri[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++counts[{a, b}];
    }
  return counts;
}

/// Structured disk triangulation: one center vertex, concentric rings with
/// 6i vertices on ring i. Cells stay close to equilateral at every radius.
inline Mesh structured_disk(const DomainSpec& spec, int rings) {
  Mesh m;
  m.spec = spec;
  const double R = spec.radius;
  const Eigen::Vector2d c = spec.center;

  m.vertices.push_back(c);
  m.boundary_flags.push_back(0);
  std::vector<int> ring_start(rings + 1, 0);
  for (int i = 1; i <= rings; ++i) {
    ring_start[i] = m.num_vertices();
    const int n = 6 * i;
    const double r = R * static_cast<double>(i) / rings;
    for (int j = 0; j < n; ++j) {
      const double th = 2.0 * std::numbers::pi * j / n;
      m.vertices.push_back(c + r * Eigen::Vector2d(std::cos(th), std::sin(th)));
      m.boundary_flags.push_back(i == rings ? 1 : 0);
    }
  }

  for (int i = 1; i <= rings; ++i) {
    const int ni = 6 * i, no = 6 * (i - 1);
    auto outer = [&](int j) { return ring_start[i] + ((j % ni) + ni) % ni; };
    auto inner = [&](int j) {
      return i == 1 ? 0 : ring_start[i - 1] + ((j % no) + no) % no;
    };
    for (int s = 0; s < 6; ++s) {
      for (int t = 0; t < i; ++t) {
        const int b0 = outer(s * i + t), b1 = outer(s * i + t + 1);
        const int a0 = inner(s * (i - 1) + t);
        m.triangles.push_back({a0, b0, b1});
        if (t + 1 < i) {
          const int a1 = inner(s * (i - 1) + t + 1);
          m.triangles.push_back({a0, b1, a1});
        }
      }
    }
  }
  finalize_mesh(m);
  return m;
}

/// Annulus triangulation on a polar grid with geometrically graded radial
/// layers, keeping the cell aspect ratio uniform down to the inner circle.
inline Mesh structured_annulus(const DomainSpec& spec, int n_theta) {
  Mesh m;
  m.spec = spec;
  const double r0 = spec.inner_radius, r1 = spec.radius;
  const double arc = 2.0 * std::numbers::pi / n_theta;
  const int layers = std::max(
      1, static_cast<int>(std::ceil(std::log(r1 / r0) / std::log1p(arc))));

  for (int i = 0; i <= layers; ++i) {
    const double r = r0 * std::pow(r1 / r0, static_cast<double>(i) / layers);
    for (int j = 0; j < n_theta; ++j) {
      const double th = 2.0 * std::numbers::pi * j / n_theta;
      m.vertices.push_back(r * Eigen::Vector2d(std::cos(th), std::sin(th)));
      m.boundary_flags.push_back(i == 0 || i == layers ? 1 : 0);
    }
  }
  auto vid = [&](int i, int j) { return i * n_theta + ((j % n_theta) + n_theta) % n_theta; };
  for (int i = 0; i < layers; ++i)
    for (int j = 0; j < n_theta; ++j) {
      m.triangles.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      m.triangles.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  finalize_mesh(m);
  return m;
}

}  // namespace detail

/// Uniform quadrisection. Midpoints of boundary edges are projected back to
/// the circular boundary, so the polygonal domain converges to the circle.
/// Interior edges halve exactly; children touching a projected vertex can
/// exceed h/2 by the chord sagitta, giving h(new) <= h(old)/2 (1 + O(h)).
inline Mesh refine(const Mesh& parent) {
  Mesh m;
  m.spec = parent.spec;
  m.level = parent.level + 1;
  m.vertices = parent.vertices;
  m.boundary_flags = parent.boundary_flags;

  const auto counts = detail::edge_counts(parent);
  const double split_radius =
      parent.spec.kind == DomainSpec::Kind::annulus
          ? 0.5 * (parent.spec.inner_radius + parent.spec.radius)
          : 0.0;

  std::map<std::pair<int, int>, int> midpoint;
  auto mid_id = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    auto it = midpoint.find({a, b});
    if (it != midpoint.end()) return it->second;
    Eigen::Vector2d p = 0.5 * (parent.vertices[a] + parent.vertices[b]);
    const bool on_boundary = counts.at({a, b}) == 1;
    if (on_boundary) {
      if (parent.spec.kind == DomainSpec::Kind::annulus) {
        const double target = p.norm() < split_radius ? parent.spec.inner_radius
                                                      : parent.spec.radius;
        p *= target / p.norm();
      } else {
        const Eigen::Vector2d d = p - parent.spec.center;
        p = parent.spec.center + d * (parent.spec.radius / d.norm());
      }
    }
    const int id = m.num_vertices();
    m.vertices.push_back(p);
    m.boundary_flags.push_back(on_boundary ? 1 : 0);
    midpoint[{a, b}] = id;
    return id;
  };

  m.triangles.reserve(parent.triangles.size() * 4);
  for (const auto& tri : parent.triangles) {
    const int v0 = tri[0], v1 = tri[1], v2 = tri[2];
    const int m01 = mid_id(v0, v1), m12 = mid_id(v1, v2), m02 = mid_id(v0, v2);
    m.triangles.push_back({v0, m01, m02});
    m.triangles.push_back({v1, m12, m01});
    m.triangles.push_back({v2, m02, m12});
    m.triangles.push_back({m01, m12, m02});
  }
  detail::finalize_mesh(m);
  return m;
}

/// Builds the base triangulation for `spec` and refines it `level` times.
/// Deterministic: identical inputs give identical vertex/triangle arrays.
inline Mesh build_mesh(const DomainSpec& spec, int level) {
  spec.validate();
  if (level < 0 || level > 10)
    throw ValidationError("build_mesh: refinement level must be in [0,10]");

  Mesh m;
  switch (spec.kind) {
    case DomainSpec::Kind::disk:
      m = detail::structured_disk(spec, 2);
      break;
    case DomainSpec::Kind::truncated_plane: {
      // Ring count grows with the radius so the resolution near the origin
      // (where the eigenfunctions concentrate) is radius-independent.
      const int rings = std::max(2, static_cast<int>(std::ceil(spec.radius)));
      m = detail::structured_disk(spec, rings);
      break;
    }
    case DomainSpec::Kind::annulus:
      m = detail::structured_annulus(spec, 16);
      break;
  }

  // sigma(0) = 0 must sit at a vertex: snap the nearest vertex when the
  // domain is not centered at the origin.
  if (spec.kind != DomainSpec::Kind::annulus && spec.center.norm() > 0.0) {
    int best = 0;
    double dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m.num_vertices(); ++i) {
      const double d = m.vertices[i].norm();
      if (d < dist && !m.boundary_flags[i]) {
        dist = d;
        best = i;
      }
    }
    m.vertices[best].setZero();
    detail::finalize_mesh(m);
    for (int t = 0; t < m.num_triangles(); ++t)
      if (triangle_area(m, t) <= 0.0)
        throw ValidationError(
            "build_mesh: off-center domain degenerated a cell while pinning "
            "the origin vertex; reduce |center| or refine the base mesh");
  }

  for (int l = 0; l < level; ++l) m = refine(m);
  m.level = level;
  return m;
}

/// One mesh per truncation radius, all at the same refinement level, so
/// eigenvalue comparisons across the family isolate the truncation effect.
/// A disk base yields inner truncations (annuli, radii strictly decreasing);
/// a truncated_plane base yields outer truncations (radii strictly
/// increasing).
inline std::vector<Mesh> truncation_family(const DomainSpec& spec_base,
                                           const std::vector<double>& radii,
                                           int level) {
  spec_base.validate();
  if (radii.empty()) throw ValidationError("truncation_family: empty radii");

  std::vector<Mesh> family;
  family.reserve(radii.size());
  if (spec_base.kind == DomainSpec::Kind::disk) {
    for (std::size_t i = 0; i + 1 < radii.size(); ++i)
      if (!(radii[i] > radii[i + 1]))
        throw ValidationError(
            "truncation_family: inner radii must be strictly decreasing");
    for (double r : radii)
      family.push_back(build_mesh(DomainSpec::annulus(spec_base.radius, r), level));
  } else if (spec_base.kind == DomainSpec::Kind::truncated_plane) {
    for (std::size_t i = 0; i + 1 < radii.size(); ++i)
      if (!(radii[i] < radii[i + 1]))
        throw ValidationError(
            "truncation_family: outer radii must be strictly increasing");
    for (double R : radii)
      family.push_back(
          build_mesh(DomainSpec::truncated_plane(R, spec_base.center), level));
  } else {
    throw ValidationError(
        "truncation_family: base domain must be disk (inner family) or "
        "truncated_plane (outer family)");
  }
  return family;
}

inline MeshPtr make_mesh(const DomainSpec& spec, int level) {
  return std::make_shared<const Mesh>(build_mesh(spec, level));
}

}  // namespace sigmadiff
