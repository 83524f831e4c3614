//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/periodic_graph.h"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <json.hpp>

namespace mvcgt {
namespace {
  // Lengths closer than this (relative) are treated as ties so that the
  // rotation-induced round-off cannot reorder them.
  constexpr double kTieTol = 1e-9;
  constexpr double kIndependenceTol = 1e-10;
  constexpr double kRadiusGrowth = 1.5;

  bool nearly_equal(double a, double b) {
    return std::abs(a - b) <= kTieTol * (1.0 + std::max(a, b));
  }

  // Sorts by key length, then reorders runs of tied lengths with `tie_less`.
  template <class Item, class Len, class TieLess>
  void sort_with_ties(std::vector<Item> &items, Len len, TieLess tie_less) {
    std::sort(items.begin(), items.end(), [&](const Item &a, const Item &b) {
      return len(a) < len(b);
    });
    std::size_t begin = 0;
    while (begin < items.size()) {
      std::size_t end = begin + 1;
      while (end < items.size() && nearly_equal(len(items[end - 1]),
                                                len(items[end])))
        ++end;
      std::sort(items.begin() + begin, items.begin() + end, tie_less);
      begin = end;
    }
  }

  // Distance between the two lattice planes spanned by the other rows.
  std::array<double, 3> cell_widths(const Mat3 &lattice) {
    const double vol = std::abs(lattice.determinant());
    std::array<double, 3> w {};
    for (int k = 0; k < 3; ++k) {
      const Vec3 a = lattice.row((k + 1) % 3);
      const Vec3 b = lattice.row((k + 2) % 3);
      w[k] = vol / a.cross(b).norm();
    }
    return w;
  }

  std::array<int, 3> image_range(const std::array<double, 3> &widths,
                                 double radius, int extra) {
    std::array<int, 3> n {};
    for (int k = 0; k < 3; ++k)
      n[k] = static_cast<int>(std::ceil(radius / widths[k])) + extra;
    return n;
  }

  std::int64_t image_count(const std::array<int, 3> &n) {
    return std::int64_t { 2 * n[0] + 1 } * (2 * n[1] + 1) * (2 * n[2] + 1);
  }

  struct Candidate {
    int dst;
    std::array<int, 3> image;
    double distance;
    Vec3 vector;
  };
}  // namespace

double vector_angle(const Vec3 &a, const Vec3 &b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

std::array<Vec3, 3> reference_vectors(const Mat3 &lattice) {
  const double longest = std::max({ lattice.row(0).norm(),
                                    lattice.row(1).norm(),
                                    lattice.row(2).norm() });
  const auto widths = cell_widths(lattice);
  const auto n = image_range(widths, longest, 0);

  struct Translation {
    std::array<int, 3> k;
    Vec3 v;
    double len;
  };
  std::vector<Translation> cands;
  const double limit = longest * (1.0 + 2 * kTieTol) + kTieTol;
  for (int a = -n[0]; a <= n[0]; ++a)
    for (int b = -n[1]; b <= n[1]; ++b)
      for (int c = -n[2]; c <= n[2]; ++c) {
        if (a == 0 && b == 0 && c == 0)
          continue;
        const Vec3 v = (lattice.row(0) * a + lattice.row(1) * b
                        + lattice.row(2) * c)
                         .transpose();
        const double len = v.norm();
        if (len <= limit)
          cands.push_back({ { a, b, c }, v, len });
      }

  // Equal lengths: lexicographically larger offset first, so (1,0,0) wins
  // over (-1,0,0) and precedes (0,1,0).
  sort_with_ties(
    cands, [](const Translation &t) { return t.len; },
    [](const Translation &x, const Translation &y) { return x.k > y.k; });

  std::array<Vec3, 3> out;
  int found = 0;
  for (const auto &t: cands) {
    if (found == 0) {
      out[found++] = t.v;
    } else if (found == 1) {
      if (out[0].cross(t.v).norm() > kIndependenceTol * out[0].norm() * t.len)
        out[found++] = t.v;
    } else {
      Mat3 m;
      m.row(0) = out[0];
      m.row(1) = out[1];
      m.row(2) = t.v;
      const double scale = out[0].norm() * out[1].norm() * t.len;
      if (std::abs(m.determinant()) > kIndependenceTol * scale) {
        out[found++] = t.v;
        break;
      }
    }
  }
  if (found != 3)
    throw DataError("could not find three independent lattice translations");
  return out;
}

PeriodicGraph build_graph(const CrystalStructure &s,
                          const GraphOptions &opts) {
  if (!(opts.cutoff > 0.0))
    throw std::invalid_argument("cutoff radius must be positive");
  if (opts.max_neighbors < 1)
    throw std::invalid_argument("max_neighbors must be >= 1");

  PeriodicGraph g;
  g.structure = s;
  g.cutoff = opts.cutoff;

  const Mat3 &lattice = s.lattice();
  const Mat3 lt = lattice.transpose();
  const auto widths = cell_widths(lattice);
  const auto refs = reference_vectors(lattice);
  const int n_atoms = s.num_atoms();
  g.ref_vectors.assign(n_atoms, refs);
  g.node_radius.assign(n_atoms, opts.cutoff);

  const auto &frac = s.frac_coords();
  for (int i = 0; i < n_atoms; ++i) {
    double radius = opts.cutoff;
    std::vector<Candidate> cands;
    while (true) {
      // Fractional differences lie in (-1, 1), hence one extra image.
      const auto n = image_range(widths, radius, 1);
      if (image_count(n) * n_atoms > opts.image_budget)
        throw DataError("image budget exceeded (cutoff "
                        + std::to_string(radius) + " needs "
                        + std::to_string(image_count(n) * n_atoms)
                        + " candidate images)");
      for (int j = 0; j < n_atoms; ++j) {
        const Vec3 df = frac[j] - frac[i];
        for (int a = -n[0]; a <= n[0]; ++a)
          for (int b = -n[1]; b <= n[1]; ++b)
            for (int c = -n[2]; c <= n[2]; ++c) {
              if (j == i && a == 0 && b == 0 && c == 0)
                continue;
              const Vec3 v = lt * (df + Vec3(a, b, c));
              const double d = v.norm();
              if (d <= radius)
                cands.push_back({ j, { a, b, c }, d, v });
            }
      }
      if (!cands.empty())
        break;
      radius *= kRadiusGrowth;
    }
    g.node_radius[i] = radius;

    sort_with_ties(
      cands, [](const Candidate &c) { return c.distance; },
      [](const Candidate &x, const Candidate &y) {
        return std::tie(x.dst, x.image) < std::tie(y.dst, y.image);
      });
    if (static_cast<int>(cands.size()) > opts.max_neighbors)
      cands.resize(opts.max_neighbors);

    for (const auto &c: cands) {
      PeriodicEdge e;
      e.src = i;
      e.dst = c.dst;
      e.image = c.image;
      e.distance = c.distance;
      e.vector = c.vector;
      for (int k = 0; k < 3; ++k)
        e.angles[k] = vector_angle(c.vector, refs[k]);
      g.edges.push_back(e);
    }
  }
  return g;
}

std::vector<InvariantEdge> invariant_view(const PeriodicGraph &g) {
  std::vector<InvariantEdge> out;
  out.reserve(g.edges.size());
  for (const auto &e: g.edges)
    out.push_back({ e.distance, e.angles });
  return out;
}

std::vector<EquivariantEdge> equivariant_view(const PeriodicGraph &g) {
  std::vector<EquivariantEdge> out;
  out.reserve(g.edges.size());
  for (const auto &e: g.edges)
    out.push_back({ e.distance, e.vector });
  return out;
}

std::string graph_to_json(const PeriodicGraph &g) {
  using nlohmann::json;
  auto vec = [](const Vec3 &v) { return json::array({ v.x(), v.y(), v.z() }); };
  json j;
  j["cutoff"] = g.cutoff;
  auto &nodes = j["nodes"] = json::array();
  for (int i = 0; i < g.num_nodes(); ++i) {
    json refs = json::array();
    for (const Vec3 &r: g.ref_vectors[i])
      refs.push_back(vec(r));
    nodes.push_back({ { "index", i },
                      { "species", g.structure.species()[i] },
                      { "frac", vec(g.structure.frac_coords()[i]) },
                      { "radius", g.node_radius[i] },
                      { "ref_vectors", refs } });
  }
  auto &edges = j["edges"] = json::array();
  for (const auto &e: g.edges) {
    edges.push_back({ { "src", e.src },
                      { "dst", e.dst },
                      { "image", e.image },
                      { "distance", e.distance },
                      { "angles", e.angles },
                      { "vector", vec(e.vector) } });
  }
  return j.dump();
}

}  // namespace mvcgt
