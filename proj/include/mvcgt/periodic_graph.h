//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_PERIODIC_GRAPH_H_
#define MVCGT_PERIODIC_GRAPH_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mvcgt/structures.h"

namespace mvcgt {

struct GraphOptions {
  double cutoff = 8.0;
  int max_neighbors = 25;
  // Hard cap on (atom pair x image) candidates examined per node.
  std::int64_t image_budget = 4'000'000;
};

// Directed edge src -> periodic image of dst at offset `image`.
struct PeriodicEdge {
  int src = 0;
  int dst = 0;
  std::array<int, 3> image { 0, 0, 0 };
  double distance = 0.0;
  // x_dst + image * L - x_src
  Vec3 vector = Vec3::Zero();
  // Angles in [0, pi] against the src node's three reference vectors.
  std::array<double, 3> angles { 0.0, 0.0, 0.0 };
};

struct PeriodicGraph {
  CrystalStructure structure;
  // Grouped by src in ascending order; within a node sorted by
  // (distance, dst, image).
  std::vector<PeriodicEdge> edges;
  std::vector<std::array<Vec3, 3>> ref_vectors;
  // Radius actually used per node (larger than the cutoff for isolated
  // atoms).
  std::vector<double> node_radius;
  double cutoff = 0.0;

  int num_nodes() const { return structure.num_atoms(); }
  int num_edges() const { return static_cast<int>(edges.size()); }
};

PeriodicGraph build_graph(const CrystalStructure &s,
                          const GraphOptions &opts = {});

// Three shortest linearly independent lattice translations k * L.
std::array<Vec3, 3> reference_vectors(const Mat3 &lattice);

// Angle between two nonzero vectors, accurate near 0 and pi.
double vector_angle(const Vec3 &a, const Vec3 &b);

struct InvariantEdge {
  double distance;
  std::array<double, 3> angles;
};

struct EquivariantEdge {
  double distance;
  Vec3 vector;
};

std::vector<InvariantEdge> invariant_view(const PeriodicGraph &g);
std::vector<EquivariantEdge> equivariant_view(const PeriodicGraph &g);

// Debug dump: nodes, ref_vectors and edge records.
std::string graph_to_json(const PeriodicGraph &g);

}  // namespace mvcgt

#endif  // MVCGT_PERIODIC_GRAPH_H_
