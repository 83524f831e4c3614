//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_BATCH_H_
#define MVCGT_BATCH_H_

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mvcgt/featurization.h"
#include "mvcgt/periodic_graph.h"
#include "mvcgt/tensor.h"

namespace mvcgt {

struct FeaturizerOptions {
  GraphOptions graph;
  int distance_rbf = 64;
  int angle_rbf = 64;
  int l_max = 2;

  // Distance centers on [0, cutoff], angle centers on [-1, 1].
  RbfSpec distance_spec() const;
  RbfSpec angle_spec() const;
  // RBF of one reference-vector length plus the six frame scalars.
  int lattice_dim() const { return distance_rbf + 6; }
};

// Everything the encoders read from one structure, in double precision.
struct GraphFeatures {
  std::string id;
  int num_nodes = 0;
  std::vector<int> src, dst;
  std::vector<double> distances;
  std::vector<std::array<double, 3>> angles;

  FeatureMatrix atoms;                    // N x A
  // Row m describes reference vector m of the cell: RBF of its length,
  // then the three lengths and the three pairwise cosines.
  FeatureMatrix lattice;                  // 3 x (K + 6)
  FeatureMatrix distance_rbf;             // E x K, invariant view
  std::array<FeatureMatrix, 3> angle_rbf; // E x K each
  FeatureMatrix so3_distance_rbf;         // E x K, equivariant view
  FeatureMatrix harmonics;                // E x (l_max + 1)^2

  int num_edges() const { return static_cast<int>(src.size()); }
};

GraphFeatures featurize(const PeriodicGraph &g, const AtomTable &table,
                        const FeaturizerOptions &opts);

// Recomputes the angle embeddings of the invariant view.
void set_angles(GraphFeatures &f,
                std::span<const std::array<double, 3>> angles,
                const RbfSpec &angle_spec);
// Recomputes the distance embedding of the equivariant view. Directions
// (and hence the harmonics) are unchanged.
void set_so3_distances(GraphFeatures &f, std::span<const double> distances,
                       const RbfSpec &distance_spec);

// Disjoint union of several graphs as model-ready tensors.
template <class T>
struct ModelInputs {
  int num_graphs = 0;
  int num_nodes = 0;
  int num_edges = 0;
  std::vector<int> src, dst;        // global node indices per edge
  std::vector<int> node_graph;      // graph of every node
  std::vector<int> edge_graph;      // graph of every edge
  std::vector<int> node_offset;     // size num_graphs + 1
  std::vector<int> edge_offset;     // size num_graphs + 1

  Tensor<T> atoms;
  std::array<Tensor<T>, 3> lattice;  // N x (K + 6), one per channel
  Tensor<T> distance_rbf;
  std::array<Tensor<T>, 3> angle_rbf;
  Tensor<T> so3_distance_rbf;
  Tensor<T> harmonics;
  int l_max = 0;
};

template <class T>
ModelInputs<T> make_inputs(std::span<const GraphFeatures *const> graphs);

template <class T>
ModelInputs<T> make_inputs(const GraphFeatures &graph) {
  const GraphFeatures *one[] = { &graph };
  return make_inputs<T>(std::span<const GraphFeatures *const>(one));
}

}  // namespace mvcgt

#endif  // MVCGT_BATCH_H_
