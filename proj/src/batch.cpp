//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/batch.h"

#include <cmath>
#include <stdexcept>

#include "mvcgt/spherical.h"

namespace mvcgt {
namespace {
  template <class T>
  Tensor<T> stack_rows(const std::vector<const FeatureMatrix *> &parts,
                       int cols) {
    std::size_t rows = 0;
    for (const auto *m: parts)
      rows += static_cast<std::size_t>(m->rows());
    std::vector<T> data;
    data.reserve(rows * cols);
    for (const auto *m: parts) {
      if (m->rows() > 0 && m->cols() != cols)
        throw ShapeError("feature width mismatch in batch: "
                         + std::to_string(m->cols()) + " vs "
                         + std::to_string(cols));
      for (Eigen::Index k = 0; k < m->size(); ++k)
        data.push_back(static_cast<T>(m->data()[k]));
    }
    return Tensor<T>::from_data({ static_cast<int>(rows), cols },
                                std::move(data));
  }
}  // namespace

RbfSpec FeaturizerOptions::distance_spec() const {
  return RbfSpec::uniform(0.0, graph.cutoff, distance_rbf);
}

RbfSpec FeaturizerOptions::angle_spec() const {
  return RbfSpec::uniform(-1.0, 1.0, angle_rbf);
}

GraphFeatures featurize(const PeriodicGraph &g, const AtomTable &table,
                        const FeaturizerOptions &opts) {
  const RbfSpec dspec = opts.distance_spec();
  const RbfSpec aspec = opts.angle_spec();

  GraphFeatures f;
  f.num_nodes = g.num_nodes();
  const int e_count = g.num_edges();
  f.src.reserve(e_count);
  f.dst.reserve(e_count);
  for (const auto &e: g.edges) {
    f.src.push_back(e.src);
    f.dst.push_back(e.dst);
    f.distances.push_back(e.distance);
    f.angles.push_back(e.angles);
  }

  f.atoms = embed_atoms(g.structure.species(), table);
  f.distance_rbf = embed_edges(f.distances, dspec);
  f.so3_distance_rbf = f.distance_rbf;
  f.angle_rbf = embed_angles(f.angles, aspec);

  // The reference frame is shared by all atoms of the cell.
  const auto &refs = g.ref_vectors.front();
  const double len[3] = { refs[0].norm(), refs[1].norm(), refs[2].norm() };
  const double cosines[3] = {
    refs[0].dot(refs[1]) / (len[0] * len[1]),
    refs[0].dot(refs[2]) / (len[0] * len[2]),
    refs[1].dot(refs[2]) / (len[1] * len[2]),
  };
  const int k = dspec.size();
  f.lattice.resize(3, k + 6);
  for (int m = 0; m < 3; ++m) {
    const auto row = rbf_expand(len[m], dspec);
    for (int c = 0; c < k; ++c)
      f.lattice(m, c) = row[c];
    for (int c = 0; c < 3; ++c) {
      f.lattice(m, k + c) = len[c];
      f.lattice(m, k + 3 + c) = cosines[c];
    }
  }

  const int sh = sh_size(opts.l_max);
  f.harmonics.resize(e_count, sh);
  for (int e = 0; e < e_count; ++e) {
    const auto y = spherical_harmonics(g.edges[e].vector, opts.l_max);
    for (int c = 0; c < sh; ++c)
      f.harmonics(e, c) = y[c];
  }
  return f;
}

void set_angles(GraphFeatures &f,
                std::span<const std::array<double, 3>> angles,
                const RbfSpec &angle_spec) {
  if (static_cast<int>(angles.size()) != f.num_edges())
    throw std::invalid_argument("angle count does not match edge count");
  f.angles.assign(angles.begin(), angles.end());
  f.angle_rbf = embed_angles(f.angles, angle_spec);
}

void set_so3_distances(GraphFeatures &f, std::span<const double> distances,
                       const RbfSpec &distance_spec) {
  if (static_cast<int>(distances.size()) != f.num_edges())
    throw std::invalid_argument("distance count does not match edge count");
  f.so3_distance_rbf = embed_edges(distances, distance_spec);
}

template <class T>
ModelInputs<T> make_inputs(std::span<const GraphFeatures *const> graphs) {
  if (graphs.empty())
    throw std::invalid_argument("empty batch");
  ModelInputs<T> in;
  in.num_graphs = static_cast<int>(graphs.size());
  in.node_offset.push_back(0);
  in.edge_offset.push_back(0);
  for (int gi = 0; gi < in.num_graphs; ++gi) {
    const GraphFeatures &f = *graphs[gi];
    const int base = in.num_nodes;
    for (int e = 0; e < f.num_edges(); ++e) {
      in.src.push_back(base + f.src[e]);
      in.dst.push_back(base + f.dst[e]);
      in.edge_graph.push_back(gi);
    }
    for (int i = 0; i < f.num_nodes; ++i)
      in.node_graph.push_back(gi);
    in.num_nodes += f.num_nodes;
    in.num_edges += f.num_edges();
    in.node_offset.push_back(in.num_nodes);
    in.edge_offset.push_back(in.num_edges);
  }

  const GraphFeatures &first = *graphs.front();
  in.l_max = static_cast<int>(std::lround(std::sqrt(
               static_cast<double>(first.harmonics.cols()))))
             - 1;

  auto collect = [&](auto member) {
    std::vector<const FeatureMatrix *> parts;
    for (const auto *g: graphs)
      parts.push_back(&member(*g));
    return parts;
  };
  in.atoms = stack_rows<T>(
    collect([](const GraphFeatures &g) -> const FeatureMatrix & {
      return g.atoms;
    }),
    static_cast<int>(first.atoms.cols()));
  in.distance_rbf = stack_rows<T>(
    collect([](const GraphFeatures &g) -> const FeatureMatrix & {
      return g.distance_rbf;
    }),
    static_cast<int>(first.distance_rbf.cols()));
  in.so3_distance_rbf = stack_rows<T>(
    collect([](const GraphFeatures &g) -> const FeatureMatrix & {
      return g.so3_distance_rbf;
    }),
    static_cast<int>(first.so3_distance_rbf.cols()));
  in.harmonics = stack_rows<T>(
    collect([](const GraphFeatures &g) -> const FeatureMatrix & {
      return g.harmonics;
    }),
    static_cast<int>(first.harmonics.cols()));
  for (int ch = 0; ch < 3; ++ch) {
    in.angle_rbf[ch] = stack_rows<T>(
      collect([ch](const GraphFeatures &g) -> const FeatureMatrix & {
        return g.angle_rbf[ch];
      }),
      static_cast<int>(first.angle_rbf[ch].cols()));

    // Broadcast the cell's frame row to every node of the graph.
    const int cols = static_cast<int>(first.lattice.cols());
    std::vector<T> data;
    data.reserve(static_cast<std::size_t>(in.num_nodes) * cols);
    for (const auto *g: graphs)
      for (int i = 0; i < g->num_nodes; ++i)
        for (int c = 0; c < cols; ++c)
          data.push_back(static_cast<T>(g->lattice(ch, c)));
    in.lattice[ch] = Tensor<T>::from_data({ in.num_nodes, cols },
                                          std::move(data));
  }
  return in;
}

template ModelInputs<float>
make_inputs(std::span<const GraphFeatures *const>);
template ModelInputs<double>
make_inputs(std::span<const GraphFeatures *const>);

}  // namespace mvcgt
