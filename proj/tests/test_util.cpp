//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "test_util.h"

#include <algorithm>
#include <cmath>
#include <random>

#include <unistd.h>

#include "mvcgt/periodic_graph.h"
#include "mvcgt/pipeline.h"
#include "mvcgt/symmetry_check.h"

namespace mvcgt::test {

double fd_max_error(const std::vector<Tensor<double>> &leaves,
                    const std::function<Tensor<double>()> &loss, double h) {
  for (auto t: leaves)
    t.zero_grad();
  loss().backward();
  double worst = 0.0;
  for (auto t: leaves) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto v = t.data();
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double saved = v[k];
      v[k] = saved + h;
      const double up = loss().item();
      v[k] = saved - h;
      const double down = loss().item();
      v[k] = saved;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(analytic[k] - numeric)
                                / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo,
                             double hi, bool requires_grad) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double &x: v)
    x = dist(gen);
  return Tensor<double>::from_data(std::move(shape), std::move(v),
                                   requires_grad);
}

CrystalStructure simple_cubic(double a, int z) {
  return CrystalStructure({ z }, { Vec3::Zero() }, a * Mat3::Identity());
}

CrystalStructure cesium_chloride(double a) {
  return CrystalStructure({ 55, 17 }, { Vec3::Zero(), Vec3(0.5, 0.5, 0.5) },
                          a * Mat3::Identity());
}

CrystalStructure random_crystal(std::uint64_t seed, int min_atoms,
                                int max_atoms) {
  CounterRng rng(seed, RngStream::kCheck);
  return random_structure(rng, min_atoms, max_atoms, 90);
}

RunConfig small_config(int width) {
  RunConfig c;
  c.cutoff = 4.5;
  c.max_neighbors = 8;
  c.distance_rbf = 8;
  c.angle_rbf = 6;
  c.width = width;
  c.se3_node_layers = 1;
  c.so3_node_layers = 1;
  c.l_max = 2;
  return c;
}

std::vector<GraphFeatures> featurize_all(
  const std::vector<CrystalStructure> &structures, const RunConfig &config) {
  const FeaturizerOptions opts = config.featurizer();
  const AtomTable table = load_atom_table(config);
  std::vector<GraphFeatures> out;
  for (const auto &s: structures)
    out.push_back(featurize(build_graph(s, opts.graph), table, opts));
  return out;
}

std::vector<const GraphFeatures *> pointers(
  const std::vector<GraphFeatures> &features) {
  std::vector<const GraphFeatures *> p;
  for (const auto &f: features)
    p.push_back(&f);
  return p;
}

std::filesystem::path temp_dir(const std::string &tag) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path()
                   / ("mvcgt_" + tag + "_" + std::to_string(::getpid()) + "_"
                      + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace mvcgt::test
