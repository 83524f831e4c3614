//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_TESTS_TEST_UTIL_H_
#define MVCGT_TESTS_TEST_UTIL_H_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mvcgt/batch.h"
#include "mvcgt/config.h"
#include "mvcgt/structures.h"
#include "mvcgt/tensor.h"

namespace mvcgt::test {

// Max over all elements of all `leaves` of
//   |analytic - numeric| / max(1, |numeric|)
// with central differences of step h. Brute force; small tensors only.
double fd_max_error(const std::vector<Tensor<double>> &leaves,
                    const std::function<Tensor<double>()> &loss,
                    double h = 1e-6);

Tensor<double> random_tensor(Shape shape, std::uint64_t seed,
                             double lo = -1.0, double hi = 1.0,
                             bool requires_grad = true);

CrystalStructure simple_cubic(double a, int z = 26);
// Two-atom cubic cell with atoms at the origin and the body center.
CrystalStructure cesium_chloride(double a);
CrystalStructure random_crystal(std::uint64_t seed, int min_atoms,
                                int max_atoms);

// Narrow, shallow configuration for fast model tests.
RunConfig small_config(int width = 16);

std::vector<GraphFeatures> featurize_all(
  const std::vector<CrystalStructure> &structures, const RunConfig &config);
std::vector<const GraphFeatures *> pointers(
  const std::vector<GraphFeatures> &features);

// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string &tag);

}  // namespace mvcgt::test

#endif  // MVCGT_TESTS_TEST_UTIL_H_
