//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_SYMMETRY_CHECK_H_
#define MVCGT_SYMMETRY_CHECK_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvcgt/config.h"
#include "mvcgt/params.h"
#include "mvcgt/rng.h"
#include "mvcgt/structures.h"

namespace mvcgt {

// Haar-random proper rotation.
Mat3 random_rotation(CounterRng &rng);
// Random rotation and a translation with entries in [-5, 5) Angstrom.
GroupAction random_action(CounterRng &rng);
std::vector<int> random_permutation(int n, CounterRng &rng);

// Random triclinic cell (lengths 3..6 A, angles 60..120 degrees) holding
// between min_atoms and max_atoms atoms of random species in 1..`max_z`,
// no two closer than 0.8 A (periodic images included).
CrystalStructure random_structure(CounterRng &rng, int min_atoms,
                                  int max_atoms, int max_z = 100);

// Representation matrix D^l(R) on the real harmonics of degree l, fitted
// by least squares from Y_l(R v) = D^l(R) Y_l(v) over sample directions.
Eigen::MatrixXd wigner_matrix(const Mat3 &rotation, int l);

struct GradientCheck {
  std::string tensor;
  double rel_error = 0.0;
  double grad_scale = 0.0;
};

// Central-difference check of every trainable tensor in `store` against
// the gradient of `loss`. Each tensor is probed on all elements when it
// has at most `max_elements`, otherwise on the `max_elements / 4` largest
// analytic entries plus random ones, and along one random +-1 direction.
// The error of a tensor is max |analytic - numeric| over the probes,
// divided by the largest probed magnitude (floored at 1e-7 max(1, |loss|)).
std::vector<GradientCheck>
check_gradients(ParamStore<double> &store,
                const std::function<Tensor<double>()> &loss, double h,
                int max_elements, CounterRng &rng);

struct SymmetryReport {
  int trials = 0;
  // max |f(g s) - f(s)| over E1, E2 and the prediction
  double invariance = 0.0;
  // max relative error of each tensor-product block against D^l(R)
  double equivariance = 0.0;
  // max |v(R s) - R v(s)| over matched edges
  double edge_vectors = 0.0;
  double permutation = 0.0;
  double periodicity = 0.0;
  // worst tensor of check_gradients over the fine-tuning and pretraining
  // losses of a reduced double-precision model
  double gradient = 0.0;

  double tol_invariance = 1e-8;
  double tol_equivariance = 1e-8;
  double tol_edge_vectors = 1e-10;
  double tol_permutation = 1e-10;
  double tol_periodicity = 1e-10;
  double tol_gradient = 1e-4;

  bool passed() const;
  std::string to_json() const;
};

// Runs every property on `trials` random structures with a double-precision
// model shaped by `config`.
SymmetryReport run_symmetry_checks(const RunConfig &config, int trials,
                                   std::uint64_t seed);

}  // namespace mvcgt

#endif  // MVCGT_SYMMETRY_CHECK_H_
