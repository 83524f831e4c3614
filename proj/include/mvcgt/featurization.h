//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_FEATURIZATION_H_
#define MVCGT_FEATURIZATION_H_

#include <array>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mvcgt {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                    Eigen::RowMajor>;

// Gaussian basis exp(-gamma (x - mu_k)^2) over ascending centers.
struct RbfSpec {
  std::vector<double> centers;
  double gamma = 1.0;

  int size() const { return static_cast<int>(centers.size()); }

  // K centers uniform on [lo, hi], gamma = 1 / (2 spacing^2).
  static RbfSpec uniform(double lo, double hi, int k);
  // Throws std::invalid_argument unless K >= 2, centers strictly ascending
  // and gamma > 0.
  void validate() const;
};

std::vector<double> rbf_expand(double x, const RbfSpec &spec);

// Per-element feature rows keyed by atomic number.
class AtomTable {
public:
  AtomTable() = default;
  AtomTable(int dim, std::map<int, std::vector<double>> rows);

  // One-hot over Z = 1..max_z.
  static AtomTable one_hot(int max_z = 100);
  // {"<Z>": [f_1 .. f_dim], ...}; every row must have `dim` entries.
  static AtomTable from_json(std::string_view text, int dim);

  int dim() const { return dim_; }
  bool contains(int z) const { return rows_.contains(z); }
  const std::vector<double> &row(int z) const;

private:
  int dim_ = 0;
  std::map<int, std::vector<double>> rows_;
};

// Unknown species raise DataError naming the atomic number.
FeatureMatrix embed_atoms(std::span<const int> species,
                          const AtomTable &table);

FeatureMatrix embed_edges(std::span<const double> distances,
                          const RbfSpec &spec);

// RBF of cos(theta) per channel; returns one (E, K) matrix per reference
// direction.
std::array<FeatureMatrix, 3>
embed_angles(std::span<const std::array<double, 3>> angles,
             const RbfSpec &spec);

}  // namespace mvcgt

#endif  // MVCGT_FEATURIZATION_H_
