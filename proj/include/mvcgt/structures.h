//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_STRUCTURES_H_
#define MVCGT_STRUCTURES_H_

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mvcgt {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Malformed or unsupported input data. `line` is 1-based, 0 when unknown.
class DataError: public std::runtime_error {
public:
  DataError(const std::string &what, int line = 0);
  int line() const { return line_; }

private:
  int line_;
};

// Element symbol for Z in 1..118; throws DataError otherwise.
std::string_view element_symbol(int z);
// Atomic number for a case-sensitive standard symbol, nullopt if unknown.
std::optional<int> atomic_number(std::string_view symbol);

// Atoms in a periodic cell. Lattice rows are the cell vectors and cartesian
// positions are frac * L (row vectors). Fractional coordinates are kept
// wrapped into [0, 1).
class CrystalStructure {
public:
  CrystalStructure() = default;
  // Validates and wraps; throws DataError.
  CrystalStructure(std::vector<int> species, std::vector<Vec3> frac_coords,
                   const Mat3 &lattice);

  static CrystalStructure from_cartesian(std::vector<int> species,
                                         const std::vector<Vec3> &cart,
                                         const Mat3 &lattice);

  const std::vector<int> &species() const { return species_; }
  const std::vector<Vec3> &frac_coords() const { return frac_; }
  const Mat3 &lattice() const { return lattice_; }
  int num_atoms() const { return static_cast<int>(species_.size()); }
  double volume() const { return lattice_.determinant(); }

private:
  std::vector<int> species_;
  std::vector<Vec3> frac_;
  Mat3 lattice_ = Mat3::Identity();
};

// Proper rotation plus translation (Angstrom).
struct GroupAction {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  // Throws std::invalid_argument unless R R^T = I and det R = +1 (1e-12).
  void validate() const;
  GroupAction inverse() const;
};

double wrap_unit(double x);
Vec3 wrap_unit(const Vec3 &f);

std::vector<Vec3> cart_coords(const CrystalStructure &s);

// Coordinates become R x + b, lattice rows become R l_m.
CrystalStructure apply_group_action(const CrystalStructure &s,
                                    const GroupAction &g);

// Reorders atoms: atom i of the result is atom perm[i] of the input.
CrystalStructure permute_atoms(const CrystalStructure &s,
                               const std::vector<int> &perm);

CrystalStructure parse_poscar(std::string_view text);
std::string serialize_poscar(const CrystalStructure &s,
                             std::string_view comment = "mvcgt");

struct StructureRecord {
  CrystalStructure structure;
  std::optional<double> target;
  std::optional<std::string> id;
};

// {"species": [...], "frac_coords": [[..]], "lattice": [[..]]}; species may
// be atomic numbers or symbols. "target" and "id" are optional.
StructureRecord parse_json_record(std::string_view text);
CrystalStructure parse_json_structure(std::string_view text);
std::string structure_to_json(const CrystalStructure &s,
                              std::optional<double> target = std::nullopt);

}  // namespace mvcgt

#endif  // MVCGT_STRUCTURES_H_
