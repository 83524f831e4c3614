//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_SPHERICAL_H_
#define MVCGT_SPHERICAL_H_

#include <vector>

#include "mvcgt/structures.h"

namespace mvcgt {

constexpr int kMaxDegree = 3;

inline int sh_offset(int l) {
  return l * l;
}
inline int sh_size(int l_max) {
  return (l_max + 1) * (l_max + 1);
}

// Orthonormal real spherical harmonics of v / |v| for degrees 0..l_max,
// concatenated by degree with m = -l..l inside each block. Degree 1 is
// sqrt(3 / 4pi) (y, z, x). Throws std::invalid_argument on a zero vector or
// l_max outside [0, 3].
std::vector<double> spherical_harmonics(const Vec3 &v, int l_max);

// <j1 m1 j2 m2 | J M> in the Condon-Shortley convention (Racah formula).
double clebsch_gordan(int j1, int m1, int j2, int m2, int J, int M);

// Whether l3 is reachable from l1 x l2.
bool coupling_allowed(int l1, int l2, int l3);

struct CouplingEntry {
  int m1, m2, m3;  // 0-based within each degree block
  double coef;
};

// Nonzero coefficients of the l1 x l2 -> l3 coupling expressed in the real
// harmonic basis above. The tensor is the complex Clebsch-Gordan tensor
// under the complex-to-real change of basis, so it keeps its orthogonality:
//   sum_{m1,m2} C[m1,m2,m3] C[m1,m2,m3'] = delta(m3, m3').
// Cached after the first call; thread-safe.
const std::vector<CouplingEntry> &real_coupling(int l1, int l2, int l3);

}  // namespace mvcgt

#endif  // MVCGT_SPHERICAL_H_
