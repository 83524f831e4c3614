//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/spherical.h"

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace mvcgt {
namespace {
  using cd = std::complex<double>;

  double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k)
      f *= k;
    return f;
  }

  // Row a (real m = a - l) expressed in complex harmonics Y_l^mu, column
  // mu + l:
  //   m > 0: (Y^-m + (-1)^m Y^m) / sqrt2
  //   m < 0: i (Y^m - (-1)^m Y^-m) / sqrt2
  std::vector<cd> real_from_complex(int l) {
    const int n = 2 * l + 1;
    const double h = 1.0 / std::numbers::sqrt2;
    std::vector<cd> u(n * n, cd(0.0, 0.0));
    auto at = [&](int m, int mu) -> cd & { return u[(m + l) * n + mu + l]; };
    for (int m = -l; m <= l; ++m) {
      const double sign = (std::abs(m) % 2) ? -1.0 : 1.0;
      if (m > 0) {
        at(m, -m) = h;
        at(m, m) = sign * h;
      } else if (m < 0) {
        at(m, m) = cd(0.0, h);
        at(m, -m) = cd(0.0, -sign * h);
      } else {
        at(0, 0) = 1.0;
      }
    }
    return u;
  }

  std::vector<CouplingEntry> build_real_coupling(int l1, int l2, int l3) {
    const int n1 = 2 * l1 + 1, n2 = 2 * l2 + 1, n3 = 2 * l3 + 1;
    const auto u1 = real_from_complex(l1);
    const auto u2 = real_from_complex(l2);
    const auto u3 = real_from_complex(l3);

    std::vector<cd> c(n1 * n2 * n3, cd(0.0, 0.0));
    for (int a = 0; a < n1; ++a)
      for (int b = 0; b < n2; ++b)
        for (int r = 0; r < n3; ++r) {
          cd acc(0.0, 0.0);
          for (int mu1 = -l1; mu1 <= l1; ++mu1)
            for (int mu2 = -l2; mu2 <= l2; ++mu2) {
              const int mu3 = mu1 + mu2;
              if (std::abs(mu3) > l3)
                continue;
              const double cg = clebsch_gordan(l1, mu1, l2, mu2, l3, mu3);
              if (cg == 0.0)
                continue;
              acc += u3[r * n3 + mu3 + l3] * std::conj(u1[a * n1 + mu1 + l1])
                     * std::conj(u2[b * n2 + mu2 + l2]) * cg;
            }
          c[(a * n2 + b) * n3 + r] = acc;
        }

    // The transformed tensor is real or purely imaginary depending on the
    // parity of l1 + l2 + l3; either part is an equally valid coupling.
    double re = 0.0, im = 0.0;
    for (const cd &v: c) {
      re += std::norm(v.real());
      im += std::norm(v.imag());
    }
    const bool use_real = re >= im;
    const double residual = use_real ? im : re;
    if (residual > 1e-20 * std::max(re, im))
      throw std::logic_error("real coupling tensor is not phase-aligned");

    std::vector<CouplingEntry> out;
    for (int a = 0; a < n1; ++a)
      for (int b = 0; b < n2; ++b)
        for (int r = 0; r < n3; ++r) {
          const cd v = c[(a * n2 + b) * n3 + r];
          const double x = use_real ? v.real() : v.imag();
          if (std::abs(x) > 1e-14)
            out.push_back({ a, b, r, x });
        }
    return out;
  }
}  // namespace

std::vector<double> spherical_harmonics(const Vec3 &v, int l_max) {
  if (l_max < 0 || l_max > kMaxDegree)
    throw std::invalid_argument("l_max must be in [0, 3]");
  const double r = v.norm();
  if (!(r > 0.0))
    throw std::invalid_argument("spherical harmonics of a zero vector");
  const double x = v.x() / r, y = v.y() / r, z = v.z() / r;
  const double pi = std::numbers::pi;

  std::vector<double> out;
  out.reserve(sh_size(l_max));
  out.push_back(0.5 / std::sqrt(pi));
  if (l_max >= 1) {
    const double c1 = std::sqrt(3.0 / (4.0 * pi));
    out.insert(out.end(), { c1 * y, c1 * z, c1 * x });
  }
  if (l_max >= 2) {
    const double c = 0.5 * std::sqrt(15.0 / pi);
    const double c0 = 0.25 * std::sqrt(5.0 / pi);
    out.insert(out.end(), { c * x * y, c * y * z, c0 * (3.0 * z * z - 1.0),
                            c * x * z, 0.5 * c * (x * x - y * y) });
  }
  if (l_max >= 3) {
    const double c3 = 0.25 * std::sqrt(35.0 / (2.0 * pi));
    const double c2 = 0.5 * std::sqrt(105.0 / pi);
    const double c1 = 0.25 * std::sqrt(21.0 / (2.0 * pi));
    const double c0 = 0.25 * std::sqrt(7.0 / pi);
    out.insert(out.end(), {
                            c3 * y * (3.0 * x * x - y * y),
                            c2 * x * y * z,
                            c1 * y * (5.0 * z * z - 1.0),
                            c0 * z * (5.0 * z * z - 3.0),
                            c1 * x * (5.0 * z * z - 1.0),
                            0.5 * c2 * z * (x * x - y * y),
                            c3 * x * (x * x - 3.0 * y * y),
                          });
  }
  return out;
}

double clebsch_gordan(int j1, int m1, int j2, int m2, int J, int M) {
  if (m1 + m2 != M)
    return 0.0;
  if (std::abs(m1) > j1 || std::abs(m2) > j2 || std::abs(M) > J)
    return 0.0;
  if (!coupling_allowed(j1, j2, J))
    return 0.0;

  const double pre = std::sqrt(
    (2.0 * J + 1.0) * factorial(J + j1 - j2) * factorial(J - j1 + j2)
    * factorial(j1 + j2 - J) / factorial(j1 + j2 + J + 1));
  const double norm = std::sqrt(factorial(J + M) * factorial(J - M)
                                * factorial(j1 - m1) * factorial(j1 + m1)
                                * factorial(j2 - m2) * factorial(j2 + m2));
  double sum = 0.0;
  for (int k = 0; k <= j1 + j2 - J; ++k) {
    const int d[] = { j1 + j2 - J - k, j1 - m1 - k, j2 + m2 - k,
                      J - j2 + m1 + k, J - j1 - m2 + k };
    bool valid = true;
    for (int v: d)
      valid = valid && v >= 0;
    if (!valid)
      continue;
    double denom = factorial(k);
    for (int v: d)
      denom *= factorial(v);
    sum += ((k % 2) ? -1.0 : 1.0) / denom;
  }
  return pre * norm * sum;
}

bool coupling_allowed(int l1, int l2, int l3) {
  return l1 >= 0 && l2 >= 0 && l3 >= std::abs(l1 - l2) && l3 <= l1 + l2;
}

const std::vector<CouplingEntry> &real_coupling(int l1, int l2, int l3) {
  if (!coupling_allowed(l1, l2, l3))
    throw std::invalid_argument("forbidden coupling path "
                                + std::to_string(l1) + " x "
                                + std::to_string(l2) + " -> "
                                + std::to_string(l3));
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, std::vector<CouplingEntry>>
    cache;
  std::lock_guard lock(mutex);
  auto key = std::make_tuple(l1, l2, l3);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, build_real_coupling(l1, l2, l3)).first;
  return it->second;
}

}  // namespace mvcgt
