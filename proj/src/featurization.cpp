//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/featurization.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mvcgt/structures.h"

namespace mvcgt {

RbfSpec RbfSpec::uniform(double lo, double hi, int k) {
  if (k < 2 || !(hi > lo))
    throw std::invalid_argument("rbf needs k >= 2 and hi > lo");
  RbfSpec spec;
  const double step = (hi - lo) / (k - 1);
  for (int i = 0; i < k; ++i)
    spec.centers.push_back(lo + step * i);
  spec.gamma = 1.0 / (2.0 * step * step);
  return spec;
}

void RbfSpec::validate() const {
  if (centers.size() < 2)
    throw std::invalid_argument("rbf needs at least two centers");
  for (std::size_t k = 1; k < centers.size(); ++k)
    if (!(centers[k] > centers[k - 1]))
      throw std::invalid_argument("rbf centers must be strictly ascending");
  if (!(gamma > 0.0))
    throw std::invalid_argument("rbf gamma must be positive");
}

std::vector<double> rbf_expand(double x, const RbfSpec &spec) {
  std::vector<double> out(spec.centers.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double d = x - spec.centers[k];
    out[k] = std::exp(-spec.gamma * d * d);
  }
  return out;
}

AtomTable::AtomTable(int dim, std::map<int, std::vector<double>> rows)
    : dim_(dim), rows_(std::move(rows)) {
  if (dim_ < 1)
    throw std::invalid_argument("atom table dim must be >= 1");
  for (const auto &[z, row]: rows_)
    if (static_cast<int>(row.size()) != dim_)
      throw DataError("atom table row for Z=" + std::to_string(z) + " has "
                      + std::to_string(row.size()) + " entries, expected "
                      + std::to_string(dim_));
}

AtomTable AtomTable::one_hot(int max_z) {
  std::map<int, std::vector<double>> rows;
  for (int z = 1; z <= max_z; ++z) {
    std::vector<double> row(max_z, 0.0);
    row[z - 1] = 1.0;
    rows.emplace(z, std::move(row));
  }
  return AtomTable(max_z, std::move(rows));
}

AtomTable AtomTable::from_json(std::string_view text, int dim) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    throw DataError(std::string("invalid atom table JSON: ") + e.what());
  }
  if (!j.is_object())
    throw DataError("atom table must be a JSON object");
  std::map<int, std::vector<double>> rows;
  for (auto it = j.begin(); it != j.end(); ++it) {
    int z;
    try {
      z = std::stoi(it.key());
    } catch (const std::exception &) {
      throw DataError("atom table key '" + it.key() + "' is not an integer");
    }
    if (!it.value().is_array())
      throw DataError("atom table row for Z=" + it.key() + " is not an array");
    rows.emplace(z, it.value().get<std::vector<double>>());
  }
  return AtomTable(dim, std::move(rows));
}

const std::vector<double> &AtomTable::row(int z) const {
  auto it = rows_.find(z);
  if (it == rows_.end())
    throw DataError("no atom features for atomic number "
                    + std::to_string(z));
  return it->second;
}

FeatureMatrix embed_atoms(std::span<const int> species,
                          const AtomTable &table) {
  FeatureMatrix out(static_cast<Eigen::Index>(species.size()), table.dim());
  for (std::size_t i = 0; i < species.size(); ++i) {
    const auto &row = table.row(species[i]);
    for (int c = 0; c < table.dim(); ++c)
      out(static_cast<Eigen::Index>(i), c) = row[c];
  }
  return out;
}

FeatureMatrix embed_edges(std::span<const double> distances,
                          const RbfSpec &spec) {
  FeatureMatrix out(static_cast<Eigen::Index>(distances.size()), spec.size());
  for (std::size_t e = 0; e < distances.size(); ++e) {
    const auto row = rbf_expand(distances[e], spec);
    for (int k = 0; k < spec.size(); ++k)
      out(static_cast<Eigen::Index>(e), k) = row[k];
  }
  return out;
}

std::array<FeatureMatrix, 3>
embed_angles(std::span<const std::array<double, 3>> angles,
             const RbfSpec &spec) {
  std::array<FeatureMatrix, 3> out;
  const auto n = static_cast<Eigen::Index>(angles.size());
  for (auto &m: out)
    m.resize(n, spec.size());
  for (Eigen::Index e = 0; e < n; ++e)
    for (int ch = 0; ch < 3; ++ch) {
      const auto row = rbf_expand(std::cos(angles[e][ch]), spec);
      for (int k = 0; k < spec.size(); ++k)
        out[ch](e, k) = row[k];
    }
  return out;
}

}  // namespace mvcgt
