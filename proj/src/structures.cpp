//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/structures.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace mvcgt {
namespace {
  constexpr std::array<std::string_view, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg",
    "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr",
    "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
    "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po",
    "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs",
    "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
  };

  // Relative to the product of row lengths, so the test is scale-free.
  constexpr double kSingularTol = 1e-12;

  void validate_lattice(const Mat3 &lattice, int line = 0) {
    if (!lattice.allFinite())
      throw DataError("lattice contains non-finite values", line);
    const double scale = lattice.row(0).norm() * lattice.row(1).norm()
                         * lattice.row(2).norm();
    const double det = lattice.determinant();
    if (scale == 0.0 || std::abs(det) <= kSingularTol * scale)
      throw DataError("singular lattice", line);
    if (det < 0.0)
      throw DataError("left-handed lattice (negative determinant)", line);
  }

  std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    std::istringstream is { std::string(line) };
    std::string tok;
    while (is >> tok)
      out.push_back(tok);
    return out;
  }

  double to_double(const std::string &tok, int line) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(tok, &pos);
      if (pos != tok.size())
        throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception &) {
      throw DataError("expected a number, got '" + tok + "'", line);
    }
  }

  int to_int(const std::string &tok, int line) {
    try {
      std::size_t pos = 0;
      const long v = std::stol(tok, &pos);
      if (pos != tok.size())
        throw std::invalid_argument(tok);
      return static_cast<int>(v);
    } catch (const std::exception &) {
      throw DataError("expected an integer, got '" + tok + "'", line);
    }
  }

  std::string format_g(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return buf;
  }
}  // namespace

DataError::DataError(const std::string &what, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": "
                                      + what
                                  : what),
      line_(line) { }

std::string_view element_symbol(int z) {
  if (z < 1 || z > static_cast<int>(kElements.size()))
    throw DataError("atomic number " + std::to_string(z) + " out of range");
  return kElements[z - 1];
}

std::optional<int> atomic_number(std::string_view symbol) {
  for (std::size_t i = 0; i < kElements.size(); ++i)
    if (kElements[i] == symbol)
      return static_cast<int>(i) + 1;
  return std::nullopt;
}

double wrap_unit(double x) {
  double w = x - std::floor(x);
  // x slightly below an integer can round up to exactly 1.
  if (w >= 1.0)
    w = 0.0;
  return w;
}

Vec3 wrap_unit(const Vec3 &f) {
  return { wrap_unit(f.x()), wrap_unit(f.y()), wrap_unit(f.z()) };
}

CrystalStructure::CrystalStructure(std::vector<int> species,
                                   std::vector<Vec3> frac_coords,
                                   const Mat3 &lattice)
    : species_(std::move(species)), frac_(std::move(frac_coords)),
      lattice_(lattice) {
  if (species_.empty())
    throw DataError("structure has no atoms");
  if (species_.size() != frac_.size())
    throw DataError("species count " + std::to_string(species_.size())
                    + " does not match coordinate count "
                    + std::to_string(frac_.size()));
  for (int z: species_)
    element_symbol(z);
  validate_lattice(lattice_);
  for (Vec3 &f: frac_) {
    if (!f.allFinite())
      throw DataError("non-finite fractional coordinate");
    f = wrap_unit(f);
  }
}

CrystalStructure CrystalStructure::from_cartesian(
  std::vector<int> species, const std::vector<Vec3> &cart,
  const Mat3 &lattice) {
  validate_lattice(lattice);
  // x = L^T f  =>  f = L^-T x
  const Mat3 inv_t = lattice.transpose().inverse();
  std::vector<Vec3> frac;
  frac.reserve(cart.size());
  for (const Vec3 &x: cart)
    frac.push_back(inv_t * x);
  return CrystalStructure(std::move(species), std::move(frac), lattice);
}

void GroupAction::validate() const {
  const double ortho = (rotation * rotation.transpose() - Mat3::Identity())
                         .cwiseAbs()
                         .maxCoeff();
  if (ortho > 1e-12)
    throw std::invalid_argument("rotation is not orthogonal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-12)
    throw std::invalid_argument("rotation determinant is not +1");
}

GroupAction GroupAction::inverse() const {
  // x = R y + b  =>  y = R^T x - R^T b
  return { rotation.transpose(), -(rotation.transpose() * translation) };
}

std::vector<Vec3> cart_coords(const CrystalStructure &s) {
  std::vector<Vec3> out;
  out.reserve(s.num_atoms());
  const Mat3 lt = s.lattice().transpose();
  for (const Vec3 &f: s.frac_coords())
    out.push_back(lt * f);
  return out;
}

CrystalStructure apply_group_action(const CrystalStructure &s,
                                    const GroupAction &g) {
  std::vector<Vec3> cart = cart_coords(s);
  for (Vec3 &x: cart)
    x = g.rotation * x + g.translation;
  // Rows rotate: l'_m = R l_m.
  const Mat3 lattice = s.lattice() * g.rotation.transpose();
  return CrystalStructure::from_cartesian(s.species(), cart, lattice);
}

CrystalStructure permute_atoms(const CrystalStructure &s,
                               const std::vector<int> &perm) {
  if (perm.size() != s.species().size())
    throw std::invalid_argument("permutation size mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (int p: perm) {
    if (p < 0 || p >= static_cast<int>(perm.size()) || seen[p])
      throw std::invalid_argument("not a permutation of the atom indices");
    seen[p] = true;
  }
  std::vector<int> species;
  std::vector<Vec3> frac;
  for (int p: perm) {
    species.push_back(s.species().at(p));
    frac.push_back(s.frac_coords().at(p));
  }
  return CrystalStructure(std::move(species), std::move(frac), s.lattice());
}

CrystalStructure parse_poscar(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::istringstream is { std::string(text) };
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r')
        line.pop_back();
      lines.push_back(line);
    }
  }
  // Line numbers below are 1-based.
  auto tokens_at = [&](int lineno) {
    if (lineno > static_cast<int>(lines.size()))
      throw DataError("unexpected end of file, expected more lines", lineno);
    return split_ws(lines[lineno - 1]);
  };

  int lineno = 2;
  auto scale_tok = tokens_at(lineno);
  if (scale_tok.empty())
    throw DataError("missing scale factor", lineno);
  const double scale = to_double(scale_tok[0], lineno);
  if (!(scale > 0.0))
    throw DataError("scale factor must be positive", lineno);

  Mat3 lattice;
  for (int r = 0; r < 3; ++r) {
    ++lineno;
    auto tok = tokens_at(lineno);
    if (tok.size() < 3)
      throw DataError("lattice row needs 3 numbers", lineno);
    for (int c = 0; c < 3; ++c)
      lattice(r, c) = scale * to_double(tok[c], lineno);
  }
  validate_lattice(lattice, lineno - 2);

  ++lineno;
  auto symbols = tokens_at(lineno);
  if (symbols.empty())
    throw DataError("missing element symbol line", lineno);
  const int symbol_line = lineno;
  std::vector<int> zs;
  for (const auto &sym: symbols) {
    auto z = atomic_number(sym);
    if (!z)
      throw DataError("unknown element symbol '" + sym + "'", symbol_line);
    zs.push_back(*z);
  }

  ++lineno;
  auto counts = tokens_at(lineno);
  if (counts.size() != zs.size())
    throw DataError("count line has " + std::to_string(counts.size())
                      + " entries for " + std::to_string(zs.size())
                      + " element symbols",
                    lineno);
  std::vector<int> species;
  for (std::size_t k = 0; k < zs.size(); ++k) {
    const int n = to_int(counts[k], lineno);
    if (n < 1)
      throw DataError("atom counts must be positive", lineno);
    species.insert(species.end(), n, zs[k]);
  }

  ++lineno;
  auto mode_tok = tokens_at(lineno);
  if (!mode_tok.empty() && (mode_tok[0][0] == 'S' || mode_tok[0][0] == 's')) {
    ++lineno;  // selective dynamics
    mode_tok = tokens_at(lineno);
  }
  if (mode_tok.empty())
    throw DataError("missing coordinate mode line", lineno);
  const char mode = mode_tok[0][0];
  bool cartesian;
  if (mode == 'D' || mode == 'd')
    cartesian = false;
  else if (mode == 'C' || mode == 'c' || mode == 'K' || mode == 'k')
    cartesian = true;
  else
    throw DataError("coordinate mode must be Direct or Cartesian", lineno);

  std::vector<Vec3> coords;
  for (std::size_t i = 0; i < species.size(); ++i) {
    ++lineno;
    auto tok = tokens_at(lineno);
    if (tok.size() < 3)
      throw DataError("coordinate row needs 3 numbers", lineno);
    Vec3 v { to_double(tok[0], lineno), to_double(tok[1], lineno),
             to_double(tok[2], lineno) };
    coords.push_back(cartesian ? Vec3(v * scale) : v);
  }

  if (cartesian)
    return CrystalStructure::from_cartesian(std::move(species), coords,
                                            lattice);
  return CrystalStructure(std::move(species), std::move(coords), lattice);
}

std::string serialize_poscar(const CrystalStructure &s,
                             std::string_view comment) {
  std::ostringstream os;
  os << comment << "\n1.0\n";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c)
      os << (c ? " " : "  ") << format_g(s.lattice()(r, c), 17);
    os << '\n';
  }
  // Runs of equal species keep the atom order intact.
  std::vector<std::pair<int, int>> runs;
  for (int z: s.species()) {
    if (!runs.empty() && runs.back().first == z)
      ++runs.back().second;
    else
      runs.emplace_back(z, 1);
  }
  for (std::size_t k = 0; k < runs.size(); ++k)
    os << (k ? " " : "  ") << element_symbol(runs[k].first);
  os << '\n';
  for (std::size_t k = 0; k < runs.size(); ++k)
    os << (k ? " " : "  ") << runs[k].second;
  os << "\nDirect\n";
  for (const Vec3 &f: s.frac_coords())
    os << "  " << format_g(f.x(), 12) << ' ' << format_g(f.y(), 12) << ' '
       << format_g(f.z(), 12) << '\n';
  return os.str();
}

StructureRecord parse_json_record(std::string_view text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object())
    throw DataError("structure JSON must be an object");
  for (const char *key: { "species", "frac_coords", "lattice" })
    if (!j.contains(key))
      throw DataError(std::string("missing key \"") + key + "\"");

  const json &js = j["species"];
  if (!js.is_array())
    throw DataError("\"species\" must be an array");
  std::vector<int> species;
  for (const json &e: js) {
    if (e.is_number_integer()) {
      species.push_back(e.get<int>());
    } else if (e.is_string()) {
      const auto sym = e.get<std::string>();
      auto z = atomic_number(sym);
      if (!z)
        throw DataError("unknown element symbol '" + sym + "'");
      species.push_back(*z);
    } else {
      throw DataError("species entries must be integers or symbols");
    }
  }

  const json &jf = j["frac_coords"];
  if (!jf.is_array())
    throw DataError("\"frac_coords\" must be an array");
  std::vector<Vec3> frac;
  for (const json &row: jf) {
    if (!row.is_array() || row.size() != 3)
      throw DataError("\"frac_coords\" rows must have 3 numbers");
    Vec3 v;
    for (int c = 0; c < 3; ++c) {
      if (!row[c].is_number())
        throw DataError("\"frac_coords\" entries must be numbers");
      v[c] = row[c].get<double>();
    }
    frac.push_back(v);
  }
  if (frac.size() != species.size())
    throw DataError("shape mismatch: " + std::to_string(species.size())
                    + " species but " + std::to_string(frac.size())
                    + " coordinate rows");

  const json &jl = j["lattice"];
  if (!jl.is_array() || jl.size() != 3)
    throw DataError("\"lattice\" must be a 3x3 array");
  Mat3 lattice;
  for (int r = 0; r < 3; ++r) {
    if (!jl[r].is_array() || jl[r].size() != 3)
      throw DataError("\"lattice\" must be a 3x3 array");
    for (int c = 0; c < 3; ++c) {
      if (!jl[r][c].is_number())
        throw DataError("\"lattice\" entries must be numbers");
      lattice(r, c) = jl[r][c].get<double>();
    }
  }

  StructureRecord rec {
    CrystalStructure(std::move(species), std::move(frac), lattice),
    std::nullopt, std::nullopt
  };
  if (j.contains("target") && !j["target"].is_null()) {
    if (!j["target"].is_number())
      throw DataError("\"target\" must be a number");
    rec.target = j["target"].get<double>();
  }
  if (j.contains("id")) {
    rec.id = j["id"].is_string() ? j["id"].get<std::string>()
                                 : j["id"].dump();
  }
  return rec;
}

CrystalStructure parse_json_structure(std::string_view text) {
  return parse_json_record(text).structure;
}

std::string structure_to_json(const CrystalStructure &s,
                              std::optional<double> target) {
  nlohmann::json j;
  j["species"] = s.species();
  auto &frac = j["frac_coords"] = nlohmann::json::array();
  for (const Vec3 &f: s.frac_coords())
    frac.push_back({ f.x(), f.y(), f.z() });
  auto &lat = j["lattice"] = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    lat.push_back({ s.lattice()(r, 0), s.lattice()(r, 1), s.lattice()(r, 2) });
  if (target)
    j["target"] = *target;
  return j.dump();
}

}  // namespace mvcgt
