//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/structures.h"

#include <cmath>

#include <gtest/gtest.h>

#include "mvcgt/rng.h"
#include "mvcgt/symmetry_check.h"
#include "test_util.h"

namespace mvcgt {
namespace {

constexpr const char *kRocksalt = R"(NaCl conventional cell
   5.64
 1.0 0.0 0.0
 0.0 1.0 0.0
 0.0 0.0 1.0
 Na Cl
 4 4
Direct
 0.0 0.0 0.0
 0.0 0.5 0.5
 0.5 0.0 0.5
 0.5 0.5 0.0
 0.5 0.5 0.5
 0.5 0.0 0.0
 0.0 0.5 0.0
 0.0 0.0 0.5
)";

TEST(Elements, SymbolRoundTrip) {
  for (int z = 1; z <= 118; ++z)
    EXPECT_EQ(atomic_number(element_symbol(z)), z);
  EXPECT_EQ(element_symbol(26), "Fe");
  EXPECT_FALSE(atomic_number("Xx").has_value());
  EXPECT_THROW(element_symbol(0), DataError);
}

TEST(CrystalStructure, WrapsFractionalCoordinates) {
  const CrystalStructure s({ 8 }, { Vec3(1.25, -0.25, 3.0) },
                           Mat3::Identity());
  EXPECT_DOUBLE_EQ(s.frac_coords()[0].x(), 0.25);
  EXPECT_DOUBLE_EQ(s.frac_coords()[0].y(), 0.75);
  EXPECT_DOUBLE_EQ(s.frac_coords()[0].z(), 0.0);
}

TEST(CrystalStructure, RejectsInvalidInput) {
  EXPECT_THROW(CrystalStructure({}, {}, Mat3::Identity()), DataError);
  EXPECT_THROW(CrystalStructure({ 1, 2 }, { Vec3::Zero() }, Mat3::Identity()),
               DataError);
  Mat3 singular = Mat3::Identity();
  singular.row(2) = singular.row(1);
  EXPECT_THROW(CrystalStructure({ 1 }, { Vec3::Zero() }, singular), DataError);
  EXPECT_THROW(CrystalStructure({ 1 }, { Vec3::Zero() }, -Mat3::Identity()),
               DataError);
  EXPECT_THROW(CrystalStructure({ 0 }, { Vec3::Zero() }, Mat3::Identity()),
               DataError);
}

TEST(Poscar, ParsesScaledCell) {
  const CrystalStructure s = parse_poscar(kRocksalt);
  ASSERT_EQ(s.num_atoms(), 8);
  EXPECT_DOUBLE_EQ(s.lattice()(0, 0), 5.64);
  EXPECT_EQ(s.species()[0], 11);
  EXPECT_EQ(s.species()[7], 17);
  EXPECT_NEAR(s.volume(), std::pow(5.64, 3), 1e-9);
}

TEST(Poscar, RoundTripPreservesFractionalCoordinates) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CrystalStructure s = test::random_crystal(seed, 1, 12);
    const CrystalStructure back = parse_poscar(serialize_poscar(s));
    ASSERT_EQ(back.species(), s.species());
    for (int i = 0; i < s.num_atoms(); ++i) {
      Vec3 d = back.frac_coords()[i] - s.frac_coords()[i];
      // 0.9999999999 and 0 are the same site
      for (int k = 0; k < 3; ++k)
        d[k] -= std::round(d[k]);
      EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-10);
    }
    EXPECT_LT((back.lattice() - s.lattice()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Poscar, CartesianMode) {
  const CrystalStructure s = parse_poscar(R"(cart
2.0
1 0 0
0 1 0
0 0 1
Si
1
Cartesian
0.5 0.25 0.0
)");
  // Cartesian positions are scaled like the lattice
  EXPECT_NEAR(s.frac_coords()[0].x(), 0.5, 1e-15);
  EXPECT_NEAR(s.frac_coords()[0].y(), 0.25, 1e-15);
}

TEST(Poscar, ErrorsCarryLineNumbers) {
  try {
    parse_poscar("x\n1.0\n1 0 0\n0 1 0\n0 0 1\nQq\n1\nDirect\n0 0 0\n");
    FAIL() << "unknown element accepted";
  } catch (const DataError &e) {
    EXPECT_EQ(e.line(), 6);
  }
  EXPECT_THROW(parse_poscar("x\n1.0\n1 0 0\n0 1 0\n"), DataError);
  EXPECT_THROW(
    parse_poscar("x\n1.0\n1 0 0\n0 1 0\n0 0 1\nSi\n2\nDirect\n0 0 0\n"),
    DataError);
}

TEST(JsonRecord, ParsesSymbolsAndTarget) {
  const auto r = parse_json_record(
    R"({"id": "mp-1", "species": ["Na", 17], "target": -1.5,
        "frac_coords": [[0,0,0],[0.5,0.5,0.5]],
        "lattice": [[4,0,0],[0,4,0],[0,0,4]]})");
  EXPECT_EQ(r.id, "mp-1");
  EXPECT_EQ(r.target, -1.5);
  EXPECT_EQ(r.structure.species(), (std::vector<int> { 11, 17 }));
  const auto back = parse_json_record(structure_to_json(r.structure, -1.5));
  EXPECT_EQ(back.structure.species(), r.structure.species());
  EXPECT_EQ(back.structure.frac_coords()[1], r.structure.frac_coords()[1]);
}

TEST(JsonRecord, Errors) {
  EXPECT_THROW(parse_json_record("{"), DataError);
  EXPECT_THROW(parse_json_record(R"({"species": [1]})"), DataError);
  EXPECT_THROW(parse_json_record(R"({"species": ["Qq"],
    "frac_coords": [[0,0,0]], "lattice": [[1,0,0],[0,1,0],[0,0,1]]})"),
               DataError);
}

TEST(GroupAction, ActsOnCoordinatesAndLattice) {
  CounterRng rng(1, RngStream::kCheck);
  const CrystalStructure s = test::random_crystal(4, 3, 6);
  const GroupAction g = random_action(rng);
  g.validate();
  const CrystalStructure t = apply_group_action(s, g);
  const auto x = cart_coords(s), y = cart_coords(t);
  for (int i = 0; i < s.num_atoms(); ++i) {
    // positions agree modulo the rotated lattice
    const Vec3 expected = g.rotation * x[i] + g.translation;
    Vec3 df = t.lattice().transpose().inverse() * (y[i] - expected);
    for (int k = 0; k < 3; ++k)
      df[k] -= std::round(df[k]);
    EXPECT_LT(df.cwiseAbs().maxCoeff(), 1e-12);
  }
  for (int m = 0; m < 3; ++m)
    EXPECT_LT((t.lattice().row(m).transpose()
               - g.rotation * s.lattice().row(m).transpose())
                .norm(),
              1e-12);
  const CrystalStructure back = apply_group_action(t, g.inverse());
  for (int i = 0; i < s.num_atoms(); ++i) {
    Vec3 d = back.frac_coords()[i] - s.frac_coords()[i];
    for (int k = 0; k < 3; ++k)
      d[k] -= std::round(d[k]);
    EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(GroupAction, RejectsImproperRotation) {
  GroupAction g;
  g.rotation = -Mat3::Identity();
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g.rotation = 1.01 * Mat3::Identity();
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(PermuteAtoms, ReordersSitesAndSpecies) {
  const CrystalStructure s({ 1, 2, 3 },
                           { Vec3(0.1, 0, 0), Vec3(0.2, 0, 0),
                             Vec3(0.3, 0, 0) },
                           Mat3::Identity());
  const CrystalStructure p = permute_atoms(s, { 2, 0, 1 });
  EXPECT_EQ(p.species(), (std::vector<int> { 3, 1, 2 }));
  EXPECT_DOUBLE_EQ(p.frac_coords()[0].x(), 0.3);
  EXPECT_THROW(permute_atoms(s, { 0, 0, 1 }), std::invalid_argument);
}

}  // namespace
}  // namespace mvcgt
