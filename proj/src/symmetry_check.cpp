//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/symmetry_check.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "mvcgt/batch.h"
#include "mvcgt/layers.h"
#include "mvcgt/model.h"
#include "mvcgt/periodic_graph.h"
#include "mvcgt/pipeline.h"
#include "mvcgt/spherical.h"
#include "mvcgt/ssl.h"

namespace mvcgt {
namespace {
  double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
      m = std::max(m, std::abs(a[k] - b[k]));
    return a.size() == b.size() ? m : INFINITY;
  }

  double min_image_distance(const Mat3 &lattice, const Vec3 &df) {
    double best = INFINITY;
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b)
        for (int c = -1; c <= 1; ++c) {
          const Vec3 f = df + Vec3(a, b, c);
          best = std::min(best, (lattice.transpose() * f).norm());
        }
    return best;
  }

  struct Evaluation {
    std::vector<double> se3, so3, prediction, tp1;
    PeriodicGraph graph;
    GraphFeatures features;
  };

  Evaluation evaluate(const CrystalModel<double> &model,
                      const CrystalStructure &s, const AtomTable &table,
                      const FeaturizerOptions &opts) {
    NoGradGuard no_grad;
    Evaluation ev;
    ev.graph = build_graph(s, opts.graph);
    ev.features = featurize(ev.graph, table, opts);
    const auto in = make_inputs<double>(ev.features);
    const auto out = model.forward(in, RunMode::kEval);
    auto copy = [](const Tensor<double> &t) {
      return std::vector<double>(t.data().begin(), t.data().end());
    };
    ev.se3 = copy(out.se3.graph);
    ev.so3 = copy(out.so3.graph);
    ev.prediction = copy(out.prediction);
    ev.tp1 = copy(out.so3.tp1);
    return ev;
  }

  double feature_diff(const GraphFeatures &a, const GraphFeatures &b) {
    if (a.num_edges() != b.num_edges() || a.src != b.src || a.dst != b.dst)
      return INFINITY;
    double m = 0.0;
    auto mat = [&m](const FeatureMatrix &x, const FeatureMatrix &y) {
      if (x.rows() != y.rows() || x.cols() != y.cols()) {
        m = INFINITY;
        return;
      }
      if (x.size() > 0)
        m = std::max(m, (x - y).cwiseAbs().maxCoeff());
    };
    mat(a.atoms, b.atoms);
    mat(a.lattice, b.lattice);
    mat(a.distance_rbf, b.distance_rbf);
    mat(a.so3_distance_rbf, b.so3_distance_rbf);
    mat(a.harmonics, b.harmonics);
    for (int k = 0; k < 3; ++k)
      mat(a.angle_rbf[k], b.angle_rbf[k]);
    return m;
  }
}  // namespace

Mat3 random_rotation(CounterRng &rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(),
                       rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

GroupAction random_action(CounterRng &rng) {
  GroupAction g;
  g.rotation = random_rotation(rng);
  for (int k = 0; k < 3; ++k)
    g.translation[k] = rng.uniform(-5.0, 5.0);
  return g;
}

std::vector<int> random_permutation(int n, CounterRng &rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  shuffle_indices(p, rng);
  return p;
}

CrystalStructure random_structure(CounterRng &rng, int min_atoms,
                                  int max_atoms, int max_z) {
  const double deg = std::numbers::pi / 180.0;
  Mat3 lattice;
  while (true) {
    const double a = rng.uniform(3.0, 6.0), b = rng.uniform(3.0, 6.0),
                 c = rng.uniform(3.0, 6.0);
    const double alpha = rng.uniform(60.0, 120.0) * deg;
    const double beta = rng.uniform(60.0, 120.0) * deg;
    const double gamma = rng.uniform(60.0, 120.0) * deg;
    const double cx = std::cos(beta);
    const double cy = (std::cos(alpha) - std::cos(beta) * std::cos(gamma))
                      / std::sin(gamma);
    const double cz2 = 1.0 - cx * cx - cy * cy;
    if (cz2 < 0.05)
      continue;
    lattice << a, 0.0, 0.0, b * std::cos(gamma), b * std::sin(gamma), 0.0,
      c * cx, c * cy, c * std::sqrt(cz2);
    break;
  }

  const int n = min_atoms
                + static_cast<int>(rng.below(
                  static_cast<std::uint64_t>(max_atoms - min_atoms + 1)));
  std::vector<Vec3> frac;
  std::vector<int> species;
  int attempts = 0;
  while (static_cast<int>(frac.size()) < n && attempts < 10000) {
    ++attempts;
    const Vec3 f(rng.uniform(), rng.uniform(), rng.uniform());
    bool ok = true;
    for (const Vec3 &g: frac)
      ok = ok && min_image_distance(lattice, f - g) >= 0.8;
    if (!ok)
      continue;
    frac.push_back(f);
    species.push_back(1 + static_cast<int>(rng.below(max_z)));
  }
  if (frac.empty()) {
    frac.push_back(Vec3::Zero());
    species.push_back(1);
  }
  return CrystalStructure(std::move(species), std::move(frac), lattice);
}

Eigen::MatrixXd wigner_matrix(const Mat3 &rotation, int l) {
  const int n = 2 * l + 1;
  const int samples = 4 * n + 8;
  CounterRng rng(12345, RngStream::kCheck);
  Eigen::MatrixXd a(n, samples), b(n, samples);
  const int off = sh_offset(l);
  for (int s = 0; s < samples; ++s) {
    const Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const auto y = spherical_harmonics(v, l);
    const auto yr = spherical_harmonics(rotation * v, l);
    for (int m = 0; m < n; ++m) {
      a(m, s) = y[off + m];
      b(m, s) = yr[off + m];
    }
  }
  return (b * a.transpose()) * (a * a.transpose()).inverse();
}

std::vector<GradientCheck>
check_gradients(ParamStore<double> &store,
                const std::function<Tensor<double>()> &loss, double h,
                int max_elements, CounterRng &rng) {
  store.zero_grad();
  const Tensor<double> l0 = loss();
  l0.backward();
  const double floor = 1e-7 * std::max(1.0, std::abs(l0.item()));

  std::vector<GradientCheck> out;
  for (auto &entry: store.entries()) {
    if (!entry.trainable)
      continue;
    auto theta = entry.tensor.data();
    const std::vector<double> analytic(entry.tensor.grad().begin(),
                                       entry.tensor.grad().end());
    const int n = static_cast<int>(theta.size());

    std::vector<int> probe;
    if (n <= max_elements) {
      probe.resize(n);
      std::iota(probe.begin(), probe.end(), 0);
    } else {
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + max_elements / 4,
                        order.end(), [&](int x, int y) {
                          return std::abs(analytic[x]) > std::abs(analytic[y]);
                        });
      probe.assign(order.begin(), order.begin() + max_elements / 4);
      while (static_cast<int>(probe.size()) < max_elements) {
        const int k = static_cast<int>(rng.below(n));
        if (std::find(probe.begin(), probe.end(), k) == probe.end())
          probe.push_back(k);
      }
    }

    auto eval = [&]() {
      NoGradGuard no_grad;
      return loss().item();
    };
    double worst = 0.0, scale = floor;
    for (int k: probe) {
      const double saved = theta[k];
      theta[k] = saved + h;
      const double up = eval();
      theta[k] = saved - h;
      const double down = eval();
      theta[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(numeric - analytic[k]));
      scale = std::max({ scale, std::abs(numeric), std::abs(analytic[k]) });
    }

    // one random +-1 direction over the whole tensor
    std::vector<double> dir(n);
    double directional = 0.0;
    for (int k = 0; k < n; ++k) {
      dir[k] = rng.uniform() < 0.5 ? -1.0 : 1.0;
      directional += dir[k] * analytic[k];
    }
    const std::vector<double> saved(theta.begin(), theta.end());
    for (int k = 0; k < n; ++k)
      theta[k] = saved[k] + h * dir[k];
    const double up = eval();
    for (int k = 0; k < n; ++k)
      theta[k] = saved[k] - h * dir[k];
    const double down = eval();
    std::copy(saved.begin(), saved.end(), theta.begin());
    const double numeric_dir = (up - down) / (2.0 * h);
    const double dir_scale = std::max(
      { floor, std::abs(numeric_dir), std::abs(directional) });

    const double rel = std::max(worst / scale,
                                std::abs(numeric_dir - directional)
                                  / dir_scale);
    out.push_back({ entry.name, rel, scale });
  }
  store.zero_grad();
  return out;
}

bool SymmetryReport::passed() const {
  return invariance < tol_invariance && equivariance < tol_equivariance
         && edge_vectors < tol_edge_vectors && permutation < tol_permutation
         && periodicity < tol_periodicity && gradient < tol_gradient;
}

std::string SymmetryReport::to_json() const {
  nlohmann::json j;
  j["trials"] = trials;
  j["passed"] = passed();
  auto entry = [](double v, double tol) {
    return nlohmann::json { { "max_error", v }, { "tolerance", tol },
                            { "ok", v < tol } };
  };
  j["se3_invariance"] = entry(invariance, tol_invariance);
  j["so3_equivariance"] = entry(equivariance, tol_equivariance);
  j["edge_vectors"] = entry(edge_vectors, tol_edge_vectors);
  j["permutation"] = entry(permutation, tol_permutation);
  j["periodicity"] = entry(periodicity, tol_periodicity);
  j["gradient"] = entry(gradient, tol_gradient);
  return j.dump(2);
}

SymmetryReport run_symmetry_checks(const RunConfig &config, int trials,
                                   std::uint64_t seed) {
  SymmetryReport rep;
  rep.trials = trials;
  CounterRng rng(seed, RngStream::kCheck);
  const AtomTable table = load_atom_table(config);
  std::vector<int> pool;
  for (int z = 1; z <= 118; ++z)
    if (table.contains(z))
      pool.push_back(z);
  auto remap = [&pool](const CrystalStructure &s) {
    std::vector<int> species = s.species();
    for (int &z: species)
      z = pool[z % pool.size()];
    return CrystalStructure(species, s.frac_coords(), s.lattice());
  };

  const FeaturizerOptions fo = config.featurizer();
  const CrystalModel<double> model(config.model(true, false), config.seed);

  for (int t = 0; t < trials; ++t) {
    const CrystalStructure s = remap(random_structure(rng, 2, 16));
    const Evaluation base = evaluate(model, s, table, fo);
    auto outputs_diff = [&base](const Evaluation &o) {
      return std::max({ max_abs_diff(base.se3, o.se3),
                        max_abs_diff(base.so3, o.so3),
                        max_abs_diff(base.prediction, o.prediction) });
    };

    // rigid motion
    const GroupAction g = random_action(rng);
    rep.invariance = std::max(
      rep.invariance, outputs_diff(evaluate(model, apply_group_action(s, g),
                                            table, fo)));

    // pure rotation: equivariant blocks and edge vectors
    GroupAction rot;
    rot.rotation = random_rotation(rng);
    const Evaluation r = evaluate(model, apply_group_action(s, rot), table,
                                  fo);
    const int channels = model.config().so3_channels();
    for (int l = 1; l <= config.l_max; ++l) {
      const Eigen::MatrixXd d = wigner_matrix(rot.rotation, l);
      const int off = channels * l * l, len = 2 * l + 1;
      const int cols = irreps_dim(channels, config.l_max);
      double err = 0.0, mag = 0.0;
      for (int i = 0; i < s.num_atoms(); ++i)
        for (int c = 0; c < channels; ++c) {
          Eigen::VectorXd x(len), y(len);
          for (int m = 0; m < len; ++m) {
            x[m] = base.tp1[i * cols + off + c * len + m];
            y[m] = r.tp1[i * cols + off + c * len + m];
          }
          err = std::max(err, (y - d * x).cwiseAbs().maxCoeff());
          mag = std::max(mag, x.cwiseAbs().maxCoeff());
        }
      if (mag > 0.0)
        rep.equivariance = std::max(rep.equivariance, err / mag);
    }
    std::map<std::tuple<int, int, std::array<int, 3>>, Vec3> rotated;
    for (const auto &e: r.graph.edges)
      rotated[{ e.src, e.dst, e.image }] = e.vector;
    if (rotated.size() != base.graph.edges.size())
      rep.edge_vectors = INFINITY;
    for (const auto &e: base.graph.edges) {
      auto it = rotated.find({ e.src, e.dst, e.image });
      const double err = it == rotated.end()
                           ? INFINITY
                           : (it->second - rot.rotation * e.vector)
                               .cwiseAbs()
                               .maxCoeff();
      rep.edge_vectors = std::max(rep.edge_vectors, err);
    }

    // relabeling
    const auto perm = random_permutation(s.num_atoms(), rng);
    rep.permutation = std::max(
      rep.permutation,
      outputs_diff(evaluate(model, permute_atoms(s, perm), table, fo)));

    // integer shifts of the fractional coordinates
    std::vector<Vec3> shifted = s.frac_coords();
    for (Vec3 &f: shifted)
      for (int k = 0; k < 3; ++k)
        f[k] += static_cast<double>(static_cast<int>(rng.below(7)) - 3);
    const Evaluation p = evaluate(
      model, CrystalStructure(s.species(), shifted, s.lattice()), table, fo);
    rep.periodicity = std::max(
      { rep.periodicity, outputs_diff(p),
        feature_diff(base.features, p.features) });
  }

  // gradients of the reduced model
  RunConfig small = config;
  small.width = 8;
  small.distance_rbf = 8;
  small.angle_rbf = 8;
  small.se3_node_layers = 1;
  small.so3_node_layers = 1;
  small.cutoff = 4.0;
  small.max_neighbors = 6;
  const FeaturizerOptions so = small.featurizer();
  std::vector<GraphFeatures> feats;
  for (int k = 0; k < 3; ++k)
    feats.push_back(featurize(
      build_graph(remap(random_structure(rng, 2, 3)), so.graph), table, so));
  std::vector<const GraphFeatures *> fptr;
  for (const auto &f: feats)
    fptr.push_back(&f);
  const auto in = make_inputs<double>(fptr);

  CrystalModel<double> tuned(small.model(true, false), small.seed);
  const auto target = Tensor<double>::from_data({ 3, 1 }, { 0.3, -1.2, 0.8 });
  auto finetune_loss = [&]() {
    return mse_loss(tuned.forward(in, RunMode::kTrain).prediction, target);
  };
  for (const auto &c: check_gradients(tuned.params(), finetune_loss, 1e-5, 8,
                                      rng))
    rep.gradient = std::max(rep.gradient, c.rel_error);

  CrystalModel<double> pre(small.model(false, true), small.seed);
  std::vector<NoisySample> noise;
  std::vector<GraphFeatures> noisy;
  for (const auto &f: feats) {
    noise.push_back(inject_noise(f, small.noise_sigma, rng));
    noisy.push_back(apply_noise(f, noise.back(), so));
  }
  std::vector<const GraphFeatures *> nf;
  std::vector<const NoisySample *> np;
  for (std::size_t k = 0; k < feats.size(); ++k) {
    nf.push_back(&noisy[k]);
    np.push_back(&noise[k]);
  }
  const auto noisy_in = make_inputs<double>(nf);
  const auto targets = noise_targets<double>(np);
  auto pretrain_total = [&]() {
    return pretrain_loss(pre, noisy_in, targets, small.loss_weights(),
                         small.tau, RunMode::kTrain)
      .total;
  };
  for (const auto &c: check_gradients(pre.params(), pretrain_total, 1e-5, 8,
                                      rng))
    rep.gradient = std::max(rep.gradient, c.rel_error);
  return rep;
}

}  // namespace mvcgt
