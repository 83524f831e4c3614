//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/config.h"

#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace mvcgt {
namespace {
  using nlohmann::json;

  std::string join_problems(const std::vector<std::string> &problems) {
    std::string out = "invalid configuration:";
    for (const auto &p: problems)
      out += "\n  - " + p;
    return out;
  }

  // Reads one JSON value into a typed member, reporting type errors.
  template <class V>
  bool read_value(const json &j, V &out, std::string &error) {
    if constexpr (std::is_same_v<V, std::string>) {
      if (!j.is_string()) {
        error = "expected a string";
        return false;
      }
      out = j.get<std::string>();
    } else if constexpr (std::is_same_v<V, double>) {
      if (!j.is_number()) {
        error = "expected a number";
        return false;
      }
      out = j.get<double>();
    } else if constexpr (std::is_same_v<V, std::uint64_t>) {
      // nlohmann stores every non-negative integer literal as unsigned
      if (!j.is_number_unsigned()) {
        error = "expected a non-negative integer";
        return false;
      }
      out = j.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<V>) {
      if (!j.is_number_integer()) {
        error = "expected an integer";
        return false;
      }
      const auto v = j.get<std::int64_t>();
      if (v < std::numeric_limits<V>::min()
          || v > std::numeric_limits<V>::max()) {
        error = "integer out of range";
        return false;
      }
      out = static_cast<V>(v);
    } else {
      static_assert(std::is_same_v<V, std::array<double, 3>>);
      if (!j.is_array() || j.size() != 3) {
        error = "expected an array of three numbers";
        return false;
      }
      for (std::size_t k = 0; k < 3; ++k) {
        if (!j[k].is_number()) {
          error = "expected an array of three numbers";
          return false;
        }
        out[k] = j[k].get<double>();
      }
    }
    return true;
  }

  struct Field {
    std::string name;
    std::function<bool(const json &, RunConfig &, std::string &)> read;
    std::function<json(const RunConfig &)> write;
  };

  template <class V>
  Field make_field(std::string name, V RunConfig::*member) {
    return { std::move(name),
             [member](const json &j, RunConfig &c, std::string &err) {
               return read_value(j, c.*member, err);
             },
             [member](const RunConfig &c) { return json(c.*member); } };
  }

  const std::vector<Field> &fields() {
    static const std::vector<Field> table = {
      make_field("cutoff", &RunConfig::cutoff),
      make_field("max_neighbors", &RunConfig::max_neighbors),
      make_field("image_budget", &RunConfig::image_budget),
      make_field("distance_rbf", &RunConfig::distance_rbf),
      make_field("angle_rbf", &RunConfig::angle_rbf),
      make_field("atom_table", &RunConfig::atom_table),
      make_field("atom_dim", &RunConfig::atom_dim),
      make_field("width", &RunConfig::width),
      make_field("se3_node_layers", &RunConfig::se3_node_layers),
      make_field("so3_node_layers", &RunConfig::so3_node_layers),
      make_field("l_max", &RunConfig::l_max),
      make_field("fusion", &RunConfig::fusion),
      make_field("noise_sigma", &RunConfig::noise_sigma),
      make_field("tau", &RunConfig::tau),
      make_field("lambda_contrast", &RunConfig::lambda_contrast),
      make_field("lambda_se3", &RunConfig::lambda_se3),
      make_field("lambda_so3", &RunConfig::lambda_so3),
      make_field("beta1", &RunConfig::beta1),
      make_field("beta2", &RunConfig::beta2),
      make_field("adam_eps", &RunConfig::adam_eps),
      make_field("weight_decay", &RunConfig::weight_decay),
      make_field("warmup_steps", &RunConfig::warmup_steps),
      make_field("lr_min", &RunConfig::lr_min),
      make_field("pretrain_lr", &RunConfig::pretrain_lr),
      make_field("pretrain_batch", &RunConfig::pretrain_batch),
      make_field("pretrain_epochs", &RunConfig::pretrain_epochs),
      make_field("finetune_lr", &RunConfig::finetune_lr),
      make_field("finetune_batch", &RunConfig::finetune_batch),
      make_field("finetune_epochs", &RunConfig::finetune_epochs),
      make_field("patience", &RunConfig::patience),
      make_field("split", &RunConfig::split),
      make_field("seed", &RunConfig::seed),
      make_field("precision", &RunConfig::precision),
      make_field("task", &RunConfig::task),
      make_field("router_batch", &RunConfig::router_batch),
      make_field("check_trials", &RunConfig::check_trials),
    };
    return table;
  }
}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)),
      problems_(std::move(problems)) { }

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> p;
  auto need = [&p](bool ok, const std::string &msg) {
    if (!ok)
      p.push_back(msg);
  };
  need(cutoff > 0.0, "cutoff must be > 0");
  need(max_neighbors >= 1, "max_neighbors must be >= 1");
  need(image_budget >= 1, "image_budget must be >= 1");
  need(distance_rbf >= 2, "distance_rbf must be >= 2");
  need(angle_rbf >= 2, "angle_rbf must be >= 2");
  need(atom_dim >= 1, "atom_dim must be >= 1");
  need(width >= 1, "width must be >= 1");
  need(se3_node_layers >= 0, "se3_node_layers must be >= 0");
  need(so3_node_layers >= 0, "so3_node_layers must be >= 0");
  need(l_max >= 0 && l_max <= 3, "l_max must be in [0, 3]");
  need(fusion == "moe" || fusion == "concat",
       "fusion must be \"moe\" or \"concat\"");
  need(noise_sigma > 0.0, "noise_sigma must be > 0");
  need(tau > 0.0, "tau must be > 0");
  need(lambda_contrast >= 0.0, "lambda_contrast must be >= 0");
  need(lambda_se3 >= 0.0, "lambda_se3 must be >= 0");
  need(lambda_so3 >= 0.0, "lambda_so3 must be >= 0");
  need(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0, 1)");
  need(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0, 1)");
  need(adam_eps > 0.0, "adam_eps must be > 0");
  need(weight_decay >= 0.0, "weight_decay must be >= 0");
  need(warmup_steps >= 0, "warmup_steps must be >= 0");
  need(lr_min >= 0.0, "lr_min must be >= 0");
  need(pretrain_lr > 0.0, "pretrain_lr must be > 0");
  need(pretrain_lr >= lr_min, "pretrain_lr must be >= lr_min");
  need(pretrain_batch >= 2, "pretrain_batch must be >= 2");
  need(pretrain_epochs >= 1, "pretrain_epochs must be >= 1");
  need(finetune_lr > 0.0, "finetune_lr must be > 0");
  need(finetune_lr >= lr_min, "finetune_lr must be >= lr_min");
  need(finetune_batch >= 1, "finetune_batch must be >= 1");
  need(finetune_epochs >= 1, "finetune_epochs must be >= 1");
  need(patience >= 0, "patience must be >= 0");
  bool split_ok = true;
  for (double r: split)
    split_ok = split_ok && r >= 0.0;
  need(split_ok && std::abs(split[0] + split[1] + split[2] - 1.0) < 1e-9,
       "split ratios must be non-negative and sum to 1");
  need(split[0] > 0.0, "split must give the training set a positive share");
  need(precision == "f32" || precision == "f64",
       "precision must be \"f32\" or \"f64\"");
  need(!task.empty(), "task must be non-empty");
  need(router_batch >= 1, "router_batch must be >= 1");
  need(check_trials >= 1, "check_trials must be >= 1");
  return p;
}

void RunConfig::validate() const {
  auto p = problems();
  if (!p.empty())
    throw ConfigError(std::move(p));
}

FeaturizerOptions RunConfig::featurizer() const {
  FeaturizerOptions f;
  f.graph.cutoff = cutoff;
  f.graph.max_neighbors = max_neighbors;
  f.graph.image_budget = image_budget;
  f.distance_rbf = distance_rbf;
  f.angle_rbf = angle_rbf;
  f.l_max = l_max;
  return f;
}

ModelConfig RunConfig::model(bool with_fusion_head,
                             bool with_denoise_heads) const {
  ModelConfig m;
  m.atom_dim = atom_dim;
  m.width = width;
  m.se3_node_layers = se3_node_layers;
  m.so3_node_layers = so3_node_layers;
  m.l_max = l_max;
  m.distance_rbf = distance_rbf;
  m.angle_rbf = angle_rbf;
  m.fusion = parse_fusion(fusion);
  m.with_fusion_head = with_fusion_head;
  m.with_denoise_heads = with_denoise_heads;
  return m;
}

AdamWOptions RunConfig::optimizer(double lr) const {
  return { lr, beta1, beta2, adam_eps, weight_decay };
}

LossWeights RunConfig::loss_weights() const {
  return { lambda_contrast, lambda_se3, lambda_so3 };
}

std::string RunConfig::to_json() const {
  json j = json::object();
  for (const auto &f: fields())
    j[f.name] = f.write(*this);
  return j.dump(2);
}

RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ConfigError({ std::string("config is not valid JSON: ") + e.what() });
  }
  if (!j.is_object())
    throw ConfigError({ "config must be a JSON object" });

  RunConfig c;
  std::vector<std::string> problems;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const Field *field = nullptr;
    for (const auto &f: fields())
      if (f.name == it.key())
        field = &f;
    if (!field) {
      problems.push_back("unknown key \"" + it.key() + "\"");
      continue;
    }
    std::string err;
    if (!field->read(it.value(), c, err))
      problems.push_back("\"" + it.key() + "\": " + err);
  }
  for (auto &p: c.problems())
    problems.push_back(std::move(p));
  if (!problems.empty())
    throw ConfigError(std::move(problems));
  return c;
}

RunConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError({ "cannot open config file " + path });
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace mvcgt
