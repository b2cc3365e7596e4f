#include "mlvae/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include <toml.hpp>

#include "mlvae/errors.hpp"

namespace mlvae {
namespace {

[[noreturn]] void field_error(const std::string& key, const std::string& what) {
  throw ConfigError("config field '" + key + "': " + what);
}

std::int64_t as_int(const toml::node& node, const std::string& key) {
  if (auto v = node.value_exact<std::int64_t>()) return *v;
  field_error(key, "expected an integer");
}

double as_real(const toml::node& node, const std::string& key) {
  if (auto v = node.value_exact<double>()) return *v;
  if (auto v = node.value_exact<std::int64_t>()) return static_cast<double>(*v);
  field_error(key, "expected a number");
}

bool as_bool(const toml::node& node, const std::string& key) {
  if (auto v = node.value_exact<bool>()) return *v;
  field_error(key, "expected true or false");
}

std::string as_string(const toml::node& node, const std::string& key) {
  if (auto v = node.value_exact<std::string>()) return *v;
  field_error(key, "expected a string");
}

std::vector<double> as_real_list(const toml::node& node, const std::string& key) {
  const auto* arr = node.as_array();
  if (arr == nullptr) field_error(key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& item : *arr) out.push_back(as_real(item, key));
  return out;
}

std::vector<Index> as_int_list(const toml::node& node, const std::string& key) {
  const auto* arr = node.as_array();
  if (arr == nullptr) field_error(key, "expected an array of integers");
  std::vector<Index> out;
  for (const auto& item : *arr) out.push_back(static_cast<Index>(as_int(item, key)));
  return out;
}

struct Field {
  std::string key;    // section.name
  std::string alias;  // optional short name
  std::function<void(RunConfig&, const toml::node&, const std::string&)> set;
  std::function<void(const RunConfig&, toml::table&, const std::string&)> emit;

  std::string section() const { return key.substr(0, key.find('.')); }
  std::string name() const { return key.substr(key.find('.') + 1); }
};

template <class Get>
Field integer(std::string key, Get get, std::string alias = {}) {
  return {std::move(key), std::move(alias),
          [get](RunConfig& c, const toml::node& n, const std::string& k) {
            using T = std::remove_reference_t<decltype(get(c))>;
            const std::int64_t v = as_int(n, k);
            if constexpr (std::is_unsigned_v<T>) {
              if (v < 0) field_error(k, "must be >= 0");
            }
            if (v < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
                static_cast<std::uint64_t>(v) > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) {
              field_error(k, "integer out of range");
            }
            get(c) = static_cast<T>(v);
          },
          [get](const RunConfig& c, toml::table& t, const std::string& name) {
            t.insert_or_assign(name, static_cast<std::int64_t>(get(const_cast<RunConfig&>(c))));
          }};
}

template <class Get>
Field real(std::string key, Get get, std::string alias = {}) {
  return {std::move(key), std::move(alias),
          [get](RunConfig& c, const toml::node& n, const std::string& k) {
            const double v = as_real(n, k);
            if (!std::isfinite(v)) field_error(k, "must be finite");
            get(c) = v;
          },
          [get](const RunConfig& c, toml::table& t, const std::string& name) {
            t.insert_or_assign(name, get(const_cast<RunConfig&>(c)));
          }};
}

template <class Get>
Field boolean(std::string key, Get get, std::string alias = {}) {
  return {std::move(key), std::move(alias),
          [get](RunConfig& c, const toml::node& n, const std::string& k) { get(c) = as_bool(n, k); },
          [get](const RunConfig& c, toml::table& t, const std::string& name) {
            t.insert_or_assign(name, get(const_cast<RunConfig&>(c)));
          }};
}

template <class Get>
Field string(std::string key, Get get, std::string alias = {}) {
  return {std::move(key), std::move(alias),
          [get](RunConfig& c, const toml::node& n, const std::string& k) { get(c) = as_string(n, k); },
          [get](const RunConfig& c, toml::table& t, const std::string& name) {
            t.insert_or_assign(name, get(const_cast<RunConfig&>(c)));
          }};
}

template <class Get>
Field real_list(std::string key, Get get) {
  return {std::move(key), {},
          [get](RunConfig& c, const toml::node& n, const std::string& k) { get(c) = as_real_list(n, k); },
          [get](const RunConfig& c, toml::table& t, const std::string& name) {
            toml::array arr;
            for (double v : get(const_cast<RunConfig&>(c))) arr.push_back(v);
            t.insert_or_assign(name, std::move(arr));
          }};
}

template <class Get>
Field int_list(std::string key, Get get) {
  return {std::move(key), {},
          [get](RunConfig& c, const toml::node& n, const std::string& k) { get(c) = as_int_list(n, k); },
          [get](const RunConfig& c, toml::table& t, const std::string& name) {
            toml::array arr;
            for (Index v : get(const_cast<RunConfig&>(c))) arr.push_back(static_cast<std::int64_t>(v));
            t.insert_or_assign(name, std::move(arr));
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(string("run.name", [](RunConfig& c) -> std::string& { return c.name; }));
    f.push_back(integer("run.seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
    f.push_back(boolean("run.deterministic", [](RunConfig& c) -> bool& { return c.deterministic; }));
    f.push_back(integer("run.log_every", [](RunConfig& c) -> std::int64_t& { return c.log_every; }));
    f.push_back(integer("run.checkpoint_every", [](RunConfig& c) -> std::int64_t& { return c.checkpoint_every; }));

    f.push_back({"model.architecture", {},
                 [](RunConfig& c, const toml::node& n, const std::string& k) {
                   try {
                     c.network.architecture = parse_architecture(as_string(n, k));
                   } catch (const ConfigError& e) {
                     field_error(k, e.what());
                   }
                 },
                 [](const RunConfig& c, toml::table& t, const std::string& name) {
                   t.insert_or_assign(name, std::string(to_string(c.network.architecture)));
                 }});
    f.push_back(integer("model.content_dim", [](RunConfig& c) -> Index& { return c.network.content_dim; }, "d_c"));
    f.push_back(integer("model.style_dim", [](RunConfig& c) -> Index& { return c.network.style_dim; }, "d_s"));
    f.push_back(integer("model.height", [](RunConfig& c) -> Index& { return c.network.height; }));
    f.push_back(integer("model.width", [](RunConfig& c) -> Index& { return c.network.width; }));
    f.push_back(integer("model.channels", [](RunConfig& c) -> Index& { return c.network.channels; }));
    f.push_back(int_list("model.conv_channels", [](RunConfig& c) -> std::vector<Index>& { return c.network.conv_channels; }));
    f.push_back(int_list("model.hidden", [](RunConfig& c) -> std::vector<Index>& { return c.network.hidden; }));
    f.push_back(integer("model.critic_feature_dim", [](RunConfig& c) -> Index& { return c.network.critic_feature_dim; }));
    f.push_back(integer("model.critic_hidden", [](RunConfig& c) -> Index& { return c.network.critic_hidden; }));
    f.push_back(real("model.log_var_min", [](RunConfig& c) -> double& { return c.network.log_var_range.min; }));
    f.push_back(real("model.log_var_max", [](RunConfig& c) -> double& { return c.network.log_var_range.max; }));

    f.push_back(integer("objective.group_size", [](RunConfig& c) -> int& { return c.group_size; }, "K"));
    f.push_back(real("objective.beta", [](RunConfig& c) -> double& { return c.beta; }));
    f.push_back({"objective.accumulation", {},
                 [](RunConfig& c, const toml::node& n, const std::string& k) {
                   try {
                     c.accumulation = parse_accumulation(as_string(n, k));
                   } catch (const Error& e) {
                     field_error(k, e.what());
                   }
                 },
                 [](const RunConfig& c, toml::table& t, const std::string& name) {
                   t.insert_or_assign(name, std::string(to_string(c.accumulation)));
                 }});
    f.push_back(boolean("objective.adversarial", [](RunConfig& c) -> bool& { return c.adversarial; }));
    f.push_back(real("objective.target_mi", [](RunConfig& c) -> double& { return c.target_mi; }, "I_star"));
    f.push_back(real("objective.lambda_step", [](RunConfig& c) -> double& { return c.lambda_step; }, "alpha"));
    f.push_back(real("objective.lambda_init", [](RunConfig& c) -> double& { return c.lambda_init; }));

    f.push_back(integer("training.iterations", [](RunConfig& c) -> std::int64_t& { return c.iterations; }, "it"));
    f.push_back(integer("training.batch_groups", [](RunConfig& c) -> Index& { return c.batch_groups; }, "N_B"));
    f.push_back(integer("training.critic_steps", [](RunConfig& c) -> int& { return c.critic_steps; }, "it_T"));
    f.push_back(real("training.lr", [](RunConfig& c) -> double& { return c.optimizer.learning_rate; }));
    f.push_back(real("training.critic_lr", [](RunConfig& c) -> double& { return c.critic_learning_rate; }));
    f.push_back(real("training.adam_beta1", [](RunConfig& c) -> double& { return c.optimizer.beta1; }));
    f.push_back(real("training.adam_beta2", [](RunConfig& c) -> double& { return c.optimizer.beta2; }));
    f.push_back(real("training.adam_epsilon", [](RunConfig& c) -> double& { return c.optimizer.epsilon; }));

    f.push_back(string("data.dataset", [](RunConfig& c) -> std::string& { return c.data.dataset; }));
    f.push_back(string("data.dir", [](RunConfig& c) -> std::string& { return c.data.dir; }));
    f.push_back(integer("data.groups_per_class", [](RunConfig& c) -> int& { return c.data.groups_per_class; }));
    f.push_back(integer("data.split_seed", [](RunConfig& c) -> std::uint64_t& { return c.data.split_seed; }));
    f.push_back(integer("data.model_pool", [](RunConfig& c) -> Index& { return c.data.model_pool; }));
    f.push_back(integer("data.classifier_pool", [](RunConfig& c) -> Index& { return c.data.classifier_pool; }));
    f.push_back(real_list("data.train_angles", [](RunConfig& c) -> std::vector<double>& { return c.data.train_angles; }));

    f.push_back(string("eval.classifier", [](RunConfig& c) -> std::string& { return c.eval.classifier; }));
    f.push_back(real("eval.svm_c", [](RunConfig& c) -> double& { return c.eval.svm_c; }));
    f.push_back(real("eval.svm_gamma", [](RunConfig& c) -> double& { return c.eval.svm_gamma; }));
    f.push_back(integer("eval.grid_size", [](RunConfig& c) -> int& { return c.eval.grid_size; }));
    f.push_back(integer("eval.traversal_steps", [](RunConfig& c) -> int& { return c.eval.traversal_steps; }));
    return f;
  }();
  return table;
}

const Field& resolve_key(const std::string& key) {
  const auto& all = fields();
  if (key.find('.') != std::string::npos) {
    for (const auto& f : all) {
      if (f.key == key) return f;
    }
    throw ConfigError("unknown config field '" + key + "'");
  }
  for (const auto& f : all) {
    if (f.alias == key) return f;
  }
  const Field* match = nullptr;
  for (const auto& f : all) {
    if (f.name() != key) continue;
    if (match != nullptr) {
      throw ConfigError("config field '" + key + "' is ambiguous (" + match->key + ", " + f.key + ")");
    }
    match = &f;
  }
  if (match == nullptr) throw ConfigError("unknown config field '" + key + "'");
  return *match;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) field_error(key, what);
}

}  // namespace

void RunConfig::validate() const {
  require(!name.empty(), "run.name", "must not be empty");
  require(seed <= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()), "run.seed", "must fit in 63 bits");
  require(log_every >= 1, "run.log_every", "must be >= 1");
  require(checkpoint_every >= 0, "run.checkpoint_every", "must be >= 0 (0 disables periodic checkpoints)");
  try {
    network.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  require(group_size >= 1, "objective.group_size", "must be >= 1");
  require(beta >= 0.0, "objective.beta", "must be >= 0");
  require(target_mi > 0.0, "objective.target_mi", "must be > 0");
  require(lambda_step >= 0.0, "objective.lambda_step", "must be >= 0");
  require(lambda_init >= 0.0, "objective.lambda_init", "must be >= 0");
  if (adversarial) {
    require(group_size >= 2, "objective.group_size", "adversarial training needs K >= 2");
    require(batch_groups >= 2, "training.batch_groups", "adversarial training needs N_B >= 2");
  }
  require(iterations >= 0, "training.iterations", "must be >= 0");
  require(batch_groups >= 1, "training.batch_groups", "must be >= 1");
  require(critic_steps >= 0, "training.critic_steps", "must be >= 0");
  require(optimizer.learning_rate > 0.0, "training.lr", "must be > 0");
  require(critic_learning_rate > 0.0, "training.critic_lr", "must be > 0");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "training.adam_beta1", "must be in [0, 1)");
  require(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "training.adam_beta2", "must be in [0, 1)");
  require(optimizer.epsilon > 0.0, "training.adam_epsilon", "must be > 0");
  require(data.dataset == "mnist" || data.dataset == "mnist-rot", "data.dataset", "must be 'mnist' or 'mnist-rot'");
  require(data.groups_per_class >= 1, "data.groups_per_class", "must be >= 1");
  require(data.model_pool >= 1, "data.model_pool", "must be >= 1");
  require(data.classifier_pool >= 1, "data.classifier_pool", "must be >= 1");
  if (data.dataset == "mnist-rot") {
    require(!data.train_angles.empty(), "data.train_angles", "mnist-rot needs at least one angle");
  }
  require(eval.classifier == "svm" || eval.classifier == "logistic", "eval.classifier", "must be 'svm' or 'logistic'");
  require(eval.svm_c > 0.0, "eval.svm_c", "must be > 0");
  require(eval.grid_size >= 1, "eval.grid_size", "must be >= 1");
  require(eval.traversal_steps >= 2, "eval.traversal_steps", "must be >= 2");
}

SplitParams RunConfig::split_params() const {
  SplitParams p;
  p.dataset = data.dataset;
  p.group_size = group_size;
  p.groups_per_class = data.groups_per_class;
  p.seed = data.split_seed;
  p.model_pool = data.model_pool;
  p.classifier_pool = data.classifier_pool;
  if (data.dataset == "mnist-rot") p.train_angles = data.train_angles;
  return p;
}

RunConfig parse_run_config(std::string_view toml_text, std::string_view source) {
  toml::table doc;
  try {
    doc = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    const auto& where = e.source().begin;
    throw ConfigError(std::string(source) + ":" + std::to_string(where.line) + ":" + std::to_string(where.column) +
                      ": " + std::string(e.description()));
  }
  RunConfig config;
  for (const auto& [section_key, section] : doc) {
    const std::string section_name(section_key.str());
    const auto* tbl = section.as_table();
    if (tbl == nullptr) throw ConfigError("config key '" + section_name + "' must be a [section]");
    for (const auto& [key, value] : *tbl) {
      const std::string dotted = section_name + "." + std::string(key.str());
      bool known = false;
      for (const auto& f : fields()) {
        if (f.key == dotted) {
          f.set(config, value, dotted);
          known = true;
          break;
        }
      }
      if (!known) throw ConfigError("unknown config field '" + dotted + "'");
    }
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.string());
}

void apply_overrides(RunConfig& config, std::span<const std::string> overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + item + "' must have the form key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    const Field& field = resolve_key(key);
    toml::table parsed;
    bool typed = true;
    try {
      parsed = toml::parse("v = " + raw);
    } catch (const toml::parse_error&) {
      typed = false;
    }
    if (typed) {
      field.set(config, *parsed.get("v"), field.key);
    } else {
      field.set(config, toml::value<std::string>(raw), field.key);
    }
  }
  config.validate();
}

std::string to_toml(const RunConfig& config) {
  toml::table doc;
  for (const auto& f : fields()) {
    const std::string section = f.section();
    if (!doc.contains(section)) doc.insert(section, toml::table{});
    f.emit(config, *doc.get_as<toml::table>(section), f.name());
  }
  std::ostringstream out;
  out << doc << '\n';
  return out.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace mlvae
