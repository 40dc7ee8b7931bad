#include "gvi/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "gvi/error.hpp"

namespace gvi {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& key, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why);
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.contains(k)) fail(where.empty() ? k : where + "." + k, "unknown key");
  }
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) fail(key, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(key, "expected a finite number");
  return x;
}

std::uint64_t as_u64(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) fail(key, "expected a non-negative integer");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  fail(key, "expected an integer");
}

std::size_t as_size(const json& v, const std::string& key) { return static_cast<std::size_t>(as_u64(v, key)); }

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) fail(key, "expected a string");
  return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) fail(key, "expected true or false");
  return v.get<bool>();
}

std::vector<double> broadcast(const json& v, std::size_t dim, const std::string& key) {
  if (v.is_array()) {
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_double(v[i], key + "[" + std::to_string(i) + "]"));
    if (out.size() != dim) {
      fail(key, "expected " + std::to_string(dim) + " entries, got " + std::to_string(out.size()));
    }
    return out;
  }
  return std::vector<double>(dim, as_double(v, key));
}

// Rewraps library validation errors so the message names the config key.
template <typename F>
auto keyed(const std::string& key, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    fail(key, e.what());
  } catch (const std::invalid_argument& e) {
    fail(key, e.what());
  }
}

FamilySpec parse_family(const json& raw) {
  const json node = raw.is_string() ? json{{"kind", raw}} : raw;
  if (!node.is_object()) fail("family", "expected a string or an object");
  reject_unknown(node, {"kind", "components"}, "family");
  if (!node.contains("kind")) fail("family.kind", "missing");
  const std::string kind = as_string(node["kind"], "family.kind");
  if (kind == "MeanFieldNormal") {
    if (node.contains("components") && as_size(node["components"], "family.components") != 1) {
      fail("family.components", "MeanFieldNormal has exactly one component");
    }
    return FamilySpec::mean_field();
  }
  if (kind == "NormalMixture") {
    const std::size_t k = node.contains("components") ? as_size(node["components"], "family.components") : 2;
    if (k == 0) fail("family.components", "must be positive");
    return FamilySpec::mixture(k);
  }
  fail("family.kind", "unknown family '" + kind + "'");
}

}  // namespace

DivergenceSpec parse_divergence(const json& node) {
  if (node.is_string()) return keyed("divergence", [&] { return DivergenceSpec(parse_divergence_kind(node.get<std::string>())); });
  if (!node.is_object()) fail("divergence", "expected a string or an object");
  reject_unknown(node, {"kind", "alpha"}, "divergence");
  if (!node.contains("kind")) fail("divergence.kind", "missing");
  const std::string kind = as_string(node["kind"], "divergence.kind");
  std::optional<double> alpha;
  if (node.contains("alpha") && !node["alpha"].is_null()) alpha = as_double(node["alpha"], "divergence.alpha");
  return keyed("divergence", [&] { return DivergenceSpec(parse_divergence_kind(kind), alpha); });
}

LossSpec parse_loss(const json& node) {
  if (node.is_string()) return keyed("loss", [&] { return LossSpec(parse_loss_kind(node.get<std::string>())); });
  if (!node.is_object()) fail("loss", "expected a string or an object");
  reject_unknown(node, {"kind", "gamma"}, "loss");
  if (!node.contains("kind")) fail("loss.kind", "missing");
  const std::string kind = as_string(node["kind"], "loss.kind");
  std::optional<double> gamma;
  if (node.contains("gamma") && !node["gamma"].is_null()) gamma = as_double(node["gamma"], "loss.gamma");
  return keyed("loss", [&] { return LossSpec(parse_loss_kind(kind), gamma); });
}

OptimConfig parse_optim(const json& node, OptimConfig base) {
  if (!node.is_object()) fail("optim", "expected an object");
  reject_unknown(node,
                 {"learning_rate", "iterations", "mc_samples", "seed", "adam_beta1", "adam_beta2", "adam_eps",
                  "trace_every", "final_samples"},
                 "optim");
  for (const auto& [k, v] : node.items()) {
    const std::string key = "optim." + k;
    if (k == "learning_rate") base.learning_rate = as_double(v, key);
    else if (k == "iterations") base.iterations = as_size(v, key);
    else if (k == "mc_samples") base.mc_samples = as_size(v, key);
    else if (k == "seed") base.seed = as_u64(v, key);
    else if (k == "adam_beta1") base.adam_beta1 = as_double(v, key);
    else if (k == "adam_beta2") base.adam_beta2 = as_double(v, key);
    else if (k == "adam_eps") base.adam_eps = as_double(v, key);
    else if (k == "trace_every") base.trace_every = as_size(v, key);
    else if (k == "final_samples") base.final_samples = as_size(v, key);
  }
  keyed("optim", [&] { base.validate(); });
  return base;
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  reject_unknown(doc,
                 {"model", "d", "n_grid", "n", "divergences", "divergence", "loss", "prior", "family", "replicates",
                  "replicate", "contaminate", "starts", "seed", "output_dir", "workers", "optim"},
                 "");
  ExperimentConfig out;
  SweepConfig& s = out.sweep;
  if (doc.contains("model")) s.model = keyed("model", [&] { return parse_model_kind(as_string(doc["model"], "model")); });
  if (doc.contains("d")) s.d = as_size(doc["d"], "d");
  if (s.d == 0) fail("d", "must be positive");
  // A model without an explicit loss gets its natural likelihood loss.
  s.loss = doc.contains("loss") ? parse_loss(doc["loss"])
                                : LossSpec(s.model == ModelKind::BLR ? LossKind::BlrNll : LossKind::BmmNll);
  if (doc.contains("n_grid")) {
    if (!doc["n_grid"].is_array()) fail("n_grid", "expected an array");
    for (std::size_t i = 0; i < doc["n_grid"].size(); ++i) {
      s.n_grid.push_back(as_size(doc["n_grid"][i], "n_grid[" + std::to_string(i) + "]"));
    }
  }
  if (doc.contains("n")) {
    out.n = as_size(doc["n"], "n");
    if (*out.n == 0) fail("n", "must be positive");
  }
  if (doc.contains("divergences")) {
    if (!doc["divergences"].is_array()) fail("divergences", "expected an array");
    for (const auto& d : doc["divergences"]) s.divergences.push_back(parse_divergence(d));
  }
  if (doc.contains("divergence")) out.divergence = parse_divergence(doc["divergence"]);
  if (doc.contains("family")) s.family = parse_family(doc["family"]);
  if (doc.contains("prior")) {
    const json& p = doc["prior"];
    if (!p.is_object()) fail("prior", "expected an object with mu and sigma");
    reject_unknown(p, {"mu", "sigma"}, "prior");
    const std::size_t dim = theta_dim(s.model, s.d);
    const auto mu = p.contains("mu") ? broadcast(p["mu"], dim, "prior.mu") : std::vector<double>(dim, 0.0);
    if (!p.contains("sigma")) fail("prior.sigma", "missing");
    const auto sigma = broadcast(p["sigma"], dim, "prior.sigma");
    std::vector<double> log_sigma;
    for (double v : sigma) {
      if (!(v > 0.0)) fail("prior.sigma", "entries must be positive");
      log_sigma.push_back(std::log(v));
    }
    s.prior = MeanFieldNormal(mu, std::move(log_sigma));
  }
  if (doc.contains("replicates")) s.replicates = as_size(doc["replicates"], "replicates");
  if (doc.contains("replicate")) out.replicate = as_size(doc["replicate"], "replicate");
  if (doc.contains("contaminate")) s.contaminate = as_bool(doc["contaminate"], "contaminate");
  if (doc.contains("starts")) s.starts = as_size(doc["starts"], "starts");
  if (doc.contains("seed")) s.seed = as_u64(doc["seed"], "seed");
  if (doc.contains("output_dir")) s.output_dir = as_string(doc["output_dir"], "output_dir");
  if (doc.contains("workers")) s.workers = as_size(doc["workers"], "workers");
  if (s.workers == 0) fail("workers", "must be positive");
  if (doc.contains("optim")) s.optim = parse_optim(doc["optim"]);
  return out;
}

ExperimentConfig parse_config_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

json to_json(const DivergenceSpec& spec) {
  json j{{"kind", std::string(to_string(spec.kind()))}};
  if (spec.alpha()) j["alpha"] = *spec.alpha();
  return j;
}

json to_json(const LossSpec& spec) {
  json j{{"kind", std::string(to_string(spec.kind()))}};
  if (spec.gamma()) j["gamma"] = *spec.gamma();
  return j;
}

json to_json(const OptimConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"iterations", c.iterations},
              {"mc_samples", c.mc_samples},       {"seed", c.seed},
              {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},           {"trace_every", c.trace_every},
              {"final_samples", c.final_samples}};
}

json to_json(const FamilySpec& family) {
  return json{{"kind", family.kind == FamilyKind::MeanFieldNormal ? "MeanFieldNormal" : "NormalMixture"},
              {"components", family.components}};
}

json to_json(const MeanFieldNormal& q) {
  return json{{"mu", std::vector<double>(q.mu().begin(), q.mu().end())}, {"sigma", q.sigmas()}};
}

}  // namespace gvi
