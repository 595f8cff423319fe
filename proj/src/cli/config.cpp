#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "h2coord/cli.hpp"

namespace h2coord::cli {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void allow_keys(const json& obj, const std::string& path, const std::set<std::string>& keys) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    (void)v;
    if (!keys.count(k)) throw ConfigError(join(path, k), "unknown field");
  }
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where, "expected a finite number");
  return v;
}

int as_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where, "expected an integer");
  return j.get<int>();
}

std::vector<double> as_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    out.push_back(as_number(j[k], where + "[" + std::to_string(k) + "]"));
  }
  return out;
}

Rows as_rows(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where, "expected a non-empty array of rows");
  Rows out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string w = where + "[" + std::to_string(k) + "]";
    out.push_back(as_vector(j[k], w));
    if (out.back().empty()) throw ConfigError(w, "empty row");
    if (out.back().size() != out.front().size()) throw ConfigError(w, "ragged matrix rows");
  }
  return out;
}

std::string as_string(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_string()) throw ConfigError(where, "expected a string");
  const std::string s = j.get<std::string>();
  if (!allowed.count(s)) {
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : "|") + a;
    throw ConfigError(where, "expected one of " + list + ", got \"" + s + "\"");
  }
  return s;
}

template <class F>
void optional_field(const json& obj, const std::string& path, const char* key, F&& f) {
  if (obj.contains(key)) f(obj.at(key), join(path, key));
}

Mat to_mat(const Rows& rows) {
  Mat M(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(i, j) = rows[i][j];
  }
  return M;
}

json rows_json(const Rows& rows) { return json(rows); }

ConstraintConfig parse_constraint(const json& j, const std::string& path) {
  allow_keys(j, path, {"kind", "h"});
  ConstraintConfig c;
  optional_field(j, path, "kind", [&](const json& v, const std::string& w) {
    c.kind = as_string(v, w, {"none", "delay", "zoh", "opthold"});
  });
  optional_field(j, path, "h", [&](const json& v, const std::string& w) { c.h = as_number(v, w); });
  if (c.kind != "none" && !(c.h > 0.0)) throw ConfigError(join(path, "h"), "must be positive");
  return c;
}

DisturbanceConfig parse_disturbance(const json& j, const std::string& path) {
  allow_keys(j, path, {"kind", "agent", "channel", "time", "seed", "intensity", "samples"});
  DisturbanceConfig d;
  optional_field(j, path, "kind", [&](const json& v, const std::string& w) {
    d.kind = as_string(v, w, {"none", "impulse", "noise", "waveform"});
  });
  optional_field(j, path, "agent", [&](const json& v, const std::string& w) {
    d.agent = as_int(v, w);
    if (d.agent < 1) throw ConfigError(w, "agent index is 1-based");
  });
  optional_field(j, path, "channel", [&](const json& v, const std::string& w) {
    d.channel = as_int(v, w);
    if (d.channel < 1) throw ConfigError(w, "channel index is 1-based");
  });
  optional_field(j, path, "time", [&](const json& v, const std::string& w) {
    d.time = as_number(v, w);
    if (d.time < 0.0) throw ConfigError(w, "must be nonnegative");
  });
  optional_field(j, path, "seed", [&](const json& v, const std::string& w) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(w, "expected a nonnegative integer");
    }
    d.seed = v.get<std::uint64_t>();
  });
  optional_field(j, path, "intensity", [&](const json& v, const std::string& w) {
    d.intensity = as_number(v, w);
    if (d.intensity < 0.0) throw ConfigError(w, "must be nonnegative");
  });
  optional_field(j, path, "samples", [&](const json& v, const std::string& w) {
    if (!v.is_array()) throw ConfigError(w, "expected an array of matrices");
    for (std::size_t k = 0; k < v.size(); ++k) {
      d.samples.push_back(as_rows(v[k], w + "[" + std::to_string(k) + "]"));
    }
  });
  if (d.kind == "waveform" && d.samples.empty()) {
    throw ConfigError(join(path, "samples"), "waveform needs at least one sample");
  }
  return d;
}

SimSection parse_sim(const json& j, const std::string& path) {
  allow_keys(j, path, {"dt", "T", "disturbance"});
  SimSection s;
  optional_field(j, path, "dt", [&](const json& v, const std::string& w) {
    s.dt = as_number(v, w);
    if (!(s.dt > 0.0)) throw ConfigError(w, "must be positive");
  });
  optional_field(j, path, "T", [&](const json& v, const std::string& w) {
    s.T = as_number(v, w);
    if (!(s.T > 0.0)) throw ConfigError(w, "must be positive");
  });
  optional_field(j, path, "disturbance",
                 [&](const json& v, const std::string& w) { s.disturbance = parse_disturbance(v, w); });
  return s;
}

ReferenceConfig parse_reference(const json& j, const std::string& path) {
  allow_keys(j, path,
             {"kind", "value", "start", "speed", "offset", "amplitude", "frequency", "phase"});
  ReferenceConfig r;
  optional_field(j, path, "kind", [&](const json& v, const std::string& w) {
    r.kind = as_string(v, w, {"constant", "ramp", "sinusoid"});
  });
  const auto num = [&](const char* key, double& dst) {
    optional_field(j, path, key, [&](const json& v, const std::string& w) { dst = as_number(v, w); });
  };
  num("value", r.value);
  num("start", r.start);
  num("speed", r.speed);
  num("offset", r.offset);
  num("amplitude", r.amplitude);
  num("frequency", r.frequency);
  num("phase", r.phase);
  return r;
}

PlatoonConfig parse_platoon(const json& j, const std::string& path) {
  allow_keys(j, path,
             {"nu", "kappa0", "kappa1", "q1", "q2", "delta", "h", "reference", "p0", "v0"});
  PlatoonConfig p;
  optional_field(j, path, "nu", [&](const json& v, const std::string& w) { p.nu = as_int(v, w); });
  const auto num = [&](const char* key, double& dst) {
    optional_field(j, path, key, [&](const json& v, const std::string& w) { dst = as_number(v, w); });
  };
  num("kappa0", p.kappa0);
  num("kappa1", p.kappa1);
  num("q1", p.q1);
  num("q2", p.q2);
  num("h", p.h);
  if (!j.contains("delta")) throw ConfigError(join(path, "delta"), "missing field");
  p.delta = as_vector(j.at("delta"), join(path, "delta"));
  optional_field(j, path, "reference",
                 [&](const json& v, const std::string& w) { p.reference = parse_reference(v, w); });
  optional_field(j, path, "p0", [&](const json& v, const std::string& w) { p.p0 = as_vector(v, w); });
  optional_field(j, path, "v0", [&](const json& v, const std::string& w) { p.v0 = as_vector(v, w); });
  return p;
}

void check_dims(const ProblemConfig& c) {
  const std::size_t n = c.A->size();
  if ((*c.A)[0].size() != n) throw ConfigError("A", "must be square");
  const auto rows = [](const Rows& r) { return r.size(); };
  const auto cols = [](const Rows& r) { return r.front().size(); };
  if (rows(*c.Bw) != n) throw ConfigError("Bw", "must have as many rows as A");
  if (rows(*c.Bu) != n) throw ConfigError("Bu", "must have as many rows as A");
  if (cols(*c.Cz) != n) throw ConfigError("Cz", "must have as many columns as A");
  if (rows(*c.Dzu) != rows(*c.Cz)) throw ConfigError("Dzu", "must have as many rows as Cz");
  if (cols(*c.Dzu) != cols(*c.Bu)) throw ConfigError("Dzu", "must have as many columns as Bu");
  if (*c.nu < 1) throw ConfigError("nu", "must be positive");
  if (c.mu->size() != static_cast<std::size_t>(*c.nu)) {
    throw ConfigError("mu", "expected " + std::to_string(*c.nu) + " entries (nu), got " +
                                std::to_string(c.mu->size()));
  }
  const auto& d = c.sim.disturbance;
  if (d.kind == "impulse") {
    if (d.agent > *c.nu) throw ConfigError("sim.disturbance.agent", "exceeds nu");
    if (static_cast<std::size_t>(d.channel) > cols(*c.Bw)) {
      throw ConfigError("sim.disturbance.channel", "exceeds the number of disturbance channels");
    }
  }
  if (d.kind == "waveform") {
    for (std::size_t k = 0; k < d.samples.size(); ++k) {
      if (rows(d.samples[k]) != cols(*c.Bw) || cols(d.samples[k]) != static_cast<std::size_t>(*c.nu)) {
        throw ConfigError("sim.disturbance.samples[" + std::to_string(k) + "]",
                          "each sample must be r x nu");
      }
    }
  }
}

std::string location(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

ProblemConfig parse_config(const json& doc) {
  allow_keys(doc, "",
             {"A", "Bw", "Bu", "Cz", "Dzu", "nu", "mu", "constraint", "sim", "sweep", "overrides",
              "platoon"});
  ProblemConfig c;
  const std::vector<std::string> model_keys = {"A", "Bw", "Bu", "Cz", "Dzu", "nu", "mu"};
  bool any_model = false;
  for (const auto& k : model_keys) any_model = any_model || doc.contains(k);
  if (any_model || !doc.contains("platoon")) {
    for (const auto& k : model_keys) {
      if (!doc.contains(k)) throw ConfigError(k, "missing field");
    }
    c.A = as_rows(doc.at("A"), "A");
    c.Bw = as_rows(doc.at("Bw"), "Bw");
    c.Bu = as_rows(doc.at("Bu"), "Bu");
    c.Cz = as_rows(doc.at("Cz"), "Cz");
    c.Dzu = as_rows(doc.at("Dzu"), "Dzu");
    c.nu = as_int(doc.at("nu"), "nu");
    c.mu = as_vector(doc.at("mu"), "mu");
  }
  optional_field(doc, "", "constraint",
                 [&](const json& v, const std::string& w) { c.constraint = parse_constraint(v, w); });
  optional_field(doc, "", "sim", [&](const json& v, const std::string& w) { c.sim = parse_sim(v, w); });
  optional_field(doc, "", "sweep", [&](const json& v, const std::string& w) {
    allow_keys(v, w, {"h_values"});
    c.sweep_h = v.contains("h_values") ? as_vector(v.at("h_values"), join(w, "h_values"))
                                       : std::vector<double>{};
    for (std::size_t k = 0; k < c.sweep_h->size(); ++k) {
      if (!((*c.sweep_h)[k] > 0.0)) {
        throw ConfigError(join(w, "h_values") + "[" + std::to_string(k) + "]", "must be positive");
      }
    }
  });
  optional_field(doc, "", "overrides", [&](const json& v, const std::string& w) {
    allow_keys(v, w, {"allow_singular_Bw"});
    if (v.contains("allow_singular_Bw")) {
      if (!v.at("allow_singular_Bw").is_boolean()) {
        throw ConfigError(join(w, "allow_singular_Bw"), "expected true or false");
      }
      c.allow_singular_Bw = v.at("allow_singular_Bw").get<bool>();
    }
  });
  optional_field(doc, "", "platoon",
                 [&](const json& v, const std::string& w) { c.platoon = parse_platoon(v, w); });
  if (c.has_model()) check_dims(c);
  return c;
}

ProblemConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(location(text, e.byte), "malformed JSON");
  }
  return parse_config(doc);
}

ProblemConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open configuration file");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.where(),
                      std::string(e.what()).substr(e.where().size() + 2));
  }
}

json to_json(const ProblemConfig& c) {
  json doc = json::object();
  if (c.has_model()) {
    doc["A"] = rows_json(*c.A);
    doc["Bw"] = rows_json(*c.Bw);
    doc["Bu"] = rows_json(*c.Bu);
    doc["Cz"] = rows_json(*c.Cz);
    doc["Dzu"] = rows_json(*c.Dzu);
    doc["nu"] = *c.nu;
    doc["mu"] = *c.mu;
  }
  doc["constraint"] = {{"kind", c.constraint.kind}, {"h", c.constraint.h}};
  const auto& d = c.sim.disturbance;
  json dist = {{"kind", d.kind},         {"agent", d.agent}, {"channel", d.channel},
               {"time", d.time},         {"seed", d.seed},   {"intensity", d.intensity}};
  if (!d.samples.empty()) dist["samples"] = d.samples;
  doc["sim"] = {{"dt", c.sim.dt}, {"T", c.sim.T}, {"disturbance", dist}};
  if (c.sweep_h) doc["sweep"] = {{"h_values", *c.sweep_h}};
  doc["overrides"] = {{"allow_singular_Bw", c.allow_singular_Bw}};
  if (c.platoon) {
    const auto& p = *c.platoon;
    const auto& r = p.reference;
    json pj = {{"nu", p.nu}, {"kappa0", p.kappa0}, {"kappa1", p.kappa1}, {"q1", p.q1},
               {"q2", p.q2}, {"delta", p.delta},   {"h", p.h}};
    pj["reference"] = {{"kind", r.kind},           {"value", r.value},         {"start", r.start},
                       {"speed", r.speed},         {"offset", r.offset},       {"amplitude", r.amplitude},
                       {"frequency", r.frequency}, {"phase", r.phase}};
    if (!p.p0.empty()) pj["p0"] = p.p0;
    if (!p.v0.empty()) pj["v0"] = p.v0;
    doc["platoon"] = pj;
  }
  return doc;
}

std::string config_hash(const ProblemConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

AgentModel to_model(const ProblemConfig& c) {
  if (!c.has_model()) throw ConfigError("A", "missing field (agent model required)");
  AgentModel m;
  m.A = to_mat(*c.A);
  m.Bw = to_mat(*c.Bw);
  m.Bu = to_mat(*c.Bu);
  m.Cz = to_mat(*c.Cz);
  m.Dzu = to_mat(*c.Dzu);
  return m;
}

ConstraintClass to_constraint(const ConstraintConfig& c) {
  if (c.kind == "none") return constraint::Unconstrained{};
  if (c.kind == "delay") return constraint::Delay{c.h};
  if (c.kind == "zoh") return constraint::SampledZoh{c.h};
  if (c.kind == "opthold") return constraint::SampledOptimalHold{c.h};
  throw ConfigError("constraint.kind", "unknown kind \"" + c.kind + "\"");
}

Vec raw_unit_weights(const ProblemConfig& c) {
  if (!c.mu) throw ConfigError("mu", "missing field");
  Vec mu = Eigen::Map<const Vec>(c.mu->data(), static_cast<Eigen::Index>(c.mu->size()));
  const double norm = mu.norm();
  if (!(norm > 0.0)) throw ConfigError("mu", "all weights are zero");
  return mu / norm;
}

sim::DisturbanceSpec to_disturbance(const SimSection& s, std::optional<std::uint64_t> seed) {
  const auto& d = s.disturbance;
  if (d.kind == "none") return sim::disturbance::None{};
  if (d.kind == "impulse") return sim::disturbance::ImpulseChannel{d.agent - 1, d.channel - 1, d.time};
  if (d.kind == "noise") return sim::disturbance::WhiteNoise{seed.value_or(d.seed), d.intensity};
  sim::disturbance::Waveform wf;
  for (const auto& rows : d.samples) wf.samples.push_back(to_mat(rows));
  return wf;
}

platoon::PlatoonSpec to_platoon(const PlatoonConfig& p) {
  platoon::PlatoonSpec s;
  s.nu = p.nu;
  s.kappa0 = p.kappa0;
  s.kappa1 = p.kappa1;
  s.q1 = p.q1;
  s.q2 = p.q2;
  s.delta = Eigen::Map<const Vec>(p.delta.data(), static_cast<Eigen::Index>(p.delta.size()));
  s.h = p.h;
  const auto& r = p.reference;
  if (r.kind == "constant") {
    s.reference = platoon::reference::Constant{r.value};
  } else if (r.kind == "ramp") {
    s.reference = platoon::reference::Ramp{r.start, r.speed};
  } else {
    s.reference = platoon::reference::Sinusoid{r.offset, r.amplitude, r.frequency, r.phase};
  }
  return s;
}

}  // namespace h2coord::cli
