#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "sgtopo/driver.hpp"

namespace sgtopo {

ConfigError::ConfigError(const std::string& message, int line)
    : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + message : "config: " + message),
      line_(line) {}

CatalogGenerator CatalogConfig::generator() const {
  switch (kind) {
    case GeneratorKind::RandomField: {
      RandomFieldGenerator g = random_field;
      g.hypothesis = hypothesis;
      return g;
    }
    case GeneratorKind::Fiber:
      return FiberGenerator{fiber, hypothesis};
    case GeneratorKind::Uniform:
      return UniformGenerator{uniform, hypothesis};
  }
  return random_field;
}

MacroMesh ProblemConfig::mesh() const { return MacroMesh::half_beam(nx, ny, load); }

void ProblemConfig::validate() const {
  if (ny < 1 || nx != 3 * ny) throw ParameterError("mesh: the half beam needs ny >= 1 and nx = 3 ny");
  if (!std::isfinite(load) || load == 0.0) throw ParameterError("mesh: load must be finite and nonzero");
  if (holes_x < 1 || holes_y < 1) throw ParameterError("mesh: hole counts must be >= 1");
  if (!(hole_radius > 0.0)) throw ParameterError("mesh: hole radius must be positive");
  const ObjectiveWeights& w = model.weights;
  for (double v : {w.strain_energy, w.mass, w.perimeter, w.regularization})
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("model: weights must be finite and >= 0");
  if (!(model.mass_target > 0.0 && model.mass_target < 1.0)) throw ParameterError("model: mass target must lie in (0, 1)");
  if (!(model.filter_radius >= 0.0)) throw ParameterError("model: filter radius must be >= 0");
  if (!(model.bounds.lower < model.bounds.upper)) throw ParameterError("model: bounds must satisfy lower < upper");
  if (!(model.truncation.lower < model.truncation.upper)) throw ParameterError("model: truncation must satisfy lower < upper");
  if (!(model.ersatz.smoothing_width > 0.0)) throw ParameterError("model: smoothing width must be positive");
  if (!(model.ersatz.void_factor > 0.0 && model.ersatz.void_factor < 1.0))
    throw ParameterError("model: void factor must lie in (0, 1)");
  if (catalog.source == CatalogSource::File) {
    if (catalog.path.empty()) throw ParameterError("catalog: source = file needs a path");
    if (!std::filesystem::exists(catalog.path)) throw ParameterError("catalog: no such file " + catalog.path.string());
  } else if (catalog.count < 1) {
    throw ParameterError("catalog: count must be >= 1");
  }
  if (catalog.kind == GeneratorKind::RandomField && catalog.random_field.resolution < 2)
    throw ParameterError("catalog: resolution must be >= 2");
  optimizer.validate();
  if (optimizer.samples < 1) throw ParameterError("optimizer: samples must be >= 1");
  if (verification_samples < 1) throw ParameterError("verification: samples must be >= 1");
  if (checkpoint_every < 0) throw ParameterError("run: checkpoint_every must be >= 0");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// shortest text that parses back to the same double
std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& text, const char* what) {
  T v{};
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw ParameterError("expected " + std::string(what) + ", got '" + text + "'");
  return v;
}

double parse_double(const std::string& t) {
  const double v = parse_number<double>(t, "a number");
  if (!std::isfinite(v)) throw ParameterError("expected a finite number, got '" + t + "'");
  return v;
}

bool parse_bool(const std::string& t) {
  const std::string s = lower(t);
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw ParameterError("expected true or false, got '" + t + "'");
}

Range parse_range(const std::string& t) {
  const auto comma = t.find(',');
  if (comma == std::string::npos) {
    const double v = parse_double(trim(t));
    return {v, v};
  }
  const Range r{parse_double(trim(t.substr(0, comma))), parse_double(trim(t.substr(comma + 1)))};
  if (r.lower > r.upper) throw ParameterError("range '" + t + "' has lower > upper");
  return r;
}

std::string format_range(const Range& r) { return format_double(r.lower) + ", " + format_double(r.upper); }

struct Key {
  std::string section;
  std::string name;
  bool required = false;
  std::function<void(ProblemConfig&, const std::string&)> set;
  std::function<std::string(const ProblemConfig&)> get;
  std::string full() const { return section + "." + name; }
};

// Accessor returning a reference into the config; used for both directions.
template <class Ref>
auto ref_of(Ref ref) {
  return [ref](const ProblemConfig& c) -> decltype(auto) { return ref(const_cast<ProblemConfig&>(c)); };
}

template <class Ref>
Key real(const char* s, const char* n, Ref ref) {
  return {s, n, false, [ref](ProblemConfig& c, const std::string& t) { ref(c) = parse_double(t); },
          [ref](const ProblemConfig& c) { return format_double(ref_of(ref)(c)); }};
}

template <class T, class Ref>
Key integer(const char* s, const char* n, Ref ref, bool required = false) {
  return {s, n, required,
          [ref](ProblemConfig& c, const std::string& t) { ref(c) = parse_number<T>(t, "an integer"); },
          [ref](const ProblemConfig& c) { return std::to_string(ref_of(ref)(c)); }};
}

template <class Ref>
Key flag(const char* s, const char* n, Ref ref) {
  return {s, n, false, [ref](ProblemConfig& c, const std::string& t) { ref(c) = parse_bool(t); },
          [ref](const ProblemConfig& c) { return std::string(ref_of(ref)(c) ? "true" : "false"); }};
}

template <class Ref>
Key range(const char* s, const char* n, Ref ref) {
  return {s, n, false, [ref](ProblemConfig& c, const std::string& t) { ref(c) = parse_range(t); },
          [ref](const ProblemConfig& c) { return format_range(ref_of(ref)(c)); }};
}

GeneratorKind parse_kind(const std::string& t) {
  const std::string s = lower(t);
  if (s == "random_field") return GeneratorKind::RandomField;
  if (s == "fiber") return GeneratorKind::Fiber;
  if (s == "uniform") return GeneratorKind::Uniform;
  throw ParameterError("unknown generator '" + t + "' (random_field, fiber, uniform)");
}

std::string kind_name(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::RandomField: return "random_field";
    case GeneratorKind::Fiber: return "fiber";
    case GeneratorKind::Uniform: return "uniform";
  }
  return "random_field";
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    using C = ProblemConfig;
    std::vector<Key> k;
    k.push_back(integer<std::uint64_t>("run", "seed", [](C& c) -> auto& { return c.seed; }, true));
    k.push_back({"run", "output", false, [](C& c, const std::string& t) { c.output = t; },
                 [](const C& c) { return c.output.string(); }});
    k.push_back(integer<unsigned>("run", "threads", [](C& c) -> auto& { return c.threads; }));
    k.push_back(integer<int>("run", "checkpoint_every", [](C& c) -> auto& { return c.checkpoint_every; }));

    k.push_back(integer<int>("mesh", "nx", [](C& c) -> auto& { return c.nx; }, true));
    k.push_back(integer<int>("mesh", "ny", [](C& c) -> auto& { return c.ny; }, true));
    k.push_back(real("mesh", "load", [](C& c) -> auto& { return c.load; }));
    k.push_back(integer<int>("mesh", "holes_x", [](C& c) -> auto& { return c.holes_x; }));
    k.push_back(integer<int>("mesh", "holes_y", [](C& c) -> auto& { return c.holes_y; }));
    k.push_back(real("mesh", "hole_radius", [](C& c) -> auto& { return c.hole_radius; }));

    k.push_back(real("model", "w_psi", [](C& c) -> auto& { return c.model.weights.strain_energy; }));
    k.push_back(real("model", "w_mass", [](C& c) -> auto& { return c.model.weights.mass; }));
    k.push_back(real("model", "w_per", [](C& c) -> auto& { return c.model.weights.perimeter; }));
    k.push_back(real("model", "w_reg", [](C& c) -> auto& { return c.model.weights.regularization; }));
    k.push_back(real("model", "mass_target", [](C& c) -> auto& { return c.model.mass_target; }));
    k.push_back(real("model", "filter_radius", [](C& c) -> auto& { return c.model.filter_radius; }));
    k.push_back(real("model", "smoothing_width", [](C& c) -> auto& { return c.model.ersatz.smoothing_width; }));
    k.push_back(real("model", "void_factor", [](C& c) -> auto& { return c.model.ersatz.void_factor; }));
    k.push_back(range("model", "bounds", [](C& c) -> auto& { return c.model.bounds; }));
    k.push_back(range("model", "truncation", [](C& c) -> auto& { return c.model.truncation; }));

    k.push_back({"catalog", "source", true,
                 [](C& c, const std::string& t) {
                   const std::string s = lower(t);
                   if (s == "generate") c.catalog.source = CatalogSource::Generate;
                   else if (s == "file") c.catalog.source = CatalogSource::File;
                   else throw ParameterError("unknown catalog source '" + t + "' (generate, file)");
                 },
                 [](const C& c) { return std::string(c.catalog.source == CatalogSource::File ? "file" : "generate"); }});
    k.push_back({"catalog", "path", false, [](C& c, const std::string& t) { c.catalog.path = t; },
                 [](const C& c) { return c.catalog.path.string(); }});
    k.push_back(integer<std::size_t>("catalog", "count", [](C& c) -> auto& { return c.catalog.count; }));
    k.push_back({"catalog", "generator", false, [](C& c, const std::string& t) { c.catalog.kind = parse_kind(t); },
                 [](const C& c) { return kind_name(c.catalog.kind); }});
    k.push_back({"catalog", "hypothesis", false,
                 [](C& c, const std::string& t) {
                   c.catalog.hypothesis = parse_hypothesis(lower(t));
                   if (c.catalog.hypothesis == Hypothesis::ThreeD)
                     throw ParameterError("the macroscale model needs plane_stress or plane_strain");
                 },
                 [](const C& c) { return to_string(c.catalog.hypothesis); }});
    k.push_back(real("catalog", "period", [](C& c) -> auto& { return c.catalog.random_field.period; }));
    k.push_back(real("catalog", "max_wavenumber", [](C& c) -> auto& { return c.catalog.random_field.max_wavenumber; }));
    k.push_back(real("catalog", "correlation_length",
                     [](C& c) -> auto& { return c.catalog.random_field.correlation_length; }));
    k.push_back(integer<int>("catalog", "resolution", [](C& c) -> auto& { return c.catalog.random_field.resolution; }));
    k.push_back(real("catalog", "threshold", [](C& c) -> auto& { return c.catalog.random_field.threshold; }));
    k.push_back(real("catalog", "e_stiff", [](C& c) -> auto& { return c.catalog.random_field.stiff.E; }));
    k.push_back(real("catalog", "nu_stiff", [](C& c) -> auto& { return c.catalog.random_field.stiff.nu; }));
    k.push_back(real("catalog", "e_compliant", [](C& c) -> auto& { return c.catalog.random_field.compliant.E; }));
    k.push_back(real("catalog", "nu_compliant", [](C& c) -> auto& { return c.catalog.random_field.compliant.nu; }));
    k.push_back(real("catalog", "uniform_e", [](C& c) -> auto& { return c.catalog.uniform.E; }));
    k.push_back(real("catalog", "uniform_nu", [](C& c) -> auto& { return c.catalog.uniform.nu; }));

    k.push_back(range("fiber", "e_fiber", [](C& c) -> auto& { return c.catalog.fiber.e_fiber; }));
    k.push_back(range("fiber", "e_matrix", [](C& c) -> auto& { return c.catalog.fiber.e_matrix; }));
    k.push_back(range("fiber", "nu_fiber", [](C& c) -> auto& { return c.catalog.fiber.nu_fiber; }));
    k.push_back(range("fiber", "nu_matrix", [](C& c) -> auto& { return c.catalog.fiber.nu_matrix; }));
    k.push_back(range("fiber", "aspect_ratio", [](C& c) -> auto& { return c.catalog.fiber.aspect_ratio; }));
    k.push_back(range("fiber", "angle_inplane", [](C& c) -> auto& { return c.catalog.fiber.angle_inplane; }));
    k.push_back(range("fiber", "angle_outplane", [](C& c) -> auto& { return c.catalog.fiber.angle_outplane; }));
    k.push_back(range("fiber", "volume_fraction", [](C& c) -> auto& { return c.catalog.fiber.volume_fraction; }));

    k.push_back({"optimizer", "algorithm", true,
                 [](C& c, const std::string& t) { c.optimizer.algorithm = parse_algorithm(lower(t)); },
                 [](const C& c) { return to_string(c.optimizer.algorithm); }});
    k.push_back(integer<int>("optimizer", "iterations", [](C& c) -> auto& { return c.optimizer.iterations; }, true));
    k.push_back(integer<std::size_t>("optimizer", "samples", [](C& c) -> auto& { return c.optimizer.samples; }));
    k.push_back(real("optimizer", "eta", [](C& c) -> auto& { return c.optimizer.eta; }));
    k.push_back({"optimizer", "kappa", false,
                 [](C& c, const std::string& t) { c.optimizer.penalty.kappa = {parse_double(t)}; },
                 [](const C& c) {
                   return c.optimizer.penalty.kappa.empty() ? std::string("0")
                                                            : format_double(c.optimizer.penalty.kappa.front());
                 }});
    k.push_back(real("optimizer", "beta_m", [](C& c) -> auto& { return c.optimizer.beta_m; }));
    k.push_back(real("optimizer", "beta_v", [](C& c) -> auto& { return c.optimizer.beta_v; }));
    k.push_back(real("optimizer", "epsilon", [](C& c) -> auto& { return c.optimizer.epsilon; }));
    k.push_back(flag("optimizer", "early_stop", [](C& c) -> auto& { return c.optimizer.early_stop; }));
    k.push_back(integer<int>("optimizer", "early_stop_window", [](C& c) -> auto& { return c.optimizer.early_stop_window; }));
    k.push_back(real("optimizer", "early_stop_tolerance", [](C& c) -> auto& { return c.optimizer.early_stop_tolerance; }));
    k.push_back(flag("optimizer", "log_wall_time", [](C& c) -> auto& { return c.optimizer.log_wall_time; }));

    k.push_back(real("gcmma", "asyinit", [](C& c) -> auto& { return c.optimizer.gcmma.asyinit; }));
    k.push_back(real("gcmma", "asyincr", [](C& c) -> auto& { return c.optimizer.gcmma.asyincr; }));
    k.push_back(real("gcmma", "asydecr", [](C& c) -> auto& { return c.optimizer.gcmma.asydecr; }));
    k.push_back(real("gcmma", "albefa", [](C& c) -> auto& { return c.optimizer.gcmma.albefa; }));
    k.push_back(real("gcmma", "move", [](C& c) -> auto& { return c.optimizer.gcmma.move; }));
    k.push_back(real("gcmma", "raa0", [](C& c) -> auto& { return c.optimizer.gcmma.raa0; }));
    k.push_back(real("gcmma", "c", [](C& c) -> auto& { return c.optimizer.gcmma.c; }));
    k.push_back(real("gcmma", "d", [](C& c) -> auto& { return c.optimizer.gcmma.d; }));
    k.push_back(real("gcmma", "subproblem_tolerance", [](C& c) -> auto& { return c.optimizer.gcmma.subproblem_tolerance; }));
    k.push_back(real("gcmma", "infeasibility_tolerance",
                     [](C& c) -> auto& { return c.optimizer.gcmma.infeasibility_tolerance; }));
    k.push_back(integer<int>("gcmma", "inner_iterations", [](C& c) -> auto& { return c.optimizer.gcmma.inner_iterations; }));

    k.push_back(integer<std::size_t>("verification", "samples", [](C& c) -> auto& { return c.verification_samples; }));
    k.push_back(flag("verification", "initial", [](C& c) -> auto& { return c.verify_initial; }));
    k.push_back(flag("verification", "raw", [](C& c) -> auto& { return c.keep_raw; }));
    return k;
  }();
  return table;
}

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : keys())
    if (k.section == section && k.name == name) return &k;
  return nullptr;
}

void finish(ProblemConfig& c, const std::filesystem::path& base_dir) {
  if (!c.catalog.path.empty() && c.catalog.path.is_relative() && !base_dir.empty())
    c.catalog.path = base_dir / c.catalog.path;
  c.optimizer.threads = c.threads;
}

}  // namespace

ProblemConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  ProblemConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    const auto hash = s.find_first_of("#;");
    if (hash != std::string::npos) s.erase(hash);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("malformed section header '" + s + "'", line);
      section = lower(trim(s.substr(1, s.size() - 2)));
      if (section.empty()) throw ConfigError("empty section name", line);
      continue;
    }
    if (section == "result") continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + s + "'", line);
    if (section.empty()) throw ConfigError("key outside of any [section]", line);
    const std::string name = lower(trim(s.substr(0, eq)));
    const std::string value = trim(s.substr(eq + 1));
    const Key* key = find_key(section, name);
    if (!key) throw ConfigError("unknown key '" + section + "." + name + "'", line);
    if (!seen.insert(key->full()).second) throw ConfigError("duplicate key '" + key->full() + "'", line);
    try {
      key->set(c, value);
    } catch (const std::exception& e) {
      throw ConfigError(key->full() + ": " + e.what(), line);
    }
  }
  std::string missing;
  for (const auto& k : keys())
    if (k.required && !seen.count(k.full())) missing += (missing.empty() ? "" : ", ") + k.full();
  if (!missing.empty()) throw ConfigError("missing required keys: " + missing);
  finish(c, base_dir);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ProblemConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

void apply_overrides(ProblemConfig& config, const std::vector<std::string>& assignments) {
  ProblemConfig next = config;
  for (const auto& assignment : assignments) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ConfigError("override '" + assignment + "' is not section.key=value");
    const std::string section = lower(trim(assignment.substr(0, dot)));
    const std::string name = lower(trim(assignment.substr(dot + 1, eq - dot - 1)));
    const Key* key = find_key(section, name);
    if (!key) throw ConfigError("unknown key '" + section + "." + name + "'");
    try {
      key->set(next, trim(assignment.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw ConfigError(key->full() + ": " + e.what());
    }
  }
  finish(next, {});
  try {
    next.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  config = std::move(next);
}

void apply_override(ProblemConfig& config, const std::string& assignment) { apply_overrides(config, {assignment}); }

std::string to_ini(const ProblemConfig& config) {
  std::string out;
  std::string section;
  for (const auto& k : keys()) {
    if (k.section != section) {
      out += (section.empty() ? "[" : "\n[") + k.section + "]\n";
      section = k.section;
    }
    out += k.name + " = " + k.get(config) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const ProblemConfig& config) {
  std::string text;
  for (const auto& k : keys()) {
    if (k.section == "run" && (k.name == "output" || k.name == "threads")) continue;
    text += k.full() + "=" + k.get(config) + "\n";
  }
  return fnv1a64(text);
}

ProblemConfig preset(const std::string& name) {
  ProblemConfig c;
  c.nx = 120;
  c.ny = 40;
  c.catalog.count = 200;
  c.optimizer.algorithm = Algorithm::Adam;
  c.optimizer.samples = 4;
  c.optimizer.penalty.kappa = {1000.0};
  c.optimizer.iterations = 300;
  c.verification_samples = 1000;
  RandomFieldGenerator& g = c.catalog.random_field;
  g.stiff = {10.0, 0.3};
  const std::string n = lower(name);
  if (n == "ia" || n == "desk") {
    g.period = 4.0 * M_PI;
    g.max_wavenumber = 25.0;
    g.compliant = {1.0, 0.3};
    c.optimizer.eta = 0.05;
  } else if (n == "ib") {
    g.period = 4.0 * M_PI;
    g.max_wavenumber = 25.0;
    g.compliant = {0.1, 0.3};
    c.optimizer.eta = 0.05;
  } else if (n == "iia") {
    g.period = 2.0 * M_PI;
    g.max_wavenumber = 50.0;
    g.compliant = {1.0, 0.3};
    c.optimizer.eta = 0.025;
  } else if (n == "iib") {
    g.period = 2.0 * M_PI;
    g.max_wavenumber = 50.0;
    g.compliant = {0.1, 0.3};
    c.optimizer.eta = 0.025;
  } else {
    throw ConfigError("unknown preset '" + name + "' (Ia, Ib, IIa, IIb, desk)");
  }
  // 2N pixels across the RVE with N = K T / (2 pi)
  g.resolution = 2 * static_cast<int>(std::lround(g.max_wavenumber * g.period / (2.0 * M_PI)));
  if (n == "desk") {
    c.nx = 60;
    c.ny = 20;
    c.catalog.count = 50;
    c.verification_samples = 200;
  }
  finish(c, {});
  c.validate();
  return c;
}

}  // namespace sgtopo
