#include "pflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace pflow {

ConfigError::ConfigError(const std::string& field, const std::string& message, int line)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (field.empty() ? message : field + ": " + message)),
      field_(field),
      message_(message),
      line_(line) {}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string& field, const std::string& v) {
  const std::string t = trim(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(field, "expected a number, got '" + v + "'");
  return out;
}

int to_int(const std::string& field, const std::string& v) {
  const std::string t = trim(v);
  int out = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(field, "expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& field, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(field, "expected true or false, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& field, const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (const auto& item : split(v)) out.push_back(to_double(field, item));
  return out;
}

std::vector<int> to_ints(const std::string& field, const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  for (const auto& item : split(v)) out.push_back(to_int(field, item));
  return out;
}

Point to_point(const std::string& field, const std::string& v) {
  const auto xs = to_doubles(field, v);
  if (xs.size() != 2) throw ConfigError(field, "expected two comma-separated numbers");
  return Point(xs[0], xs[1]);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>)
      out += fmt(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt_point(const Point& p) { return fmt(p.x()) + "," + fmt(p.y()); }

std::string kind_name(InitialKind k) {
  switch (k) {
    case InitialKind::Uniform: return "uniform";
    case InitialKind::Block: return "block";
    case InitialKind::Bands: return "bands";
    case InitialKind::Gaussian: return "gaussian";
  }
  return "uniform";
}

InitialKind parse_kind(const std::string& field, const std::string& v) {
  const std::string t = trim(v);
  if (t == "uniform") return InitialKind::Uniform;
  if (t == "block") return InitialKind::Block;
  if (t == "bands") return InitialKind::Bands;
  if (t == "gaussian") return InitialKind::Gaussian;
  throw ConfigError(field, "unknown initial datum '" + v + "' (uniform, block, bands, gaussian)");
}

std::vector<double> viscosities(const PhaseSet& p) {
  std::vector<double> v;
  for (const auto& ph : p.phases) v.push_back(ph.viscosity);
  return v;
}

std::vector<double> densities(const PhaseSet& p) {
  std::vector<double> v;
  for (const auto& ph : p.phases) v.push_back(ph.density);
  return v;
}

void set_viscosities(PhaseSet& p, const std::vector<double>& v) {
  p.phases.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p.phases[i].viscosity = v[i];
}

struct Key {
  const char* section;
  const char* name;
  std::function<void(RunConfig&, const std::string& field, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"domain", "lower",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.domain.lower = to_point(f, v); },
       [](const RunConfig& c) { return fmt_point(c.domain.lower); }},
      {"domain", "upper",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.domain.upper = to_point(f, v); },
       [](const RunConfig& c) { return fmt_point(c.domain.upper); }},
      {"domain", "dimension",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.domain.dimension = to_int(f, v); },
       [](const RunConfig& c) { return std::to_string(c.domain.dimension); }},
      {"domain", "nx", [](RunConfig& c, const std::string& f, const std::string& v) { c.nx = to_int(f, v); },
       [](const RunConfig& c) { return std::to_string(c.nx); }},
      {"domain", "ny", [](RunConfig& c, const std::string& f, const std::string& v) { c.ny = to_int(f, v); },
       [](const RunConfig& c) { return std::to_string(c.ny); }},
      {"phases", "viscosity",
       [](RunConfig& c, const std::string& f, const std::string& v) { set_viscosities(c.phases, to_doubles(f, v)); },
       [](const RunConfig& c) { return fmt_list(viscosities(c.phases)); }},
      {"phases", "density",
       [](RunConfig& c, const std::string& f, const std::string& v) {
         const auto d = to_doubles(f, v);
         if (d.size() != c.phases.phases.size())
           throw ConfigError(f, "needs one value per phase (" + std::to_string(c.phases.phases.size()) +
                                    "; give phases.viscosity first)");
         for (std::size_t i = 0; i < d.size(); ++i) c.phases.phases[i].density = d[i];
       },
       [](const RunConfig& c) { return fmt_list(densities(c.phases)); }},
      {"phases", "permeability",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.phases.permeability = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.phases.permeability); }},
      {"phases", "porosity",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.phases.porosity = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.phases.porosity); }},
      {"phases", "gravity",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.phases.gravity = to_point(f, v); },
       [](const RunConfig& c) { return fmt_point(c.phases.gravity); }},
      {"capillary", "model",
       [](RunConfig& c, const std::string& f, const std::string& v) {
         const std::string t = trim(v);
         if (t != "brooks_corey" && t != "linear" && t != "quadratic3")
           throw ConfigError(f, "unknown model '" + v + "' (brooks_corey, linear, quadratic3)");
         c.capillary = t;
       },
       [](const RunConfig& c) { return c.capillary; }},
      {"capillary", "alpha", [](RunConfig& c, const std::string& f, const std::string& v) { c.alpha = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.alpha); }},
      {"capillary", "alpha1",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.alpha1 = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.alpha1); }},
      {"capillary", "alpha2",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.alpha2 = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.alpha2); }},
      {"initial", "kind",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.initial.kind = parse_kind(f, v); },
       [](const RunConfig& c) { return kind_name(c.initial.kind); }},
      {"initial", "values",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.initial.values = to_doubles(f, v); },
       [](const RunConfig& c) { return fmt_list(c.initial.values); }},
      {"initial", "split",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.initial.split = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.initial.split); }},
      {"initial", "left",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.initial.left = to_doubles(f, v); },
       [](const RunConfig& c) { return fmt_list(c.initial.left); }},
      {"initial", "right",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.initial.right = to_doubles(f, v); },
       [](const RunConfig& c) { return fmt_list(c.initial.right); }},
      {"initial", "bands",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.initial.bands = to_ints(f, v); },
       [](const RunConfig& c) { return fmt_list(c.initial.bands); }},
      {"initial", "amplitude",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.initial.amplitude = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.initial.amplitude); }},
      {"initial", "rate",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.initial.rate = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.initial.rate); }},
      {"initial", "center",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.initial.center = to_point(f, v); },
       [](const RunConfig& c) { return fmt_point(c.initial.center); }},
      {"time", "tau", [](RunConfig& c, const std::string& f, const std::string& v) { c.tau = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.tau); }},
      {"time", "t_end", [](RunConfig& c, const std::string& f, const std::string& v) { c.t_end = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.t_end); }},
      {"solver", "kind",
       [](RunConfig& c, const std::string&, const std::string& v) { c.solver = parse_solver(trim(v)); },
       [](const RunConfig& c) { return to_string(c.solver); }},
      {"alg2", "r", [](RunConfig& c, const std::string& f, const std::string& v) { c.alg2.r = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.alg2.r); }},
      {"alg2", "phase_r",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.alg2.phase_r = to_doubles(f, v); },
       [](const RunConfig& c) { return fmt_list(c.alg2.phase_r); }},
      {"alg2", "tol", [](RunConfig& c, const std::string& f, const std::string& v) { c.alg2.tol = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.alg2.tol); }},
      {"alg2", "max_iter",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.alg2.max_iter = to_int(f, v); },
       [](const RunConfig& c) { return std::to_string(c.alg2.max_iter); }},
      {"alg2", "n_inner",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.alg2.n_inner = to_int(f, v); },
       [](const RunConfig& c) { return std::to_string(c.alg2.n_inner); }},
      {"alg2", "linear_tol",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.alg2.linear_tol = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.alg2.linear_tol); }},
      {"alg2", "mass_tol",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.alg2.mass_tol = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.alg2.mass_tol); }},
      {"alg2", "accelerate",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.alg2.accelerate = to_bool(f, v); },
       [](const RunConfig& c) { return std::string(c.alg2.accelerate ? "true" : "false"); }},
      {"alg2", "adapt_every",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.alg2.adapt_every = to_int(f, v); },
       [](const RunConfig& c) { return std::to_string(c.alg2.adapt_every); }},
      {"alg2", "adapt_ratio",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.alg2.adapt_ratio = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.alg2.adapt_ratio); }},
      {"fv", "newton_tol",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.fv.newton_tol = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.fv.newton_tol); }},
      {"fv", "max_newton",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.fv.max_newton = to_int(f, v); },
       [](const RunConfig& c) { return std::to_string(c.fv.max_newton); }},
      {"fv", "max_backtracks",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.fv.max_backtracks = to_int(f, v); },
       [](const RunConfig& c) { return std::to_string(c.fv.max_backtracks); }},
      {"fv", "polish_steps",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.fv.polish_steps = to_int(f, v); },
       [](const RunConfig& c) { return std::to_string(c.fv.polish_steps); }},
      {"fv", "tau_floor",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.fv.tau_floor = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.fv.tau_floor); }},
      {"fv", "redouble_after",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.fv.redouble_after = to_int(f, v); },
       [](const RunConfig& c) { return std::to_string(c.fv.redouble_after); }},
      {"fv", "pressure_floor",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.fv.pressure_floor = to_double(f, v); },
       [](const RunConfig& c) { return fmt(c.fv.pressure_floor); }},
      {"output", "directory",
       [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); },
       [](const RunConfig& c) { return c.output_dir; }},
      {"output", "snapshots",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.snapshots = to_doubles(f, v); },
       [](const RunConfig& c) { return fmt_list(c.snapshots); }},
      {"output", "vtk", [](RunConfig& c, const std::string& f, const std::string& v) { c.vtk = to_bool(f, v); },
       [](const RunConfig& c) { return std::string(c.vtk ? "true" : "false"); }},
  };
  return table;
}

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : keys())
    if (section == k.section && name == k.name) return &k;
  return nullptr;
}

// Line of `key` inside `[section]`, for error messages; 0 when not found.
int locate(const std::string& text, const std::string& section, const std::string& key) {
  std::istringstream in(text);
  std::string line, current;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#') continue;
    if (t.front() == '[') {
      current = trim(t.substr(1, t.find(']') - 1));
      if (key.empty() && current == section) return n;
      continue;
    }
    const auto eq = t.find('=');
    if (eq != std::string::npos && current == section && trim(t.substr(0, eq)) == key) return n;
  }
  return 0;
}

}  // namespace

Eigen::VectorXd InitialDatum::evaluate(const Point& x, int num_phases) const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(num_phases);
  auto from = [&](const std::vector<double>& v) {
    for (int i = 0; i < num_phases && i < static_cast<int>(v.size()); ++i) s[i] = v[i];
  };
  switch (kind) {
    case InitialKind::Uniform: from(values); break;
    case InitialKind::Block: from(x.x() < split ? left : right); break;
    case InitialKind::Bands: break;  // needs the domain, see band_value below
    case InitialKind::Gaussian: {
      const double v = amplitude * std::exp(-rate * (x - center).squaredNorm());
      s[1] = v;
      s[0] = 1.0 - v;
      break;
    }
  }
  return s;
}

CapillaryModel RunConfig::capillary_model() const {
  if (capillary == "brooks_corey") return CapillaryModel(BrooksCorey{alpha});
  if (capillary == "quadratic3") return CapillaryModel(QuadraticThreePhase{alpha1, alpha2});
  return CapillaryModel(LinearTwoPhase{alpha});
}

int RunConfig::jko_steps() const { return static_cast<int>(std::lround(t_end / tau)); }

bool operator==(const RunConfig& a, const RunConfig& b) {
  auto same_phases = [](const PhaseSet& x, const PhaseSet& y) {
    if (x.phases.size() != y.phases.size()) return false;
    for (std::size_t i = 0; i < x.phases.size(); ++i)
      if (x.phases[i].viscosity != y.phases[i].viscosity || x.phases[i].density != y.phases[i].density) return false;
    return x.permeability == y.permeability && x.porosity == y.porosity && x.gravity == y.gravity;
  };
  return a.preset == b.preset && a.domain.lower == b.domain.lower && a.domain.upper == b.domain.upper &&
         a.domain.dimension == b.domain.dimension && a.nx == b.nx && a.ny == b.ny && same_phases(a.phases, b.phases) &&
         a.capillary == b.capillary && a.alpha == b.alpha && a.alpha1 == b.alpha1 && a.alpha2 == b.alpha2 &&
         a.initial == b.initial && a.tau == b.tau && a.t_end == b.t_end && a.solver == b.solver &&
         a.alg2 == b.alg2 && a.fv == b.fv && a.output_dir == b.output_dir && a.snapshots == b.snapshots &&
         a.vtk == b.vtk;
}

std::vector<std::string> preset_names() { return {"two_phase_bc", "three_phase", "energy_decay"}; }

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "two_phase_bc") {
    // Oil block (s_1 = 0.9) in the left half of the unit square, water on the right.
    c.domain = Box::unit_square();
    c.nx = c.ny = 50;
    c.phases.phases = {{1.0, 1.0}, {10.0, 0.87}};
    c.capillary = "brooks_corey";
    c.alpha = 1.0;
    c.initial.kind = InitialKind::Block;
    c.initial.split = 0.5;
    c.initial.left = {0.1, 0.9};
    c.initial.right = {1.0, 0.0};
    c.tau = 0.05;
    c.t_end = 10.0;
    c.snapshots = {2.5, 5.0, 7.5, 10.0};
  } else if (name == "three_phase") {
    // Water, oil and gas in three vertical bands, left to right.
    c.domain = Box::unit_square();
    c.nx = c.ny = 50;
    c.phases.phases = {{1.0, 1.0}, {50.0, 0.87}, {0.1, 0.1}};
    c.capillary = "quadratic3";
    c.alpha1 = c.alpha2 = 1.0;
    c.initial.kind = InitialKind::Bands;
    c.initial.bands = {0, 1, 2};
    c.tau = 0.05;
    c.t_end = 10.0;
    c.snapshots = {0.1, 1.25, 2.5, 5.0, 10.0};
    c.alg2.mass_tol = 5e-7;
  } else if (name == "energy_decay") {
    c.domain = Box::rectangle(-1.0, 1.0, -1.0, 1.0);
    c.nx = c.ny = 20;
    c.phases.phases = {{1.0, 1.0}, {10.0, 0.87}};
    c.capillary = "linear";
    c.alpha = 0.5;
    c.initial.kind = InitialKind::Gaussian;
    c.initial.amplitude = 1.0;
    c.initial.rate = 4.0;
    c.initial.center = Point(0.0, 0.0);
    c.tau = 0.05;
    c.t_end = 10.0;
    c.snapshots = {10.0};
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("scenario.preset", "unknown preset '" + name + "' (" + known + ")");
  }
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", e.message(), static_cast<int>(e.line()));
  }

  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section, "key outside of any section", locate(text, "", section));
    if (section == "scenario") {
      for (const auto& [key, value] : body)
        if (key != "preset")
          throw ConfigError("scenario." + key, "unknown key", locate(text, section, key));
      if (auto p = body.get_optional<std::string>("preset"); p && !trim(*p).empty()) {
        try {
          config = preset_config(trim(*p));
        } catch (const ConfigError& e) {
          throw ConfigError(e.field(), e.message(), locate(text, section, "preset"));
        }
      }
    }
  }
  for (const auto& [section, body] : tree) {
    if (section == "scenario") continue;
    bool known_section = false;
    for (const auto& k : keys()) known_section |= section == k.section;
    if (!known_section) throw ConfigError(section, "unknown section", locate(text, section, ""));
    for (const auto& [key, value] : body) {
      const std::string field = section + "." + key;
      const Key* k = find_key(section, key);
      if (!k) throw ConfigError(field, "unknown key", locate(text, section, key));
      try {
        k->set(config, field, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(e.field(), e.message(), locate(text, section, key));
      }
    }
  }
  validate_config(config);
  return config;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  // Every key is written, so the preset only fixes the default layer.
  out << "[scenario]\npreset = " << config.preset << '\n';
  std::string section;
  for (const auto& k : keys()) {
    if (section != k.section) {
      section = k.section;
      out << "\n[" << section << "]\n";
    }
    out << k.name << " = " << k.get(config) << '\n';
  }
  return out.str();
}

void apply_env_overrides(RunConfig& config, const EnvLookup& lookup) {
  for (const auto& k : keys()) {
    const std::string section = k.section;
    if (section != "alg2" && section != "fv") continue;
    std::string var = "PFL_" + section + "_" + k.name;
    std::transform(var.begin(), var.end(), var.begin(), [](unsigned char ch) { return std::toupper(ch); });
    if (const char* v = lookup(var.c_str())) {
      try {
        k.set(config, section + "." + k.name, v);
      } catch (const ConfigError& e) {
        throw ConfigError(e.field(), std::string("from ") + var + ": " + e.message());
      }
    }
  }
}

void apply_env_overrides(RunConfig& config) {
  apply_env_overrides(config, [](const char* name) -> const char* { return std::getenv(name); });
}

void validate_config(const RunConfig& c) {
  if (c.domain.dimension != 1 && c.domain.dimension != 2) throw ConfigError("domain.dimension", "must be 1 or 2");
  if (!(c.domain.upper.x() > c.domain.lower.x()) ||
      (c.domain.dimension == 2 && !(c.domain.upper.y() > c.domain.lower.y())))
    throw ConfigError("domain.upper", "must exceed domain.lower in every direction");
  if (c.nx < 1) throw ConfigError("domain.nx", "must be at least 1");
  if (c.domain.dimension == 2 && c.ny < 1) throw ConfigError("domain.ny", "must be at least 1");
  const int n = c.phases.size();
  if (n < 2) throw ConfigError("phases.viscosity", "at least two phases are required");
  for (const auto& p : c.phases.phases) {
    if (!(p.viscosity > 0.0)) throw ConfigError("phases.viscosity", "must be positive");
    if (!(p.density >= 0.0)) throw ConfigError("phases.density", "must be nonnegative");
  }
  if (!(c.phases.permeability > 0.0)) throw ConfigError("phases.permeability", "must be positive");
  if (c.phases.porosity != 1.0) throw ConfigError("phases.porosity", "only porosity 1 is supported");
  const int model_phases = c.capillary == "quadratic3" ? 3 : 2;
  if (model_phases != n)
    throw ConfigError("capillary.model", "model '" + c.capillary + "' needs " + std::to_string(model_phases) +
                                             " phases, the phase table has " + std::to_string(n));
  if (c.capillary != "quadratic3" && !(c.alpha > 0.0)) throw ConfigError("capillary.alpha", "must be positive");
  if (c.capillary == "quadratic3" && !(c.alpha1 > 0.0)) throw ConfigError("capillary.alpha1", "must be positive");
  if (c.capillary == "quadratic3" && !(c.alpha2 > 0.0)) throw ConfigError("capillary.alpha2", "must be positive");

  auto check_vector = [n](const std::vector<double>& v, const std::string& field) {
    if (static_cast<int>(v.size()) != n) throw ConfigError(field, "needs one value per phase");
    double sum = 0.0;
    for (double x : v) {
      if (!(x >= 0.0)) throw ConfigError(field, "saturations must be nonnegative");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ConfigError(field, "saturations must sum to 1");
  };
  switch (c.initial.kind) {
    case InitialKind::Uniform: check_vector(c.initial.values, "initial.values"); break;
    case InitialKind::Block:
      check_vector(c.initial.left, "initial.left");
      check_vector(c.initial.right, "initial.right");
      break;
    case InitialKind::Bands:
      if (c.initial.bands.empty()) throw ConfigError("initial.bands", "needs at least one band");
      for (int b : c.initial.bands)
        if (b < 0 || b >= n) throw ConfigError("initial.bands", "phase index out of range");
      break;
    case InitialKind::Gaussian:
      if (n != 2) throw ConfigError("initial.kind", "gaussian datum is two-phase only");
      if (!(c.initial.amplitude >= 0.0 && c.initial.amplitude <= 1.0))
        throw ConfigError("initial.amplitude", "must lie in [0, 1]");
      if (!(c.initial.rate >= 0.0)) throw ConfigError("initial.rate", "must be nonnegative");
      break;
  }

  if (!(c.tau > 0.0)) throw ConfigError("time.tau", "must be positive");
  if (!(c.t_end >= c.tau)) throw ConfigError("time.t_end", "must be at least time.tau");
  if (c.solver != SolverChoice::Fv && std::abs(c.jko_steps() * c.tau - c.t_end) > 1e-9 * c.t_end)
    throw ConfigError("time.t_end", "must be a multiple of time.tau for the ALG2 solver");
  for (double t : c.snapshots)
    if (!(t >= 0.0 && t <= c.t_end)) throw ConfigError("output.snapshots", "times must lie in [0, t_end]");

  if (!(c.alg2.r > 0.0)) throw ConfigError("alg2.r", "must be positive");
  if (!c.alg2.phase_r.empty()) {
    if (static_cast<int>(c.alg2.phase_r.size()) != n) throw ConfigError("alg2.phase_r", "needs one value per phase");
    for (double v : c.alg2.phase_r)
      if (!(v > 0.0)) throw ConfigError("alg2.phase_r", "must be positive");
  }
  if (!(c.alg2.tol > 0.0)) throw ConfigError("alg2.tol", "must be positive");
  if (c.alg2.max_iter < 1) throw ConfigError("alg2.max_iter", "must be at least 1");
  if (c.alg2.n_inner < 1) throw ConfigError("alg2.n_inner", "must be at least 1");
  if (!(c.alg2.linear_tol > 0.0)) throw ConfigError("alg2.linear_tol", "must be positive");
  if (!(c.alg2.mass_tol >= 0.0)) throw ConfigError("alg2.mass_tol", "must be nonnegative");
  if (c.alg2.adapt_every < 0) throw ConfigError("alg2.adapt_every", "must be nonnegative");
  if (!(c.alg2.adapt_ratio > 1.0)) throw ConfigError("alg2.adapt_ratio", "must exceed 1");
  if (!(c.fv.newton_tol > 0.0)) throw ConfigError("fv.newton_tol", "must be positive");
  if (c.fv.max_newton < 1) throw ConfigError("fv.max_newton", "must be at least 1");
  if (c.fv.max_backtracks < 0) throw ConfigError("fv.max_backtracks", "must be nonnegative");
  if (c.fv.polish_steps < 0) throw ConfigError("fv.polish_steps", "must be nonnegative");
  if (!(c.fv.tau_floor > 0.0)) throw ConfigError("fv.tau_floor", "must be positive");
  if (c.fv.redouble_after < 1) throw ConfigError("fv.redouble_after", "must be at least 1");
  if (!(c.fv.pressure_floor > 0.0)) throw ConfigError("fv.pressure_floor", "must be positive");
  if (c.output_dir.empty()) throw ConfigError("output.directory", "must not be empty");
}

namespace {

// Mean of the datum over [lo, hi] with an m x m midpoint rule (m points in x only in 1D).
Eigen::VectorXd rect_average(const RunConfig& c, const Point& lo, const Point& hi) {
  constexpr int m = 8;
  const int n = c.phases.size();
  const bool two_d = c.domain.dimension == 2;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  const int my = two_d ? m : 1;
  const double width = c.domain.upper.x() - c.domain.lower.x();
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < my; ++b) {
      const Point x(lo.x() + (a + 0.5) * (hi.x() - lo.x()) / m,
                    two_d ? lo.y() + (b + 0.5) * (hi.y() - lo.y()) / my : lo.y());
      if (c.initial.kind == InitialKind::Bands) {
        const int nb = static_cast<int>(c.initial.bands.size());
        const int k = std::clamp(static_cast<int>((x.x() - c.domain.lower.x()) / width * nb), 0, nb - 1);
        sum[c.initial.bands[k]] += 1.0;
      } else {
        sum += c.initial.evaluate(x, n);
      }
    }
  sum /= static_cast<double>(m * my);
  // Rounding can leave the sum a few ulps away from 1; the reference phase absorbs it.
  sum[0] = 1.0 - sum.tail(n - 1).sum();
  return sum;
}

}  // namespace

SaturationState initial_cell_state(const RunConfig& c) {
  const int ny = c.domain.dimension == 2 ? c.ny : 1;
  const double hx = (c.domain.upper.x() - c.domain.lower.x()) / c.nx;
  const double hy = c.domain.dimension == 2 ? (c.domain.upper.y() - c.domain.lower.y()) / ny : 0.0;
  SaturationState s(c.nx * ny, c.phases.size());
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < c.nx; ++ix) {
      const Point lo(c.domain.lower.x() + ix * hx, c.domain.lower.y() + iy * hy);
      s.values().row(iy * c.nx + ix) = rect_average(c, lo, lo + Point(hx, hy)).transpose();
    }
  return s;
}

SaturationState initial_nodal_state(const RunConfig& c) {
  const StructuredGrid grid(c.domain, c.nx, c.domain.dimension == 2 ? c.ny : 1);
  const Point half(0.5 * grid.hx(), c.domain.dimension == 2 ? 0.5 * grid.hy() : 0.0);
  SaturationState s(grid.num_vertices(), c.phases.size());
  for (int j = 0; j < grid.num_vertices(); ++j) {
    const Point v = grid.vertex(j);
    const Point lo = (v - half).cwiseMax(c.domain.lower);
    Point hi = (v + half).cwiseMin(c.domain.upper);
    if (c.domain.dimension == 1) hi.y() = lo.y();
    s.values().row(j) = rect_average(c, lo, hi).transpose();
  }
  return s;
}

std::string to_string(SolverChoice s) {
  switch (s) {
    case SolverChoice::Alg2: return "alg2";
    case SolverChoice::Fv: return "fv";
    case SolverChoice::Both: return "both";
  }
  return "both";
}

SolverChoice parse_solver(const std::string& s) {
  if (s == "alg2") return SolverChoice::Alg2;
  if (s == "fv") return SolverChoice::Fv;
  if (s == "both") return SolverChoice::Both;
  throw ConfigError("solver.kind", "unknown solver '" + s + "' (alg2, fv, both)");
}

}  // namespace pflow
