#include "stablefield/runner.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "stablefield/csv.hpp"
#include "stablefield/errors.hpp"
#include "stablefield/extrap.hpp"
#include "stablefield/field_sim.hpp"
#include "stablefield/kriging.hpp"
#include "stablefield/measure.hpp"

namespace stablefield {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Lowercase with '-' and '_' unified, for enum-like values.
std::string canon(const std::string& s, char sep) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '-' || c == '_') {
      out.push_back(sep);
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text,
                                    const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t[0] == '[') {
      if (t.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": unterminated section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": empty section name");
      }
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.entries_.count(full)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": duplicate key '" + full + "'");
    }
    cfg.entries_[full] = Entry{value, lineno};
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

const ConfigFile::Entry* ConfigFile::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void ConfigFile::fail(const std::string& key, const std::string& what) const {
  const Entry* e = find(key);
  if (e) {
    throw ConfigError(origin_ + ":" + std::to_string(e->line) + ": key '" +
                      key + "' " + what);
  }
  throw ConfigError(origin_ + ": missing mandatory key '" + key + "'");
}

bool ConfigFile::has(const std::string& key) const { return find(key) != nullptr; }

bool ConfigFile::has_section(const std::string& section) const {
  const std::string prefix = section + ".";
  const auto it = entries_.lower_bound(prefix);
  return it != entries_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

std::string ConfigFile::text(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) fail(key, "");
  return e->value;
}

std::string ConfigFile::text(const std::string& key,
                             const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double ConfigFile::number(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) fail(key, "");
  char* end = nullptr;
  const double v = std::strtod(e->value.c_str(), &end);
  if (end == e->value.c_str() || *end != '\0') {
    fail(key, "is not a number: '" + e->value + "'");
  }
  return v;
}

double ConfigFile::number(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

std::int64_t ConfigFile::integer(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) fail(key, "");
  char* end = nullptr;
  const long long v = std::strtoll(e->value.c_str(), &end, 10);
  if (end == e->value.c_str() || *end != '\0') {
    fail(key, "is not an integer: '" + e->value + "'");
  }
  return v;
}

std::int64_t ConfigFile::integer(const std::string& key,
                                 std::int64_t fallback) const {
  return has(key) ? integer(key) : fallback;
}

bool ConfigFile::flag(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  const std::string v = canon(e->value, '_');
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  fail(key, "is not a boolean: '" + e->value + "'");
  return fallback;
}

std::vector<double> ConfigFile::numbers(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) fail(key, "");
  std::string s = e->value;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
      fail(key, "has a non-numeric entry: '" + tok + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) fail(key, "is empty");
  return out;
}

std::vector<std::string> ConfigFile::words(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) fail(key, "");
  std::istringstream in(e->value);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

// Scalar entries broadcast to the grid dimension.
Eigen::VectorXd per_axis(const ConfigFile& cfg, const std::string& key, int dim,
                         std::optional<double> fallback = std::nullopt) {
  if (!cfg.has(key)) {
    if (!fallback) cfg.text(key);  // raises the missing-key error
    return Eigen::VectorXd::Constant(dim, *fallback);
  }
  const std::vector<double> v = cfg.numbers(key);
  if (v.size() == 1) return Eigen::VectorXd::Constant(dim, v[0]);
  if (static_cast<int>(v.size()) != dim) {
    throw ConfigError("key '" + key + "' needs 1 or " + std::to_string(dim) +
                      " entries");
  }
  return to_vector(v);
}

GridSpec grid_from_config(const ConfigFile& cfg) {
  GridSpec g;
  if (!cfg.has("grid.counts")) cfg.text("grid.counts");
  for (double c : cfg.numbers("grid.counts")) {
    g.counts.push_back(static_cast<std::int64_t>(std::llround(c)));
  }
  const int dim = g.dim();
  g.origin = per_axis(cfg, "grid.origin", dim, 0.0);
  if (cfg.has("grid.spacing")) {
    g.spacing = per_axis(cfg, "grid.spacing", dim);
  } else if (cfg.has("grid.extent")) {
    const Eigen::VectorXd extent = per_axis(cfg, "grid.extent", dim);
    g.spacing.resize(dim);
    for (int k = 0; k < dim; ++k) {
      g.spacing(k) = g.counts[k] > 1
                         ? extent(k) / static_cast<double>(g.counts[k] - 1)
                         : extent(k);
    }
  } else {
    throw ConfigError("grid needs either 'spacing' or 'extent'");
  }
  g.validate();
  return g;
}

CovFamily family_from_name(const std::string& raw) {
  const std::string f = canon(raw, '_');
  if (f == "white_noise") return CovFamily::WhiteNoise;
  if (f == "bessel") return CovFamily::Bessel;
  if (f == "hole_effect") return CovFamily::HoleEffect;
  if (f == "cauchy") return CovFamily::Cauchy;
  if (f == "stable") return CovFamily::StableFamily;
  if (f == "gaussian") return CovFamily::GaussianModel;
  if (f == "whittle_matern" || f == "matern") return CovFamily::WhittleMatern;
  if (f == "exponential") return CovFamily::Exponential;
  if (f == "spherical") return CovFamily::Spherical;
  throw ConfigError("unknown covariance family '" + raw + "'");
}

CovModel model_from_config(const ConfigFile& cfg, int dim) {
  const CovFamily family = family_from_name(cfg.text("field.model"));
  const double a = cfg.number("field.a", 1.0);
  const double b = cfg.number("field.b", 1.0);
  const double nu = cfg.number("field.nu", 1.0);
  CovModel m = [&]() {
    switch (family) {
      case CovFamily::WhiteNoise:
        return CovModel::white_noise(dim, b);
      case CovFamily::Bessel:
        return CovModel::bessel(dim, a, b, nu);
      case CovFamily::HoleEffect:
        return CovModel::hole_effect(dim, a, b);
      case CovFamily::Cauchy:
        return CovModel::cauchy(dim, a, b, nu);
      case CovFamily::StableFamily:
        return CovModel::stable_family(dim, a, b, nu);
      case CovFamily::GaussianModel:
        return CovModel::gaussian_model(dim, a, b);
      case CovFamily::WhittleMatern:
        return CovModel::whittle_matern(dim, a, b, nu);
      case CovFamily::Exponential:
        return CovModel::exponential(dim, a, b);
      case CovFamily::Spherical:
        return CovModel::spherical(dim, a, b);
      default:
        throw ConfigError("family '" + family_name(family) +
                          "' is not configurable");
    }
  }();
  const double nugget = cfg.number("field.nugget", 0.0);
  if (nugget > 0.0) m = m.with_nugget(nugget);
  if (cfg.has("field.anisotropy")) {
    const std::vector<double> q = cfg.numbers("field.anisotropy");
    if (static_cast<int>(q.size()) != dim * dim) {
      throw ConfigError("field.anisotropy needs a row-major " +
                        std::to_string(dim) + "x" + std::to_string(dim) +
                        " matrix");
    }
    Eigen::MatrixXd qm(dim, dim);
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < dim; ++c) qm(r, c) = q[static_cast<std::size_t>(r * dim + c)];
    }
    m = m.with_anisotropy(qm);
  }
  return m;
}

Kernel kernel_from_config(const ConfigFile& cfg, int dim,
                          const std::string& name) {
  if (name == "bisquare") {
    return bisquare_kernel(dim, cfg.number("field.amplitude", 15.0 / 16.0),
                           cfg.number("field.radius", 1.0));
  }
  if (name == "cylinder") {
    return cylinder_kernel(dim, cfg.number("field.radius"),
                           cfg.number("field.height", 1.0));
  }
  if (name == "parabolic") {
    return parabolic_kernel(dim, cfg.number("field.amplitude"),
                            cfg.number("field.radius"));
  }
  if (name == "box") {
    return box_kernel(dim, cfg.number("field.half_width"),
                      cfg.number("field.height", 1.0));
  }
  if (name == "tabulated") {
    return tabulated_kernel(cfg.text("field.kernel_table"));
  }
  throw ConfigError("unknown kernel '" + name + "'");
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

// Everything the stages share; construction parses and validates the config
// before any stage runs.
struct Pipeline {
  const ConfigFile& cfg;
  fs::path out;
  std::uint64_t seed = 0;
  int jobs = 1;
  double mean = 0.0;
  std::string field_type;  // gaussian | sub_gaussian | integral | shot_noise
  double alpha = 2.0;
  GridSpec grid;
  std::optional<CovModel> model;
  std::optional<IntegralField> ifield;
  std::optional<Kernel> shot_kernel;
  double intensity = 0.0;
  std::vector<std::string> methods;

  std::optional<GridField> realization;
  std::vector<Eigen::VectorXd> obs_sites;
  Eigen::VectorXd obs_values;
  std::vector<VariogramEstimate> vario_tables;
  std::optional<FitResult> fitted;

  RunResult result;
  json summary;

  Pipeline(const ConfigFile& c, const RunOverrides& ov) : cfg(c) {
    if (ov.seed) {
      seed = *ov.seed;
    } else if (cfg.has("experiment.seed")) {
      seed = static_cast<std::uint64_t>(cfg.integer("experiment.seed"));
    } else {
      throw ConfigError("experiment.seed is mandatory (or pass --seed)");
    }
    out = ov.out_dir ? *ov.out_dir : cfg.text("experiment.out", "out");
    jobs = ov.jobs ? *ov.jobs
                   : static_cast<int>(cfg.integer("experiment.jobs", 1));
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    mean = cfg.number("field.mean", 0.0);

    grid = grid_from_config(cfg);
    const int dim = grid.dim();

    field_type = canon(cfg.text("field.type"), '_');
    if (field_type == "gaussian") {
      alpha = 2.0;
      model = model_from_config(cfg, dim);
    } else if (field_type == "sub_gaussian") {
      alpha = cfg.number("field.alpha");
      model = model_from_config(cfg, dim);
    } else if (field_type == "integral") {
      alpha = cfg.number("field.alpha");
      ifield = integral_from_config(dim);
    } else if (field_type == "shot_noise") {
      intensity = cfg.number("field.intensity");
      shot_kernel = kernel_from_config(cfg, dim, canon(cfg.text("field.kernel"), '_'));
    } else {
      throw ConfigError(
          "field.type must be gaussian, sub-gaussian, integral or shot-noise");
    }
    if (field_type != "gaussian" && field_type != "shot_noise") {
      if (!(alpha > 0.0 && alpha <= 2.0)) {
        throw ConfigError("field.alpha must lie in (0,2]");
      }
    }

    if (ov.method) {
      methods = {*ov.method};
    } else if (cfg.has("experiment.methods")) {
      methods = cfg.words("experiment.methods");
    }
    for (auto& m : methods) m = canon(m, '-');

    summary["seed"] = seed;
    summary["field"] = {{"type", canon(field_type, '-')}};
    if (field_type != "shot_noise") summary["field"]["alpha"] = alpha;
    summary["grid"] = {{"counts", grid.counts}, {"size", grid.size()}};
  }

  IntegralField integral_from_config(int dim) {
    const std::string kname = canon(cfg.text("field.kernel"), '_');
    KernelFamily family = [&]() {
      if (kname == "ou") {
        if (dim != 1) throw ConfigError("the ou kernel family is one-dimensional");
        return KernelFamily::ou(cfg.number("field.lambda"));
      }
      if (kname == "levy_box") return KernelFamily::levy_box();
      return KernelFamily::moving_average(kernel_from_config(cfg, dim, kname));
    }();
    const Eigen::VectorXd lo = per_axis(cfg, "field.measure_lo", dim);
    const Eigen::VectorXd hi = per_axis(cfg, "field.measure_hi", dim);
    std::vector<int> cells;
    for (double c : cfg.numbers("field.measure_cells")) {
      cells.push_back(static_cast<int>(std::llround(c)));
    }
    if (cells.size() == 1) cells.assign(static_cast<std::size_t>(dim), cells[0]);
    if (static_cast<int>(cells.size()) != dim) {
      throw ConfigError("field.measure_cells needs 1 or dim entries");
    }
    MeasureSpace space = MeasureSpace::box_midpoint(lo, hi, cells);
    const double beta = cfg.number("field.beta", 0.0);
    if (beta < -1.0 || beta > 1.0) {
      throw ConfigError("field.beta must lie in [-1,1]");
    }
    std::function<double(const Eigen::VectorXd&)> skew;
    if (beta != 0.0) skew = [beta](const Eigen::VectorXd&) { return beta; };
    return IntegralField(std::move(family), std::move(space),
                         cfg.number("field.alpha"), std::move(skew));
  }

  void validate_methods() const {
    if (methods.empty()) {
      throw ConfigError("no methods requested: set experiment.methods or --method");
    }
    for (const auto& m : methods) {
      if (m == "simple-krige" || m == "ordinary-krige") {
        if (!model && !cfg.has_section("fit")) {
          throw ConfigError("method " + m +
                            " needs a covariance model: use a gaussian or "
                            "sub-gaussian field, or add a [fit] section");
        }
        continue;
      }
      const ExtrapMethod em = method_from_name(m);
      if (field_type == "shot_noise") {
        throw ConfigError("method " + m + " requires a stable field model");
      }
      switch (em) {
        case ExtrapMethod::Mcl:
          if (!(alpha > 1.0)) {
            throw ConfigError("method mcl requires alpha>1");
          }
          break;
        case ExtrapMethod::Lsl:
          if (alpha <= 1.0 && field_type == "integral") {
            throw ConfigError(
                "method lsl requires alpha>1 on integral fields; use "
                "best-lsl or iclsl");
          }
          break;
        case ExtrapMethod::Col:
          if (alpha <= 1.0 && field_type == "integral") {
            throw ConfigError("method col requires alpha>1 on integral fields");
          }
          break;
        case ExtrapMethod::BestLsl:
          if (alpha > 1.0) {
            throw ConfigError("method best-lsl requires alpha<=1");
          }
          break;
        case ExtrapMethod::Iclsl:
          if (std::abs(alpha - 1.0) > 1e-9) {
            throw ConfigError("method iclsl requires alpha=1");
          }
          break;
      }
    }
  }

  void record(const fs::path& p) { result.files.push_back(p.string()); }

  void time_stage(const std::string& name, const std::function<void()>& body) {
    Timer t;
    body();
    result.timings.push_back({name, t.seconds()});
  }

  fs::path path_of(const std::string& name) const { return out / name; }

  void ensure_out() { fs::create_directories(out); }

  void simulate(bool write_files) {
    time_stage("simulate", [&] {
      GridField f;
      if (field_type == "gaussian") {
        f = gaussian_sim(*model, grid, seed);
      } else if (field_type == "sub_gaussian") {
        f = sub_gaussian_sim(*model, alpha, grid, seed);
      } else if (field_type == "integral") {
        const FieldSample s = sample_field(*ifield, grid.sites(), seed);
        f.grid = grid;
        f.seed = seed;
        f.values = to_vector(s.values);
        f.meta["kind"] = "realization";
      } else {
        f = shot_noise_sim(intensity, *shot_kernel, grid, seed);
      }
      if (mean != 0.0) f.values.array() += mean;
      realization = std::move(f);
    });
    if (write_files) {
      ensure_out();
      const fs::path p = path_of("realization.csv");
      write_grid_csv(*realization, p.string());
      record(p);
      if (cfg.flag("experiment.binary", false)) {
        const fs::path b = path_of("realization.bin");
        write_grid_binary(*realization, b.string());
        record(b);
      }
    }
  }

  void observe() {
    const std::string raw = cfg.text("observations.sites");
    std::vector<Eigen::VectorXd> sites;
    std::istringstream in(raw);
    std::string tuple;
    while (std::getline(in, tuple, ';')) {
      std::string t = tuple;
      std::replace(t.begin(), t.end(), ',', ' ');
      std::istringstream tin(t);
      std::vector<double> coords;
      double v = 0.0;
      while (tin >> v) coords.push_back(v);
      if (coords.empty()) continue;
      if (static_cast<int>(coords.size()) != grid.dim()) {
        throw ConfigError("observation site '" + trim(tuple) + "' needs " +
                          std::to_string(grid.dim()) + " coordinates");
      }
      sites.push_back(to_vector(coords));
    }
    if (sites.empty()) throw ConfigError("observations.sites is empty");
    obs_sites = std::move(sites);

    if (cfg.has("observations.values")) {
      const std::vector<double> v = cfg.numbers("observations.values");
      if (v.size() != obs_sites.size()) {
        throw ConfigError("observations.values needs one value per site");
      }
      obs_values = to_vector(v);
    } else {
      obs_values.resize(static_cast<Eigen::Index>(obs_sites.size()));
      for (std::size_t i = 0; i < obs_sites.size(); ++i) {
        obs_values(static_cast<Eigen::Index>(i)) =
            realization->values(static_cast<Eigen::Index>(node_of(obs_sites[i], i)));
      }
    }

    ensure_out();
    CsvTable t;
    for (int k = 0; k < grid.dim(); ++k) t.header.push_back("x" + std::to_string(k + 1));
    t.header.push_back("value");
    for (std::size_t i = 0; i < obs_sites.size(); ++i) {
      std::vector<double> row;
      for (int k = 0; k < grid.dim(); ++k) row.push_back(obs_sites[i](k));
      row.push_back(obs_values(static_cast<Eigen::Index>(i)));
      t.rows.push_back(std::move(row));
    }
    const fs::path p = path_of("observations.csv");
    write_csv_file(p.string(), t);
    record(p);
  }

  // Flat index of the grid node a site sits on; ConfigError when it is off
  // the lattice by more than 1e-9.
  std::size_t node_of(const Eigen::VectorXd& site, std::size_t which) const {
    std::size_t flat = 0;
    for (int k = 0; k < grid.dim(); ++k) {
      const double rel = (site(k) - grid.origin(k)) / grid.spacing(k);
      const std::int64_t idx = std::llround(rel);
      const double snapped = grid.origin(k) + static_cast<double>(idx) * grid.spacing(k);
      if (idx < 0 || idx >= grid.counts[static_cast<std::size_t>(k)] ||
          std::abs(site(k) - snapped) > 1e-9) {
        throw ConfigError("observation site #" + std::to_string(which + 1) +
                          " is not a simulation grid node; provide "
                          "observations.values for off-grid sites");
      }
      flat = flat * static_cast<std::size_t>(grid.counts[static_cast<std::size_t>(k)]) +
             static_cast<std::size_t>(idx);
    }
    return flat;
  }

  void variogram_stage() {
    time_stage("variogram", [&] {
      double default_lag = std::numeric_limits<double>::infinity();
      for (int k = 0; k < grid.dim(); ++k) {
        default_lag = std::min(
            default_lag, grid.spacing(k) * static_cast<double>(grid.counts[static_cast<std::size_t>(k)] - 1));
      }
      const double max_lag = cfg.number("variogram.max_lag", 0.5 * default_lag);
      const int bins = static_cast<int>(cfg.integer("variogram.bins", 15));
      const double tol_deg = cfg.number("variogram.tolerance_deg", 22.5);
      const LagBins lag = LagBins::regular(max_lag, bins);

      std::vector<std::string> dirs{"omni"};
      if (cfg.has("variogram.directions")) dirs = cfg.words("variogram.directions");
      for (auto& d : dirs) d = canon(d, '_');

      vario_tables.clear();
      for (const auto& d : dirs) {
        std::optional<DirectionSpec> spec;
        if (d != "omni" && d != "all" && d != "omnidirectional") {
          const int axis = d == "x" ? 0 : d == "y" ? 1 : d == "z" ? 2 : -1;
          if (axis < 0 || axis >= grid.dim()) {
            throw ConfigError("variogram direction '" + d +
                              "' is not omni/x/y/z within the grid dimension");
          }
          DirectionSpec ds;
          ds.direction = Eigen::VectorXd::Unit(grid.dim(), axis);
          ds.tolerance_deg = tol_deg;
          ds.label = d;
          spec = std::move(ds);
        }
        vario_tables.push_back(matheron_estimate(*realization, lag, spec));
      }
    });

    ensure_out();
    CsvTable t;
    t.header.push_back("h");
    for (const auto& v : vario_tables) t.header.push_back("gamma_" + v.direction_label);
    for (const auto& v : vario_tables) t.header.push_back("pairs_" + v.direction_label);
    for (std::size_t k = 0; k < vario_tables.front().h_center.size(); ++k) {
      std::vector<double> row{vario_tables.front().h_center[k]};
      for (const auto& v : vario_tables) row.push_back(v.gamma[k]);
      for (const auto& v : vario_tables) {
        row.push_back(static_cast<double>(v.pair_count[k]));
      }
      t.rows.push_back(std::move(row));
    }
    const fs::path p = path_of("variogram.csv");
    write_csv_file(p.string(), t);
    record(p);
  }

  const VariogramEstimate& table_for_fit() const {
    for (const auto& v : vario_tables) {
      if (v.direction_label == "omnidirectional") return v;
    }
    return vario_tables.front();
  }

  void fit_stage() {
    time_stage("fit", [&] {
      FitSpec spec;
      spec.family = family_from_name(cfg.text("fit.family", "exponential"));
      spec.dim = grid.dim();
      spec.nu = cfg.number("fit.nu", 1.0);
      spec.fit_nugget = cfg.flag("fit.fit_nugget", true);
      const int restarts = static_cast<int>(cfg.integer("fit.restarts", 5));
      fitted = fit_variogram(table_for_fit(), spec, std::nullopt, seed, restarts);
    });

    ensure_out();
    std::ostringstream body;
    body << "family = " << family_name(fitted->spec.family) << "\n"
         << "dim = " << fitted->spec.dim << "\n"
         << "nugget = " << format_number(fitted->nugget) << "\n"
         << "a = " << format_number(fitted->a) << "\n"
         << "b = " << format_number(fitted->b) << "\n"
         << "nu = " << format_number(fitted->spec.nu) << "\n"
         << "residual = " << format_number(fitted->residual) << "\n"
         << "converged = " << (fitted->converged ? "true" : "false") << "\n"
         << "iterations = " << fitted->iterations << "\n";
    const fs::path p = path_of("fitted_model.txt");
    std::ofstream outf(p, std::ios::binary);
    if (!outf) throw IoError("cannot write " + p.string());
    outf << body.str();
    record(p);

    summary["fit"] = {{"family", family_name(fitted->spec.family)},
                      {"nugget", fitted->nugget},
                      {"a", fitted->a},
                      {"b", fitted->b},
                      {"nu", fitted->spec.nu},
                      {"residual", fitted->residual},
                      {"converged", fitted->converged}};
  }

  SolverConfig solver_config() const {
    SolverConfig sc;
    sc.lsl.max_iter = static_cast<int>(cfg.integer("lsl.max_iter", sc.lsl.max_iter));
    sc.lsl.tol = cfg.number("lsl.tol", sc.lsl.tol);
    sc.mcl.max_iter = static_cast<int>(cfg.integer("mcl.max_iter", sc.mcl.max_iter));
    sc.mcl.tol = cfg.number("mcl.tol", sc.mcl.tol);
    sc.anneal.starts =
        static_cast<int>(cfg.integer("annealing.starts", sc.anneal.starts));
    sc.anneal.cooling = cfg.number("annealing.cooling", sc.anneal.cooling);
    sc.anneal.proposals =
        static_cast<int>(cfg.integer("annealing.proposals", sc.anneal.proposals));
    sc.anneal.max_quad_nodes = static_cast<int>(
        cfg.integer("annealing.max_quad_nodes", sc.anneal.max_quad_nodes));
    sc.anneal.seed = seed;
    sc.anneal.obj_tol = cfg.number("annealing.obj_tol", sc.anneal.obj_tol);
    sc.anneal.weight_tol = cfg.number("annealing.weight_tol", sc.anneal.weight_tol);
    sc.anneal.sum_to_one = cfg.flag("annealing.sum_to_one", false);
    sc.iclsl.max_level =
        static_cast<int>(cfg.integer("iclsl.max_level", sc.iclsl.max_level));
    sc.iclsl.tol = cfg.number("iclsl.tol", sc.iclsl.tol);
    sc.iclsl.inner = sc.lsl;
    return sc;
  }

  Observations observations() const {
    Observations obs;
    obs.sites = obs_sites;
    obs.values = obs_values;
    const double m = mean;
    obs.mean_fn = [m](const Eigen::VectorXd&) { return m; };
    return obs;
  }

  void predict_one(const std::string& m) {
    ensure_out();
    if (m == "simple-krige" || m == "ordinary-krige") {
      KrigeGridResult r = [&]() {
        if (m == "simple-krige") {
          const CovModel km = model ? *model : fitted->cov_model();
          return krige_grid(km, observations(), grid, jobs);
        }
        const VarioModel vm =
            model ? VarioModel::from_cov(*model) : fitted->model();
        return krige_grid(vm, observations(), grid, jobs);
      }();
      const fs::path pp = path_of("prediction_" + m + ".csv");
      write_grid_csv(r.prediction, pp.string());
      record(pp);
      const fs::path ep = path_of("error_variance_" + m + ".csv");
      write_grid_csv(r.error_variance, ep.string());
      record(ep);
      summary["methods"][m] = {
          {"error_variance_mean", r.error_variance.values.mean()},
          {"error_variance_max", r.error_variance.values.maxCoeff()}};
      return;
    }

    const ExtrapMethod em = method_from_name(m);
    const ExtrapProblem base = [&]() {
      const Eigen::VectorXd t0 = grid.site(0);
      if (field_type == "integral") {
        return ExtrapProblem::from_field(*ifield, obs_sites, t0);
      }
      const double a = field_type == "gaussian" ? 2.0 : alpha;
      return ExtrapProblem::sub_gaussian(*model, a, obs_sites, t0);
    }();
    const ExtrapGridResult r =
        extrap_grid(base, obs_values, em, grid, solver_config(), jobs);

    const fs::path pp = path_of("prediction_" + m + ".csv");
    write_grid_csv(r.prediction, pp.string());
    record(pp);

    CsvTable w;
    for (int k = 0; k < grid.dim(); ++k) w.header.push_back("x" + std::to_string(k + 1));
    for (std::size_t i = 0; i < obs_sites.size(); ++i) {
      w.header.push_back("w" + std::to_string(i + 1));
    }
    w.header.push_back("objective");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::vector<double> row;
      const Eigen::VectorXd x = grid.site(i);
      for (int k = 0; k < grid.dim(); ++k) row.push_back(x(k));
      for (Eigen::Index j = 0; j < r.weights.cols(); ++j) {
        row.push_back(r.weights(static_cast<Eigen::Index>(i), j));
      }
      row.push_back(r.objectives[i]);
      w.rows.push_back(std::move(row));
    }
    const fs::path wp = path_of("weights_" + m + ".csv");
    write_csv_file(wp.string(), w);
    record(wp);

    double obj_mean = 0.0, obj_max = -std::numeric_limits<double>::infinity();
    for (double v : r.objectives) {
      obj_mean += v;
      obj_max = std::max(obj_max, v);
    }
    obj_mean /= static_cast<double>(r.objectives.size());
    summary["methods"][m] = {{"objective_mean", obj_mean},
                             {"objective_max", obj_max}};
  }

  void predict_stage() {
    for (const auto& m : methods) {
      time_stage("predict_" + m, [&] { predict_one(m); });
    }
  }

  void write_summary() {
    ensure_out();
    summary["jobs"] = jobs;
    summary["requested_methods"] = methods;
    summary["outputs"] = json::array();
    for (const auto& f : result.files) {
      summary["outputs"].push_back(fs::path(f).filename().string());
    }
    summary["timings"] = json::object();
    for (const auto& t : result.timings) summary["timings"][t.stage] = t.seconds;
    const fs::path p = path_of("summary.json");
    std::ofstream outf(p, std::ios::binary);
    if (!outf) throw IoError("cannot write " + p.string());
    outf << summary.dump(2) << "\n";
    record(p);
    result.out_dir = out.string();
  }
};

}  // namespace

RunResult run_simulate(const ConfigFile& config, const RunOverrides& overrides) {
  Pipeline p(config, overrides);
  p.simulate(true);
  p.result.out_dir = p.out.string();
  return std::move(p.result);
}

RunResult run_variogram(const ConfigFile& config, const RunOverrides& overrides) {
  Pipeline p(config, overrides);
  p.simulate(true);
  p.variogram_stage();
  p.result.out_dir = p.out.string();
  return std::move(p.result);
}

RunResult run_fit(const ConfigFile& config, const RunOverrides& overrides) {
  Pipeline p(config, overrides);
  p.simulate(true);
  p.variogram_stage();
  p.fit_stage();
  p.result.out_dir = p.out.string();
  return std::move(p.result);
}

RunResult run_predict(const ConfigFile& config, const RunOverrides& overrides) {
  Pipeline p(config, overrides);
  p.validate_methods();
  p.simulate(true);
  if (p.cfg.has_section("fit")) {
    p.variogram_stage();
    p.fit_stage();
  }
  p.observe();
  p.predict_stage();
  p.write_summary();
  return std::move(p.result);
}

RunResult run_experiment(const ConfigFile& config, const RunOverrides& overrides) {
  Pipeline p(config, overrides);
  p.validate_methods();
  p.simulate(true);
  const bool want_vario =
      p.cfg.has_section("variogram") || p.cfg.has_section("fit");
  if (want_vario) p.variogram_stage();
  if (p.cfg.has_section("fit")) p.fit_stage();
  p.observe();
  p.predict_stage();
  p.write_summary();
  return std::move(p.result);
}

}  // namespace stablefield
