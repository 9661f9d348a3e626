#include "tos/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace tos {
namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

int64_t parse_i64(const std::string& v, int line) {
  int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) fail(line, "expected integer, got '" + v + "'");
  return out;
}

uint64_t parse_u64(const std::string& v, int line) {
  uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(line, "expected nonnegative integer, got '" + v + "'");
  return out;
}

double parse_f64(const std::string& v, int line) {
  try {
    size_t idx = 0;
    const double out = std::stod(v, &idx);
    if (idx != v.size()) fail(line, "expected number, got '" + v + "'");
    return out;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    fail(line, "expected number, got '" + v + "'");
  }
}

bool parse_onoff(const std::string& v, int line) {
  if (v == "on") return true;
  if (v == "off") return false;
  fail(line, "expected on or off, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v, int line) {
  std::vector<std::string> items;
  if (trim(v).empty()) return items;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(line, "empty item in list '" + v + "'");
    items.push_back(item);
  }
  return items;
}

std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream os;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) os << ',';
    if constexpr (std::is_same_v<T, std::string>)
      os << xs[i];
    else
      os << std::to_string(xs[i]);
  }
  return os.str();
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::set<std::string> seen;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(line, "unterminated section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      if (section != "problem" && section != "solver" && section != "output" &&
          section != "reference")
        fail(line, "unknown section [" + section + "]");
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value, got '" + s + "'");
    if (section.empty()) fail(line, "key before any section header");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    const std::string qualified = section + "." + key;
    if (!seen.insert(qualified).second) fail(line, "duplicate key " + qualified);

    if (qualified == "problem.modality") cfg.problem.modality = val;
    else if (qualified == "problem.height") cfg.problem.height = parse_i64(val, line);
    else if (qualified == "problem.width") cfg.problem.width = parse_i64(val, line);
    else if (qualified == "problem.angles") cfg.problem.angles = parse_i64(val, line);
    else if (qualified == "problem.detectors") cfg.problem.detectors = parse_i64(val, line);
    else if (qualified == "problem.subsets") cfg.problem.subsets = parse_i64(val, line);
    else if (qualified == "problem.lambda") cfg.problem.lambda = parse_f64(val, line);
    else if (qualified == "problem.i0") cfg.problem.i0 = parse_f64(val, line);
    else if (qualified == "problem.seed") cfg.problem.seed = parse_u64(val, line);
    else if (qualified == "solver.algorithms") cfg.solver.algorithms = split_list(val, line);
    else if (qualified == "solver.epochs") cfg.solver.epochs = parse_i64(val, line);
    else if (qualified == "solver.iterations") cfg.solver.iterations = parse_i64(val, line);
    else if (qualified == "solver.gamma") cfg.solver.gamma = parse_f64(val, line);
    else if (qualified == "solver.theta") cfg.solver.theta = parse_f64(val, line);
    else if (qualified == "solver.sampling") cfg.solver.sampling = val;
    else if (qualified == "solver.seeds") {
      cfg.solver.seeds.clear();
      for (const auto& item : split_list(val, line)) cfg.solver.seeds.push_back(parse_u64(item, line));
    } else if (qualified == "output.dir") cfg.output.dir = val;
    else if (qualified == "output.checkpoint_every") cfg.output.checkpoint_every = parse_i64(val, line);
    else if (qualified == "output.checkpoint_iters") {
      cfg.output.checkpoint_iters.clear();
      for (const auto& item : split_list(val, line))
        cfg.output.checkpoint_iters.push_back(parse_i64(item, line));
    } else if (qualified == "output.timing") cfg.output.timing = parse_onoff(val, line);
    else if (qualified == "reference.iterations") cfg.reference.iterations = parse_i64(val, line);
    else if (qualified == "reference.tol") cfg.reference.tol = parse_f64(val, line);
    else if (qualified == "reference.file") cfg.reference.file = val;
    else fail(line, "unknown key " + qualified);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void ExperimentConfig::validate() const {
  const auto bad = [](const std::string& msg) { throw ConfigError(msg); };

  if (problem.modality != "sparse_view" && problem.modality != "low_dose")
    bad("problem.modality must be sparse_view or low_dose, got '" + problem.modality + "'");
  if (problem.height < 16 || problem.width < 16)
    bad("problem geometry must be at least 16x16");
  if (problem.angles < 0) bad("problem.angles must be nonnegative (0 = auto)");
  if (problem.detectors < 0) bad("problem.detectors must be nonnegative (0 = auto)");
  if (problem.subsets < 1) bad("problem.subsets must be at least 1");
  if (problem.subsets > problem.effective_angles())
    bad("problem.subsets exceeds the angle count");
  if (!(problem.lambda >= 0) || !std::isfinite(problem.lambda))
    bad("problem.lambda must be finite and nonnegative");
  if (!(problem.i0 >= 0) || !std::isfinite(problem.i0)) bad("problem.i0 must be finite and nonnegative (0 = auto)");

  if (solver.algorithms.empty()) bad("solver.algorithms must not be empty");
  std::set<std::string> algos;
  for (const auto& a : solver.algorithms) {
    if (a != "tos" && a != "spdhg" && a != "condat_vu")
      bad("unknown algorithm '" + a + "' (expected tos, spdhg, or condat_vu)");
    if (!algos.insert(a).second) bad("algorithm '" + a + "' listed twice");
    if (a == "spdhg" && problem.lambda > 0)
      bad("spdhg requires lambda = 0 (no smooth term)");
  }
  if (solver.epochs && solver.iterations)
    bad("solver.epochs and solver.iterations are mutually exclusive");
  if (solver.epochs && *solver.epochs < 1) bad("solver.epochs must be at least 1");
  if (solver.iterations && *solver.iterations < 1) bad("solver.iterations must be at least 1");
  if (!(solver.gamma > 0) || !std::isfinite(solver.gamma)) bad("solver.gamma must be positive");
  if (!std::isfinite(solver.theta)) bad("solver.theta must be finite");
  if (solver.sampling != "uniform" && solver.sampling != "importance")
    bad("solver.sampling must be uniform or importance, got '" + solver.sampling + "'");
  if (solver.seeds.empty()) bad("solver.seeds must not be empty");
  std::set<uint64_t> seeds(solver.seeds.begin(), solver.seeds.end());
  if (seeds.size() != solver.seeds.size()) bad("solver.seeds contains duplicates");

  if (output.dir.empty()) bad("output.dir must not be empty");
  if (output.checkpoint_every < 0) bad("output.checkpoint_every must be nonnegative");
  for (size_t i = 0; i < output.checkpoint_iters.size(); ++i) {
    if (output.checkpoint_iters[i] < 1) bad("output.checkpoint_iters entries must be positive");
    if (i > 0 && output.checkpoint_iters[i] <= output.checkpoint_iters[i - 1])
      bad("output.checkpoint_iters must be strictly increasing");
  }

  if (reference.iterations < 0) bad("reference.iterations must be nonnegative");
  if (!(reference.tol > 0) || !std::isfinite(reference.tol)) bad("reference.tol must be positive");
}

int64_t ExperimentConfig::effective_epochs() const {
  if (solver.iterations)
    return (*solver.iterations + problem.subsets - 1) / problem.subsets;
  return solver.epochs.value_or(150);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[problem]\n";
  os << "modality = " << cfg.problem.modality << "\n";
  os << "height = " << cfg.problem.height << "\n";
  os << "width = " << cfg.problem.width << "\n";
  os << "angles = " << cfg.problem.angles << "\n";
  os << "detectors = " << cfg.problem.detectors << "\n";
  os << "subsets = " << cfg.problem.subsets << "\n";
  os << "lambda = " << fmt_f64(cfg.problem.lambda) << "\n";
  os << "i0 = " << fmt_f64(cfg.problem.i0) << "\n";
  os << "seed = " << cfg.problem.seed << "\n";
  os << "\n[solver]\n";
  os << "algorithms = " << join(cfg.solver.algorithms) << "\n";
  if (cfg.solver.epochs) os << "epochs = " << *cfg.solver.epochs << "\n";
  if (cfg.solver.iterations) os << "iterations = " << *cfg.solver.iterations << "\n";
  os << "gamma = " << fmt_f64(cfg.solver.gamma) << "\n";
  os << "theta = " << fmt_f64(cfg.solver.theta) << "\n";
  os << "sampling = " << cfg.solver.sampling << "\n";
  os << "seeds = " << join(cfg.solver.seeds) << "\n";
  os << "\n[output]\n";
  os << "dir = " << cfg.output.dir << "\n";
  os << "checkpoint_every = " << cfg.output.checkpoint_every << "\n";
  os << "checkpoint_iters = " << join(cfg.output.checkpoint_iters) << "\n";
  os << "timing = " << (cfg.output.timing ? "on" : "off") << "\n";
  os << "\n[reference]\n";
  os << "iterations = " << cfg.reference.iterations << "\n";
  os << "tol = " << fmt_f64(cfg.reference.tol) << "\n";
  os << "file = " << cfg.reference.file << "\n";
  return os.str();
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.output.dir.clear();
  return fnv1a64(serialize_config(c));
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  return buf;
}

}  // namespace tos
