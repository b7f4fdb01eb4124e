#include "spiked/config.hpp"

#include <omp.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "spiked/error.hpp"

namespace spiked {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ValidationError("expected a number, got '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(out)) throw ValidationError("expected a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ValidationError("expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ValidationError("expected an unsigned integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& v) {
  const long long x = to_integer(v);
  if (x < -2147483647LL || x > 2147483647LL) throw ValidationError("integer out of range: " + v);
  return static_cast<int>(x);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  throw ValidationError("expected a boolean, got '" + v + "'");
}

const std::vector<std::string>& density_params() {
  static const std::vector<std::string> keys = {"radius", "gamma", "xi", "alpha", "sigma2", "cutoff"};
  return keys;
}

}  // namespace

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::vector<double> parse_lambda_grid(const std::string& text) {
  std::vector<double> out;
  const std::string t = trim(text);
  if (t.empty()) return out;
  if (t.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(trim(item));
    if (parts.size() != 3) throw ValidationError("range grid must look like start:stop:step");
    const double a = to_double(parts[0]);
    const double b = to_double(parts[1]);
    const double step = to_double(parts[2]);
    if (!(step > 0.0)) throw ValidationError("grid step must be positive");
    if (b < a) throw ValidationError("grid stop must not be below start");
    const auto count = static_cast<long long>(std::floor((b - a) / step + 1e-9));
    if (count > 100000) throw ValidationError("grid has too many points");
    for (long long k = 0; k <= count; ++k) {
      const double v = a + static_cast<double>(k) * step;
      out.push_back(std::round(v * 1e12) / 1e12);
    }
    return out;
  }
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ValidationError("empty entry in lambda grid");
    out.push_back(to_double(item));
  }
  return out;
}

ExperimentConfig::ExperimentConfig() { tap.onsager_mode = OnsagerMode::fixed_from_replica; }

ExperimentConfig parse_config(std::istream& is, const std::string& source) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    auto fail = [&](const std::string& msg) -> ValidationError {
      return ValidationError(fmt::format("{}:{}: {}", source, lineno, msg));
    };
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw fail("expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw fail("missing key");
    if (value.empty()) throw fail("missing value for '" + key + "'");
    if (auto it = seen.find(key); it != seen.end())
      throw fail(fmt::format("duplicate key '{}' (first set on line {})", key, it->second));
    seen[key] = lineno;

    try {
      if (key == "noise") {
        cfg.noise.kind = value;
      } else if (key == "noise.file") {
        cfg.noise.file = value;
      } else if (key == "noise.outliers") {
        cfg.noise.outliers = to_int(value);
      } else if (key == "noise.potential") {
        if (value != "auto" && value != "analytic" && value != "reconstructed")
          throw ValidationError("noise.potential must be auto, analytic or reconstructed");
        cfg.noise.potential = value;
      } else if (key.rfind("noise.", 0) == 0) {
        const std::string p = key.substr(6);
        if (std::find(density_params().begin(), density_params().end(), p) == density_params().end())
          throw ValidationError("unknown key '" + key + "'");
        cfg.noise.params[p] = to_double(value);
      } else if (key == "prior") {
        cfg.prior.kind = value;
      } else if (key == "prior.epsilon") {
        cfg.prior.params["epsilon"] = to_double(value);
      } else if (key == "prior.file") {
        cfg.prior.file = value;
      } else if (key == "lambda_grid") {
        cfg.lambda_grid = parse_lambda_grid(value);
      } else if (key == "lambda") {
        cfg.lambda = to_double(value);
      } else if (key == "n") {
        cfg.n = to_int(value);
      } else if (key == "trials") {
        cfg.trials = to_int(value);
      } else if (key == "seed") {
        cfg.seed = to_u64(value);
      } else if (key == "workers") {
        cfg.workers = to_int(value);
      } else if (key == "replica.damping") {
        cfg.replica.damping = to_double(value);
      } else if (key == "replica.tol") {
        cfg.replica.tol = to_double(value);
      } else if (key == "replica.max_iter") {
        cfg.replica.max_iter = to_int(value);
      } else if (key == "replica.init_policy") {
        cfg.replica.init_policy = parse_init_policy(value);
      } else if (key == "replica.q_constant") {
        cfg.replica.q_constant = parse_q_constant(value);
      } else if (key == "tap.tau") {
        cfg.tap.tau = to_double(value);
      } else if (key == "tap.max_iter") {
        cfg.tap.max_iter = to_int(value);
      } else if (key == "tap.tol") {
        cfg.tap.tol = to_double(value);
      } else if (key == "tap.onsager") {
        cfg.tap.onsager_mode = parse_onsager_mode(value);
      } else if (key == "tap.init") {
        cfg.tap.init_mode = parse_init_mode(value);
      } else if (key == "tap.init_correlation") {
        cfg.tap.init_correlation = to_double(value);
      } else if (key == "tap.clamp") {
        cfg.tap.clamp_policy = parse_clamp_policy(value);
      } else if (key == "tap.power_iters") {
        cfg.power_iters = to_int(value);
      } else if (key == "surrogate.seed") {
        cfg.surrogate_seed = to_u64(value);
      } else if (key == "output.trajectories") {
        cfg.dump_trajectories = to_bool(value);
      } else if (key == "output.observations") {
        cfg.dump_observations = to_bool(value);
      } else {
        throw ValidationError("unknown key '" + key + "'");
      }
    } catch (const ValidationError& e) {
      const std::string what = e.what();
      if (what.rfind(source + ":", 0) == 0) throw;
      throw fail(what);
    }
    cfg.echo.emplace_back(key, value);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  ExperimentConfig cfg = parse_config(in, path);
  const auto parent = std::filesystem::path(path).parent_path();
  cfg.base_dir = parent.empty() ? "." : parent.string();
  return cfg;
}

std::string ExperimentConfig::canonical() const {
  std::map<std::string, std::string> kv;
  auto num = [](double v) { return fmt::format("{:.17g}", v); };
  kv["noise"] = noise.kind;
  for (const auto& [k, v] : noise.params) kv["noise." + k] = num(v);
  kv["noise.file"] = noise.file;
  kv["noise.outliers"] = std::to_string(noise.outliers);
  kv["noise.potential"] = noise.potential;
  kv["prior"] = prior.kind;
  for (const auto& [k, v] : prior.params) kv["prior." + k] = num(v);
  kv["prior.file"] = prior.file;
  std::string grid;
  for (double l : lambda_grid) grid += (grid.empty() ? "" : ",") + num(l);
  kv["lambda_grid"] = grid;
  kv["lambda"] = lambda ? num(*lambda) : "";
  kv["n"] = std::to_string(n);
  kv["trials"] = std::to_string(trials);
  kv["seed"] = std::to_string(seed);
  kv["replica.damping"] = num(replica.damping);
  kv["replica.tol"] = num(replica.tol);
  kv["replica.max_iter"] = std::to_string(replica.max_iter);
  kv["replica.init_policy"] = std::to_string(static_cast<int>(replica.init_policy));
  kv["replica.q_constant"] = std::to_string(static_cast<int>(replica.q_constant));
  kv["tap.tau"] = num(tap.tau);
  kv["tap.max_iter"] = std::to_string(tap.max_iter);
  kv["tap.tol"] = num(tap.tol);
  kv["tap.onsager"] = to_string(tap.onsager_mode);
  kv["tap.init"] = to_string(tap.init_mode);
  kv["tap.init_correlation"] = num(tap.init_correlation);
  kv["tap.clamp"] = to_string(tap.clamp_policy);
  kv["tap.power_iters"] = std::to_string(power_iters);
  kv["surrogate.seed"] = surrogate_seed ? std::to_string(*surrogate_seed) : "";
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical()); }

void ExperimentConfig::validate() const {
  if (trials < 1) throw ValidationError("trials must be at least 1");
  if (n < 64) throw ValidationError("n must be at least 64");
  if (workers < 0) throw ValidationError("workers must be nonnegative");
  if (power_iters < 1) throw ValidationError("tap.power_iters must be at least 1");
  if (noise.outliers < 0) throw ValidationError("noise.outliers must be nonnegative");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid[i] >= 0.0)) throw ValidationError("lambda_grid entries must be nonnegative");
    if (i > 0 && !(lambda_grid[i] > lambda_grid[i - 1]))
      throw ValidationError("lambda_grid must be strictly increasing");
  }
  if (lambda && !(*lambda >= 0.0)) throw ValidationError("lambda must be nonnegative");
  if (noise.kind == "file" && noise.file.empty()) throw ValidationError("noise = file needs noise.file");
  if (prior.kind == "file" && prior.file.empty()) throw ValidationError("prior = file needs prior.file");
  if (surrogate_seed && *surrogate_seed != seed)
    throw ValidationError("surrogate.seed must equal seed: the comparison pairs trials by seed");
  if (!(replica.damping >= 0.0 && replica.damping < 1.0))
    throw ValidationError("replica.damping must lie in [0, 1)");
  if (!(replica.tol > 0.0)) throw ValidationError("replica.tol must be positive");
  tap.validate();
}

double ExperimentConfig::single_lambda() const {
  if (lambda) return *lambda;
  if (lambda_grid.size() == 1) return lambda_grid.front();
  throw ValidationError("this command needs a single SNR: set 'lambda' or a one-point lambda_grid");
}

int ExperimentConfig::effective_workers() const {
  return workers > 0 ? workers : std::max(1, omp_get_max_threads());
}

}  // namespace spiked
