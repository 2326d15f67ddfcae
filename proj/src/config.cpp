#include "enkfsq/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

#include "enkfsq/csv.hpp"

namespace enkfsq::harness {

std::string_view to_string(ModelKind kind) { return kind == ModelKind::L40 ? "L40" : "LSST"; }

// ---- presets -----------------------------------------------------------------

ExperimentConfig ExperimentConfig::l40() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::l40_desk() {
  ExperimentConfig cfg = l40();
  cfg.steps = 2000;
  return cfg;
}

ExperimentConfig ExperimentConfig::lsst() {
  ExperimentConfig cfg;
  cfg.model = ModelKind::LSST;
  cfg.ensemble_size = 30;
  cfg.obs_every = 10;
  cfg.years = 4.0;
  cfg.sigma_obs = 0.1;
  cfg.init_perturbation = 0.5;
  cfg.init_perturbation_is_std = true;
  return cfg;
}

ExperimentConfig ExperimentConfig::lsst_desk() {
  ExperimentConfig cfg = lsst();
  cfg.steps = 1500;
  return cfg;
}

// ---- derived -----------------------------------------------------------------

Index ExperimentConfig::total_steps() const {
  if (steps) return *steps;
  const Index per_year = model == ModelKind::L40 ? kL40StepsPerYear : kLsstStepsPerYear;
  return static_cast<Index>(std::floor(years * static_cast<double>(per_year) + 1e-9));
}

Index ExperimentConfig::effective_climatology_steps() const {
  if (climatology_steps > 0) return climatology_steps;
  return model == ModelKind::L40 ? 5 * kL40StepsPerYear : 4 * kLsstStepsPerYear;
}

Index ExperimentConfig::state_size() const { return models::state_size(truth_params()); }

std::vector<Index> ExperimentConfig::sites() const {
  if (!observed_sites.empty()) return observed_sites;
  std::vector<Index> out;
  const Index n = state_size();
  for (Index i = 0; i < n; ++i) {
    // LSST: regular network of 80 of the 100 cells, every fifth cell unobserved.
    if (model == ModelKind::LSST && (i + 1) % 5 == 0) continue;
    out.push_back(i);
  }
  return out;
}

models::ModelParams ExperimentConfig::truth_params() const {
  if (model == ModelKind::L40) {
    models::L40Params p = models::L40Params::truth();
    p.forcing = truth_forcing;
    return p;
  }
  models::LSSTParams p = models::LSSTParams::truth();
  p.coordinate = lsst_coordinate;
  return p;
}

models::ModelParams ExperimentConfig::forecast_params() const {
  if (model == ModelKind::L40) {
    models::L40Params p = models::L40Params::forecast();
    p.forcing = forecast_forcing;
    return p;
  }
  models::LSSTParams p = models::LSSTParams::forecast();
  p.coordinate = lsst_coordinate;
  p.source_noise_std = lsst_source_noise_std;
  p.velocity_noise_rel = lsst_velocity_noise_rel;
  return p;
}

double ExperimentConfig::init_perturbation_std() const {
  return init_perturbation_is_std ? init_perturbation : std::sqrt(init_perturbation);
}

void ExperimentConfig::validate() const {
  if (ensemble_size < 3) throw ConfigError("ensemble_size must be >= 3");
  if (obs_every < 1) throw ConfigError("obs_every must be >= 1");
  if (total_steps() < obs_every) throw ConfigError("run is shorter than one assimilation cycle");
  if (!(or_fraction_target >= 0.0 && or_fraction_target <= 1.0)) {
    throw ConfigError("or_fraction must lie in [0, 1]");
  }
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(sigma_obs > 0.0)) throw ConfigError("sigma_obs must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(init_perturbation >= 0.0)) throw ConfigError("init_perturbation must be >= 0");
  if (!(divergence_factor > 0.0)) throw ConfigError("divergence_factor must be positive");
  if (moving_average_window < 1) throw ConfigError("moving_average_window must be >= 1");
  if (mu && !std::isfinite(*mu)) throw ConfigError("mu must be finite");
  const Index n = state_size();
  std::vector<Index> s = sites();
  if (s.empty()) throw ConfigError("no observed sites");
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw ConfigError("duplicate observed site");
  if (s.front() < 0 || s.back() >= n) throw ConfigError("observed site outside the state");
}

// ---- key=value ----------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const std::string s(trim(v));
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) {
    throw ConfigError("key `" + std::string(key) + "`: expected a number, got `" + s + "`");
  }
  return out;
}

template <class Int>
Int to_int(std::string_view key, std::string_view v) {
  v = trim(v);
  Int out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("key `" + std::string(key) + "`: expected an integer, got `" +
                      std::string(v) + "`");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  const std::string s = lower(trim(v));
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("key `" + std::string(key) + "`: expected a boolean, got `" + s + "`");
}

// "1,2,5-8" -> {1,2,5,6,7,8}
template <class Int>
std::vector<Int> to_list(std::string_view key, std::string_view v) {
  std::vector<Int> out;
  std::string_view rest = trim(v);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (item.empty()) continue;
    const auto dash = item.find('-', 1);
    if (dash != std::string_view::npos) {
      const Int lo = to_int<Int>(key, item.substr(0, dash));
      const Int hi = to_int<Int>(key, item.substr(dash + 1));
      if (hi < lo) throw ConfigError("key `" + std::string(key) + "`: empty range");
      for (Int x = lo; x <= hi; ++x) out.push_back(x);
    } else {
      out.push_back(to_int<Int>(key, item));
    }
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"preset",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const std::string s = lower(trim(v));
         if (s == "l40") c = ExperimentConfig::l40();
         else if (s == "l40_desk") c = ExperimentConfig::l40_desk();
         else if (s == "lsst") c = ExperimentConfig::lsst();
         else if (s == "lsst_desk") c = ExperimentConfig::lsst_desk();
         else throw ConfigError("key `" + std::string(k) + "`: unknown preset `" + s + "`");
       }},
      {"model",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const std::string s = lower(trim(v));
         if (s == "l40") {
           if (c.model != ModelKind::L40) c = ExperimentConfig::l40();
         } else if (s == "lsst") {
           if (c.model != ModelKind::LSST) c = ExperimentConfig::lsst();
         } else {
           throw ConfigError("key `" + std::string(k) + "`: unknown model `" + s + "`");
         }
       }},
      {"filter",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const auto kind = filters::parse_filter_kind(trim(v));
         if (!kind) throw ConfigError("key `" + std::string(k) + "`: unknown filter `" + std::string(trim(v)) + "`");
         c.filter = *kind;
       }},
      {"ensemble_size", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.ensemble_size = to_int<Index>(k, v); }},
      {"obs_every", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.obs_every = to_int<Index>(k, v); }},
      {"observed_sites",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const std::string s = lower(trim(v));
         if (s == "default" || s.empty()) c.observed_sites.clear();
         else c.observed_sites = to_list<Index>(k, v);
       }},
      {"or_fraction",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.or_fraction_target = to_double(k, v);
         c.mu.reset();
       }},
      {"mu",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const std::string s = lower(trim(v));
         if (s == "auto" || s.empty()) c.mu.reset();
         else c.mu = to_double(k, v);
       }},
      {"limit_side",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const std::string s = lower(trim(v));
         if (s == "upper") c.limit_side = obs::LimitSide::Upper;
         else if (s == "lower") c.limit_side = obs::LimitSide::Lower;
         else throw ConfigError("key `" + std::string(k) + "`: expected upper or lower");
       }},
      {"alpha", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.alpha = to_double(k, v); }},
      {"years",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.years = to_double(k, v);
         c.steps.reset();
       }},
      {"steps",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const std::string s = lower(trim(v));
         if (s == "auto" || s.empty()) c.steps.reset();
         else c.steps = to_int<Index>(k, v);
       }},
      {"seeds", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.seeds = to_list<std::uint64_t>(k, v); }},
      {"sigma_obs", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.sigma_obs = to_double(k, v); }},
      {"sigma_or_mode",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const std::string s = lower(trim(v));
         if (s == "conditional") c.sigma_or_mode = obs::SigmaOrMode::ConditionalMean;
         else if (s == "unnormalized") c.sigma_or_mode = obs::SigmaOrMode::Unnormalized;
         else throw ConfigError("key `" + std::string(k) + "`: expected conditional or unnormalized");
       }},
      {"pdenkf_mode",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const std::string s = lower(trim(v));
         if (s == "joint") c.pdenkf_mode = filters::PdenkfMode::Joint;
         else if (s == "serial") c.pdenkf_mode = filters::PdenkfMode::Serial;
         else throw ConfigError("key `" + std::string(k) + "`: expected joint or serial");
       }},
      {"init_perturbation", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.init_perturbation = to_double(k, v); }},
      {"init_perturbation_is_std", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.init_perturbation_is_std = to_bool(k, v); }},
      {"truth_forcing", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.truth_forcing = to_double(k, v); }},
      {"forecast_forcing", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.forecast_forcing = to_double(k, v); }},
      {"lsst_coordinate",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const std::string s = lower(trim(v));
         if (s == "index") c.lsst_coordinate = models::GridCoordinate::CellIndex;
         else if (s == "meters") c.lsst_coordinate = models::GridCoordinate::CellCenterMeters;
         else throw ConfigError("key `" + std::string(k) + "`: expected index or meters");
       }},
      {"lsst_source_noise_std", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.lsst_source_noise_std = to_double(k, v); }},
      {"lsst_velocity_noise_rel", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.lsst_velocity_noise_rel = to_double(k, v); }},
      {"climatology_steps", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.climatology_steps = to_int<Index>(k, v); }},
      {"climatology_file", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.climatology_file = std::string(trim(v)); }},
      {"divergence_factor", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.divergence_factor = to_double(k, v); }},
      {"moving_average_window", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.moving_average_window = to_int<std::size_t>(k, v); }},
  };
  return table;
}

}  // namespace

const std::vector<std::string_view>& config_keys() {
  static const std::vector<std::string_view> keys = [] {
    std::vector<std::string_view> out;
    for (const auto& [k, _] : setters()) out.push_back(k);
    return out;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const auto it = setters().find(trim(key));
  if (it == setters().end()) throw ConfigError("unknown config key `" + std::string(trim(key)) + "`");
  it->second(cfg, trim(key), value);
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig base) {
  std::vector<std::pair<std::string, std::string>> settings;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string_view body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    settings.emplace_back(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
  }
  // Presets and the model reset defaults, so they go first.
  for (const char* first : {"preset", "model"}) {
    for (const auto& [k, v] : settings) {
      if (k == first) apply_setting(base, k, v);
    }
  }
  for (const auto& [k, v] : settings) {
    if (k != "preset" && k != "model") apply_setting(base, k, v);
  }
  return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file `" + path + "`");
  return parse_config(in, std::move(base));
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  auto list = [](const auto& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  out << "model=" << to_string(model) << '\n'
      << "filter=" << filters::to_string(filter) << '\n'
      << "ensemble_size=" << ensemble_size << '\n'
      << "obs_every=" << obs_every << '\n'
      << "observed_sites=" << list(sites()) << '\n'
      << "or_fraction=" << csv::number(or_fraction_target) << '\n'
      << "mu=" << (mu ? csv::number(*mu) : std::string("auto")) << '\n'
      << "limit_side=" << (limit_side == obs::LimitSide::Upper ? "upper" : "lower") << '\n'
      << "alpha=" << csv::number(alpha) << '\n'
      << "steps=" << total_steps() << '\n'
      << "seeds=" << list(seeds) << '\n'
      << "sigma_obs=" << csv::number(sigma_obs) << '\n'
      << "sigma_or_mode="
      << (sigma_or_mode == obs::SigmaOrMode::ConditionalMean ? "conditional" : "unnormalized") << '\n'
      << "pdenkf_mode=" << (pdenkf_mode == filters::PdenkfMode::Joint ? "joint" : "serial") << '\n'
      << "init_perturbation=" << csv::number(init_perturbation) << '\n'
      << "init_perturbation_is_std=" << (init_perturbation_is_std ? "true" : "false") << '\n'
      << "truth_forcing=" << csv::number(truth_forcing) << '\n'
      << "forecast_forcing=" << csv::number(forecast_forcing) << '\n'
      << "lsst_coordinate="
      << (lsst_coordinate == models::GridCoordinate::CellIndex ? "index" : "meters") << '\n'
      << "lsst_source_noise_std=" << csv::number(lsst_source_noise_std) << '\n'
      << "lsst_velocity_noise_rel=" << csv::number(lsst_velocity_noise_rel) << '\n'
      << "climatology_steps=" << effective_climatology_steps() << '\n'
      << "climatology_file=" << climatology_file << '\n'
      << "divergence_factor=" << csv::number(divergence_factor) << '\n'
      << "moving_average_window=" << moving_average_window << '\n';
  return out.str();
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace enkfsq::harness
