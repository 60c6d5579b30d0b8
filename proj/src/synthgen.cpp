// SPDX-License-Identifier: Apache-2.0
#include "asgn/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "asgn/json_util.hpp"

namespace asgn {

using nlohmann::json;

namespace {

constexpr NodeId kObsPerStepStride = 1'000'000;
constexpr std::uint64_t kInitStream = 0x1A17;
constexpr std::uint64_t kObsStream = 0x0B5000;
constexpr std::uint64_t kStationStream = 0x57A7;
constexpr std::uint64_t kForcingStream = 0xF0C1;

int wrap_index(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

/// Periodic bilinear sample of one variable plane at fractional (x, y).
double bilinear(const double* plane, int nx, int ny, int v, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  const int x0 = wrap_index(static_cast<int>(fx), nx), x1 = wrap_index(x0 + 1, nx);
  const int y0 = wrap_index(static_cast<int>(fy), ny), y1 = wrap_index(y0 + 1, ny);
  auto at = [&](int ix, int iy) {
    return plane[(static_cast<std::size_t>(ix) * ny + iy) * kNumVariables + v];
  };
  return (1.0 - ax) * (1.0 - ay) * at(x0, y0) + ax * (1.0 - ay) * at(x1, y0) +
         (1.0 - ax) * ay * at(x0, y1) + ax * ay * at(x1, y1);
}

double velocity_x_at(const SimConfig& cfg, int t, double iy) {
  const double w = 2.0 * std::numbers::pi * t / cfg.velocity_period;
  return cfg.velocity_x + cfg.velocity_amp * std::sin(w) +
         cfg.velocity_meander * std::sin(2.0 * std::numbers::pi * iy / cfg.grid_ny + w);
}

double velocity_y_at(const SimConfig& cfg, int t, double ix) {
  const double w = 2.0 * std::numbers::pi * t / cfg.velocity_period;
  return cfg.velocity_y + cfg.velocity_amp * std::cos(w) +
         cfg.velocity_meander * std::sin(2.0 * std::numbers::pi * ix / cfg.grid_nx - w);
}

/// Adds `amp` times `count` random unit-variance Fourier modes (wavenumbers
/// in [-3, 3]^2 \ {0}) of one variable to `field`.
void add_random_modes(std::vector<double>& field, int nx, int ny, int v, int count, double amp,
                      NoiseSource& rng) {
  const double a = amp * std::sqrt(2.0 / static_cast<double>(count));
  for (int m = 0; m < count; ++m) {
    int kx = 0, ky = 0;
    while (kx == 0 && ky == 0) {
      kx = static_cast<int>(std::floor(rng.uniform() * 7.0)) - 3;
      ky = static_cast<int>(std::floor(rng.uniform() * 7.0)) - 3;
    }
    const double c = a * rng.normal();
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    for (int ix = 0; ix < nx; ++ix) {
      for (int iy = 0; iy < ny; ++iy) {
        const double arg = 2.0 * std::numbers::pi *
                               (static_cast<double>(kx) * ix / nx + static_cast<double>(ky) * iy / ny) +
                           phase;
        field[(static_cast<std::size_t>(ix) * ny + iy) * kNumVariables + v] += c * std::cos(arg);
      }
    }
  }
}

bool inside_domain(const SimConfig& cfg, const LatLon& p) {
  return p.lat_deg >= cfg.lat_min && p.lat_deg < cfg.lat_max && p.lon_deg >= cfg.lon_min &&
         p.lon_deg < cfg.lon_max;
}

double to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

std::vector<PlatformSpec> default_platforms() {
  std::vector<PlatformSpec> p(6);
  p[0] = {"aircraft", Motion::kSweeping, 24, {0, 1, 2}, 0.05, 121.0, 0.9, 1.6, 1.0};
  p[1] = {"sonde", Motion::kSweeping, 16, {0, 1, 2, 3}, 0.03, 124.0, -0.6, 2.4, 1.0};
  p[2] = {"amv", Motion::kSweeping, 28, {0, 1}, 0.20, 126.0, 1.3, 1.2, 1.0};
  p[3] = {"mw_sounder", Motion::kSweeping, 28, {2, 3}, 0.10, 120.5, 1.7, 1.4, 1.0};
  p[4] = {"ir_sounder", Motion::kSweeping, 28, {2}, 0.30, 127.0, -1.1, 1.4, 1.0};
  p[5] = {"gnss", Motion::kSweeping, 20, {3}, 0.40, 123.0, 2.3, 2.0, 1.0};
  return p;
}

void validate(const SimConfig& cfg) {
  std::vector<std::string> bad;
  if (cfg.grid_nx <= 0) bad.push_back("grid_nx");
  if (cfg.grid_ny <= 0) bad.push_back("grid_ny");
  if (cfg.steps <= 0) bad.push_back("steps");
  if (!(cfg.lat_max > cfg.lat_min) || cfg.lat_min < -90.0 || cfg.lat_max > 90.0) {
    bad.push_back("lat_min/lat_max");
  }
  if (!(cfg.lon_max > cfg.lon_min) || cfg.lon_max - cfg.lon_min > 360.0) {
    bad.push_back("lon_min/lon_max");
  }
  if (!(cfg.dt_hours > 0.0)) bad.push_back("dt_hours");
  if (!(cfg.diffusion >= 0.0)) bad.push_back("diffusion");
  if (!(cfg.velocity_period > 0.0)) bad.push_back("velocity_period");
  if (!std::isfinite(cfg.velocity_meander)) bad.push_back("velocity_meander");
  if (cfg.init_modes <= 0) bad.push_back("init_modes");
  if (!(cfg.forcing_amp >= 0.0)) bad.push_back("forcing_amp");
  if (!(cfg.forcing_memory >= 0.0 && cfg.forcing_memory < 1.0)) bad.push_back("forcing_memory");
  if (cfg.forcing_modes <= 0) bad.push_back("forcing_modes");
  for (std::size_t i = 0; i < cfg.platforms.size(); ++i) {
    const PlatformSpec& p = cfg.platforms[i];
    const std::string at = "platforms[" + std::to_string(i) + "]";
    if (p.count <= 0) bad.push_back(at + ".count");
    if (!(p.noise_sigma >= 0.0)) bad.push_back(at + ".noise_sigma");
    if (p.variables.empty()) bad.push_back(at + ".variables");
    for (int v : p.variables) {
      if (v < 0 || v >= kNumVariables) bad.push_back(at + ".variables");
    }
    if (p.report_prob < 0.0 || p.report_prob > 1.0) bad.push_back(at + ".report_prob");
  }
  if (!bad.empty()) {
    std::string msg = "invalid SimConfig:";
    for (const auto& b : bad) msg += " " + b;
    throw ConfigError(msg);
  }
  if (cfg.diffusion_number() > 0.5) {
    std::ostringstream os;
    os << "diffusion number " << cfg.diffusion_number()
       << " exceeds 0.5 (diffusion=" << cfg.diffusion << ", dt=1 step, dx=dy=1 cell)";
    throw ConfigError(os.str());
  }
}

std::vector<double> initial_state(const SimConfig& cfg) {
  SeededNoise rng(derive_seed(cfg.seed, kInitStream));
  const int nx = cfg.grid_nx, ny = cfg.grid_ny;
  std::vector<double> state(static_cast<std::size_t>(nx) * ny * kNumVariables, 0.0);
  const double amp = 1.0 / std::sqrt(static_cast<double>(cfg.init_modes));
  for (int v = 0; v < kNumVariables; ++v) {
    for (int m = 0; m < cfg.init_modes; ++m) {
      int kx = 0, ky = 0;
      while (kx == 0 && ky == 0) {
        kx = static_cast<int>(std::floor(rng.uniform() * 7.0)) - 3;
        ky = static_cast<int>(std::floor(rng.uniform() * 7.0)) - 3;
      }
      const double a = amp * rng.normal();
      const double phase = 2.0 * std::numbers::pi * rng.uniform();
      for (int ix = 0; ix < nx; ++ix) {
        for (int iy = 0; iy < ny; ++iy) {
          const double arg =
              2.0 * std::numbers::pi * (static_cast<double>(kx) * ix / nx +
                                        static_cast<double>(ky) * iy / ny) +
              phase;
          state[(static_cast<std::size_t>(ix) * ny + iy) * kNumVariables + v] +=
              a * std::cos(arg);
        }
      }
    }
  }
  return state;
}

FieldSeries simulate_field(const SimConfig& cfg) { return simulate_field(cfg, initial_state(cfg)); }

FieldSeries simulate_field(const SimConfig& cfg, const std::vector<double>& init) {
  validate(cfg);
  const int nx = cfg.grid_nx, ny = cfg.grid_ny;
  const std::size_t plane = static_cast<std::size_t>(nx) * ny * kNumVariables;
  if (init.size() != plane) throw ConfigError("simulate_field: initial state size mismatch");

  FieldSeries f;
  f.steps = cfg.steps;
  f.nx = nx;
  f.ny = ny;
  f.data.resize(plane * static_cast<std::size_t>(cfg.steps));
  std::copy(init.begin(), init.end(), f.data.begin());

  // Bilinear semi-Lagrangian transport conserves the mean only for uniform
  // flow; with a meander the mean is restored after every step.
  const bool fix_mean = cfg.velocity_meander != 0.0;
  std::array<double, kNumVariables> target_mean{};
  for (std::size_t i = 0; i < plane; ++i) target_mean[i % kNumVariables] += init[i];
  for (double& m : target_mean) m /= static_cast<double>(nx) * ny;

  SeededNoise forcing_rng(derive_seed(cfg.seed, kForcingStream));
  std::vector<double> forcing(plane, 0.0);
  const double rho = cfg.forcing_memory;
  const double innovation = cfg.forcing_amp * std::sqrt(1.0 - rho * rho);

  std::vector<double> prev(init), advected(plane), next(plane);
  for (int t = 1; t < cfg.steps; ++t) {
    // Velocity of the interval (t-1, t], evaluated at the arrival point.
    for (int ix = 0; ix < nx; ++ix) {
      for (int iy = 0; iy < ny; ++iy) {
        const double u = velocity_x_at(cfg, t - 1, iy), w = velocity_y_at(cfg, t - 1, ix);
        for (int v = 0; v < kNumVariables; ++v) {
          advected[(static_cast<std::size_t>(ix) * ny + iy) * kNumVariables + v] =
              bilinear(prev.data(), nx, ny, v, ix - u, iy - w);
        }
      }
    }
    const double d = cfg.diffusion;
    for (int ix = 0; ix < nx; ++ix) {
      for (int iy = 0; iy < ny; ++iy) {
        for (int v = 0; v < kNumVariables; ++v) {
          auto at = [&](int x, int y) {
            return advected[(static_cast<std::size_t>(wrap_index(x, nx)) * ny +
                             wrap_index(y, ny)) *
                                kNumVariables +
                            v];
          };
          const double c = at(ix, iy);
          next[(static_cast<std::size_t>(ix) * ny + iy) * kNumVariables + v] =
              c + d * (at(ix + 1, iy) + at(ix - 1, iy) + at(ix, iy + 1) + at(ix, iy - 1) -
                       4.0 * c);
        }
      }
    }
    if (cfg.forcing_amp > 0.0) {
      for (double& x : forcing) x *= rho;
      for (int v = 0; v < kNumVariables; ++v) {
        add_random_modes(forcing, nx, ny, v, cfg.forcing_modes, innovation, forcing_rng);
      }
      for (std::size_t i = 0; i < plane; ++i) next[i] += forcing[i];
    }
    if (fix_mean || cfg.forcing_amp > 0.0) {
      std::array<double, kNumVariables> mean{};
      for (std::size_t i = 0; i < plane; ++i) mean[i % kNumVariables] += next[i];
      for (std::size_t i = 0; i < plane; ++i) {
        next[i] += target_mean[i % kNumVariables] -
                   mean[i % kNumVariables] / (static_cast<double>(nx) * ny);
      }
    }
    std::copy(next.begin(), next.end(), f.data.begin() + static_cast<std::ptrdiff_t>(plane * t));
    std::swap(prev, next);
  }
  return f;
}

LatLon grid_location(const SimConfig& cfg, int ix, int iy) {
  return LatLon::normalized(cfg.lat_min + iy * cfg.dlat(), cfg.lon_min + ix * cfg.dlon());
}

bool interpolate(const FieldSeries& f, const SimConfig& cfg, int t, const LatLon& loc,
                 std::array<double, kNumVariables>& out) {
  if (!inside_domain(cfg, loc)) return false;
  const double x = (loc.lon_deg - cfg.lon_min) / cfg.dlon();
  const double y = (loc.lat_deg - cfg.lat_min) / cfg.dlat();
  const std::size_t plane = static_cast<std::size_t>(f.nx) * f.ny * kNumVariables;
  const double* slice = f.data.data() + plane * static_cast<std::size_t>(t);
  for (int v = 0; v < kNumVariables; ++v) out[v] = bilinear(slice, f.nx, f.ny, v, x, y);
  return true;
}

double footprint_centroid_lon(const PlatformSpec& p, const SimConfig& cfg, int t) {
  const double width = cfg.lon_max - cfg.lon_min;
  double x = std::fmod(p.start_lon + p.speed_deg * t - cfg.lon_min, width);
  if (x < 0.0) x += width;
  return cfg.lon_min + x;
}

std::vector<ObsNode> sample_observations(const FieldSeries& field, const SimConfig& cfg, int t,
                                         NoiseSource& rng) {
  if (t < 0 || t >= field.steps) throw std::out_of_range("sample_observations: step out of range");
  std::vector<ObsNode> out;
  NodeId next_id = kObsIdBase + static_cast<NodeId>(t) * kObsPerStepStride;
  const double lat_span = cfg.lat_max - cfg.lat_min;

  for (std::size_t pi = 0; pi < cfg.platforms.size(); ++pi) {
    const PlatformSpec& p = cfg.platforms[pi];
    // Stationary sites are fixed for the whole run.
    SeededNoise sites(derive_seed(cfg.seed, kStationStream + pi));
    for (int k = 0; k < p.count; ++k) {
      double lat = 0.0, lon = 0.0;
      bool reports = true;
      if (p.motion == Motion::kSweeping) {
        lat = cfg.lat_min + lat_span * (k + rng.uniform()) / p.count;
        lon = footprint_centroid_lon(p, cfg, t) + p.swath_deg * (rng.uniform() - 0.5);
      } else {
        lat = cfg.lat_min + lat_span * sites.uniform();
        lon = cfg.lon_min + (cfg.lon_max - cfg.lon_min) * sites.uniform();
        reports = rng.uniform() < p.report_prob;
      }
      std::array<double, kNumVariables> truth{};
      std::array<double, kNumVariables> noise{};
      for (int v : p.variables) noise[v] = rng.normal();
      if (!reports || lat < -90.0 || lat > 90.0) continue;
      const LatLon loc = LatLon::normalized(lat, lon);
      if (!interpolate(field, cfg, t, loc, truth)) continue;  // footprint left the domain

      ObsNode o;
      o.id = next_id++;
      o.loc = loc;
      o.platform = static_cast<int>(pi);
      o.features.assign(kNumVariables, 0.0);
      o.mask.assign(kNumVariables, 0);
      for (int v : p.variables) {
        o.features[v] = cfg.var_offset[v] +
                        cfg.var_scale[v] * (truth[v] + p.noise_sigma * noise[v]);
        o.mask[v] = 1;
      }
      out.push_back(std::move(o));
    }
  }
  return out;
}

SplitBounds chronological_split(int steps, int train_parts, int val_parts, int test_parts) {
  const int total = train_parts + val_parts + test_parts;
  SplitBounds s;
  s.steps = steps;
  s.train_end = steps * train_parts / total;
  s.val_end = steps * (train_parts + val_parts) / total;
  return s;
}

std::size_t Dataset::observation_count() const {
  std::size_t n = 0;
  for (const auto& o : obs) n += o.size();
  return n;
}

Dataset generate_dataset(const SimConfig& cfg) {
  validate(cfg);
  const FieldSeries unit = simulate_field(cfg);

  Dataset ds;
  ds.config = cfg;
  ds.split = chronological_split(cfg.steps);
  for (int ix = 0; ix < cfg.grid_nx; ++ix) {
    for (int iy = 0; iy < cfg.grid_ny; ++iy) ds.grid.push_back(grid_location(cfg, ix, iy));
  }

  ds.states = unit;
  for (std::size_t i = 0; i < ds.states.data.size(); ++i) {
    const int v = static_cast<int>(i % kNumVariables);
    ds.states.data[i] = to_f32(cfg.var_offset[v] + cfg.var_scale[v] * unit.data[i]);
  }

  ds.obs.resize(static_cast<std::size_t>(cfg.steps));
  for (int t = 0; t < cfg.steps; ++t) {
    SeededNoise rng(derive_seed(cfg.seed, kObsStream + static_cast<std::uint64_t>(t)));
    ds.obs[static_cast<std::size_t>(t)] = sample_observations(unit, cfg, t, rng);
  }

  // Z-score statistics from the training split only.
  const int train_steps = std::max(ds.split.train_end, 1);
  for (int v = 0; v < kNumVariables; ++v) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int t = 0; t < std::min(train_steps, ds.states.steps); ++t) {
      for (int c = 0; c < cfg.cells(); ++c) {
        sum += ds.states.cell_value(t, static_cast<std::size_t>(c), v);
        ++n;
      }
    }
    const double mu = n ? sum / static_cast<double>(n) : 0.0;
    double ss = 0.0;
    for (int t = 0; t < std::min(train_steps, ds.states.steps); ++t) {
      for (int c = 0; c < cfg.cells(); ++c) {
        const double d = ds.states.cell_value(t, static_cast<std::size_t>(c), v) - mu;
        ss += d * d;
      }
    }
    const double sd = n ? std::sqrt(ss / static_cast<double>(n)) : 1.0;
    ds.norm.mean[v] = mu;
    ds.norm.stddev[v] = sd > 0.0 ? sd : 1.0;
  }
  return ds;
}

GraphSnapshot make_snapshot(const Dataset& ds, int t) {
  if (t < 0 || t >= ds.steps()) throw std::out_of_range("make_snapshot: step out of range");
  GraphSnapshot s;
  s.t = t;
  s.grid.reserve(ds.grid.size());
  for (std::size_t c = 0; c < ds.grid.size(); ++c) {
    GridNode g;
    g.id = static_cast<NodeId>(c);
    g.loc = ds.grid[c];
    g.features.resize(kNumVariables);
    for (int v = 0; v < kNumVariables; ++v) {
      g.features[v] = ds.norm.to_z(v, ds.states.cell_value(t, c, v));
    }
    s.grid.push_back(std::move(g));
  }
  for (const ObsNode& raw : ds.obs[static_cast<std::size_t>(t)]) {
    ObsNode o = raw;
    for (int v = 0; v < kNumVariables; ++v) {
      o.features[v] = o.mask[v] ? ds.norm.to_z(v, raw.features[v]) : 0.0;
    }
    s.obs.push_back(std::move(o));
  }
  return s;
}

// ---- serialization ----------------------------------------------------------------

DatasetParseError::DatasetParseError(const std::string& file, std::size_t record,
                                     const std::string& what)
    : std::runtime_error(file + ": record " + std::to_string(record) + ": " + what),
      file_(file),
      record_(record) {}

json to_json(const SimConfig& cfg) {
  json platforms = json::array();
  for (const PlatformSpec& p : cfg.platforms) {
    platforms.push_back({{"name", p.name},
                         {"motion", p.motion == Motion::kSweeping ? "sweeping" : "stationary"},
                         {"count", p.count},
                         {"variables", p.variables},
                         {"noise_sigma", p.noise_sigma},
                         {"start_lon", p.start_lon},
                         {"speed_deg", p.speed_deg},
                         {"swath_deg", p.swath_deg},
                         {"report_prob", p.report_prob}});
  }
  return {{"grid_nx", cfg.grid_nx},
          {"grid_ny", cfg.grid_ny},
          {"lat_min", cfg.lat_min},
          {"lat_max", cfg.lat_max},
          {"lon_min", cfg.lon_min},
          {"lon_max", cfg.lon_max},
          {"dt_hours", cfg.dt_hours},
          {"steps", cfg.steps},
          {"velocity_x", cfg.velocity_x},
          {"velocity_y", cfg.velocity_y},
          {"velocity_amp", cfg.velocity_amp},
          {"velocity_period", cfg.velocity_period},
          {"diffusion", cfg.diffusion},
          {"init_modes", cfg.init_modes},
          {"velocity_meander", cfg.velocity_meander},
          {"forcing_amp", cfg.forcing_amp},
          {"forcing_memory", cfg.forcing_memory},
          {"forcing_modes", cfg.forcing_modes},
          {"var_offset", cfg.var_offset},
          {"var_scale", cfg.var_scale},
          {"platforms", platforms},
          {"seed", cfg.seed}};
}

SimConfig sim_config_from_json(const json& j, const SimConfig& base) {
  const std::string ctx = "sim";
  reject_unknown_keys(j,
                      {"grid_nx", "grid_ny", "lat_min", "lat_max", "lon_min", "lon_max",
                       "dt_hours", "steps", "velocity_x", "velocity_y", "velocity_amp",
                       "velocity_period", "velocity_meander", "diffusion", "init_modes",
                       "forcing_amp", "forcing_memory", "forcing_modes", "var_offset", "var_scale",
                       "platforms", "seed"},
                      ctx);
  SimConfig cfg = base;
  read_key(j, "grid_nx", cfg.grid_nx, ctx);
  read_key(j, "grid_ny", cfg.grid_ny, ctx);
  read_key(j, "lat_min", cfg.lat_min, ctx);
  read_key(j, "lat_max", cfg.lat_max, ctx);
  read_key(j, "lon_min", cfg.lon_min, ctx);
  read_key(j, "lon_max", cfg.lon_max, ctx);
  read_key(j, "dt_hours", cfg.dt_hours, ctx);
  read_key(j, "steps", cfg.steps, ctx);
  read_key(j, "velocity_x", cfg.velocity_x, ctx);
  read_key(j, "velocity_y", cfg.velocity_y, ctx);
  read_key(j, "velocity_amp", cfg.velocity_amp, ctx);
  read_key(j, "velocity_period", cfg.velocity_period, ctx);
  read_key(j, "diffusion", cfg.diffusion, ctx);
  read_key(j, "init_modes", cfg.init_modes, ctx);
  read_key(j, "velocity_meander", cfg.velocity_meander, ctx);
  read_key(j, "forcing_amp", cfg.forcing_amp, ctx);
  read_key(j, "forcing_memory", cfg.forcing_memory, ctx);
  read_key(j, "forcing_modes", cfg.forcing_modes, ctx);
  read_key(j, "var_offset", cfg.var_offset, ctx);
  read_key(j, "var_scale", cfg.var_scale, ctx);
  read_key(j, "seed", cfg.seed, ctx);
  if (const auto it = j.find("platforms"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("sim.platforms: expected an array");
    cfg.platforms.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& pj = (*it)[i];
      const std::string pctx = "sim.platforms[" + std::to_string(i) + "]";
      reject_unknown_keys(pj,
                          {"name", "motion", "count", "variables", "noise_sigma", "start_lon",
                           "speed_deg", "swath_deg", "report_prob"},
                          pctx);
      PlatformSpec p;
      read_key(pj, "name", p.name, pctx);
      std::string motion = "sweeping";
      read_key(pj, "motion", motion, pctx);
      if (motion == "sweeping") {
        p.motion = Motion::kSweeping;
      } else if (motion == "stationary") {
        p.motion = Motion::kStationary;
      } else {
        throw ConfigError(pctx + ".motion: expected 'sweeping' or 'stationary'");
      }
      read_key(pj, "count", p.count, pctx);
      read_key(pj, "variables", p.variables, pctx);
      read_key(pj, "noise_sigma", p.noise_sigma, pctx);
      read_key(pj, "start_lon", p.start_lon, pctx);
      read_key(pj, "speed_deg", p.speed_deg, pctx);
      read_key(pj, "swath_deg", p.swath_deg, pctx);
      read_key(pj, "report_prob", p.report_prob, pctx);
      cfg.platforms.push_back(std::move(p));
    }
  }
  return cfg;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "states.bin is little-endian; add byte swapping for big-endian hosts");

json norm_json(const Normalization& n) { return {{"mean", n.mean}, {"stddev", n.stddev}}; }

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    json meta = {{"format", "asgn-dataset"},
                 {"version", 1},
                 {"sim", to_json(ds.config)},
                 {"normalization", norm_json(ds.norm)},
                 {"split",
                  {{"train_end", ds.split.train_end},
                   {"val_end", ds.split.val_end},
                   {"steps", ds.split.steps}}},
                 {"shape",
                  {{"steps", ds.states.steps},
                   {"nx", ds.states.nx},
                   {"ny", ds.states.ny},
                   {"variables", kNumVariables}}}};
    std::ofstream f(dir / "meta.json");
    f << meta.dump(2) << '\n';
  }
  {
    std::ofstream f(dir / "grid.csv");
    f << "id,lat,lon\n";
    for (std::size_t c = 0; c < ds.grid.size(); ++c) {
      f << c << ',' << fmt_double(ds.grid[c].lat_deg) << ',' << fmt_double(ds.grid[c].lon_deg)
        << '\n';
    }
  }
  {
    std::ofstream f(dir / "states.bin", std::ios::binary);
    std::vector<float> buf(ds.states.data.begin(), ds.states.data.end());
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  {
    std::ofstream f(dir / "obs.jsonl");
    for (std::size_t t = 0; t < ds.obs.size(); ++t) {
      for (const ObsNode& o : ds.obs[t]) {
        json r = {{"t", t},
                  {"id", o.id},
                  {"lat", o.loc.lat_deg},
                  {"lon", o.loc.lon_deg},
                  {"platform", o.platform},
                  {"values", o.features},
                  {"mask", o.mask}};
        f << r.dump() << '\n';
      }
    }
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  json meta;
  {
    std::ifstream f(dir / "meta.json");
    if (!f) throw DatasetParseError((dir / "meta.json").string(), 0, "cannot open");
    try {
      f >> meta;
      reject_unknown_keys(meta, {"format", "version", "sim", "normalization", "split", "shape"},
                          "meta.json");
      if (meta.at("format") != "asgn-dataset" || meta.at("version") != 1) {
        throw DatasetParseError((dir / "meta.json").string(), 0, "unsupported format/version");
      }
      ds.config = sim_config_from_json(meta.at("sim"));
      ds.norm.mean = meta.at("normalization").at("mean").get<std::array<double, 4>>();
      ds.norm.stddev = meta.at("normalization").at("stddev").get<std::array<double, 4>>();
      ds.split.train_end = meta.at("split").at("train_end").get<int>();
      ds.split.val_end = meta.at("split").at("val_end").get<int>();
      ds.split.steps = meta.at("split").at("steps").get<int>();
      ds.states.steps = meta.at("shape").at("steps").get<int>();
      ds.states.nx = meta.at("shape").at("nx").get<int>();
      ds.states.ny = meta.at("shape").at("ny").get<int>();
    } catch (const json::exception& e) {
      throw DatasetParseError((dir / "meta.json").string(), 0, e.what());
    } catch (const ConfigError& e) {
      throw DatasetParseError((dir / "meta.json").string(), 0, e.what());
    }
  }
  {
    const std::string name = (dir / "grid.csv").string();
    std::ifstream f(dir / "grid.csv");
    if (!f) throw DatasetParseError(name, 0, "cannot open");
    std::string line;
    if (!std::getline(f, line) || line != "id,lat,lon") {
      throw DatasetParseError(name, 0, "missing header 'id,lat,lon'");
    }
    std::size_t record = 0;
    while (std::getline(f, line)) {
      ++record;
      std::istringstream ls(line);
      std::string id, lat, lon, extra;
      if (!std::getline(ls, id, ',') || !std::getline(ls, lat, ',') || !std::getline(ls, lon) ||
          lon.empty()) {
        throw DatasetParseError(name, record, "expected 3 fields");
      }
      try {
        if (std::stoull(id) != record - 1) throw DatasetParseError(name, record, "id out of order");
        ds.grid.push_back(LatLon{std::stod(lat), std::stod(lon)});
      } catch (const std::logic_error&) {
        throw DatasetParseError(name, record, "non-numeric field");
      }
    }
  }
  {
    const std::string name = (dir / "states.bin").string();
    std::ifstream f(dir / "states.bin", std::ios::binary);
    if (!f) throw DatasetParseError(name, 0, "cannot open");
    const std::size_t per_step =
        static_cast<std::size_t>(ds.states.nx) * ds.states.ny * kNumVariables;
    std::vector<float> buf(per_step);
    ds.states.data.reserve(per_step * static_cast<std::size_t>(ds.states.steps));
    for (int t = 0; t < ds.states.steps; ++t) {
      f.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(per_step * sizeof(float)));
      if (static_cast<std::size_t>(f.gcount()) != per_step * sizeof(float)) {
        throw DatasetParseError(name, static_cast<std::size_t>(t), "truncated step");
      }
      ds.states.data.insert(ds.states.data.end(), buf.begin(), buf.end());
    }
    if (f.peek() != std::char_traits<char>::eof()) {
      throw DatasetParseError(name, static_cast<std::size_t>(ds.states.steps),
                              "trailing bytes after last step");
    }
  }
  {
    const std::string name = (dir / "obs.jsonl").string();
    std::ifstream f(dir / "obs.jsonl");
    if (!f) throw DatasetParseError(name, 0, "cannot open");
    ds.obs.resize(static_cast<std::size_t>(ds.states.steps));
    std::string line;
    std::size_t record = 0;
    while (std::getline(f, line)) {
      ++record;
      if (line.empty()) continue;
      try {
        const json r = json::parse(line);
        reject_unknown_keys(r, {"t", "id", "lat", "lon", "platform", "values", "mask"}, "obs");
        const int t = r.at("t").get<int>();
        if (t < 0 || t >= ds.states.steps) throw DatasetParseError(name, record, "t out of range");
        ObsNode o;
        o.id = r.at("id").get<NodeId>();
        o.loc = LatLon{r.at("lat").get<double>(), r.at("lon").get<double>()};
        o.platform = r.at("platform").get<int>();
        o.features = r.at("values").get<std::vector<double>>();
        o.mask = r.at("mask").get<std::vector<std::uint8_t>>();
        if (o.features.size() != o.mask.size()) {
          throw DatasetParseError(name, record, "values/mask length mismatch");
        }
        ds.obs[static_cast<std::size_t>(t)].push_back(std::move(o));
      } catch (const json::exception& e) {
        throw DatasetParseError(name, record, e.what());
      } catch (const ConfigError& e) {
        throw DatasetParseError(name, record, e.what());
      }
    }
  }
  return ds;
}

}  // namespace asgn
