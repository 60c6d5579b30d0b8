// SPDX-License-Identifier: Apache-2.0
//
// Synthetic meteorology benchmark: passive tracers advected and diffused on a
// periodic lat/lon grid, sampled by moving observation platforms.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "asgn/datamodel.hpp"
#include "asgn/noise.hpp"

namespace asgn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Motion { kStationary, kSweeping };

struct PlatformSpec {
  std::string name;
  Motion motion = Motion::kSweeping;
  int count = 30;                 // footprint points (sweeping) or stations
  std::vector<int> variables;     // indices into U, V, T, Q
  double noise_sigma = 0.05;      // in units of each variable's amplitude scale
  double start_lon = 0.0;         // sweeping: track longitude at t = 0
  double speed_deg = 1.0;         // sweeping: degrees of longitude per step
  double swath_deg = 1.0;         // sweeping: cross-track width
  double report_prob = 1.0;       // stationary: chance a station reports
  bool operator==(const PlatformSpec&) const = default;
};

/// Six sweeping platforms with mixed variable subsets and noise levels.
std::vector<PlatformSpec> default_platforms();

struct SimConfig {
  int grid_nx = 20;
  int grid_ny = 20;
  double lat_min = 30.0, lat_max = 38.0;
  double lon_min = 120.0, lon_max = 128.0;
  double dt_hours = 6.0;
  int steps = 120;
  // Advection in grid cells per step: a uniform drift whose components
  // oscillate with velocity_amp over velocity_period steps, plus a
  // non-divergent meander u += m sin(2 pi y / ny + w t), v += m sin(2 pi x / nx - w t)
  // with m = velocity_meander and the same period.
  double velocity_x = 0.8;
  double velocity_y = 0.4;
  double velocity_amp = 0.4;
  double velocity_period = 24.0;
  double velocity_meander = 0.5;
  double diffusion = 0.01;        // cells^2 per step
  int init_modes = 6;             // random Fourier modes per variable
  // Zero-mean stochastic forcing: an AR(1) field (memory in [0, 1)) whose
  // innovations are forcing_modes random Fourier modes per variable per step.
  // forcing_amp is the stationary standard deviation of the forcing field.
  double forcing_amp = 0.06;
  double forcing_memory = 0.8;
  int forcing_modes = 4;
  std::array<double, kNumVariables> var_offset{5.0, 0.0, 255.0, 0.002};
  std::array<double, kNumVariables> var_scale{5.0, 5.0, 4.0, 0.001};
  std::vector<PlatformSpec> platforms = default_platforms();
  std::uint64_t seed = 7;
  bool operator==(const SimConfig&) const = default;

  /// Explicit diffusion number D * (1/dx^2 + 1/dy^2) with dx = dy = 1 cell.
  double diffusion_number() const { return 2.0 * diffusion; }
  double dlon() const { return (lon_max - lon_min) / grid_nx; }
  double dlat() const { return (lat_max - lat_min) / grid_ny; }
  int cells() const { return grid_nx * grid_ny; }
};

/// Throws ConfigError naming the offending field(s).
void validate(const SimConfig& cfg);

/// Dense ground truth, indexed [step][ix][iy][variable].
struct FieldSeries {
  int steps = 0, nx = 0, ny = 0;
  std::vector<double> data;

  std::size_t cell(int ix, int iy) const { return static_cast<std::size_t>(ix) * ny + iy; }
  double& at(int t, int ix, int iy, int v) {
    return data[((static_cast<std::size_t>(t) * nx + ix) * ny + iy) * kNumVariables + v];
  }
  double at(int t, int ix, int iy, int v) const {
    return data[((static_cast<std::size_t>(t) * nx + ix) * ny + iy) * kNumVariables + v];
  }
  /// Value at (t, cell, v) with cell = ix * ny + iy.
  double cell_value(int t, std::size_t cell, int v) const {
    return data[(static_cast<std::size_t>(t) * nx * ny + cell) * kNumVariables + v];
  }
  bool operator==(const FieldSeries&) const = default;
};

/// Nondimensional field update: semi-Lagrangian advection then explicit
/// diffusion, periodic in both directions.
FieldSeries simulate_field(const SimConfig& cfg);
/// Same, from a caller-supplied initial state (size nx*ny*C).
FieldSeries simulate_field(const SimConfig& cfg, const std::vector<double>& init);
/// Smooth random initial state drawn from cfg.seed.
std::vector<double> initial_state(const SimConfig& cfg);

/// Periodic bilinear interpolation of one step at a geographic location.
/// Returns false if the location lies outside the domain box.
bool interpolate(const FieldSeries& f, const SimConfig& cfg, int t, const LatLon& loc,
                 std::array<double, kNumVariables>& out);

/// Track longitude of a sweeping platform at step t, wrapped into the domain.
double footprint_centroid_lon(const PlatformSpec& p, const SimConfig& cfg, int t);

/// Observations at step t in physical units; ids are unique per (t, index).
std::vector<ObsNode> sample_observations(const FieldSeries& field, const SimConfig& cfg, int t,
                                         NoiseSource& rng);

/// Location of grid cell (ix, iy).
LatLon grid_location(const SimConfig& cfg, int ix, int iy);

struct Normalization {
  std::array<double, kNumVariables> mean{};
  std::array<double, kNumVariables> stddev{1.0, 1.0, 1.0, 1.0};
  double to_z(int v, double x) const { return (x - mean[v]) / stddev[v]; }
  double from_z(int v, double z) const { return mean[v] + z * stddev[v]; }
  bool operator==(const Normalization&) const = default;
};

/// Chronological 6:2:2 partition of step indices.
struct SplitBounds {
  int train_end = 0;  // [0, train_end)
  int val_end = 0;    // [train_end, val_end); test is [val_end, steps)
  int steps = 0;
  bool operator==(const SplitBounds&) const = default;
};
SplitBounds chronological_split(int steps, int train_parts = 6, int val_parts = 2,
                                int test_parts = 2);

struct Dataset {
  SimConfig config;
  Normalization norm;
  SplitBounds split;
  std::vector<LatLon> grid;             // cell order (ix * ny + iy)
  FieldSeries states;                   // physical units, float32-exact
  std::vector<std::vector<ObsNode>> obs;  // per step, physical units
  bool operator==(const Dataset&) const = default;

  int steps() const { return states.steps; }
  std::size_t observation_count() const;
};

/// Simulates, samples observations and computes training-split statistics.
Dataset generate_dataset(const SimConfig& cfg);

/// Z-scored snapshot at step t (edges are left empty; see graphbuild).
GraphSnapshot make_snapshot(const Dataset& ds, int t);

/// `record` is the 1-based data line for text files, the step index for
/// states.bin and 0 for file-level problems.
class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(const std::string& file, std::size_t record, const std::string& what);
  const std::string& file() const { return file_; }
  std::size_t record() const { return record_; }

 private:
  std::string file_;
  std::size_t record_;
};

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

nlohmann::json to_json(const SimConfig& cfg);
/// Rejects unknown keys; missing keys keep `base` values.
SimConfig sim_config_from_json(const nlohmann::json& j, const SimConfig& base = {});

}  // namespace asgn
