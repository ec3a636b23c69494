#pragma once

// Synthetic pack logs for demos and pipeline tests: one CSV per pack holding a
// day with one discharge and one charge at constant current, per-pack capacity
// fade, cell-level voltage scatter with optional deviant cells, and sensor
// temperatures that drift with load.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "bessom/calendar.hpp"
#include "bessom/error.hpp"

namespace bessom {

struct DeviantCell {
  int pack = 1;
  std::size_t cell = 0;  // 0-based
  double offset_V = 0.08;
};

struct SynthSpec {
  Date date{2025, 1, 15};
  int packs = 9;
  std::size_t cells = 396;
  std::size_t sensors = 8;
  double dt_s = 30.0;
  double current_A = 120.0;
  double operation_s = 6300.0;
  double q_nom_Ah = 300.0;
  /// SOH of pack j is soh_first - soh_step * (j - 1).
  double soh_first = 0.98;
  double soh_step = 0.01;
  double current_noise_A = 1.0;
  double soc_noise = 0.001;
  std::uint64_t seed = 7;
  std::vector<DeviantCell> deviants{{3, 16, 0.08}, {3, 250, 0.10}, {7, 101, 0.12}};
};

inline double synth_pack_soh(const SynthSpec& s, int pack) { return s.soh_first - s.soh_step * (pack - 1); }

/// Writes pack_01_<date>.csv ... into `dir` and returns the paths.
inline std::vector<std::filesystem::path> write_synthetic_day(const SynthSpec& spec, const std::filesystem::path& dir) {
  if (spec.packs < 1 || spec.cells < 2 || spec.sensors < 1) throw ValidationError("synthetic spec needs packs, cells, sensors");
  if (!(spec.dt_s > 0) || !(spec.operation_s > spec.dt_s)) throw ValidationError("synthetic spec timing is invalid");
  std::filesystem::create_directories(dir);

  const double t0 = static_cast<double>(spec.date.epoch_seconds()) + 8 * 3600.0;
  struct Phase {
    double duration_s;
    double current;
  };
  const std::vector<Phase> phases = {{1800.0, 0.0},
                                     {spec.operation_s, spec.current_A},
                                     {3600.0, 0.0},
                                     {spec.operation_s, -spec.current_A},
                                     {1800.0, 0.0}};

  std::vector<std::filesystem::path> paths;
  for (int p = 1; p <= spec.packs; ++p) {
    std::mt19937_64 rng(spec.seed * 1000003ULL + static_cast<std::uint64_t>(p));
    std::normal_distribution<double> unit(0.0, 1.0);
    const double capacity = synth_pack_soh(spec, p) * spec.q_nom_Ah;

    std::vector<double> cell_offset(spec.cells), cell_resistance(spec.cells);
    for (std::size_t c = 0; c < spec.cells; ++c) {
      cell_offset[c] = 0.002 * unit(rng);
      cell_resistance[c] = 0.0006 * (1.0 + 0.05 * unit(rng));
    }
    for (const auto& d : spec.deviants) {
      if (d.pack == p && d.cell < spec.cells) cell_offset[d.cell] += d.offset_V;
    }
    std::vector<double> sensor_offset(spec.sensors);
    for (auto& o : sensor_offset) o = 0.4 * unit(rng);

    char name[48];
    std::snprintf(name, sizeof name, "pack_%02d_%s.csv", p, spec.date.iso().c_str());
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "timestamp,current_A,soc";
    for (std::size_t c = 1; c <= spec.cells; ++c) {
      std::snprintf(name, sizeof name, ",V_cell_%03zu", c);
      out << name;
    }
    for (std::size_t s = 1; s <= spec.sensors; ++s) {
      std::snprintf(name, sizeof name, ",T_sens_%03zu", s);
      out << name;
    }
    out << "\n";

    double soc = 0.9, heat = 0.0, t = t0;
    char buf[64];
    for (const auto& ph : phases) {
      const auto steps = static_cast<std::size_t>(std::llround(ph.duration_s / spec.dt_s));
      for (std::size_t k = 0; k < steps; ++k) {
        const double i_a = ph.current == 0.0 ? 0.0 : ph.current + spec.current_noise_A * unit(rng);
        const double target = 4.0 * std::abs(ph.current) / std::max(spec.current_A, 1.0);
        heat += (target - heat) * (1.0 - std::exp(-spec.dt_s / 1800.0));
        out << format_iso_utc(static_cast<std::int64_t>(std::llround(t)));
        std::snprintf(buf, sizeof buf, ",%.3f,%.5f", i_a, std::clamp(soc + spec.soc_noise * unit(rng), 0.0, 1.0));
        out << buf;
        const double ocv = 3.22 + 0.16 * soc;
        for (std::size_t c = 0; c < spec.cells; ++c) {
          std::snprintf(buf, sizeof buf, ",%.5f", ocv + cell_offset[c] - cell_resistance[c] * i_a + 0.0005 * unit(rng));
          out << buf;
        }
        for (std::size_t s = 0; s < spec.sensors; ++s) {
          const double spread = 1.0 + 0.15 * static_cast<double>(s) / static_cast<double>(spec.sensors);
          std::snprintf(buf, sizeof buf, ",%.3f", 25.0 + sensor_offset[s] + heat * spread + 0.05 * unit(rng));
          out << buf;
        }
        out << "\n";
        soc = std::clamp(soc - i_a * spec.dt_s / 3600.0 / capacity, 0.0, 1.0);
        t += spec.dt_s;
      }
    }
    if (!out) throw Error("failed writing " + path.string());
    paths.push_back(path);
  }
  return paths;
}

}  // namespace bessom
