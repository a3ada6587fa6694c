#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geostat/io.hpp"

namespace geostat::experiments {

// Runs `count` independent jobs on up to `threads` worker threads. Job i
// must only touch its own slot of any shared output. Exceptions are
// rethrown after all jobs finish (lowest index first).
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& job);

struct ExperimentOptions {
  std::string tag;              // fig2 | table1 | fig5 | table2
  std::optional<double> scale;  // default: fig2 1, table1 0.25, fig5 0.2, table2 0.14
  std::uint64_t seed = 1;
  long iterations = 5000;
  long burn_in = 2500;
  long thin = 1;
  unsigned threads = 1;
  std::vector<std::size_t> knots{5, 25, 50, 100, 175};  // fig2 knot counts
  std::vector<std::size_t> knot_grid{49};               // table1 knot counts (perfect squares)
  std::vector<double> ranges{0.2, 0.5, 0.8};            // fig5 effective ranges
  std::size_t neighbors = 10;
  bool fig2_fullgp = true;   // add a full-GP reference fit to fig2
  bool kl_average = false;   // table2: also average KL over posterior draws
  std::size_t kl_draws = 50;
  bool verbose = false;      // progress and timings on standard error

  double effective_scale() const;
};

struct ExperimentReport {
  io::Json report;
  // Relative path -> file content (plot-ready tables and per-run samples).
  std::vector<std::pair<std::string, std::string>> files;
  bool failed = false;  // some configuration raised; its entry holds the error
};

ExperimentReport run_experiment(const ExperimentOptions& options);

// report.json plus every entry of `files` under `dir`.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace geostat::experiments
