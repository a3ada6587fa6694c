#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geostat/dataset.hpp"
#include "geostat/mcmc.hpp"
#include "geostat/pipeline.hpp"

namespace geostat::io {

using Json = nlohmann::ordered_json;

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
// Creates parent directories; writes bytes as given.
void write_file(const std::filesystem::path& path, const std::string& content);

// Header x1..xd, cov_1..cov_k, y. The intercept column of X is implicit: it is
// not written and is prepended on reading.
std::string dataset_csv(const Dataset& data);

// Locations, regressors and (if the file has a y column) outcomes.
struct Table {
  PointSet locations;
  Matrix x;
  std::optional<Vector> y;
};
Table parse_table_csv(const std::string& text);
Dataset parse_dataset_csv(const std::string& text);
Dataset read_dataset(const std::filesystem::path& path);

// Knot and reference files: a header row and d coordinate columns.
std::string points_csv(const PointSet& pts);
PointSet parse_points_csv(const std::string& text);

std::string samples_csv(const mcmc::PosteriorSamples& samples);
// Draws with sigma2, tau2, phi and beta filled in.
std::vector<ParameterDraw> parse_samples_csv(const std::string& text);

// Latent draws, one row per retained draw, columns w_0..w_{n-1}.
std::string latent_csv(const mcmc::PosteriorSamples& samples);
std::vector<Vector> parse_latent_csv(const std::string& text);

Json summary_json(const mcmc::PosteriorSamples& samples);
std::string chain_log_jsonl(const mcmc::PosteriorSamples& samples);

// Per-target mean, sd, q025, q975.
std::string predictions_csv(const Matrix& draws);

struct PriorOverrides {
  std::optional<InverseGamma> sigma2;
  std::optional<InverseGamma> tau2;
  std::optional<UniformPrior> phi;
  BetaPrior beta;
};

struct RunConfig {
  ModelSpec model;
  std::filesystem::path data;
  std::optional<std::filesystem::path> knots_file;
  std::optional<std::filesystem::path> reference_file;
  PriorOverrides priors;
  mcmc::ChainConfig chain;
  std::filesystem::path output = "out";
  bool parity_oracle = false;
};

// Parses a config document; relative paths resolve against `base_dir`.
// Unknown keys raise InvalidParams naming the offending key.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig read_config(const std::filesystem::path& path);

// Data, model spec with knots/reference loaded, and priors with defaults
// filled in from the data.
struct LoadedRun {
  Dataset data;
  ModelSpec model;
  PriorSpec priors;
};
LoadedRun load_run(const RunConfig& config);

}  // namespace geostat::io
