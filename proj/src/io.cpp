#include "geostat/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include "geostat/errors.hpp"
#include "geostat/metrics.hpp"

namespace geostat::io {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
    out.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
    start = nl + 1;
  }
  return out;
}

double parse_number(std::string_view cell, std::size_t line) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  const auto res = std::from_chars(cell.data(), end, v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != end)
    throw InputError("line " + std::to_string(line) + ": '" + std::string(cell) + "' is not a number");
  return v;
}

// Rows of numbers after the header, each with the header's width.
std::vector<Vector> parse_rows(const std::vector<std::string_view>& lines, std::size_t width) {
  std::vector<Vector> rows;
  rows.reserve(lines.size());
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto cells = split(lines[l]);
    if (cells.size() != width)
      throw LengthMismatch("line " + std::to_string(l + 1) + ": expected " + std::to_string(width) + " fields, got " +
                           std::to_string(cells.size()));
    Vector row(width);
    for (std::size_t c = 0; c < width; ++c) row[c] = parse_number(cells[c], l + 1);
    rows.push_back(std::move(row));
  }
  return rows;
}

bool numbered(std::string_view name, std::string_view prefix, std::size_t expected) {
  return name == std::string(prefix) + std::to_string(expected);
}

}  // namespace

std::string dataset_csv(const Dataset& data) {
  const std::size_t d = data.locations.dim();
  const std::size_t k = data.p() > 0 ? data.p() - 1 : 0;
  std::string out;
  for (std::size_t j = 0; j < d; ++j) out += "x" + std::to_string(j + 1) + ",";
  for (std::size_t j = 0; j < k; ++j) out += "cov_" + std::to_string(j + 1) + ",";
  out += "y\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (double c : data.locations[i]) out += format_double(c) + ",";
    for (std::size_t j = 0; j < k; ++j) out += format_double(data.x(i, j + 1)) + ",";
    out += format_double(data.y[i]) + "\n";
  }
  return out;
}

Table parse_table_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw InputError("empty CSV");
  const auto header = split(lines[0]);
  std::size_t d = 0;
  while (d < header.size() && numbered(header[d], "x", d + 1)) ++d;
  std::size_t k = 0;
  while (d + k < header.size() && numbered(header[d + k], "cov_", k + 1)) ++k;
  const bool has_y = d + k < header.size() && header[d + k] == "y";
  if (d == 0) throw InputError("CSV header must start with x1");
  if (d + k + (has_y ? 1 : 0) != header.size())
    throw InputError("unexpected column '" + std::string(header[d + k + (has_y ? 1 : 0)]) + "' in CSV header");

  const std::vector<Vector> rows = parse_rows(lines, header.size());
  Table t{PointSet(d), Matrix(rows.size(), k + 1, 1.0), std::nullopt};
  if (has_y) t.y = Vector(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.locations.push_back(std::span<const double>(rows[i].data(), d));
    for (std::size_t j = 0; j < k; ++j) t.x(i, j + 1) = rows[i][d + j];
    if (has_y) (*t.y)[i] = rows[i][d + k];
  }
  return t;
}

Dataset parse_dataset_csv(const std::string& text) {
  Table t = parse_table_csv(text);
  if (!t.y) throw InputError("dataset CSV has no y column");
  Dataset data{std::move(t.locations), std::move(t.x), std::move(*t.y)};
  data.validate();
  return data;
}

Dataset read_dataset(const std::filesystem::path& path) { return parse_dataset_csv(read_file(path)); }

std::string points_csv(const PointSet& pts) {
  std::string out;
  for (std::size_t j = 0; j < pts.dim(); ++j) out += (j ? ",x" : "x") + std::to_string(j + 1);
  out += "\n";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < pts.dim(); ++j) out += (j ? "," : "") + format_double(pts[i][j]);
    out += "\n";
  }
  return out;
}

PointSet parse_points_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw InputError("empty CSV");
  const std::size_t d = split(lines[0]).size();
  PointSet pts(d);
  for (const Vector& row : parse_rows(lines, d)) pts.push_back(row);
  if (pts.empty()) throw InputError("point file has no rows");
  return pts;
}

std::string samples_csv(const mcmc::PosteriorSamples& samples) {
  std::string out;
  const auto names = samples.names();
  for (std::size_t j = 0; j < names.size(); ++j) out += (j ? "," : "") + names[j];
  out += "\n";
  const Matrix t = samples.table();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) out += (j ? "," : "") + format_double(t(i, j));
    out += "\n";
  }
  return out;
}

std::vector<ParameterDraw> parse_samples_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw InputError("empty samples file");
  const auto header = split(lines[0]);
  if (header.size() < 3 || header[0] != "sigma2" || header[1] != "tau2" || header[2] != "phi")
    throw InputError("samples header must begin sigma2,tau2,phi");
  for (std::size_t j = 3; j < header.size(); ++j)
    if (!numbered(header[j], "beta_", j - 3)) throw InputError("unexpected samples column '" + std::string(header[j]) + "'");
  std::vector<ParameterDraw> draws;
  for (const Vector& row : parse_rows(lines, header.size())) {
    ParameterDraw d;
    d.params.sigma2 = row[0];
    d.params.tau2 = row[1];
    d.params.phi = row[2];
    d.beta.assign(row.begin() + 3, row.end());
    draws.push_back(std::move(d));
  }
  return draws;
}

std::string latent_csv(const mcmc::PosteriorSamples& samples) {
  std::string out;
  const std::size_t n = samples.latent.empty() ? 0 : samples.latent.front().size();
  for (std::size_t j = 0; j < n; ++j) out += (j ? ",w_" : "w_") + std::to_string(j);
  out += "\n";
  for (const Vector& w : samples.latent) {
    for (std::size_t j = 0; j < w.size(); ++j) out += (j ? "," : "") + format_double(w[j]);
    out += "\n";
  }
  return out;
}

std::vector<Vector> parse_latent_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw InputError("empty latent file");
  return parse_rows(lines, split(lines[0]).size());
}

Json summary_json(const mcmc::PosteriorSamples& samples) {
  Json j;
  j["model"] = samples.model;
  j["seed"] = samples.seed;
  j["draws"] = samples.size();
  j["acceptance_after_burn_in"] =
      samples.sampled_iterations > 0
          ? static_cast<double>(samples.accepted_after_burn_in) / static_cast<double>(samples.sampled_iterations)
          : 0.0;
  Json params = Json::object();
  for (const mcmc::ParamSummary& s : mcmc::summarize(samples))
    params[s.name] = Json{{"mean", s.mean}, {"sd", s.sd}, {"q025", s.q025}, {"q50", s.q50}, {"q975", s.q975}};
  j["parameters"] = params;
  return j;
}

std::string chain_log_jsonl(const mcmc::PosteriorSamples& samples) {
  std::string out;
  for (const mcmc::ChainLogEntry& e : samples.log) {
    Json j;
    j["iteration"] = e.iteration;
    j["acceptance"] = e.acceptance;
    j["scales"] = e.scales;
    j["phase"] = e.burn_in ? "burn_in" : "sampling";
    out += j.dump() + "\n";
  }
  return out;
}

std::string predictions_csv(const Matrix& draws) {
  const metrics::PredictiveSummary s = metrics::summarize_predictive(draws);
  std::string out = "target,mean,sd,q025,q975\n";
  for (std::size_t t = 0; t < s.mean.size(); ++t)
    out += std::to_string(t) + "," + format_double(s.mean[t]) + "," + format_double(s.sd[t]) + "," +
           format_double(s.q025[t]) + "," + format_double(s.q975[t]) + "\n";
  return out;
}

namespace {

void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw InvalidParams(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw InvalidParams("unknown key '" + item.key() + "' in " + where);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

InverseGamma parse_ig(const Json& j, const std::string& where) {
  check_keys(j, {"shape", "scale"}, where);
  return InverseGamma{j.at("shape").get<double>(), j.at("scale").get<double>()};
}

Matrix parse_matrix(const Json& j) {
  const std::size_t r = j.size();
  const std::size_t c = r ? j.at(0).size() : 0;
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (j.at(i).size() != c) throw InvalidParams("ragged matrix in config");
    for (std::size_t k = 0; k < c; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  try {
    const Json j = Json::parse(text);
    check_keys(j,
               {"model", "data", "knots", "knot_grid", "knot_placement", "neighbors", "ordering", "reference",
                "covariance", "priors", "chain", "output", "parity_oracle"},
               "config");
    if (!j.contains("model")) throw InvalidParams("config needs 'model'");
    if (!j.contains("data")) throw InvalidParams("config needs 'data'");
    cfg.model.kind = model_from_string(j.at("model").get<std::string>());
    cfg.data = resolve(base_dir, j.at("data").get<std::string>());
    if (j.contains("knots")) cfg.knots_file = resolve(base_dir, j.at("knots").get<std::string>());
    if (j.contains("knot_grid")) cfg.model.knot_count = j.at("knot_grid").get<std::size_t>();
    if (j.contains("knot_placement")) {
      const auto s = j.at("knot_placement").get<std::string>();
      if (s == "grid")
        cfg.model.placement = lowrank::KnotPlacement::Grid;
      else if (s == "subset")
        cfg.model.placement = lowrank::KnotPlacement::Subset;
      else
        throw InvalidParams("knot_placement must be 'grid' or 'subset'");
    }
    if (j.contains("neighbors")) cfg.model.neighbors = j.at("neighbors").get<std::size_t>();
    if (j.contains("ordering")) cfg.model.ordering = nngp::ordering_from_string(j.at("ordering").get<std::string>());
    if (j.contains("reference")) cfg.reference_file = resolve(base_dir, j.at("reference").get<std::string>());
    if (j.contains("covariance")) {
      const Json& c = j.at("covariance");
      check_keys(c, {"family", "nu"}, "covariance");
      if (c.contains("family")) cfg.model.family = cov_family_from_string(c.at("family").get<std::string>());
      if (c.contains("nu")) cfg.model.nu = c.at("nu").get<double>();
    }
    if (j.contains("priors")) {
      const Json& p = j.at("priors");
      check_keys(p, {"sigma2", "tau2", "phi", "beta"}, "priors");
      if (p.contains("sigma2")) cfg.priors.sigma2 = parse_ig(p.at("sigma2"), "priors.sigma2");
      if (p.contains("tau2")) cfg.priors.tau2 = parse_ig(p.at("tau2"), "priors.tau2");
      if (p.contains("phi")) {
        const Json& f = p.at("phi");
        check_keys(f, {"lo", "hi"}, "priors.phi");
        cfg.priors.phi = UniformPrior{f.at("lo").get<double>(), f.at("hi").get<double>()};
      }
      if (p.contains("beta")) {
        const Json& b = p.at("beta");
        if (b.is_string()) {
          if (b.get<std::string>() != "flat") throw InvalidParams("priors.beta must be 'flat' or {mean, cov}");
        } else {
          check_keys(b, {"mean", "cov"}, "priors.beta");
          cfg.priors.beta.flat = false;
          cfg.priors.beta.mean = b.at("mean").get<Vector>();
          cfg.priors.beta.cov = parse_matrix(b.at("cov"));
        }
      }
    }
    if (j.contains("chain")) {
      const Json& c = j.at("chain");
      check_keys(c,
                 {"iterations", "burn_in", "thin", "seed", "initial", "adapt_window", "target_acceptance",
                  "initial_scale"},
                 "chain");
      if (c.contains("iterations")) cfg.chain.iterations = c.at("iterations").get<long>();
      if (c.contains("burn_in")) cfg.chain.burn_in = c.at("burn_in").get<long>();
      if (c.contains("thin")) cfg.chain.thin = c.at("thin").get<long>();
      if (c.contains("seed")) cfg.chain.seed = c.at("seed").get<std::uint64_t>();
      if (c.contains("adapt_window")) cfg.chain.adapt_window = c.at("adapt_window").get<long>();
      if (c.contains("target_acceptance")) cfg.chain.target_acceptance = c.at("target_acceptance").get<double>();
      if (c.contains("initial_scale")) cfg.chain.initial_scale = c.at("initial_scale").get<double>();
      if (c.contains("initial")) {
        const Json& i = c.at("initial");
        check_keys(i, {"sigma2", "tau2", "phi", "beta"}, "chain.initial");
        mcmc::InitialValues init;
        init.sigma2 = i.at("sigma2").get<double>();
        init.tau2 = i.at("tau2").get<double>();
        init.phi = i.at("phi").get<double>();
        init.beta = i.at("beta").get<Vector>();
        cfg.chain.initial = init;
      }
    }
    if (j.contains("output")) cfg.output = resolve(base_dir, j.at("output").get<std::string>());
    if (j.contains("parity_oracle")) cfg.parity_oracle = j.at("parity_oracle").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParams(std::string("config: ") + e.what());
  }
  cfg.model.validate();
  cfg.chain.validate();
  return cfg;
}

RunConfig read_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

LoadedRun load_run(const RunConfig& config) {
  LoadedRun run{read_dataset(config.data), config.model, PriorSpec()};
  if (config.knots_file) run.model.knots = parse_points_csv(read_file(*config.knots_file));
  if (config.reference_file) run.model.reference = parse_points_csv(read_file(*config.reference_file));

  UniformPrior phi;
  if (config.priors.phi) {
    phi = *config.priors.phi;
  } else {
    const auto [lo, hi] = default_phi_bounds(run.data, run.model);
    phi = UniformPrior{lo, hi};
  }
  run.priors = weak_priors(run.data, phi.lo, phi.hi);
  if (config.priors.sigma2) run.priors.sigma2 = *config.priors.sigma2;
  if (config.priors.tau2) run.priors.tau2 = *config.priors.tau2;
  run.priors.beta = config.priors.beta;
  run.priors.validate();
  return run;
}

}  // namespace geostat::io
