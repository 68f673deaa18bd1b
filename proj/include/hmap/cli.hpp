#pragma once

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hmap/halmap.hpp"
#include "hmap/io.hpp"
#include "hmap/parallel.hpp"
#include "hmap/recon.hpp"
#include "hmap/simulate.hpp"

namespace hmap::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Invalid configuration; `path` is the JSON path of the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error("invalid config at " + path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Configuration file
// ---------------------------------------------------------------------------

struct RunConfig {
  std::optional<std::size_t> mask_factor;
  std::size_t mask_offset = 0;
  std::optional<double> gaussian_sigma;
  std::optional<double> phase_noise_amplitude;
  std::uint64_t seed = 0;
  double epsilon = kDefaultEpsilon;
  PlsTvConfig plstv{};
  TransformConfig transform{};
  SsimConfig ssim{};
  std::vector<double> sweep_candidates;
  std::size_t pdf_bins = 20;

  NoiseConfig noise() const {
    return {gaussian_sigma.value_or(0.0), phase_noise_amplitude.value_or(0.0), seed};
  }
};

namespace detail {

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_, "expected an object");
  }

  /// Rejects keys not in `known` so typos do not silently fall back to defaults.
  void only(std::initializer_list<std::string_view> known) const {
    for (const auto& [key, _] : obj_.items())
      if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError(at(key), "unknown field");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }
  std::string at(const std::string& key) const { return path_ + "." + key; }

  Reader child(const std::string& key) const { return Reader(obj_.at(key), at(key)); }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(at(key), "expected a finite number");
    return d;
  }

  std::optional<double> optional_number(const std::string& key) const {
    if (!has(key) || obj_.at(key).is_null()) return std::nullopt;
    return number(key, 0.0);
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(at(key), "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  std::string string(const std::string& key, std::string fallback) const {
    if (!has(key)) return fallback;
    if (!obj_.at(key).is_string()) throw ConfigError(at(key), "expected a string");
    return obj_.at(key).get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) const {
    if (!has(key)) return {};
    const auto& v = obj_.at(key);
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

 private:
  const json& obj_;
  std::string path_;
};

template <class Fn>
void check(const std::string& path, Fn&& validate) {
  try {
    validate();
  } catch (const ParameterError& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace detail

inline RunConfig parse_config(const json& root) {
  using detail::Reader;
  RunConfig cfg;
  Reader top(root, "$");
  top.only({"mask", "noise", "epsilon", "plstv", "transform", "ssim", "sweep", "analysis"});

  if (top.has("mask")) {
    auto m = top.child("mask");
    m.only({"factor", "offset"});
    if (m.has("factor")) {
      cfg.mask_factor = m.unsigned_integer("factor", 0);
      if (*cfg.mask_factor < 1) throw ConfigError(m.at("factor"), "must be at least 1");
    }
    cfg.mask_offset = m.unsigned_integer("offset", 0);
    if (cfg.mask_factor && cfg.mask_offset >= *cfg.mask_factor)
      throw ConfigError(m.at("offset"), "must be smaller than factor");
  }
  if (top.has("noise")) {
    auto n = top.child("noise");
    n.only({"gaussian_sigma", "phase_noise_amplitude", "seed"});
    cfg.gaussian_sigma = n.optional_number("gaussian_sigma");
    if (cfg.gaussian_sigma && *cfg.gaussian_sigma < 0.0) throw ConfigError(n.at("gaussian_sigma"), "must be nonnegative");
    cfg.phase_noise_amplitude = n.optional_number("phase_noise_amplitude");
    if (cfg.phase_noise_amplitude && (*cfg.phase_noise_amplitude < 0.0 || *cfg.phase_noise_amplitude > std::numbers::pi))
      throw ConfigError(n.at("phase_noise_amplitude"), "must lie in [0, pi]");
    cfg.seed = n.unsigned_integer("seed", 0);
  }
  cfg.epsilon = top.number("epsilon", kDefaultEpsilon);
  if (!(cfg.epsilon > 0.0)) throw ConfigError("$.epsilon", "must be positive");

  if (top.has("plstv")) {
    auto p = top.child("plstv");
    p.only({"lambda", "max_iters", "step_size", "tv_flavor", "tolerance"});
    cfg.plstv.lambda = p.number("lambda", 0.0);
    detail::check(p.at("lambda"), [&] { PlsTvConfig{.lambda = cfg.plstv.lambda}.validate(); });
    cfg.plstv.max_iters = p.unsigned_integer("max_iters", cfg.plstv.max_iters);
    if (cfg.plstv.max_iters == 0) throw ConfigError(p.at("max_iters"), "must be positive");
    cfg.plstv.step_size = p.optional_number("step_size");
    if (cfg.plstv.step_size && !(*cfg.plstv.step_size > 0.0)) throw ConfigError(p.at("step_size"), "must be positive");
    const auto flavor = p.string("tv_flavor", "isotropic");
    if (flavor == "isotropic")
      cfg.plstv.tv_flavor = TvFlavor::Isotropic;
    else if (flavor == "anisotropic")
      cfg.plstv.tv_flavor = TvFlavor::Anisotropic;
    else
      throw ConfigError(p.at("tv_flavor"), "expected \"isotropic\" or \"anisotropic\"");
    cfg.plstv.tolerance = p.number("tolerance", cfg.plstv.tolerance);
    if (cfg.plstv.tolerance < 0.0) throw ConfigError(p.at("tolerance"), "must be nonnegative");
  }

  if (top.has("transform")) {
    auto t = top.child("transform");
    t.only({"gaussian_kernel_size", "gaussian_sigma", "percentile", "min_component_area", "connectivity",
            "histogram_bins"});
    auto& tc = cfg.transform;
    tc.gaussian_kernel_size = t.unsigned_integer("gaussian_kernel_size", tc.gaussian_kernel_size);
    tc.gaussian_sigma = t.number("gaussian_sigma", tc.gaussian_sigma);
    tc.percentile = t.number("percentile", tc.percentile);
    tc.min_component_area = t.unsigned_integer("min_component_area", tc.min_component_area);
    tc.connectivity = static_cast<int>(t.unsigned_integer("connectivity", 8));
    tc.histogram_bins = t.unsigned_integer("histogram_bins", tc.histogram_bins);
    // Report the first field that fails validation.
    const std::pair<const char*, std::function<void()>> checks[] = {
        {"gaussian_kernel_size", [&] { TransformConfig c; c.gaussian_kernel_size = tc.gaussian_kernel_size; c.validate(); }},
        {"gaussian_sigma", [&] { TransformConfig c; c.gaussian_sigma = tc.gaussian_sigma; c.validate(); }},
        {"percentile", [&] { TransformConfig c; c.percentile = tc.percentile; c.validate(); }},
        {"min_component_area", [&] { TransformConfig c; c.min_component_area = tc.min_component_area; c.validate(); }},
        {"connectivity", [&] { TransformConfig c; c.connectivity = tc.connectivity; c.validate(); }},
        {"histogram_bins", [&] { TransformConfig c; c.histogram_bins = tc.histogram_bins; c.validate(); }},
    };
    for (const auto& [key, fn] : checks) detail::check(t.at(key), fn);
  }

  if (top.has("ssim")) {
    auto s = top.child("ssim");
    s.only({"window", "sigma", "k1", "k2", "data_range"});
    cfg.ssim.window = s.unsigned_integer("window", cfg.ssim.window);
    if (cfg.ssim.window == 0 || cfg.ssim.window % 2 == 0) throw ConfigError(s.at("window"), "must be a positive odd integer");
    cfg.ssim.sigma = s.number("sigma", cfg.ssim.sigma);
    if (!(cfg.ssim.sigma > 0.0)) throw ConfigError(s.at("sigma"), "must be positive");
    cfg.ssim.k1 = s.number("k1", cfg.ssim.k1);
    if (!(cfg.ssim.k1 > 0.0)) throw ConfigError(s.at("k1"), "must be positive");
    cfg.ssim.k2 = s.number("k2", cfg.ssim.k2);
    if (!(cfg.ssim.k2 > 0.0)) throw ConfigError(s.at("k2"), "must be positive");
    cfg.ssim.data_range = s.optional_number("data_range");
    if (cfg.ssim.data_range && !(*cfg.ssim.data_range > 0.0)) throw ConfigError(s.at("data_range"), "must be positive");
  }

  if (top.has("sweep")) {
    auto s = top.child("sweep");
    s.only({"candidates"});
    cfg.sweep_candidates = s.numbers("candidates");
    for (std::size_t i = 0; i < cfg.sweep_candidates.size(); ++i)
      if (!(cfg.sweep_candidates[i] >= 0.0))
        throw ConfigError(s.at("candidates") + "[" + std::to_string(i) + "]", "must be nonnegative");
  }

  if (top.has("analysis")) {
    auto a = top.child("analysis");
    a.only({"pdf_bins"});
    cfg.pdf_bins = a.unsigned_integer("pdf_bins", cfg.pdf_bins);
    if (cfg.pdf_bins == 0) throw ConfigError(a.at("pdf_bins"), "must be positive");
  }
  return cfg;
}

/// Fully resolved configuration, defaults included, as recorded in manifests.
inline json config_to_json(const RunConfig& c) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json mask = json::object();
  if (c.mask_factor) mask["factor"] = *c.mask_factor;
  mask["offset"] = c.mask_offset;
  return json{
      {"mask", mask},
      {"noise", {{"gaussian_sigma", opt(c.gaussian_sigma)},
                 {"phase_noise_amplitude", opt(c.phase_noise_amplitude)},
                 {"seed", c.seed}}},
      {"epsilon", c.epsilon},
      {"plstv", {{"lambda", c.plstv.lambda},
                 {"max_iters", c.plstv.max_iters},
                 {"step_size", opt(c.plstv.step_size)},
                 {"tv_flavor", c.plstv.tv_flavor == TvFlavor::Isotropic ? "isotropic" : "anisotropic"},
                 {"tolerance", c.plstv.tolerance}}},
      {"transform", {{"gaussian_kernel_size", c.transform.gaussian_kernel_size},
                     {"gaussian_sigma", c.transform.gaussian_sigma},
                     {"percentile", c.transform.percentile},
                     {"min_component_area", c.transform.min_component_area},
                     {"connectivity", c.transform.connectivity},
                     {"histogram_bins", c.transform.histogram_bins}}},
      {"ssim", {{"window", c.ssim.window},
                {"sigma", c.ssim.sigma},
                {"k1", c.ssim.k1},
                {"k2", c.ssim.k2},
                {"data_range", opt(c.ssim.data_range)}}},
      {"sweep", {{"candidates", c.sweep_candidates}}},
      {"analysis", {{"pdf_bins", c.pdf_bins}}},
  };
}

inline RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = io::read_bytes(path);
  } catch (const io::IoError& e) {
    throw ConfigError("$", e.what());
  }
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(root);
}

// ---------------------------------------------------------------------------
// Shared stage plumbing
// ---------------------------------------------------------------------------

struct Context {
  RunConfig cfg;
  std::optional<std::string> config_path;
  std::size_t jobs = 1;
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

inline const std::vector<std::string> kImageExts{".cgrid", ".pgm"};

inline std::optional<fs::path> find_image(const fs::path& dir, const std::string& id) {
  for (auto ext : {".cgrid", ".pgm"}) {
    auto p = dir / (id + ext);
    if (fs::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

inline ImageGrid counterpart(const fs::path& dir, const std::string& id, const char* role) {
  auto p = find_image(dir, id);
  if (!p) throw io::IoError("missing " + std::string(role) + " for image_id '" + id + "' in " + dir.string());
  return io::ingest_external(*p);
}

/// The mask written next to a measurement by `simulate`.
inline MaskSpec measurement_mask(const fs::path& meas_dir, const std::string& id) {
  const auto p = meas_dir / (id + ".mask.json");
  if (!fs::is_regular_file(p)) throw io::IoError("missing mask file for image_id '" + id + "' in " + meas_dir.string());
  return mask_from_json(io::read_json(p));
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw io::IoError("cannot create output directory " + dir.string());
}

/// Runs fn on every input in parallel, listing every failure. Returns true
/// when all succeeded.
template <class Item, class Fn>
bool for_each_input(Context& ctx, const std::vector<Item>& items, Fn&& fn) {
  std::vector<std::string> errors(items.size());
  parallel_for(items.size(), ctx.jobs, [&](std::size_t i) {
    try {
      fn(i);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  bool ok = true;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (!errors[i].empty()) {
      ctx.err << "error: " << items[i].image_id << ": " << errors[i] << "\n";
      ok = false;
    }
  return ok;
}

// Input location as seen from the output directory, so a moved or copied
// output tree keeps byte-identical manifests.
inline std::string rel_path(const fs::path& p, const fs::path& from) {
  const auto a = fs::absolute(p).lexically_normal(), b = fs::absolute(from).lexically_normal();
  const auto r = a.lexically_relative(b);
  return r.empty() ? a.generic_string() : r.generic_string();
}

inline json manifest(const Context& ctx, const std::string& stage, json inputs) {
  return json{{"stage", stage},
              {"inputs", std::move(inputs)},
              {"config", config_to_json(ctx.cfg)},
              {"seed", ctx.cfg.seed}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

inline int cmd_simulate(Context& ctx, const fs::path& input, const fs::path& output) {
  if (!ctx.cfg.mask_factor) throw ConfigError("$.mask.factor", "required by simulate");
  if (!ctx.cfg.gaussian_sigma) throw ConfigError("$.noise.gaussian_sigma", "required by simulate");
  if (!ctx.cfg.phase_noise_amplitude) throw ConfigError("$.noise.phase_noise_amplitude", "required by simulate");
  const auto files = io::list_inputs(input, detail::kImageExts);
  detail::ensure_dir(output);
  const auto noise = ctx.cfg.noise();
  std::vector<json> rows(files.size());
  const bool ok = detail::for_each_input(ctx, files, [&](std::size_t i) {
    const auto& f = files[i];
    const auto theta = io::ingest_external(f.path);
    const auto mask = make_uniform_mask(theta.height(), theta.width(), *ctx.cfg.mask_factor, ctx.cfg.mask_offset);
    const auto g = simulate_measurement(theta, mask, noise, f.image_id);
    io::write_cgrid(output / (f.image_id + ".cgrid"), io::measurement_grid(g, mask));
    io::write_json(output / (f.image_id + ".mask.json"), to_json(mask));
    rows[i] = json{{"image_id", f.image_id},
                   {"height", theta.height()},
                   {"width", theta.width()},
                   {"gauss_seed", rng::substream_seed(noise.seed, f.image_id, "gauss")},
                   {"phase_seed", rng::substream_seed(noise.seed, f.image_id, "phase")}};
  });
  if (!ok) return 1;
  auto m = detail::manifest(ctx, "simulate", {{"input", detail::rel_path(input, output)}});
  m["images"] = rows;
  io::write_json(output / "manifest.json", m);
  ctx.out << "simulated " << files.size() << " image(s)\n";
  return 0;
}

inline double lambda_from_sweep(const fs::path& path) {
  const auto j = io::read_json(path);
  if (!j.is_object() || !j.contains("chosen_lambda") || !j["chosen_lambda"].is_number())
    throw io::IoError(path.string() + ": no numeric chosen_lambda");
  return j["chosen_lambda"].get<double>();
}

inline int cmd_reconstruct(Context& ctx, const std::string& method, const fs::path& input, const fs::path& output,
                           std::optional<double> lambda, const std::optional<std::string>& lambda_from) {
  if (method != "tp" && method != "plstv") throw UsageError("unknown method '" + method + "' (expected tp or plstv)");
  PlsTvConfig pcfg = ctx.cfg.plstv;
  if (lambda_from) pcfg.lambda = lambda_from_sweep(*lambda_from);
  if (lambda) pcfg.lambda = *lambda;
  if (!(pcfg.lambda >= 0.0)) throw UsageError("lambda must be nonnegative");
  const auto files = io::list_inputs(input, {".cgrid"});
  detail::ensure_dir(output);
  std::vector<json> rows(files.size());
  const bool ok = detail::for_each_input(ctx, files, [&](std::size_t i) {
    const auto& f = files[i];
    const auto grid = io::read_cgrid(f.path);
    const auto mask = detail::measurement_mask(input, f.image_id);
    const auto g = io::grid_measurement(grid, mask);
    const auto op = OperatorDescriptor::fft_mask(mask);
    ImageGrid image;
    json row{{"method", method}, {"seed", ctx.cfg.seed}};
    if (method == "tp") {
      image = recon_tp(g, compute_svd(op, ctx.cfg.epsilon));
      row["lambda"] = 0.0;
      row["iters"] = 0;
      row["final_objective"] = plstv_objective(op, g, image, 0.0, pcfg.tv_flavor);
    } else {
      auto res = recon_plstv(g, op, pcfg);
      image = std::move(res.image);
      row["lambda"] = pcfg.lambda;
      row["iters"] = res.iterations;
      row["final_objective"] = res.objective.empty() ? plstv_objective(op, g, image, pcfg.lambda, pcfg.tv_flavor)
                                                     : res.objective.back();
    }
    io::write_cgrid(output / (f.image_id + ".cgrid"), image);
    io::write_json(output / (f.image_id + ".json"), row);
    row["image_id"] = f.image_id;
    rows[i] = std::move(row);
  });
  if (!ok) return 1;
  auto m = detail::manifest(ctx, "reconstruct", {{"input", detail::rel_path(input, output)}});
  m["method"] = method;
  m["lambda"] = method == "tp" ? 0.0 : pcfg.lambda;
  m["images"] = rows;
  io::write_json(output / "manifest.json", m);
  ctx.out << "reconstructed " << files.size() << " image(s) with " << method << "\n";
  return 0;
}

inline int cmd_project(Context& ctx, const fs::path& input, const fs::path& meas_dir, const fs::path& output) {
  const auto files = io::list_inputs(input, detail::kImageExts);
  detail::ensure_dir(output);
  std::vector<json> rows(files.size());
  const bool ok = detail::for_each_input(ctx, files, [&](std::size_t i) {
    const auto& f = files[i];
    const auto image = io::ingest_external(f.path);
    const auto grid = io::read_cgrid(meas_dir / (f.image_id + ".cgrid"));
    const auto mask = detail::measurement_mask(meas_dir, f.image_id);
    const auto dec = compute_svd(OperatorDescriptor::fft_mask(mask), ctx.cfg.epsilon);
    const auto pm = project_meas(dec, image);
    const auto pn = project_null(dec, image);
    io::write_cgrid(output / (f.image_id + ".meas.cgrid"), pm);
    io::write_cgrid(output / (f.image_id + ".null.cgrid"), pn);
    rows[i] = json{{"image_id", f.image_id}, {"rank", dec.rank()}, {"truncation", dec.truncation()}};
  });
  if (!ok) return 1;
  auto m = detail::manifest(ctx, "project", {{"input", detail::rel_path(input, output)}, {"meas", detail::rel_path(meas_dir, output)}});
  m["images"] = rows;
  io::write_json(output / "manifest.json", m);
  ctx.out << "projected " << files.size() << " image(s)\n";
  return 0;
}

inline int cmd_halmap(Context& ctx, const fs::path& recon_dir, const fs::path& truth_dir, const fs::path& meas_dir,
                      const fs::path& output) {
  const auto files = io::list_inputs(recon_dir, detail::kImageExts);
  detail::ensure_dir(output);
  std::vector<std::vector<CentroidRow>> shm_rows(files.size()), err_rows(files.size());
  std::vector<json> rows(files.size());
  const bool ok = detail::for_each_input(ctx, files, [&](std::size_t i) {
    const auto& f = files[i];
    const auto hat = io::ingest_external(f.path);
    const auto theta = detail::counterpart(truth_dir, f.image_id, "truth");
    const auto mpath = meas_dir / (f.image_id + ".cgrid");
    if (!fs::is_regular_file(mpath))
      throw io::IoError("missing measurement for image_id '" + f.image_id + "' in " + meas_dir.string());
    const auto grid = io::read_cgrid(mpath);
    const auto mask = detail::measurement_mask(meas_dir, f.image_id);
    if (!hat.same_shape(theta))
      throw DimensionError("reconstruction " + shape_string(hat.height(), hat.width()) + " and truth " +
                           shape_string(theta.height(), theta.width()) + " differ in shape");
    const auto dec = compute_svd(OperatorDescriptor::fft_mask(mask), ctx.cfg.epsilon);
    const auto rep = compute_report(hat, theta, io::grid_measurement(grid, mask), dec, ctx.cfg.transform, f.image_id);
    const auto base = output / f.image_id;
    auto put = [&](const char* suffix, const ImageGrid& g) { io::write_cgrid(base.string() + suffix, g); };
    put(".theta_tp.cgrid", rep.theta_tp);
    put(".error.cgrid", rep.error_map);
    put(".meas_hm.cgrid", rep.meas_hm);
    put(".meas_error.cgrid", rep.meas_error_map);
    put(".null_hm.cgrid", rep.null_hm);
    put(".shm_mask.cgrid", rep.shm_mask);
    put(".specific_error_mask.cgrid", rep.specific_error_mask);
    shm_rows[i] = io::region_rows(f.image_id, rep.shm_regions);
    err_rows[i] = io::region_rows(f.image_id, rep.specific_error_regions);
    rows[i] = json{{"image_id", f.image_id},
                   {"shm_components", rep.shm_regions.size()},
                   {"specific_error_components", rep.specific_error_regions.size()}};
  });
  if (!ok) return 1;
  std::vector<CentroidRow> all_shm, all_err;
  for (std::size_t i = 0; i < files.size(); ++i) {
    all_shm.insert(all_shm.end(), shm_rows[i].begin(), shm_rows[i].end());
    all_err.insert(all_err.end(), err_rows[i].begin(), err_rows[i].end());
  }
  io::write_atomic(output / "shm_regions.csv", io::regions_csv(all_shm));
  io::write_atomic(output / "specific_error_regions.csv", io::regions_csv(all_err));
  auto m = detail::manifest(ctx, "halmap",
                            {{"recon", detail::rel_path(recon_dir, output)}, {"truth", detail::rel_path(truth_dir, output)}, {"meas", detail::rel_path(meas_dir, output)}});
  m["images"] = rows;
  io::write_json(output / "manifest.json", m);
  ctx.out << "hallucination maps for " << files.size() << " image(s)\n";
  return 0;
}

inline int cmd_shm(Context& ctx, const fs::path& input, const fs::path& reference_dir, const fs::path& output) {
  const auto files = io::list_inputs(input, detail::kImageExts);
  detail::ensure_dir(output);
  std::vector<std::vector<CentroidRow>> region_rows(files.size());
  std::vector<json> rows(files.size());
  const bool ok = detail::for_each_input(ctx, files, [&](std::size_t i) {
    const auto& f = files[i];
    const auto map = io::ingest_external(f.path);
    const auto ref = detail::counterpart(reference_dir, f.image_id, "support reference");
    const auto sm = specific_map(map, ref, ctx.cfg.transform);
    io::write_cgrid(output / (f.image_id + ".cgrid"), sm.mask);
    region_rows[i] = io::region_rows(f.image_id, sm.regions);
    rows[i] = json{{"image_id", f.image_id}, {"threshold", sm.threshold}, {"components", sm.regions.size()}};
  });
  if (!ok) return 1;
  std::vector<CentroidRow> all;
  for (auto& r : region_rows) all.insert(all.end(), r.begin(), r.end());
  io::write_atomic(output / "regions.csv", io::regions_csv(all));
  auto m = detail::manifest(ctx, "shm", {{"input", detail::rel_path(input, output)}, {"reference", detail::rel_path(reference_dir, output)}});
  m["images"] = rows;
  io::write_json(output / "manifest.json", m);
  ctx.out << "specific maps for " << files.size() << " image(s)\n";
  return 0;
}

inline int cmd_analyze(Context& ctx, const fs::path& recon_dir, const fs::path& truth_dir,
                       const std::optional<std::string>& halmap_dir, const std::string& method,
                       const fs::path& output) {
  const auto files = io::list_inputs(recon_dir, detail::kImageExts);
  detail::ensure_dir(output);
  std::vector<io::SsimTableRow> ssim_rows(files.size());
  std::vector<double> rmses(files.size());
  std::vector<std::vector<CentroidRow>> shm_rows(files.size()), err_rows(files.size());
  const int conn = ctx.cfg.transform.connectivity;
  auto regions_of = [&](const std::string& id, const ImageGrid& mask) {
    return io::region_rows(id, connected_components(image_to_mask(mask), mask.height(), mask.width(), conn).regions);
  };
  const bool ok = detail::for_each_input(ctx, files, [&](std::size_t i) {
    const auto& f = files[i];
    const auto hat = io::ingest_external(f.path);
    const auto theta = detail::counterpart(truth_dir, f.image_id, "truth");
    if (!hat.same_shape(theta))
      throw DimensionError("reconstruction " + shape_string(hat.height(), hat.width()) + " and truth " +
                           shape_string(theta.height(), theta.width()) + " differ in shape");
    ImageGrid region(hat.height(), hat.width());
    if (halmap_dir) {
      const fs::path hd(*halmap_dir);
      region = io::read_cgrid(hd / (f.image_id + ".shm_mask.cgrid"));
      shm_rows[i] = regions_of(f.image_id, region);
      err_rows[i] = regions_of(f.image_id, io::read_cgrid(hd / (f.image_id + ".specific_error_mask.cgrid")));
    }
    const auto support = mask_to_image(otsu_support(theta, ctx.cfg.transform.histogram_bins), theta.height(),
                                       theta.width());
    ssim_rows[i] = {f.image_id, method, region_ssim(hat, theta, region, &support, ctx.cfg.ssim)};
    rmses[i] = rmse(hat, theta);
  });
  if (!ok) return 1;

  io::write_atomic(output / "ssim_table.csv", io::ssim_table_csv(ssim_rows));
  std::vector<CentroidRow> all_shm, all_err;
  for (std::size_t i = 0; i < files.size(); ++i) {
    all_shm.insert(all_shm.end(), shm_rows[i].begin(), shm_rows[i].end());
    all_err.insert(all_err.end(), err_rows[i].begin(), err_rows[i].end());
  }
  io::write_atomic(output / "centroids.csv", io::regions_csv(all_shm));
  io::write_atomic(output / "centroids_error.csv", io::regions_csv(all_err));

  std::vector<double> region_vals, background_vals, global_vals;
  for (const auto& r : ssim_rows) {
    if (r.value.region_mean) region_vals.push_back(*r.value.region_mean);
    if (r.value.background_mean) background_vals.push_back(*r.value.background_mean);
    global_vals.push_back(r.value.global);
  }
  auto pdf_text = [&](const std::vector<double>& v) {
    return v.empty() ? io::pdf_csv({}) : io::pdf_csv(empirical_pdf(v, ctx.cfg.pdf_bins));
  };
  io::write_atomic(output / "pdf.csv", pdf_text(region_vals));
  io::write_atomic(output / "pdf_background.csv", pdf_text(background_vals));

  auto med = [](const std::vector<double>& v) { return v.empty() ? json(nullptr) : json(median(v)); };
  double mean_rmse = 0.0;
  for (double r : rmses) mean_rmse += r;
  json summary{
      {"method", method},
      {"images", files.size()},
      {"mean_rmse", files.empty() ? json(nullptr) : json(mean_rmse / static_cast<double>(files.size()))},
      {"median_region_ssim", med(region_vals)},
      {"median_background_ssim", med(background_vals)},
      {"median_global_ssim", med(global_vals)},
      {"centroid_variance_shm", centroid_variance(all_shm)},
      {"centroid_variance_error", centroid_variance(all_err)},
      // SSIM window and constants are conventional defaults, not calibrated values.
      {"ssim_settings", {{"window", ctx.cfg.ssim.window},
                         {"sigma", ctx.cfg.ssim.sigma},
                         {"k1", ctx.cfg.ssim.k1},
                         {"k2", ctx.cfg.ssim.k2},
                         {"data_range", ctx.cfg.ssim.data_range ? json(*ctx.cfg.ssim.data_range)
                                                                : json("max magnitude over both images")},
                         {"source", "default"}}},
  };
  io::write_json(output / "summary.json", summary);
  json inputs{{"recon", detail::rel_path(recon_dir, output)}, {"truth", detail::rel_path(truth_dir, output)}};
  if (halmap_dir) inputs["halmap"] = detail::rel_path(*halmap_dir, output);
  auto m = detail::manifest(ctx, "analyze", inputs);
  m["method"] = method;
  io::write_json(output / "manifest.json", m);
  ctx.out << "analyzed " << files.size() << " image(s)\n";
  return 0;
}

inline int cmd_sweep_lambda(Context& ctx, const fs::path& input, const fs::path& truth_dir, const fs::path& output,
                            std::vector<double> candidates) {
  if (candidates.empty()) candidates = ctx.cfg.sweep_candidates;
  if (candidates.empty()) throw ConfigError("$.sweep.candidates", "no lambda candidates given");
  for (double c : candidates)
    if (!(c >= 0.0)) throw UsageError("lambda candidates must be nonnegative");
  const auto files = io::list_inputs(input, {".cgrid"});
  if (files.empty()) throw io::IoError("no measurements in " + input.string());
  detail::ensure_dir(output);
  std::vector<SweepSample> data(files.size());
  std::vector<MaskSpec> masks;
  for (const auto& f : files) {
    const auto grid = io::read_cgrid(f.path);
    masks.push_back(detail::measurement_mask(input, f.image_id));
    data[masks.size() - 1] = {io::grid_measurement(grid, masks.back()),
                              detail::counterpart(truth_dir, f.image_id, "truth")};
    if (!(masks.back() == masks.front()))
      throw io::IoError("image_id '" + f.image_id + "' uses a different mask; a sweep needs one operator");
  }
  const auto op = OperatorDescriptor::fft_mask(masks.front());
  const auto res = sweep_lambda(data, op, candidates, ctx.cfg.plstv, ctx.jobs);

  json table = json::array();
  std::string csv = "lambda,mean_rmse,mean_tv\n";
  for (const auto& row : res.table) {
    json per = json::object();
    for (std::size_t i = 0; i < files.size(); ++i) per[files[i].image_id] = row.rmse[i];
    table.push_back({{"lambda", row.lambda}, {"mean_rmse", row.mean_rmse}, {"mean_tv", row.mean_tv}, {"rmse", per}});
    csv += io::fmt_double(row.lambda) + "," + io::fmt_double(row.mean_rmse) + "," + io::fmt_double(row.mean_tv) + "\n";
  }
  io::write_json(output / "sweep.json", {{"chosen_lambda", res.chosen_lambda}, {"table", table}});
  io::write_atomic(output / "sweep.csv", csv);
  auto m = detail::manifest(ctx, "sweep-lambda", {{"input", detail::rel_path(input, output)}, {"truth", detail::rel_path(truth_dir, output)}});
  m["candidates"] = candidates;
  io::write_json(output / "manifest.json", m);
  ctx.out << "chosen lambda " << io::fmt_double(res.chosen_lambda) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Hallucination maps for undersampled Fourier imaging"};
  app.name("hmap");
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "overrides noise.seed");

  std::string input, output, meas, recon, truth, reference, method;
  std::optional<std::string> halmap_dir, lambda_from;
  std::optional<double> lambda;
  std::vector<double> candidates;

  auto* sim = app.add_subcommand("simulate", "simulate undersampled noisy measurements");
  sim->add_option("--input", input, "directory of .cgrid/.pgm objects")->required();
  sim->add_option("--output", output)->required();

  auto* rec = app.add_subcommand("reconstruct", "reconstruct images from measurements");
  rec->add_option("--method", method, "tp or plstv")->required();
  rec->add_option("--input", input, "measurement directory")->required();
  rec->add_option("--output", output)->required();
  rec->add_option("--lambda", lambda, "PLS-TV regularization weight");
  rec->add_option("--lambda-from", lambda_from, "sweep.json whose chosen_lambda is used");

  auto* proj = app.add_subcommand("project", "split images into measurement and null components");
  proj->add_option("--input", input, "image directory")->required();
  proj->add_option("--meas", meas, "measurement directory (for masks)")->required();
  proj->add_option("--output", output)->required();

  auto* hal = app.add_subcommand("halmap", "hallucination and error maps");
  hal->add_option("--recon", recon)->required();
  hal->add_option("--truth", truth)->required();
  hal->add_option("--meas", meas)->required();
  hal->add_option("--output", output)->required();

  auto* shm = app.add_subcommand("shm", "specific maps of arbitrary maps");
  shm->add_option("--input", input, "map directory")->required();
  shm->add_option("--reference", reference, "support reference directory")->required();
  shm->add_option("--output", output)->required();

  auto* ana = app.add_subcommand("analyze", "SSIM tables, centroid scatter and PDFs");
  ana->add_option("--recon", recon)->required();
  ana->add_option("--truth", truth)->required();
  ana->add_option("--halmap", halmap_dir, "halmap output directory");
  ana->add_option("--method", method, "label for the tables")->default_val("recon");
  ana->add_option("--output", output)->required();

  auto* swp = app.add_subcommand("sweep-lambda", "choose the PLS-TV lambda by mean RMSE");
  swp->add_option("--input", input, "measurement directory")->required();
  swp->add_option("--truth", truth)->required();
  swp->add_option("--output", output)->required();
  swp->add_option("--candidates", candidates, "lambda values")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    Context ctx{config_path ? load_config(*config_path) : RunConfig{}, config_path, jobs, out, err};
    if (seed) ctx.cfg.seed = *seed;
    if (*sim) return cmd_simulate(ctx, input, output);
    if (*rec) return cmd_reconstruct(ctx, method, input, output, lambda, lambda_from);
    if (*proj) return cmd_project(ctx, input, meas, output);
    if (*hal) return cmd_halmap(ctx, recon, truth, meas, output);
    if (*shm) return cmd_shm(ctx, input, reference, output);
    if (*ana) return cmd_analyze(ctx, recon, truth, halmap_dir, method, output);
    if (*swp) return cmd_sweep_lambda(ctx, input, truth, output, candidates);
    throw UsageError("no subcommand");
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"hmap"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace hmap::cli
