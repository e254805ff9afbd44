#pragma once

// File formats: datasets (CSV + JSON sidecar), model files (JSON), training
// history, oracle results and experiment reports (CSV + JSON sidecar).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "scnet/error.hpp"
#include "scnet/experiments.hpp"
#include "scnet/network.hpp"
#include "scnet/spectral.hpp"
#include "scnet/training.hpp"

namespace scnet::io {

using json = nlohmann::json;

inline constexpr int model_format_version = 1;

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw ConfigError("cannot create directory " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  return in;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

inline json to_json(const ProblemConfig& p) {
  return {{"p", p.p}, {"s", p.s}, {"n_modes", p.n_modes}};
}

inline ProblemConfig problem_from_json(const json& j) {
  ProblemConfig p;
  p.p = j.at("p").get<double>();
  p.s = j.at("s").get<double>();
  p.n_modes = j.at("n_modes").get<std::size_t>();
  p.validate();
  return p;
}

// ---------------------------------------------------------------- datasets

/// Columns: sample_id, kind, n_or_i, value. `f` rows are indexed by mode
/// n = 1..N, `y_clean` / `y_noisy` rows by grid index i = 0..M-1.
inline void write_dataset_csv(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  auto out = open_out(path);
  out << "sample_id,kind,n_or_i,value\n";
  for (const auto& s : samples) {
    for (std::size_t n = 0; n < s.f.size(); ++n)
      out << s.id << ",f," << n + 1 << ',' << format_double(s.f[n]) << '\n';
    for (std::size_t i = 0; i < s.y_clean.resolution(); ++i)
      out << s.id << ",y_clean," << i << ',' << format_double(s.y_clean.values[i]) << '\n';
    for (std::size_t i = 0; i < s.y_noisy.resolution(); ++i)
      out << s.id << ",y_noisy," << i << ',' << format_double(s.y_noisy.values[i]) << '\n';
  }
}

/// Reads a dataset CSV back and recomputes the derived fields (projection,
/// noise norm, out-of-band energy) for `n_modes` retained modes.
inline std::vector<Sample> read_dataset_csv(const std::filesystem::path& path, std::size_t n_modes) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "sample_id,kind,n_or_i,value")
    throw ConfigError("dataset " + path.string() + ": unexpected header");
  std::map<std::size_t, Sample> by_id;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id_s, kind, idx_s, val_s;
    if (!std::getline(ss, id_s, ',') || !std::getline(ss, kind, ',') ||
        !std::getline(ss, idx_s, ',') || !std::getline(ss, val_s))
      throw ConfigError("dataset " + path.string() + ": malformed line " + std::to_string(line_no));
    const std::size_t id = std::stoul(id_s), idx = std::stoul(idx_s);
    const double v = std::strtod(val_s.c_str(), nullptr);
    Sample& s = by_id[id];
    s.id = id;
    std::vector<double>* target = nullptr;
    std::size_t pos = idx;
    if (kind == "f") {
      target = &s.f.coeffs;
      if (idx == 0) throw ConfigError("dataset: mode index must start at 1");
      pos = idx - 1;
    } else if (kind == "y_clean") {
      target = &s.y_clean.values;
    } else if (kind == "y_noisy") {
      target = &s.y_noisy.values;
    } else {
      throw ConfigError("dataset: unknown kind '" + kind + "'");
    }
    if (target->size() <= pos) target->resize(pos + 1, 0.0);
    (*target)[pos] = v;
  }
  std::vector<Sample> out;
  std::optional<SineBasis> basis;
  for (auto& [id, s] : by_id) {
    detail::require_same_size(s.f.size(), n_modes, "dataset: source length");
    detail::require_same_size(s.y_clean.resolution(), s.y_noisy.resolution(),
                              "dataset: grid length");
    if (!basis || basis->resolution() != s.y_noisy.resolution())
      basis.emplace(s.y_noisy.resolution(), n_modes);
    s.y_coeffs = basis->analyze(s.y_noisy);
    GridFunction e = s.y_noisy;
    for (std::size_t i = 0; i < e.values.size(); ++i) e.values[i] -= s.y_clean.values[i];
    s.noise_norm = norm(e);
    s.out_of_band_sq = out_of_band_energy(s.y_noisy, s.y_coeffs);
    out.push_back(std::move(s));
  }
  return out;
}

// ------------------------------------------------------------------ models

struct ModelFile {
  FilterNet net;
  ProblemConfig problem;
  double delta = 0.0;
};

inline json model_to_json(const FilterNet& net, const ProblemConfig& problem, double delta) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    const Matrix& w = net.weight(l);
    std::vector<double> wv(w.data(), w.data() + w.size());
    std::vector<double> bv(net.bias(l).data(), net.bias(l).data() + net.bias(l).size());
    layers.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"weights", wv}, {"biases", bv}});
  }
  const auto& nz = net.normalizer();
  return {{"version", model_format_version},
          {"architecture",
           {{"input_dim", NetArchitecture::input_dim},
            {"hidden", net.architecture().hidden},
            {"hidden_activation", "tanh"},
            {"output_activation", "sigmoid"}}},
          {"normalizer",
           {{"y_mean", nz.y_mean},
            {"y_scale", nz.y_scale},
            {"logsig_mean", nz.logsig_mean},
            {"logsig_scale", nz.logsig_scale}}},
          {"layers", layers},
          {"problem", to_json(problem)},
          {"delta", delta}};
}

inline ModelFile model_from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != model_format_version)
      throw ConfigError("model: unsupported format version " + j.at("version").dump());
    NetArchitecture arch;
    arch.hidden = j.at("architecture").at("hidden").get<std::vector<std::size_t>>();
    FeatureNormalizer nz;
    const auto& jn = j.at("normalizer");
    nz.y_mean = jn.at("y_mean").get<std::vector<double>>();
    nz.y_scale = jn.at("y_scale").get<std::vector<double>>();
    nz.logsig_mean = jn.at("logsig_mean").get<double>();
    nz.logsig_scale = jn.at("logsig_scale").get<double>();
    ModelFile m;
    m.net = FilterNet::zeros(arch, nz);
    const auto& layers = j.at("layers");
    detail::require_same_size(layers.size(), m.net.n_layers(), "model: layer count");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto w = layers[l].at("weights").get<std::vector<double>>();
      const auto b = layers[l].at("biases").get<std::vector<double>>();
      Matrix& mw = m.net.weight(l);
      detail::require_same_size(w.size(), static_cast<std::size_t>(mw.size()), "model: weights");
      detail::require_same_size(b.size(), static_cast<std::size_t>(m.net.bias(l).size()),
                                "model: biases");
      std::copy(w.begin(), w.end(), mw.data());
      std::copy(b.begin(), b.end(), m.net.bias(l).data());
    }
    detail::require(m.net.all_finite(), "model: non-finite parameters");
    m.problem = problem_from_json(j.at("problem"));
    m.delta = j.at("delta").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: malformed file: ") + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const FilterNet& net,
                       const ProblemConfig& problem, double delta) {
  write_json(path, model_to_json(net, problem, delta));
}

inline ModelFile load_model(const std::filesystem::path& path) {
  return model_from_json(read_json(path));
}

/// `scnet_delta_<delta>.json` with the shortest round-trip spelling of delta.
inline std::string model_filename(double delta) {
  return "scnet_delta_" + format_double(delta) + ".json";
}

// ----------------------------------------------------------------- reports

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<HistoryRow>& history) {
  auto out = open_out(path);
  out << "epoch,train_loss,test_rel_error\n";
  for (const auto& h : history)
    out << h.epoch << ',' << format_double(h.train_loss) << ','
        << (std::isnan(h.test_rel_error) ? std::string() : format_double(h.test_rel_error))
        << '\n';
}

struct OracleRecord {
  std::size_t sample_id = 0;
  std::string family;
  double best_alpha = 0.0;
  double rel_error = 0.0;
};

inline void write_oracle_csv(const std::filesystem::path& path,
                             const std::vector<OracleRecord>& rows) {
  auto out = open_out(path);
  out << "sample_id,family,best_alpha,rel_error\n";
  for (const auto& r : rows)
    out << r.sample_id << ',' << r.family << ',' << format_double(r.best_alpha) << ','
        << format_double(r.rel_error) << '\n';
}

inline void write_report_csv(const std::filesystem::path& path, const ExperimentReport& report) {
  auto out = open_out(path);
  out << "method,delta,resolution,mean_rel_error,std_rel_error,n_test\n";
  for (const auto& r : report.rows)
    out << r.method << ',' << format_double(r.delta) << ',' << r.resolution << ','
        << format_double(r.mean_rel_error) << ',' << format_double(r.std_rel_error) << ','
        << r.n_test << '\n';
}

inline json slopes_to_json(const ExperimentReport& report) {
  json j = json::object();
  for (const auto& [method, fit] : report.slopes)
    j[method] = {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r_squared", fit.r_squared}};
  return j;
}

inline void write_profile_csv(const std::filesystem::path& path, const FilterProfile& profile) {
  auto out = open_out(path);
  out << "n,sigma_n,psi_mean,psi_std,tikhonov,tsvd\n";
  for (const auto& r : profile.rows)
    out << r.n << ',' << format_double(r.sigma) << ',' << format_double(r.psi_mean) << ','
        << format_double(r.psi_std) << ',' << format_double(r.tikhonov) << ','
        << format_double(r.tsvd) << '\n';
}

}  // namespace scnet::io
