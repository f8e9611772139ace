#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "infrel/samplers.hpp"

namespace infrel {

inline constexpr const char* kCheckpointVersion = "infrel-checkpoint-1";

namespace ckpt {

template <typename T>
nlohmann::json grid_to_json(const Grid<T>& g) {
  nlohmann::json j;
  j["rows"] = g.rows();
  j["cols"] = g.cols();
  j["data"] = g.raw();
  return j;
}

template <typename T>
Grid<T> grid_from_json(const nlohmann::json& j) {
  Grid<T> g(j.at("rows").get<int>(), j.at("cols").get<int>());
  auto data = j.at("data").get<std::vector<T>>();
  if (data.size() != g.raw().size()) throw DataError("checkpoint grid size mismatch");
  g.raw() = std::move(data);
  return g;
}

}  // namespace ckpt

inline nlohmann::json checkpoint_to_json(const SamplerState& st) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["model"] = to_string(st.model);
  j["family"] = static_cast<int>(st.family);
  j["n"] = st.n;
  j["F"] = st.F;
  j["k_active"] = st.k_active;
  j["iteration"] = st.iteration;
  j["truncated"] = st.truncated;
  j["eta_frozen"] = st.eta_frozen;
  j["psi"] = ckpt::grid_to_json(st.psi);
  j["psi_log"] = ckpt::grid_to_json(st.psi_log);
  j["pi"] = ckpt::grid_to_json(st.pi);
  j["residual"] = st.residual;
  j["s"] = ckpt::grid_to_json(st.s);
  j["r"] = ckpt::grid_to_json(st.r);
  j["z"] = ckpt::grid_to_json(st.z);
  j["B"] = ckpt::grid_to_json(st.B);
  j["eta"] = ckpt::grid_to_json(st.eta);
  j["eta_hyper"] = {{"alpha_eta", st.eta_hyper.alpha_eta}, {"beta_eta", st.eta_hyper.beta_eta}};
  j["b_hyper"] = {{"alpha_B", st.b_hyper.alpha_B}, {"beta_B", st.b_hyper.beta_B},
                  {"a_B", st.b_hyper.a_B},         {"b_B", st.b_hyper.b_B},
                  {"sigma_B", st.b_hyper.sigma_B}};
  j["rng"] = st.rng.state_string();
  return j;
}

inline SamplerState checkpoint_from_json(const nlohmann::json& j) {
  if (j.at("version").get<std::string>() != kCheckpointVersion)
    throw DataError("unsupported checkpoint version");
  SamplerState st;
  st.model = model_from_string(j.at("model").get<std::string>());
  st.family = static_cast<Family>(j.at("family").get<int>());
  st.n = j.at("n").get<int>();
  st.F = j.at("F").get<int>();
  st.k_active = j.at("k_active").get<int>();
  st.iteration = j.at("iteration").get<long>();
  st.truncated = j.at("truncated").get<bool>();
  st.eta_frozen = j.at("eta_frozen").get<bool>();
  st.psi = ckpt::grid_from_json<double>(j.at("psi"));
  st.psi_log = ckpt::grid_from_json<double>(j.at("psi_log"));
  st.pi = ckpt::grid_from_json<double>(j.at("pi"));
  st.residual = j.at("residual").get<std::vector<double>>();
  st.s = ckpt::grid_from_json<int>(j.at("s"));
  st.r = ckpt::grid_from_json<int>(j.at("r"));
  st.z = ckpt::grid_from_json<std::uint8_t>(j.at("z"));
  st.B = ckpt::grid_from_json<double>(j.at("B"));
  st.eta = ckpt::grid_from_json<double>(j.at("eta"));
  st.eta_hyper.alpha_eta = j.at("eta_hyper").at("alpha_eta").get<double>();
  st.eta_hyper.beta_eta = j.at("eta_hyper").at("beta_eta").get<double>();
  st.b_hyper.alpha_B = j.at("b_hyper").at("alpha_B").get<double>();
  st.b_hyper.beta_B = j.at("b_hyper").at("beta_B").get<double>();
  st.b_hyper.a_B = j.at("b_hyper").at("a_B").get<double>();
  st.b_hyper.b_B = j.at("b_hyper").at("b_B").get<double>();
  st.b_hyper.sigma_B = j.at("b_hyper").at("sigma_B").get<double>();
  st.rng.set_state(j.at("rng").get<std::string>());
  return st;
}

inline void write_checkpoint(const SamplerState& st, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint path: " + path);
  out << checkpoint_to_json(st).dump(1) << "\n";
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline SamplerState read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  return checkpoint_from_json(j);
}

}  // namespace infrel
