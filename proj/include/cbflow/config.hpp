#ifndef CBFLOW_CONFIG_HPP
#define CBFLOW_CONFIG_HPP

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbflow/mechanisms.hpp"
#include "cbflow/sde_sim.hpp"
#include "cbflow/step_function.hpp"

// Structured-text experiment configuration. JSON is the on-disk format; CLI
// flags override individual fields after loading. Serialization goes through
// the constructed domain types, so a load/save cycle is idempotent once the
// first pass has normalized the input (defaults filled, atoms merged and
// sorted).

namespace cbflow {

struct ExperimentConfig {
  // family: kind in {base, shifted, kernel, quadratic}
  std::string kind = "quadratic";
  double a = 1.0;
  double base_b = 0.0;
  double base_sigma = std::sqrt(2.0);
  std::vector<JumpAtom> base_atoms;
  std::vector<KernelPiece> pieces;

  double imm_h = 0.0;
  std::vector<JumpAtom> imm_atoms;

  std::vector<double> rho_breaks{0.0, 1.0};
  std::vector<double> rho_values{0.0};
  std::vector<double> mu_breaks{0.0, 2.0};
  std::vector<double> mu_values{1.0};
  std::vector<double> q_grid{0.0};

  SimConfig sim;
  std::size_t n = 10000;
  int jobs = 0;

  BranchingMechanism mechanism() const {
    if (kind == "quadratic") return quadratic_mechanism();
    return BranchingMechanism(base_b, base_sigma, JumpMeasure(base_atoms));
  }

  MechanismFamily family() const {
    if (kind == "quadratic") return MechanismFamily::quadratic(a);
    if (kind == "shifted") return MechanismFamily::shifted(mechanism(), a);
    if (kind == "kernel") return MechanismFamily::piecewise(mechanism(), pieces);
    if (kind == "base")
      throw std::invalid_argument("config: a plain base mechanism has no family");
    throw std::invalid_argument("config: unknown family kind '" + kind + "'");
  }

  ImmigrationMechanism immigration() const {
    return ImmigrationMechanism(imm_h, JumpMeasure(imm_atoms));
  }

  StepFunction rho() const { return StepFunction(rho_breaks, rho_values); }
  StepFunction mu() const { return StepFunction(mu_breaks, mu_values); }
};

namespace detail {

inline nlohmann::ordered_json atoms_json(const JumpMeasure& m) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (const auto& atom : m.atoms()) a.push_back({atom.size, atom.weight});
  return a;
}

inline std::vector<JumpAtom> atoms_from_json(const nlohmann::json& j) {
  std::vector<JumpAtom> atoms;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2)
      throw std::invalid_argument("config: atom entries are [size, weight] pairs");
    atoms.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  return atoms;
}

}  // namespace detail

inline nlohmann::ordered_json config_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["family"]["kind"] = cfg.kind;
  if (cfg.kind != "base") j["family"]["a"] = cfg.a;
  if (cfg.kind != "quadratic") {
    const BranchingMechanism mech = cfg.mechanism();
    j["family"]["base"]["b"] = mech.b();
    j["family"]["base"]["sigma"] = mech.sigma();
    j["family"]["base"]["atoms"] = detail::atoms_json(mech.jumps());
  }
  if (cfg.kind == "kernel") {
    j["family"]["pieces"] = nlohmann::ordered_json::array();
    for (const auto& p : cfg.pieces) {
      nlohmann::ordered_json jp;
      jp["theta_hi"] = p.theta_hi;
      jp["beta"] = p.beta;
      jp["atoms"] = detail::atoms_json(p.n);
      j["family"]["pieces"].push_back(jp);
    }
  }
  const ImmigrationMechanism imm = cfg.immigration();
  j["immigration"]["h"] = imm.h();
  j["immigration"]["atoms"] = detail::atoms_json(imm.jumps());
  j["rho"]["breakpoints"] = cfg.rho_breaks;
  j["rho"]["values"] = cfg.rho_values;
  j["mu"]["breakpoints"] = cfg.mu_breaks;
  j["mu"]["values"] = cfg.mu_values;
  j["q_grid"] = cfg.q_grid;
  j["sim"]["dt"] = cfg.sim.dt;
  j["sim"]["horizon"] = cfg.sim.horizon;
  j["sim"]["x_max"] = cfg.sim.x_max;
  j["sim"]["extinction_eps"] = cfg.sim.extinction_eps;
  j["sim"]["exact_boundary_multiple"] = cfg.sim.exact_boundary_multiple;
  j["sim"]["seed"] = cfg.sim.seed;
  j["sim"]["n"] = cfg.n;
  j["sim"]["jobs"] = cfg.jobs;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("family")) {
    const auto& f = j.at("family");
    cfg.kind = f.value("kind", cfg.kind);
    cfg.a = f.value("a", cfg.a);
    if (f.contains("base")) {
      const auto& b = f.at("base");
      cfg.base_b = b.value("b", 0.0);
      cfg.base_sigma = b.value("sigma", 0.0);
      if (b.contains("atoms")) cfg.base_atoms = detail::atoms_from_json(b.at("atoms"));
    }
    if (f.contains("pieces")) {
      cfg.pieces.clear();
      for (const auto& jp : f.at("pieces")) {
        KernelPiece p;
        p.theta_hi = jp.at("theta_hi").get<double>();
        p.beta = jp.value("beta", 0.0);
        if (jp.contains("atoms")) p.n = JumpMeasure(detail::atoms_from_json(jp.at("atoms")));
        cfg.pieces.push_back(std::move(p));
      }
    }
  }
  if (j.contains("immigration")) {
    cfg.imm_h = j.at("immigration").value("h", 0.0);
    if (j.at("immigration").contains("atoms"))
      cfg.imm_atoms = detail::atoms_from_json(j.at("immigration").at("atoms"));
  }
  const auto load_step = [&](const char* key, std::vector<double>& breaks,
                             std::vector<double>& values) {
    if (!j.contains(key)) return;
    breaks = j.at(key).at("breakpoints").get<std::vector<double>>();
    values = j.at(key).at("values").get<std::vector<double>>();
  };
  load_step("rho", cfg.rho_breaks, cfg.rho_values);
  load_step("mu", cfg.mu_breaks, cfg.mu_values);
  if (j.contains("q_grid")) cfg.q_grid = j.at("q_grid").get<std::vector<double>>();
  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    cfg.sim.dt = s.value("dt", cfg.sim.dt);
    cfg.sim.horizon = s.value("horizon", cfg.sim.horizon);
    cfg.sim.x_max = s.value("x_max", cfg.sim.x_max);
    cfg.sim.extinction_eps = s.value("extinction_eps", cfg.sim.extinction_eps);
    cfg.sim.exact_boundary_multiple =
        s.value("exact_boundary_multiple", cfg.sim.exact_boundary_multiple);
    cfg.sim.seed = s.value("seed", cfg.sim.seed);
    cfg.n = s.value("n", cfg.n);
    cfg.jobs = s.value("jobs", cfg.jobs);
  }
  // construct the domain types once so invalid configs fail on load, then
  // store the canonical atom lists back
  cfg.base_atoms = cfg.kind == "quadratic"
                       ? std::vector<JumpAtom>{}
                       : cfg.mechanism().jumps().atoms();
  cfg.imm_atoms = cfg.immigration().jumps().atoms();
  if (cfg.kind != "base") (void)cfg.family();
  (void)cfg.rho();
  (void)cfg.mu();
  return cfg;
}

// Step-function literals for the CLI: "v@[t0,t1);v@[t0,t1]" with gaps filled
// by zero pieces, or a bare constant "c" meaning c on [0,1).
inline StepFunction parse_step_function(const std::string& text) {
  if (text.find('@') == std::string::npos)
    return StepFunction::constant(std::stod(text), 0.0, 1.0);
  struct Piece {
    double v, t0, t1;
  };
  std::vector<Piece> pieces;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(';', pos);
    if (end == std::string::npos) end = text.size();
    const std::string item = text.substr(pos, end - pos);
    const std::size_t at = item.find('@');
    const std::size_t lb = item.find('[', at);
    const std::size_t comma = item.find(',', lb);
    const std::size_t rb = item.find_first_of("])", comma);
    if (at == std::string::npos || lb == std::string::npos ||
        comma == std::string::npos || rb == std::string::npos)
      throw std::invalid_argument("step function literal: expected v@[t0,t1)");
    pieces.push_back({std::stod(item.substr(0, at)),
                      std::stod(item.substr(lb + 1, comma - lb - 1)),
                      std::stod(item.substr(comma + 1, rb - comma - 1))});
    pos = end + 1;
  }
  std::sort(pieces.begin(), pieces.end(),
            [](const Piece& x, const Piece& y) { return x.t0 < y.t0; });
  std::vector<double> breaks, values;
  for (const auto& p : pieces) {
    if (!(p.t1 > p.t0))
      throw std::invalid_argument("step function literal: empty interval");
    if (breaks.empty()) {
      breaks.push_back(p.t0);
    } else if (p.t0 < breaks.back()) {
      throw std::invalid_argument("step function literal: overlapping intervals");
    } else if (p.t0 > breaks.back()) {
      values.push_back(0.0);  // gap
      breaks.push_back(p.t0);
    }
    values.push_back(p.v);
    breaks.push_back(p.t1);
  }
  return StepFunction(std::move(breaks), std::move(values));
}

}  // namespace cbflow

#endif  // CBFLOW_CONFIG_HPP
