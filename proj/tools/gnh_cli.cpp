// gnh: batch front end for the constraint algorithm, spectral propagator and
// Hodge decomposition. Exit codes: 0 ok, 1 usage or config error, 2 spectral
// precondition, 3 constraint violation, 4 chain did not terminate, 5 I/O or shape error.

#include "gnh/config.hpp"
#include "gnh/field_models.hpp"
#include "gnh/io.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <thread>

namespace {

using namespace gnh;
using io::Json;
namespace fs = std::filesystem;

struct Globals {
  std::string config_path;
  std::string cache_dir;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
};

enum Exit { kOk = 0, kUsage = 1, kSpectral = 2, kConstraint = 3, kNoTermination = 4, kShape = 5 };

Vector random_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

double mass_norm(const Vector& x, const Vector& m) { return std::sqrt(x.dot(m.cwiseProduct(x))); }

void note(const std::string& msg) { std::cerr << "gnh: " << msg << "\n"; }

/// Decomposition from the cache when the fingerprint matches, else built and stored.
SpectralDecomposition cached(const Globals& g, const config::RunConfig& c, const std::string& tag, const Vector& mass,
                             const std::function<SpectralDecomposition()>& build) {
  if (g.cache_dir.empty()) return build();
  const std::string fp = c.fingerprint();
  const io::SpectralCache cache{g.cache_dir, tag + "-" + fp};
  std::string why;
  if (auto d = cache.load(fp, mass, why)) return *std::move(d);
  if (why != "no cache entry") note("warning: ignoring spectral cache " + cache.binary().string() + ": " + why + "; rebuilding");
  SpectralDecomposition d = build();
  cache.store(d, fp, c.fingerprint_text());
  return d;
}

std::string time_file(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "state_%04zu.csv", k);
  return buf;
}

ScalarModel scalar_model(const config::RunConfig& c) { return ScalarModel(make_grid(c.grid), c.bc, c.sign); }

MaxwellModel maxwell_model(const config::RunConfig& c) { return MaxwellModel(make_grid(c.grid), c.bc.vector); }

SpectralDecomposition scalar_modes(const Globals& g, const config::RunConfig& c, const ScalarModel& m) {
  SpectralDecomposition d = cached(g, c, "scalar", m.mass(), [&] { return m.decompose(c.eigen()); });
  d.complement_tol = c.complement_tol;
  return d;
}

SpectralDecomposition maxwell_modes(const Globals& g, const config::RunConfig& c, const MaxwellModel& m) {
  SpectralDecomposition d =
      cached(g, c, "maxwell", m.edges().mass(), [&] { return transverse_modes(m.grid(), m.bc(), c.eigen()); });
  d.complement_tol = c.complement_tol;
  return d;
}

void require_field_model(const config::RunConfig& c, const std::string& cmd) {
  if (c.model == config::ModelKind::Raw) throw config::ConfigError(cmd + " needs model.kind scalar or maxwell");
}

// ---------------------------------------------------------------- modes

int cmd_modes(const Globals& g, const config::RunConfig& c) {
  require_field_model(c, "modes");
  std::string csv = "k,lambda,kernel\n";
  Json summary;
  summary["command"] = "modes";
  summary["model"] = config::to_string(c.model);
  summary["fingerprint"] = c.fingerprint();
  Index rows = 0;
  auto add = [&](double lambda, bool kernel) {
    csv += std::to_string(rows++) + "," + io::format_double(lambda) + "," + (kernel ? "1" : "0") + "\n";
  };
  if (c.model == config::ModelKind::Scalar) {
    const ScalarModel m = scalar_model(c);
    const auto d = scalar_modes(g, c, m);
    for (Index k = 0; k < d.modes(); ++k) add(d.eigenvalues(k), k < d.kernel_count);
    summary["n"] = d.size();
    summary["modes"] = d.modes();
    summary["kernel_count"] = d.kernel_count;
    summary["ktol"] = d.ktol;
    summary["op_norm"] = d.op_norm;
    summary["complete"] = d.complete;
  } else {
    // physical sector: harmonic kernel followed by the transverse spectrum
    const MaxwellModel m = maxwell_model(c);
    const auto h = kernel_modes(vector_laplacian_stiffness(m.grid(), m.bc()), m.edges().mass(), c.eigen());
    const auto d = maxwell_modes(g, c, m);
    for (Index k = 0; k < h.modes(); ++k) add(h.eigenvalues(k), true);
    for (Index k = 0; k < d.modes(); ++k) add(d.eigenvalues(k), false);
    summary["n"] = m.num_edges();
    summary["modes"] = h.modes() + d.modes();
    summary["kernel_count"] = h.modes();
    summary["ktol"] = h.ktol;
    summary["op_norm"] = d.op_norm;
    summary["complete"] = false;
  }
  io::write_file_atomic(c.output_dir / "modes.csv", csv);
  io::write_json(c.output_dir / "modes.json", summary);
  std::cout << "modes: " << rows << " rows, kernel " << summary["kernel_count"].get<Index>() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- propagate

template <class State, class Fn>
std::vector<State> over_times(const std::vector<double>& times, unsigned threads, Fn fn) {
  std::vector<State> out(times.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t k; (k = next++) < times.size();) {
      try {
        out[k] = fn(times[k]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(times.size())));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
  return out;
}

struct SeriesRow {
  double t, energy, energy_drift, omega, omega_drift, q_norm, p_norm;
  Json constraints;
};

void write_series(const config::RunConfig& c, const std::string& model, Index n, const std::vector<SeriesRow>& rows,
                  double e0, double w0, const std::vector<std::string>& constraint_cols) {
  std::string csv = "t,energy,energy_rel_drift,symplectic,symplectic_rel_drift,q_norm,p_norm";
  for (const auto& col : constraint_cols) csv += "," + col;
  csv += "\n";
  Json manifest;
  manifest["command"] = "propagate";
  manifest["model"] = model;
  manifest["fingerprint"] = c.fingerprint();
  manifest["size"] = n;
  manifest["initial"] = c.initial;
  manifest["energy0"] = e0;
  manifest["symplectic0"] = w0;
  Json steps = Json::array();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    csv += io::format_double(r.t) + "," + io::format_double(r.energy) + "," + io::format_double(r.energy_drift) + "," +
           io::format_double(r.omega) + "," + io::format_double(r.omega_drift) + "," + io::format_double(r.q_norm) + "," +
           io::format_double(r.p_norm);
    for (const auto& col : constraint_cols) csv += "," + io::format_double(r.constraints[col].get<double>());
    csv += "\n";
    Json s;
    s["t"] = r.t;
    s["file"] = time_file(k);
    s["energy"] = r.energy;
    s["energy_rel_drift"] = r.energy_drift;
    s["symplectic"] = r.omega;
    s["symplectic_rel_drift"] = r.omega_drift;
    s["q_norm"] = r.q_norm;
    s["p_norm"] = r.p_norm;
    s["constraints"] = r.constraints;
    steps.push_back(s);
  }
  manifest["steps"] = steps;
  io::write_file_atomic(c.output_dir / "series.csv", csv);
  io::write_json(c.output_dir / "manifest.json", manifest);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

int propagate_scalar(const Globals& g, const config::RunConfig& c) {
  const ScalarModel m = scalar_model(c);
  const auto d = scalar_modes(g, c, m);
  const Index n = m.size();
  std::mt19937_64 rng(g.seed);
  ScalarState s0{Vector::Zero(n), Vector::Zero(n), 0.0};
  if (c.initial == "mode") {
    if (c.mode_index >= d.modes())
      throw config::ConfigError("run.mode_index " + std::to_string(c.mode_index) + " exceeds the " +
                                std::to_string(d.modes()) + " computed modes");
    s0.Q = d.eigenvectors.col(c.mode_index);
  } else if (c.initial == "random") {
    s0.Q = random_vector(n, rng);
    s0.V = random_vector(n, rng);
  } else if (c.initial == "file") {
    const auto table = io::state_from_csv(io::read_file(c.state_file), c.state_file.string());
    s0.Q = io::component(table, "Q", n, c.state_file.string());
    s0.V = io::component(table, "P", n, c.state_file.string());
  } else {
    throw config::ConfigError("run.initial = \"harmonic\" needs the maxwell model");
  }
  // partner state inside the computed modes for the symplectic check
  const ScalarState s1{d.eigenvectors * random_vector(d.modes(), rng), d.eigenvectors * random_vector(d.modes(), rng), 0.0};
  const double e0 = scalar_energy(m, s0), w0 = wave_symplectic(m.mass(), s0, s1);
  const auto states = over_times<std::pair<ScalarState, ScalarState>>(c.times, g.threads, [&](double t) {
    return std::make_pair(propagate(d, s0, t, c.complement), propagate(d, s1, t, c.complement));
  });
  std::vector<SeriesRow> rows;
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto& [s, p] = states[k];
    io::write_file_atomic(c.output_dir / time_file(k), io::state_to_csv({{"Q", s.Q}, {"P", s.V}}));
    SeriesRow r{c.times[k], scalar_energy(m, s), 0.0, wave_symplectic(m.mass(), s, p), 0.0, mass_norm(s.Q, m.mass()),
                mass_norm(s.V, m.mass()), Json::object()};
    r.energy_drift = rel(r.energy, e0);
    r.omega_drift = rel(r.omega, w0);
    r.constraints["robin_residual"] = check_scalar_constraints(m, s).robin_norm;
    rows.push_back(r);
  }
  write_series(c, "scalar", n, rows, e0, w0, {"robin_residual"});
  std::cout << "propagate: " << rows.size() << " time points, max energy drift ";
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.energy_drift);
  std::cout << io::format_double(worst) << "\n";
  return kOk;
}

int propagate_maxwell(const Globals& g, const config::RunConfig& c) {
  const MaxwellModel m = maxwell_model(c);
  MaxwellEvolutionOptions opts;
  opts.eigen = c.eigen();
  opts.ctol = c.ctol;
  opts.complement = c.complement;
  const MaxwellEvolution ev(m, maxwell_modes(g, c, m), opts);
  const Index nn = m.num_nodes(), ne = m.num_edges();
  std::mt19937_64 rng(g.seed);
  MaxwellState s0{Vector::Zero(nn), Vector::Zero(ne), Vector::Zero(ne), 0.0};
  if (c.initial == "mode") {
    if (c.mode_index >= ev.transverse().modes())
      throw config::ConfigError("run.mode_index " + std::to_string(c.mode_index) + " exceeds the " +
                                std::to_string(ev.transverse().modes()) + " transverse modes");
    s0.Q = ev.transverse().eigenvectors.col(c.mode_index);
  } else if (c.initial == "harmonic") {
    if (c.mode_index >= ev.hodge().harmonic_dim())
      throw config::ConfigError("no harmonic field number " + std::to_string(c.mode_index) + " on this grid (harmonic dimension " +
                                std::to_string(ev.hodge().harmonic_dim()) + ")");
    s0.P = ev.hodge().harmonic_basis().col(c.mode_index);
  } else if (c.initial == "random") {
    s0.Qperp = random_vector(nn, rng);
    s0.Q = random_vector(ne, rng);
    s0.P = ev.hodge().project_physical(random_vector(ne, rng));
  } else {
    const auto table = io::state_from_csv(io::read_file(c.state_file), c.state_file.string());
    s0.Qperp = io::component(table, "Qperp", nn, c.state_file.string());
    s0.Q = io::component(table, "Q", ne, c.state_file.string());
    s0.P = io::component(table, "P", ne, c.state_file.string());
  }
  ev.require_gauss(s0);
  MaxwellState s1{random_vector(nn, rng), random_vector(ne, rng), ev.hodge().project_physical(random_vector(ne, rng)), 0.0};
  const Vector chi = Vector::Constant(nn, c.gauge_rate);
  const double e0 = maxwell_energy(m, s0), w0 = maxwell_symplectic(m, s0, s1);
  const auto states = over_times<std::pair<MaxwellState, MaxwellState>>(
      c.times, g.threads, [&](double t) { return std::make_pair(ev.evolve(s0, t, chi), ev.evolve(s1, t, chi)); });
  std::vector<SeriesRow> rows;
  const Vector& me = m.edges().mass();
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto& [s, p] = states[k];
    io::write_file_atomic(c.output_dir / time_file(k), io::state_to_csv({{"Qperp", s.Qperp}, {"Q", s.Q}, {"P", s.P}}));
    SeriesRow r{c.times[k], maxwell_energy(m, s), 0.0, maxwell_symplectic(m, s, p), 0.0, mass_norm(s.Q, me),
                mass_norm(s.P, me), Json::object()};
    r.energy_drift = rel(r.energy, e0);
    r.omega_drift = rel(r.omega, w0);
    const auto rep = check_maxwell_constraints(m, s);
    r.constraints["gauss"] = rep.gauss;
    r.constraints["trace"] = rep.trace;
    r.constraints["curl_trace"] = rep.curl_trace;
    r.constraints["gauss_fraction"] = ev.gauss_violation(s.P);
    rows.push_back(r);
  }
  write_series(c, "maxwell", m.phase_dim(), rows, e0, w0, {"gauss", "trace", "curl_trace", "gauss_fraction"});
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.constraints["gauss"].get<double>());
  std::cout << "propagate: " << rows.size() << " time points, max Gauss residual " << io::format_double(worst) << "\n";
  return kOk;
}

int cmd_propagate(const Globals& g, const config::RunConfig& c) {
  require_field_model(c, "propagate");
  return c.model == config::ModelKind::Scalar ? propagate_scalar(g, c) : propagate_maxwell(g, c);
}

// ---------------------------------------------------------------- gnh / classify

struct AssembledSystem {
  PresymplecticSystem sys;
  Json extra = Json::object();
};

AssembledSystem assemble(const config::RunConfig& c) {
  switch (c.model) {
    case config::ModelKind::Scalar:
      return {assemble_scalar_system(scalar_model(c), c.tol)};
    case config::ModelKind::Maxwell: {
      const MaxwellModel m = maxwell_model(c);
      AssembledSystem a{assemble_maxwell_system(m, c.tol)};
      a.extra["num_nodes"] = m.num_nodes();
      a.extra["num_edges"] = m.num_edges();
      a.extra["predicted_gauge_count"] = m.num_nodes() + numerical_rank(Matrix(m.grad().matrix), 1e-10 * spectral_norm(Matrix(m.grad().matrix)));
      return a;
    }
    case config::ModelKind::Raw: {
      const Matrix O = io::read_matrix(c.omega_file);
      const Matrix A = io::read_matrix(c.hessian_file);
      if (O.rows() != O.cols()) throw ShapeError("omega must be square");
      if (A.rows() != O.rows() || A.cols() != O.cols()) throw ShapeError("hessian and omega sizes differ");
      Vector b = Vector::Zero(O.rows());
      if (!c.linear_file.empty()) {
        const Matrix B = io::read_matrix(c.linear_file);
        if (B.cols() != 1 || B.rows() != O.rows()) throw ShapeError("linear term must be a column of length " + std::to_string(O.rows()));
        b = B.col(0);
      }
      return {PresymplecticSystem{PresymplecticForm(O), QuadraticHamiltonian(A, b), c.tol}};
    }
  }
  throw std::logic_error("unreachable");
}

Json class_json(const ClassificationResult& r) {
  Json j;
  j["class"] = to_string(r.label);
  j["perp_in_tangent"] = r.perp_in_tangent;
  j["tangent_in_perp"] = r.tangent_in_perp;
  j["tangent_dim"] = r.tangent_dim;
  j["perp_dim"] = r.perp_dim;
  j["intersection_dim"] = r.intersection_dim;
  j["precedence"] = "lagrangian, isotropic, second_class, first_class, mixed";
  return j;
}

int cmd_gnh(const Globals&, const config::RunConfig& c, bool class_only) {
  auto [sys, extra] = assemble(c);
  const auto res = constraint_chain(sys, c.max_steps);
  Json out;
  out["command"] = class_only ? "classify" : "gnh";
  out["model"] = config::to_string(c.model);
  out["phase_dim"] = sys.dim();
  out["tol"] = sys.tol;
  std::optional<ClassificationResult> cls;
  if (res.terminated && !res.final.is_empty()) cls = classify_submanifold(sys.form, res.final);
  if (class_only) {
    if (cls) out.update(class_json(*cls));
    else out["class"] = nullptr;
  } else {
    out["terminated"] = res.terminated;
    out["steps"] = res.steps;
    Json dims = Json::array();
    for (int d : res.dims()) dims.push_back(d);
    out["dims"] = dims;
    out["final_dim"] = res.final.dim();
    out["consistent"] = !res.final.is_empty();
    if (res.terminated && !res.final.is_empty()) out["gauge_count"] = res.gauge_count();
    else out["gauge_count"] = nullptr;
    out["classification"] = cls ? class_json(*cls) : Json(nullptr);
    for (auto& [k, v] : extra.items()) out[k] = v;
  }
  const fs::path file = c.output_dir / (class_only ? "classify.json" : "gnh.json");
  io::write_json(file, out);
  if (!res.terminated) {
    note("constraint chain did not terminate within " + std::to_string(c.max_steps) + " steps (dims so far " +
         std::to_string(res.chain.size()) + "); partial chain written to " + file.string());
    return kNoTermination;
  }
  if (class_only) {
    std::cout << (cls ? to_string(cls->label) : "empty") << "\n";
  } else {
    std::cout << "gnh: steps " << res.steps << ", final dim " << res.final.dim() << ", class "
              << (cls ? to_string(cls->label) : "empty") << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- hodge

int cmd_hodge(const Globals& g, const config::RunConfig& c) {
  if (c.grid.dim < 2) throw config::ConfigError("hodge needs grid.dim 2 or 3");
  const auto grid = make_grid(c.grid);
  const VectorBc bc = c.bc.vector;
  const HodgeProjector hp(grid, bc, HodgeOptions{PotentialGauge::ZeroMean, c.eigen()});
  const Index ne = hp.edges().size();
  Vector u;
  if (!c.input_field.empty()) {
    u = io::field_from_csv(io::read_file(c.input_field), c.input_field.string());
    if (u.size() != ne)
      throw ShapeError(c.input_field.string() + ": field has " + std::to_string(u.size()) + " entries, the " + to_string(bc) +
                       " edge space has " + std::to_string(ne));
  } else {
    std::mt19937_64 rng(g.seed);
    u = random_vector(ne, rng);
  }
  const auto d = hp.decompose(u);
  const Vector& me = hp.edges().mass();
  const double nu = mass_norm(u, me);
  const double scale = std::max(nu, 1e-300);
  auto ip = [&](const Vector& a, const Vector& b) { return std::abs(a.dot(me.cwiseProduct(b))) / (scale * scale); };
  Json out;
  out["command"] = "hodge";
  out["bc"] = to_string(bc);
  out["num_edges"] = ne;
  out["harmonic_dim"] = hp.harmonic_dim();
  out["norms"] = {{"input", nu},
                  {"longitudinal", mass_norm(d.longitudinal, me)},
                  {"harmonic", mass_norm(d.harmonic, me)},
                  {"transverse", mass_norm(d.transverse, me)}};
  out["orthogonality"] = {{"longitudinal_harmonic", ip(d.longitudinal, d.harmonic)},
                          {"longitudinal_transverse", ip(d.longitudinal, d.transverse)},
                          {"harmonic_transverse", ip(d.harmonic, d.transverse)}};
  out["reconstruction_error"] = mass_norm(d.longitudinal + d.harmonic + d.transverse - u, me) / scale;
  const auto D = build_weak_div(grid, bc);
  const Vector div_t = D.apply(d.transverse);
  out["transverse_weak_div"] = mass_norm(div_t, D.codomain.mass()) / scale;
  io::write_file_atomic(c.output_dir / "hodge_longitudinal.csv", io::field_to_csv(d.longitudinal));
  io::write_file_atomic(c.output_dir / "hodge_harmonic.csv", io::field_to_csv(d.harmonic));
  io::write_file_atomic(c.output_dir / "hodge_transverse.csv", io::field_to_csv(d.transverse));
  io::write_json(c.output_dir / "hodge.json", out);
  std::cout << "hodge: harmonic dim " << hp.harmonic_dim() << ", reconstruction error "
            << io::format_double(out["reconstruction_error"].get<double>()) << "\n";
  return kOk;
}

int run(const Globals& g, const std::string& cmd) {
  if (g.config_path.empty()) throw config::ConfigError("--config is required");
  const config::RunConfig c = config::load(g.config_path, g.overrides);
  if (cmd == "modes") return cmd_modes(g, c);
  if (cmd == "propagate") return cmd_propagate(g, c);
  if (cmd == "gnh") return cmd_gnh(g, c, false);
  if (cmd == "classify") return cmd_gnh(g, c, true);
  return cmd_hodge(g, c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GNH constraint analysis, spectral wave propagation and Hodge decomposition"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "TOML run configuration");
  app.add_option("--cache-dir", g.cache_dir, "directory for cached eigendecompositions");
  app.add_option("--threads", g.threads, "worker threads for time points")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "seed for random states");
  app.add_option("--set", g.overrides, "override a config key, e.g. --set grid.cells=32")->expected(1)->take_all();
  app.add_subcommand("modes", "eigenvalue table of the model operator");
  app.add_subcommand("propagate", "exact evolution at the configured times");
  app.add_subcommand("gnh", "constraint chain and classification report");
  app.add_subcommand("classify", "classification of the final constraint subspace only");
  app.add_subcommand("hodge", "Hodge decomposition of an edge field");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return run(g, cmd);
  } catch (const config::ConfigError& e) {
    note(std::string("config error: ") + e.what());
    return kUsage;
  } catch (const SpectralError& e) {
    note(std::string("spectral precondition failed: ") + e.what());
    return kSpectral;
  } catch (const ConstraintViolation& e) {
    note(std::string("constraint violation: ") + e.what());
    return kConstraint;
  } catch (const ShapeError& e) {
    note(std::string("shape or I/O error: ") + e.what());
    return kShape;
  } catch (const std::invalid_argument& e) {
    note(std::string("spectral precondition failed: ") + e.what());
    return kSpectral;
  } catch (const fs::filesystem_error& e) {
    note(std::string("I/O error: ") + e.what());
    return kShape;
  } catch (const std::exception& e) {
    note(std::string("error: ") + e.what());
    return kUsage;
  }
}
