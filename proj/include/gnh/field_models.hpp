#pragma once

/// Discrete scalar wave and Maxwell models: assembly into presymplectic
/// systems, exact evolution, constraint reports and gauge transformations.
///
/// Scalar coordinates are (Q, P) on the node space of the bc, with
/// omega = Q1^T M P2 - P1^T M Q2 and H = 1/2 P^T M P + 1/2 Q^T K Q.
///
/// Maxwell coordinates are (Q_perp, Q, P) with Q_perp on the bc node space and
/// Q, P on the bc edge space, omega = Q1^T M_e P2 - P1^T M_e Q2 and
/// H = 1/2 P^T M_e P - P^T M_e G Q_perp + 1/2 Q^T C^T M_f C Q.
/// Hamilton's equations give dQ/dt = P - G Q_perp, dP/dt = -curl-curl Q, and
/// the Gauss constraint G^T M_e P = 0.

#include "gnh/hodge.hpp"
#include "gnh/presym.hpp"

namespace gnh {

enum class FieldSign { Lorentzian, Euclidean };

class ScalarModel {
 public:
  ScalarModel(GridPtr g, BoundaryConditionSpec bc, FieldSign sign = FieldSign::Lorentzian)
      : grid_(std::move(g)), bc_(std::move(bc)), sign_(sign) {
    nodes_ = node_space(grid_, node_subset(bc_.scalar));
    K_ = scalar_stiffness(grid_, bc_);
    if (sign_ == FieldSign::Euclidean) K_ = -K_;
  }

  const GridPtr& grid() const { return grid_; }
  const BoundaryConditionSpec& bc() const { return bc_; }
  FieldSign sign() const { return sign_; }
  const EntitySpace& nodes() const { return nodes_; }
  const SparseMatrix& stiffness() const { return K_; }
  const Vector& mass() const { return nodes_.mass(); }
  Index size() const { return nodes_.size(); }

  /// -M^{-1} K, the operator whose negative drives the evolution.
  DiscreteOperator laplacian() const { return {nodes_, nodes_, SparseMatrix(-(diag(mass().cwiseInverse()) * K_))}; }

  SpectralDecomposition decompose(const EigenOptions& opts = {}) const { return eigendecompose(K_, mass(), opts); }

 private:
  GridPtr grid_;
  BoundaryConditionSpec bc_;
  FieldSign sign_;
  EntitySpace nodes_;
  SparseMatrix K_;
};

using ScalarState = WaveState;

inline PresymplecticSystem assemble_scalar_system(const ScalarModel& m, double tol = -1.0) {
  const Index n = m.size();
  const Matrix M = m.mass().asDiagonal();
  Matrix O = Matrix::Zero(2 * n, 2 * n);
  O.topRightCorner(n, n) = M;
  O.bottomLeftCorner(n, n) = -M;
  Matrix A = Matrix::Zero(2 * n, 2 * n);
  A.topLeftCorner(n, n) = Matrix(m.stiffness());
  A.bottomRightCorner(n, n) = M;
  return {PresymplecticForm(O), QuadraticHamiltonian(A, Vector::Zero(2 * n)), tol};
}

inline double scalar_energy(const ScalarModel& m, const ScalarState& s) { return wave_energy(m.stiffness(), m.mass(), s); }

inline ScalarState evolve_scalar(const SpectralDecomposition& d, const ScalarState& s, double t) { return propagate(d, s, t); }

struct ScalarConstraintReport {
  /// gamma_n(grad Q) - B Q at boundary nodes; reported, never enforced.
  Vector robin_residual;
  double robin_norm = 0.0;
};

inline ScalarConstraintReport check_scalar_constraints(const ScalarModel& m, const ScalarState& s) {
  ScalarConstraintReport r;
  if (m.bc().scalar != ScalarBc::Robin) return r;
  const auto g = m.grid();
  const Vector Qfull = m.nodes().extend(s.Q);
  const Vector flux = build_trace(g, TraceKind::Normal).apply(build_grad(g).apply(Qfull));
  const auto bnd = node_space(g, Subset::Boundary);
  r.robin_residual.resize(bnd.size());
  const auto& B = m.bc().robin_b;
  for (int k = 0; k < bnd.size(); ++k) {
    const double b = B.size() == 1 ? B[0] : B[k];
    r.robin_residual(k) = flux(k) - b * Qfull(bnd.entities()[k]);
  }
  r.robin_norm = r.robin_residual.norm();
  return r;
}

struct MaxwellState {
  Vector Qperp;
  Vector Q;
  Vector P;
  double t = 0.0;
};

class MaxwellModel {
 public:
  MaxwellModel(GridPtr g, VectorBc bc) : grid_(std::move(g)), bc_(bc) {
    if (grid_->dim() < 2) throw std::invalid_argument("Maxwell model needs a 2-D or 3-D grid");
    grad_ = build_grad(grid_, node_subset(bc_), edge_subset(bc_));
    curl_ = build_curl(grid_, edge_subset(bc_));
    Kcc_ = gnh::curl_curl_stiffness(grid_, bc_);
    div_ = build_weak_div(grid_, bc_);
  }

  const GridPtr& grid() const { return grid_; }
  VectorBc bc() const { return bc_; }
  const EntitySpace& nodes() const { return grad_.domain; }
  const EntitySpace& edges() const { return grad_.codomain; }
  const DiscreteOperator& grad() const { return grad_; }
  const DiscreteOperator& curl() const { return curl_; }
  const DiscreteOperator& weak_div() const { return div_; }
  const SparseMatrix& curl_curl_stiffness() const { return Kcc_; }
  Index num_nodes() const { return nodes().size(); }
  Index num_edges() const { return edges().size(); }
  Index phase_dim() const { return num_nodes() + 2 * num_edges(); }

  Vector pack(const MaxwellState& s) const {
    check(s);
    Vector x(phase_dim());
    x << s.Qperp, s.Q, s.P;
    return x;
  }

  MaxwellState unpack(const Vector& x, double t = 0.0) const {
    if (x.size() != phase_dim()) throw ShapeError("Maxwell phase vector has wrong length");
    const Index nn = num_nodes(), ne = num_edges();
    return {x.head(nn), x.segment(nn, ne), x.tail(ne), t};
  }

  void check(const MaxwellState& s) const {
    if (s.Qperp.size() != num_nodes() || s.Q.size() != num_edges() || s.P.size() != num_edges())
      throw ShapeError("Maxwell state sizes do not match the model (" + std::to_string(num_nodes()) + " nodes, " +
                       std::to_string(num_edges()) + " edges)");
  }

 private:
  GridPtr grid_;
  VectorBc bc_;
  DiscreteOperator grad_, curl_, div_;
  SparseMatrix Kcc_;
};

inline PresymplecticSystem assemble_maxwell_system(const MaxwellModel& m, double tol = -1.0) {
  const Index nn = m.num_nodes(), ne = m.num_edges(), n = m.phase_dim();
  const Matrix Me = m.edges().mass().asDiagonal();
  const Matrix MeG = Me * Matrix(m.grad().matrix);
  Matrix O = Matrix::Zero(n, n);
  O.block(nn, nn + ne, ne, ne) = Me;
  O.block(nn + ne, nn, ne, ne) = -Me;
  Matrix A = Matrix::Zero(n, n);
  A.block(nn + ne, nn + ne, ne, ne) = Me;
  A.block(nn + ne, 0, ne, nn) = -MeG;
  A.block(0, nn + ne, nn, ne) = -MeG.transpose();
  A.block(nn, nn, ne, ne) = Matrix(m.curl_curl_stiffness());
  return {PresymplecticForm(O), QuadraticHamiltonian(A, Vector::Zero(n)), tol};
}

/// Velocity-phase-space formulation in (Q_perp, Q, V_perp, V) with
/// omega_L(x1, x2) = Q1^T M_e (V2 + G Q_perp2) - (V1 + G Q_perp1)^T M_e Q2 and
/// E = 1/2 V^T M_e V + 1/2 Q^T C^T M_f C Q - 1/2 (G Q_perp)^T M_e (G Q_perp).
inline PresymplecticSystem assemble_maxwell_lagrangian_system(const MaxwellModel& m, double tol = -1.0) {
  const Index nn = m.num_nodes(), ne = m.num_edges(), n = 2 * (nn + ne);
  const Matrix Me = m.edges().mass().asDiagonal();
  const Matrix G = Matrix(m.grad().matrix);
  const Index q = nn, v = 2 * nn + ne;
  Matrix O = Matrix::Zero(n, n);
  O.block(q, v, ne, ne) = Me;
  O.block(v, q, ne, ne) = -Me;
  O.block(q, 0, ne, nn) = Me * G;
  O.block(0, q, nn, ne) = -(Me * G).transpose();
  Matrix A = Matrix::Zero(n, n);
  A.block(v, v, ne, ne) = Me;
  A.block(q, q, ne, ne) = Matrix(m.curl_curl_stiffness());
  A.block(0, 0, nn, nn) = -G.transpose() * Me * G;
  return {PresymplecticForm(O), QuadraticHamiltonian(A, Vector::Zero(n)), tol};
}

/// Fiber map (Q_perp, Q, V_perp, V) -> (Q_perp, Q, P_perp, P) = (Q_perp, Q, V_perp, V + G Q_perp).
inline Matrix maxwell_fiber_map(const MaxwellModel& m) {
  const Index nn = m.num_nodes(), ne = m.num_edges(), n = 2 * (nn + ne);
  Matrix F = Matrix::Identity(n, n);
  F.block(2 * nn + ne, 0, ne, nn) = Matrix(m.grad().matrix);
  return F;
}

inline double maxwell_energy(const MaxwellModel& m, const MaxwellState& s) {
  m.check(s);
  const Vector& me = m.edges().mass();
  return 0.5 * s.P.dot(me.cwiseProduct(s.P)) - s.P.dot(me.cwiseProduct(m.grad().apply(s.Qperp))) +
         0.5 * s.Q.dot(m.curl_curl_stiffness() * s.Q);
}

/// omega between two Maxwell states.
inline double maxwell_symplectic(const MaxwellModel& m, const MaxwellState& a, const MaxwellState& b) {
  const Vector& me = m.edges().mass();
  return a.Q.dot(me.cwiseProduct(b.P)) - a.P.dot(me.cwiseProduct(b.Q));
}

struct MaxwellConstraintReport {
  /// ||D P|| in the node mass norm.
  double gauss = 0.0;
  /// Relative bc: tangential trace of P on boundary edges. Absolute bc: normal trace of P.
  double trace = 0.0;
  /// Natural boundary term of the curl energy on boundary edges; informational only.
  double curl_trace = 0.0;
  /// Scale used for pass/fail: ||P||_{M_e} / h_min.
  double reference = 0.0;

  bool satisfied(double ctol) const { return gauss <= ctol * reference && trace <= ctol * reference; }
};

inline MaxwellConstraintReport check_maxwell_constraints(const MaxwellModel& m, const MaxwellState& s) {
  m.check(s);
  const auto g = m.grid();
  MaxwellConstraintReport r;
  const Vector dp = m.weak_div().apply(s.P);
  r.gauss = std::sqrt(dp.dot(m.nodes().mass().cwiseProduct(dp)));
  const Vector Pfull = m.edges().extend(s.P);
  if (m.bc() == VectorBc::Relative) {
    r.trace = build_trace(g, TraceKind::Tangential).apply(Pfull).norm();
  } else {
    const auto T = build_trace(g, TraceKind::Normal);
    const Vector gn = T.apply(Pfull);
    double acc = 0.0;
    for (int k = 0; k < gn.size(); ++k) acc += g->surface_weights()(T.codomain.entities()[k]) * gn(k) * gn(k);
    r.trace = std::sqrt(acc);
    const Vector natural = m.edges().extend(m.curl_curl_stiffness() * s.Q);
    r.curl_trace = build_trace(g, TraceKind::Tangential).apply(natural).norm();
  }
  r.reference = std::sqrt(s.P.dot(m.edges().mass().cwiseProduct(s.P))) / g->min_spacing();
  return r;
}

/// Q -> Q + grad(phi), Q_perp -> Q_perp + chi. phi may be given on the bc node
/// space or on all nodes; for relative bc it must vanish on the boundary.
inline MaxwellState gauge_transform(const MaxwellModel& m, const MaxwellState& s, const Vector& phi, const Vector& chi) {
  m.check(s);
  Vector p = phi;
  if (phi.size() != m.num_nodes()) {
    const auto all = node_space(m.grid());
    if (phi.size() != all.size()) throw ShapeError("gauge parameter has wrong length");
    for (int i = 0; i < all.size(); ++i)
      if (m.grid()->nodes().boundary[i] && m.bc() == VectorBc::Relative && phi(i) != 0.0)
        throw std::invalid_argument("gauge parameter must vanish on the boundary for relative bc");
    p = m.nodes().restrict(phi);
  }
  if (chi.size() != m.num_nodes()) throw ShapeError("gauge rate has wrong length");
  MaxwellState out = s;
  out.Q += m.grad().apply(p);
  out.Qperp += chi;
  return out;
}

struct MaxwellEvolutionOptions {
  EigenOptions eigen;
  /// Largest admissible longitudinal fraction ||P_L|| / ||P|| of the momentum.
  double ctol = 1e-8;
  ComplementPolicy complement = ComplementPolicy::Refuse;
};

/// Transverse and harmonic mode coefficients: the gauge-invariant content of a state.
struct ReducedMaxwellState {
  Vector qT, pT;
  Vector qh, ph;
  double t = 0.0;
};

class MaxwellEvolution {
 public:
  MaxwellEvolution(const MaxwellModel& m, MaxwellEvolutionOptions opts = {})
      : model_(m), opts_(opts), hodge_(m.grid(), m.bc(), HodgeOptions{PotentialGauge::ZeroMean, opts.eigen}),
        modes_(transverse_modes(m.grid(), m.bc(), opts.eigen)) {}

  /// With transverse modes computed elsewhere, e.g. loaded from a cache.
  MaxwellEvolution(const MaxwellModel& m, SpectralDecomposition modes, MaxwellEvolutionOptions opts = {})
      : model_(m), opts_(opts), hodge_(m.grid(), m.bc(), HodgeOptions{PotentialGauge::ZeroMean, opts.eigen}),
        modes_(std::move(modes)) {
    if (modes_.size() != m.num_edges()) throw ShapeError("transverse modes do not match the model's edge space");
  }

  const MaxwellModel& model() const { return model_; }
  const HodgeProjector& hodge() const { return hodge_; }
  const SpectralDecomposition& transverse() const { return modes_; }

  /// ||P_L||_M / ||P||_M, zero for P = 0.
  double gauss_violation(const Vector& P) const {
    const Vector& me = model_.edges().mass();
    const Vector PL = hodge_.longitudinal(P);
    const double np = std::sqrt(P.dot(me.cwiseProduct(P)));
    return np == 0.0 ? 0.0 : std::sqrt(PL.dot(me.cwiseProduct(PL))) / np;
  }

  void require_gauss(const MaxwellState& s) const {
    const double v = gauss_violation(s.P);
    if (v > opts_.ctol) {
      std::ostringstream msg;
      msg.precision(6);
      msg << "state violates the Gauss constraint: longitudinal momentum fraction " << v << " exceeds ctol "
          << opts_.ctol << " (weak-div residual " << check_maxwell_constraints(model_, s).gauss << ")";
      throw ConstraintViolation(msg.str());
    }
  }

  /// Exact evolution by time t. chi is the Q_perp rate of the chosen gauge (zero if empty).
  MaxwellState evolve(const MaxwellState& s, double t, const Vector& chi = Vector()) const {
    model_.check(s);
    require_gauss(s);
    if (t == 0.0) return s;
    const Vector rate = chi.size() == 0 ? Vector::Zero(model_.num_nodes()) : chi;
    if (rate.size() != model_.num_nodes()) throw ShapeError("gauge rate has wrong length");

    const auto q = hodge_.decompose(s.Q);
    const Vector Ph = hodge_.harmonic(s.P);
    const Vector PT = s.P - Ph - hodge_.longitudinal(s.P);
    const double scale = std::max(modes_.mass_norm(s.Q), modes_.mass_norm(s.P));
    check_span(q.transverse, scale);
    check_span(PT, scale);
    const auto T = propagate(modes_, {q.transverse, PT, 0.0}, t, ComplementPolicy::Drop);

    const auto& G = model_.grad().matrix;
    MaxwellState out;
    out.t = s.t + t;
    out.Qperp = s.Qperp + t * rate;
    out.Q = q.longitudinal - t * (G * s.Qperp) - 0.5 * t * t * (G * rate) + q.harmonic + t * Ph + T.Q;
    out.P = Ph + T.V;
    return out;
  }

  ReducedMaxwellState reduce(const MaxwellState& s) const {
    model_.check(s);
    require_gauss(s);
    const Vector& me = model_.edges().mass();
    const Matrix& H = hodge_.harmonic_basis();
    ReducedMaxwellState r;
    r.t = s.t;
    r.qh = H.transpose() * me.cwiseProduct(s.Q);
    r.ph = H.transpose() * me.cwiseProduct(s.P);
    const Vector QT = hodge_.decompose(s.Q).transverse;
    const Vector PT = s.P - H * r.ph - hodge_.longitudinal(s.P);
    r.qT = modes_.coefficients(QT);
    r.pT = modes_.coefficients(PT);
    return r;
  }

  /// Gauge-fixed representative: Q_perp = 0, no longitudinal part in Q.
  MaxwellState unreduce(const ReducedMaxwellState& r) const {
    const Matrix& H = hodge_.harmonic_basis();
    MaxwellState s;
    s.t = r.t;
    s.Qperp = Vector::Zero(model_.num_nodes());
    s.Q = modes_.eigenvectors * r.qT + H * r.qh;
    s.P = modes_.eigenvectors * r.pT + H * r.ph;
    return s;
  }

  ReducedMaxwellState evolve_reduced(const ReducedMaxwellState& r, double t) const {
    ReducedMaxwellState out = r;
    out.t = r.t + t;
    out.qh = r.qh + t * r.ph;
    for (Index k = 0; k < r.qT.size(); ++k) {
      const double w = std::sqrt(modes_.eigenvalues(k));
      const double c = std::cos(w * t), sn = std::sin(w * t);
      out.qT(k) = c * r.qT(k) + sn / w * r.pT(k);
      out.pT(k) = -w * sn * r.qT(k) + c * r.pT(k);
    }
    return out;
  }

 private:
  void check_span(const Vector& x, double scale) const {
    if (opts_.complement == ComplementPolicy::Drop || modes_.modes() == 0) {
      if (modes_.modes() == 0 && opts_.complement == ComplementPolicy::Refuse && modes_.mass_norm(x) > modes_.complement_tol * std::max(scale, 1e-300))
        throw SpectralError("transverse field present but no transverse modes were computed");
      return;
    }
    const Vector rest = x - modes_.eigenvectors * modes_.coefficients(x);
    if (modes_.mass_norm(rest) > modes_.complement_tol * std::max(scale, 1e-300))
      throw SpectralError("transverse field has components outside the computed modes; raise the mode budget or "
                          "use ComplementPolicy::Drop");
  }

  MaxwellModel model_;
  MaxwellEvolutionOptions opts_;
  HodgeProjector hodge_;
  SpectralDecomposition modes_;
};

}  // namespace gnh
