#pragma once

// Penalized least squares on a random subset of kernel basis functions:
//
//   minimize  |y - T d - K c|^2 + n*lambda * c' Q c
//
// where T holds the null-space functions at the data, K the kernel sections
// at q basis points, and Q the kernel Gram of the basis points. Each
// evaluation of the hat map costs O(n q^2) for the cross products plus
// O(q^3) for the factorization.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssanova/dataset.hpp"
#include "ssanova/errors.hpp"
#include "ssanova/model.hpp"

namespace ssanova {

struct BasisSelection {
  std::vector<std::size_t> indices;  // sorted, unique rows of the dataset
  std::uint64_t seed = 0;

  std::size_t size() const { return indices.size(); }
};

/// q = round(coef * n^exponent), the basis-count rule of the fast algorithm.
inline std::size_t basis_count(std::size_t n, double coef = 10.0, double exponent = 2.0 / 9.0) {
  detail::require(coef > 0 && exponent > 0 && exponent < 1, "solver: invalid basis-count rule");
  return static_cast<std::size_t>(std::llround(coef * std::pow(static_cast<double>(n), exponent)));
}

inline BasisSelection select_basis(std::size_t n, std::size_t q, std::uint64_t seed,
                                   std::size_t null_dim = 1) {
  detail::require(q > null_dim && q <= n,
                  "solver: basis size " + std::to_string(q) + " must lie in (" +
                      std::to_string(null_dim) + ", " + std::to_string(n) + "]");
  BasisSelection out;
  out.seed = seed;
  out.indices = sample_indices(n, q, seed);
  return out;
}

/// Per-term kernel blocks, so that K and Q can be recombined for any theta
/// without touching the kernels again.
struct ComponentBlocks {
  Eigen::MatrixXd T;                     // n x M
  std::vector<Eigen::MatrixXd> K_parts;  // S blocks, n x q
  std::vector<Eigen::MatrixXd> Q_parts;  // S blocks, q x q
  Eigen::VectorXd mean_diag;             // mean over rows of R_delta(x_i, x_i)
  BasisSelection basis;

  std::size_t rows() const { return static_cast<std::size_t>(T.rows()); }
  std::size_t null_dim() const { return static_cast<std::size_t>(T.cols()); }
  std::size_t penalties() const { return K_parts.size(); }

  Eigen::MatrixXd combine_K(const Eigen::VectorXd& theta) const { return combine(K_parts, theta); }
  Eigen::MatrixXd combine_Q(const Eigen::VectorXd& theta) const { return combine(Q_parts, theta); }

 private:
  Eigen::MatrixXd combine(const std::vector<Eigen::MatrixXd>& parts,
                          const Eigen::VectorXd& theta) const {
    detail::require(static_cast<std::size_t>(theta.size()) == parts.size(),
                    "solver: theta has " + std::to_string(theta.size()) + " entries, expected " +
                        std::to_string(parts.size()));
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(parts.front().rows(), parts.front().cols());
    for (std::size_t s = 0; s < parts.size(); ++s) {
      detail::require(theta(static_cast<Eigen::Index>(s)) > 0 &&
                          std::isfinite(theta(static_cast<Eigen::Index>(s))),
                      "solver: theta entries must be positive and finite");
      out += theta(static_cast<Eigen::Index>(s)) * parts[s];
    }
    return out;
  }
};

namespace detail {

inline void check_null_rank(const Eigen::MatrixXd& T) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(T);
  if (qr.rank() < T.cols()) {
    throw InputError("solver: null-space design has rank " + std::to_string(qr.rank()) +
                     " < " + std::to_string(T.cols()) +
                     " (constant or collinear predictor column?)");
  }
}

}  // namespace detail

inline ComponentBlocks assemble_blocks(const Dataset& data, const ModelSpec& spec,
                                       const BasisSelection& basis) {
  detail::require(data.dims() == spec.dims(), "solver: dataset and model disagree on predictors");
  const std::size_t n = data.size();
  const std::size_t q = basis.size();
  const std::size_t M = spec.null_dim();
  const std::size_t S = spec.num_penalties();
  detail::require(S >= 1, "solver: model has no penalized terms");
  detail::require(q > M && q <= n, "solver: basis size out of range");
  for (auto idx : basis.indices) detail::require(idx < n, "solver: basis index out of range");

  ComponentBlocks out;
  out.basis = basis;
  out.T.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(M));
  for (std::size_t i = 0; i < n; ++i) out.T.row(static_cast<Eigen::Index>(i)) = null_basis(spec, data.row(i));
  detail::check_null_rank(out.T);

  out.mean_diag.resize(static_cast<Eigen::Index>(S));
  for (std::size_t s = 0; s < S; ++s) {
    const auto& term = spec.penalized_terms[s];
    Eigen::MatrixXd Ks(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
    double diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = data.row(i);
      for (std::size_t j = 0; j < q; ++j) {
        Ks(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            term_kernel(spec, term, xi, data.row(basis.indices[j]));
      }
      diag += term_kernel(spec, term, xi, xi);
    }
    Eigen::MatrixXd Qs(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
    for (std::size_t j = 0; j < q; ++j) Qs.row(static_cast<Eigen::Index>(j)) = Ks.row(static_cast<Eigen::Index>(basis.indices[j]));
    out.mean_diag(static_cast<Eigen::Index>(s)) = diag / static_cast<double>(n);
    out.K_parts.push_back(std::move(Ks));
    out.Q_parts.push_back(std::move(Qs));
  }
  return out;
}

struct Design {
  Eigen::MatrixXd T, K, Q;
};

inline Design assemble(const Dataset& data, const ModelSpec& spec, const BasisSelection& basis,
                       const Eigen::VectorXd& theta) {
  const auto blocks = assemble_blocks(data, spec, basis);
  return {blocks.T, blocks.combine_K(theta), blocks.combine_Q(theta)};
}

struct Coefficients {
  Eigen::VectorXd d;
  Eigen::VectorXd c;
};

/// Residual sum of squares, hat-matrix trace and GCV score at one n*lambda.
struct Evaluation {
  double rss = 0.0;
  double trace = 0.0;
  double gcv = 0.0;
};

inline double gcv_from(double rss, double trace, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double denom = nn - trace;
  if (!(denom > 1e-10 * nn)) return std::numeric_limits<double>::infinity();
  return nn * rss / (denom * denom);
}

/// Closed-form RSS and trace over n*lambda from one SVD. With the design
/// reduced to R (X = Q_x R) and B = [R; sqrt(tau) E] = U_B R_B, where
/// E'E = P = diag(0, Q), the singular values s_i of R R_B^{-1} give
///   tr A = sum f_i,   RSS = rss_perp + sum w_i^2 (1 - f_i)^2,
///   f_i = s_i^2 / (s_i^2 + rho (1 - s_i^2)),  rho = n*lambda / tau.
/// Every RSS term is nonnegative, so nothing cancels near interpolation.
class HatSpectrum {
 public:
  HatSpectrum() = default;
  HatSpectrum(Eigen::VectorXd s2, Eigen::VectorXd w2, double tau, double rss_perp, std::size_t n)
      : s2_(std::move(s2)), w2_(std::move(w2)), tau_(tau), rss_perp_(rss_perp), n_(n) {}

  double trace(double nlambda) const {
    const double rho = nlambda / tau_;
    double tr = 0.0;
    for (Eigen::Index i = 0; i < s2_.size(); ++i) tr += s2_(i) / (s2_(i) + rho * (1.0 - s2_(i)));
    return tr;
  }

  double rss(double nlambda) const {
    const double rho = nlambda / tau_;
    double r = rss_perp_;
    for (Eigen::Index i = 0; i < s2_.size(); ++i) {
      const double g = rho * (1.0 - s2_(i));
      const double shrink = g / (s2_(i) + g);
      r += w2_(i) * shrink * shrink;
    }
    return r;
  }

  double gcv(double nlambda) const { return gcv_from(rss(nlambda), trace(nlambda), n_); }

 private:
  Eigen::VectorXd s2_, w2_;
  double tau_ = 1.0;
  double rss_perp_ = 0.0;
  std::size_t n_ = 0;
};

/// One (T, K, Q, y) problem, reduced once by a QR factorization of [T K]
/// and reused across n*lambda. Each n*lambda is then solved as the
/// augmented least-squares problem [R; sqrt(n*lambda) E] beta ~ [z; 0],
/// which never forms the squared cross products.
class PenalizedSystem {
 public:
  PenalizedSystem(Eigen::MatrixXd T, Eigen::MatrixXd K, const Eigen::MatrixXd& Q,
                  const Eigen::VectorXd& y)
      : T_(std::move(T)), K_(std::move(K)) {
    const auto n = T_.rows();
    detail::require(K_.rows() == n && y.size() == n, "solver: T, K and y disagree on rows");
    detail::require(Q.rows() == K_.cols() && Q.cols() == K_.cols(),
                    "solver: Q must be q x q with q = columns of K");
    detail::require(T_.cols() >= 1 && K_.cols() >= 1, "solver: empty design");
    n_ = static_cast<std::size_t>(n);
    const auto M = T_.cols();
    const auto q = K_.cols();

    // Q = V diag(ev) V'. Directions with eigenvalues at roundoff level carry
    // functions of numerically zero norm and are dropped, so c = V_r a and
    // the penalty is ||diag(sqrt(ev_r)) a||^2.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> qeig(0.5 * (Q + Q.transpose()));
    if (qeig.info() != Eigen::Success) throw NumericalError("solver: eigen-decomposition of Q failed");
    const Eigen::VectorXd ev = qeig.eigenvalues();
    const double top = ev.maxCoeff();
    if (!(top > 0)) throw NumericalError("solver: kernel Gram of the basis points is zero");
    const double floor = static_cast<double>(q) * std::numeric_limits<double>::epsilon() * top;
    Eigen::Index keep = 0;
    while (keep < q && ev(q - 1 - keep) > floor) ++keep;
    V_ = qeig.eigenvectors().rightCols(keep);
    const Eigen::VectorXd root = ev.tail(keep).cwiseSqrt();
    const auto p = M + keep;
    E_ = Eigen::MatrixXd::Zero(keep, p);
    E_.rightCols(keep) = root.asDiagonal();
    qtrace_ = ev.tail(keep).sum();

    // The constant is unpenalized, so shifting y by a constant only moves d0.
    centered_ = (T_.col(0).array() == 1.0).all();
    mean_ = centered_ ? y.mean() : 0.0;

    X_.resize(n, p);
    X_ << T_, K_ * V_;
    qr_.compute(X_);
    r_ = std::min<Eigen::Index>(n, p);
    R_ = qr_.matrixQR().topRows(r_).template triangularView<Eigen::Upper>();
    const Eigen::VectorXd qy = qr_.householderQ().adjoint() * (y.array() - mean_).matrix();
    z_ = qy.head(r_);
    rss_perp_ = qy.tail(n - r_).squaredNorm();
  }

  std::size_t rows() const { return n_; }
  std::size_t null_dim() const { return static_cast<std::size_t>(T_.cols()); }
  std::size_t basis() const { return static_cast<std::size_t>(K_.cols()); }
  const Eigen::MatrixXd& T() const { return T_; }
  const Eigen::MatrixXd& K() const { return K_; }

  Coefficients solve(double nlambda) const {
    const auto beta = augmented(nlambda).solve(z_);
    Coefficients out{beta.head(T_.cols()), V_ * beta.tail(V_.cols())};
    if (centered_) out.d(0) += mean_;
    return out;
  }

  Eigen::VectorXd fitted(const Coefficients& coef) const { return T_ * coef.d + K_ * coef.c; }

  /// Hat map applied to an arbitrary response vector.
  Eigen::VectorXd apply(const Eigen::VectorXd& v, double nlambda) const {
    detail::require(static_cast<std::size_t>(v.size()) == n_, "solver: vector length mismatch");
    const Eigen::VectorXd qv = qr_.householderQ().adjoint() * v;
    return X_ * augmented(nlambda).solve(qv.head(r_));
  }

  /// Exact RSS, trace and GCV at one n*lambda.
  Evaluation evaluate(double nlambda) const {
    const auto aug = augmented(nlambda);
    const Eigen::VectorXd beta = aug.solve(z_);
    Evaluation ev;
    ev.rss = rss_perp_ + (z_ - R_ * beta).squaredNorm();
    ev.trace = aug.hat_trace(R_);
    ev.gcv = gcv_from(ev.rss, ev.trace, n_);
    return ev;
  }

  double trace(double nlambda) const { return evaluate(nlambda).trace; }

  HatSpectrum spectrum() const {
    const auto p = X_.cols();
    const double tau = qtrace_ > 0 ? std::max(R_.squaredNorm(), 1e-300) / qtrace_ : 1.0;
    Eigen::MatrixXd B(r_ + E_.rows(), p);
    B << R_, std::sqrt(tau) * E_;
    Eigen::HouseholderQR<Eigen::MatrixXd> bqr(B);
    const Eigen::MatrixXd RB = bqr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    // U1 = R * RB^{-1}
    Eigen::MatrixXd U1 = RB.transpose().triangularView<Eigen::Lower>().solve(R_.transpose()).transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(U1, Eigen::ComputeThinU);
    if (svd.info() != Eigen::Success) throw NumericalError("solver: singular value decomposition failed");
    const Eigen::VectorXd s2 = svd.singularValues().array().square().min(1.0);
    const Eigen::VectorXd w = svd.matrixU().transpose() * z_;
    Eigen::VectorXd w2 = Eigen::VectorXd::Zero(s2.size());
    w2.head(std::min(w.size(), s2.size())) = w.head(std::min(w.size(), s2.size())).array().square();
    double perp = rss_perp_;
    if (w.size() > s2.size()) perp += w.tail(w.size() - s2.size()).squaredNorm();
    return HatSpectrum(s2, w2, tau, perp, n_);
  }

 private:
  struct Augmented {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr;
    Eigen::MatrixXd Rg;
    Eigen::Index r = 0;

    Eigen::VectorXd solve(const Eigen::VectorXd& z) const {
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(qr.rows());
      rhs.head(r) = z;
      rhs.applyOnTheLeft(qr.householderQ().adjoint());
      return Rg.triangularView<Eigen::Upper>().solve(rhs.head(Rg.rows()));
    }

    /// ||R Rg^{-1}||_F^2 = tr(R G^{-1} R').
    double hat_trace(const Eigen::MatrixXd& R) const {
      const Eigen::MatrixXd Y =
          Rg.transpose().triangularView<Eigen::Lower>().solve(R.transpose());
      return Y.squaredNorm();
    }
  };

  static void check_lambda(double nlambda) {
    detail::require(nlambda > 0 && std::isfinite(nlambda), "solver: n*lambda must be positive");
  }

  Augmented augmented(double nlambda) const {
    check_lambda(nlambda);
    const auto p = X_.cols();
    Eigen::MatrixXd A(r_ + E_.rows(), p);
    A << R_, std::sqrt(nlambda) * E_;
    Augmented out;
    out.r = r_;
    out.qr.compute(A);
    out.Rg = out.qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    const Eigen::VectorXd diag = out.Rg.diagonal().cwiseAbs();
    if (!(diag.minCoeff() > 1e-14 * diag.maxCoeff())) {
      throw NumericalError("solver: penalized system is singular");
    }
    return out;
  }

  Eigen::MatrixXd T_, K_, V_, X_, E_, R_;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::Index r_ = 0;
  Eigen::VectorXd z_;
  double rss_perp_ = 0.0;
  double qtrace_ = 0.0;
  double mean_ = 0.0;
  bool centered_ = false;
  std::size_t n_ = 0;
};

inline Coefficients solve_penalized(const Eigen::MatrixXd& T, const Eigen::MatrixXd& K,
                                    const Eigen::MatrixXd& Q, const Eigen::VectorXd& y,
                                    double nlambda) {
  return PenalizedSystem(T, K, Q, y).solve(nlambda);
}

/// Trace of the hat matrix A and the map y -> A y.
struct HatMap {
  double trace = 0.0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;
};

inline HatMap hat_trace(const Eigen::MatrixXd& T, const Eigen::MatrixXd& K,
                        const Eigen::MatrixXd& Q, double nlambda) {
  auto sys = std::make_shared<PenalizedSystem>(T, K, Q, Eigen::VectorXd::Zero(T.rows()));
  HatMap out;
  out.trace = sys->trace(nlambda);
  out.apply = [sys, nlambda](const Eigen::VectorXd& v) { return sys->apply(v, nlambda); };
  return out;
}

/// I - A(lambda) = b*lambda * Z (D + b*lambda I)^{-1} Z' for a full-basis
/// problem of size b.
struct EigenSystem {
  Eigen::MatrixXd Z;  // b x (b - M), orthonormal columns, Z'T = 0
  Eigen::VectorXd D;  // eigenvalues of Z'KZ, ascending
};

inline EigenSystem demmler_reinsch(const Eigen::MatrixXd& T, const Eigen::MatrixXd& K_full) {
  const auto b = T.rows();
  const auto M = T.cols();
  detail::require(K_full.rows() == b && K_full.cols() == b,
                  "solver: Demmler-Reinsch needs the square full-basis kernel matrix");
  detail::require(b > M, "solver: Demmler-Reinsch needs more points than null-space functions");
  detail::check_null_rank(T);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(T);
  const Eigen::MatrixXd Qfull = qr.householderQ();
  const Eigen::MatrixXd Z0 = Qfull.rightCols(b - M);
  Eigen::MatrixXd inner = Z0.transpose() * K_full * Z0;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner);
  if (eig.info() != Eigen::Success) throw NumericalError("solver: eigen-decomposition failed");
  return {Z0 * eig.eigenvectors(), eig.eigenvalues()};
}

struct SmoothingParams {
  double log10_nlambda = 0.0;
  Eigen::VectorXd log10_theta;

  double nlambda() const { return std::pow(10.0, log10_nlambda); }
  Eigen::VectorXd theta() const {
    return log10_theta.unaryExpr([](double v) { return std::pow(10.0, v); });
  }

  static SmoothingParams make(double nlambda, const Eigen::VectorXd& theta) {
    detail::require(nlambda > 0 && std::isfinite(nlambda), "solver: n*lambda must be positive");
    SmoothingParams p;
    p.log10_nlambda = std::log10(nlambda);
    p.log10_theta = theta.unaryExpr([](double v) {
      detail::require(v > 0 && std::isfinite(v), "solver: theta entries must be positive");
      return std::log10(v);
    });
    return p;
  }
};

struct FitResult {
  Eigen::VectorXd d;
  Eigen::VectorXd c;
  Eigen::VectorXd fitted;
  double trace = 0.0;
  double gcv = 0.0;
  SmoothingParams params;
  BasisSelection basis;
  RowMatrix basis_rows;  // basis points on the kernel scale
};

inline FitResult fit(const Dataset& data, const ComponentBlocks& blocks,
                     const SmoothingParams& params) {
  const Eigen::VectorXd theta = params.theta();
  PenalizedSystem sys(blocks.T, blocks.combine_K(theta), blocks.combine_Q(theta), data.y);
  FitResult out;
  const double nl = params.nlambda();
  const auto coef = sys.solve(nl);
  out.d = coef.d;
  out.c = coef.c;
  out.fitted = sys.fitted(coef);
  const auto ev = sys.evaluate(nl);
  out.trace = ev.trace;
  out.gcv = ev.gcv;
  out.params = params;
  out.basis = blocks.basis;
  out.basis_rows.resize(static_cast<Eigen::Index>(blocks.basis.size()), data.X.cols());
  for (std::size_t j = 0; j < blocks.basis.size(); ++j) {
    out.basis_rows.row(static_cast<Eigen::Index>(j)) =
        data.X.row(static_cast<Eigen::Index>(blocks.basis.indices[j]));
  }
  return out;
}

/// eta(x) = phi(x)'d + sum_j c_j sum_delta theta_delta R_delta(z_j, x) for
/// rows already on the kernel scale.
inline Eigen::VectorXd predict_scaled(const FitResult& fit, const ModelSpec& spec,
                                      const RowMatrix& rows) {
  detail::require(static_cast<std::size_t>(rows.cols()) == spec.dims(),
                  "solver: prediction rows have the wrong number of predictors");
  const Eigen::VectorXd theta = fit.params.theta();
  Eigen::VectorXd out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    std::span<const double> x(rows.data() + i * rows.cols(), static_cast<std::size_t>(rows.cols()));
    double v = null_basis(spec, x).dot(fit.d);
    for (Eigen::Index j = 0; j < fit.basis_rows.rows(); ++j) {
      std::span<const double> z(fit.basis_rows.data() + j * fit.basis_rows.cols(),
                                static_cast<std::size_t>(fit.basis_rows.cols()));
      double r = 0.0;
      for (std::size_t s = 0; s < spec.num_penalties(); ++s) {
        r += theta(static_cast<Eigen::Index>(s)) * term_kernel(spec, spec.penalized_terms[s], z, x);
      }
      v += fit.c(j) * r;
    }
    out(i) = v;
  }
  return out;
}

struct Prediction {
  Eigen::VectorXd values;
  std::vector<bool> out_of_range;
};

/// Predicts at raw-scale rows; continuous values outside the training range
/// are clamped and flagged.
inline Prediction predict(const FitResult& fit, const ModelSpec& spec, const RowMatrix& raw) {
  detail::require(static_cast<std::size_t>(raw.cols()) == spec.dims(),
                  "solver: prediction rows have the wrong number of predictors");
  RowMatrix scaled(raw.rows(), raw.cols());
  Prediction out;
  out.out_of_range.assign(static_cast<std::size_t>(raw.rows()), false);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      bool clamped = false;
      scaled(i, j) = spec.domains[static_cast<std::size_t>(j)].scale(raw(i, j), &clamped);
      if (clamped) out.out_of_range[static_cast<std::size_t>(i)] = true;
    }
  }
  out.values = predict_scaled(fit, spec, scaled);
  return out;
}

}  // namespace ssanova
