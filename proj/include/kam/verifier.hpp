#pragma once

// Independent validation of a computed torus: pointwise invariance defect,
// flow-conjugacy against an adaptive Runge-Kutta integration of Hamilton's
// equations, and a collocation Newton oracle that solves the invariance
// equation directly on grid values (a discretization path deliberately
// different from the coefficient algebra of the main engine).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "kam/driver.hpp"
#include "kam/hamiltonian.hpp"

namespace kam {

struct DefectReport {
  double sup_defect = 0.0;
  int grid_size = 0;
  std::vector<double> per_component;  // ell action rows then ell angle rows
};

namespace detail {

struct TorusFieldEval {
  const Hamiltonian* H;
  std::vector<FourierTaylorSeries> df_dalpha, df_dA;

  explicit TorusFieldEval(const Hamiltonian& h) : H(&h) {
    for (int j = 1; j <= h.ell(); ++j) {
      df_dalpha.push_back(partial_alpha(h.f, j));
      df_dA.push_back(partial_A(h.f, j));
    }
  }

  // Hamilton's equations: dA = -df/dalpha, dalpha = omega + J A + df/dA
  void operator()(const std::vector<double>& y, std::vector<double>& dy) const {
    const int ell = H->ell();
    std::vector<Complex> A(ell), al(ell);
    for (int j = 0; j < ell; ++j) {
      A[j] = y[j];
      al[j] = y[ell + j];
    }
    dy.resize(2 * ell);
    for (int j = 0; j < ell; ++j) {
      dy[j] = -evaluate(df_dalpha[j], A, al).real();
      dy[ell + j] = H->freq.omega[j] + H->J * y[j] +
                    evaluate(df_dA[j], A, al).real();
    }
  }
};

}  // namespace detail

// residual of (rot.d)K = X_H(K) on a uniform angle grid; the candidate
// rotation vector defaults to the Hamiltonian's frequency
inline DefectReport invariance_defect(const Hamiltonian& H,
                                      const TorusEmbedding& K, int grid,
                                      std::vector<double> rotation = {}) {
  const int ell = H.ell();
  if (rotation.empty()) rotation = H.freq.omega;
  if (static_cast<int>(rotation.size()) != ell)
    throw DimensionMismatch("invariance_defect: rotation length != ell");
  int N = 0;
  for (const auto& s : K.Xi_inf) N = std::max(N, s.fourier_cutoff());
  for (const auto& s : K.Delta_inf) N = std::max(N, s.fourier_cutoff());
  if (grid < 2 * N + 1)
    throw Error("invariance_defect: grid must be >= 2N+1 per dimension");

  detail::TorusFieldEval field(H);
  std::vector<FourierTaylorSeries> dXi, dDelta;
  for (int j = 0; j < ell; ++j) {
    dXi.push_back(omega_derivative(K.Xi_inf[j], rotation));
    dDelta.push_back(omega_derivative(K.Delta_inf[j], rotation));
  }

  DefectReport rep;
  rep.grid_size = grid;
  rep.per_component.assign(2 * ell, 0.0);
  const double two_pi = 2.0 * std::acos(-1.0);
  std::vector<int> g(ell, 0);
  std::vector<double> theta(ell), P(ell), Q(ell);
  std::vector<Complex> zeroA(ell, Complex{}), th(ell), Pc(ell), Qc(ell);
  while (true) {
    for (int j = 0; j < ell; ++j) {
      theta[j] = two_pi * g[j] / grid;
      th[j] = theta[j];
    }
    for (int j = 0; j < ell; ++j) {
      P[j] = K.a_inf[j] + evaluate(K.Xi_inf[j], zeroA, th).real();
      Q[j] = theta[j] + evaluate(K.Delta_inf[j], zeroA, th).real();
      Pc[j] = P[j];
      Qc[j] = Q[j];
    }
    for (int j = 0; j < ell; ++j) {
      double act = evaluate(dXi[j], zeroA, th).real() +
                   evaluate(field.df_dalpha[j], Pc, Qc).real();
      double ang = rotation[j] + evaluate(dDelta[j], zeroA, th).real() -
                   H.freq.omega[j] - H.J * P[j] -
                   evaluate(field.df_dA[j], Pc, Qc).real();
      rep.per_component[j] = std::max(rep.per_component[j], std::abs(act));
      rep.per_component[ell + j] =
          std::max(rep.per_component[ell + j], std::abs(ang));
    }
    int j = ell - 1;
    while (j >= 0) {
      if (++g[j] < grid) break;
      g[j] = 0;
      --j;
    }
    if (j < 0) break;
  }
  for (double v : rep.per_component) rep.sup_defect = std::max(rep.sup_defect, v);
  return rep;
}

// --------------------------------------------------------------------------
// adaptive embedded Runge-Kutta (Dormand-Prince 5(4))

template <typename Field>
inline void integrate_rk45(const Field& field, std::vector<double>& y,
                           double t0, double t1, double tol) {
  static const double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static const double a[7][6] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  static const double b5[7] = {35.0 / 384,     0.0,  500.0 / 1113, 125.0 / 192,
                               -2187.0 / 6784, 11.0 / 84, 0.0};
  static const double b4[7] = {5179.0 / 57600,  0.0,           7571.0 / 16695,
                               393.0 / 640,     -92097.0 / 339200,
                               187.0 / 2100,    1.0 / 40};

  const size_t n = y.size();
  std::vector<std::vector<double>> k(7, std::vector<double>(n));
  std::vector<double> ytmp(n), y5(n), y4(n);
  double t = t0;
  double h = std::min(1e-2, t1 - t0);
  long long steps = 0;
  while (t < t1) {
    if (++steps > 20000000)
      throw IntegrationFailed("integrate_rk45: step budget exhausted");
    h = std::min(h, t1 - t);
    field(y, k[0]);
    for (int s = 1; s < 7; ++s) {
      for (size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int r = 0; r < s; ++r) acc += a[s][r] * k[r][i];
        ytmp[i] = y[i] + h * acc;
      }
      field(ytmp, k[s]);
    }
    double err = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double d5 = 0.0, d4 = 0.0;
      for (int s = 0; s < 7; ++s) {
        d5 += b5[s] * k[s][i];
        d4 += b4[s] * k[s][i];
      }
      y5[i] = y[i] + h * d5;
      y4[i] = y[i] + h * d4;
      double sc = tol * (1.0 + std::abs(y[i]));
      err = std::max(err, std::abs(y5[i] - y4[i]) / sc);
    }
    if (err <= 1.0) {
      t += h;
      y = y5;
    }
    double factor = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
    if (h < 1e-14)
      throw IntegrationFailed("integrate_rk45: step size underflow");
    (void)c;
  }
}

inline double angular_distance(double x, double y) {
  const double two_pi = 2.0 * std::acos(-1.0);
  double d = std::fmod(x - y, two_pi);
  if (d < 0) d += two_pi;
  return std::min(d, two_pi - d);
}

// integrates Hamilton's equations from K(alpha0) for `samples` random
// starting phases and measures the worst distance to K(alpha0 + omega t)
inline double flow_conjugacy_test(const Hamiltonian& H, const TorusEmbedding& K,
                                  double t_final, double integrator_tol,
                                  int samples, unsigned long long seed = 1) {
  if (!(t_final > 0.0)) throw Error("flow_conjugacy_test: t_final must be > 0");
  const int ell = H.ell();
  detail::TorusFieldEval field(H);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 2.0 * std::acos(-1.0));

  double worst = 0.0;
  std::vector<double> alpha0(ell), A(ell), Q(ell), y(2 * ell);
  std::vector<double> alphaT(ell), AT(ell), QT(ell);
  for (int s = 0; s < samples; ++s) {
    for (int j = 0; j < ell; ++j) alpha0[j] = uni(rng);
    embedding_point(K, alpha0, A, Q);
    for (int j = 0; j < ell; ++j) {
      y[j] = A[j];
      y[ell + j] = Q[j];
    }
    integrate_rk45(field, y, 0.0, t_final, integrator_tol);
    for (int j = 0; j < ell; ++j)
      alphaT[j] = alpha0[j] + H.freq.omega[j] * t_final;
    embedding_point(K, alphaT, AT, QT);
    double dist = 0.0;
    for (int j = 0; j < ell; ++j) {
      dist = std::max(dist, std::abs(y[j] - AT[j]));
      dist = std::max(dist, angular_distance(y[ell + j], QT[j]));
    }
    worst = std::max(worst, dist);
  }
  return worst;
}

// measured rotation vector of the flow started on the torus: least-squares
// slope of the lifted angles over uniform checkpoints, which averages out
// the quasi-periodic conjugacy wobble
inline std::vector<double> measure_rotation_vector(
    const Hamiltonian& H, const TorusEmbedding& K, double t_final,
    double integrator_tol, const std::vector<double>& alpha0,
    int checkpoints = 128) {
  const int ell = H.ell();
  detail::TorusFieldEval field(H);
  std::vector<double> A(ell), Q(ell), y(2 * ell);
  embedding_point(K, alpha0, A, Q);
  for (int j = 0; j < ell; ++j) {
    y[j] = A[j];
    y[ell + j] = Q[j];
  }
  // angles in y stay lifted (the integrator never wraps them)
  double st = 0, stt = 0;
  std::vector<double> sa(ell, 0.0), sta(ell, 0.0);
  for (int c = 1; c <= checkpoints; ++c) {
    double t0 = t_final * (c - 1) / checkpoints;
    double t1 = t_final * c / checkpoints;
    integrate_rk45(field, y, t0, t1, integrator_tol);
    st += t1;
    stt += t1 * t1;
    for (int j = 0; j < ell; ++j) {
      sa[j] += y[ell + j];
      sta[j] += t1 * y[ell + j];
    }
  }
  std::vector<double> rot(ell);
  for (int j = 0; j < ell; ++j)
    rot[j] = (checkpoints * sta[j] - st * sa[j]) / (checkpoints * stt - st * st);
  return rot;
}

// grid fine enough to resolve every mode the embedding carries
inline int default_defect_grid(const TorusEmbedding& K) {
  int N = 0;
  for (const auto& s : K.Xi_inf) N = std::max(N, s.fourier_cutoff());
  for (const auto& s : K.Delta_inf) N = std::max(N, s.fourier_cutoff());
  return 2 * N + 1;
}

// --------------------------------------------------------------------------
// collocation Newton oracle
//
// Unknowns are the grid values of P and D on the (2N+1)^ell collocation
// grid; the conjugacy residual
//     R1 = (omega.d)P + df/dalpha(P, theta + D)
//     R2 = (omega.d)D - J P - df/dA(P, theta + D)
// is driven to zero by a Levenberg-damped Newton iteration.  The angle
// reparameterization freedom is pinned by mean(D) = 0 (and mean(P) = 0
// when J = 0, where the action mean is free).

inline TorusEmbedding oracle_newton_torus(const Hamiltonian& H,
                                          const FrequencyVector& omega, int N,
                                          double tol, int max_iter = 40) {
  const int ell = H.ell();
  const int M = 2 * N + 1;
  int G = 1;
  for (int j = 0; j < ell; ++j) G *= M;
  const int nfun = 2 * ell;
  const int nx = nfun * G;

  // nonresonance up to the box cutoff
  {
    std::vector<int> nu(ell, -N);
    while (true) {
      if (abs_sum(nu) > 0) {
        double s = small_divisor(omega.omega, nu);
        if (std::abs(s) <= resonance_tolerance(omega.omega, nu))
          throw Resonant("oracle_newton_torus: resonant frequency at cutoff");
      }
      int j = ell - 1;
      while (j >= 0) {
        if (++nu[j] <= N) break;
        nu[j] = -N;
        --j;
      }
      if (j < 0) break;
    }
  }

  const double two_pi = 2.0 * std::acos(-1.0);
  // grid points
  std::vector<std::vector<double>> theta(G, std::vector<double>(ell));
  {
    std::vector<int> g(ell, 0);
    for (int p = 0; p < G; ++p) {
      for (int j = 0; j < ell; ++j) theta[p][j] = two_pi * g[j] / M;
      int j = ell - 1;
      while (j >= 0) {
        if (++g[j] < M) break;
        g[j] = 0;
        --j;
      }
    }
  }

  // spectral derivative matrix W[p][q] = (1/G) sum_nu i(omega.nu)
  // e^{i nu.(theta_p - theta_q)} over the box |nu_j| <= N (real-valued)
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(G, G);
  {
    std::vector<int> nu(ell, -N);
    while (true) {
      double on = 0.0;
      for (int j = 0; j < ell; ++j) on += omega.omega[j] * nu[j];
      if (on != 0.0) {
        for (int p = 0; p < G; ++p)
          for (int q = 0; q < G; ++q) {
            double arg = 0.0;
            for (int j = 0; j < ell; ++j)
              arg += nu[j] * (theta[p][j] - theta[q][j]);
            W(p, q) += -on * std::sin(arg) / G;
          }
      }
      int j = ell - 1;
      while (j >= 0) {
        if (++nu[j] <= N) break;
        nu[j] = -N;
        --j;
      }
      if (j < 0) break;
    }
  }

  // first and second partials of f
  std::vector<FourierTaylorSeries> f_a, f_A;  // df/dalpha_i, df/dA_i
  std::vector<std::vector<FourierTaylorSeries>> f_aA(ell), f_aa(ell), f_AA(ell);
  for (int i = 1; i <= ell; ++i) {
    f_a.push_back(partial_alpha(H.f, i));
    f_A.push_back(partial_A(H.f, i));
  }
  for (int i = 0; i < ell; ++i)
    for (int m = 1; m <= ell; ++m) {
      f_aA[i].push_back(partial_A(f_a[i], m));
      f_aa[i].push_back(partial_alpha(f_a[i], m));
      f_AA[i].push_back(partial_A(f_A[i], m));
    }

  // unknown layout: x = [P_0 .. P_{ell-1}, D_0 .. D_{ell-1}] by grid blocks
  Eigen::VectorXd x = Eigen::VectorXd::Zero(nx);
  auto P_at = [&](const Eigen::VectorXd& v, int j, int p) {
    return v[j * G + p];
  };
  auto D_at = [&](const Eigen::VectorXd& v, int j, int p) {
    return v[(ell + j) * G + p];
  };

  const int ngauge = H.J == 0.0 ? 2 * ell : ell;
  const int nrows = nx + ngauge;

  auto residual = [&](const Eigen::VectorXd& v, Eigen::VectorXd& R) {
    R.setZero(nrows);
    std::vector<Complex> A(ell), al(ell);
    for (int p = 0; p < G; ++p) {
      for (int j = 0; j < ell; ++j) {
        A[j] = P_at(v, j, p);
        al[j] = theta[p][j] + D_at(v, j, p);
      }
      for (int i = 0; i < ell; ++i) {
        R[i * G + p] = evaluate(f_a[i], A, al).real();
        R[(ell + i) * G + p] =
            -H.J * P_at(v, i, p) - evaluate(f_A[i], A, al).real();
      }
    }
    for (int i = 0; i < ell; ++i) {
      Eigen::VectorXd Pi = v.segment(i * G, G), Di = v.segment((ell + i) * G, G);
      R.segment(i * G, G) += W * Pi;
      R.segment((ell + i) * G, G) += W * Di;
    }
    // gauge rows: mean(D_j) = 0 (and mean(P_j) = 0 when J = 0)
    for (int i = 0; i < ell; ++i)
      R[nx + i] = v.segment((ell + i) * G, G).mean();
    if (H.J == 0.0)
      for (int i = 0; i < ell; ++i)
        R[nx + ell + i] = v.segment(i * G, G).mean();
  };

  auto jacobian = [&](const Eigen::VectorXd& v, Eigen::MatrixXd& Jm) {
    Jm.setZero(nrows, nx);
    std::vector<Complex> A(ell), al(ell);
    for (int i = 0; i < ell; ++i) {
      Jm.block(i * G, i * G, G, G) = W;
      Jm.block((ell + i) * G, (ell + i) * G, G, G) = W;
      for (int p = 0; p < G; ++p) Jm((ell + i) * G + p, i * G + p) += -H.J;
    }
    for (int p = 0; p < G; ++p) {
      for (int j = 0; j < ell; ++j) {
        A[j] = P_at(v, j, p);
        al[j] = theta[p][j] + D_at(v, j, p);
      }
      for (int i = 0; i < ell; ++i)
        for (int m = 0; m < ell; ++m) {
          double haA = evaluate(f_aA[i][m], A, al).real();
          double haa = evaluate(f_aa[i][m], A, al).real();
          double hAA = evaluate(f_AA[i][m], A, al).real();
          double hAa = evaluate(f_aA[m][i], A, al).real();  // d2 f / dA_i dalpha_m
          Jm(i * G + p, m * G + p) += haA;
          Jm(i * G + p, (ell + m) * G + p) += haa;
          Jm((ell + i) * G + p, m * G + p) += -hAA;
          Jm((ell + i) * G + p, (ell + m) * G + p) += -hAa;
        }
    }
    for (int i = 0; i < ell; ++i)
      for (int p = 0; p < G; ++p) Jm(nx + i, (ell + i) * G + p) = 1.0 / G;
    if (H.J == 0.0)
      for (int i = 0; i < ell; ++i)
        for (int p = 0; p < G; ++p) Jm(nx + ell + i, i * G + p) = 1.0 / G;
  };

  Eigen::VectorXd R(nrows), Rtrial(nrows);
  Eigen::MatrixXd Jm(nrows, nx);
  residual(x, R);
  double best = R.lpNorm<Eigen::Infinity>();
  double lambda = 1e-12;
  int it = 0;
  while (best >= tol) {
    if (++it > max_iter)
      throw OracleDiverged("oracle_newton_torus: iteration budget exhausted");
    jacobian(x, Jm);
    Eigen::MatrixXd JtJ = Jm.transpose() * Jm;
    Eigen::VectorXd JtR = Jm.transpose() * R;
    bool accepted = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal().array() += lambda;
      Eigen::VectorXd dx = A.ldlt().solve(-JtR);
      Eigen::VectorXd xtrial = x + dx;
      residual(xtrial, Rtrial);
      double trial = Rtrial.lpNorm<Eigen::Infinity>();
      if (trial < best) {
        x = xtrial;
        R = Rtrial;
        best = trial;
        lambda = std::max(lambda / 10.0, 1e-14);
        accepted = true;
        break;
      }
      lambda *= 100.0;
    }
    if (!accepted)
      throw OracleDiverged("oracle_newton_torus: damping failed to reduce residual");
  }

  // re-expand grid values into angle-only series (box modes fit in the
  // |nu|_1 <= ell*N diamond)
  TorusEmbedding T;
  T.a_inf.assign(ell, 0.0);
  const int Nser = ell * N;
  std::vector<int> zerok(ell, 0);
  for (int fn = 0; fn < nfun; ++fn) {
    FourierTaylorSeries s(ell, Nser, 0, false);
    std::vector<int> nu(ell, -N);
    while (true) {
      Complex c = 0.0;
      for (int p = 0; p < G; ++p) {
        double arg = 0.0;
        for (int j = 0; j < ell; ++j) arg += nu[j] * theta[p][j];
        c += x[fn * G + p] * std::exp(Complex(0.0, -arg));
      }
      c /= static_cast<double>(G);
      if (std::abs(c) > 0.0) s.set_coeff(nu, zerok, c);
      int j = ell - 1;
      while (j >= 0) {
        if (++nu[j] <= N) break;
        nu[j] = -N;
        --j;
      }
      if (j < 0) break;
    }
    s.symmetrize_real();
    s.prune();
    if (fn < ell) {
      std::vector<int> zero(ell, 0);
      Complex mean = s.coeff(zero, zerok);
      T.a_inf[fn] = mean.real();
      s.add_coeff(zero, zerok, -mean);
      s.prune();
      T.Xi_inf.push_back(std::move(s));
    } else {
      T.Delta_inf.push_back(std::move(s));
    }
  }
  return T;
}

// --------------------------------------------------------------------------
// gauge alignment and coefficient comparison of two embeddings

// reparameterize so that the angle offset has zero mean
inline TorusEmbedding align_gauge(const TorusEmbedding& K) {
  const int ell = static_cast<int>(K.a_inf.size());
  std::vector<int> zero(ell, 0);
  std::vector<double> m(ell, 0.0);
  for (int j = 0; j < ell; ++j) m[j] = K.Delta_inf[j].coeff(zero, zero).real();
  std::vector<double> shift(ell);
  for (int j = 0; j < ell; ++j) shift[j] = -m[j];
  TorusEmbedding out = K;
  for (int j = 0; j < ell; ++j) {
    FourierTaylorSeries d = argument_shift(K.Delta_inf[j], shift);
    d.add_coeff(zero, zero, Complex(-m[j], 0.0));
    d.prune();
    FourierTaylorSeries xi = argument_shift(K.Xi_inf[j], shift);
    xi.prune();
    if (K.Delta_inf[j].real_flagged()) d.symmetrize_real();
    if (K.Xi_inf[j].real_flagged()) xi.symmetrize_real();
    out.Delta_inf[j] = std::move(d);
    out.Xi_inf[j] = std::move(xi);
  }
  return out;
}

// worst coefficient difference over |nu|_1 <= mode_cutoff after aligning
// both embeddings to the zero-mean angle gauge; the action mean enters
// through a_inf
inline double compare_embeddings(const TorusEmbedding& A,
                                 const TorusEmbedding& B, int mode_cutoff) {
  TorusEmbedding a = align_gauge(A), b = align_gauge(B);
  const int ell = static_cast<int>(a.a_inf.size());
  double worst = 0.0;
  std::vector<int> zero(ell, 0);
  for (int j = 0; j < ell; ++j)
    worst = std::max(worst, std::abs(a.a_inf[j] - b.a_inf[j]));
  auto scan = [&](const FourierTaylorSeries& f, const FourierTaylorSeries& g) {
    std::vector<int> nu(ell, -mode_cutoff);
    while (true) {
      if (abs_sum(nu) <= mode_cutoff) {
        Complex ca = abs_sum(nu) <= f.fourier_cutoff() ? f.coeff(nu, zero)
                                                       : Complex{};
        Complex cb = abs_sum(nu) <= g.fourier_cutoff() ? g.coeff(nu, zero)
                                                       : Complex{};
        worst = std::max(worst, std::abs(ca - cb));
      }
      int j = ell - 1;
      while (j >= 0) {
        if (++nu[j] <= mode_cutoff) break;
        nu[j] = -mode_cutoff;
        --j;
      }
      if (j < 0) break;
    }
  };
  for (int j = 0; j < ell; ++j) {
    scan(a.Xi_inf[j], b.Xi_inf[j]);
    scan(a.Delta_inf[j], b.Delta_inf[j]);
  }
  return worst;
}

}  // namespace kam
