#pragma once

// Truncated Fourier-Taylor arithmetic for analytic functions of (A, alpha)
// on polydisks |A_j| <= rho, |Im alpha_j| <= kappa, with coefficient-majorant
// norms.  A series is
//
//     f(A, alpha) = sum_{nu,k} c_{nu,k} A^k e^{i nu.alpha},
//
// truncated to |nu|_1 <= N and |k|_1 <= d.  The majorant
// sum |c| rho^|k| e^{kappa|nu|} upper-bounds the sup of |f| on the polydisk,
// so every inequality proved for sup norms survives when checked on
// majorants.  All operations are pure and iterate coefficients in a fixed
// lexicographic order, so results are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kam/errors.hpp"

namespace kam {

using Complex = std::complex<double>;

inline int abs_sum(const std::vector<int>& v) {
  int s = 0;
  for (int x : v) s += std::abs(x);
  return s;
}

struct PolydiskDomain {
  int ell = 1;
  double rho = 1.0;
  double kappa = 0.1;
  std::vector<double> center;  // empty means the origin

  PolydiskDomain() = default;
  PolydiskDomain(int l, double r, double k, std::vector<double> c = {})
      : ell(l), rho(r), kappa(k), center(std::move(c)) {
    validate();
  }

  void validate() const {
    if (ell < 1) throw Error("PolydiskDomain: ell must be >= 1");
    if (!(rho > 0.0)) throw Error("PolydiskDomain: rho must be positive");
    if (!(kappa > 0.0)) throw Error("PolydiskDomain: kappa must be positive");
    if (!center.empty() && static_cast<int>(center.size()) != ell)
      throw DimensionMismatch("PolydiskDomain: center length != ell");
  }

  double center_abs(int j) const {
    return center.empty() ? 0.0 : std::abs(center[j]);
  }
};

struct SeriesNorms {
  double majorant = 0.0;
  double grad_A = 0.0;
  double grad_alpha = 0.0;
  double epsilon = 0.0;  // grad_A + grad_alpha / rho
};

// Multi-indices k with |k|_1 <= degree, enumerated lexicographically.
// Lookup is mixed-radix over (degree+1)^ell.
struct MonomialBasis {
  int ell = 1;
  int degree = 0;
  std::vector<std::vector<int>> mono;
  std::vector<int> lookup;

  static std::shared_ptr<const MonomialBasis> make(int ell, int degree) {
    auto b = std::make_shared<MonomialBasis>();
    b->ell = ell;
    b->degree = degree;
    std::vector<int> k(ell, 0);
    // lexicographic enumeration of all k with |k| <= degree
    while (true) {
      if (abs_sum(k) <= degree) b->mono.push_back(k);
      int j = ell - 1;
      while (j >= 0) {
        if (++k[j] <= degree) break;
        k[j] = 0;
        --j;
      }
      if (j < 0) break;
    }
    std::sort(b->mono.begin(), b->mono.end());
    int radix_size = 1;
    for (int j = 0; j < ell; ++j) radix_size *= degree + 1;
    b->lookup.assign(radix_size, -1);
    for (int i = 0; i < static_cast<int>(b->mono.size()); ++i)
      b->lookup[b->radix(b->mono[i])] = i;
    return b;
  }

  int radix(const std::vector<int>& k) const {
    int r = 0;
    for (int j = 0; j < ell; ++j) r = r * (degree + 1) + k[j];
    return r;
  }

  // index of monomial k, or -1 when |k| > degree
  int index(const std::vector<int>& k) const {
    for (int j = 0; j < ell; ++j)
      if (k[j] < 0 || k[j] > degree) return -1;
    return lookup[radix(k)];
  }

  int size() const { return static_cast<int>(mono.size()); }
};

class FourierTaylorSeries {
 public:
  // map: Fourier mode nu -> dense Taylor coefficients over basis_->mono
  using CoeffMap = std::map<std::vector<int>, std::vector<Complex>>;

  FourierTaylorSeries() : FourierTaylorSeries(1, 1, 0) {}
  FourierTaylorSeries(int ell, int fourier_cutoff, int taylor_degree,
                      bool real_valued = false)
      : ell_(ell),
        N_(fourier_cutoff),
        d_(taylor_degree),
        real_(real_valued),
        basis_(MonomialBasis::make(ell, taylor_degree)) {
    if (ell < 1 || fourier_cutoff < 1 || taylor_degree < 0)
      throw Error("FourierTaylorSeries: bad truncation parameters");
  }

  int ell() const { return ell_; }
  int fourier_cutoff() const { return N_; }
  int taylor_degree() const { return d_; }
  bool real_flagged() const { return real_; }
  void set_real_flag(bool r) { real_ = r; }
  double tail_bound() const { return tail_; }
  void add_tail(double t) { tail_ += t; }
  const MonomialBasis& basis() const { return *basis_; }
  std::shared_ptr<const MonomialBasis> basis_ptr() const { return basis_; }
  const CoeffMap& modes() const { return c_; }
  bool empty() const { return c_.empty(); }

  bool in_range(const std::vector<int>& nu, const std::vector<int>& k) const {
    return abs_sum(nu) <= N_ && basis_->index(k) >= 0;
  }

  Complex coeff(const std::vector<int>& nu, const std::vector<int>& k) const {
    check_key(nu, k);
    auto it = c_.find(nu);
    if (it == c_.end()) return {0.0, 0.0};
    int i = basis_->index(k);
    return i < 0 ? Complex{0.0, 0.0} : it->second[i];
  }

  void set_coeff(const std::vector<int>& nu, const std::vector<int>& k,
                 Complex v) {
    check_key(nu, k);
    if (abs_sum(nu) > N_ || basis_->index(k) < 0)
      throw Error("set_coeff: index outside truncation");
    poly(nu)[basis_->index(k)] = v;
  }

  void add_coeff(const std::vector<int>& nu, const std::vector<int>& k,
                 Complex v) {
    check_key(nu, k);
    if (abs_sum(nu) > N_ || basis_->index(k) < 0)
      throw Error("add_coeff: index outside truncation");
    poly(nu)[basis_->index(k)] += v;
  }

  std::vector<Complex>& poly(const std::vector<int>& nu) {
    auto it = c_.find(nu);
    if (it == c_.end())
      it = c_.emplace(nu, std::vector<Complex>(basis_->size())).first;
    return it->second;
  }

  const std::vector<Complex>* poly_if_present(const std::vector<int>& nu) const {
    auto it = c_.find(nu);
    return it == c_.end() ? nullptr : &it->second;
  }

  // remove zero Taylor columns so that "absent means exactly zero"
  void prune(double eps = 0.0) {
    for (auto it = c_.begin(); it != c_.end();) {
      bool all_zero = true;
      for (auto& v : it->second)
        if (std::abs(v.real()) > eps || std::abs(v.imag()) > eps) {
          all_zero = false;
          break;
        }
      it = all_zero ? c_.erase(it) : std::next(it);
    }
  }

  // enforce c_{-nu,k} = conj(c_{nu,k}); used after grid re-expansions to
  // remove rounding asymmetry on real-valued series
  void symmetrize_real() {
    for (auto& [nu, p] : c_) {
      std::vector<int> mnu(ell_);
      for (int j = 0; j < ell_; ++j) mnu[j] = -nu[j];
      if (mnu < nu) continue;
      if (mnu == nu) {  // nu = 0: reality forces real coefficients
        for (auto& v : p) v = Complex(v.real(), 0.0);
        continue;
      }
      auto it = c_.find(mnu);
      if (it == c_.end()) {
        auto& q = poly(mnu);
        for (size_t i = 0; i < p.size(); ++i) q[i] = std::conj(p[i]);
      } else {
        auto& q = it->second;
        for (size_t i = 0; i < p.size(); ++i) {
          Complex avg = 0.5 * (p[i] + std::conj(q[i]));
          p[i] = avg;
          q[i] = std::conj(avg);
        }
      }
    }
    real_ = true;
  }

 private:
  void check_key(const std::vector<int>& nu, const std::vector<int>& k) const {
    if (static_cast<int>(nu.size()) != ell_ ||
        static_cast<int>(k.size()) != ell_)
      throw DimensionMismatch("coefficient key length != ell");
  }

  int ell_, N_, d_;
  bool real_;
  double tail_ = 0.0;
  std::shared_ptr<const MonomialBasis> basis_;
  CoeffMap c_;
};

// ---------------------------------------------------------------------------
// norms

inline double mono_weight(const std::vector<int>& k, const PolydiskDomain& dom) {
  double w = 1.0;
  for (int j = 0; j < dom.ell; ++j) {
    double base = dom.center_abs(j) + dom.rho;
    for (int m = 0; m < k[j]; ++m) w *= base;
  }
  return w;
}

// sum |c_{nu,k}| rho^|k| e^{kappa|nu|}; upper bound for sup |f| on the domain
inline double majorant_norm(const FourierTaylorSeries& f,
                            const PolydiskDomain& dom) {
  if (f.ell() != dom.ell)
    throw DimensionMismatch("majorant_norm: series/domain ell mismatch");
  double total = 0.0;
  const auto& mono = f.basis().mono;
  for (const auto& [nu, p] : f.modes()) {
    double poly_sum = 0.0;
    for (size_t i = 0; i < p.size(); ++i)
      if (p[i] != Complex{})
        poly_sum += std::abs(p[i]) * mono_weight(mono[i], dom);
    total += poly_sum * std::exp(dom.kappa * abs_sum(nu));
  }
  return total;
}

inline FourierTaylorSeries partial_A(const FourierTaylorSeries& f, int j);
inline FourierTaylorSeries partial_alpha(const FourierTaylorSeries& f, int j);

// eps = ||grad_A f|| + ||grad_alpha f|| / rho with grad norms the max over
// components of the partials' majorants
inline SeriesNorms epsilon_norm(const FourierTaylorSeries& f,
                                const PolydiskDomain& dom) {
  if (f.ell() != dom.ell)
    throw DimensionMismatch("epsilon_norm: series/domain ell mismatch");
  SeriesNorms n;
  n.majorant = majorant_norm(f, dom);
  for (int j = 1; j <= f.ell(); ++j) {
    n.grad_A = std::max(n.grad_A, majorant_norm(partial_A(f, j), dom));
    n.grad_alpha = std::max(n.grad_alpha, majorant_norm(partial_alpha(f, j), dom));
  }
  n.epsilon = n.grad_A + n.grad_alpha / dom.rho;
  return n;
}

// n-th derivative bound n! ||g|| delta^-n for g holomorphic at distance
// delta from the boundary
inline double cauchy_bound(double norm_g, int n, double delta) {
  if (!(delta > 0.0)) throw Error("cauchy_bound: delta must be positive");
  if (n < 0) throw Error("cauchy_bound: n must be nonnegative");
  double fact = 1.0;
  for (int m = 2; m <= n; ++m) fact *= m;
  return fact * norm_g * std::pow(delta, -n);
}

// checks |f_nu| <= ||f|| e^{-kappa |nu|} for every stored mode, with
// |f_nu| the rho-weighted coefficient sum at the domain center
inline bool fourier_decay_check(const FourierTaylorSeries& f,
                                const PolydiskDomain& dom) {
  double maj = majorant_norm(f, dom);
  const auto& mono = f.basis().mono;
  for (const auto& [nu, p] : f.modes()) {
    double fnu = 0.0;
    for (size_t i = 0; i < p.size(); ++i)
      fnu += std::abs(p[i]) * mono_weight(mono[i], dom);
    if (fnu > maj * std::exp(-dom.kappa * abs_sum(nu)) * (1.0 + 1e-12))
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// linear operations

inline void require_same_shape(const FourierTaylorSeries& f,
                               const FourierTaylorSeries& g) {
  if (f.ell() != g.ell())
    throw DimensionMismatch("series ell mismatch");
}

inline FourierTaylorSeries add(const FourierTaylorSeries& f,
                               const FourierTaylorSeries& g) {
  require_same_shape(f, g);
  FourierTaylorSeries out(f.ell(), std::max(f.fourier_cutoff(), g.fourier_cutoff()),
                          std::max(f.taylor_degree(), g.taylor_degree()),
                          f.real_flagged() && g.real_flagged());
  out.add_tail(f.tail_bound() + g.tail_bound());
  for (const FourierTaylorSeries* s : {&f, &g}) {
    const auto& mono = s->basis().mono;
    for (const auto& [nu, p] : s->modes())
      for (size_t i = 0; i < p.size(); ++i)
        if (p[i] != Complex{}) out.add_coeff(nu, mono[i], p[i]);
  }
  out.prune();
  return out;
}

inline FourierTaylorSeries scale(const FourierTaylorSeries& f, Complex s) {
  FourierTaylorSeries out(f.ell(), f.fourier_cutoff(), f.taylor_degree(),
                          f.real_flagged() && s.imag() == 0.0);
  out.add_tail(f.tail_bound() * std::abs(s));
  const auto& mono = f.basis().mono;
  for (const auto& [nu, p] : f.modes())
    for (size_t i = 0; i < p.size(); ++i)
      if (p[i] != Complex{}) out.set_coeff(nu, mono[i], p[i] * s);
  out.prune();
  return out;
}

inline FourierTaylorSeries sub(const FourierTaylorSeries& f,
                               const FourierTaylorSeries& g) {
  return add(f, scale(g, {-1.0, 0.0}));
}

namespace detail {
struct PolyOps;
}

// convolution in (nu, k); discarded tail majorant is accumulated with the
// weights of weigh_dom when given, with rho=1, kappa=0 weights otherwise
inline FourierTaylorSeries multiply(const FourierTaylorSeries& f,
                                    const FourierTaylorSeries& g,
                                    const PolydiskDomain* weigh_dom = nullptr);

// ---------------------------------------------------------------------------
// derivations

// d/dA_j lowers k_j with factor k_j
inline FourierTaylorSeries partial_A(const FourierTaylorSeries& f, int j) {
  if (j < 1 || j > f.ell()) throw Error("partial_A: component out of range");
  FourierTaylorSeries out(f.ell(), f.fourier_cutoff(), f.taylor_degree(),
                          f.real_flagged());
  const auto& mono = f.basis().mono;
  std::vector<int> k;
  for (const auto& [nu, p] : f.modes())
    for (size_t i = 0; i < p.size(); ++i) {
      if (p[i] == Complex{} || mono[i][j - 1] == 0) continue;
      k = mono[i];
      int kj = k[j - 1];
      k[j - 1] -= 1;
      out.add_coeff(nu, k, p[i] * static_cast<double>(kj));
    }
  out.prune();
  return out;
}

// d/dalpha_j multiplies mode nu by i nu_j  (i z_j d/dz_j on z_j = e^{i a_j})
inline FourierTaylorSeries partial_alpha(const FourierTaylorSeries& f, int j) {
  if (j < 1 || j > f.ell()) throw Error("partial_alpha: component out of range");
  FourierTaylorSeries out(f.ell(), f.fourier_cutoff(), f.taylor_degree(),
                          f.real_flagged());
  const auto& mono = f.basis().mono;
  for (const auto& [nu, p] : f.modes()) {
    if (nu[j - 1] == 0) continue;
    Complex factor(0.0, static_cast<double>(nu[j - 1]));
    for (size_t i = 0; i < p.size(); ++i)
      if (p[i] != Complex{}) out.add_coeff(nu, mono[i], p[i] * factor);
  }
  out.prune();
  return out;
}

// directional angle derivative (omega . d/dalpha); multiplies mode nu by
// i (omega . nu)
inline FourierTaylorSeries omega_derivative(const FourierTaylorSeries& f,
                                            const std::vector<double>& omega) {
  if (static_cast<int>(omega.size()) != f.ell())
    throw DimensionMismatch("omega_derivative: omega length != ell");
  FourierTaylorSeries out(f.ell(), f.fourier_cutoff(), f.taylor_degree(),
                          f.real_flagged());
  const auto& mono = f.basis().mono;
  for (const auto& [nu, p] : f.modes()) {
    double on = 0.0;
    for (int j = 0; j < f.ell(); ++j) on += omega[j] * nu[j];
    if (on == 0.0) continue;
    Complex factor(0.0, on);
    for (size_t i = 0; i < p.size(); ++i)
      if (p[i] != Complex{}) out.add_coeff(nu, mono[i], p[i] * factor);
  }
  out.prune();
  return out;
}

// ---------------------------------------------------------------------------
// recentering and evaluation

// g(A', alpha) = f(A' + a, alpha); exact on polynomials of degree <= d
inline FourierTaylorSeries taylor_shift(const FourierTaylorSeries& f,
                                        const std::vector<Complex>& a) {
  if (static_cast<int>(a.size()) != f.ell())
    throw DimensionMismatch("taylor_shift: shift length != ell");
  bool shift_real = true;
  bool shift_zero = true;
  for (const auto& v : a) {
    if (v.imag() != 0.0) shift_real = false;
    if (v != Complex{}) shift_zero = false;
  }
  if (shift_zero) return f;

  const auto& basis = f.basis();
  const int d = f.taylor_degree();
  // binomial table up to d
  std::vector<std::vector<double>> binom(d + 1, std::vector<double>(d + 1, 0.0));
  for (int n = 0; n <= d; ++n) {
    binom[n][0] = 1.0;
    for (int r = 1; r <= n; ++r)
      binom[n][r] = binom[n - 1][r - 1] + (r <= n - 1 ? binom[n - 1][r] : 0.0);
  }
  // powers of each shift component
  std::vector<std::vector<Complex>> apow(f.ell(), std::vector<Complex>(d + 1));
  for (int j = 0; j < f.ell(); ++j) {
    apow[j][0] = 1.0;
    for (int m = 1; m <= d; ++m) apow[j][m] = apow[j][m - 1] * a[j];
  }

  FourierTaylorSeries out(f.ell(), f.fourier_cutoff(), d,
                          f.real_flagged() && shift_real);
  out.add_tail(f.tail_bound());
  for (const auto& [nu, p] : f.modes()) {
    auto& dst = out.poly(nu);
    for (int i = 0; i < basis.size(); ++i) {
      if (p[i] == Complex{}) continue;
      const auto& k = basis.mono[i];
      // expand prod_j (A_j + a_j)^{k_j}: target monomials kp <= k
      for (int t = 0; t < basis.size(); ++t) {
        const auto& kp = basis.mono[t];
        bool le = true;
        for (int j = 0; j < f.ell(); ++j)
          if (kp[j] > k[j]) {
            le = false;
            break;
          }
        if (!le) continue;
        Complex w = p[i];
        for (int j = 0; j < f.ell(); ++j)
          w *= binom[k[j]][kp[j]] * apow[j][k[j] - kp[j]];
        dst[t] += w;
      }
    }
  }
  out.prune();
  return out;
}

// deterministic sum, lexicographic in (nu, k)
inline Complex evaluate(const FourierTaylorSeries& f,
                        const std::vector<Complex>& A,
                        const std::vector<Complex>& alpha) {
  if (static_cast<int>(A.size()) != f.ell() ||
      static_cast<int>(alpha.size()) != f.ell())
    throw DimensionMismatch("evaluate: point dimension != ell");
  const auto& mono = f.basis().mono;
  Complex total = 0.0;
  for (const auto& [nu, p] : f.modes()) {
    Complex phase_arg = 0.0;
    for (int j = 0; j < f.ell(); ++j)
      phase_arg += static_cast<double>(nu[j]) * alpha[j];
    Complex phase = std::exp(Complex(0.0, 1.0) * phase_arg);
    Complex poly_val = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      if (p[i] == Complex{}) continue;
      Complex apow = 1.0;
      for (int j = 0; j < f.ell(); ++j)
        for (int m = 0; m < mono[i][j]; ++m) apow *= A[j];
      poly_val += p[i] * apow;
    }
    total += poly_val * phase;
  }
  return total;
}

inline Complex evaluate(const FourierTaylorSeries& f,
                        const std::vector<double>& A,
                        const std::vector<double>& alpha) {
  std::vector<Complex> Ac(A.begin(), A.end()), alc(alpha.begin(), alpha.end());
  return evaluate(f, Ac, alc);
}

// keep only the nu = 0 column: the angle average, a function of A alone
inline FourierTaylorSeries angle_average(const FourierTaylorSeries& f) {
  FourierTaylorSeries out(f.ell(), f.fourier_cutoff(), f.taylor_degree(),
                          f.real_flagged());
  std::vector<int> zero(f.ell(), 0);
  if (const auto* p = f.poly_if_present(zero)) {
    auto& dst = out.poly(zero);
    dst = *p;
  }
  out.prune();
  return out;
}

// restriction to A = 0: drop every monomial with |k| > 0
inline FourierTaylorSeries restrict_to_zero_action(const FourierTaylorSeries& f) {
  FourierTaylorSeries out(f.ell(), f.fourier_cutoff(), 0, f.real_flagged());
  const auto& mono = f.basis().mono;
  std::vector<int> zero(f.ell(), 0);
  for (const auto& [nu, p] : f.modes())
    for (size_t i = 0; i < p.size(); ++i)
      if (p[i] != Complex{} && abs_sum(mono[i]) == 0)
        out.add_coeff(nu, zero, p[i]);
  out.prune();
  return out;
}

// g(alpha) = f(alpha + s) for constant real s: coefficients pick up e^{i nu.s}
inline FourierTaylorSeries argument_shift(const FourierTaylorSeries& f,
                                          const std::vector<double>& s) {
  if (static_cast<int>(s.size()) != f.ell())
    throw DimensionMismatch("argument_shift: shift length != ell");
  FourierTaylorSeries out(f.ell(), f.fourier_cutoff(), f.taylor_degree(),
                          f.real_flagged());
  out.add_tail(f.tail_bound());
  const auto& mono = f.basis().mono;
  for (const auto& [nu, p] : f.modes()) {
    double arg = 0.0;
    for (int j = 0; j < f.ell(); ++j) arg += nu[j] * s[j];
    Complex phase = std::exp(Complex(0.0, arg));
    for (size_t i = 0; i < p.size(); ++i)
      if (p[i] != Complex{}) out.add_coeff(nu, mono[i], p[i] * phase);
  }
  return out;
}

// ---------------------------------------------------------------------------
// angle composition  f(A, alpha' + Delta(A, alpha'))
//
// Evaluated on an angle grid of M >= 2N+1 points per dimension (M chosen
// 2,3,5-smooth so the discrete transform factors), then re-expanded by
// discrete Fourier transform; Taylor dependence is carried exactly through
// the grid because exp of a constant-free polynomial truncates finitely.

inline int smooth_grid_size(int minimum) {
  for (int m = minimum;; ++m) {
    int r = m;
    for (int p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

namespace detail {

inline double abs_bound(Complex z) {
  return std::abs(z.real()) + std::abs(z.imag());
}

// dense Taylor polynomial kernel over a shared basis: the pair list of
// in-range products is precomputed, as are the majorant weights of the
// degree-overflow pairs (measured on the domain supplied at construction)
struct PolyOps {
  const MonomialBasis* b;
  struct Pair {
    int i, j, t;
  };
  std::vector<Pair> keep;
  std::vector<Pair> drop;  // t indexes drop_w
  std::vector<double> drop_w;

  explicit PolyOps(const MonomialBasis& basis,
                   const PolydiskDomain* dom = nullptr)
      : b(&basis) {
    std::vector<int> ksum(b->ell);
    for (int i = 0; i < b->size(); ++i)
      for (int j = 0; j < b->size(); ++j) {
        for (int t = 0; t < b->ell; ++t)
          ksum[t] = b->mono[i][t] + b->mono[j][t];
        if (abs_sum(ksum) <= b->degree) {
          keep.push_back({i, j, b->index(ksum)});
        } else {
          drop_w.push_back(dom ? mono_weight(ksum, *dom) : 1.0);
          drop.push_back({i, j, static_cast<int>(drop_w.size()) - 1});
        }
      }
  }

  // r += p*q; overflow majorant lands in *tail scaled by mode_weight
  void mul_acc(const std::vector<Complex>& p, const std::vector<Complex>& q,
               std::vector<Complex>& r, double* tail,
               double mode_weight) const {
    for (const auto& e : keep) r[e.t] += p[e.i] * q[e.j];
    if (tail && !drop.empty()) {
      double acc = 0.0;
      for (const auto& e : drop)
        acc += abs_bound(p[e.i]) * abs_bound(q[e.j]) * drop_w[e.t];
      *tail += acc * mode_weight;
    }
  }

  std::vector<Complex> mul(const std::vector<Complex>& p,
                           const std::vector<Complex>& q, double* tail,
                           double mode_weight) const {
    std::vector<Complex> r(b->size());
    mul_acc(p, q, r, tail, mode_weight);
    return r;
  }

  // exp(u) for u with zero constant term: the power series terminates at
  // the truncation degree
  std::vector<Complex> exp_nilpotent(const std::vector<Complex>& u,
                                     double* tail, double mode_weight) const {
    std::vector<Complex> r(b->size());
    r[b->index(std::vector<int>(b->ell, 0))] = 1.0;
    std::vector<Complex> term = r;
    for (int m = 1; m <= b->degree; ++m) {
      term = mul(term, u, tail, mode_weight);
      double inv = 1.0 / m;
      bool nonzero = false;
      for (int i = 0; i < b->size(); ++i) {
        term[i] *= inv;
        r[i] += term[i];
        if (term[i] != Complex{}) nonzero = true;
      }
      if (!nonzero) break;
    }
    return r;
  }
};

}  // namespace detail

inline FourierTaylorSeries multiply(const FourierTaylorSeries& f,
                                    const FourierTaylorSeries& g,
                                    const PolydiskDomain* weigh_dom) {
  require_same_shape(f, g);
  const int ell = f.ell();
  const int N = std::max(f.fourier_cutoff(), g.fourier_cutoff());
  const int d = std::max(f.taylor_degree(), g.taylor_degree());
  FourierTaylorSeries out(ell, N, d, f.real_flagged() && g.real_flagged());
  const auto& basis = out.basis();
  const int B = basis.size();
  detail::PolyOps ops(basis, weigh_dom);

  // lift both factors onto the output basis
  auto lift = [&](const FourierTaylorSeries& s,
                  const std::vector<int>& nu) -> std::vector<Complex> {
    std::vector<Complex> q(B);
    const auto& mono = s.basis().mono;
    const auto* p = s.poly_if_present(nu);
    for (size_t i = 0; i < p->size(); ++i)
      if ((*p)[i] != Complex{}) q[basis.index(mono[i])] = (*p)[i];
    return q;
  };

  double tail = f.tail_bound() + g.tail_bound();
  // pre-lift all modes of both factors; cache weighted column sums for the
  // modes whose products can fall outside the Fourier cutoff
  std::vector<std::vector<int>> fnu, gnu;
  std::vector<std::vector<Complex>> fco, gco;
  std::vector<double> fsum, gsum;
  auto weighted_sum = [&](const std::vector<Complex>& q) {
    double s = 0.0;
    for (int i = 0; i < B; ++i)
      if (q[i] != Complex{})
        s += detail::abs_bound(q[i]) *
             (weigh_dom ? mono_weight(basis.mono[i], *weigh_dom) : 1.0);
    return s;
  };
  for (const auto& [nu, p] : f.modes()) {
    fnu.push_back(nu);
    fco.push_back(lift(f, nu));
    fsum.push_back(weighted_sum(fco.back()));
  }
  for (const auto& [nu, p] : g.modes()) {
    gnu.push_back(nu);
    gco.push_back(lift(g, nu));
    gsum.push_back(weighted_sum(gco.back()));
  }

  std::vector<int> nusum(ell);
  std::vector<Complex> acc(B);
  for (size_t a = 0; a < fnu.size(); ++a)
    for (size_t b = 0; b < gnu.size(); ++b) {
      for (int t = 0; t < ell; ++t) nusum[t] = fnu[a][t] + gnu[b][t];
      const double mode_w =
          weigh_dom ? std::exp(weigh_dom->kappa * abs_sum(nusum)) : 1.0;
      if (abs_sum(nusum) <= N) {
        std::fill(acc.begin(), acc.end(), Complex{});
        ops.mul_acc(fco[a], gco[b], acc, &tail, mode_w);
        auto& dst = out.poly(nusum);
        for (int i = 0; i < B; ++i) dst[i] += acc[i];
      } else {
        tail += fsum[a] * gsum[b] * mode_w;
      }
    }
  out.add_tail(tail);
  out.prune();
  return out;
}

// substitutes alpha = alpha' + Delta(A, alpha') into every series of `fs`
// (all sharing the same Delta); weigh_dom supplies the majorant weights for
// the re-expansion residual, and when that residual exceeds overflow_tol
// the composition refuses.
inline std::vector<FourierTaylorSeries> compose_angle_many(
    const std::vector<const FourierTaylorSeries*>& fs,
    const std::vector<FourierTaylorSeries>& delta,
    const PolydiskDomain* weigh_dom = nullptr, double overflow_tol = -1.0) {
  if (fs.empty()) return {};
  const int ell = fs.front()->ell();
  if (static_cast<int>(delta.size()) != ell)
    throw DimensionMismatch("compose_angle: delta needs one series per angle");
  int N = 0;
  int d = 0;
  for (const auto* f : fs) {
    if (f->ell() != ell) throw DimensionMismatch("compose_angle: mixed ell");
    N = std::max(N, f->fourier_cutoff());
    d = std::max(d, f->taylor_degree());
  }
  bool delta_real = true;
  bool delta_zero = true;
  for (const auto& g : delta) {
    if (g.ell() != ell) throw DimensionMismatch("compose_angle: mixed ell");
    N = std::max(N, g.fourier_cutoff());
    d = std::max(d, g.taylor_degree());
    delta_real = delta_real && g.real_flagged();
    if (!g.empty()) delta_zero = false;
  }
  if (delta_zero) {
    std::vector<FourierTaylorSeries> out;
    for (const auto* f : fs) out.push_back(*f);
    return out;
  }

  const auto basis = MonomialBasis::make(ell, d);
  detail::PolyOps ops(*basis, weigh_dom);
  const int B = basis->size();
  const int zero_idx = basis->index(std::vector<int>(ell, 0));
  const int M = smooth_grid_size(2 * N + 1);
  const int K = 2 * N + 1;
  const double two_pi = 2.0 * std::acos(-1.0);

  std::vector<Complex> root(M);
  for (int g = 0; g < M; ++g)
    root[g] = std::exp(Complex(0.0, two_pi * g / M));
  auto mode_phase = [&](long long t) -> Complex {
    long long r = t % M;
    if (r < 0) r += M;
    return root[static_cast<size_t>(r)];
  };

  long long npts = 1;
  for (int j = 0; j < ell; ++j) npts *= M;
  const double inv_npts = 1.0 / static_cast<double>(npts);

  // lift onto the shared basis, flat coefficient blocks per mode
  struct Flat {
    std::vector<std::vector<int>> nu;
    std::vector<Complex> co;  // nu.size() x B
  };
  auto lift = [&](const FourierTaylorSeries& s) {
    Flat out;
    const auto& mono = s.basis().mono;
    for (const auto& [nu, p] : s.modes()) {
      std::vector<Complex> q(B);
      for (size_t i = 0; i < p.size(); ++i)
        if (p[i] != Complex{}) q[basis->index(mono[i])] = p[i];
      out.nu.push_back(nu);
      out.co.insert(out.co.end(), q.begin(), q.end());
    }
    return out;
  };
  const int nf = static_cast<int>(fs.size());
  std::vector<Flat> fflat;
  for (const auto* f : fs) fflat.push_back(lift(*f));
  std::vector<Flat> dflat;
  for (const auto& g : delta) dflat.push_back(lift(g));

  std::vector<int> numax(ell, 0);
  for (const auto& F : fflat)
    for (const auto& nu : F.nu)
      for (int j = 0; j < ell; ++j)
        numax[j] = std::max(numax[j], std::abs(nu[j]));

  double ladder_tail = 0.0;
  std::vector<double> tails(nf, 0.0);

  // grid evaluation: at each point the composed integrand is a Taylor
  // polynomial; the angle substitution enters through per-dimension scalar
  // phases w_j = e^{i(theta_j + tau0_j)} and truncated-exponential ladders
  // E_j^n = exp(i u_j)^n with u_j the constant-free part of delta_j
  std::vector<std::vector<Complex>> values(
      nf, std::vector<Complex>(static_cast<size_t>(npts) * B, Complex{}));
  std::vector<int> gidx(ell, 0);
  std::vector<std::vector<Complex>> tau(ell, std::vector<Complex>(B));
  std::vector<std::vector<Complex>> ppow(ell);
  std::vector<std::vector<Complex>> wpow(ell, std::vector<Complex>(K));
  std::vector<char> u_zero(ell, 1);
  std::vector<Complex> u(B), scratch_a(B), scratch_b(B);
  std::vector<Complex> ladder_buf(B), prod_cur(B), prod_next(B), fq(B);
  for (int j = 0; j < ell; ++j)
    ppow[j].assign(static_cast<size_t>(K) * B, Complex{});

  for (long long pt = 0; pt < npts; ++pt) {
    for (int j = 0; j < ell; ++j) {
      std::fill(tau[j].begin(), tau[j].end(), Complex{});
      const auto& D = dflat[j];
      for (size_t mi = 0; mi < D.nu.size(); ++mi) {
        long long t = 0;
        for (int jj = 0; jj < ell; ++jj)
          t += (long long)D.nu[mi][jj] * gidx[jj];
        Complex ph = mode_phase(t);
        const Complex* q = &D.co[mi * B];
        for (int i = 0; i < B; ++i) tau[j][i] += q[i] * ph;
      }
      Complex tau0 = tau[j][zero_idx];
      u_zero[j] = 1;
      for (int i = 0; i < B; ++i)
        if (i != zero_idx && tau[j][i] != Complex{}) u_zero[j] = 0;

      Complex w = root[gidx[j]] * std::exp(Complex(0.0, 1.0) * tau0);
      Complex winv = 1.0 / w;
      auto& wp = wpow[j];
      wp[N] = 1.0;
      for (int n = 1; n <= numax[j]; ++n) {
        wp[N + n] = wp[N + n - 1] * w;
        wp[N - n] = wp[N - n + 1] * winv;
      }
      if (!u_zero[j]) {
        for (int i = 0; i < B; ++i)
          u[i] = i == zero_idx ? Complex{} : Complex(0.0, 1.0) * tau[j][i];
        auto E = ops.exp_nilpotent(u, &ladder_tail, inv_npts);
        for (auto& v : u) v = -v;
        auto Einv = ops.exp_nilpotent(u, &ladder_tail, inv_npts);
        auto& pp = ppow[j];
        std::fill(pp.begin(), pp.end(), Complex{});
        pp[static_cast<size_t>(N) * B + zero_idx] = 1.0;
        for (int n = 1; n <= numax[j]; ++n) {
          std::copy(pp.begin() + (N + n - 1) * B, pp.begin() + (N + n) * B,
                    scratch_a.begin());
          std::fill(scratch_b.begin(), scratch_b.end(), Complex{});
          ops.mul_acc(scratch_a, E, scratch_b, &ladder_tail, inv_npts);
          std::copy(scratch_b.begin(), scratch_b.end(),
                    pp.begin() + (N + n) * B);
          std::copy(pp.begin() + (N - n + 1) * B, pp.begin() + (N - n + 2) * B,
                    scratch_a.begin());
          std::fill(scratch_b.begin(), scratch_b.end(), Complex{});
          ops.mul_acc(scratch_a, Einv, scratch_b, &ladder_tail, inv_npts);
          std::copy(scratch_b.begin(), scratch_b.end(),
                    pp.begin() + (N - n) * B);
        }
      }
    }

    for (int fi = 0; fi < nf; ++fi) {
      Complex* acc = &values[fi][static_cast<size_t>(pt) * B];
      const auto& F = fflat[fi];
      for (size_t mi = 0; mi < F.nu.size(); ++mi) {
        const auto& nu = F.nu[mi];
        Complex scalar = 1.0;
        for (int j = 0; j < ell; ++j) scalar *= wpow[j][N + nu[j]];
        std::copy(F.co.begin() + mi * B, F.co.begin() + (mi + 1) * B,
                  fq.begin());
        const std::vector<Complex>* cur = &fq;
        for (int j = 0; j < ell; ++j) {
          if (u_zero[j] || nu[j] == 0) continue;
          const Complex* lad = &ppow[j][static_cast<size_t>(N + nu[j]) * B];
          std::copy(lad, lad + B, ladder_buf.begin());
          std::fill(prod_next.begin(), prod_next.end(), Complex{});
          ops.mul_acc(*cur, ladder_buf, prod_next, &tails[fi], inv_npts);
          prod_cur.swap(prod_next);
          cur = &prod_cur;
        }
        for (int i = 0; i < B; ++i) acc[i] += scalar * (*cur)[i];
      }
    }

    int j = ell - 1;
    while (j >= 0) {
      if (++gidx[j] < M) break;
      gidx[j] = 0;
      --j;
    }
  }

  // separable inverse transform, one dimension at a time; box modes
  // |nu_j| <= N come out exactly, the diamond |nu|_1 <= N is kept and the
  // rest is tallied as re-expansion residual
  auto mod_idx = [&](long long t) -> int {
    long long r = t % M;
    if (r < 0) r += M;
    return static_cast<int>(r);
  };
  std::vector<FourierTaylorSeries> result;
  for (int fi = 0; fi < nf; ++fi) {
    std::vector<Complex> cur = std::move(values[fi]);
    for (int t = 0; t < ell; ++t) {
      long long preK = 1;
      for (int j = 0; j < t; ++j) preK *= K;
      long long postB = B;
      for (int j = t + 1; j < ell; ++j) postB *= M;
      std::vector<Complex> next(static_cast<size_t>(preK) * K * postB,
                                Complex{});
      for (long long p = 0; p < preK; ++p)
        for (int m = 0; m < K; ++m) {
          int numode = m - N;
          for (long long q = 0; q < postB; ++q) {
            Complex a{};
            for (int g = 0; g < M; ++g)
              a += cur[(p * M + g) * postB + q] *
                   std::conj(root[mod_idx((long long)numode * g)]);
            next[(p * K + m) * postB + q] = a;
          }
        }
      cur = std::move(next);
    }

    FourierTaylorSeries out(ell, N, d, false);
    double discarded = 0.0;
    std::vector<int> box(ell, -N);
    while (true) {
      long long idx = 0;
      for (int j = 0; j < ell; ++j) idx = idx * K + (box[j] + N);
      const Complex* coef = &cur[idx * B];
      if (abs_sum(box) <= N) {
        bool nonzero = false;
        for (int i = 0; i < B; ++i)
          if (coef[i] != Complex{}) nonzero = true;
        if (nonzero) {
          auto& dst = out.poly(box);
          for (int i = 0; i < B; ++i) dst[i] = coef[i] * inv_npts;
        }
      } else {
        double w = weigh_dom ? std::exp(weigh_dom->kappa * abs_sum(box)) : 1.0;
        for (int i = 0; i < B; ++i)
          if (coef[i] != Complex{})
            discarded +=
                std::abs(coef[i]) * inv_npts *
                (weigh_dom ? mono_weight(basis->mono[i], *weigh_dom) : 1.0) * w;
      }
      int j = ell - 1;
      while (j >= 0) {
        if (++box[j] <= N) break;
        box[j] = -N;
        --j;
      }
      if (j < 0) break;
    }

    if (overflow_tol >= 0.0 && discarded > overflow_tol)
      throw CompositionOverflow("compose_angle: re-expansion residual " +
                                std::to_string(discarded) +
                                " exceeds tolerance");
    double delta_tails = 0.0;
    for (const auto& g : delta) delta_tails += g.tail_bound();
    out.add_tail(fs[fi]->tail_bound() + delta_tails + ladder_tail + tails[fi] +
                 discarded);
    out.prune(0.0);
    if (fs[fi]->real_flagged() && delta_real) out.symmetrize_real();
    out.prune(0.0);
    result.push_back(std::move(out));
  }
  return result;
}

inline FourierTaylorSeries compose_angle(
    const FourierTaylorSeries& f, const std::vector<FourierTaylorSeries>& delta,
    const PolydiskDomain* weigh_dom = nullptr, double overflow_tol = -1.0) {
  return std::move(
      compose_angle_many({&f}, delta, weigh_dom, overflow_tol).front());
}

// ---------------------------------------------------------------------------
// text dump format: header "ell N d", then one line per coefficient
// "nu_1 .. nu_ell k_1 .. k_ell re im", sorted lexicographically in (nu, k)

inline void dump_series(const FourierTaylorSeries& f, std::ostream& os) {
  char buf[128];
  os << f.ell() << ' ' << f.fourier_cutoff() << ' ' << f.taylor_degree() << '\n';
  const auto& mono = f.basis().mono;
  for (const auto& [nu, p] : f.modes()) {
    // collect (k, c) pairs in lexicographic k order
    std::vector<std::pair<std::vector<int>, Complex>> rows;
    for (size_t i = 0; i < p.size(); ++i)
      if (p[i] != Complex{}) rows.emplace_back(mono[i], p[i]);
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [k, c] : rows) {
      for (int v : nu) os << v << ' ';
      for (int v : k) os << v << ' ';
      std::snprintf(buf, sizeof buf, "%.17g %.17g", c.real(), c.imag());
      os << buf << '\n';
    }
  }
}

inline void dump_series_file(const FourierTaylorSeries& f,
                             const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  dump_series(f, os);
}

inline FourierTaylorSeries load_series(std::istream& is) {
  int ell, N, d;
  if (!(is >> ell >> N >> d))
    throw Error("series load: malformed header");
  FourierTaylorSeries f(ell, N, d);
  std::vector<int> nu(ell), k(ell);
  double re, im;
  while (true) {
    for (int j = 0; j < ell; ++j)
      if (!(is >> nu[j])) {
        if (j == 0 && is.eof()) {
          f.prune();
          return f;
        }
        throw Error("series load: truncated row");
      }
    for (int j = 0; j < ell; ++j)
      if (!(is >> k[j])) throw Error("series load: truncated row");
    if (!(is >> re >> im)) throw Error("series load: truncated row");
    f.set_coeff(nu, k, Complex(re, im));
  }
}

inline FourierTaylorSeries load_series_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open for reading: " + path);
  return load_series(is);
}

}  // namespace kam
