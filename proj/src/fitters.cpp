#include "nvtherm/fitters.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "nvtherm/errors.hpp"

namespace nvtherm::fitters {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid) - 1, v.end());
  return 0.5 * (hi + v[mid - 1]);
}

// Robust noise scale from first differences (MAD-based).
double diff_noise_scale(std::span<const double> s) {
  if (s.size() < 3) return 0.0;
  std::vector<double> d(s.size() - 1);
  for (size_t i = 0; i + 1 < s.size(); ++i) d[i] = s[i + 1] - s[i];
  const double med = median_of(d);
  for (double& x : d) x = std::fabs(x - med);
  return 1.4826 * median_of(d) / std::sqrt(2.0);
}

struct GoldenResult {
  double x;
  double value;
};

template <typename F>
GoldenResult golden_max(F&& f, double a, double b, double xtol) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - gr * (b - a);
  double x2 = a + gr * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  while (b - a > xtol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = f(x1);
    }
  }
  double x = 0.5 * (a + b);
  return {x, f(x)};
}

}  // namespace

double FitResult::param(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return params[i];
  }
  throw InvalidArgument("FitResult: no parameter named '" + name + "'");
}

double FitResult::stderr_of(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return stderr_proxy[i];
  }
  throw InvalidArgument("FitResult: no parameter named '" + name + "'");
}

FitResult lm_fit(const std::function<void(std::span<const double>, std::span<double>)>& residual_fn,
                 std::size_t n_residuals, std::vector<double> p0,
                 std::vector<std::string> names, std::vector<double> lo,
                 std::vector<double> hi, const LmOptions& options) {
  const size_t n = p0.size();
  if (n == 0 || n_residuals < n) {
    throw InvalidArgument("lm_fit: need at least as many residuals as parameters");
  }
  if (names.size() != n) throw InvalidArgument("lm_fit: names/params size mismatch");
  const bool bounded = !lo.empty() || !hi.empty();
  if (bounded && (lo.size() != n || hi.size() != n)) {
    throw InvalidArgument("lm_fit: bounds must be empty or match the parameter count");
  }

  auto clamp_to_bounds = [&](Eigen::VectorXd& p) {
    if (!bounded) return;
    for (size_t j = 0; j < n; ++j) p(static_cast<long>(j)) = std::clamp(p(static_cast<long>(j)), lo[j], hi[j]);
  };

  Eigen::VectorXd p = Eigen::Map<Eigen::VectorXd>(p0.data(), static_cast<long>(n));
  clamp_to_bounds(p);

  Eigen::VectorXd r(static_cast<long>(n_residuals));
  Eigen::VectorXd r_try(static_cast<long>(n_residuals));
  auto eval = [&](const Eigen::VectorXd& params, Eigen::VectorXd& out) {
    residual_fn(std::span<const double>(params.data(), n), std::span<double>(out.data(), n_residuals));
    for (long i = 0; i < out.size(); ++i) {
      if (!std::isfinite(out(i))) throw NumericError("lm_fit: residual function produced a non-finite value");
    }
  };

  eval(p, r);
  double cost = r.squaredNorm();

  Eigen::MatrixXd jac(static_cast<long>(n_residuals), static_cast<long>(n));
  Eigen::VectorXd rp(static_cast<long>(n_residuals)), rm(static_cast<long>(n_residuals));
  auto fill_jacobian = [&]() {
    for (size_t j = 0; j < n; ++j) {
      const long lj = static_cast<long>(j);
      double h = 1e-6 * std::max(std::fabs(p(lj)), 1e-6);
      double hp = h, hm = h;
      if (bounded) {
        hp = std::min(hp, hi[j] - p(lj));
        hm = std::min(hm, p(lj) - lo[j]);
        if (hp + hm <= 0.0) {  // degenerate box; probe outward anyway
          hp = hm = h;
        }
      }
      Eigen::VectorXd probe = p;
      probe(lj) = p(lj) + hp;
      eval(probe, rp);
      probe(lj) = p(lj) - hm;
      eval(probe, rm);
      jac.col(lj) = (rp - rm) / (hp + hm);
    }
  };

  double lambda = options.lambda0;
  bool step_converged = false;
  int iter = 0;
  Eigen::VectorXd grad(static_cast<long>(n));

  for (iter = 1; iter <= options.max_iterations; ++iter) {
    fill_jacobian();
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    grad = jac.transpose() * r;

    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::MatrixXd a = jtj;
      for (long d = 0; d < a.rows(); ++d) {
        a(d, d) += lambda * std::max(jtj(d, d), 1e-12);
      }
      Eigen::VectorXd delta = a.ldlt().solve(-grad);
      Eigen::VectorXd p_try = p + delta;
      clamp_to_bounds(p_try);
      eval(p_try, r_try);
      const double cost_try = r_try.squaredNorm();
      if (cost_try <= cost) {
        double max_rel = 0.0;
        for (size_t j = 0; j < n; ++j) {
          const long lj = static_cast<long>(j);
          max_rel = std::max(max_rel, std::fabs(p_try(lj) - p(lj)) /
                                          (std::fabs(p(lj)) + options.param_tol));
        }
        p = p_try;
        r = r_try;
        cost = cost_try;
        lambda = std::max(lambda / 3.0, 1e-14);
        accepted = true;
        if (max_rel < options.param_tol) step_converged = true;
        break;
      }
      lambda *= 4.0;
      if (lambda > 1e14) break;
    }
    if (!accepted || step_converged) break;
  }

  // Quality numbers at the accepted point.
  fill_jacobian();
  Eigen::MatrixXd jtj = jac.transpose() * jac;
  grad = jac.transpose() * r;

  FitResult result;
  result.names = std::move(names);
  result.params.assign(p.data(), p.data() + n);
  result.residual_norm = std::sqrt(cost);
  result.iterations = iter;

  // Gradient check over parameters strictly inside the box; bound-pinned
  // directions legitimately keep a one-sided gradient.
  double grad_inf = 0.0;
  for (size_t j = 0; j < n; ++j) {
    const long lj = static_cast<long>(j);
    if (bounded) {
      const double width = hi[j] - lo[j];
      const double margin = 1e-12 * std::max(1.0, std::fabs(width));
      if (p(lj) - lo[j] <= margin || hi[j] - p(lj) <= margin) continue;
    }
    grad_inf = std::max(grad_inf, std::fabs(grad(lj)));
  }
  result.grad_inf_norm = grad_inf;
  const double gtol = 1e-6 * (1.0 + cost);
  result.converged = step_converged && grad_inf < gtol;
  if (!result.converged) {
    result.warning = true;
    result.message = step_converged ? "converged step but gradient above tolerance"
                                    : "iteration cap or stall before parameter tolerance";
  }

  const double dof = static_cast<double>(n_residuals) - static_cast<double>(n);
  const double variance = dof > 0 ? cost / dof : 0.0;
  Eigen::MatrixXd cov = jtj.completeOrthogonalDecomposition().pseudoInverse();
  result.stderr_proxy.resize(n);
  for (size_t j = 0; j < n; ++j) {
    const double v = cov(static_cast<long>(j), static_cast<long>(j)) * variance;
    result.stderr_proxy[j] = v > 0 ? std::sqrt(v) : 0.0;
  }
  return result;
}

namespace {

struct DipGuess {
  double center;
  double prominence;
};

std::vector<DipGuess> detect_dips(const Spectrum& spec, double fwhm_guess) {
  const auto& f = spec.f_MHz;
  const auto& s = spec.s;
  const size_t n = s.size();
  const double df = (f.back() - f.front()) / static_cast<double>(n - 1);

  const int half = std::max(1, static_cast<int>(std::lround(fwhm_guess / 2.0 / df)));
  std::vector<double> smooth(n);
  for (size_t i = 0; i < n; ++i) {
    const size_t a = i > static_cast<size_t>(half) ? i - static_cast<size_t>(half) : 0;
    const size_t b = std::min(n - 1, i + static_cast<size_t>(half));
    double acc = 0.0;
    for (size_t k = a; k <= b; ++k) acc += s[k];
    smooth[i] = acc / static_cast<double>(b - a + 1);
  }

  const double noise = diff_noise_scale(s);
  const double threshold = 3.0 * noise;
  const int shoulder = std::max(10 * half, 25);

  std::vector<DipGuess> dips;
  for (size_t i = 1; i + 1 < n; ++i) {
    if (!(smooth[i] <= smooth[i - 1] && smooth[i] <= smooth[i + 1])) continue;
    if (i > 1 && smooth[i] == smooth[i - 1]) continue;  // plateau: keep left edge only
    const size_t a = i > static_cast<size_t>(shoulder) ? i - static_cast<size_t>(shoulder) : 0;
    const size_t b = std::min(n - 1, i + static_cast<size_t>(shoulder));
    double left = -1e300, right = -1e300;
    for (size_t k = a; k <= i; ++k) left = std::max(left, smooth[k]);
    for (size_t k = i; k <= b; ++k) right = std::max(right, smooth[k]);
    const double prom = std::min(left, right) - smooth[i];
    if (prom > threshold) dips.push_back({f[i], prom});
  }
  std::sort(dips.begin(), dips.end(),
            [](const DipGuess& a, const DipGuess& b) { return a.prominence > b.prominence; });
  return dips;
}

}  // namespace

FitResult fit_lorentzian_multi(const Spectrum& spectrum, int n_dips, bool hyperfine,
                               double expected_fwhm_MHz) {
  const size_t n = spectrum.f_MHz.size();
  if (n_dips < 1) throw InvalidArgument("fit_lorentzian_multi: n_dips must be >= 1");
  if (n != spectrum.s.size() || n < 8) {
    throw InvalidArgument("fit_lorentzian_multi: grids mismatched or too short");
  }
  for (size_t i = 1; i < n; ++i) {
    if (!(spectrum.f_MHz[i] > spectrum.f_MHz[i - 1])) {
      throw InvalidArgument("fit_lorentzian_multi: frequency grid must be strictly ascending");
    }
  }
  for (double v : spectrum.s) {
    if (!std::isfinite(v)) throw InvalidArgument("fit_lorentzian_multi: non-finite sample");
  }

  const double span = spectrum.f_MHz.back() - spectrum.f_MHz.front();
  const double grid_df = span / static_cast<double>(n - 1);
  const double fwhm0 = expected_fwhm_MHz > 0 ? expected_fwhm_MHz : 5.0 * grid_df;

  auto dips = detect_dips(spectrum, fwhm0);
  const int wanted = hyperfine ? 2 * n_dips : n_dips;
  const bool paired = hyperfine && static_cast<int>(dips.size()) >= 2 * n_dips;
  if (static_cast<int>(dips.size()) < n_dips) {
    std::ostringstream os;
    os << "fit_lorentzian_multi: found " << dips.size() << " candidate dips, need " << n_dips
       << "; centers:";
    for (const auto& d : dips) os << ' ' << d.center;
    throw NumericError(os.str());
  }

  std::vector<double> centers0;
  double hs0 = hyperfine ? fwhm0 : 0.0;
  if (paired) {
    std::vector<double> raw;
    for (int k = 0; k < wanted; ++k) raw.push_back(dips[static_cast<size_t>(k)].center);
    std::sort(raw.begin(), raw.end());
    double gap_acc = 0.0;
    for (int k = 0; k < n_dips; ++k) {
      centers0.push_back(0.5 * (raw[static_cast<size_t>(2 * k)] + raw[static_cast<size_t>(2 * k + 1)]));
      gap_acc += raw[static_cast<size_t>(2 * k + 1)] - raw[static_cast<size_t>(2 * k)];
    }
    hs0 = std::max(gap_acc / n_dips, grid_df);
  } else {
    for (int k = 0; k < n_dips; ++k) centers0.push_back(dips[static_cast<size_t>(k)].center);
    std::sort(centers0.begin(), centers0.end());
  }

  std::vector<double> top(spectrum.s.begin(), spectrum.s.end());
  std::sort(top.begin(), top.end());
  const double baseline0 = top[top.size() * 3 / 4];

  std::vector<double> p0{baseline0};
  std::vector<std::string> names{"baseline"};
  std::vector<double> lo{0.0}, hi{2.0};
  if (hyperfine) {
    p0.push_back(hs0);
    names.emplace_back("hyperfine_split");
    lo.push_back(0.0);
    hi.push_back(span / 2.0);
  }
  for (int k = 0; k < n_dips; ++k) {
    const auto tag = std::to_string(k);
    p0.push_back(centers0[static_cast<size_t>(k)]);
    names.push_back("center_" + tag);
    lo.push_back(spectrum.f_MHz.front());
    hi.push_back(spectrum.f_MHz.back());

    p0.push_back(fwhm0);
    names.push_back("fwhm_" + tag);
    lo.push_back(grid_df / 2.0);
    hi.push_back(span);

    double depth = paired ? 2.0 * dips[static_cast<size_t>(k)].prominence
                          : dips[static_cast<size_t>(k)].prominence;
    p0.push_back(std::clamp(depth, 1e-3, 1.5));
    names.push_back("depth_" + tag);
    lo.push_back(1e-6);
    hi.push_back(1.5);
  }

  const int head = hyperfine ? 2 : 1;
  auto model = [n_dips, head, hyperfine](std::span<const double> p, double f) {
    double s = p[0];
    const double hs = hyperfine ? p[1] : 0.0;
    for (int k = 0; k < n_dips; ++k) {
      const size_t base = static_cast<size_t>(head + 3 * k);
      const double c = p[base];
      const double hw = p[base + 1] / 2.0;
      const double depth = p[base + 2];
      const double hw2 = hw * hw;
      if (hyperfine) {
        for (double cc : {c - hs / 2.0, c + hs / 2.0}) {
          const double d = f - cc;
          s -= 0.5 * depth * hw2 / (d * d + hw2);
        }
      } else {
        const double d = f - c;
        s -= depth * hw2 / (d * d + hw2);
      }
    }
    return s;
  };

  auto residual = [&](std::span<const double> p, std::span<double> r) {
    for (size_t i = 0; i < n; ++i) r[i] = model(p, spectrum.f_MHz[i]) - spectrum.s[i];
  };

  FitResult res = lm_fit(residual, n, p0, names, lo, hi);

  // Report dips sorted by center.
  std::vector<int> order(static_cast<size_t>(n_dips));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return res.params[static_cast<size_t>(head + 3 * a)] < res.params[static_cast<size_t>(head + 3 * b)];
  });
  FitResult sorted = res;
  for (int k = 0; k < n_dips; ++k) {
    const size_t dst = static_cast<size_t>(head + 3 * k);
    const size_t src = static_cast<size_t>(head + 3 * order[static_cast<size_t>(k)]);
    for (size_t j = 0; j < 3; ++j) {
      sorted.params[dst + j] = res.params[src + j];
      sorted.stderr_proxy[dst + j] = res.stderr_proxy[src + j];
    }
  }
  return sorted;
}

FitResult fit_fid(std::span<const double> t_us, std::span<const double> s, bool fix_nu,
                  double nu_fixed) {
  const size_t n = t_us.size();
  if (n != s.size() || n < 8) throw InvalidArgument("fit_fid: grids mismatched or too short");
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(s[i]) || !std::isfinite(t_us[i])) {
      throw InvalidArgument("fit_fid: non-finite sample");
    }
    if (i > 0 && !(t_us[i] > t_us[i - 1])) {
      throw InvalidArgument("fit_fid: time grid must be strictly ascending");
    }
  }
  if (t_us.front() < 0.0) throw InvalidArgument("fit_fid: times must be >= 0");

  const double span = t_us.back() - t_us.front();
  double dt_min = span;
  for (size_t i = 1; i < n; ++i) dt_min = std::min(dt_min, t_us[i] - t_us[i - 1]);
  const double nyquist = 0.5 / dt_min;

  const auto [s_min_it, s_max_it] = std::minmax_element(s.begin(), s.end());
  const double c0 = std::clamp(*s_max_it - *s_min_it, 1e-3, 0.999);

  // Periodogram over the sampled grid; robust for nonuniform spacing too.
  double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n);
  double best_f = 1.0 / span;
  double best_p = -1.0;
  const int n_freq = 4000;
  const double f_lo = 0.25 / span;
  for (int k = 0; k < n_freq; ++k) {
    const double f = f_lo + (nyquist * 0.95 - f_lo) * k / (n_freq - 1);
    double re = 0.0, im = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double ph = kTwoPi * f * t_us[i];
      re += (s[i] - mean) * std::cos(ph);
      im += (s[i] - mean) * std::sin(ph);
    }
    const double p = re * re + im * im;
    if (p > best_p) {
      best_p = p;
      best_f = f;
    }
  }

  // Envelope time scale: first fringe extremum whose excursion falls under 1/e.
  const double asym = 1.0 - c0 / 2.0;
  double t2_0 = span / 2.0;
  for (size_t i = 1; i + 1 < n; ++i) {
    const double e_prev = std::fabs(s[i - 1] - asym);
    const double e_here = std::fabs(s[i] - asym);
    const double e_next = std::fabs(s[i + 1] - asym);
    if (e_here >= e_prev && e_here >= e_next && e_here < (c0 / 2.0) * std::exp(-1.0)) {
      t2_0 = std::max(t_us[i], 4.0 * dt_min);
      break;
    }
  }

  std::vector<double> p0{c0, best_f, t2_0};
  std::vector<std::string> names{"contrast", "delta_f_MHz", "t2_star_us"};
  std::vector<double> lo{1e-3, 1e-6, 2.0 * dt_min};
  std::vector<double> hi{0.999, nyquist, 50.0 * span};
  if (!fix_nu) {
    p0.push_back(2.0);
    names.emplace_back("nu");
    lo.push_back(0.3);
    hi.push_back(8.0);
  }

  auto residual = [&](std::span<const double> p, std::span<double> r) {
    const double c = p[0];
    const double f = p[1];
    const double t2 = p[2];
    const double nu = fix_nu ? nu_fixed : p[3];
    for (size_t i = 0; i < n; ++i) {
      const double env = std::exp(-std::pow(t_us[i] / t2, nu));
      r[i] = 1.0 - c / 2.0 + (c / 2.0) * std::cos(kTwoPi * f * t_us[i]) * env - s[i];
    }
  };

  FitResult res = lm_fit(residual, n, p0, names, lo, hi);
  if (fix_nu) {
    res.names.emplace_back("nu");
    res.params.push_back(nu_fixed);
    res.stderr_proxy.push_back(0.0);
  }
  return res;
}

FitResult fit_exponential(std::span<const double> t, std::span<const double> y) {
  const size_t n = t.size();
  if (n != y.size() || n < 4) throw InvalidArgument("fit_exponential: grids mismatched or too short");
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(y[i])) {
      throw InvalidArgument("fit_exponential: non-finite sample");
    }
    if (i > 0 && !(t[i] > t[i - 1])) {
      throw InvalidArgument("fit_exponential: time grid must be strictly ascending");
    }
  }

  const double span = t.back() - t.front();
  const size_t tail = std::max<size_t>(3, n / 10);
  double offset0 = 0.0;
  for (size_t i = n - tail; i < n; ++i) offset0 += y[i];
  offset0 /= static_cast<double>(tail);
  const double a0 = y[0] - offset0;

  // Log-linear decay estimate over the usable head of the series.
  double sum_t = 0, sum_l = 0, sum_tt = 0, sum_tl = 0;
  int used = 0;
  const double sign = a0 >= 0 ? 1.0 : -1.0;
  for (size_t i = 0; i < n; ++i) {
    const double e = sign * (y[i] - offset0);
    if (e > std::fabs(a0) * 0.05 && e > 1e-300) {
      const double l = std::log(e);
      sum_t += t[i];
      sum_l += l;
      sum_tt += t[i] * t[i];
      sum_tl += t[i] * l;
      ++used;
    }
  }
  double tau0 = span / 3.0;
  bool decay_seen = false;
  if (used >= 2) {
    const double denom = used * sum_tt - sum_t * sum_t;
    if (denom > 0) {
      const double slope = (used * sum_tl - sum_t * sum_l) / denom;
      if (slope < 0) {
        tau0 = -1.0 / slope;
        decay_seen = true;
      }
    }
  }

  std::vector<double> p0{a0, std::clamp(tau0, 1e-6 * span, 1e3 * span), offset0};
  std::vector<std::string> names{"amplitude", "tau", "offset"};
  std::vector<double> lo{-1e300, 1e-6 * span, -1e300};
  std::vector<double> hi{1e300, 1e3 * span, 1e300};

  auto residual = [&](std::span<const double> p, std::span<double> r) {
    for (size_t i = 0; i < n; ++i) {
      r[i] = p[0] * std::exp(-(t[i] - t[0]) / p[1]) + p[2] - y[i];
    }
  };

  FitResult res = lm_fit(residual, n, p0, names, lo, hi);
  if (!decay_seen) {
    res.warning = true;
    res.message = "no clear decay in the data; tau started from a span-based guess";
  } else if (span < 3.0 * res.param("tau")) {
    res.warning = true;
    res.message = "series spans less than 3 tau; tau weakly constrained";
  }
  return res;
}

namespace {

double fringe_env(double t, double t2, double nu) { return std::exp(-std::pow(t / t2, nu)); }

}  // namespace

double optimal_wait_us(double contrast, double t2_star_us, double nu, double delta_f_MHz) {
  if (!(contrast > 0 && contrast < 1)) throw InvalidArgument("optimal_wait_us: contrast must be in (0,1)");
  if (!(t2_star_us > 0) || !(nu > 0)) throw InvalidArgument("optimal_wait_us: t2_star_us and nu must be > 0");
  if (delta_f_MHz < 0) throw InvalidArgument("optimal_wait_us: delta_f_MHz must be >= 0");

  const double span = 5.0 * t2_star_us;
  // In the slow-fringe limit the |sin| factor is still rising everywhere in
  // range, so the score degenerates to t^2 * envelope; same scan handles it.
  auto score = [&](double t) {
    const double osc = delta_f_MHz > 1e-9 ? std::fabs(std::sin(kTwoPi * delta_f_MHz * t))
                                          : kTwoPi * t;
    return t * osc * fringe_env(t, t2_star_us, nu);
  };

  // Enough grid points that each |sin| lobe carries ~50 samples.
  const double lobes = std::max(1.0, 2.0 * delta_f_MHz * span);
  const auto n_grid = static_cast<long>(std::min(2e6, std::max(2e4, 50.0 * lobes)));
  double best_t = span;
  double best_v = -1.0;
  for (long i = 1; i <= n_grid; ++i) {
    const double t = span * static_cast<double>(i) / static_cast<double>(n_grid);
    const double v = score(t);
    if (v > best_v) {
      best_v = v;
      best_t = t;
    }
  }
  const double cell = span / static_cast<double>(n_grid);
  const double a = std::max(cell / 2.0, best_t - cell);
  const double b = std::min(span, best_t + cell);
  return golden_max(score, a, b, 1e-10).x;
}

SensitivityReport estimate_sensitivity(double contrast, double t2_star_us, double nu,
                                       double delta_f_MHz, double l_eff_cps,
                                       double dfdT_MHz_per_K) {
  if (!(l_eff_cps > 0)) throw InvalidArgument("estimate_sensitivity: l_eff_cps must be > 0");
  if (!(std::fabs(dfdT_MHz_per_K) > 0)) {
    throw InvalidArgument("estimate_sensitivity: dfdT_MHz_per_K must be non-zero");
  }

  SensitivityReport rep;
  rep.contrast = contrast;
  rep.t2_star_us = t2_star_us;
  rep.nu = nu;
  rep.delta_f_MHz = delta_f_MHz;
  rep.l_eff_cps = l_eff_cps;
  rep.dfdT_MHz_per_K = dfdT_MHz_per_K;

  const double half_c = contrast / 2.0;
  rep.t_optimal_us = optimal_wait_us(contrast, t2_star_us, nu, delta_f_MHz);
  rep.ds_df_max_per_MHz = half_c * kTwoPi * rep.t_optimal_us *
                          std::fabs(std::sin(kTwoPi * delta_f_MHz * rep.t_optimal_us)) *
                          fringe_env(rep.t_optimal_us, t2_star_us, nu);

  rep.t_envelope_us = t2_star_us * std::pow(nu, -1.0 / nu);
  rep.ds_df_envelope_per_MHz =
      half_c * kTwoPi * rep.t_envelope_us * fringe_env(rep.t_envelope_us, t2_star_us, nu);

  const double dfdT = std::fabs(dfdT_MHz_per_K);
  rep.eta_K_per_sqrtHz = 1.0 / (std::sqrt(l_eff_cps) * dfdT * rep.ds_df_max_per_MHz);
  rep.eta_envelope_K_per_sqrtHz =
      1.0 / (std::sqrt(l_eff_cps) * dfdT * rep.ds_df_envelope_per_MHz);
  return rep;
}

IntegrationScaling stddev_vs_integration(std::span<const double> series_K, double dt_s,
                                         std::span<const double> windows_s) {
  if (!(dt_s > 0)) throw InvalidArgument("stddev_vs_integration: dt_s must be > 0");
  if (windows_s.empty()) throw InvalidArgument("stddev_vs_integration: need at least one window");
  const size_t n = series_K.size();

  IntegrationScaling out;
  for (double w : windows_s) {
    const auto k = static_cast<size_t>(std::max<long long>(1, std::llround(w / dt_s)));
    if (n < 10 * k) {
      std::ostringstream os;
      os << "stddev_vs_integration: window " << w << " s needs at least " << 10 * k
         << " samples (10x coverage), series has " << n;
      throw ConfigError(os.str());
    }
    const size_t blocks = n / k;
    std::vector<double> means(blocks);
    for (size_t b = 0; b < blocks; ++b) {
      double acc = 0.0;
      for (size_t i = b * k; i < (b + 1) * k; ++i) acc += series_K[i];
      means[b] = acc / static_cast<double>(k);
    }
    double mu = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(blocks);
    double ss = 0.0;
    for (double m : means) ss += (m - mu) * (m - mu);
    const double sigma = blocks > 1 ? std::sqrt(ss / static_cast<double>(blocks - 1)) : 0.0;
    out.window_s.push_back(static_cast<double>(k) * dt_s);
    out.sigma_K.push_back(sigma);
  }

  double sum_x = 0, sum_y = 0, sum_xx = 0, sum_xy = 0;
  int used = 0;
  double eta_acc = 0.0;
  for (size_t i = 0; i < out.window_s.size(); ++i) {
    eta_acc += out.sigma_K[i] * std::sqrt(out.window_s[i]);
    if (out.sigma_K[i] <= 0.0) continue;
    const double x = std::log(out.window_s[i]);
    const double y = std::log(out.sigma_K[i]);
    sum_x += x;
    sum_y += y;
    sum_xx += x * x;
    sum_xy += x * y;
    ++used;
  }
  out.eta_K_per_sqrtHz = eta_acc / static_cast<double>(out.window_s.size());
  if (used >= 2) {
    const double denom = used * sum_xx - sum_x * sum_x;
    out.slope = denom != 0.0 ? (used * sum_xy - sum_x * sum_y) / denom : 0.0;
  }
  return out;
}

TemperatureCalibration calibrate_temperature(
    std::span<const std::pair<double, double>> setting_and_d, const nvspin::NvParams& nv) {
  if (setting_and_d.empty()) {
    throw InvalidArgument("calibrate_temperature: need at least one measurement");
  }
  if (nv.dD_dT_MHz_per_K == 0.0) {
    throw ConfigError("calibrate_temperature: nv.dD_dT_MHz_per_K must be non-zero");
  }

  std::vector<std::pair<double, double>> rows(setting_and_d.begin(), setting_and_d.end());
  std::sort(rows.begin(), rows.end());

  TemperatureCalibration cal;
  for (const auto& [setting, d] : rows) {
    cal.settings.push_back(setting);
    cal.d_MHz.push_back(d);
    cal.temps_K.push_back(nv.t0_K + (d - nv.d_zfs0_MHz) / nv.dD_dT_MHz_per_K);
  }

  if (rows.size() >= 2) {
    bool inc = true, dec = true;
    for (size_t i = 1; i < rows.size(); ++i) {
      inc = inc && cal.d_MHz[i] > cal.d_MHz[i - 1];
      dec = dec && cal.d_MHz[i] < cal.d_MHz[i - 1];
    }
    cal.monotonic_warning = !(inc || dec);
  }
  return cal;
}

double TemperatureCalibration::temperature_at(double setting) const {
  const size_t n = settings.size();
  if (n == 1) return temps_K[0];
  size_t hi = 1;
  while (hi + 1 < n && settings[hi] < setting) ++hi;
  const size_t lo = hi - 1;
  const double t = (setting - settings[lo]) / (settings[hi] - settings[lo]);
  return temps_K[lo] + t * (temps_K[hi] - temps_K[lo]);
}

}  // namespace nvtherm::fitters
