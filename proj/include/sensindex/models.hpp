#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sensindex/errors.hpp"
#include "sensindex/quadrature.hpp"
#include "sensindex/ranking.hpp"
#include "sensindex/rng.hpp"
#include "sensindex/util.hpp"

namespace sensindex {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// A generative regression model Y = f(X, eps) with X real-valued and eps a
// short vector of independent U[0,1] noise coordinates. Conditional moments
// and the conditional CDF are supplied in closed form where available; the
// numeric routines fall back to quadrature / inner Monte Carlo otherwise.
//
// Conventions used throughout:
//  * integration over the input runs in the u = F_X(x) variable, with
//    x = x_quantile(u); `x_breakpoints` lists u-locations where phi / m2 /
//    cond_cdf(t, .) are non-smooth independently of t, and
//    `cond_cdf_kinks(t)` lists additional u-locations that depend on t,
//  * integration over the output runs in the v = F_Y(t) variable, with
//    t = y_quantile(v); `v_breakpoints` lists interior v-locations where
//    output-side integrands lose smoothness,
//  * `t_curve`, when present, is the closed form of t -> E_X[F(t|X)^2].
struct GenerativeModel {
  std::string name;
  int eps_dim = 1;

  double f_min = 0.0;  // essential bounds of the output (f is bounded)
  double f_max = 1.0;

  std::function<double(double, std::span<const double>)> f;
  std::function<double(double)> phi;  // E[f(x, eps)]
  std::function<double(double)> m2;   // E[f(x, eps)^2]
  std::function<double(double)> m3;   // E[f(x, eps)^3] (optional)
  std::function<double(double)> m4;   // E[f(x, eps)^4] (optional)

  std::function<double(double, double)> cond_cdf;  // (t, x) -> P(Y <= t | X = x)
  std::function<double(double)> x_cdf;
  std::function<double(double)> x_quantile;
  std::function<double(double)> y_cdf;
  std::function<double(double)> y_quantile;  // optional; bisection fallback
  std::function<double(double)> t_curve;     // optional closed form of E_X[F(t|X)^2]

  std::vector<double> x_breakpoints;  // u-scale, t-independent
  std::function<std::vector<double>(double)> cond_cdf_kinks;  // u-scale, per t
  std::vector<double> v_breakpoints;  // F_Y-scale

  // Set when this model is the indicator transform 1{base <= threshold}.
  std::optional<double> indicator_threshold;
  std::shared_ptr<const GenerativeModel> indicator_base;
};

// A d-dimensional output built from component models that read a shared
// input X and a shared noise vector eps (so the components are dependent).
struct VectorModel {
  std::string name;
  int eps_dim = 1;
  std::vector<GenerativeModel> components;
};

// ---------------------------------------------------------------------------
// Generic helpers
// ---------------------------------------------------------------------------

inline std::vector<double> cond_cdf_kinks_of(const GenerativeModel& m, double t) {
  std::vector<double> ks = m.x_breakpoints;
  if (m.cond_cdf_kinks) {
    const auto extra = m.cond_cdf_kinks(t);
    ks.insert(ks.end(), extra.begin(), extra.end());
  }
  return ks;
}

inline double model_y_quantile(const GenerativeModel& m, double v) {
  if (v < 0.0 || v > 1.0) throw InvalidLevel("quantile argument must lie in [0, 1]");
  if (m.y_quantile) return m.y_quantile(v);
  if (!m.y_cdf) throw ParseError("model '" + m.name + "' provides neither y_quantile nor y_cdf");
  return monotone_inverse(m.y_cdf, v, m.f_min, m.f_max);
}

// E_X[F(t|X)^2], using the closed form when available.
inline double model_t_curve(const GenerativeModel& m, double t, const QuadratureSpec& spec = {}) {
  if (m.t_curve) return m.t_curve(t);
  return integrate_01_piecewise(
      [&](double u) {
        const double c = m.cond_cdf(t, m.x_quantile(u));
        return c * c;
      },
      cond_cdf_kinks_of(m, t), spec, "t_curve");
}

// G(v) = E_X[F(Q_Y(v)|X)^2]; the output-side curve in the pinned-CDF scale.
inline double model_g_of_v(const GenerativeModel& m, double v, const QuadratureSpec& spec = {}) {
  return model_t_curve(m, model_y_quantile(m, v), spec);
}

struct ModelMoments {
  double mean_y = 0.0;   // E[Y]
  double m2_y = 0.0;     // E[Y^2]
  double var_y = 0.0;    // Var(Y)
  double e_phi2 = 0.0;   // E[phi(X)^2]
  double var_phi = 0.0;  // Var(phi(X))
};

inline ModelMoments model_moments(const GenerativeModel& m, const QuadratureSpec& spec = {}) {
  ModelMoments mm;
  mm.mean_y = integrate_01_piecewise([&](double u) { return m.phi(m.x_quantile(u)); },
                                     m.x_breakpoints, spec, "E[Y]");
  mm.m2_y = integrate_01_piecewise([&](double u) { return m.m2(m.x_quantile(u)); },
                                   m.x_breakpoints, spec, "E[Y^2]");
  mm.e_phi2 = integrate_01_piecewise(
      [&](double u) {
        const double p = m.phi(m.x_quantile(u));
        return p * p;
      },
      m.x_breakpoints, spec, "E[phi^2]");
  mm.var_y = mm.m2_y - mm.mean_y * mm.mean_y;
  mm.var_phi = mm.e_phi2 - mm.mean_y * mm.mean_y;
  return mm;
}

struct TrueIndices {
  double sobol = 0.0;
  double cvm = 0.0;
};

inline TrueIndices true_indices(const GenerativeModel& m, const QuadratureSpec& spec = {}) {
  TrueIndices ti;
  const ModelMoments mm = model_moments(m, spec);
  const double floor = 0x1.0p-40 * std::max(1.0, mm.m2_y);
  if (mm.var_y <= floor)
    throw DegenerateVariance("model '" + m.name + "': output variance is numerically zero");
  ti.sobol = mm.var_phi / mm.var_y;
  const double g_integral = integrate_01_piecewise(
      [&](double v) { return model_g_of_v(m, v, spec); }, m.v_breakpoints, spec, "int G");
  ti.cvm = 6.0 * g_integral - 2.0;
  return ti;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------
//
// Draw order (frozen; determinism and parallel invariance depend on it): for
// point i a dedicated Stream(seed, i) yields first u for X = x_quantile(u),
// then eps_dim further uniforms forming the noise vector shared by every
// component. Whole-sample results therefore do not depend on thread count.

struct ModelDraw {
  Sample sample;
  std::vector<double> eps;  // flattened, eps[i * eps_dim + j]
  int eps_dim = 1;
};

namespace detail {

inline ModelDraw draw_points(const std::string& name, int eps_dim,
                             const std::function<double(double)>& x_quantile,
                             std::span<const GenerativeModel> comps, std::size_t n,
                             std::uint64_t seed) {
  if (n < 1) throw ParseError("sample size must be positive");
  ModelDraw d;
  d.eps_dim = eps_dim;
  d.sample.xs.resize(n);
  d.sample.ys.assign(comps.size(), std::vector<double>(n));
  d.eps.resize(n * static_cast<std::size_t>(eps_dim));
  std::vector<double> e(static_cast<std::size_t>(eps_dim));
  for (std::size_t i = 0; i < n; ++i) {
    Stream st(seed, i);
    double u = st.uniform01();
    if (u <= 0.0) u = 0x1.0p-53;  // keep quantile arguments inside (0, 1)
    const double x = x_quantile(u);
    for (int j = 0; j < eps_dim; ++j) {
      e[static_cast<std::size_t>(j)] = st.uniform01();
      d.eps[i * static_cast<std::size_t>(eps_dim) + static_cast<std::size_t>(j)] =
          e[static_cast<std::size_t>(j)];
    }
    d.sample.xs[i] = x;
    for (std::size_t k = 0; k < comps.size(); ++k) d.sample.ys[k][i] = comps[k].f(x, e);
  }
  (void)name;
  d.sample.validate();
  return d;
}

}  // namespace detail

inline ModelDraw sample_model_with_noise(const GenerativeModel& m, std::size_t n,
                                         std::uint64_t seed) {
  return detail::draw_points(m.name, m.eps_dim, m.x_quantile, std::span(&m, 1), n, seed);
}

inline ModelDraw sample_model_with_noise(const VectorModel& vm, std::size_t n,
                                         std::uint64_t seed) {
  return detail::draw_points(vm.name, vm.eps_dim, vm.components.at(0).x_quantile,
                             std::span(vm.components.data(), vm.components.size()), n, seed);
}

inline Sample sample_model(const GenerativeModel& m, std::size_t n, std::uint64_t seed) {
  return sample_model_with_noise(m, n, seed).sample;
}

inline Sample sample_model(const VectorModel& vm, std::size_t n, std::uint64_t seed) {
  return sample_model_with_noise(vm, n, seed).sample;
}

// ---------------------------------------------------------------------------
// Catalogue
// ---------------------------------------------------------------------------

inline GenerativeModel make_pure_noise() {
  GenerativeModel m;
  m.name = "pure_noise";
  m.f_min = 0.0;
  m.f_max = 1.0;
  m.f = [](double, std::span<const double> e) { return e[0]; };
  m.phi = [](double) { return 0.5; };
  m.m2 = [](double) { return 1.0 / 3.0; };
  m.m3 = [](double) { return 0.25; };
  m.m4 = [](double) { return 0.2; };
  m.cond_cdf = [](double t, double) { return clamp01(t); };
  m.x_cdf = [](double x) { return clamp01(x); };
  m.x_quantile = [](double u) { return u; };
  m.y_cdf = [](double t) { return clamp01(t); };
  m.y_quantile = [](double v) { return v; };
  m.t_curve = [](double t) {
    const double c = clamp01(t);
    return c * c;
  };
  return m;
}

inline GenerativeModel make_deterministic_monotone() {
  GenerativeModel m;
  m.name = "deterministic_monotone";
  m.f_min = 0.0;
  m.f_max = 1.0;
  m.f = [](double x, std::span<const double>) { return x; };
  m.phi = [](double x) { return x; };
  m.m2 = [](double x) { return x * x; };
  m.m3 = [](double x) { return x * x * x; };
  m.m4 = [](double x) { return x * x * x * x; };
  m.cond_cdf = [](double t, double x) { return t >= x ? 1.0 : 0.0; };
  m.x_cdf = [](double x) { return clamp01(x); };
  m.x_quantile = [](double u) { return u; };
  m.y_cdf = [](double t) { return clamp01(t); };
  m.y_quantile = [](double v) { return v; };
  m.t_curve = [](double t) { return clamp01(t); };  // E[1{t >= X}^2] = F_X(t)
  m.cond_cdf_kinks = [](double t) { return std::vector<double>{t}; };
  return m;
}

inline GenerativeModel make_linear_uniform() {
  GenerativeModel m;
  m.name = "linear_uniform";
  m.f_min = 0.0;
  m.f_max = 2.0;
  m.f = [](double x, std::span<const double> e) { return x + e[0]; };
  m.phi = [](double x) { return x + 0.5; };
  m.m2 = [](double x) { return x * x + x + 1.0 / 3.0; };
  m.m3 = [](double x) { return ((x + 1.5) * x + 1.0) * x + 0.25; };
  m.m4 = [](double x) { return (((x + 2.0) * x + 2.0) * x + 1.0) * x + 0.2; };
  m.cond_cdf = [](double t, double x) { return clamp01(t - x); };
  m.x_cdf = [](double x) { return clamp01(x); };
  m.x_quantile = [](double u) { return u; };
  m.y_cdf = [](double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 2.0) return 1.0;
    if (t <= 1.0) return 0.5 * t * t;
    return 1.0 - 0.5 * (2.0 - t) * (2.0 - t);
  };
  m.y_quantile = [](double v) {
    return v <= 0.5 ? std::sqrt(2.0 * v) : 2.0 - std::sqrt(2.0 * (1.0 - v));
  };
  m.t_curve = [](double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 2.0) return 1.0;
    if (t <= 1.0) return t * t * t / 3.0;
    const double r = t - 1.0;
    return r + (1.0 - r * r * r) / 3.0;
  };
  m.cond_cdf_kinks = [](double t) { return std::vector<double>{t - 1.0, t}; };
  m.v_breakpoints = {0.5};  // image of the density kink at t = 1
  return m;
}

inline GenerativeModel make_trig_bounded(double a = 0.5) {
  if (!(a > 0.0) || !(a <= 2.0)) throw ParseError("trig_bounded: parameter a must lie in (0, 2]");
  GenerativeModel m;
  m.name = "trig_bounded";
  m.f_min = -1.0 - a;
  m.f_max = 1.0 + a;
  const double two_pi = 2.0 * std::acos(-1.0);
  m.f = [a, two_pi](double x, std::span<const double> e) {
    return std::sin(two_pi * x) + a * (2.0 * e[0] - 1.0);
  };
  m.phi = [two_pi](double x) { return std::sin(two_pi * x); };
  m.m2 = [a, two_pi](double x) {
    const double s = std::sin(two_pi * x);
    return s * s + a * a / 3.0;
  };
  m.m3 = [a, two_pi](double x) {
    const double s = std::sin(two_pi * x);
    return s * s * s + a * a * s;
  };
  m.m4 = [a, two_pi](double x) {
    const double s = std::sin(two_pi * x);
    const double s2 = s * s;
    return s2 * s2 + 2.0 * a * a * s2 + a * a * a * a / 5.0;
  };
  m.cond_cdf = [a, two_pi](double t, double x) {
    return clamp01((t - std::sin(two_pi * x) + a) / (2.0 * a));
  };
  m.x_cdf = [](double x) { return clamp01(x); };
  m.x_quantile = [](double u) { return u; };
  // Clamp saturation boundaries sin(2*pi*x) = t -+ a; between them the
  // conditional CDF is analytic in x (the sine extrema are not kinks).
  m.cond_cdf_kinks = [a, two_pi](double t) {
    std::vector<double> ks;
    for (double c : {t - a, t + a}) {
      if (c >= -1.0 && c <= 1.0) {
        double x1 = std::asin(c) / two_pi;
        if (x1 < 0.0) x1 += 1.0;
        ks.push_back(x1);
        ks.push_back(0.5 - std::asin(c) / two_pi);
      }
    }
    return ks;
  };

  // F_Y has no closed form; precompute a fine monotone table once and expose
  // consistent interpolated y_cdf / y_quantile.
  const int grid_n = 8193;
  auto ts = std::make_shared<std::vector<double>>(grid_n);
  auto fs = std::make_shared<std::vector<double>>(grid_n);
  for (int i = 0; i < grid_n; ++i) {
    const double t = m.f_min + (m.f_max - m.f_min) * static_cast<double>(i) / (grid_n - 1);
    (*ts)[static_cast<std::size_t>(i)] = t;
    const auto pieces = unit_pieces(m.cond_cdf_kinks(t));
    (*fs)[static_cast<std::size_t>(i)] =
        integrate_pieces_fixed([&](double u) { return m.cond_cdf(t, u); }, pieces, 64);
  }
  (*fs)[0] = 0.0;
  (*fs)[grid_n - 1] = 1.0;
  for (int i = 1; i < grid_n; ++i) {
    auto& cur = (*fs)[static_cast<std::size_t>(i)];
    cur = std::min(1.0, std::max(cur, (*fs)[static_cast<std::size_t>(i - 1)]));
  }
  m.y_cdf = [ts, fs](double t) {
    if (t <= (*ts).front()) return 0.0;
    if (t >= (*ts).back()) return 1.0;
    const auto it = std::upper_bound(ts->begin(), ts->end(), t);
    const std::size_t k = static_cast<std::size_t>(it - ts->begin());
    const double t0 = (*ts)[k - 1], t1 = (*ts)[k];
    const double f0 = (*fs)[k - 1], f1 = (*fs)[k];
    return f0 + (f1 - f0) * (t - t0) / (t1 - t0);
  };
  m.y_quantile = [ts, fs](double v) {
    if (v <= 0.0) return (*ts).front();
    if (v >= 1.0) return (*ts).back();
    const auto it = std::lower_bound(fs->begin(), fs->end(), v);
    std::size_t k = static_cast<std::size_t>(it - fs->begin());
    if (k == 0) return (*ts).front();
    const double f0 = (*fs)[k - 1], f1 = (*fs)[k];
    if (f1 <= f0) return (*ts)[k];
    return (*ts)[k - 1] + ((*ts)[k] - (*ts)[k - 1]) * (v - f0) / (f1 - f0);
  };
  // curvature of F_Y jumps where t -+ a meets the sine range boundary
  for (double t : {-1.0 + a, 1.0 - a}) {
    const double v = m.y_cdf(t);
    if (v > 1e-9 && v < 1.0 - 1e-9) m.v_breakpoints.push_back(v);
  }
  return m;
}

inline GenerativeModel make_step_model(double h = 0.5) {
  if (!(h > 0.0) || !(h <= 1.0)) throw ParseError("step_model: parameter h must lie in (0, 1]");
  GenerativeModel m;
  m.name = "step_model";
  m.f_min = 0.0;
  m.f_max = 1.0 + h;
  const auto shift = [h](double x) { return x >= 0.5 ? h : 0.0; };
  m.f = [shift](double x, std::span<const double> e) { return shift(x) + e[0]; };
  m.phi = [shift](double x) { return shift(x) + 0.5; };
  m.m2 = [shift](double x) {
    const double s = shift(x);
    return s * s + s + 1.0 / 3.0;
  };
  m.m3 = [shift](double x) {
    const double s = shift(x);
    return ((s + 1.5) * s + 1.0) * s + 0.25;
  };
  m.m4 = [shift](double x) {
    const double s = shift(x);
    return (((s + 2.0) * s + 2.0) * s + 1.0) * s + 0.2;
  };
  m.cond_cdf = [shift](double t, double x) { return clamp01(t - shift(x)); };
  m.x_cdf = [](double x) { return clamp01(x); };
  m.x_quantile = [](double u) { return u; };
  m.y_cdf = [h](double t) { return 0.5 * (clamp01(t) + clamp01(t - h)); };
  m.y_quantile = [m_y_cdf = m.y_cdf, h](double v) {
    return monotone_inverse(m_y_cdf, v, 0.0, 1.0 + h);
  };
  m.t_curve = [h](double t) {
    const double c0 = clamp01(t), c1 = clamp01(t - h);
    return 0.5 * (c0 * c0 + c1 * c1);
  };
  m.x_breakpoints = {0.5};
  m.cond_cdf_kinks = [](double) { return std::vector<double>{0.5}; };
  m.v_breakpoints = {0.5 * h, 1.0 - 0.5 * h};
  return m;
}

// Two-component fixture: Y1 = X + eps1 depends on the input, Y2 = eps2 is
// pure noise independent of both X and Y1's noise.
inline VectorModel make_pair_linear_noise() {
  VectorModel vm;
  vm.name = "pair_linear_noise";
  vm.eps_dim = 2;
  GenerativeModel first = make_linear_uniform();
  first.name = "pair_linear_noise[1]";
  first.eps_dim = 2;
  first.f = [](double x, std::span<const double> e) { return x + e[0]; };
  GenerativeModel second = make_pure_noise();
  second.name = "pair_linear_noise[2]";
  second.eps_dim = 2;
  second.f = [](double, std::span<const double> e) { return e[1]; };
  vm.components = {std::move(first), std::move(second)};
  return vm;
}

inline std::vector<std::string> catalogue_names() {
  return {"pure_noise", "deterministic_monotone", "linear_uniform", "trig_bounded",
          "step_model"};
}

namespace detail {

inline void reject_unknown_params(const std::string& model,
                                  const std::map<std::string, double>& params,
                                  std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : params) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ParseError("model '" + model + "': unknown parameter '" + key + "'");
  }
}

}  // namespace detail

inline GenerativeModel make_model(const std::string& name,
                                  const std::map<std::string, double>& params = {}) {
  if (name == "pure_noise") {
    detail::reject_unknown_params(name, params, {});
    return make_pure_noise();
  }
  if (name == "deterministic_monotone") {
    detail::reject_unknown_params(name, params, {});
    return make_deterministic_monotone();
  }
  if (name == "linear_uniform") {
    detail::reject_unknown_params(name, params, {});
    return make_linear_uniform();
  }
  if (name == "trig_bounded") {
    detail::reject_unknown_params(name, params, {"a"});
    const auto it = params.find("a");
    return make_trig_bounded(it == params.end() ? 0.5 : it->second);
  }
  if (name == "step_model") {
    detail::reject_unknown_params(name, params, {"h"});
    const auto it = params.find("h");
    return make_step_model(it == params.end() ? 0.5 : it->second);
  }
  throw UnknownModel("unknown model '" + name + "'");
}

inline VectorModel make_vector_model(const std::string& name,
                                     const std::map<std::string, double>& params = {}) {
  if (name == "pair_linear_noise") {
    detail::reject_unknown_params(name, params, {});
    return make_pair_linear_noise();
  }
  GenerativeModel scalar = make_model(name, params);
  VectorModel vm;
  vm.name = scalar.name;
  vm.eps_dim = scalar.eps_dim;
  vm.components = {std::move(scalar)};
  return vm;
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

// Indicator transform 1{Y <= t}; its conditional mean is the conditional CDF
// of the base model and all higher conditional moments coincide with it.
// Indicator transform 1{f_base <= t}. Indicators built over the *same shared
// base pointer* form a family; the covariance code recognizes the family and
// uses the exact conditional-CDF formulas instead of noise quadrature.
inline GenerativeModel indicator_model(std::shared_ptr<const GenerativeModel> base_ptr, double t) {
  const GenerativeModel& base = *base_ptr;
  GenerativeModel m;
  m.name = base.name + "_indicator";
  m.eps_dim = base.eps_dim;
  m.f_min = 0.0;
  m.f_max = 1.0;
  m.f = [base_ptr, t](double x, std::span<const double> e) {
    return base_ptr->f(x, e) <= t ? 1.0 : 0.0;
  };
  const auto p = [base_ptr, t](double x) { return base_ptr->cond_cdf(t, x); };
  m.phi = p;
  m.m2 = p;
  m.m3 = p;
  m.m4 = p;
  m.cond_cdf = [p](double u, double x) {
    if (u < 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return 1.0 - p(x);
  };
  m.x_cdf = base.x_cdf;
  m.x_quantile = base.x_quantile;
  m.y_cdf = [base_ptr, t](double u) {
    if (u < 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return 1.0 - base_ptr->y_cdf(t);
  };
  m.x_breakpoints = base.x_breakpoints;
  if (base.cond_cdf_kinks) {
    auto base_kinks = base.cond_cdf_kinks;
    const auto at_t = base_kinks(t);
    m.x_breakpoints.insert(m.x_breakpoints.end(), at_t.begin(), at_t.end());
  }
  m.indicator_threshold = t;
  m.indicator_base = std::move(base_ptr);
  return m;
}

inline GenerativeModel indicator_model(const GenerativeModel& base, double t) {
  return indicator_model(std::make_shared<const GenerativeModel>(base), t);
}

// ---------------------------------------------------------------------------
// Quantile transfer: build a generative representation from a conditional CDF
// ---------------------------------------------------------------------------

struct ConditionalLaw {
  std::string name = "transfer";
  std::function<double(double, double)> cond_cdf;  // (t, x)
  double t_lo = 0.0;  // bracket containing every conditional support
  double t_hi = 1.0;
  std::function<double(double)> x_cdf;
  std::function<double(double)> x_quantile;
};

namespace detail {

// Inner Monte Carlo for conditional moments of transfer models: the noise law
// of f(x, .) is only available through the quantile map, so moments are
// averaged over a fixed documented budget of 10^4 low-level draws seeded
// deterministically from the bit pattern of x.
inline constexpr int kInnerMcBudget = 10'000;

inline double transfer_moment(const std::function<double(double)>& quantile_of_e, double x,
                              int power, int budget = kInnerMcBudget) {
  if (budget < 100) throw InnerBudgetExceeded("inner Monte Carlo budget below minimum (100)");
  const std::uint64_t seed = splitmix64(0x7ab5u ^ std::bit_cast<std::uint64_t>(x));
  Stream st(seed, static_cast<std::uint64_t>(power));
  std::vector<double> vals(static_cast<std::size_t>(budget));
  for (int i = 0; i < budget; ++i) {
    const double y = quantile_of_e(st.uniform01());
    double acc = y;
    for (int k = 1; k < power; ++k) acc *= y;
    vals[static_cast<std::size_t>(i)] = acc;
  }
  return mean_of(vals);
}

}  // namespace detail

inline GenerativeModel quantile_transfer(const ConditionalLaw& law) {
  if (!law.cond_cdf || !law.x_cdf || !law.x_quantile)
    throw ParseError("quantile_transfer: cond_cdf, x_cdf and x_quantile are all required");
  if (!(law.t_lo < law.t_hi))
    throw ParseError("quantile_transfer: need t_lo < t_hi");

  // Probe-grid validation: monotone in t, limits ~0 and ~1, range within
  // [0, 1]; violations indicate an invalid conditional CDF.
  for (int pi = 0; pi <= 20; ++pi) {
    const double u = std::min(1.0 - 1e-6, std::max(1e-6, pi / 20.0));
    const double x = law.x_quantile(u);
    double prev = -1e300;
    for (int ti = 0; ti <= 128; ++ti) {
      const double t = law.t_lo + (law.t_hi - law.t_lo) * ti / 128.0;
      const double c = law.cond_cdf(t, x);
      if (!std::isfinite(c) || c < -1e-9 || c > 1.0 + 1e-9)
        throw InvalidConditionalCdf("conditional CDF leaves [0, 1] at t=" + std::to_string(t) +
                                    ", x=" + std::to_string(x));
      if (c < prev - 1e-9)
        throw InvalidConditionalCdf("conditional CDF decreases in t at t=" + std::to_string(t) +
                                    ", x=" + std::to_string(x));
      prev = std::max(prev, c);
    }
    if (law.cond_cdf(law.t_lo, x) > 1e-6)
      throw InvalidConditionalCdf("conditional CDF does not vanish at the lower bracket");
    if (law.cond_cdf(law.t_hi, x) < 1.0 - 1e-6)
      throw InvalidConditionalCdf("conditional CDF does not reach 1 at the upper bracket");
  }

  GenerativeModel m;
  m.name = law.name;
  m.eps_dim = 1;
  m.f_min = law.t_lo;
  m.f_max = law.t_hi;
  const auto cc = law.cond_cdf;
  const double lo = law.t_lo, hi = law.t_hi;
  // Left-continuous conditional quantile: matching the base pair in law needs
  // exactly the generalized inverse, not any smoothed version of it.
  const auto cond_quantile = [cc, lo, hi](double x, double e) {
    return monotone_inverse([&](double t) { return cc(t, x); }, e, lo, hi);
  };
  m.f = [cond_quantile](double x, std::span<const double> e) { return cond_quantile(x, e[0]); };
  m.phi = [cond_quantile](double x) {
    return detail::transfer_moment([&](double e) { return cond_quantile(x, e); }, x, 1);
  };
  m.m2 = [cond_quantile](double x) {
    return detail::transfer_moment([&](double e) { return cond_quantile(x, e); }, x, 2);
  };
  m.m3 = [cond_quantile](double x) {
    return detail::transfer_moment([&](double e) { return cond_quantile(x, e); }, x, 3);
  };
  m.m4 = [cond_quantile](double x) {
    return detail::transfer_moment([&](double e) { return cond_quantile(x, e); }, x, 4);
  };
  m.cond_cdf = cc;
  m.x_cdf = law.x_cdf;
  m.x_quantile = law.x_quantile;
  const auto xq = law.x_quantile;
  m.y_cdf = [cc, xq](double t) {
    QuadratureSpec ys;
    ys.rel_tol = 1e-6;  // smoothness of a user-supplied law is unknown
    return integrate_01_piecewise([&](double u) { return cc(t, xq(u)); }, {}, ys, "F_Y");
  };
  return m;
}

// Bilinear interpolation of a tabulated conditional CDF on a rectangular
// (x, t) grid; the input law is taken uniform over the tabulated x-range.
inline GenerativeModel tabulated_conditional_model(const std::vector<double>& xs,
                                                   const std::vector<double>& ts,
                                                   const std::vector<std::vector<double>>& F,
                                                   const std::string& name = "tabulated") {
  if (xs.size() < 2 || ts.size() < 2)
    throw ParseError("tabulated conditional CDF needs at least a 2x2 grid");
  if (F.size() != xs.size())
    throw ParseError("tabulated conditional CDF: row count does not match x grid");
  for (const auto& row : F)
    if (row.size() != ts.size())
      throw ParseError("tabulated conditional CDF: column count does not match t grid");
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (!(xs[i] > xs[i - 1])) throw ParseError("tabulated x grid must be strictly increasing");
  for (std::size_t j = 1; j < ts.size(); ++j)
    if (!(ts[j] > ts[j - 1])) throw ParseError("tabulated t grid must be strictly increasing");

  auto xs_p = std::make_shared<const std::vector<double>>(xs);
  auto ts_p = std::make_shared<const std::vector<double>>(ts);
  auto f_p = std::make_shared<const std::vector<std::vector<double>>>(F);

  ConditionalLaw law;
  law.name = name;
  law.t_lo = ts.front();
  law.t_hi = ts.back();
  const double x_lo = xs.front(), x_hi = xs.back();
  law.x_cdf = [x_lo, x_hi](double x) { return clamp01((x - x_lo) / (x_hi - x_lo)); };
  law.x_quantile = [x_lo, x_hi](double u) { return x_lo + (x_hi - x_lo) * u; };
  law.cond_cdf = [xs_p, ts_p, f_p](double t, double x) {
    const auto& gx = *xs_p;
    const auto& gt = *ts_p;
    const auto& gf = *f_p;
    const double xc = std::min(gx.back(), std::max(gx.front(), x));
    const double tc = std::min(gt.back(), std::max(gt.front(), t));
    std::size_t i = static_cast<std::size_t>(
        std::upper_bound(gx.begin(), gx.end(), xc) - gx.begin());
    i = std::min(std::max<std::size_t>(i, 1), gx.size() - 1);
    std::size_t j = static_cast<std::size_t>(
        std::upper_bound(gt.begin(), gt.end(), tc) - gt.begin());
    j = std::min(std::max<std::size_t>(j, 1), gt.size() - 1);
    const double wx = (xc - gx[i - 1]) / (gx[i] - gx[i - 1]);
    const double wt = (tc - gt[j - 1]) / (gt[j] - gt[j - 1]);
    const double lowt = gf[i - 1][j - 1] * (1.0 - wt) + gf[i - 1][j] * wt;
    const double hiwt = gf[i][j - 1] * (1.0 - wt) + gf[i][j] * wt;
    return lowt * (1.0 - wx) + hiwt * wx;
  };
  return quantile_transfer(law);
}

// ---------------------------------------------------------------------------
// Self-check: cheap statistical and structural consistency probes
// ---------------------------------------------------------------------------

inline void model_self_check(const GenerativeModel& m, const QuadratureSpec& spec = {}) {
  // conditional CDF shape on a probe grid
  for (int pi = 1; pi <= 9; ++pi) {
    const double x = m.x_quantile(pi / 10.0);
    double prev = -1e300;
    for (int ti = 0; ti <= 64; ++ti) {
      const double t = m.f_min + (m.f_max - m.f_min) * ti / 64.0;
      const double c = m.cond_cdf(t, x);
      if (!std::isfinite(c) || c < -1e-9 || c > 1.0 + 1e-9)
        throw InvalidConditionalCdf(m.name + ": conditional CDF leaves [0, 1]");
      if (c < prev - 1e-9)
        throw InvalidConditionalCdf(m.name + ": conditional CDF decreases in t");
      prev = std::max(prev, c);
    }
  }
  // marginal consistency: integral of the conditional CDF matches y_cdf
  for (int ti = 1; ti <= 7; ++ti) {
    const double t = m.f_min + (m.f_max - m.f_min) * ti / 8.0;
    const double lhs = integrate_01_piecewise(
        [&](double u) { return m.cond_cdf(t, m.x_quantile(u)); }, cond_cdf_kinks_of(m, t), spec,
        "marginal check");
    if (std::abs(lhs - m.y_cdf(t)) > 1e-4)
      throw InvalidConditionalCdf(m.name + ": y_cdf is inconsistent with the conditional CDF");
  }
  // quantile consistency (assumes a continuous output law)
  for (int vi = 1; vi <= 19; ++vi) {
    const double v = vi / 20.0;
    if (std::abs(m.y_cdf(model_y_quantile(m, v)) - v) > 1e-5)
      throw InvalidConditionalCdf(m.name + ": y_quantile is not an inverse of y_cdf");
  }
  // conditional moments vs. plain Monte Carlo over the noise
  const int B = 20'000;
  for (int pi = 1; pi <= 4; ++pi) {
    const double x = m.x_quantile(pi / 5.0);
    std::vector<double> f1(B), f2(B);
    std::vector<double> e(static_cast<std::size_t>(m.eps_dim));
    for (int i = 0; i < B; ++i) {
      Stream st(0xab12'0000u + static_cast<std::uint64_t>(pi), static_cast<std::uint64_t>(i));
      for (int j = 0; j < m.eps_dim; ++j) e[static_cast<std::size_t>(j)] = st.uniform01();
      const double y = m.f(x, e);
      f1[static_cast<std::size_t>(i)] = y;
      f2[static_cast<std::size_t>(i)] = y * y;
    }
    const double mu1 = mean_of(f1), mu2 = mean_of(f2);
    const double se1 = std::sqrt(sample_variance(f1) / B);
    const double se2 = std::sqrt(sample_variance(f2) / B);
    if (std::abs(mu1 - m.phi(x)) > 6.0 * se1 + 1e-9)
      throw InvalidConditionalCdf(m.name + ": phi disagrees with Monte Carlo over the noise");
    if (std::abs(mu2 - m.m2(x)) > 6.0 * se2 + 1e-9)
      throw InvalidConditionalCdf(m.name + ": m2 disagrees with Monte Carlo over the noise");
  }
}

}  // namespace sensindex
