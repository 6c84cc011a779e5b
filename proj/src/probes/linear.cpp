#include "rmgen/probes/linear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"
#include "rmgen/numerics/ops.hpp"

namespace rmgen::probes {

double dot(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

double cosine(const Vec& a, const Vec& b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

Vec subtract(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "subtract: length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vec mean_of(const std::vector<Vec>& rows) {
  require(!rows.empty(), "mean_of: no rows");
  Vec out(rows[0].size(), 0.0);
  for (const Vec& r : rows) {
    require(r.size() == out.size(), "mean_of: ragged rows");
    for (std::size_t i = 0; i < r.size(); ++i) out[i] += r[i];
  }
  for (double& v : out) v /= static_cast<double>(rows.size());
  return out;
}

Vec solve_spd(std::vector<double> a, Vec b) {
  const std::size_t n = b.size();
  require(a.size() == n * n, "solve_spd: shape mismatch");
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) throw NumericError("solve_spd: matrix is not positive definite");
    d = std::sqrt(d);
    a[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
  return b;
}

namespace {

// Penalised negative log-likelihood; theta = [w..., b] when intercept.
double logistic_objective(const std::vector<Vec>& x, const std::vector<double>& y,
                          const Vec& theta, const LogisticOptions& o) {
  const std::size_t d = x[0].size();
  double f = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = o.intercept ? theta[d] : 0.0;
    for (std::size_t j = 0; j < d; ++j) z += theta[j] * x[i][j];
    // log(1 + e^z) - y z = -log sigma(z) + (1 - y) z
    f += -num::log_logistic(z) + (1.0 - y[i]) * z;
  }
  for (std::size_t j = 0; j < d; ++j) f += 0.5 * o.ridge * theta[j] * theta[j];
  return f;
}

}  // namespace

LogisticFit fit_logistic(const std::vector<Vec>& x, const std::vector<double>& y,
                         const LogisticOptions& o) {
  require(!x.empty() && x.size() == y.size(), "fit_logistic: bad inputs");
  const std::size_t d = x[0].size();
  for (const Vec& r : x) require(r.size() == d, "fit_logistic: ragged rows");
  const std::size_t p = d + (o.intercept ? 1 : 0);
  require(p >= 1, "fit_logistic: no parameters");

  Vec theta(p, 0.0);
  double f = logistic_objective(x, y, theta, o);
  for (std::size_t iter = 0; iter <= o.max_iter; ++iter) {
    Vec g(p, 0.0);
    std::vector<double> h(p * p, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = o.intercept ? theta[d] : 0.0;
      for (std::size_t j = 0; j < d; ++j) z += theta[j] * x[i][j];
      const double pr = num::logistic(z);
      const double r = pr - y[i];
      const double w = pr * (1.0 - pr);
      auto feat = [&](std::size_t j) { return j < d ? x[i][j] : 1.0; };
      for (std::size_t j = 0; j < p; ++j) {
        const double fj = feat(j);
        g[j] += r * fj;
        if (w == 0.0 || fj == 0.0) continue;
        for (std::size_t k = 0; k <= j; ++k) h[j * p + k] += w * fj * feat(k);
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      g[j] += o.ridge * theta[j];
      h[j * p + j] += o.ridge;
    }
    const LogisticFit current{Vec(theta.begin(), theta.begin() + d), o.intercept ? theta[d] : 0.0,
                              iter};
    if (norm(g) / static_cast<double>(x.size()) <= o.tolerance) return current;
    if (iter == o.max_iter) break;
    for (std::size_t j = 0; j < p; ++j) {
      h[j * p + j] += 1e-12;
      for (std::size_t k = 0; k < j; ++k) h[k * p + j] = h[j * p + k];
    }
    const Vec step = solve_spd(h, g);
    // A Newton decrement below the resolution of f cannot be improved on.
    if (dot(g, step) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f)))
      return current;
    double t = 1.0;
    Vec next(p);
    double f_next = f;
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      for (std::size_t j = 0; j < p; ++j) next[j] = theta[j] - t * step[j];
      f_next = logistic_objective(x, y, next, o);
      if (f_next <= f - 1e-4 * t * dot(g, step)) break;
    }
    if (!(f_next <= f)) break;
    theta = next;
    f = f_next;
  }
  throw FitFailure("fit_logistic: no convergence within " + std::to_string(o.max_iter) +
                   " iterations");
}

std::optional<Vec> mean_difference_direction(const std::vector<Vec>& pos,
                                             const std::vector<Vec>& neg) {
  Vec diff = subtract(mean_of(pos), mean_of(neg));
  const double n = norm(diff);
  if (!(n > 1e-12)) return std::nullopt;
  for (double& v : diff) v /= n;
  return diff;
}

std::optional<Vec> cra_direction(const std::vector<Vec>& py, const std::vector<Vec>& pn,
                                 const std::vector<Vec>& dy, const std::vector<Vec>& dn) {
  require(!py.empty() && py.size() == pn.size() && py.size() == dy.size() &&
              py.size() == dn.size(),
          "cra_direction: the four sets must have equal nonzero size");
  std::vector<Vec> dd;
  dd.reserve(py.size());
  for (std::size_t i = 0; i < py.size(); ++i)
    dd.push_back(subtract(subtract(py[i], pn[i]), subtract(dy[i], dn[i])));
  Vec m = mean_of(dd);
  const double n = norm(m);
  if (!(n > 1e-12)) return std::nullopt;
  for (double& v : m) v /= n;
  return m;
}

double site_accuracy(const std::vector<Vec>& differences, std::uint64_t seed) {
  require(differences.size() >= 2, "site_accuracy: need at least two examples");
  const std::size_t n = differences.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<Vec> x(n);
  std::vector<double> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    const bool flip = r % 2 == 1;
    x[i] = differences[i];
    if (flip)
      for (double& v : x[i]) v = -v;
    y[i] = flip ? 0.0 : 1.0;
  }
  LogisticOptions o;
  o.intercept = false;
  const LogisticFit fit = fit_logistic(x, y, o);
  double correct = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = dot(fit.w, x[i]);
    if (z == 0.0) correct += 0.5;
    else correct += (z > 0.0) == (y[i] == 1.0) ? 1.0 : 0.0;
  }
  return correct / static_cast<double>(n);
}

std::vector<std::size_t> rank_sites(const std::vector<double>& accuracies, std::size_t k) {
  require(k >= 1, "rank_sites: k must be >= 1");
  std::vector<std::size_t> idx(accuracies.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return accuracies[a] > accuracies[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

namespace {

struct Normalised {
  std::vector<Vec> yes, no;
};

Normalised normalise(const CcsFit& fit, const std::vector<Vec>& yes, const std::vector<Vec>& no) {
  Normalised out;
  for (const Vec& v : yes) {
    Vec r = subtract(v, fit.mean_yes);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] /= fit.scale[j];
    out.yes.push_back(std::move(r));
  }
  for (const Vec& v : no) {
    Vec r = subtract(v, fit.mean_no);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] /= fit.scale[j];
    out.no.push_back(std::move(r));
  }
  return out;
}

double ccs_objective(const Vec& theta, double b, const Normalised& s) {
  double loss = 0.0;
  for (std::size_t i = 0; i < s.yes.size(); ++i) {
    const double py = num::logistic(dot(theta, s.yes[i]) + b);
    const double pn = num::logistic(dot(theta, s.no[i]) + b);
    const double cons = py + pn - 1.0;
    const double conf = std::min(py, pn);
    loss += cons * cons + conf * conf;
  }
  return loss / static_cast<double>(s.yes.size());
}

}  // namespace

CcsFit fit_ccs_direction(const std::vector<Vec>& yes, const std::vector<Vec>& no,
                         const CcsOptions& o) {
  require(yes.size() >= 2 && yes.size() == no.size(), "fit_ccs: need matching yes/no sets");
  require(o.restarts >= 1 && o.iterations >= 1, "fit_ccs: empty schedule");
  const std::size_t d = yes[0].size();
  const std::size_t n = yes.size();

  CcsFit fit;
  fit.mean_yes = mean_of(yes);
  fit.mean_no = mean_of(no);
  fit.scale.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double a = yes[i][j] - fit.mean_yes[j];
      const double c = no[i][j] - fit.mean_no[j];
      fit.scale[j] += a * a + c * c;
    }
  for (double& s : fit.scale) {
    s = std::sqrt(s / static_cast<double>(2 * n));
    if (!(s > 1e-12)) s = 1.0;
  }
  const Normalised data = normalise(fit, yes, no);

  Rng rng(o.seed);
  double best = INFINITY;
  for (std::size_t r = 0; r < o.restarts; ++r) {
    Vec theta(d);
    for (double& v : theta) v = rng.normal() / std::sqrt(static_cast<double>(d));
    double b = 0.0;
    Vec m(d + 1, 0.0), v2(d + 1, 0.0);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (std::size_t t = 1; t <= o.iterations; ++t) {
      Vec g(d + 1, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double py = num::logistic(dot(theta, data.yes[i]) + b);
        const double pn = num::logistic(dot(theta, data.no[i]) + b);
        const double cons = 2.0 * (py + pn - 1.0);
        double gy = cons, gn = cons;
        if (py <= pn) gy += 2.0 * py;
        else gn += 2.0 * pn;
        const double zy = gy * py * (1.0 - py) / static_cast<double>(n);
        const double zn = gn * pn * (1.0 - pn) / static_cast<double>(n);
        for (std::size_t j = 0; j < d; ++j) g[j] += zy * data.yes[i][j] + zn * data.no[i][j];
        g[d] += zy + zn;
      }
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
      for (std::size_t j = 0; j <= d; ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v2[j] = b2 * v2[j] + (1.0 - b2) * g[j] * g[j];
        const double step = o.learning_rate * (m[j] / c1) / (std::sqrt(v2[j] / c2) + eps);
        if (j < d) theta[j] -= step;
        else b -= step;
      }
    }
    const double loss = ccs_objective(theta, b, data);
    fit.restart_losses.push_back(loss);
    if (loss < best) {
      best = loss;
      fit.theta = theta;
      fit.bias = b;
      fit.loss = loss;
      fit.best_restart = r;
    }
  }
  // A constant predictor reaches 0.25 at p = 0.5 and 0.2 at its optimum
  // p = 0.4; a restart no better than that has learned nothing.
  bool all_trivial = true;
  for (double l : fit.restart_losses) all_trivial = all_trivial && l >= kConstantCcsLoss - 1e-6;
  if (all_trivial) throw FitFailure("fit_ccs: every restart stayed at the trivial solution");
  return fit;
}

double ccs_loss(const CcsFit& fit, const std::vector<Vec>& yes, const std::vector<Vec>& no) {
  require(!yes.empty() && yes.size() == no.size(), "ccs_loss: need matching yes/no sets");
  return ccs_objective(fit.theta, fit.bias, normalise(fit, yes, no));
}

std::pair<double, double> ccs_probabilities(const CcsFit& fit, const Vec& yes, const Vec& no) {
  const Normalised s = normalise(fit, {yes}, {no});
  return {num::logistic(dot(fit.theta, s.yes[0]) + fit.bias),
          num::logistic(dot(fit.theta, s.no[0]) + fit.bias)};
}

Calibration fit_calibration(const std::vector<double>& c, const std::vector<int>& labels) {
  require(!c.empty() && c.size() == labels.size(), "fit_calibration: bad inputs");
  std::vector<Vec> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < c.size(); ++i) {
    x.push_back({c[i]});
    y.push_back(labels[i] != 0 ? 1.0 : 0.0);
  }
  LogisticOptions o;
  o.ridge = 1e-4;
  const LogisticFit f = fit_logistic(x, y, o);
  return {f.w[0], f.b};
}

double calibrated(const Calibration& cal, double c) { return num::logistic(cal.a * c + cal.b); }

}  // namespace rmgen::probes
