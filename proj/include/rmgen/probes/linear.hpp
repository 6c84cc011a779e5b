#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace rmgen::probes {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b);
double norm(const Vec& a);
// Zero when either vector is zero.
double cosine(const Vec& a, const Vec& b);
Vec subtract(const Vec& a, const Vec& b);
Vec mean_of(const std::vector<Vec>& rows);

// Solves A x = b for symmetric positive definite A (row-major n x n) by
// Cholesky. Throws NumericError if A is not positive definite.
Vec solve_spd(std::vector<double> a, Vec b);

struct LogisticOptions {
  bool intercept = true;
  double ridge = 1e-2;  // penalty ridge/2 * |w|^2; the intercept is not penalised
  std::size_t max_iter = 100;
  double tolerance = 1e-8;  // on the norm of the per-example mean gradient
};

struct LogisticFit {
  Vec w;
  double b = 0.0;
  std::size_t iterations = 0;
};

// Damped Newton on the penalised negative log-likelihood of
// P(y = 1 | x) = sigma(w.x + b). Throws FitFailure when the gradient norm is
// still above tolerance after max_iter iterations.
LogisticFit fit_logistic(const std::vector<Vec>& x, const std::vector<double>& y,
                         const LogisticOptions& options = {});

// normalize(mean(pos) - mean(neg)); nullopt when the difference has norm
// <= 1e-12 (the direction is rejected).
std::optional<Vec> mean_difference_direction(const std::vector<Vec>& pos,
                                             const std::vector<Vec>& neg);

// normalize(mean_i [(py_i - pn_i) - (dy_i - dn_i)]); nullopt when it
// vanishes.
std::optional<Vec> cra_direction(const std::vector<Vec>& py, const std::vector<Vec>& pn,
                                 const std::vector<Vec>& dy, const std::vector<Vec>& dn);

// Source accuracy of one site from difference vectors (preferred minus
// dispreferred). Each difference is sign-flipped for a balanced half of the
// examples (chosen by `seed`) and labelled by the flip, then a logistic
// classifier without intercept is fitted. A prediction exactly on the
// boundary counts as half correct, so an uninformative site scores 0.5.
double site_accuracy(const std::vector<Vec>& differences, std::uint64_t seed);

// Indices of the top min(k, n_sites) sites by accuracy, ties by index.
std::vector<std::size_t> rank_sites(const std::vector<double>& accuracies, std::size_t k);

// Consistency and confidence objective over yes/no activations:
// mean (p_yes - (1 - p_no))^2 + mean min(p_yes, p_no)^2, with
// p = sigma(theta . x + b) on normalised activations.
struct CcsOptions {
  std::size_t restarts = 10;
  std::size_t iterations = 1000;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
};

struct CcsFit {
  Vec theta;
  double bias = 0.0;
  double loss = 0.0;
  // Normalisation: each set is centred on its own mean, then both are
  // divided by a shared per-coordinate scale.
  Vec mean_yes;
  Vec mean_no;
  Vec scale;
  std::size_t best_restart = 0;
  std::vector<double> restart_losses;
};

// Best loss of a direction-free predictor (p = 0.4 everywhere).
inline constexpr double kConstantCcsLoss = 0.2;

// Throws FitFailure when no restart gets more than 1e-6 below the best
// constant predictor.
CcsFit fit_ccs_direction(const std::vector<Vec>& yes, const std::vector<Vec>& no,
                         const CcsOptions& options = {});
double ccs_loss(const CcsFit& fit, const std::vector<Vec>& yes, const std::vector<Vec>& no);
// (p_yes, p_no) for one contrast pair under the fit's normalisation.
std::pair<double, double> ccs_probabilities(const CcsFit& fit, const Vec& yes, const Vec& no);

// Maximum-likelihood (a, b) for P(label) = sigma(a c + b).
struct Calibration {
  double a = 1.0;
  double b = 0.0;
};
Calibration fit_calibration(const std::vector<double>& c, const std::vector<int>& labels);
double calibrated(const Calibration& cal, double c);

}  // namespace rmgen::probes
