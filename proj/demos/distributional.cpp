// Distributional predictor: each subject's day is reduced to its empirical
// quantile function, whose effect beta_Q(p) is then estimated.
#include <cmath>
#include <iostream>
#include <random>

#include "funcox/coxfit.hpp"
#include "funcox/inference.hpp"
#include "funcox/parallel.hpp"

int main() {
  using namespace funcox;
  const Index N = 1000, L = 144;
  MatrixXd X(N, L);
  for (Index i = 0; i < N; ++i) {
    auto eng = make_stream(11, stream_tag::demo, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal;
    const double loc = normal(eng), scale = std::exp(0.4 * normal(eng));
    for (Index g = 0; g < L; ++g) X(i, g) = loc + scale * normal(eng);
  }
  const FunctionalDataset data = FunctionalDataset::with_default_grid(X);
  const VectorXd probs = probability_grid();
  const QuantilePredictor q = quantile_transform(data, probs);

  VectorXd beta = (0.6 - 2.0 * probs.array()).matrix();
  VectorXd eta = q.Q * beta / static_cast<double>(probs.size());
  CohortDataset c;
  c.survival.time.resize(N);
  c.survival.status.resize(N);
  for (Index i = 0; i < N; ++i) {
    auto eng = make_stream(12, stream_tag::survival, static_cast<std::uint64_t>(i));
    std::exponential_distribution<double> ex(0.1 * std::exp(eta[i]));
    const double t = ex(eng), cens = 5.0;
    c.survival.time[i] = std::min(t, cens);
    c.survival.status[i] = t <= cens ? 1 : 0;
  }
  c.functional.push_back({"X", data});

  ModelSpec spec;
  SmoothTermSpec term;
  term.label = "X";
  term.type = TermType::distributional;
  term.K = 10;
  spec.functional_terms.push_back(term);
  const PenalizedFitResult f = fit(c, spec);
  const CoefficientCurve curve = curve_covariance(f, "X");
  std::cout << "events: " << c.survival.events() << "\n p      beta_hat   truth\n";
  for (Index j = 0; j < curve.size(); j += 11)
    std::cout << " " << curve.grid[j] << "  " << curve.estimate[j] << "  " << beta[j] << "\n";
}
