#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "funcox/coxfit.hpp"
#include "funcox/data_model.hpp"
#include "funcox/parallel.hpp"

namespace funcox {

// Synthetic cohort: seven days of minute-level activity per subject
// summarized into across-day mean and sd curves of log(1 + activity), plus
// sex, BMI and age.
struct DemoSettings {
  Index N = 500;
  Index days = 7;
  double event_fraction = 0.2;
  double follow_up = 10.0;
  std::uint64_t seed = 20240607;
  Index raw_subjects = 20;  // subjects whose day-level matrices are kept
};

struct DemoData {
  CohortDataset cohort;
  MatrixXd raw_days;  // raw_subjects * days rows of 1440 minutes
  ModelSpec spec;
};

inline ModelSpec demo_model_spec() {
  ModelSpec m;
  m.linear_terms = {"sex", "bmi"};
  SmoothTermSpec age;
  age.label = "age";
  age.type = TermType::additive;
  age.K = 10;
  m.additive_terms.push_back(age);
  for (const char* label : {"act_mean", "act_sd"}) {
    SmoothTermSpec f;
    f.label = label;
    f.type = TermType::functional;
    f.kind = SplineKind::cyclic_cubic_bspline;
    f.K = 30;
    m.functional_terms.push_back(f);
  }
  return m;
}

inline DemoData make_demo_cohort(const DemoSettings& s = {}) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const Index N = s.N, L = kMinutesPerDay;
  DemoData out;
  MatrixXd mean_curves(N, L), sd_curves(N, L);
  VectorXd age(N), sex(N), bmi(N);
  out.raw_days.resize(std::min(s.raw_subjects, N) * s.days, L);

  for (Index i = 0; i < N; ++i) {
    auto eng = make_stream(s.seed, stream_tag::demo, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    age[i] = 45.0 + 35.0 * unif(eng);
    sex[i] = unif(eng) < 0.5 ? 1.0 : 0.0;
    bmi[i] = 27.0 + 4.0 * normal(eng);
    const double level = 0.5 * normal(eng) - 0.012 * (age[i] - 60.0);
    const double phase = 0.03 * normal(eng);
    const double volatility = 0.3 + 0.15 * unif(eng);
    MatrixXd days(s.days, L);
    for (Index d = 0; d < s.days; ++d) {
      const double day_level = 0.25 * normal(eng);
      for (Index m = 0; m < L; ++m) {
        const double t = (static_cast<double>(m) + 0.5) / static_cast<double>(L) - phase;
        const double diurnal = 0.5 * (1.0 - std::cos(two_pi * (t - 0.17)));
        const double log_enmo = 0.5 + 2.6 * diurnal * diurnal + level + day_level + volatility * normal(eng);
        days(d, m) = std::max(std::exp(log_enmo) - 1.5, 0.0);
      }
    }
    if (i < s.raw_subjects) out.raw_days.middleRows(i * s.days, s.days) = days;
    const DaySummary sum = across_day_summary(MultiDayActivity("subject" + std::to_string(i + 1), days));
    mean_curves.row(i) = sum.mean.transpose();
    sd_curves.row(i) = sum.sd.transpose();
  }

  FunctionalDataset act_mean = FunctionalDataset::with_default_grid(std::move(mean_curves), true);
  FunctionalDataset act_sd = FunctionalDataset::with_default_grid(std::move(sd_curves), true);

  VectorXd beta_mean(L), beta_sd(L);
  for (Index m = 0; m < L; ++m) {
    const double t = (static_cast<double>(m) + 0.5) / static_cast<double>(L);
    beta_mean[m] = -0.8 * std::cos(two_pi * (t - 0.6)) - 0.3;
    beta_sd[m] = 0.5 * std::sin(two_pi * t);
  }
  VectorXd eta = (act_mean.values() * beta_mean + act_sd.values() * beta_sd) / static_cast<double>(L);
  for (Index i = 0; i < N; ++i)
    eta[i] += 0.35 * sex[i] + 0.03 * (bmi[i] - 27.0) + 0.06 * (age[i] - 60.0) + 0.0015 * std::pow(age[i] - 60.0, 2);
  eta.array() -= eta.mean();

  // Exponential event times; administrative censoring uniform over the
  // second half of follow-up. The rate is tuned to the target event fraction.
  std::vector<double> u(static_cast<std::size_t>(N)), cens(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) {
    auto eng = make_stream(s.seed, stream_tag::survival, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    u[static_cast<std::size_t>(i)] = unif(eng);
    cens[static_cast<std::size_t>(i)] = s.follow_up * (0.5 + 0.5 * unif(eng));
  }
  auto draw = [&](double log_rate, SurvivalData& sd) {
    sd.time.resize(N);
    sd.status.resize(N);
    for (Index i = 0; i < N; ++i) {
      const double t = -std::log(u[static_cast<std::size_t>(i)]) / std::exp(log_rate + eta[i]);
      const double c = cens[static_cast<std::size_t>(i)];
      sd.status[i] = t <= c ? 1 : 0;
      sd.time[i] = std::min(t, c);
    }
  };
  double lo = -15.0, hi = 5.0;
  SurvivalData sd;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    draw(mid, sd);
    if (static_cast<double>(sd.events()) < s.event_fraction * static_cast<double>(N))
      lo = mid;
    else
      hi = mid;
  }
  draw(hi, sd);

  CohortDataset& c = out.cohort;
  c.survival = std::move(sd);
  c.linear.resize(N, 2);
  c.linear.col(0) = sex;
  c.linear.col(1) = bmi;
  c.linear_labels = {"sex", "bmi"};
  c.additive = age;
  c.additive_labels = {"age"};
  c.functional.push_back({"act_mean", std::move(act_mean)});
  c.functional.push_back({"act_sd", std::move(act_sd)});
  out.spec = demo_model_spec();
  return out;
}

}  // namespace funcox
