// Fits the demo cohort and prints CMA inference for each curve.
#include <iostream>

#include "funcox/coxfit.hpp"
#include "funcox/demo_data.hpp"
#include "funcox/inference.hpp"

int main() {
  using namespace funcox;
  DemoSettings settings;
  settings.N = 300;
  const DemoData demo = make_demo_cohort(settings);
  std::cout << "subjects: " << demo.cohort.size() << ", events: " << demo.cohort.survival.events() << "\n";

  const PenalizedFitResult f = fit(demo.cohort, demo.spec);
  std::cout << "loglik " << f.loglik << ", total edf " << f.edf_total << "\n";
  for (const auto& t : f.terms) {
    if (t.type == TermType::linear) {
      std::cout << t.label << ": log HR " << f.coef[t.offset] << " (se " << std::sqrt(f.Vb(t.offset, t.offset))
                << ")\n";
      continue;
    }
    const CoefficientCurve curve = curve_covariance(f, t.label);
    const CmaBand band = cma_band(curve, 0.05, 10000, 7);
    std::cout << t.label << ": lambda " << t.lambda << ", edf " << t.edf << ", q " << band.q << " (z " << band.z
              << "), global CMA p " << band.p_global << "\n";
  }
}
