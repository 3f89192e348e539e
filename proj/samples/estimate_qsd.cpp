// Estimates the quasi-stationary distribution of a chain read from a file (or a
// small M/M/1/K queue by default) and compares it with the spectral oracle.
//
//   ./estimate_qsd [chain-file] [tours]

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "qsdkit/experiment.hpp"

int main(int argc, char** argv) {
  using namespace qsdkit;
  try {
    const AnyChain chain = argc > 1 ? parse_chain(argv[1]) : AnyChain(make_mm1k_chain(0.8, 6));
    const std::int64_t tours = argc > 2 ? std::atoll(argv[2]) : 200000;

    RunOptions opts;
    opts.variant = Variant::projected_avg;
    opts.n_tours = tours;
    opts.average_from = tours / 10;
    Rng rng(1);

    const EstimatorState state = std::visit(
        [&](const auto& c) { return run_estimator(c, opts, ProbabilityVector::uniform(c.dim()), rng); }, chain);
    const SpectralReport report = spectral_report(chain);
    const ProbabilityVector estimate = current_estimate(state);

    std::cout << "state  estimate    oracle\n";
    for (Eigen::Index i = 0; i < estimate.size(); ++i) {
      std::printf("%5td  %.6f    %.6f\n", static_cast<std::ptrdiff_t>(i), estimate[i],
                  report.principal_left_vector[i]);
    }
    std::printf("L1 error          %.3g\n", l1_distance(estimate, report.principal_left_vector));
    std::printf("mean lifetime     %.4f (oracle %.4f)\n", state.T, report.expected_lifetime);
    if (report.clt) std::printf("CLT condition     %s\n", report.clt->holds ? "holds" : "fails");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
