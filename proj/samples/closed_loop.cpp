// Library usage without a scenario file: run the generator benchmark with a
// horizon of 9, certify the log and print the first few rows.
#include <cstdio>
#include <iostream>

#include "cdf/analysis.hpp"
#include "cdf/controller.hpp"
#include "cdf/model.hpp"

int main() {
  using namespace cdf;
  const SystemModel model = make_model("generator2");
  const Eigen::Vector4d q(0.1, 10.0, 0.1, 10.0);

  ControllerConfig cfg{KernelFunction(Matrix(q.asDiagonal()))};
  cfg.N = 9;
  cfg.N_max = 9;

  const RunResult run = closed_loop(cfg, model, generator2::initial_state(), 100);
  for (const auto& row : run.log.rows) {
    if (row.k > 5) break;
    std::printf("k=%ld |x|=%.3e l=%.3e", row.k, row.x.norm(), row.l);
    if (row.s) std::printf(" s=%.3e", *row.s);
    std::printf(" M=%d\n", row.M);
  }
  const CertificateReport report = certify(run.log);
  std::cout << to_text(report);
  return report.verdict == Verdict::Certified ? 0 : 1;
}
