// Serial reference loop vs OpenMP trial runner on a range-RBL study.
// Usage: bench_trials [trials] [threads]

#include <chrono>
#include <cstdlib>
#include <iostream>

#include <omp.h>

#include "rbl/harness.hpp"

using bench_clock = std::chrono::steady_clock;

int main(int argc, char** argv) {
  const int trials = argc > 1 ? std::atoi(argv[1]) : 200;
  const int threads = argc > 2 ? std::atoi(argv[2]) : omp_get_max_threads();

  const rbl::Json j = {
      {"schema", 1},
      {"modality", "range"},
      {"scenario",
       {{"anchors", {{-10, -10}, {10, -10}, {10, 10}, {-10, 10}}},
        {"bodies",
         {{{"template", {{"dim", 2}, {"nodes", {{-1, -0.5}, {1, -0.5}, {1, 0.5}, {-1, 0.5}}}, {"label", "plate"}}},
           {"pose", {{"angles", {0.4}}, {"translation", {1.5, -2.0}}}}}}}}},
      {"sigmas", {0.01, 0.1, 0.5}},
      {"estimators", {"point_ls", "range_rbl_cwls"}},
      {"trials", trials},
      {"master_seed", 7}};
  const rbl::ExperimentConfig cfg = rbl::parse_config(j);

  auto t0 = bench_clock::now();
  const auto serial = rbl::run_trials_serial(cfg);
  const double ts = std::chrono::duration<double>(bench_clock::now() - t0).count();

  t0 = bench_clock::now();
  const auto parallel = rbl::run_trials(cfg, threads);
  const double tp = std::chrono::duration<double>(bench_clock::now() - t0).count();

  const bool same = rbl::trials_csv(serial) == rbl::trials_csv(parallel);
  std::cout << "trials/cell=" << trials << " tasks=" << serial.size() << "\n"
            << "serial:   " << ts << " s\n"
            << "parallel: " << tp << " s (" << threads << " threads), speedup " << ts / tp << "\n"
            << "identical output: " << (same ? "yes" : "NO") << "\n";
  return same ? 0 : 1;
}
