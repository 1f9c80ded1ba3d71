// Self-timed micro benchmarks for the hot paths: skew assembly, canonical
// form, orthogonal exponential, and one full evolution substep, at the three
// lattice sizes the experiments use.

#include <chrono>
#include <cstdio>
#include <random>

#include <msf/evolve.hpp>
#include <msf/lattice.hpp>
#include <msf/spectral.hpp>

using namespace msf;
using clk = std::chrono::steady_clock;

namespace {

template <typename F>
double time_ms(F&& f, int reps) {
  // one warmup, then best of reps
  f();
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    auto t0 = clk::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(clk::now() - t0).count());
  }
  return best;
}

}  // namespace

int main() {
  std::printf("%-8s %-12s %-14s %-12s %-14s\n", "lattice", "assemble", "canonical", "exp",
              "substep");
  for (auto [Lx, Ly] : {std::pair{18, 10}, {20, 12}, {12, 28}}) {
    LatticeGeometry g{Lx, Ly, Boundary::Open, Boundary::Open};
    CouplingParams cpl{1.0, 1.0};
    PotentialField pot = PotentialField::Constant(g.sites(), 10.0);
    for (int x = 2; x < 2 + std::min(14, Lx - 4); ++x) pot[g.site(x, Ly / 2)] = 0.1;

    SkewMatrix A = build_skew_matrix(g, pot, cpl);
    CanonicalForm cf = canonical_form(A.a);
    Eigen::MatrixXd O = Eigen::MatrixXd::Identity(A.dim(), A.dim());

    const double t_asm = time_ms([&] { A = build_skew_matrix(g, pot, cpl); }, 5);
    const double t_can = time_ms([&] { cf = canonical_form(A.a); }, 3);
    const double t_exp = time_ms([&] { O = orthogonal_exponential(cf, -2.0 * 1.4); }, 3);
    Eigen::MatrixXd P = O;
    const double t_sub = time_ms(
        [&] {
          update_onsite_blocks(A, pot);
          P *= orthogonal_exponential(canonical_form(A.a), -2.8);
        },
        3);
    std::printf("%2dx%-5d %9.2f ms %11.2f ms %9.2f ms %11.2f ms\n", Lx, Ly, t_asm, t_can, t_exp,
                t_sub);
  }
  return 0;
}
