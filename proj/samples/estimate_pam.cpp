// Simulate one path of the parabolic Anderson model at x = 1/2 and estimate
// sigma_0 and alpha from it.
//   estimate_pam [sigma0] [seed]

#include <cstdio>
#include <cstdlib>

#include "shevar/inference.hpp"
#include "shevar/simulate.hpp"

using namespace shevar;

int main(int argc, char** argv) {
  const double sigma0 = argc > 1 ? std::atof(argv[1]) : 0.5;
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;

  ModelSpec model;
  model.noise = NoiseParams(0.5, 1);
  model.sigma = Coefficient::linear(sigma0);
  model.u0 = InitialCondition::constant(1.0);

  SamplingDesign design;
  design.delta_n = 1.0 / 4096.0;
  design.horizon = 1.0;
  design.spatial_modes = 512;
  design.oversampling = 4;
  design.burn_in = 16;

  const auto panel = simulate_spde(model, design, RngStream{seed, 0});
  const auto u = panel.column(0);

  const auto s = estimate_sigma0(2.0, u, design, model.noise.alpha());
  std::printf("sigma0  true %.4f  estimate %.4f  95%% CI [%.4f, %.4f]\n", sigma0, s.estimate, s.ci_low, s.ci_high);

  const auto a = estimate_alpha(u, design);
  std::printf("alpha   true %.4f  estimate %.4f  se %.4f\n", model.noise.alpha(), a.estimate, a.se);
  return 0;
}
