#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mlpf/euler.hpp"
#include "mlpf/rates.hpp"

#include "support/test_stats.hpp"

using namespace mlpf;

namespace {

DiffusionModel toy(std::function<double(double)> a, std::function<double(double)> b,
                   double delta = 1.0) {
  DiffusionModel m;
  m.name = "toy";
  m.drift = std::move(a);
  m.diffusion = std::move(b);
  m.x0 = 0.0;
  m.obs_interval = delta;
  return m;
}

}  // namespace

TEST_CASE("euler transition worked examples", "[euler]") {
  // a = 0, b = 0: deterministic constant
  {
    auto m = toy([](double) { return 0.0; }, [](double) { return 0.0; });
    FixedIncrements xi({0.3, -0.7, 1.1, 0.0});
    REQUIRE(euler_transition(m, Level::of(2, 1.0), 3.0, xi) == 3.0);
    REQUIRE(xi.consumed() == 4);
  }
  // a = 0, b = 1, delta = 1, l = 1, draws (1, -1): sqrt(0.5) * (1 - 1) = 0
  {
    auto m = toy([](double) { return 0.0; }, [](double) { return 1.0; });
    FixedIncrements xi({1.0, -1.0});
    REQUIRE(euler_transition(m, Level::of(1, 1.0), 0.0, xi) == Catch::Approx(0.0).margin(1e-15));
  }
  // OU, l = 0, delta = 0.5, x = 0, xi = 1: sqrt(0.5) * 0.5
  {
    const auto ou = ou_model();
    FixedIncrements xi({1.0});
    const double x = euler_transition(ou.diffusion_model, Level::of(0, 0.5), 0.0, xi);
    REQUIRE(x == Catch::Approx(std::sqrt(0.5) * 0.5).epsilon(1e-15));
  }
}

TEST_CASE("euler transition consumes exactly 2^l draws", "[euler]") {
  const auto ou = ou_model();
  for (int l = 0; l <= 5; ++l) {
    FixedIncrements xi(std::vector<double>(1 << l, 0.25));
    euler_transition(ou.diffusion_model, Level::of(l, 0.5), 0.1, xi);
    REQUIRE(xi.consumed() == static_cast<std::size_t>(1 << l));
  }
}

TEST_CASE("euler transition reports blow-up with step index", "[euler]") {
  auto m = toy([](double x) { return x * 1e160; }, [](double) { return 0.0; });
  FixedIncrements xi(std::vector<double>(4, 0.0));
  try {
    euler_transition(m, Level::of(2, 1.0), 1e160, xi);
    FAIL("expected numerical_blowup");
  } catch (const numerical_blowup& e) {
    REQUIRE(e.step_index >= 0);
    REQUIRE(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("coupled transition worked examples", "[euler]") {
  // constant b, zero drift: fine and coarse agree for any draws
  {
    auto m = toy([](double) { return 0.0; }, [](double) { return 2.0; });
    RngStream rng(derive_stream_key({55}));
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<double> draws(8);
      for (auto& d : draws) d = rng.next_normal();
      FixedIncrements xi(draws);
      const auto [xf, xc] = coupled_euler_transition(m, Level::of(3, 1.0), 0.4, 0.4, xi);
      REQUIRE(xf == Catch::Approx(xc).margin(1e-13));
    }
  }
  // OU, l = 1, delta = 0.5, draws (1, 1)
  {
    const auto ou = ou_model();
    FixedIncrements xi({1.0, 1.0});
    const auto [xf, xc] =
        coupled_euler_transition(ou.diffusion_model, Level::of(1, 0.5), 0.0, 0.0, xi);
    // fine: x1 = 0.25*0.5*... by hand: x1 = sqrt(0.25)*0.5 = 0.25;
    //       x2 = 0.25 + 0.25*(-0.25) + 0.25 = 0.4375
    REQUIRE(xf == Catch::Approx(0.4375).epsilon(1e-14));
    // coarse: 0 + 0.5*0 + sqrt(0.25)*0.5*2 = 0.5
    REQUIRE(xc == Catch::Approx(0.5).epsilon(1e-14));
  }
  // zero draws: both equal their deterministic Euler maps
  {
    const auto ou = ou_model();
    const auto level = Level::of(2, 0.5);
    FixedIncrements xi(std::vector<double>(4, 0.0));
    const auto [xf, xc] =
        coupled_euler_transition(ou.diffusion_model, level, 1.0, 1.0, xi);
    FixedIncrements xi_f(std::vector<double>(4, 0.0));
    const double fine_only = euler_transition(ou.diffusion_model, level, 1.0, xi_f);
    FixedIncrements xi_c(std::vector<double>(2, 0.0));
    const double coarse_only =
        euler_transition(ou.diffusion_model, level.coarser(), 1.0, xi_c);
    REQUIRE(xf == fine_only);
    REQUIRE(xc == coarse_only);
  }
  REQUIRE_THROWS_AS(
      [&] {
        const auto ou = ou_model();
        FixedIncrements xi({1.0});
        coupled_euler_transition(ou.diffusion_model, Level::of(0, 0.5), 0.0, 0.0, xi);
      }(),
      std::invalid_argument);
}

TEST_CASE("summed coarse increments have variance h_{l-1}", "[euler]") {
  // b = 1, a = 0, l = 1: one coarse step per interval, noise sqrt(h_l)(xi0+xi1)
  auto m = toy([](double) { return 0.0; }, [](double) { return 1.0; });
  const auto level = Level::of(1, 1.0);
  const int n = 100000;
  std::vector<double> increments(n);
  StreamFactory streams{4242, 0, 1};
  for (int i = 0; i < n; ++i) {
    auto xi = streams.propagate(i, 0);
    const auto [xf, xc] = coupled_euler_transition(m, level, 0.0, 0.0, xi);
    increments[i] = xc;
  }
  const double v = test_stats::sample_variance(increments);
  const double h_coarse = 1.0;  // h_{l-1} = delta = 1 at l = 1
  const double se = h_coarse * std::sqrt(2.0 / (n - 1));
  REQUIRE(std::abs(v - h_coarse) < 3.0 * se);
}

TEST_CASE("coupled marginals match single-level laws (KS)", "[euler]") {
  const auto ou = ou_model();
  const int n = 30000;
  const int l = 2;
  const auto level = Level::of(l, 0.5);
  std::vector<double> fine(n), coarse(n), single_fine(n), single_coarse(n);
  StreamFactory coupled_streams{11, 0, 100};
  StreamFactory fine_streams{12, 0, 101};
  StreamFactory coarse_streams{13, 0, 102};
  for (int i = 0; i < n; ++i) {
    auto xi = coupled_streams.propagate(i, 0);
    const auto [xf, xc] = coupled_euler_transition(ou.diffusion_model, level, 0.0, 0.0, xi);
    fine[i] = xf;
    coarse[i] = xc;
    auto xi_f = fine_streams.propagate(i, 0);
    single_fine[i] = euler_transition(ou.diffusion_model, level, 0.0, xi_f);
    auto xi_c = coarse_streams.propagate(i, 0);
    single_coarse[i] = euler_transition(ou.diffusion_model, level.coarser(), 0.0, xi_c);
  }
  REQUIRE(test_stats::ks_two_sample_pvalue(fine, single_fine) > 1e-3);
  REQUIRE(test_stats::ks_two_sample_pvalue(coarse, single_coarse) > 1e-3);
}

TEST_CASE("strong coupling rate for OU is h^2", "[euler][slow]") {
  const auto ou = ou_model();
  std::vector<double> log2_h, log2_err;
  const int n = 100000;
  for (int l = 2; l <= 7; ++l) {
    const auto level = Level::of(l, 0.5);
    StreamFactory streams{17, 0, static_cast<std::uint64_t>(l)};
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      auto xi = streams.propagate(i, 0);
      const auto [xf, xc] = coupled_euler_transition(ou.diffusion_model, level, 0.0, 0.0, xi);
      acc += (xf - xc) * (xf - xc);
    }
    log2_h.push_back(std::log2(level.h));
    log2_err.push_back(std::log2(acc / n));
  }
  const auto fit = ols_fit(log2_h, log2_err);
  REQUIRE(fit.slope > 1.6);
  REQUIRE(fit.slope < 2.4);
}
