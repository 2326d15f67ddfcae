#include <doctest.h>

#include <array>
#include <random>
#include <sstream>

#include "enkfsq/models.hpp"

using namespace enkfsq::models;

namespace {

// Independent RK4 on std::array, written from the textbook formulas.
using State = std::array<double, 40>;

State tendency_ref(const State& z, double f) {
  State d{};
  for (int i = 0; i < 40; ++i) {
    const int ip1 = i == 39 ? 0 : i + 1;
    const int im1 = i == 0 ? 39 : i - 1;
    const int im2 = i <= 1 ? i + 38 : i - 2;
    d[i] = (z[ip1] - z[im2]) * z[im1] - z[i] + f;
  }
  return d;
}

State rk4_ref(const State& z, double f, double h) {
  auto axpy = [](const State& a, double s, const State& b) {
    State o{};
    for (int i = 0; i < 40; ++i) o[i] = a[i] + s * b[i];
    return o;
  };
  const State k1 = tendency_ref(z, f);
  const State k2 = tendency_ref(axpy(z, h / 2, k1), f);
  const State k3 = tendency_ref(axpy(z, h / 2, k2), f);
  const State k4 = tendency_ref(axpy(z, h, k3), f);
  State o{};
  for (int i = 0; i < 40; ++i) o[i] = z[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return o;
}

VectorXd random_state(unsigned seed, double scale = 3.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g(0.0, scale);
  VectorXd z(40);
  for (auto& v : z) v = g(gen);
  return z;
}

VectorXd integrate(VectorXd z, double forcing, double dt, int steps) {
  const L40Params p{.forcing = forcing, .dt = dt};
  for (int k = 0; k < steps; ++k) z = rk4_step(z, p);
  return z;
}

}  // namespace

TEST_CASE("l40_tendency") {
  CHECK(l40_tendency(VectorXd::Constant(40, 8.0), 8.0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((l40_tendency(VectorXd::Zero(40), 8.0).array() == 8.0).all());

  const VectorXd z = random_state(1);
  const VectorXd d = l40_tendency(z, 8.0);
  State za{};
  for (int i = 0; i < 40; ++i) za[i] = z(i);
  const State ref = tendency_ref(za, 8.0);
  for (int i = 0; i < 40; ++i) CHECK(d(i) == doctest::Approx(ref[i]).epsilon(1e-14));

  // cyclic rotation equivariance (exact)
  VectorXd rot(40);
  for (int i = 0; i < 40; ++i) rot((i + 7) % 40) = z(i);
  const VectorXd drot = l40_tendency(rot, 8.0);
  for (int i = 0; i < 40; ++i) CHECK(drot((i + 7) % 40) == d(i));
}

TEST_CASE("rk4_step") {
  SUBCASE("uniform equilibrium is a fixed point") {
    const VectorXd z = VectorXd::Constant(40, 8.0);
    CHECK((rk4_step(z, L40Params::truth()) - z).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("one step from the reference init matches an independent RK4") {
    const VectorXd z0 = l40_initial_state(L40Params::truth());
    CHECK(z0(19) == 8.001);
    CHECK(z0(0) == 8.0);
    State za{};
    for (int i = 0; i < 40; ++i) za[i] = z0(i);
    const State ref = rk4_ref(za, 8.0, 0.05);
    const VectorXd z1 = rk4_step(z0, L40Params::truth());
    for (int i = 0; i < 40; ++i) CHECK(std::abs(z1(i) - ref[i]) < 1e-12);
  }
  SUBCASE("observed order of accuracy") {
    const VectorXd z0 = random_state(4, 2.0).array() + 2.0;
    const double t = 0.4;
    const double h = 0.05;
    const VectorXd ref = integrate(z0, 8.0, h / 64, 8 * 64);
    const double e1 = (integrate(z0, 8.0, h, 8) - ref).norm();
    const double e2 = (integrate(z0, 8.0, h / 2, 16) - ref).norm();
    const double order = std::log2(e1 / e2);
    CHECK(t == doctest::Approx(8 * h));
    CHECK(order >= 3.5);
    CHECK(order <= 4.5);
  }
  SUBCASE("positive Lyapunov behaviour") {
    VectorXd a = random_state(8, 1.0).array() + 8.0;
    a = integrate(a, 8.0, 0.05, 500);  // onto the attractor
    VectorXd b = a;
    b(3) += 1e-8;
    double sep = 0.0;
    for (int k = 0; k < 1000 && sep <= 1.0; ++k) {
      a = rk4_step(a, L40Params::truth());
      b = rk4_step(b, L40Params::truth());
      sep = (a - b).norm();
    }
    CHECK(sep > 1.0);
  }
  CHECK(L40Params::forecast().forcing == 8.1);
  CHECK(L40Params::truth().forcing == 8.0);
}

TEST_CASE("LSST parameters") {
  const auto t = LSSTParams::truth();
  CHECK(t.courant() == doctest::Approx(1.18e-4 * 36000 / (10 * 5.19 * 0.334)).epsilon(1e-14));
  CHECK(t.courant() == doctest::Approx(0.245).epsilon(0.005));
  const auto f = LSSTParams::forecast();
  CHECK(f.porosity == 0.30);
  CHECK(f.retardation == 6.87);
  CHECK(f.n_cells == 100);
}

TEST_CASE("lsst_step") {
  const auto p = LSSTParams::truth();
  SUBCASE("uniform field at the inflow value with q = 0 is steady") {
    LSSTParams q0 = p;
    q0.source = 0.0;
    const VectorXd c = VectorXd::Constant(100, 5.0);
    CHECK((lsst_step(c, q0) - c).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("discrete mass balance") {
    const VectorXd c = lsst_initial_state(p);
    const VectorXd next = lsst_step(c, p);
    const double storage = p.retardation * p.porosity;
    const double mass0 = storage * c.sum() * p.dx;
    const double mass1 = storage * next.sum() * p.dx;
    const double inflow = p.darcy_velocity * p.dt * p.inflow_conc;
    const double outflow = p.darcy_velocity * p.dt * c(99);
    const double source = p.source * p.dx * 100;
    const double expected = inflow - outflow + source;
    CHECK(std::abs((mass1 - mass0) - expected) <= 1e-10 * mass0);
  }
  SUBCASE("mass balance holds for a noisy forecast step too") {
    const auto fp = LSSTParams::forecast();
    const VectorXd c = lsst_initial_state(fp);
    VectorXd q = VectorXd::Constant(100, fp.source);
    q(10) += 0.02;
    const double u = fp.darcy_velocity * 1.01;
    const VectorXd next = lsst_upwind(c, fp, u, q);
    const double storage = fp.retardation * fp.porosity;
    const double d_mass = storage * (next.sum() - c.sum()) * fp.dx;
    const double expected = u * fp.dt * (fp.inflow_conc - c(99)) + q.sum() * fp.dx;
    CHECK(std::abs(d_mass - expected) <= 1e-10 * storage * c.sum() * fp.dx);
  }
  SUBCASE("linearity in (C, q, inflow)") {
    std::mt19937_64 gen(2);
    std::normal_distribution<double> g(0.0, 1.0);
    VectorXd c1(100), c2(100), q1(100), q2(100);
    for (Index i = 0; i < 100; ++i) {
      c1(i) = g(gen);
      c2(i) = g(gen);
      q1(i) = g(gen) * 1e-3;
      q2(i) = g(gen) * 1e-3;
    }
    const double a = 0.7, b = -1.3;
    LSSTParams p1 = p, p2 = p, pc = p;
    p1.inflow_conc = 2.0;
    p2.inflow_conc = 4.5;
    pc.inflow_conc = a * 2.0 + b * 4.5;
    const double u = p.darcy_velocity;
    const VectorXd lhs = lsst_upwind(a * c1 + b * c2, pc, u, a * q1 + b * q2);
    const VectorXd rhs = a * lsst_upwind(c1, p1, u, q1) + b * lsst_upwind(c2, p2, u, q2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("Courant violation is rejected") {
    CHECK_THROWS_AS(lsst_upwind(VectorXd::Zero(100), p, p.darcy_velocity * 5.0, VectorXd::Zero(100)),
                    std::runtime_error);
    CHECK_THROWS_AS(lsst_upwind(VectorXd::Zero(100), p, -p.darcy_velocity, VectorXd::Zero(100)),
                    std::runtime_error);
  }
  SUBCASE("forecast noise is reproducible and truth draws nothing") {
    const auto fp = LSSTParams::forecast();
    const VectorXd c = lsst_initial_state(fp);
    auto g1 = enkfsq::rng::stream(1, enkfsq::rng::Stream::ModelNoise, 3, 4);
    auto g2 = enkfsq::rng::stream(1, enkfsq::rng::Stream::ModelNoise, 3, 4);
    CHECK(lsst_step(c, fp, ModelRole::Forecast, g1) == lsst_step(c, fp, ModelRole::Forecast, g2));
    auto g3 = enkfsq::rng::stream(1, enkfsq::rng::Stream::ModelNoise, 3, 4);
    const VectorXd noisy = lsst_step(c, fp, ModelRole::Forecast, g3);
    CHECK(noisy != lsst_step(c, fp));
    auto g4 = enkfsq::rng::stream(1, enkfsq::rng::Stream::ModelNoise, 3, 4);
    const auto before = enkfsq::rng::stream(1, enkfsq::rng::Stream::ModelNoise, 3, 4);
    (void)lsst_step(c, fp, ModelRole::Truth, g4);
    auto b = before;
    CHECK(g4() == b());
  }
}

TEST_CASE("LSST initial condition") {
  const auto c = lsst_initial_state(LSSTParams::truth());
  for (Index i = 0; i < 100; ++i) CHECK(c(i) == 3.0 + std::sin(5.0 * static_cast<double>(i + 1)));
  LSSTParams m = LSSTParams::truth();
  m.coordinate = GridCoordinate::CellCenterMeters;
  const auto cm = lsst_initial_state(m);
  CHECK(cm(0) == 3.0 + std::sin(5.0 * 5.0));
  CHECK(cm(9) == 3.0 + std::sin(5.0 * 95.0));
}

TEST_CASE("generate_truth") {
  const ModelParams l40 = L40Params::truth();
  const MatrixXd one = generate_truth(l40, 1);
  CHECK(one.rows() == 1);
  CHECK((one.row(0).transpose() - l40_initial_state(L40Params::truth())).norm() == 0.0);
  CHECK_THROWS_AS(generate_truth(l40, 0), std::invalid_argument);

  const MatrixXd t = generate_truth(l40, 5);
  CHECK(t.rows() == 5);
  CHECK(t.row(4).transpose() == integrate(l40_initial_state(L40Params::truth()), 8.0, 0.05, 4));

  const ModelParams lsst = LSSTParams::truth();
  const MatrixXd tl = generate_truth(lsst, 3);
  CHECK(tl.cols() == 100);
  CHECK(tl.row(2).transpose() == lsst_step(lsst_step(lsst_initial_state(LSSTParams::truth()),
                                                     LSSTParams::truth()),
                                           LSSTParams::truth()));
  CHECK(state_size(lsst) == 100);
  CHECK(state_size(l40) == 40);
}

TEST_CASE("trajectory CSV") {
  MatrixXd t(2, 3);
  t << 1, 2, 3, 4.5, 5, -6;
  std::ostringstream out;
  write_trajectory_csv(out, t);
  CHECK(out.str() == "step,var_0,var_1,var_2\n0,1,2,3\n1,4.5,5,-6\n");
}
