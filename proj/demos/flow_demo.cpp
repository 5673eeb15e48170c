// Builds a Galerkin model of the Duffing oscillator, flows one state forward
// and back, and compares with direct integration.

#include <iostream>

#include "kostpm/kostpm.hpp"

int main() {
  using namespace kostpm;
  const SystemModel sys = make_duffing(DuffingParams{});
  const BasisSet basis(BoxDomain::cube(2, -1.1, 1.1), 9);
  const KoopmanModel model = build_galerkin_model(sys, basis);

  const Vector x0 = Eigen::Vector2d(0.4, 0.6);
  for (double t : {1.0, 10.0, 100.0}) {
    const FlowResult ko = forward_flow(model, x0, t);
    const Vector ref = integrate(sys, x0, 0.0, t);
    const Vector back = inverse_flow(model, ko.value, t).value;
    std::cout << "t=" << t << "  ko=(" << ko.value.transpose() << ")  ref=(" << ref.transpose()
              << ")  err=" << (ko.value - ref).norm() << "  roundtrip=" << (back - x0).norm() << "\n";
  }
  std::cout << "eta=" << basis.size() << "  max|Re lambda|=" << model.eigenvalues().real().cwiseAbs().maxCoeff()
            << "\n";
}
