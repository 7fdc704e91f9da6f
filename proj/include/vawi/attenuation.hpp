#pragma once

#include <cmath>
#include <stdexcept>

#include "vawi/common.hpp"
#include "vawi/grid.hpp"

namespace vawi {

// Kolsky-Futterman dispersion law referenced to f_ref.
struct AttenuationLaw {
  double f_ref = 50.0;  // Hz

  double omega_ref() const { return 2.0 * pi * f_ref; }
};

// beta(omega) = i*sign(omega)/2 - ln|omega/omega_ref| / pi.
// Satisfies beta(-omega) = conj(beta(omega)), so time-domain fields stay real.
inline cplx beta(double omega, const AttenuationLaw& law = {}) {
  if (omega == 0.0)
    throw std::invalid_argument("beta: omega must be nonzero");
  double re = -std::log(std::abs(omega) / law.omega_ref()) / pi;
  double im = omega > 0.0 ? 0.5 : -0.5;
  return {re, im};
}

// attenuation factor of the complex squared slowness: 1/c^2 = m * rho(alpha)
inline cplx rho(double alpha, double omega, const AttenuationLaw& law = {}) {
  cplx b = beta(omega, law);
  cplx t = 1.0 + b * alpha;
  return t * t;
}

// first-order expansion of rho in alpha; rho - rho_linear = (beta*alpha)^2
inline cplx rho_linear(double alpha, double omega, const AttenuationLaw& law = {}) {
  return 1.0 + 2.0 * beta(omega, law) * alpha;
}

inline ComplexField complex_slowness_sq(const RealField& m, const RealField& alpha,
                                        double omega, const AttenuationLaw& law = {}) {
  if (!(m.grid == alpha.grid))
    throw std::invalid_argument("complex_slowness_sq: fields on different grids");
  ComplexField out(m.grid);
  for (int k = 0; k < m.grid.n(); ++k)
    out.data[k] = m.data[k] * rho(alpha.data[k], omega, law);
  return out;
}

}  // namespace vawi
