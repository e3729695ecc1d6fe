#pragma once

#include <array>

#include "tsgs/core_types.hpp"

namespace tsgs {

/// Real spherical-harmonic basis up to degree 3 evaluated at a unit direction,
/// together with its gradient with respect to the (unnormalized) direction
/// components, as used for view-dependent color.
struct ShBasis {
  std::array<double, 16> value{};
  std::array<Vec3, 16> grad{};
};

ShBasis sh_basis(const Vec3& dir, int degree);

/// color_c = max(0, Σ_k basis_k · coeffs[3k + c] + 0.5)
Vec3 sh_to_color(const ShBasis& basis, int degree, const double* coeffs, std::array<bool, 3>* clamped = nullptr);

/// DC coefficient that reproduces a given linear color (inverse of the degree-0 path).
double color_to_dc(double color);

inline constexpr double kShC0 = 0.28209479177387814;

}  // namespace tsgs
