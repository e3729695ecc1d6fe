#include "tsgs/sh.hpp"

#include <algorithm>

namespace tsgs {

namespace {
constexpr double C1 = 0.4886025119029199;
constexpr double C2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                         0.5462742152960396};
constexpr double C3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                         -0.4570457994644658, 1.445305721320277, -0.5900435899266435};
}  // namespace

ShBasis sh_basis(const Vec3& d, int degree) {
  ShBasis b;
  b.value[0] = kShC0;
  b.grad[0] = Vec3::Zero();
  if (degree < 1) return b;
  const double x = d.x(), y = d.y(), z = d.z();
  b.value[1] = -C1 * y;
  b.grad[1] = Vec3(0, -C1, 0);
  b.value[2] = C1 * z;
  b.grad[2] = Vec3(0, 0, C1);
  b.value[3] = -C1 * x;
  b.grad[3] = Vec3(-C1, 0, 0);
  if (degree < 2) return b;
  const double xx = x * x, yy = y * y, zz = z * z;
  b.value[4] = C2[0] * x * y;
  b.grad[4] = Vec3(C2[0] * y, C2[0] * x, 0);
  b.value[5] = C2[1] * y * z;
  b.grad[5] = Vec3(0, C2[1] * z, C2[1] * y);
  b.value[6] = C2[2] * (2 * zz - xx - yy);
  b.grad[6] = Vec3(-2 * C2[2] * x, -2 * C2[2] * y, 4 * C2[2] * z);
  b.value[7] = C2[3] * x * z;
  b.grad[7] = Vec3(C2[3] * z, 0, C2[3] * x);
  b.value[8] = C2[4] * (xx - yy);
  b.grad[8] = Vec3(2 * C2[4] * x, -2 * C2[4] * y, 0);
  if (degree < 3) return b;
  b.value[9] = C3[0] * y * (3 * xx - yy);
  b.grad[9] = Vec3(6 * C3[0] * x * y, C3[0] * (3 * xx - 3 * yy), 0);
  b.value[10] = C3[1] * x * y * z;
  b.grad[10] = Vec3(C3[1] * y * z, C3[1] * x * z, C3[1] * x * y);
  b.value[11] = C3[2] * y * (4 * zz - xx - yy);
  b.grad[11] = Vec3(-2 * C3[2] * x * y, C3[2] * (4 * zz - xx - 3 * yy), 8 * C3[2] * y * z);
  b.value[12] = C3[3] * z * (2 * zz - 3 * xx - 3 * yy);
  b.grad[12] = Vec3(-6 * C3[3] * x * z, -6 * C3[3] * y * z, C3[3] * (6 * zz - 3 * xx - 3 * yy));
  b.value[13] = C3[4] * x * (4 * zz - xx - yy);
  b.grad[13] = Vec3(C3[4] * (4 * zz - 3 * xx - yy), -2 * C3[4] * x * y, 8 * C3[4] * x * z);
  b.value[14] = C3[5] * z * (xx - yy);
  b.grad[14] = Vec3(2 * C3[5] * x * z, -2 * C3[5] * y * z, C3[5] * (xx - yy));
  b.value[15] = C3[6] * x * (xx - 3 * yy);
  b.grad[15] = Vec3(C3[6] * (3 * xx - 3 * yy), -6 * C3[6] * x * y, 0);
  return b;
}

Vec3 sh_to_color(const ShBasis& basis, int degree, const double* coeffs, std::array<bool, 3>* clamped) {
  const int k = sh_coeff_count(degree);
  Vec3 c = Vec3::Constant(0.5);
  for (int i = 0; i < k; ++i) {
    c[0] += basis.value[i] * coeffs[3 * i + 0];
    c[1] += basis.value[i] * coeffs[3 * i + 1];
    c[2] += basis.value[i] * coeffs[3 * i + 2];
  }
  for (int ch = 0; ch < 3; ++ch) {
    const bool cl = c[ch] < 0;
    if (clamped) (*clamped)[ch] = cl;
    if (cl) c[ch] = 0;
  }
  return c;
}

double color_to_dc(double color) { return (color - 0.5) / kShC0; }

}  // namespace tsgs
