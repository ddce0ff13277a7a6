#pragma once

#include "ruio/matrix.hpp"

namespace ruio {

/// Plant  x' = A x + B u + D v,  y = C x,  where v is an unknown input
/// entering through D (full column rank).
struct PlantModel {
  Matrix a, b, c, d;

  PlantModel(Matrix a_in, Matrix b_in, Matrix c_in, Matrix d_in);

  int state_dim() const { return a.rows(); }
  int input_dim() const { return b.cols(); }
  int output_dim() const { return c.rows(); }
  int unknown_input_dim() const { return d.cols(); }
};

/// Full-order observer  Z' = N Z + G u + L y,  xhat = Z - E y.
/// M = I + E C satisfies M D = 0, which removes the unknown input from the
/// estimation error dynamics e' = N e.
struct CuioParams {
  Matrix n_mat;  // N = M A - K C
  Matrix g;      // G = M B
  Matrix l;      // L = K (I + C E) - M A E
  Matrix e;
  Matrix m;      // M = I + E C
  Matrix k;      // stabilizing gain the design was built from
  Matrix y;      // free parameter used in E
};

struct DecouplingGain {
  Matrix e;
  Matrix m;
};

inline constexpr double kDecouplingTol = 1e-9;

/// E = -D (CD)^+ + Y (I - (CD)(CD)^+) and M = I + E C.
/// Throws RankCondition when rank(CD) != rank(D), i.e. no unknown-input
/// observer exists for this plant.
DecouplingGain compute_decoupling_gain(const PlantModel& plant,
                                       const Matrix& y_free);

/// Builds the full observer parameter set and verifies that N = MA - KC is
/// Hurwitz. Throws NotStabilizing otherwise (bad gain, or (C, MA) is not
/// detectable).
CuioParams assemble_cuio(const PlantModel& plant, const Matrix& k,
                         const Matrix& y_free);

}  // namespace ruio
