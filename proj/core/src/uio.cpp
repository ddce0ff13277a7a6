#include "ruio/uio.hpp"

#include <utility>

#include "ruio/errors.hpp"

namespace ruio {

PlantModel::PlantModel(Matrix a_in, Matrix b_in, Matrix c_in, Matrix d_in)
    : a(std::move(a_in)),
      b(std::move(b_in)),
      c(std::move(c_in)),
      d(std::move(d_in)) {
  if (a.rows() != a.cols()) throw DimensionMismatch("plant: A must be square");
  if (b.rows() != a.rows()) throw DimensionMismatch("plant: B row count");
  if (c.cols() != a.rows()) throw DimensionMismatch("plant: C column count");
  if (d.rows() != a.rows()) throw DimensionMismatch("plant: D row count");
  if (!all_finite(a) || !all_finite(b) || !all_finite(c) || !all_finite(d))
    throw DimensionMismatch("plant: non-finite entries");
  if (gram_rank(d) != d.cols())
    throw RankDeficient("plant: D must have full column rank");
}

DecouplingGain compute_decoupling_gain(const PlantModel& plant,
                                       const Matrix& y_free) {
  const int n = plant.state_dim();
  const int p = plant.output_dim();
  if (y_free.rows() != n || y_free.cols() != p)
    throw DimensionMismatch("decoupling gain: Y must be n x p");

  const Matrix cd = plant.c * plant.d;
  if (gram_rank(cd) != gram_rank(plant.d))
    throw RankCondition("rank(CD) != rank(D): no decoupling gain exists");

  const Matrix cd_pinv = pinv_full_column_rank(cd);
  const Matrix residual_proj = Matrix::identity(p) - cd * cd_pinv;
  const Matrix e = (-1.0 * (plant.d * cd_pinv)) + y_free * residual_proj;
  const Matrix m = Matrix::identity(n) + e * plant.c;

  if (max_abs(m * plant.d) > kDecouplingTol)
    throw RankCondition("decoupling residual (I + EC) D exceeds tolerance");
  return {e, m};
}

CuioParams assemble_cuio(const PlantModel& plant, const Matrix& k,
                         const Matrix& y_free) {
  const int n = plant.state_dim();
  const int p = plant.output_dim();
  if (k.rows() != n || k.cols() != p)
    throw DimensionMismatch("assemble_cuio: K must be n x p");

  auto [e, m] = compute_decoupling_gain(plant, y_free);
  const Matrix ma = m * plant.a;
  const Matrix n_mat = ma - k * plant.c;
  const HurwitzResult stability = hurwitz_check(n_mat);
  if (!stability.stable)
    throw NotStabilizing(stability.marginal
                             ? "assemble_cuio: N has a marginal spectrum"
                             : "assemble_cuio: N = MA - KC is not Hurwitz");

  CuioParams params;
  params.e = e;
  params.m = m;
  params.n_mat = n_mat;
  params.g = m * plant.b;
  params.l = k * (Matrix::identity(p) + plant.c * e) - ma * e;
  params.k = k;
  params.y = y_free;
  return params;
}

}  // namespace ruio
