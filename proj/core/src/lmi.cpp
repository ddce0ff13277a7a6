#include "ruio/lmi.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ruio/errors.hpp"

namespace ruio {

namespace {

Matrix symmetrized(const Matrix& s) {
  Matrix out(s.rows(), s.cols());
  for (int i = 0; i < s.rows(); ++i)
    for (int j = 0; j < s.cols(); ++j) out(i, j) = 0.5 * (s(i, j) + s(j, i));
  return out;
}

// Left-hand side of the flow inequality, sign-flipped so PSD means feasible.
Matrix flow_slack(const Matrix& n_mat, const ResetCertificate& cert) {
  const Matrix nt_p = transpose(n_mat) * cert.p;
  return -1.0 * (nt_p + transpose(nt_p) + cert.lambda_f * cert.p +
                 cert.tau_f * cert.f);
}

Matrix jump_block(const Matrix& m, const ResetCertificate& cert) {
  const int n = m.rows();
  const Matrix x = cert.q - cert.q * m + cert.p * m;
  Matrix block(2 * n, 2 * n);
  const Matrix top_left = cert.lambda_j * cert.p + cert.tau_j * cert.f;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      block(i, j) = top_left(i, j);
      block(i, n + j) = x(j, i);  // X^T
      block(n + i, j) = x(i, j);
      block(n + i, n + j) = cert.p(i, j);
    }
  return block;
}

}  // namespace

LmiReport validate_certificate(const Matrix& m, const Matrix& n_mat,
                               const ResetCertificate& cert, double tol) {
  const int n = m.rows();
  if (m.cols() != n || n_mat.rows() != n || n_mat.cols() != n ||
      cert.p.rows() != n || cert.p.cols() != n || cert.f.rows() != n ||
      cert.f.cols() != n || cert.q.rows() != n || cert.q.cols() != n)
    throw DimensionMismatch("validate_certificate: inconsistent dimensions");

  LmiReport report;
  report.margin_flow = min_eigenvalue(flow_slack(n_mat, cert));
  report.margin_jump = min_eigenvalue(jump_block(m, cert));
  report.margin_p = min_eigenvalue(cert.p);
  report.feasible = report.margin_flow > -tol && report.margin_jump >= -tol &&
                    report.margin_p > tol;
  return report;
}

SynthesisResult synthesize_certificate(const Matrix& m, const Matrix& n_mat,
                                       double lambda_f, double lambda_j,
                                       double tau_j) {
  const int n = m.rows();
  if (m.cols() != n || n_mat.rows() != n || n_mat.cols() != n)
    throw DimensionMismatch("synthesize_certificate: inconsistent dimensions");
  if (!(lambda_f > 0.0) || !(lambda_j > 0.0 && lambda_j <= 1.0) ||
      !(tau_j > 0.0))
    throw ConfigError("synthesize_certificate: scalars out of range");

  // Decision vector v packs the upper triangles of P and F plus all of Q.
  std::vector<std::pair<int, int>> sym_index;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) sym_index.emplace_back(i, j);
  const int n_sym = static_cast<int>(sym_index.size());
  const int n_vars = 2 * n_sym + n * n;

  auto unpack = [&](const std::vector<double>& v) {
    ResetCertificate cert;
    cert.p = Matrix(n, n);
    cert.f = Matrix(n, n);
    cert.q = Matrix(n, n);
    for (int t = 0; t < n_sym; ++t) {
      const auto [i, j] = sym_index[t];
      cert.p(i, j) = cert.p(j, i) = v[t];
      cert.f(i, j) = cert.f(j, i) = v[n_sym + t];
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cert.q(i, j) = v[2 * n_sym + i * n + j];
    cert.lambda_f = lambda_f;
    cert.lambda_j = lambda_j;
    cert.tau_j = tau_j;
    return cert;
  };

  const Matrix delta_eye = kSynthesisMargin * Matrix::identity(n);
  auto slacks = [&](const ResetCertificate& cert) {
    return std::vector<Matrix>{flow_slack(n_mat, cert) - delta_eye,
                               jump_block(m, cert), cert.p - delta_eye};
  };

  auto flatten = [](const std::vector<Matrix>& mats) {
    std::vector<double> out;
    for (const Matrix& mat : mats)
      out.insert(out.end(), mat.data().begin(), mat.data().end());
    return out;
  };

  // The slack map is affine in v; assemble its Jacobian and offset once.
  const std::vector<double> offset = flatten(slacks(unpack(std::vector<double>(n_vars, 0.0))));
  const int n_eqs = static_cast<int>(offset.size());
  Matrix jac(n_eqs, n_vars);
  {
    std::vector<double> unit(n_vars, 0.0);
    for (int k = 0; k < n_vars; ++k) {
      unit[k] = 1.0;
      const std::vector<double> image = flatten(slacks(unpack(unit)));
      for (int r = 0; r < n_eqs; ++r) jac(r, k) = image[r] - offset[r];
      unit[k] = 0.0;
    }
  }
  const Matrix jac_t = transpose(jac);
  const Matrix normal = jac_t * jac;
  // Q enters the slacks only through Q (I - M), so J'J is singular when
  // I - M is rank deficient. Min-norm least squares via the eigenpairs of
  // J'J gives the exact affine projection with the unseen directions
  // pinned to zero.
  const SymEig normal_eig = sym_eig(normal);
  const double eig_floor = 1e-12 * normal_eig.values.back();
  Matrix normal_pinv(n_vars, n_vars);
  for (int k = 0; k < n_vars; ++k) {
    if (normal_eig.values[k] <= eig_floor) continue;
    const double inv = 1.0 / normal_eig.values[k];
    for (int i = 0; i < n_vars; ++i)
      for (int j = 0; j < n_vars; ++j)
        normal_pinv(i, j) +=
            inv * normal_eig.vectors(i, k) * normal_eig.vectors(j, k);
  }

  // Deterministic start: P = I (trace n), F a delta-sized off-diagonal
  // perturbation so the sector begins indefinite, Q = 0.
  std::vector<double> v(n_vars, 0.0);
  for (int t = 0; t < n_sym; ++t) {
    const auto [i, j] = sym_index[t];
    if (i == j) v[t] = 1.0;
    if (n >= 2 && i == 0 && j == 1) v[n_sym + t] = kSynthesisMargin;
  }

  SynthesisResult result;
  double residual = 0.0;
  for (int iter = 0; iter < kSynthesisMaxIterations; ++iter) {
    result.iterations = iter;
    const ResetCertificate current = unpack(v);
    std::vector<Matrix> s = slacks(current);

    // PSD projection of each slack; the residual is the cone distance.
    double dist_sq = 0.0;
    for (Matrix& mat : s) {
      const SymEig eig = sym_eig(symmetrized(mat));
      const int dim = mat.rows();
      Matrix clamped(dim, dim);
      for (int k = 0; k < dim; ++k) {
        const double w = eig.values[k];
        if (w >= 0.0) {
          for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
              clamped(i, j) += w * eig.vectors(i, k) * eig.vectors(j, k);
        } else {
          dist_sq += w * w;
        }
      }
      mat = clamped;
    }
    residual = std::sqrt(dist_sq);
    if (residual <= kSynthesisResidualTol) break;

    // Least-squares projection back onto the affine image of the slack map.
    std::vector<double> target = flatten(s);
    for (int r = 0; r < n_eqs; ++r) target[r] -= offset[r];
    std::vector<double> jt_target(n_vars, 0.0);
    for (int k = 0; k < n_vars; ++k) {
      double acc = 0.0;
      for (int r = 0; r < n_eqs; ++r) acc += jac_t(k, r) * target[r];
      jt_target[k] = acc;
    }
    mul_into(normal_pinv, jt_target, v);

    // Re-impose the trace normalization; the inequalities are homogeneous
    // up to the delta offsets, so this pins the scale.
    double tr = 0.0;
    for (int t = 0; t < n_sym; ++t)
      if (sym_index[t].first == sym_index[t].second) tr += v[t];
    if (tr > 1e-12) {
      const double scale = n / tr;
      for (double& entry : v) entry *= scale;
    }
  }

  result.residual = residual;
  if (residual > kSynthesisResidualTol) {
    result.no_convergence = true;
    return result;
  }

  ResetCertificate cert = unpack(v);
  const ResetMaps maps = derive_reset_maps(m, cert);
  cert.a_r = maps.a_r;
  cert.h = maps.h;
  cert.tau_w = check_wellposedness(cert.h, cert.f);

  const LmiReport report =
      validate_certificate(m, n_mat, cert, kSynthesisValidateTol);
  if (!report.feasible || !is_indefinite(cert.f)) return result;

  result.certificate = std::move(cert);
  return result;
}

ResetMaps derive_reset_maps(const Matrix& m, const ResetCertificate& cert) {
  ResetMaps maps;
  maps.a_r = solve_linear(cert.p, cert.q);
  maps.h = maps.a_r - maps.a_r * m + m;
  return maps;
}

std::optional<double> check_wellposedness(const Matrix& h, const Matrix& f) {
  if (h.rows() != f.rows() || h.cols() != f.cols())
    throw DimensionMismatch("check_wellposedness: dimension mismatch");
  const Matrix base = transpose(h) * f * h;
  for (int k = 0; k <= 60; ++k) {
    const double tau_w = 1e-3 * std::pow(10.0, k / 10.0);
    if (min_eigenvalue(base + tau_w * f) > 1e-9) return tau_w;
  }
  return std::nullopt;
}

bool is_indefinite(const Matrix& s, double tol) {
  const SymEig eig = sym_eig(s);
  return eig.values.front() < -tol && eig.values.back() > tol;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.empty())
    throw ConfigError("certificate: matrix '" + key + "' must be a non-empty array");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.front().size());
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto& row = j.at(i);
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw ConfigError("certificate: ragged rows in matrix '" + key + "'");
    for (int c = 0; c < cols; ++c) out(i, c) = row.at(c).get<double>();
  }
  if (!all_finite(out))
    throw ConfigError("certificate: non-finite entries in matrix '" + key + "'");
  return out;
}

}  // namespace

std::string certificate_to_json(const ResetCertificate& cert) {
  nlohmann::json j;
  j["P"] = matrix_to_json(cert.p);
  j["F"] = matrix_to_json(cert.f);
  j["Q"] = matrix_to_json(cert.q);
  j["A_R"] = matrix_to_json(cert.a_r);
  j["lambda_f"] = cert.lambda_f;
  j["lambda_j"] = cert.lambda_j;
  j["tau_j"] = cert.tau_j;
  if (cert.tau_w) j["tau_w"] = *cert.tau_w;
  j["epsilon"] = cert.epsilon;
  return j.dump(2);
}

ResetCertificate certificate_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& err) {
    throw ConfigError(std::string("certificate: invalid JSON: ") + err.what());
  }
  ResetCertificate cert;
  try {
    cert.p = matrix_from_json(j.at("P"), "P");
    cert.f = matrix_from_json(j.at("F"), "F");
    cert.q = matrix_from_json(j.at("Q"), "Q");
    if (j.contains("A_R")) cert.a_r = matrix_from_json(j.at("A_R"), "A_R");
    cert.lambda_f = j.at("lambda_f").get<double>();
    cert.lambda_j = j.at("lambda_j").get<double>();
    cert.tau_j = j.at("tau_j").get<double>();
    if (j.contains("tau_w") && !j.at("tau_w").is_null())
      cert.tau_w = j.at("tau_w").get<double>();
    cert.epsilon = j.at("epsilon").get<double>();
  } catch (const nlohmann::json::exception& err) {
    throw ConfigError(std::string("certificate: missing or mistyped field: ") +
                      err.what());
  }
  return cert;
}

void save_certificate(const ResetCertificate& cert,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << certificate_to_json(cert) << '\n';
}

ResetCertificate load_certificate(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open certificate file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return certificate_from_json(buffer.str());
}

}  // namespace ruio
