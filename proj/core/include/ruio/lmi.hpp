#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "ruio/matrix.hpp"

namespace ruio {

/// Quadratic certificate for the reset error dynamics. V(e) = e'Pe decays
/// at rate lambda_f while flowing in the sector {e'Fe >= 0} and contracts
/// by lambda_j across jumps allowed in {e'Fe <= 0}. F must be indefinite
/// so both sets have interior. A_R is the after-reset matrix; the induced
/// error jump map is H = A_R - A_R M + M.
struct ResetCertificate {
  Matrix p;
  Matrix f;
  Matrix q;    // Q = P A_R, the linearizing change of variables
  Matrix a_r;  // derived: P^{-1} Q
  Matrix h;    // derived: needs the observer's M, see derive_reset_maps
  double lambda_f = 0.0;
  double lambda_j = 0.0;
  double tau_f = 1.0;  // fixed; absorbed into F without loss of generality
  double tau_j = 0.0;
  std::optional<double> tau_w;  // set when the after-jump sector-exit check passes
  double epsilon = 0.01;
};

/// Eigenvalue margins of the certificate inequalities; all three must be on
/// the right side of zero (within tol) for feasibility.
struct LmiReport {
  double margin_flow = 0.0;  // -(max eig of N'P + PN + lambda_f P + tau_f F)
  double margin_jump = 0.0;  // min eig of the jump block
  double margin_p = 0.0;     // min eig of P
  bool feasible = false;
};

inline constexpr double kSynthesisMargin = 1e-3;  // strictness offset delta
inline constexpr double kSynthesisResidualTol = 1e-7;
inline constexpr int kSynthesisMaxIterations = 5000;
inline constexpr double kIndefiniteTol = 1e-9;
inline constexpr double kSynthesisValidateTol = 1e-6;

LmiReport validate_certificate(const Matrix& m, const Matrix& n_mat,
                               const ResetCertificate& cert, double tol);

struct SynthesisResult {
  std::optional<ResetCertificate> certificate;
  bool no_convergence = false;  // iteration cap hit before the residual target
  double residual = 0.0;
  int iterations = 0;

  bool feasible() const { return certificate.has_value(); }
};

/// Feasibility search for (P, F, Q) at fixed scalars by alternating
/// projections between the affine image of the three certificate
/// inequalities and the product of PSD cones. The verdict "infeasible" is
/// heuristic (the projection may stall on marginal instances); any returned
/// certificate has been re-checked with validate_certificate and carries an
/// indefinite F.
SynthesisResult synthesize_certificate(const Matrix& m, const Matrix& n_mat,
                                       double lambda_f, double lambda_j,
                                       double tau_j);

struct ResetMaps {
  Matrix a_r;
  Matrix h;
};

/// A_R = P^{-1} Q and H = A_R - A_R M + M.
ResetMaps derive_reset_maps(const Matrix& m, const ResetCertificate& cert);

/// Scans tau_w over a logarithmic grid and returns the first value with
/// H'FH + tau_w F positive definite, i.e. jumps exit the jump sector.
/// Returns nullopt when no grid point qualifies.
std::optional<double> check_wellposedness(const Matrix& h, const Matrix& f);

bool is_indefinite(const Matrix& s, double tol = kIndefiniteTol);

// Flat JSON document with keys P, F, Q, A_R, lambda_f, lambda_j, tau_j,
// tau_w (omitted when absent), epsilon; matrices as arrays of row arrays.
std::string certificate_to_json(const ResetCertificate& cert);
ResetCertificate certificate_from_json(const std::string& text);
void save_certificate(const ResetCertificate& cert,
                      const std::filesystem::path& path);
ResetCertificate load_certificate(const std::filesystem::path& path);

}  // namespace ruio
