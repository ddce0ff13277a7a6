#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <optional>

#include "ruio/errors.hpp"
#include "ruio/lmi.hpp"
#include "ruio/rng.hpp"
#include "test_support.hpp"

using namespace ruio;
using test_support::max_abs_diff;
using test_support::random_matrix;
using test_support::random_spd;
using test_support::random_symmetric;

namespace {

ResetCertificate scalar_certificate(double p, double f, double q,
                                    double lambda_f, double lambda_j,
                                    double tau_j) {
  ResetCertificate cert;
  cert.p = {{p}};
  cert.f = {{f}};
  cert.q = {{q}};
  cert.lambda_f = lambda_f;
  cert.lambda_j = lambda_j;
  cert.tau_j = tau_j;
  return cert;
}

}  // namespace

TEST_CASE("validator on a scalar certificate") {
  const ResetCertificate cert = scalar_certificate(1.0, -0.5, 0.0, 1.0, 0.6, 1.0);
  const LmiReport report = validate_certificate({{0}}, {{-1}}, cert, 1e-9);
  CHECK(report.margin_flow == doctest::Approx(1.5));
  CHECK(report.margin_jump == doctest::Approx(0.1));
  CHECK(report.margin_p == doctest::Approx(1.0));
  CHECK(report.feasible);
}

TEST_CASE("validator accepts the reference certificate") {
  const CuioParams design = test_support::demo_design();
  const ResetCertificate cert = test_support::reference_certificate();
  const LmiReport report =
      validate_certificate(design.m, design.n_mat, cert, 1e-2);
  CHECK(report.feasible);
  CHECK(is_indefinite(cert.f));
  // Margins frozen from an independent evaluation of the same quantities.
  CHECK(report.margin_flow == doctest::Approx(0.35935656023772766).epsilon(1e-9));
  CHECK(report.margin_jump == doctest::Approx(0.22718441340929563).epsilon(1e-9));
  CHECK(report.margin_p == doctest::Approx(0.4257914147368057).epsilon(1e-9));
}

TEST_CASE("validator dimension checks") {
  const ResetCertificate cert = test_support::reference_certificate();
  CHECK_THROWS_AS(validate_certificate(Matrix::identity(2),
                                       Matrix::identity(2), cert, 1e-6),
                  DimensionMismatch);
}

TEST_CASE("feasibility is homogeneous and A_R is scale invariant") {
  const CuioParams design = test_support::demo_design();
  ResetCertificate cert = test_support::reference_certificate();
  const Matrix a_r_base = derive_reset_maps(design.m, cert).a_r;

  const double alpha = 7.0;
  cert.p = alpha * cert.p;
  cert.f = alpha * cert.f;
  cert.q = alpha * cert.q;
  const LmiReport report =
      validate_certificate(design.m, design.n_mat, cert, 1e-2);
  CHECK(report.feasible);
  CHECK(max_abs_diff(derive_reset_maps(design.m, cert).a_r, a_r_base) <= 1e-9);
}

TEST_CASE("synthesis finds a certificate for the demo design") {
  const CuioParams design = test_support::demo_design();
  const SynthesisResult result =
      synthesize_certificate(design.m, design.n_mat, 1.1, 0.8, 1.0);
  REQUIRE(result.feasible());

  const ResetCertificate& cert = *result.certificate;
  const LmiReport report =
      validate_certificate(design.m, design.n_mat, cert, 1e-6);
  CHECK(report.feasible);
  CHECK(is_indefinite(cert.f));
  CHECK(trace(cert.p) == doctest::Approx(3.0).epsilon(1e-6));

  // Deterministic: a second run reproduces the same certificate exactly.
  const SynthesisResult again =
      synthesize_certificate(design.m, design.n_mat, 1.1, 0.8, 1.0);
  REQUIRE(again.feasible());
  CHECK(max_abs_diff(cert.p, again.certificate->p) == 0.0);
  CHECK(max_abs_diff(cert.f, again.certificate->f) == 0.0);
  CHECK(max_abs_diff(cert.q, again.certificate->q) == 0.0);
}

TEST_CASE("synthesis detects a sign contradiction") {
  // Flow inequality forces F < -998 P while the jump block needs
  // lambda_j P + tau_j F to stay PSD.
  const SynthesisResult result =
      synthesize_certificate({{1}}, {{-1}}, 1000.0, 0.5, 1.0);
  CHECK_FALSE(result.feasible());
  CHECK(result.no_convergence);
}

TEST_CASE("synthesis rejects out-of-range scalars") {
  CHECK_THROWS_AS(synthesize_certificate({{1}}, {{-1}}, -1.0, 0.5, 1.0),
                  ConfigError);
  CHECK_THROWS_AS(synthesize_certificate({{1}}, {{-1}}, 1.0, 1.5, 1.0),
                  ConfigError);
}

TEST_CASE("reset maps") {
  const Matrix m = test_support::expected_m();

  SUBCASE("identity after-reset matrix gives an identity jump") {
    ResetCertificate cert;
    cert.p = Matrix::identity(3);
    cert.q = Matrix::identity(3);
    const ResetMaps maps = derive_reset_maps(m, cert);
    CHECK(max_abs_diff(maps.a_r, Matrix::identity(3)) <= 1e-12);
    CHECK(max_abs_diff(maps.h, Matrix::identity(3)) <= 1e-12);
  }

  SUBCASE("zero after-reset matrix gives H = M") {
    ResetCertificate cert;
    cert.p = Matrix::identity(3);
    cert.q = Matrix(3, 3);
    const ResetMaps maps = derive_reset_maps(m, cert);
    CHECK(max_abs_diff(maps.h, m) <= 1e-12);
  }

  SUBCASE("reference certificate reproduces the expected jump map") {
    const ResetCertificate cert = test_support::reference_certificate();
    const ResetMaps maps = derive_reset_maps(m, cert);
    CHECK(max_abs_diff(maps.a_r, cert.a_r) <= 1e-9);
    const Matrix expected_h = {{-0.0009, 0.0, 0.0009},
                               {0.1295, 1.0, 0.5441},
                               {-0.0031, 0.0, 0.0012}};
    CHECK(max_abs_diff(maps.h, expected_h) <= 1e-9);
  }
}

TEST_CASE("after-jump sector exit check") {
  SUBCASE("identity jump never exits") {
    const Matrix f = {{1, 0}, {0, -1}};
    CHECK_FALSE(check_wellposedness(Matrix::identity(2), f).has_value());
  }

  SUBCASE("diagonal analytic case") {
    const Matrix f = {{1, 0}, {0, -1}};
    const Matrix h = {{0, 2}, {0, 0}};
    const auto tau_w = check_wellposedness(h, f);
    REQUIRE(tau_w.has_value());
    CHECK(*tau_w > 0.0);
    CHECK(*tau_w < 4.0);
    const Matrix assembled = transpose(h) * f * h + *tau_w * f;
    CHECK(min_eigenvalue(assembled) > 0.0);
  }

  SUBCASE("reference jump map admits no grid point") {
    const ResetCertificate cert = test_support::reference_certificate();
    CHECK_FALSE(check_wellposedness(cert.h, cert.f).has_value());
  }
}

TEST_CASE("jump block agrees with its Schur-complement form") {
  SplitMix64 rng(21);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.next() % 3);
    ResetCertificate cert;
    cert.p = random_spd(n, rng);
    cert.f = random_symmetric(n, rng);
    cert.a_r = random_matrix(n, n, rng);
    cert.q = cert.p * cert.a_r;
    cert.lambda_j = rng.uniform(0.05, 1.0);
    cert.tau_j = rng.uniform(0.1, 5.0);
    cert.lambda_f = 1.0;
    const Matrix m = random_matrix(n, n, rng);
    const Matrix h = cert.a_r - cert.a_r * m + m;

    // Block form via the validator, quadratic form directly.
    const LmiReport report = validate_certificate(m, -1.0 * Matrix::identity(n),
                                                  cert, 1e-9);
    const bool block_psd = report.margin_jump >= -1e-8;
    const Matrix spro = cert.lambda_j * cert.p + cert.tau_j * cert.f -
                        transpose(h) * cert.p * h;
    const bool quad_psd = min_eigenvalue(spro) >= -1e-8;
    CHECK(block_psd == quad_psd);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("certificate JSON round trip") {
  ResetCertificate cert = test_support::reference_certificate();
  cert.tau_w = 0.0125;
  const std::string text = certificate_to_json(cert);
  const ResetCertificate back = certificate_from_json(text);
  CHECK(max_abs_diff(back.p, cert.p) == 0.0);
  CHECK(max_abs_diff(back.f, cert.f) == 0.0);
  CHECK(max_abs_diff(back.q, cert.q) == 0.0);
  CHECK(max_abs_diff(back.a_r, cert.a_r) == 0.0);
  CHECK(back.lambda_f == cert.lambda_f);
  CHECK(back.lambda_j == cert.lambda_j);
  CHECK(back.tau_j == cert.tau_j);
  REQUIRE(back.tau_w.has_value());
  CHECK(*back.tau_w == *cert.tau_w);
  CHECK(back.epsilon == cert.epsilon);

  SUBCASE("tau_w is omitted when absent") {
    cert.tau_w.reset();
    const ResetCertificate lean = certificate_from_json(certificate_to_json(cert));
    CHECK_FALSE(lean.tau_w.has_value());
  }

  SUBCASE("file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "ruio_cert_test.json";
    save_certificate(cert, path);
    const ResetCertificate loaded = load_certificate(path);
    CHECK(max_abs_diff(loaded.p, cert.p) == 0.0);
    CHECK(max_abs_diff(loaded.q, cert.q) == 0.0);
    std::filesystem::remove(path);
  }

  SUBCASE("malformed documents are rejected") {
    CHECK_THROWS_AS(certificate_from_json("not json"), ConfigError);
    CHECK_THROWS_AS(certificate_from_json("{\"P\": [[1]]}"), ConfigError);
  }
}
