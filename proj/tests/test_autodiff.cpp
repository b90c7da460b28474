#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "trussmat/autodiff.hpp"
#include "trussmat/cholesky.hpp"
#include "trussmat/errors.hpp"

using trussmat::ad::Matrix;
using trussmat::ad::Tape;
using trussmat::ad::Var;
namespace ad = trussmat::ad;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

Matrix spd_matrix(std::mt19937_64& rng, Eigen::Index n) {
  const Matrix a = random_matrix(rng, n, n);
  return a * a.transpose() + static_cast<double>(n) * Matrix::Identity(n, n);
}

// Checks the tape gradient of a scalar function of two matrices against
// central differences.
template <typename F>
void check_binary(F f, Matrix a, Matrix b, double tol = 1e-6) {
  Tape tape;
  const Var va = tape.variable(a);
  const Var vb = tape.variable(b);
  const Var out = f(va, vb);
  tape.backward(out);
  auto plain = [&] {
    Tape t;
    return f(t.variable(a), t.variable(b)).scalar();
  };
  CHECK(testing::relative_error(tape.grad(va), testing::central_difference(plain, a, 1e-6)) <
        tol);
  CHECK(testing::relative_error(tape.grad(vb), testing::central_difference(plain, b, 1e-6)) <
        tol);
}

template <typename F>
void check_unary(F f, Matrix a, double tol = 1e-6) {
  Tape tape;
  const Var va = tape.variable(a);
  tape.backward(f(va));
  auto plain = [&] {
    Tape t;
    return f(t.variable(a)).scalar();
  };
  CHECK(testing::relative_error(tape.grad(va), testing::central_difference(plain, a, 1e-6)) <
        tol);
}

// Weighted sum that makes every entry of x matter to the root.
Var probe(const Var& x) {
  Matrix w(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = 0.3 + 0.17 * static_cast<double>(i);
  return ad::sum(ad::mul(x, x.tape().constant(w)));
}

}  // namespace

TEST_CASE("elementwise arithmetic gradients") {
  std::mt19937_64 rng(11);
  const Matrix a = random_matrix(rng, 3, 2);
  const Matrix b = random_matrix(rng, 3, 2, 0.5, 2.0);
  check_binary([](const Var& x, const Var& y) { return probe(x + y); }, a, b);
  check_binary([](const Var& x, const Var& y) { return probe(x - y); }, a, b);
  check_binary([](const Var& x, const Var& y) { return probe(ad::mul(x, y)); }, a, b);
  check_binary([](const Var& x, const Var& y) { return probe(ad::div(x, y)); }, a, b);
  check_unary([](const Var& x) { return probe(-x + 2.0 * x - 1.5); }, a);
  check_unary([](const Var& x) { return probe(3.0 - x * 0.5 + 1.0); }, a);
}

TEST_CASE("1x1 operands broadcast in both directions") {
  std::mt19937_64 rng(12);
  const Matrix a = random_matrix(rng, 4, 1);
  const Matrix s = Matrix::Constant(1, 1, 1.7);
  check_binary([](const Var& x, const Var& y) { return probe(x + y); }, a, s);
  check_binary([](const Var& x, const Var& y) { return probe(y - x); }, a, s);
  check_binary([](const Var& x, const Var& y) { return probe(ad::mul(y, x)); }, a, s);
  check_binary([](const Var& x, const Var& y) { return probe(ad::div(x, y)); }, a, s);
  check_binary([](const Var& x, const Var& y) { return probe(ad::div(y, x + 3.0)); }, a, s);

  Tape tape;
  const Var v = tape.variable(a);
  const Var c = tape.variable(s);
  tape.backward(ad::sum(ad::mul(v, c)));
  CHECK(tape.grad(c)(0, 0) == doctest::Approx(a.sum()).epsilon(1e-14));
}

TEST_CASE("shape checks and non-scalar roots") {
  Tape tape;
  const Var a = tape.variable(Matrix::Ones(2, 3));
  const Var b = tape.variable(Matrix::Ones(3, 2));
  CHECK_THROWS_AS(a + b, trussmat::ShapeError);
  CHECK_THROWS_AS(ad::mul(a, b), trussmat::ShapeError);
  CHECK_THROWS_AS(ad::matmul(a, a), trussmat::ShapeError);
  CHECK_THROWS_AS(ad::dot(a, b), trussmat::ShapeError);
  CHECK_THROWS_AS(ad::add_row(a, tape.constant(Matrix::Ones(1, 2))), trussmat::ShapeError);
  CHECK_THROWS_AS(a.scalar(), trussmat::ShapeError);
  CHECK_THROWS_AS(tape.backward(a), trussmat::ContractError);
}

TEST_CASE("activation gradients") {
  std::mt19937_64 rng(13);
  const Matrix a = random_matrix(rng, 2, 3);
  const Matrix pos = random_matrix(rng, 2, 3, 0.2, 2.0);
  // Keep relu inputs away from the kink.
  Matrix away = a;
  for (Eigen::Index i = 0; i < away.size(); ++i)
    if (std::abs(away(i)) < 0.05) away(i) = 0.3;
  check_unary([](const Var& x) { return probe(ad::relu(x)); }, away);
  check_unary([](const Var& x) { return probe(ad::sigmoid(x)); }, a);
  check_unary([](const Var& x) { return probe(ad::exp(x)); }, a);
  check_unary([](const Var& x) { return probe(ad::log(x)); }, pos);
  check_unary([](const Var& x) { return probe(ad::pow(x, 2.5)); }, pos);
  check_unary([](const Var& x) { return probe(ad::pow(x, 2.0)); }, a);
}

TEST_CASE("log outside its domain reports the entry") {
  Tape tape;
  Matrix m(1, 3);
  m << 1.0, 0.0, 2.0;
  try {
    (void)ad::log(tape.variable(m));
    FAIL("expected DomainError");
  } catch (const trussmat::DomainError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("matrix products, reductions and element access") {
  std::mt19937_64 rng(14);
  const Matrix a = random_matrix(rng, 3, 4);
  const Matrix b = random_matrix(rng, 4, 2);
  check_binary([](const Var& x, const Var& y) { return probe(ad::matmul(x, y)); }, a, b);
  check_unary([](const Var& x) { return probe(ad::transpose(x)); }, a);
  check_binary(
      [](const Var& x, const Var& y) { return probe(ad::add_row(x, ad::transpose(y))); },
      random_matrix(rng, 5, 2), random_matrix(rng, 2, 1));
  check_unary([](const Var& x) { return ad::mean(ad::mul(x, x)); }, a);
  check_binary([](const Var& x, const Var& y) { return ad::dot(x, y); }, a, random_matrix(rng, 3, 4));
  check_unary([](const Var& x) { return ad::element(x, 1, 2) * 3.0; }, a);
  check_unary([](const Var& x) { return ad::element(x, 2) * 3.0 + ad::element(x, 0); },
              random_matrix(rng, 4, 1));
}

TEST_CASE("constants never receive adjoints") {
  Tape tape;
  const Var c = tape.constant(Matrix::Constant(2, 2, 3.0));
  const Var v = tape.variable(Matrix::Constant(2, 2, 2.0));
  tape.backward(ad::sum(ad::mul(c, v)));
  CHECK_FALSE(c.requires_grad());
  CHECK(tape.grad(c).isZero(0.0));
  CHECK(tape.grad(v).isApprox(Matrix::Constant(2, 2, 3.0)));
}

TEST_CASE("backward clears adjoints from the previous sweep") {
  Tape tape;
  const Var v = tape.variable(2.0);
  const Var y = ad::mul(v, v);
  tape.backward(y);
  tape.backward(y);
  CHECK(tape.grad(v)(0, 0) == 4.0);
}

TEST_CASE("linear_solve adjoint matches finite differences") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    // K = S + Sᵀ + 10 I keeps every perturbation of S symmetric and SPD.
    const Matrix s = random_matrix(rng, 5, 5);
    const Matrix f = random_matrix(rng, 5, 1);
    check_binary(
        [](const Var& ss, const Var& ff) {
          Tape& t = ss.tape();
          const Var k = ss + ad::transpose(ss) + t.constant(10.0 * Matrix::Identity(5, 5));
          return probe(ad::linear_solve(k, ff));
        },
        s, f, 1e-6);
  }
}

TEST_CASE("linear_solve matches Eigen and rejects singular systems") {
  std::mt19937_64 rng(16);
  const Matrix k = spd_matrix(rng, 6);
  const Matrix f = random_matrix(rng, 6, 1);
  Tape tape;
  const Var u = ad::linear_solve(tape.constant(k), tape.constant(f));
  CHECK((u.value() - k.llt().solve(f)).norm() < 1e-12);

  Matrix singular = Matrix::Identity(3, 3);
  singular(2, 2) = 0.0;
  CHECK_THROWS_AS(ad::linear_solve(tape.constant(singular), tape.constant(Matrix::Ones(3, 1))),
                  trussmat::SingularMatrixError);
}

TEST_CASE("weighted_gram value and adjoint") {
  std::mt19937_64 rng(17);
  const Matrix d = random_matrix(rng, 6, 4);
  const Matrix c = random_matrix(rng, 6, 1, 0.5, 2.0);
  Tape tape;
  const Var g = ad::weighted_gram(d, tape.variable(c));
  const Matrix expected = d.transpose() * c.col(0).asDiagonal() * d;
  CHECK((g.value() - expected).norm() < 1e-13);
  check_unary([&](const Var& x) { return probe(ad::weighted_gram(d, x)); }, c);
}

TEST_CASE("pnorm bounds the positive maximum") {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXd x = random_matrix(rng, 8, 1, -2.0, 2.0);
    const double top = std::max(0.0, x.maxCoeff());
    double previous = std::numeric_limits<double>::infinity();
    for (int p : {6, 10, 30}) {
      const double value = ad::pnorm_value(x, p);
      CHECK(value >= top);
      CHECK(value - top <= previous);
      previous = value - top;
    }
  }
  Eigen::Vector3d x(1.0, 2.0, 3.0);
  CHECK(ad::pnorm_value(x, 6) == doctest::Approx(std::pow(794.0, 1.0 / 6.0)).epsilon(1e-14));
  CHECK(ad::pnorm_value(Eigen::Vector3d(-1.0, -2.0, 0.0), 6) == 0.0);
}

TEST_CASE("pnorm gradient and contract") {
  std::mt19937_64 rng(19);
  const Matrix x = random_matrix(rng, 6, 1, -1.0, 1.0);
  check_unary([](const Var& v) { return ad::pnorm(v, 6); }, x);

  Tape tape;
  const Var neg = tape.variable(Matrix::Constant(3, 1, -1.0));
  const Var zero = ad::pnorm(neg, 6);
  tape.backward(zero);
  CHECK(zero.scalar() == 0.0);
  CHECK(tape.grad(neg).isZero(0.0));

  CHECK_THROWS_AS(ad::pnorm(neg, 3), trussmat::ContractError);
  CHECK_THROWS_AS(ad::pnorm(neg, 0), trussmat::ContractError);
  CHECK_THROWS_AS(ad::pnorm_value(Eigen::Vector3d::Ones(), -2), trussmat::ContractError);
}

TEST_CASE("Cholesky solves SPD systems and reports the failing pivot") {
  std::mt19937_64 rng(20);
  const Matrix k = spd_matrix(rng, 7);
  const trussmat::Cholesky chol(k);
  CHECK((chol.lower() * chol.lower().transpose() - k).norm() < 1e-12 * k.norm());
  const Eigen::VectorXd f = random_matrix(rng, 7, 1);
  CHECK((k * chol.solve(f) - f).norm() < 1e-12);

  Matrix singular = Matrix::Identity(4, 4);
  singular(2, 2) = 0.0;
  try {
    trussmat::Cholesky bad(singular);
    FAIL("expected SingularMatrixError");
  } catch (const trussmat::SingularMatrixError& e) {
    CHECK(e.pivot() == 2);
  }
  CHECK_THROWS_AS(trussmat::Cholesky(Matrix::Ones(2, 3)), trussmat::ShapeError);
}
