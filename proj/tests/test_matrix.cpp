#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "ltkd/error.hpp"
#include "ltkd/matrix.hpp"

using namespace ltkd;
using ltkd::testing::random_matrix;

TEST_CASE("matmul of small matrices") {
  const Matrix a{{1, 2, 3}, {4, 5, 6}};
  const Matrix b{{7, 8}, {9, 10}, {11, 12}};
  CHECK(matmul(a, b) == Matrix{{58, 64}, {139, 154}});
  CHECK(matmul_tn(transpose(a), b) == matmul(a, b));
  CHECK(matmul_nt(a, transpose(b)) == matmul(a, b));
}

TEST_CASE("shape mismatches throw ShapeError") {
  const Matrix a(2, 3);
  const Matrix b(2, 3);
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, Matrix(3, 2)), ShapeError);
  CHECK_THROWS_AS(add_row_bias(a, Matrix(1, 2)), ShapeError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("identity, transpose and elementwise helpers") {
  Rng rng = make_rng(1, "matrix");
  const Matrix a = random_matrix(4, 5, rng);
  CHECK(matmul(Matrix::identity(4), a) == a);
  CHECK(transpose(transpose(a)) == a);
  CHECK(max_abs_diff(sub(add(a, a), a), a) == 0.0);
  CHECK(hadamard(Matrix{{1, 2}}, Matrix{{3, 4}}) == Matrix{{3, 8}});
  CHECK(scale(Matrix{{1, -2}}, 3.0) == Matrix{{3, -6}});
  CHECK(relu(Matrix{{-1, 0, 2}}) == Matrix{{0, 0, 2}});
  CHECK(column_sums(Matrix{{1, 2}, {3, 4}}) == Matrix{{4, 6}});
  CHECK(sum(Matrix{{1, 2}, {3, 4}}) == 10.0);
  CHECK(add_row_bias(Matrix{{1, 2}, {3, 4}}, Matrix{{10, 20}}) == Matrix{{11, 22}, {13, 24}});
  const std::size_t idx[] = {1, 1, 0};
  CHECK(gather_rows(Matrix{{1, 2}, {3, 4}}, idx) == Matrix{{3, 4}, {3, 4}, {1, 2}});
}

TEST_CASE("matmul is associative within 1e-9") {
  Rng rng = make_rng(2, "associativity");
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = random_matrix(6, 7, rng);
    const Matrix b = random_matrix(7, 5, rng);
    const Matrix c = random_matrix(5, 4, rng);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("finiteness checks") {
  Matrix m{{1, 2}};
  CHECK(all_finite(m));
  CHECK_NOTHROW(require_finite(m, "test"));
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(all_finite(m));
  CHECK_THROWS_AS(require_finite(m, "test"), InputError);
}
