#include "standgp/kernel.hpp"
#include "standgp/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace standgp;

TEST_CASE("matern32 point values") {
    // k(d) = (1 + sqrt(3) d / l) exp(-sqrt(3) d / l), evaluated directly
    CHECK(matern32(0.0) == 1.0);
    CHECK_THAT(matern32(10.0), Catch::Matchers::WithinAbs(0.4833577245965077, 1e-12));
    CHECK_THAT(matern32(5.0), Catch::Matchers::WithinAbs(0.7848876539574507, 1e-12));

    KernelParams p;
    p.length_scale = 2.5;
    const double s = std::sqrt(3.0) * 1.7 / 2.5;
    CHECK_THAT(matern32(1.7, p), Catch::Matchers::WithinRel((1.0 + s) * std::exp(-s), 1e-14));
}

TEST_CASE("matern32 scales with signal variance") {
    KernelParams p;
    p.signal_sigma = 2.0;
    CHECK_THAT(matern32(0.0, p), Catch::Matchers::WithinRel(4.0, 1e-14));
    CHECK_THAT(matern32(7.0, p), Catch::Matchers::WithinRel(4.0 * matern32(7.0), 1e-14));
}

TEST_CASE("matern32 decreases monotonically") {
    double prev = matern32(0.0);
    for (double d = 0.25; d <= 60.0; d += 0.25) {
        const double k = matern32(d);
        CHECK(k < prev);
        CHECK(k > 0.0);
        prev = k;
    }
}

TEST_CASE("matern32 rejects bad arguments") {
    CHECK_THROWS_AS(matern32(-1.0), InputError);
    CHECK_THROWS_AS(matern32(std::nan("")), InputError);
    KernelParams p;
    p.length_scale = 0.0;
    CHECK_THROWS_AS(p.validate(), InputError);
    p.length_scale = 10.0;
    p.signal_sigma = -1.0;
    CHECK_THROWS_AS(p.validate(), InputError);
}

TEST_CASE("euclidean_distance matches norm and checks sizes") {
    Vector a(3), b(3);
    a << 1.0, -2.0, 3.0;
    b << 4.0, 2.0, 3.0;
    CHECK_THAT(euclidean_distance(a, b), Catch::Matchers::WithinRel(5.0, 1e-14));
    Vector c(2);
    c << 0.0, 0.0;
    CHECK_THROWS_AS(euclidean_distance(a, c), InputError);
}

TEST_CASE("gram matrix matches pairwise kernel evaluations") {
    RngStream rng(101);
    const Eigen::Index n = 23, p = 7;
    Matrix x(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.normal();

    const Matrix k = gram(x);
    REQUIRE(k.rows() == n);
    REQUIRE(k.cols() == n);
    for (Eigen::Index i = 0; i < n; ++i) {
        CHECK(k(i, i) == 1.0);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double expected =
                matern32(euclidean_distance(x.row(i).transpose(), x.row(j).transpose()));
            CHECK_THAT(k(i, j), Catch::Matchers::WithinAbs(expected, 1e-10));
            CHECK(k(i, j) == k(j, i));
        }
    }
}

TEST_CASE("gram matrix is positive semidefinite") {
    RngStream rng(202);
    Matrix x(40, 5);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = 3.0 * rng.normal();
    const Matrix k = gram(x);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
    CHECK(eig.eigenvalues().minCoeff() > -1e-9);
}

TEST_CASE("cross gram of disjoint sets") {
    Matrix a(2, 1), b(3, 1);
    a << 0.0, 1.0;
    b << 0.0, 2.0, 10.0;
    const Matrix k = gram(a, b);
    REQUIRE(k.rows() == 2);
    REQUIRE(k.cols() == 3);
    CHECK_THAT(k(0, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(k(0, 2), Catch::Matchers::WithinAbs(matern32(10.0), 1e-12));
    CHECK_THAT(k(1, 1), Catch::Matchers::WithinAbs(matern32(1.0), 1e-12));
    CHECK_THROWS_AS(gram(a, Matrix(0, 1)), InputError);
    CHECK_THROWS_AS(gram(a, Matrix(3, 2)), InputError);
}

TEST_CASE("separable kernel expands blockwise") {
    Matrix gamma(2, 2);
    gamma << 4.0, 1.0, 1.0, 2.0;
    Matrix k(3, 3);
    k << 1.0, 0.5, 0.2, 0.5, 1.0, 0.4, 0.2, 0.4, 1.0;
    const Matrix big = separable_kernel(gamma, k);
    REQUIRE(big.rows() == 6);
    REQUIRE(big.cols() == 6);
    for (Eigen::Index a = 0; a < 2; ++a)
        for (Eigen::Index b = 0; b < 2; ++b)
            for (Eigen::Index i = 0; i < 3; ++i)
                for (Eigen::Index j = 0; j < 3; ++j)
                    CHECK(big(a * 3 + i, b * 3 + j) == gamma(a, b) * k(i, j));

    Matrix asym(2, 2);
    asym << 1.0, 0.5, 0.1, 1.0;
    CHECK_THROWS_AS(separable_kernel(asym, k), InputError);
    CHECK_THROWS_AS(separable_kernel(Matrix(2, 3), k), InputError);
}
