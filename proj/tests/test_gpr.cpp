#include "standgp/gpr.hpp"
#include "standgp/model_io.hpp"
#include "standgp/rng.hpp"

#include "oracles.hpp"
#include "tmpfiles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <limits>
#include <string>
#include <vector>

using namespace standgp;

namespace {

TrainingSet random_training_set(Eigen::Index n, Eigen::Index n_y, Eigen::Index n_x,
                                std::uint64_t seed) {
    RngStream rng(seed);
    TrainingSet ts;
    ts.x.resize(n, n_x);
    ts.y.resize(n, n_y);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n_x; ++j) ts.x(i, j) = rng.normal() * 4.0 + 2.0 * j;
        for (Eigen::Index a = 0; a < n_y; ++a)
            ts.y(i, a) = std::abs(10.0 * rng.normal() + 20.0 + 3.0 * a);
    }
    for (Eigen::Index a = 0; a < n_y; ++a) ts.attribute_names.push_back("y" + std::to_string(a));
    for (Eigen::Index j = 0; j < n_x; ++j) ts.predictor_names.push_back("x" + std::to_string(j));
    return ts;
}

Vector random_query(const TrainingSet& ts, std::uint64_t seed) {
    RngStream rng(seed);
    Vector q(ts.n_predictors());
    for (Eigen::Index j = 0; j < q.size(); ++j) q(j) = rng.normal() * 4.0 + 2.0 * j;
    return q;
}

}  // namespace

TEST_CASE("prediction matches the dense solve") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const TrainingSet ts = random_training_set(20, 3, 5, seed);
        const TrainedGprModel m = train(ts);
        for (std::uint64_t q = 0; q < 4; ++q) {
            const Vector x_star = random_query(ts, 1000 * seed + q);
            const PredictiveDistribution fast = predict(m, x_star);
            const PredictiveDistribution dense = oracles::dense_predict(m, x_star);
            CHECK((fast.mean - dense.mean).cwiseAbs().maxCoeff() < 1e-8);
            CHECK((fast.covariance - dense.covariance).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("solve_system inverts the dense system matrix") {
    const TrainingSet ts = random_training_set(18, 4, 3, 9);
    const TrainedGprModel m = train(ts);
    const Eigen::Index n = m.n_train(), n_y = m.n_attributes();

    Matrix dense = separable_kernel(m.gamma_y, gram(m.x_train, m.kernel));
    for (Eigen::Index a = 0; a < n_y; ++a)
        for (Eigen::Index i = 0; i < n; ++i) dense(a * n + i, a * n + i) += m.error_scale * m.d(a);

    RngStream rng(77);
    Matrix z(n, n_y);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index a = 0; a < n_y; ++a) z(i, a) = rng.normal();

    const Matrix t = solve_system(m, z);
    Vector vec_t(n_y * n), vec_z(n_y * n);
    for (Eigen::Index a = 0; a < n_y; ++a)
        for (Eigen::Index i = 0; i < n; ++i) {
            vec_t(a * n + i) = t(i, a);
            vec_z(a * n + i) = z(i, a);
        }
    CHECK((dense * vec_t - vec_z).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("near-zero noise reproduces training targets") {
    const TrainingSet ts = random_training_set(50, 3, 4, 21);
    GprConfig cfg;
    cfg.error_scale = 1e-6;
    // a short length scale keeps the Gram matrix well conditioned, so the
    // error term is what limits the fit rather than shared structure
    cfg.kernel.length_scale = 2.0;
    const TrainedGprModel m = train(ts, cfg);
    for (Eigen::Index i : {Eigen::Index(0), Eigen::Index(17), Eigen::Index(49)}) {
        const PredictiveDistribution out = predict(m, ts.x.row(i).transpose());
        for (Eigen::Index a = 0; a < ts.n_attributes(); ++a) {
            const double denom = std::max(std::abs(ts.y(i, a)), 1.0);
            CHECK(std::abs(out.mean(a) - ts.y(i, a)) / denom < 1e-3);
        }
    }
}

TEST_CASE("predictive mean is linear in the targets when the prior is fixed") {
    const Eigen::Index n = 15;
    TrainingSet base = random_training_set(n, 2, 3, 31);
    TrainingSet t1 = base, t2 = base, t3 = base;
    RngStream rng(32);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index a = 0; a < 2; ++a) {
            t1.y(i, a) = std::abs(rng.normal() + 3.0);
            t2.y(i, a) = std::abs(rng.normal() + 5.0);
            t3.y(i, a) = t1.y(i, a) + 2.0 * t2.y(i, a);
        }

    Matrix gamma(2, 2);
    gamma << 2.0, 0.7, 0.7, 1.5;
    GprConfig cfg;
    cfg.center_targets = false;
    cfg.gamma_override = gamma;

    const Vector q = random_query(base, 33);
    const Vector m1 = predict(train(t1, cfg), q).mean;
    const Vector m2 = predict(train(t2, cfg), q).mean;
    const Vector m3 = predict(train(t3, cfg), q).mean;
    CHECK((m3 - (m1 + 2.0 * m2)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("training row order does not change predictions") {
    const TrainingSet ts = random_training_set(24, 3, 4, 41);
    std::vector<Eigen::Index> perm = {23, 3, 11, 0, 17, 8, 21, 5, 14, 2, 19, 10,
                                      6,  1, 22, 9, 15, 4, 20, 7, 12, 18, 13, 16};
    TrainingSet shuffled = ts;
    for (Eigen::Index i = 0; i < ts.n_train(); ++i) {
        shuffled.x.row(i) = ts.x.row(perm[static_cast<std::size_t>(i)]);
        shuffled.y.row(i) = ts.y.row(perm[static_cast<std::size_t>(i)]);
    }
    const Vector q = random_query(ts, 42);
    const PredictiveDistribution a = predict(train(ts), q);
    const PredictiveDistribution b = predict(train(shuffled), q);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("far queries fall back to the prior") {
    const TrainingSet ts = random_training_set(25, 3, 4, 51);
    const TrainedGprModel m = train(ts);
    Vector q = random_query(ts, 52);
    q.array() += 1e5;  // hundreds of length scales away after standardization
    const PredictiveDistribution out = predict(m, q);
    CHECK((out.mean - m.attribute_means).cwiseAbs().maxCoeff() < 1e-8);
    Matrix prior = m.gamma_y;
    prior.diagonal() += m.error_scale * m.d;
    CHECK((out.covariance - prior).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("predictive covariance is symmetric and bounded by the prior") {
    const TrainingSet ts = random_training_set(30, 5, 6, 61);
    const TrainedGprModel m = train(ts);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const PredictiveDistribution out = predict(m, random_query(ts, 600 + s));
        CHECK(out.covariance.cwiseEqual(out.covariance.transpose()).all());
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(out.covariance);
        CHECK(eig.eigenvalues().minCoeff() > -1e-8);
        // posterior variance cannot exceed prior variance plus noise
        for (Eigen::Index a = 0; a < m.n_attributes(); ++a)
            CHECK(out.covariance(a, a) <= m.gamma_y(a, a) * (1.0 + m.error_scale) + 1e-10);
    }
}

TEST_CASE("constant predictors are dropped with a warning") {
    TrainingSet ts = random_training_set(12, 2, 3, 71);
    ts.x.col(1).setConstant(4.2);
    const TrainedGprModel m = train(ts);
    REQUIRE(m.warnings.size() == 1);
    CHECK(m.warnings[0].find("constant predictor dropped: x1") != std::string::npos);

    Vector q1 = random_query(ts, 72), q2 = q1;
    q2(1) += 123.0;  // differs only in the dropped column
    const PredictiveDistribution a = predict(m, q1);
    const PredictiveDistribution b = predict(m, q2);
    CHECK(a.mean.cwiseEqual(b.mean).all());
    CHECK(a.covariance.cwiseEqual(b.covariance).all());
}

TEST_CASE("training rejects invalid input") {
    TrainingSet ts = random_training_set(10, 2, 3, 81);
    SECTION("too few plots") {
        ts.x = ts.x.topRows(1).eval();
        ts.y = ts.y.topRows(1).eval();
        CHECK_THROWS_AS(train(ts), InputError);
    }
    SECTION("row count mismatch") {
        ts.y = ts.y.topRows(9).eval();
        CHECK_THROWS_AS(train(ts), InputError);
    }
    SECTION("negative targets") {
        ts.y(3, 1) = -1.0;
        CHECK_THROWS_AS(train(ts), InputError);
    }
    SECTION("non-finite predictors") {
        ts.x(2, 2) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(train(ts), InputError);
    }
    SECTION("bad error scale") {
        GprConfig cfg;
        cfg.error_scale = 0.0;
        CHECK_THROWS_AS(train(ts, cfg), InputError);
    }
    SECTION("gamma override with wrong shape") {
        GprConfig cfg;
        cfg.gamma_override = Matrix::Identity(3, 3);
        CHECK_THROWS_AS(train(ts, cfg), InputError);
    }
}

TEST_CASE("prediction rejects invalid queries") {
    const TrainingSet ts = random_training_set(10, 2, 3, 91);
    const TrainedGprModel m = train(ts);
    CHECK_THROWS_AS(predict(m, Vector::Zero(2)), InputError);
    Vector q = random_query(ts, 92);
    q(0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(predict(m, q), InputError);

    Matrix batch(2, 3);
    batch.row(0) = random_query(ts, 93).transpose();
    batch.row(1).setConstant(std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_WITH(predict_batch(m, batch), Catch::Matchers::ContainsSubstring("row 1"));
}

TEST_CASE("singular attribute covariance triggers jitter, not failure") {
    TrainingSet ts = random_training_set(10, 2, 3, 95);
    GprConfig cfg;
    Matrix gamma(2, 2);
    gamma << 1.0, 1.0, 1.0, 1.0;  // exactly singular
    cfg.gamma_override = gamma;
    const TrainedGprModel m = train(ts, cfg);
    CHECK(m.gamma_jitter > 0.0);
    REQUIRE_FALSE(m.warnings.empty());
    CHECK(m.warnings.back().find("jitter") != std::string::npos);
    const PredictiveDistribution out = predict(m, random_query(ts, 96));
    CHECK(out.mean.allFinite());
    CHECK(out.covariance.allFinite());
}

TEST_CASE("duplicate target columns still train") {
    TrainingSet ts = random_training_set(10, 3, 3, 97);
    ts.y.col(2) = ts.y.col(1);
    const TrainedGprModel m = train(ts);
    const PredictiveDistribution out = predict(m, random_query(ts, 98));
    CHECK(out.mean.allFinite());
    CHECK(out.covariance.allFinite());
    // the duplicated attributes get identical predictions
    CHECK_THAT(out.mean(1), Catch::Matchers::WithinRel(out.mean(2), 1e-9));
}

TEST_CASE("saved gpr model reproduces predictions bit for bit") {
    const auto dir = testutil::fresh_dir("gprio");
    const TrainingSet ts = random_training_set(22, 3, 5, 101);
    const TrainedGprModel m = train(ts);
    const auto path = (dir / "model.bin").string();
    save_model(ModelFile{Method::gpr, m}, path);

    const ModelFile back = load_model(path);
    REQUIRE(back.method == Method::gpr);
    const auto& m2 = std::get<TrainedGprModel>(back.model);
    CHECK(m2.attribute_names == m.attribute_names);
    CHECK(m2.predictor_names == m.predictor_names);
    for (std::uint64_t s = 0; s < 3; ++s) {
        const Vector q = random_query(ts, 200 + s);
        const PredictiveDistribution a = predict(m, q);
        const PredictiveDistribution b = predict(m2, q);
        CHECK(a.mean.cwiseEqual(b.mean).all());
        CHECK(a.covariance.cwiseEqual(b.covariance).all());
    }
}

TEST_CASE("model file rejects corrupted input") {
    const auto dir = testutil::fresh_dir("gprio");
    const TrainingSet ts = random_training_set(8, 2, 2, 111);
    const auto path = (dir / "model.bin").string();
    save_model(ModelFile{Method::gpr, train(ts)}, path);

    auto bytes = testutil::read_file(path);
    SECTION("bad magic") {
        bytes[0] = 'X';
        testutil::write_file(dir, "model.bin", bytes);
        CHECK_THROWS_AS(load_model(path), InputError);
    }
    SECTION("truncated") {
        testutil::write_file(dir, "model.bin", bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS_AS(load_model(path), InputError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_model((dir / "absent.bin").string()), InputError);
    }
}
