#include <doctest.h>

#include <cmath>

#include "textmatch/distance.hpp"
#include "textmatch/errors.hpp"
#include "textmatch/rng.hpp"

#include "oracles.hpp"

using namespace textmatch;

namespace {

Representation dense_rep(const Eigen::MatrixXd& m) {
    return dense_representation(m, RepKind::TOPIC, "test", {});
}

Representation sparse_from_dense(const Eigen::MatrixXd& m) {
    Representation rep;
    rep.kind = RepKind::TDM;
    rep.preset_name = "test-sparse";
    rep.is_sparse = true;
    rep.sparse_cols = static_cast<int>(m.cols());
    rep.sparse_rows.resize(m.rows());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j)
            if (m(i, j) != 0.0) rep.sparse_rows[i].emplace_back(j, m(i, j));
    for (int j = 0; j < m.cols(); ++j) rep.column_labels.push_back("c" + std::to_string(j));
    rep.row_flags.assign(m.rows(), 0);
    return rep;
}

}  // namespace

TEST_CASE("identical rows have zero distance under all metrics") {
    Eigen::MatrixXd m(2, 3);
    m << 1, 2, 3, 1, 2, 3;
    const std::vector<int> z = {1, 0};
    for (Metric metric : {Metric::Euclidean, Metric::Cosine}) {
        const DistanceMatrix d = pairwise_distance(dense_rep(m), z, metric);
        CHECK(d.at(0, 0) == doctest::Approx(0.0));
    }
    PairwiseOptions opt;
    opt.ridge = 1e-6;
    const DistanceMatrix d = pairwise_distance(dense_rep(m), z, Metric::Mahalanobis, opt);
    CHECK(d.at(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("orthogonal rows have cosine distance 1") {
    Eigen::MatrixXd m(2, 2);
    m << 1, 0, 0, 1;
    const DistanceMatrix d = pairwise_distance(dense_rep(m), {1, 0}, Metric::Cosine);
    CHECK(d.at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("cosine hand value for (1,1,0) vs (1,0,0)") {
    Eigen::MatrixXd m(2, 3);
    m << 1, 1, 0, 1, 0, 0;
    const DistanceMatrix d = pairwise_distance(dense_rep(m), {1, 0}, Metric::Cosine);
    CHECK(d.at(0, 0) == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(d.at(0, 0) == doctest::Approx(0.29289).epsilon(1e-4));
}

TEST_CASE("mahalanobis with identity covariance equals squared euclidean") {
    // two clouds whose sample covariance is the identity
    Eigen::MatrixXd m(4, 2);
    m << 1, 1, 1, -1, -1, 1, -1, -1;  // covariance = (4/3) I, so scale rows
    m *= std::sqrt(3.0) / 2.0;
    const std::vector<int> z = {1, 1, 0, 0};
    PairwiseOptions opt;
    opt.ridge = 0.0;
    const DistanceMatrix mah = pairwise_distance(dense_rep(m), z, Metric::Mahalanobis, opt);
    const DistanceMatrix euc = pairwise_distance(dense_rep(m), z, Metric::Euclidean);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(mah.at(i, j) == doctest::Approx(euc.at(i, j) * euc.at(i, j)).epsilon(1e-8));
}

TEST_CASE("zero-vector rows get cosine distance 1 against everything") {
    Eigen::MatrixXd m(3, 2);
    m << 0, 0, 1, 2, 0, 0;
    const DistanceMatrix d = pairwise_distance(dense_rep(m), {1, 0, 0}, Metric::Cosine);
    CHECK(d.at(0, 0) == doctest::Approx(1.0));  // zero vs nonzero
    CHECK(d.at(0, 1) == doctest::Approx(1.0));  // zero vs zero
}

TEST_CASE("singular covariance with explicit ridge 0 raises SingularCovariance") {
    Eigen::MatrixXd m(4, 2);
    m << 1, 2, 2, 4, 3, 6, 4, 8;  // second column is twice the first
    PairwiseOptions opt;
    opt.ridge = 0.0;
    CHECK_THROWS_AS(pairwise_distance(dense_rep(m), {1, 1, 0, 0}, Metric::Mahalanobis, opt),
                    SingularCovariance);
}

TEST_CASE("sparse and dense paths agree") {
    Rng rng(2024);
    Eigen::MatrixXd m(20, 15);
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 15; ++j)
            m(i, j) = rng.uniform01() < 0.4 ? std::floor(rng.uniform01() * 5.0) : 0.0;
    std::vector<int> z(20);
    for (int i = 0; i < 20; ++i) z[i] = i % 2;
    for (Metric metric : {Metric::Euclidean, Metric::Cosine}) {
        const DistanceMatrix ds = pairwise_distance(sparse_from_dense(m), z, metric);
        const DistanceMatrix dd = pairwise_distance(dense_rep(m), z, metric);
        for (std::size_t k = 0; k < ds.values.size(); ++k)
            CHECK(ds.values[k] == doctest::Approx(dd.values[k]).epsilon(1e-12));
    }
}

TEST_CASE("pairwise distances match the naive oracle") {
    Rng rng(555);
    Eigen::MatrixXd m(30, 6);
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 6; ++j) m(i, j) = rng.normal();
    std::vector<int> z(30);
    for (int i = 0; i < 30; ++i) z[i] = i < 12 ? 1 : 0;

    const double ridge = 1e-10;
    PairwiseOptions opt;
    opt.ridge = ridge;
    const DistanceMatrix cos = pairwise_distance(dense_rep(m), z, Metric::Cosine);
    const DistanceMatrix euc = pairwise_distance(dense_rep(m), z, Metric::Euclidean);
    const DistanceMatrix mah = pairwise_distance(dense_rep(m), z, Metric::Mahalanobis, opt);
    const Eigen::MatrixXd sigma_inv = oracle::covariance(m, ridge).inverse();

    for (int i = 0; i < cos.n_treated; ++i)
        for (int j = 0; j < cos.n_control; ++j) {
            const Eigen::VectorXd a = m.row(cos.treated_docs[i]);
            const Eigen::VectorXd b = m.row(cos.control_docs[j]);
            CHECK(cos.at(i, j) == doctest::Approx(oracle::cosine_distance(a, b)).epsilon(1e-10));
            CHECK(euc.at(i, j) ==
                  doctest::Approx(oracle::euclidean_distance(a, b)).epsilon(1e-10));
            CHECK(mah.at(i, j) ==
                  doctest::Approx(oracle::mahalanobis_distance(a, b, sigma_inv)).epsilon(1e-7));
        }
}

TEST_CASE("swapping group labels transposes every metric") {
    Rng rng(77);
    Eigen::MatrixXd m(12, 4);
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 4; ++j) m(i, j) = rng.normal();
    std::vector<int> z(12), zswap(12);
    for (int i = 0; i < 12; ++i) {
        z[i] = i < 5 ? 1 : 0;
        zswap[i] = 1 - z[i];
    }
    PairwiseOptions opt;
    opt.ridge = 1e-8;
    for (Metric metric : {Metric::Euclidean, Metric::Cosine, Metric::Mahalanobis}) {
        const DistanceMatrix d = pairwise_distance(dense_rep(m), z, metric, opt);
        const DistanceMatrix dt = pairwise_distance(dense_rep(m), zswap, metric, opt);
        for (int i = 0; i < d.n_treated; ++i)
            for (int j = 0; j < d.n_control; ++j)
                CHECK(d.at(i, j) == doctest::Approx(dt.at(j, i)).epsilon(1e-12));
    }
}

TEST_CASE("cosine is invariant to positive row scaling") {
    Rng rng(13);
    Eigen::MatrixXd m(10, 5);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 5; ++j) m(i, j) = rng.uniform01();
    std::vector<int> z(10);
    for (int i = 0; i < 10; ++i) z[i] = i % 2;
    const DistanceMatrix base = pairwise_distance(dense_rep(m), z, Metric::Cosine);
    Eigen::MatrixXd scaled = m;
    scaled.row(0) *= 17.5;
    scaled.row(3) *= 0.004;
    const DistanceMatrix after = pairwise_distance(dense_rep(scaled), z, Metric::Cosine);
    for (std::size_t k = 0; k < base.values.size(); ++k)
        CHECK(base.values[k] == doctest::Approx(after.values[k]).epsilon(1e-12));
}

TEST_CASE("mahalanobis is invariant to invertible linear maps") {
    Rng rng(99);
    Eigen::MatrixXd m(16, 3);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = rng.normal();
    std::vector<int> z(16);
    for (int i = 0; i < 16; ++i) z[i] = i < 8 ? 1 : 0;
    Eigen::MatrixXd a(3, 3);
    a << 2, 0.5, 0, -1, 1, 0.25, 0.3, 0, 1.5;
    PairwiseOptions opt;
    opt.ridge = 0.0;
    const DistanceMatrix before = pairwise_distance(dense_rep(m), z, Metric::Mahalanobis, opt);
    const DistanceMatrix after =
        pairwise_distance(dense_rep((a * m.transpose()).transpose()), z, Metric::Mahalanobis,
                          opt);
    for (std::size_t k = 0; k < before.values.size(); ++k)
        CHECK(before.values[k] == doctest::Approx(after.values[k]).epsilon(1e-8));
}

TEST_CASE("blocked computation equals the unblocked result") {
    Rng rng(321);
    Eigen::MatrixXd m(50, 8);
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 8; ++j) m(i, j) = rng.normal();
    std::vector<int> z(50);
    for (int i = 0; i < 50; ++i) z[i] = i < 25 ? 1 : 0;
    for (Metric metric : {Metric::Euclidean, Metric::Cosine, Metric::Mahalanobis}) {
        PairwiseOptions small, large;
        small.block_rows = 1;
        small.n_threads = 3;
        large.block_rows = 4096;
        large.n_threads = 1;
        const DistanceMatrix a = pairwise_distance(dense_rep(m), z, metric, small);
        const DistanceMatrix b = pairwise_distance(dense_rep(m), z, metric, large);
        for (std::size_t k = 0; k < a.values.size(); ++k)
            CHECK(a.values[k] == doctest::Approx(b.values[k]).epsilon(1e-12));
    }
}

TEST_CASE("score_distance on raw and logit scales") {
    PropensityModel model;
    model.scores.resize(4);
    model.scores << 0.2, 0.7, 0.5, 0.7311;
    model.linear.resize(4);
    for (int i = 0; i < 4; ++i)
        model.linear[i] = std::log(model.scores[i] / (1.0 - model.scores[i]));
    const std::vector<int> z = {1, 0, 1, 0};

    const DistanceMatrix raw = score_distance(model, z, ScoreScale::Raw);
    CHECK(raw.at(0, 0) == doctest::Approx(0.5));        // |0.2 - 0.7|
    CHECK(raw.at(1, 1) == doctest::Approx(0.2311));     // |0.5 - 0.7311|

    const DistanceMatrix logit = score_distance(model, z, ScoreScale::Logit);
    // logit(0.7311) ~ 1, logit(0.5) = 0
    CHECK(logit.at(1, 1) == doctest::Approx(1.0).epsilon(1e-3));

    // equal scores -> 0
    PropensityModel flat;
    flat.scores.resize(2);
    flat.scores << 0.4, 0.4;
    flat.linear.resize(2);
    flat.linear << -0.4055, -0.4055;
    const DistanceMatrix zero = score_distance(flat, {1, 0}, ScoreScale::Raw);
    CHECK(zero.at(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("equal-width coarsening splits at the midpoint") {
    Eigen::MatrixXd m(4, 1);
    m << 0.0, 0.4, 0.6, 1.0;
    CoarseningRule rule;
    rule.bins = 2;
    const Eigen::MatrixXi bins = coarsen(dense_rep(m), rule);
    CHECK(bins(0, 0) == 0);
    CHECK(bins(1, 0) == 0);
    CHECK(bins(2, 0) == 1);
    CHECK(bins(3, 0) == 1);
}

TEST_CASE("B=1 and constant columns coarsen to a single bin") {
    Eigen::MatrixXd m(3, 2);
    m << 1, 5, 2, 5, 3, 5;
    CoarseningRule one;
    one.bins = 1;
    CHECK(coarsen(dense_rep(m), one).isZero());
    CoarseningRule two;
    two.bins = 4;
    const Eigen::MatrixXi bins = coarsen(dense_rep(m), two);
    for (int i = 0; i < 3; ++i) CHECK(bins(i, 1) == 0);  // constant column
}

TEST_CASE("quantile coarsening assigns ties to the lower bin") {
    Eigen::MatrixXd m(4, 1);
    m << 1.0, 2.0, 2.0, 3.0;
    CoarseningRule rule;
    rule.bins = 2;
    rule.binning = Binning::Quantile;
    const Eigen::MatrixXi bins = coarsen(dense_rep(m), rule);
    // median (type 7) = 2; values equal to the boundary fall low
    CHECK(bins(0, 0) == 0);
    CHECK(bins(1, 0) == 0);
    CHECK(bins(2, 0) == 0);
    CHECK(bins(3, 0) == 1);
}

TEST_CASE("cem distance is zero on identical bins and infinite otherwise") {
    Eigen::MatrixXi coarse(4, 2);
    coarse << 0, 1, 0, 1, 0, 0, 1, 1;
    const DistanceMatrix d = cem_distance(coarse, {1, 0, 0, 0});
    CHECK(d.at(0, 0) == 0.0);            // same bins
    CHECK(d.at(0, 1) == kInf);           // differs in one column
    CHECK(d.at(0, 2) == kInf);
    for (double v : d.values) CHECK((v == 0.0 || v == kInf));
}

TEST_CASE("cem with per-value bins equals exact matching on raw values") {
    Rng rng(808);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 8 + static_cast<int>(rng.below(8));
        const int p = 1 + static_cast<int>(rng.below(3));
        Eigen::MatrixXd m(n, p);
        std::vector<int> levels(p);
        for (int j = 0; j < p; ++j) {
            // every level 0..B-1 appears at least once, so equal-width bins
            // separate exactly the distinct values
            const int b = 2 + static_cast<int>(rng.below(3));
            levels[j] = b;
            for (int i = 0; i < n; ++i)
                m(i, j) = static_cast<double>(i < b ? i : rng.below(b));
        }
        std::vector<int> z(n);
        for (int i = 0; i < n; ++i) z[i] = static_cast<int>(rng.below(2));
        if (std::count(z.begin(), z.end(), 1) == 0) z[0] = 1;
        if (std::count(z.begin(), z.end(), 0) == 0) z[n - 1] = 0;

        CoarseningRule rule;
        rule.per_column = levels;
        const DistanceMatrix d = cem_distance(coarsen(dense_rep(m), rule), z);
        for (int i = 0; i < d.n_treated; ++i)
            for (int j = 0; j < d.n_control; ++j) {
                const bool same =
                    (m.row(d.treated_docs[i]) - m.row(d.control_docs[j])).cwiseAbs().maxCoeff() ==
                    0.0;
                CHECK((d.at(i, j) == 0.0) == same);
            }
    }
}

TEST_CASE("derive_caliper quantile uses linear interpolation") {
    DistanceMatrix d;
    d.n_treated = 2;
    d.n_control = 2;
    d.treated_docs = {0, 1};
    d.control_docs = {2, 3};
    d.values = {1, 2, 3, 4};
    CHECK(derive_caliper(d, CaliperRule::quantile(0.5)).value == doctest::Approx(2.5));
    CHECK(derive_caliper(d, CaliperRule::absolute(0.3)).value == doctest::Approx(0.3));
    // sd of {1,2,3,4} with n-1 is ~1.29099
    CHECK(derive_caliper(d, CaliperRule::sd_multiple(0.5)).value ==
          doctest::Approx(0.5 * 1.2909944).epsilon(1e-6));
    // 0.1th-quantile preset reading: q = 0.001
    CHECK(derive_caliper(d, CaliperRule::quantile(0.001)).value ==
          doctest::Approx(1.0 + 0.003).epsilon(1e-9));
}

TEST_CASE("derive_caliper requires a finite entry") {
    DistanceMatrix d;
    d.n_treated = 1;
    d.n_control = 2;
    d.treated_docs = {0};
    d.control_docs = {1, 2};
    d.values = {kInf, kInf};
    CHECK_THROWS_AS(derive_caliper(d, CaliperRule::quantile(0.5)), NoFiniteDistances);
}
