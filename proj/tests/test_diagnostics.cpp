#include <doctest.h>

#include <cmath>

#include "textmatch/diagnostics.hpp"
#include "textmatch/errors.hpp"
#include "textmatch/rng.hpp"

using namespace textmatch;

namespace {

MatchedPairSet pairs_of(const std::vector<std::pair<int, int>>& docs,
                        const std::string& id = "p") {
    MatchedPairSet set;
    set.procedure_id = id;
    for (const auto& [t, c] : docs) set.pairs.push_back({t, c, 0.0});
    return set;
}

Corpus blank_corpus(int n) {
    Corpus corpus;
    for (int i = 0; i < n; ++i) {
        Document d;
        d.id = "d" + std::to_string(i);
        d.group = i % 2;
        d.group_label = std::to_string(d.group);
        corpus.documents.push_back(d);
    }
    corpus.finalize();
    return corpus;
}

}  // namespace

TEST_CASE("standardized_diff is zero for identical group means") {
    const std::vector<double> x = {1, 2, 1, 2};
    const std::vector<int> z = {1, 1, 0, 0};
    CHECK(standardized_diff(x, z).value == doctest::Approx(0.0));
}

TEST_CASE("standardized_diff hand value with n-1 variances") {
    // T={0,2}, C={1,3}: diff = (1-2)/sqrt((2+2)/2) = -0.7071
    const std::vector<double> x = {0, 2, 1, 3};
    const std::vector<int> z = {1, 1, 0, 0};
    CHECK(standardized_diff(x, z).value == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(standardized_diff(x, z).value == doctest::Approx(-0.7071).epsilon(1e-4));
}

TEST_CASE("exact matching on a binary covariate zeroes the post-match diff") {
    const std::vector<double> x = {1, 0, 1, 1, 0, 0};
    const std::vector<int> z = {1, 1, 1, 0, 0, 0};
    // exact matches: d0->d3 (1,1), d1->d4 (0,0)
    const MatchedPairSet set = pairs_of({{0, 3}, {1, 4}});
    const StdDiffResult after = standardized_diff(x, z, &set);
    CHECK(after.value == doctest::Approx(0.0));
    // the unmatched diff is nonzero on this data
    CHECK(standardized_diff(x, z).value != doctest::Approx(0.0));
}

TEST_CASE("zero pooled SD with unequal means is flagged undefined") {
    const std::vector<double> x = {1, 1, 0, 0};
    const std::vector<int> z = {1, 1, 0, 0};
    const StdDiffResult r = standardized_diff(x, z);
    CHECK(r.undefined);
}

TEST_CASE("standardized_diff flips sign under label swap and ignores shift/scale") {
    Rng rng(3);
    std::vector<double> x(40);
    std::vector<int> z(40), zswap(40);
    for (int i = 0; i < 40; ++i) {
        x[i] = rng.normal() + (i < 20 ? 0.7 : 0.0);
        z[i] = i < 20 ? 1 : 0;
        zswap[i] = 1 - z[i];
    }
    const double base = standardized_diff(x, z).value;
    CHECK(standardized_diff(x, zswap).value == doctest::Approx(-base).epsilon(1e-12));

    std::vector<double> shifted = x, scaled = x;
    for (auto& v : shifted) v += 11.0;
    for (auto& v : scaled) v *= 4.5;
    CHECK(standardized_diff(shifted, z).value == doctest::Approx(base).epsilon(1e-12));
    CHECK(standardized_diff(scaled, z).value == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("effective sample size equals the pair count for one-to-one sets") {
    std::vector<std::pair<int, int>> docs;
    for (int i = 0; i < 10; ++i) docs.push_back({i, 100 + i});
    CHECK(effective_sample_size(pairs_of(docs)) == doctest::Approx(10.0));
}

TEST_CASE("effective sample size applies the Kish formula to control reuse") {
    // two controls used (2,1) times: (2+1)^2 / (4+1) = 1.8
    const MatchedPairSet set = pairs_of({{0, 10}, {1, 10}, {2, 11}});
    CHECK(effective_sample_size(set) == doctest::Approx(1.8));
    // ESS is bounded by the number of distinct controls
    CHECK(effective_sample_size(set) <= 2.0);
}

TEST_CASE("jaccard_quality hand values") {
    ConceptMap map;
    map.sets[0] = {"a", "b", "c"};
    map.sets[1] = {"b", "c", "d"};
    map.sets[2] = {"x"};
    map.sets[3] = {"y"};
    map.sets[4] = {"a"};
    map.sets[5] = {"a"};
    const Corpus corpus = blank_corpus(6);

    const JaccardResult r =
        jaccard_quality(pairs_of({{0, 1}, {2, 3}, {4, 5}}), map, corpus);
    CHECK(r.per_pair[0] == doctest::Approx(0.5));  // {a,b,c} vs {b,c,d} -> 2/4
    CHECK(r.per_pair[1] == doctest::Approx(0.0));  // disjoint
    CHECK(r.per_pair[2] == doctest::Approx(1.0));  // identical
    CHECK(r.mean == doctest::Approx(0.5));
}

TEST_CASE("jaccard of two empty sets is 1 and flagged") {
    ConceptMap map;
    map.sets[0] = {};
    map.sets[1] = {};
    const JaccardResult r = jaccard_quality(pairs_of({{0, 1}}), map, blank_corpus(2));
    CHECK(r.per_pair[0] == doctest::Approx(1.0));
    CHECK(r.both_empty_flagged == 1);
}

TEST_CASE("jaccard_quality raises MissingConcepts naming the document") {
    ConceptMap map;
    map.sets[0] = {"a"};
    CHECK_THROWS_WITH_AS(jaccard_quality(pairs_of({{0, 1}}), map, blank_corpus(2)),
                         doctest::Contains("d1"), MissingConcepts);
}

TEST_CASE("pair_frequency counts selections across procedures") {
    const MatchedPairSet a = pairs_of({{0, 10}, {1, 11}}, "a");
    const MatchedPairSet b = pairs_of({{0, 10}, {2, 12}}, "b");
    const MatchedPairSet c = pairs_of({{0, 10}}, "c");
    const PairFrequencyTable table = pair_frequency({a, b, c});
    CHECK(table.union_size() == 3);
    // the shared pair appears in 3 of 3 procedures
    int shared_f = 0, f_sum = 0, n_sum = 0;
    for (std::size_t i = 0; i < table.pair_docs.size(); ++i) {
        if (table.pair_docs[i] == std::make_pair(0, 10)) shared_f = table.frequency[i];
        f_sum += table.frequency[i];
        CHECK(table.frequency[i] >= 1);
        CHECK(table.frequency[i] <= 3);
    }
    for (int n : table.procedure_sizes) n_sum += n;
    CHECK(shared_f == 3);
    CHECK(f_sum == n_sum);  // double-counting identity
}

TEST_CASE("single procedure gives all frequencies 1") {
    const PairFrequencyTable table = pair_frequency({pairs_of({{0, 5}, {1, 6}})});
    for (int f : table.frequency) CHECK(f == 1);
}

TEST_CASE("frequency identity holds on random procedure collections") {
    Rng rng(12);
    std::vector<MatchedPairSet> sets;
    for (int j = 0; j < 9; ++j) {
        std::set<std::pair<int, int>> chosen;
        const int count = 1 + static_cast<int>(rng.below(12));
        for (int k = 0; k < count; ++k)
            chosen.insert({static_cast<int>(rng.below(6)), 50 + static_cast<int>(rng.below(6))});
        std::vector<std::pair<int, int>> docs(chosen.begin(), chosen.end());
        sets.push_back(pairs_of(docs, "p" + std::to_string(j)));
    }
    const PairFrequencyTable table = pair_frequency(sets);
    int f_sum = 0, n_sum = 0;
    for (int f : table.frequency) f_sum += f;
    for (int n : table.procedure_sizes) n_sum += n;
    CHECK(f_sum == n_sum);
}
