#include "textmatch/match.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "textmatch/assignment.hpp"
#include "textmatch/csv.hpp"
#include "textmatch/errors.hpp"
#include "textmatch/rng.hpp"

namespace textmatch {

MatchedPairSet caliper_match(const DistanceMatrix& dist, const Caliper& caliper) {
    MatchedPairSet set;
    set.with_replacement = true;
    for (int i = 0; i < dist.n_treated; ++i)
        for (int j = 0; j < dist.n_control; ++j) {
            const double d = dist.at(i, j);
            if (d <= caliper.value)
                set.pairs.push_back({dist.treated_docs[i], dist.control_docs[j], d});
        }
    return set;
}

MatchedPairSet optimal_match(const DistanceMatrix& dist, const Caliper& caliper) {
    const int nt = dist.n_treated;
    const int nc = dist.n_control;
    const int n = std::max(nt, nc);

    // Pad to a square matrix. Every infeasible or dummy-column cell costs the
    // same sentinel U, chosen larger than any achievable total of real costs,
    // so the exact solver maximizes matched cardinality first and minimizes
    // total distance second. Dummy rows cost 0 and absorb surplus controls.
    double max_cost = 1.0;
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < nc; ++j) {
            const double d = dist.at(i, j);
            if (std::isfinite(d) && d <= caliper.value) max_cost = std::max(max_cost, d);
        }
    const double unmatched_cost = static_cast<double>(n) * max_cost + 1.0;

    std::vector<double> cost(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < n; ++j) {
            double c = unmatched_cost;
            if (j < nc) {
                const double d = dist.at(i, j);
                if (std::isfinite(d) && d <= caliper.value) c = d;
            }
            cost[static_cast<std::size_t>(i) * n + j] = c;
        }

    const std::vector<int> assigned = solve_assignment(cost, n);

    MatchedPairSet set;
    set.with_replacement = false;
    for (int i = 0; i < nt; ++i) {
        const int j = assigned[i];
        if (j < 0 || j >= nc) continue;
        const double d = dist.at(i, j);
        if (!std::isfinite(d) || d > caliper.value) continue;  // assigned at sentinel cost
        set.pairs.push_back({dist.treated_docs[i], dist.control_docs[j], d});
    }
    return set;
}

MatchedPairSet match_within_calipers(const DistanceMatrix& text_dist, const PropensityModel& ps,
                                     double ps_caliper_sd, const Caliper& text_caliper) {
    const int n_scores = static_cast<int>(ps.scores.size());
    for (int doc : text_dist.treated_docs)
        if (doc >= n_scores) throw ShapeError("propensity scores do not cover the corpus");
    for (int doc : text_dist.control_docs)
        if (doc >= n_scores) throw ShapeError("propensity scores do not cover the corpus");

    const double mean = ps.scores.mean();
    const double sd =
        n_scores > 1 ? std::sqrt((ps.scores.array() - mean).square().sum() / (n_scores - 1))
                     : 0.0;
    const double threshold = ps_caliper_sd * sd;

    DistanceMatrix masked = text_dist;
    for (int i = 0; i < masked.n_treated; ++i) {
        const double si = ps.scores[masked.treated_docs[i]];
        for (int j = 0; j < masked.n_control; ++j)
            if (std::abs(si - ps.scores[masked.control_docs[j]]) > threshold)
                masked.at(i, j) = kInf;
    }
    return optimal_match(masked, text_caliper);
}

namespace {

std::map<std::string, double> label_distribution(const std::vector<std::string>& labels,
                                                 const std::vector<int>& subset) {
    std::map<std::string, double> dist;
    for (int i : subset) ++dist[labels[i]];
    for (auto& [k, v] : dist) v /= static_cast<double>(subset.size());
    return dist;
}

double l1_gap(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
    double gap = 0.0;
    for (const auto& [k, v] : a) {
        auto it = b.find(k);
        gap += std::abs(v - (it == b.end() ? 0.0 : it->second));
    }
    for (const auto& [k, v] : b)
        if (!a.count(k)) gap += v;
    return gap;
}

}  // namespace

TemplateSample select_template(const Corpus& corpus, const std::vector<std::string>& topic_labels,
                               int n_template, int n_candidates, std::uint64_t seed) {
    const int n = corpus.size();
    if (static_cast<int>(topic_labels.size()) != n)
        throw ShapeError("topic label count does not match corpus size");
    if (n_template > n)
        throw SizeError("template size " + std::to_string(n_template) + " exceeds corpus size " +
                        std::to_string(n));
    if (n_template < 1 || n_candidates < 1)
        throw ConfigError("template size and candidate count must be positive");

    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    const std::map<std::string, double> corpus_dist = label_distribution(topic_labels, all);

    Rng rng(seed);
    TemplateSample best;
    bool have_best = false;
    for (int c = 0; c < n_candidates; ++c) {
        std::vector<int> sample = rng.sample_without_replacement(n, n_template);
        const auto dist = label_distribution(topic_labels, sample);
        const double objective = l1_gap(dist, corpus_dist);
        if (!have_best || objective < best.objective) {
            std::sort(sample.begin(), sample.end());
            best.doc_indices = std::move(sample);
            best.label_distribution = dist;
            best.objective = objective;
            have_best = true;
        }
    }
    return best;
}

TemplateMatchResult template_match(const Representation& rep, Metric metric,
                                   const TemplateSample& tmpl,
                                   const std::vector<std::string>& sources,
                                   const std::vector<std::string>& topic_labels,
                                   const Corpus& corpus, const PairwiseOptions& opt) {
    const int n = rep.rows();
    if (static_cast<int>(sources.size()) != n || static_cast<int>(topic_labels.size()) != n)
        throw ShapeError("sources/topic labels do not match representation rows");

    std::set<std::string> source_names(sources.begin(), sources.end());
    TemplateMatchResult result;

    for (const std::string& source : source_names) {
        MatchedPairSet set;
        set.procedure_id = "template:" + source;
        set.with_replacement = false;
        std::vector<std::string> unmatched_ids;

        // strata = primary-topic labels present in the template
        std::set<std::string> strata;
        for (int t : tmpl.doc_indices) strata.insert(topic_labels[t]);

        for (const std::string& stratum : strata) {
            std::vector<int> template_docs, source_docs;
            for (int t : tmpl.doc_indices)
                if (topic_labels[t] == stratum) template_docs.push_back(t);
            for (int i = 0; i < n; ++i)
                if (sources[i] == source && topic_labels[i] == stratum) source_docs.push_back(i);

            if (source_docs.empty()) {
                for (int t : template_docs) unmatched_ids.push_back(corpus.documents[t].id);
                continue;
            }
            const DistanceMatrix dist =
                pairwise_distance_subsets(rep, template_docs, source_docs, metric, opt);
            MatchedPairSet stratum_pairs = optimal_match(dist);
            std::set<int> matched_treated;
            for (const auto& p : stratum_pairs.pairs) matched_treated.insert(p.treated_doc);
            for (int t : template_docs)
                if (!matched_treated.count(t)) unmatched_ids.push_back(corpus.documents[t].id);
            set.pairs.insert(set.pairs.end(), stratum_pairs.pairs.begin(),
                             stratum_pairs.pairs.end());
        }
        std::sort(set.pairs.begin(), set.pairs.end(), [](const auto& a, const auto& b) {
            return a.treated_doc < b.treated_doc;
        });
        if (!unmatched_ids.empty()) {
            std::sort(unmatched_ids.begin(), unmatched_ids.end());
            result.unmatched[source] = std::move(unmatched_ids);
        }
        result.per_source[source] = std::move(set);
    }
    return result;
}

void write_pairs_csv(const MatchedPairSet& set, const Corpus& corpus, const std::string& path) {
    std::string out;
    csv::write_row(out, {"procedure_id", "treated_id", "control_id", "distance"});
    for (const auto& p : set.pairs)
        csv::write_row(out, {set.procedure_id, corpus.documents[p.treated_doc].id,
                             corpus.documents[p.control_doc].id, csv::format_double(p.distance)});
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << out;
}

MatchedPairSet read_pairs_csv(const std::string& path, const Corpus& corpus) {
    const csv::Table table = csv::read_file(path);
    const int proc_col = table.column("procedure_id");
    const int t_col = table.column("treated_id");
    const int c_col = table.column("control_id");
    const int d_col = table.column("distance");
    if (t_col < 0 || c_col < 0) throw FormatError("pairs CSV needs treated_id and control_id");
    MatchedPairSet set;
    for (const auto& row : table.rows) {
        MatchedPair p;
        p.treated_doc = corpus.index_of(row[t_col]);
        p.control_doc = corpus.index_of(row[c_col]);
        if (p.treated_doc < 0 || p.control_doc < 0)
            throw DataError("pairs CSV references unknown document id");
        if (d_col >= 0 && d_col < static_cast<int>(row.size())) p.distance = std::stod(row[d_col]);
        if (set.procedure_id.empty() && proc_col >= 0) set.procedure_id = row[proc_col];
        set.pairs.push_back(p);
    }
    return set;
}

}  // namespace textmatch
