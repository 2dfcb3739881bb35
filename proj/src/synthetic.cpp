#include "textmatch/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "textmatch/csv.hpp"
#include "textmatch/errors.hpp"
#include "textmatch/hash.hpp"
#include "textmatch/rng.hpp"

namespace textmatch {

SyntheticSpec default_confounded_spec() {
    SyntheticSpec spec;
    spec.keywords = {
        {"benghazi", 0.50, 0.12, 4},
        {"obamacare", 0.45, 0.15, 4},
        {"stimulus", 0.40, 0.10, 4},
    };
    spec.outcome_topic_coef = {2.0, -1.5, 1.0};
    spec.outcome_keyword_coef = {1.0, -1.0, 0.5};
    return spec;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_topics < 2) throw ConfigError("synthetic corpus needs at least 2 topics");
    if (spec.doc_length < 1) throw ConfigError("document length must be positive");
    Rng rng(spec.seed);

    const int k = spec.n_topics;
    const int n = spec.n_treated + spec.n_control;

    // group-specific Dirichlet parameters: group 1 oversamples the first
    // quarter of the topics by (1 + confound_strength)
    const int n_biased = std::max(1, k / 4);
    std::vector<double> alpha_control(k, spec.dirichlet_alpha);
    std::vector<double> alpha_treated(k, spec.dirichlet_alpha);
    for (int t = 0; t < n_biased; ++t)
        alpha_treated[t] = spec.dirichlet_alpha * (1.0 + spec.confound_strength);

    // per-topic vocabulary with a power-law rank distribution
    std::vector<std::vector<std::string>> topic_words(k);
    std::vector<std::vector<double>> topic_cdf(k);
    for (int t = 0; t < k; ++t) {
        topic_words[t].resize(spec.words_per_topic);
        std::vector<double> weights(spec.words_per_topic);
        double total = 0.0;
        for (int w = 0; w < spec.words_per_topic; ++w) {
            topic_words[t][w] = "w" + std::to_string(t) + "x" + std::to_string(w);
            weights[w] = 1.0 / (1.0 + w);
            total += weights[w];
        }
        topic_cdf[t].resize(spec.words_per_topic);
        double acc = 0.0;
        for (int w = 0; w < spec.words_per_topic; ++w) {
            acc += weights[w] / total;
            topic_cdf[t][w] = acc;
        }
    }

    SyntheticData data;
    for (const auto& kw : spec.keywords) data.keyword_names.push_back(kw.token);

    auto coef_at = [](const std::vector<double>& v, int i, double fallback) {
        return i < static_cast<int>(v.size()) ? v[i] : fallback;
    };

    for (int i = 0; i < n; ++i) {
        const int group = i < spec.n_treated ? 1 : 0;
        Document doc;
        doc.id = "d" + std::to_string(i);
        doc.group = group;
        doc.group_label = std::to_string(group);

        const std::vector<double> theta =
            rng.dirichlet(group == 1 ? alpha_treated : alpha_control);
        data.true_topic_shares.push_back(theta);

        std::vector<std::string> tokens;
        tokens.reserve(spec.doc_length + 16);
        for (int pos = 0; pos < spec.doc_length; ++pos) {
            double u = rng.uniform01();
            int topic = 0;
            double acc = 0.0;
            for (int t = 0; t < k; ++t) {
                acc += theta[t];
                if (u <= acc || t == k - 1) {
                    topic = t;
                    break;
                }
            }
            const double uw = rng.uniform01();
            int w = static_cast<int>(
                std::lower_bound(topic_cdf[topic].begin(), topic_cdf[topic].end(), uw) -
                topic_cdf[topic].begin());
            if (w >= spec.words_per_topic) w = spec.words_per_topic - 1;
            tokens.push_back(topic_words[topic][w]);
        }

        std::vector<int> present(spec.keywords.size(), 0);
        for (std::size_t kw = 0; kw < spec.keywords.size(); ++kw) {
            const auto& conf = spec.keywords[kw];
            const double p = group == 1 ? conf.p_treated : conf.p_control;
            if (rng.uniform01() < p) {
                present[kw] = 1;
                for (int r = 0; r < conf.repeats; ++r) tokens.push_back(conf.token);
            }
            doc.covariates["kw_" + conf.token] = present[kw];
        }
        data.keyword_present.push_back(present);

        double outcome = 0.0;
        for (int c = 0; c < spec.n_numeric_covariates; ++c) {
            const double x = rng.normal() + (group == 1 ? spec.numeric_shift : 0.0);
            doc.covariates["x" + std::to_string(c)] = x;
            outcome += 0.5 * x;
        }
        for (int t = 0; t < k; ++t) outcome += coef_at(spec.outcome_topic_coef, t, 0.0) * theta[t];
        for (std::size_t kw = 0; kw < spec.keywords.size(); ++kw)
            outcome += coef_at(spec.outcome_keyword_coef, static_cast<int>(kw), 1.0) * present[kw];
        outcome += spec.outcome_noise_sd * rng.normal();
        doc.outcome = outcome;

        std::string text;
        for (std::size_t tkn = 0; tkn < tokens.size(); ++tkn) {
            if (tkn) text += ' ';
            text += tokens[tkn];
        }
        doc.text = std::move(text);
        data.corpus.documents.push_back(std::move(doc));
    }
    data.corpus.finalize();
    return data;
}

void write_synthetic(const SyntheticData& data, const std::string& corpus_path,
                     const std::string& truth_path) {
    const Corpus& corpus = data.corpus;
    std::vector<std::string> cov_names;
    if (!corpus.documents.empty())
        for (const auto& [name, v] : corpus.documents.front().covariates)
            cov_names.push_back(name);

    std::string out;
    std::vector<std::string> header = {"id", "group", "text"};
    header.insert(header.end(), cov_names.begin(), cov_names.end());
    header.push_back("outcome");
    csv::write_row(out, header);
    for (const auto& doc : corpus.documents) {
        std::vector<std::string> row = {doc.id, doc.group_label, doc.text};
        for (const auto& name : cov_names)
            row.push_back(csv::format_double(doc.covariates.at(name)));
        row.push_back(doc.outcome ? csv::format_double(*doc.outcome) : "");
        csv::write_row(out, row);
    }
    std::ofstream f(corpus_path, std::ios::binary);
    if (!f) throw Error("cannot write " + corpus_path);
    f << out;

    std::string truth;
    std::vector<std::string> theader = {"id", "group"};
    const int k = data.true_topic_shares.empty()
                      ? 0
                      : static_cast<int>(data.true_topic_shares.front().size());
    for (int t = 0; t < k; ++t) theader.push_back("theta_" + std::to_string(t));
    for (const auto& name : data.keyword_names) theader.push_back("kw_" + name);
    csv::write_row(truth, theader);
    for (int i = 0; i < corpus.size(); ++i) {
        std::vector<std::string> row = {corpus.documents[i].id,
                                        corpus.documents[i].group_label};
        for (int t = 0; t < k; ++t)
            row.push_back(csv::format_double(data.true_topic_shares[i][t]));
        for (std::size_t kw = 0; kw < data.keyword_names.size(); ++kw)
            row.push_back(std::to_string(data.keyword_present[i][kw]));
        csv::write_row(truth, row);
    }
    std::ofstream tf(truth_path, std::ios::binary);
    if (!tf) throw Error("cannot write " + truth_path);
    tf << truth;
}

void write_random_embedding(const Corpus& corpus, int dim, std::uint64_t seed,
                            const std::string& path) {
    if (dim < 1) throw ConfigError("embedding dimension must be positive");
    const Vocabulary vocab = build_vocabulary(corpus, TokenRules{}, 1, corpus.size());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    for (const auto& term : vocab.terms) {
        // per-term stream so the table does not depend on vocabulary order
        Rng rng(splitmix64(seed ^ fnv1a64(term)));
        f << term;
        for (int d = 0; d < dim; ++d) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), " %.6f", rng.normal());
            f << buf;
        }
        f << '\n';
    }
}

}  // namespace textmatch
