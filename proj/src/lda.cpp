#include "textmatch/lda.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "textmatch/errors.hpp"
#include "textmatch/rng.hpp"

namespace textmatch {

TopicModel fit_topic_model(const TermDocumentMatrix& tdm, int K, double alpha, double beta,
                           int iterations, std::uint64_t seed, int average_last) {
    if (tdm.weighting != Weighting::TF)
        throw ConfigError("topic model requires raw TF counts");
    if (K < 2) throw ConfigError("topic model requires K >= 2");
    if (iterations < 1) throw ConfigError("topic model requires iterations >= 1");
    const int n_docs = tdm.n_docs;
    const int v = tdm.n_terms;

    // flatten token instances
    std::vector<int> doc_start(n_docs + 1, 0);
    for (int i = 0; i < n_docs; ++i) {
        int len = 0;
        for (const auto& [t, c] : tdm.rows[i]) len += static_cast<int>(c);
        doc_start[i + 1] = doc_start[i] + len;
    }
    const int n_tokens = doc_start[n_docs];
    std::vector<int> word(n_tokens);
    std::vector<int> topic(n_tokens);
    for (int i = 0; i < n_docs; ++i) {
        int pos = doc_start[i];
        for (const auto& [t, c] : tdm.rows[i])
            for (int r = 0; r < static_cast<int>(c); ++r) word[pos++] = t;
    }

    std::vector<int> n_dk(static_cast<std::size_t>(n_docs) * K, 0);
    std::vector<int> n_kw(static_cast<std::size_t>(K) * v, 0);
    std::vector<int> n_k(K, 0);

    Rng rng(seed);
    for (int i = 0; i < n_docs; ++i) {
        for (int pos = doc_start[i]; pos < doc_start[i + 1]; ++pos) {
            const int z = static_cast<int>(rng.below(K));
            topic[pos] = z;
            ++n_dk[static_cast<std::size_t>(i) * K + z];
            ++n_kw[static_cast<std::size_t>(z) * v + word[pos]];
            ++n_k[z];
        }
    }

    if (average_last < 1) average_last = 1;
    if (average_last > iterations) average_last = iterations;
    Eigen::MatrixXd theta_acc = Eigen::MatrixXd::Zero(n_docs, K);
    Eigen::MatrixXd phi_acc = Eigen::MatrixXd::Zero(K, v);

    const double v_beta = v * beta;
    std::vector<double> weights(K);
    for (int sweep = 0; sweep < iterations; ++sweep) {
        for (int i = 0; i < n_docs; ++i) {
            int* dk = &n_dk[static_cast<std::size_t>(i) * K];
            for (int pos = doc_start[i]; pos < doc_start[i + 1]; ++pos) {
                const int w = word[pos];
                const int old = topic[pos];
                --dk[old];
                --n_kw[static_cast<std::size_t>(old) * v + w];
                --n_k[old];
                double total = 0.0;
                for (int k = 0; k < K; ++k) {
                    const double p = (dk[k] + alpha) *
                                     (n_kw[static_cast<std::size_t>(k) * v + w] + beta) /
                                     (n_k[k] + v_beta);
                    total += p;
                    weights[k] = total;
                }
                const double u = rng.uniform01() * total;
                int z = 0;
                while (z < K - 1 && weights[z] <= u) ++z;
                topic[pos] = z;
                ++dk[z];
                ++n_kw[static_cast<std::size_t>(z) * v + w];
                ++n_k[z];
            }
        }
        if (sweep >= iterations - average_last) {
            for (int i = 0; i < n_docs; ++i) {
                const int len = doc_start[i + 1] - doc_start[i];
                const double denom = len + K * alpha;
                for (int k = 0; k < K; ++k)
                    theta_acc(i, k) +=
                        (n_dk[static_cast<std::size_t>(i) * K + k] + alpha) / denom;
            }
            for (int k = 0; k < K; ++k) {
                const double denom = n_k[k] + v_beta;
                for (int w = 0; w < v; ++w)
                    phi_acc(k, w) += (n_kw[static_cast<std::size_t>(k) * v + w] + beta) / denom;
            }
        }
    }

    TopicModel model;
    model.K = K;
    model.alpha = alpha;
    model.beta = beta;
    model.seed = seed;
    model.iterations = iterations;
    model.doc_topic = theta_acc / static_cast<double>(average_last);
    model.topic_word = phi_acc / static_cast<double>(average_last);
    model.has_topic_word = true;
    model.empty_doc.assign(n_docs, 0);
    for (int i = 0; i < n_docs; ++i) {
        if (doc_start[i + 1] == doc_start[i]) {
            model.empty_doc[i] = 1;
            model.doc_topic.row(i).setConstant(1.0 / K);
        }
    }
    return model;
}

TopicModel load_topic_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open topic matrix: " + path);
    TopicModel model;
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r,") == std::string::npos) continue;
        std::vector<double> row;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError("bad value at row " + std::to_string(lineno));
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError("inconsistent column count at row " + std::to_string(lineno));
        const double sum = std::accumulate(row.begin(), row.end(), 0.0);
        if (std::abs(sum - 1.0) > 1e-6)
            throw FormatError("row " + std::to_string(rows.size() + 1) +
                              " does not sum to 1 (sum=" + std::to_string(sum) + ")");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError("topic matrix is empty: " + path);
    model.K = static_cast<int>(rows.front().size());
    model.doc_topic.resize(rows.size(), model.K);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int k = 0; k < model.K; ++k) model.doc_topic(i, k) = rows[i][k];
    model.has_topic_word = false;
    model.empty_doc.assign(rows.size(), 0);
    return model;
}

Representation topic_representation(const TopicModel& model, const std::string& preset_name) {
    std::vector<std::string> labels;
    for (int k = 0; k < model.K; ++k) labels.push_back("topic_" + std::to_string(k));
    Representation rep = dense_representation(model.doc_topic, RepKind::TOPIC, preset_name,
                                              std::move(labels));
    for (std::size_t i = 0; i < model.empty_doc.size(); ++i)
        if (model.empty_doc[i]) rep.row_flags[i] = 1;
    return rep;
}

Representation coarsen_topics(const TopicModel& model) {
    const int K = model.K;
    if (K < 3) throw ConfigError("coarsen_topics requires K >= 3");
    const int n = static_cast<int>(model.doc_topic.rows());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, K + 1);
    std::vector<int> order(K);
    for (int i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), 0);
        // ties at the 3rd rank broken by lowest topic index
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return model.doc_topic(i, a) > model.doc_topic(i, b);
        });
        const double focus = model.doc_topic(i, order[0]) + model.doc_topic(i, order[1]) +
                             model.doc_topic(i, order[2]);
        if (focus > 0.0)
            for (int r = 0; r < 3; ++r)
                out(i, order[r]) = model.doc_topic(i, order[r]) / focus;
        out(i, K) = focus;
    }
    std::vector<std::string> labels;
    for (int k = 0; k < K; ++k) labels.push_back("topic_" + std::to_string(k));
    labels.push_back("focus");
    Representation rep = dense_representation(std::move(out), RepKind::TOPIC_COARSE,
                                              "S3-" + std::to_string(K), std::move(labels));
    for (std::size_t i = 0; i < model.empty_doc.size(); ++i)
        if (model.empty_doc[i]) rep.row_flags[i] = 1;
    return rep;
}

}  // namespace textmatch
