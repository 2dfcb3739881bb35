#include "textmatch/represent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "textmatch/csv.hpp"
#include "textmatch/errors.hpp"
#include "textmatch/parallel.hpp"

namespace textmatch {

std::string rep_kind_name(RepKind k) {
    switch (k) {
        case RepKind::TDM: return "TDM";
        case RepKind::TOPIC: return "TOPIC";
        case RepKind::TOPIC_COARSE: return "TOPIC_COARSE";
        case RepKind::EMBED: return "EMBED";
        case RepKind::SCORE: return "SCORE";
        case RepKind::COMPOSITE: return "COMPOSITE";
    }
    return "?";
}

double Representation::value(int i, int j) const {
    if (!is_sparse) return dense(i, j);
    for (const auto& [t, v] : sparse_rows[i])
        if (t == j) return v;
    return 0.0;
}

double Representation::row_squared_norm(int i) const {
    if (!is_sparse) return dense.row(i).squaredNorm();
    double s = 0.0;
    for (const auto& [t, v] : sparse_rows[i]) s += v * v;
    return s;
}

double Representation::row_dot(int i, int j) const {
    if (!is_sparse) return dense.row(i).dot(dense.row(j));
    const auto& a = sparse_rows[i];
    const auto& b = sparse_rows[j];
    double s = 0.0;
    std::size_t x = 0, y = 0;
    while (x < a.size() && y < b.size()) {
        if (a[x].first < b[y].first)
            ++x;
        else if (a[x].first > b[y].first)
            ++y;
        else {
            s += a[x].second * b[y].second;
            ++x;
            ++y;
        }
    }
    return s;
}

double Representation::row_squared_distance(int i, int j) const {
    if (!is_sparse) return (dense.row(i) - dense.row(j)).squaredNorm();
    const auto& a = sparse_rows[i];
    const auto& b = sparse_rows[j];
    double s = 0.0;
    std::size_t x = 0, y = 0;
    while (x < a.size() || y < b.size()) {
        if (y >= b.size() || (x < a.size() && a[x].first < b[y].first)) {
            s += a[x].second * a[x].second;
            ++x;
        } else if (x >= a.size() || a[x].first > b[y].first) {
            s += b[y].second * b[y].second;
            ++y;
        } else {
            const double d = a[x].second - b[y].second;
            s += d * d;
            ++x;
            ++y;
        }
    }
    return s;
}

Eigen::MatrixXd Representation::to_dense() const {
    if (!is_sparse) return dense;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows(), cols());
    for (int i = 0; i < rows(); ++i)
        for (const auto& [t, v] : sparse_rows[i]) m(i, t) = v;
    return m;
}

Representation representation_from_tdm(const TermDocumentMatrix& tdm, const Vocabulary& vocab,
                                       const std::string& preset_name) {
    Representation rep;
    rep.kind = RepKind::TDM;
    rep.preset_name = preset_name;
    rep.column_labels = vocab.terms;
    rep.is_sparse = true;
    rep.sparse_rows = tdm.rows;
    rep.sparse_cols = tdm.n_terms;
    rep.row_flags.assign(tdm.n_docs, 0);
    for (int i = 0; i < tdm.n_docs; ++i)
        if (tdm.rows[i].empty()) rep.row_flags[i] = 1;
    return rep;
}

Representation dense_representation(Eigen::MatrixXd m, RepKind kind, std::string preset_name,
                                    std::vector<std::string> labels) {
    Representation rep;
    rep.kind = kind;
    rep.preset_name = std::move(preset_name);
    rep.dense = std::move(m);
    rep.is_sparse = false;
    if (labels.empty())
        for (int j = 0; j < rep.dense.cols(); ++j) labels.push_back("c" + std::to_string(j));
    if (static_cast<int>(labels.size()) != rep.dense.cols())
        throw ShapeError("label count does not match column count");
    rep.column_labels = std::move(labels);
    rep.row_flags.assign(rep.dense.rows(), 0);
    return rep;
}

TermDocumentMatrix apply_weighting(const TermDocumentMatrix& tdm, Weighting scheme) {
    if (tdm.weighting != Weighting::TF)
        throw ConfigError("apply_weighting expects raw TF counts");
    TermDocumentMatrix out = tdm;
    out.weighting = scheme;
    if (scheme == Weighting::TF) return out;

    const double n = static_cast<double>(tdm.n_docs);
    std::vector<double> idf(tdm.n_terms);
    for (int t = 0; t < tdm.n_terms; ++t)
        idf[t] = std::log(n / static_cast<double>(tdm.doc_frequency[t]));

    bool any_nonzero = false;
    for (auto& row : out.rows) {
        for (auto& [t, v] : row) {
            v *= idf[t];
            if (v != 0.0) any_nonzero = true;
        }
        // drop zeroed entries so the matrix stays genuinely sparse
        row.erase(std::remove_if(row.begin(), row.end(),
                                 [](const auto& e) { return e.second == 0.0; }),
                  row.end());
    }
    if (!any_nonzero) out.zero_matrix_warning = true;

    if (scheme == Weighting::TFIDF_L2) {
        for (int i = 0; i < out.n_docs; ++i) {
            const double norm = out.row_norm(i);
            if (norm > 0.0)
                for (auto& [t, v] : out.rows[i]) v /= norm;
        }
    }
    return out;
}

const std::vector<TdmPreset>& tdm_presets() {
    static const std::vector<TdmPreset> presets = {
        {"T1", Weighting::TF, 4, 1000},      {"T2", Weighting::TFIDF, 4, 1000},
        {"T3", Weighting::TFIDF, 4, 100},    {"T4", Weighting::TFIDF, 4, 10},
        {"T5", Weighting::TFIDF, 10, 500},   {"T6", Weighting::TFIDF, 500, 1000},
        {"T7", Weighting::TFIDF_L2, 4, 1000}, {"T8", Weighting::TF, 0, 0},
        {"T9", Weighting::TFIDF, 0, 0},
    };
    return presets;
}

const TdmPreset& tdm_preset(const std::string& name) {
    for (const auto& p : tdm_presets())
        if (p.name == name) return p;
    throw ConfigError("unknown TDM preset: " + name);
}

Representation make_tdm_preset(const Corpus& corpus, const std::string& preset,
                               const TokenRules& rules, int n_threads) {
    const TdmPreset& p = tdm_preset(preset);
    const int n = corpus.size();
    const int min_df = p.min_df > 0 ? p.min_df : 1;
    int max_df = p.max_df > 0 ? p.max_df : n;
    if (max_df > n) max_df = n;
    const Vocabulary vocab = build_vocabulary(corpus, rules, min_df, max_df);
    TermDocumentMatrix tdm = build_tdm(corpus, vocab, rules, n_threads);
    tdm = apply_weighting(tdm, p.weighting);
    return representation_from_tdm(tdm, vocab, p.name);
}

EmbeddingTable load_embedding_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open embedding file: " + path);
    EmbeddingTable table;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        if (token.empty()) continue;
        std::vector<double> vec;
        double v;
        while (ss >> v) vec.push_back(v);
        if (vec.empty())
            throw FormatError("embedding line " + std::to_string(lineno) + " has no values");
        if (table.dim == 0)
            table.dim = static_cast<int>(vec.size());
        else if (static_cast<int>(vec.size()) != table.dim)
            throw FormatError("embedding line " + std::to_string(lineno) + " has " +
                              std::to_string(vec.size()) + " values, expected " +
                              std::to_string(table.dim));
        table.vectors.emplace(std::move(token), std::move(vec));
    }
    if (table.vectors.empty()) throw FormatError("embedding file is empty: " + path);
    return table;
}

Representation embed_documents(const TermDocumentMatrix& weights, const Vocabulary& vocab,
                               const EmbeddingTable& table, const std::string& preset_name,
                               int n_threads) {
    const int n = weights.n_docs;
    const int d = table.dim;

    // resolve vocabulary terms against the table once
    std::vector<const std::vector<double>*> term_vec(vocab.size(), nullptr);
    for (int t = 0; t < vocab.size(); ++t) {
        auto it = table.vectors.find(vocab.terms[t]);
        if (it != table.vectors.end()) term_vec[t] = &it->second;
    }

    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, d);
    std::vector<std::uint8_t> flags(n, 0);
    parallel_for(n, n_threads, [&](int i) {
        double total = 0.0;
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
        for (const auto& [t, w] : weights.rows[i]) {
            if (!term_vec[t] || w == 0.0) continue;
            const auto& v = *term_vec[t];
            for (int k = 0; k < d; ++k) acc[k] += w * v[k];
            total += w;
        }
        if (total > 0.0)
            m.row(i) = acc.transpose() / total;
        else
            flags[i] = 1;  // no in-table tokens: zero vector
    });

    std::vector<std::string> labels;
    labels.reserve(d);
    for (int k = 0; k < d; ++k) labels.push_back("dim_" + std::to_string(k));
    Representation rep = dense_representation(std::move(m), RepKind::EMBED, preset_name,
                                              std::move(labels));
    rep.row_flags = std::move(flags);
    return rep;
}

Representation embed_documents(const Corpus& corpus, const EmbeddingTable& table,
                               Weighting weighting, const std::string& preset_name,
                               const TokenRules& rules, int n_threads) {
    if (weighting == Weighting::TFIDF_L2)
        throw ConfigError("embedding weights must be TF or TFIDF");
    const Vocabulary vocab = build_vocabulary(corpus, rules, 1, corpus.size());
    TermDocumentMatrix tdm = build_tdm(corpus, vocab, rules, n_threads);
    if (weighting == Weighting::TFIDF) tdm = apply_weighting(tdm, Weighting::TFIDF);
    return embed_documents(tdm, vocab, table, preset_name, n_threads);
}

Representation compose(const std::vector<const Representation*>& reps) {
    if (reps.empty()) throw ShapeError("compose requires at least one representation");
    const int n = reps[0]->rows();
    bool any_sparse = false;
    int total_cols = 0;
    for (const Representation* r : reps) {
        if (r->rows() != n)
            throw ShapeError("row-count mismatch in compose: " + std::to_string(r->rows()) +
                             " vs " + std::to_string(n));
        any_sparse = any_sparse || r->is_sparse;
        total_cols += r->cols();
    }

    Representation out;
    out.kind = reps.size() == 1 ? reps[0]->kind : RepKind::COMPOSITE;
    std::string name;
    for (const Representation* r : reps) {
        if (!name.empty()) name += "+";
        name += r->preset_name;
    }
    out.preset_name = name;
    for (const Representation* r : reps)
        out.column_labels.insert(out.column_labels.end(), r->column_labels.begin(),
                                 r->column_labels.end());
    out.row_flags.assign(n, 0);
    for (const Representation* r : reps)
        for (int i = 0; i < n; ++i)
            if (r->flagged(i)) out.row_flags[i] = 1;

    if (any_sparse) {
        out.is_sparse = true;
        out.sparse_cols = total_cols;
        out.sparse_rows.resize(n);
        int offset = 0;
        for (const Representation* r : reps) {
            if (r->is_sparse) {
                for (int i = 0; i < n; ++i)
                    for (const auto& [t, v] : r->sparse_rows[i])
                        out.sparse_rows[i].emplace_back(t + offset, v);
            } else {
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < r->cols(); ++j)
                        if (r->dense(i, j) != 0.0)
                            out.sparse_rows[i].emplace_back(j + offset, r->dense(i, j));
            }
            offset += r->cols();
        }
    } else {
        out.is_sparse = false;
        out.dense.resize(n, total_cols);
        int offset = 0;
        for (const Representation* r : reps) {
            out.dense.middleCols(offset, r->cols()) = r->dense;
            offset += r->cols();
        }
    }
    return out;
}

void write_representation(const Representation& rep, const std::string& path) {
    std::string out;
    csv::write_row(out, rep.column_labels);
    std::vector<std::string> fields(rep.cols());
    for (int i = 0; i < rep.rows(); ++i) {
        if (rep.is_sparse) {
            std::fill(fields.begin(), fields.end(), "0");
            for (const auto& [t, v] : rep.sparse_rows[i]) fields[t] = csv::format_double(v);
        } else {
            for (int j = 0; j < rep.cols(); ++j) fields[j] = csv::format_double(rep.dense(i, j));
        }
        csv::write_row(out, fields);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << out;
}

}  // namespace textmatch
