#include "textmatch/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "textmatch/csv.hpp"
#include "textmatch/errors.hpp"
#include "textmatch/parallel.hpp"

namespace textmatch {

std::vector<int> Corpus::group_vector() const {
    std::vector<int> z(documents.size());
    for (std::size_t i = 0; i < documents.size(); ++i) z[i] = documents[i].group;
    return z;
}

std::vector<int> Corpus::treated_indices() const {
    std::vector<int> idx;
    for (int i = 0; i < size(); ++i)
        if (documents[i].group == 1) idx.push_back(i);
    return idx;
}

std::vector<int> Corpus::control_indices() const {
    std::vector<int> idx;
    for (int i = 0; i < size(); ++i)
        if (documents[i].group == 0) idx.push_back(i);
    return idx;
}

int Corpus::index_of(const std::string& id) const {
    auto it = id_index_.find(id);
    return it == id_index_.end() ? -1 : it->second;
}

void Corpus::finalize() {
    id_index_.clear();
    n_treated = n_control = 0;
    binary = true;
    for (int i = 0; i < size(); ++i) {
        const Document& d = documents[i];
        if (!id_index_.emplace(d.id, i).second)
            throw IngestError("duplicate id " + d.id);
        if (d.group == 1)
            ++n_treated;
        else if (d.group == 0)
            ++n_control;
        else
            binary = false;
    }
}

int Vocabulary::index_of(const std::string& term) const {
    auto it = index_.find(term);
    return it == index_.end() ? -1 : it->second;
}

void Vocabulary::build_index() {
    index_.clear();
    for (int i = 0; i < size(); ++i) index_.emplace(terms[i], i);
}

std::string weighting_name(Weighting w) {
    switch (w) {
        case Weighting::TF: return "TF";
        case Weighting::TFIDF: return "TFIDF";
        case Weighting::TFIDF_L2: return "TFIDF_L2";
    }
    return "?";
}

double TermDocumentMatrix::row_sum(int i) const {
    double s = 0.0;
    for (const auto& [t, v] : rows[i]) s += v;
    return s;
}

double TermDocumentMatrix::row_norm(int i) const {
    double s = 0.0;
    for (const auto& [t, v] : rows[i]) s += v * v;
    return std::sqrt(s);
}

namespace {

// Group values are "0"/"1" (or numeric equivalents) for binary studies;
// anything else becomes a categorical source label.
void parse_group(const std::string& raw, int row, Document& doc) {
    std::string s = raw;
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t start = 0;
    while (start < s.size() && std::isspace(static_cast<unsigned char>(s[start]))) ++start;
    s = s.substr(start);
    if (s.empty())
        throw IngestError("unparseable group value at row " + std::to_string(row));
    if (s == "0" || s == "0.0") {
        doc.group = 0;
    } else if (s == "1" || s == "1.0") {
        doc.group = 1;
    } else {
        doc.group = -1;
    }
    doc.group_label = s;
}

double parse_number(const std::string& s, const std::string& what, int row) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IngestError("unparseable " + what + " value \"" + s + "\" at row " +
                          std::to_string(row));
    }
}

Corpus ingest_csv(const std::string& path, const FieldMap& fields) {
    const csv::Table table = csv::read_file(path);
    const int id_col = table.column(fields.id);
    const int group_col = table.column(fields.group);
    const int text_col = table.column(fields.text);
    if (id_col < 0) throw IngestError("missing id column \"" + fields.id + "\"");
    if (group_col < 0) throw IngestError("missing group column \"" + fields.group + "\"");
    if (text_col < 0) throw IngestError("missing text column \"" + fields.text + "\"");
    std::vector<std::pair<std::string, int>> cov_cols;
    for (const auto& name : fields.covariates) {
        const int c = table.column(name);
        if (c < 0) throw IngestError("missing covariate column \"" + name + "\"");
        cov_cols.emplace_back(name, c);
    }
    int outcome_col = -1;
    if (!fields.outcome.empty()) {
        outcome_col = table.column(fields.outcome);
        if (outcome_col < 0) throw IngestError("missing outcome column \"" + fields.outcome + "\"");
    }

    Corpus corpus;
    corpus.documents.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const int rownum = static_cast<int>(r) + 1;
        auto field = [&](int c) -> const std::string& {
            static const std::string empty;
            return c >= 0 && c < static_cast<int>(row.size()) ? row[c] : empty;
        };
        Document doc;
        doc.id = field(id_col);
        if (doc.id.empty()) throw IngestError("missing id at row " + std::to_string(rownum));
        parse_group(field(group_col), rownum, doc);
        doc.text = field(text_col);
        for (const auto& [name, c] : cov_cols) {
            const std::string& v = field(c);
            if (!v.empty()) doc.covariates[name] = parse_number(v, "covariate " + name, rownum);
        }
        if (outcome_col >= 0) {
            const std::string& v = field(outcome_col);
            if (!v.empty()) doc.outcome = parse_number(v, "outcome", rownum);
        }
        corpus.documents.push_back(std::move(doc));
    }
    corpus.finalize();
    return corpus;
}

Corpus ingest_jsonl(const std::string& path, const FieldMap& fields) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open file: " + path);
    Corpus corpus;
    std::string line;
    int rownum = 0;
    while (std::getline(in, line)) {
        ++rownum;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IngestError("bad JSON at row " + std::to_string(rownum) + ": " + e.what());
        }
        Document doc;
        if (!j.contains(fields.id))
            throw IngestError("missing id at row " + std::to_string(rownum));
        doc.id = j[fields.id].is_string() ? j[fields.id].get<std::string>() : j[fields.id].dump();
        if (!j.contains(fields.group))
            throw IngestError("missing group at row " + std::to_string(rownum));
        const auto& g = j[fields.group];
        parse_group(g.is_string() ? g.get<std::string>() : g.dump(), rownum, doc);
        if (j.contains(fields.text)) doc.text = j[fields.text].get<std::string>();
        for (const auto& name : fields.covariates)
            if (j.contains(name) && j[name].is_number())
                doc.covariates[name] = j[name].get<double>();
        if (!fields.outcome.empty() && j.contains(fields.outcome) && j[fields.outcome].is_number())
            doc.outcome = j[fields.outcome].get<double>();
        corpus.documents.push_back(std::move(doc));
    }
    corpus.finalize();
    return corpus;
}

}  // namespace

Corpus ingest_corpus(const std::string& path, CorpusFormat format, const FieldMap& fields) {
    return format == CorpusFormat::CSV ? ingest_csv(path, fields) : ingest_jsonl(path, fields);
}

std::vector<std::string> tokenize(const std::string& text, const TokenRules& rules) {
    std::vector<std::string> unigrams;
    std::string current;
    auto flush = [&]() {
        if (!current.empty()) {
            if (rules.stopwords.empty() || !rules.stopwords.count(current))
                unigrams.push_back(current);
            current.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current += rules.lowercase ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
        } else if (rules.strip_punctuation || std::isspace(c)) {
            flush();
        } else {
            current += static_cast<char>(c);
        }
    }
    flush();

    if (rules.ngram <= 1) return unigrams;
    std::vector<std::string> tokens = unigrams;
    for (int n = 2; n <= rules.ngram; ++n) {
        for (std::size_t i = 0; i + n <= unigrams.size(); ++i) {
            std::string gram = unigrams[i];
            for (int k = 1; k < n; ++k) {
                gram += '_';
                gram += unigrams[i + k];
            }
            tokens.push_back(std::move(gram));
        }
    }
    return tokens;
}

Vocabulary build_vocabulary(const Corpus& corpus, const TokenRules& rules, int min_df,
                            int max_df) {
    const int n = corpus.size();
    if (min_df < 1 || min_df > max_df || max_df > n)
        throw ConfigError("vocabulary bounds must satisfy 1 <= min_df <= max_df <= N");

    std::unordered_map<std::string, int> df;
    std::set<std::string> seen;
    for (const Document& doc : corpus.documents) {
        seen.clear();
        for (auto& tok : tokenize(doc.text, rules)) seen.insert(std::move(tok));
        for (const auto& tok : seen) ++df[tok];
    }

    Vocabulary vocab;
    vocab.n_docs = n;
    vocab.min_df = min_df;
    vocab.max_df = max_df;
    for (const auto& [term, count] : df)
        if (count >= min_df && count <= max_df) vocab.terms.push_back(term);
    std::sort(vocab.terms.begin(), vocab.terms.end());
    vocab.doc_frequency.resize(vocab.terms.size());
    for (std::size_t i = 0; i < vocab.terms.size(); ++i)
        vocab.doc_frequency[i] = df.at(vocab.terms[i]);
    if (vocab.terms.empty())
        throw EmptyVocabulary("no terms with document frequency in [" + std::to_string(min_df) +
                              ", " + std::to_string(max_df) + "]");
    vocab.build_index();
    return vocab;
}

TermDocumentMatrix build_tdm(const Corpus& corpus, const Vocabulary& vocab,
                             const TokenRules& rules, int n_threads) {
    TermDocumentMatrix tdm;
    tdm.n_docs = corpus.size();
    tdm.n_terms = vocab.size();
    tdm.weighting = Weighting::TF;
    tdm.min_df = vocab.min_df;
    tdm.max_df = vocab.max_df;
    tdm.doc_frequency = vocab.doc_frequency;
    tdm.rows.resize(tdm.n_docs);

    parallel_for(tdm.n_docs, n_threads, [&](int i) {
        std::map<int, int> counts;  // ordered so rows come out sorted by term index
        for (const auto& tok : tokenize(corpus.documents[i].text, rules)) {
            const int t = vocab.index_of(tok);
            if (t >= 0) ++counts[t];
        }
        auto& row = tdm.rows[i];
        row.reserve(counts.size());
        for (const auto& [t, c] : counts) row.emplace_back(t, static_cast<double>(c));
    });
    return tdm;
}

void write_tdm(const TermDocumentMatrix& tdm, const Corpus& corpus, const Vocabulary& vocab,
               const std::string& triplet_path, const std::string& vocab_path) {
    std::string out;
    csv::write_row(out, {"row_id", "term", "value"});
    for (int i = 0; i < tdm.n_docs; ++i)
        for (const auto& [t, v] : tdm.rows[i])
            csv::write_row(out, {corpus.documents[i].id, vocab.terms[t], csv::format_double(v)});
    std::ofstream f(triplet_path, std::ios::binary);
    if (!f) throw Error("cannot write " + triplet_path);
    f << out;

    std::string vout;
    csv::write_row(vout, {"term", "doc_frequency"});
    for (int t = 0; t < vocab.size(); ++t)
        csv::write_row(vout, {vocab.terms[t], std::to_string(vocab.doc_frequency[t])});
    std::ofstream vf(vocab_path, std::ios::binary);
    if (!vf) throw Error("cannot write " + vocab_path);
    vf << vout;
}

}  // namespace textmatch
