#include "textmatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "textmatch/csv.hpp"
#include "textmatch/errors.hpp"

namespace textmatch {

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;  // sample variance, n-1
    double n = 0.0;
};

Moments moments(const std::vector<double>& x, const std::vector<double>& w) {
    Moments m;
    double total = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        total += w[i];
        mean += w[i] * x[i];
    }
    if (total <= 0.0) return m;
    mean /= total;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) ss += w[i] * (x[i] - mean) * (x[i] - mean);
    m.mean = mean;
    m.n = total;
    m.var = total > 1.0 ? ss / (total - 1.0) : 0.0;
    return m;
}

}  // namespace

StdDiffResult standardized_diff(const std::vector<double>& values, const std::vector<int>& z,
                                const MatchedPairSet* pairs) {
    if (values.size() != z.size()) throw ShapeError("covariate/group length mismatch");

    std::vector<double> xt, xc, wt, wc;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (z[i] == 1) {
            xt.push_back(values[i]);
            wt.push_back(1.0);
        } else if (z[i] == 0) {
            xc.push_back(values[i]);
            wc.push_back(1.0);
        }
    }
    if (xt.empty() || xc.empty()) throw ShapeError("both groups must be nonempty");

    // denominator fixed at the unmatched pooled SD
    const Moments mt_all = moments(xt, wt);
    const Moments mc_all = moments(xc, wc);
    const double s_pool = std::sqrt((mt_all.var + mc_all.var) / 2.0);

    Moments mt = mt_all, mc = mc_all;
    if (pairs) {
        if (pairs->pairs.empty()) throw ShapeError("matched pair set is empty");
        std::map<int, double> treated_w, control_w;
        for (const auto& p : pairs->pairs) {
            treated_w[p.treated_doc] += 1.0;
            control_w[p.control_doc] += 1.0;
        }
        std::vector<double> x, w;
        for (const auto& [doc, weight] : treated_w) {
            x.push_back(values[doc]);
            w.push_back(weight);
        }
        mt = moments(x, w);
        x.clear();
        w.clear();
        for (const auto& [doc, weight] : control_w) {
            x.push_back(values[doc]);
            w.push_back(weight);
        }
        mc = moments(x, w);
    }

    StdDiffResult out;
    const double diff = mt.mean - mc.mean;
    if (s_pool == 0.0) {
        if (diff != 0.0) {
            out.undefined = true;
            out.value = diff > 0 ? kInf : -kInf;
        }
        return out;
    }
    out.value = diff / s_pool;
    // normal approximation; matched sizes use Kish effective counts
    auto eff_n = [](const std::map<int, double>& w) {
        double s = 0.0, s2 = 0.0;
        for (const auto& [doc, weight] : w) {
            s += weight;
            s2 += weight * weight;
        }
        return s2 > 0.0 ? s * s / s2 : 0.0;
    };
    double nt = mt.n, nc = mc.n;
    if (pairs) {
        std::map<int, double> treated_w, control_w;
        for (const auto& p : pairs->pairs) {
            treated_w[p.treated_doc] += 1.0;
            control_w[p.control_doc] += 1.0;
        }
        nt = eff_n(treated_w);
        nc = eff_n(control_w);
    }
    out.half_width = 1.96 * std::sqrt(mt.var / nt + mc.var / nc) / s_pool;
    return out;
}

std::vector<BalanceRow> balance_report(const Corpus& corpus,
                                       const std::vector<std::string>& covariates,
                                       const MatchedPairSet& pairs) {
    const std::vector<int> z = corpus.group_vector();
    std::vector<BalanceRow> rows;
    for (const auto& name : covariates) {
        std::vector<double> values(corpus.size(), 0.0);
        for (int i = 0; i < corpus.size(); ++i) {
            auto it = corpus.documents[i].covariates.find(name);
            if (it != corpus.documents[i].covariates.end()) values[i] = it->second;
        }
        BalanceRow row;
        row.covariate = name;
        row.before = standardized_diff(values, z);
        row.after = standardized_diff(values, z, &pairs);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_balance_csv(const std::vector<BalanceRow>& rows, const std::string& path) {
    std::string out;
    csv::write_row(out, {"covariate", "before", "after", "ci_low", "ci_high"});
    for (const auto& r : rows)
        csv::write_row(out, {r.covariate, csv::format_double(r.before.value),
                             csv::format_double(r.after.value),
                             csv::format_double(r.after.value - r.after.half_width),
                             csv::format_double(r.after.value + r.after.half_width)});
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << out;
}

double effective_sample_size(const MatchedPairSet& pairs) {
    if (pairs.pairs.empty()) throw ShapeError("effective sample size of an empty pair set");
    std::map<int, double> usage;
    for (const auto& p : pairs.pairs) usage[p.control_doc] += 1.0;
    double s = 0.0, s2 = 0.0;
    for (const auto& [doc, w] : usage) {
        s += w;
        s2 += w * w;
    }
    return s * s / s2;
}

ConceptMap load_concept_map(const std::string& lexicon_path, const Corpus& corpus,
                            const TokenRules& rules) {
    // lexicon CSV: term,concept
    const csv::Table table = csv::read_file(lexicon_path);
    const int term_col = table.column("term");
    const int concept_col = table.column("concept");
    if (term_col < 0 || concept_col < 0)
        throw FormatError("concept lexicon needs term and concept columns");
    std::unordered_map<std::string, std::vector<std::string>> term_concepts;
    for (const auto& row : table.rows) term_concepts[row[term_col]].push_back(row[concept_col]);

    ConceptMap map;
    for (int i = 0; i < corpus.size(); ++i) {
        auto& set = map.sets[i];
        for (const auto& tok : tokenize(corpus.documents[i].text, rules)) {
            auto it = term_concepts.find(tok);
            if (it != term_concepts.end())
                for (const auto& c : it->second) set.insert(c);
        }
    }
    return map;
}

JaccardResult jaccard_quality(const MatchedPairSet& pairs, const ConceptMap& map,
                              const Corpus& corpus) {
    JaccardResult result;
    result.per_pair.reserve(pairs.pairs.size());
    double total = 0.0;
    for (const auto& p : pairs.pairs) {
        auto it_t = map.sets.find(p.treated_doc);
        auto it_c = map.sets.find(p.control_doc);
        if (it_t == map.sets.end())
            throw MissingConcepts("no concept set for document " +
                                  corpus.documents[p.treated_doc].id);
        if (it_c == map.sets.end())
            throw MissingConcepts("no concept set for document " +
                                  corpus.documents[p.control_doc].id);
        const auto& a = it_t->second;
        const auto& b = it_c->second;
        double j;
        if (a.empty() && b.empty()) {
            j = 1.0;  // identical emptiness
            ++result.both_empty_flagged;
        } else {
            std::size_t inter = 0;
            for (const auto& c : a) inter += b.count(c);
            j = static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
        }
        result.per_pair.push_back(j);
        total += j;
    }
    result.mean = pairs.pairs.empty() ? 0.0 : total / static_cast<double>(pairs.pairs.size());
    return result;
}

PairFrequencyTable pair_frequency(const std::vector<MatchedPairSet>& pair_sets) {
    if (pair_sets.empty()) throw ConfigError("pair_frequency requires at least one procedure");
    std::map<std::pair<int, int>, int> freq;
    PairFrequencyTable table;
    for (const auto& set : pair_sets) {
        table.procedure_ids.push_back(set.procedure_id);
        table.procedure_sizes.push_back(set.size());
        for (const auto& p : set.pairs) ++freq[{p.treated_doc, p.control_doc}];
    }
    table.pair_docs.reserve(freq.size());
    table.frequency.reserve(freq.size());
    for (const auto& [key, f] : freq) {
        table.pair_docs.push_back(key);
        table.frequency.push_back(f);
    }
    return table;
}

void write_frequency_csv(const PairFrequencyTable& table, const Corpus& corpus,
                         const std::string& path) {
    std::string out;
    csv::write_row(out, {"treated_id", "control_id", "F"});
    for (std::size_t i = 0; i < table.pair_docs.size(); ++i)
        csv::write_row(out, {corpus.documents[table.pair_docs[i].first].id,
                             corpus.documents[table.pair_docs[i].second].id,
                             std::to_string(table.frequency[i])});
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << out;
}

}  // namespace textmatch
