#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "textmatch/csv.hpp"
#include "textmatch/diagnostics.hpp"
#include "textmatch/distance.hpp"
#include "textmatch/errors.hpp"
#include "textmatch/eval.hpp"
#include "textmatch/lasso.hpp"
#include "textmatch/lda.hpp"
#include "textmatch/match.hpp"
#include "textmatch/pipeline.hpp"
#include "textmatch/synthetic.hpp"

using namespace textmatch;
namespace fs = std::filesystem;

namespace {

struct CorpusArgs {
    std::string path;
    std::string format = "csv";
    std::string id = "id";
    std::string group = "group";
    std::string text = "text";
    std::vector<std::string> covariates;
    std::string outcome;

    void attach(CLI::App* cmd) {
        cmd->add_option("--input", path, "corpus CSV or JSONL file")->required();
        cmd->add_option("--format", format, "csv or jsonl")
            ->check(CLI::IsMember({"csv", "jsonl"}));
        cmd->add_option("--id-field", id, "id column");
        cmd->add_option("--group-field", group, "group column");
        cmd->add_option("--text-field", text, "text column");
        cmd->add_option("--covariates", covariates, "numeric covariate columns")
            ->delimiter(',');
        cmd->add_option("--outcome-field", outcome, "outcome column");
    }

    Corpus load() const {
        FieldMap fields;
        fields.id = id;
        fields.group = group;
        fields.text = text;
        fields.covariates = covariates;
        fields.outcome = outcome;
        return ingest_corpus(path, format == "csv" ? CorpusFormat::CSV : CorpusFormat::JSONL,
                             fields);
    }
};

// minimal per-command state shared through CLI11 callbacks
struct RepArgs {
    std::string preset = "T2";
    std::string embedding_file;
    int topic_iterations = 400;
    int topic_average_last = 100;
    double topic_alpha = 0.0;
    double topic_beta = 0.01;
    double score_ridge = 1.0;
    std::uint64_t seed = 1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--preset", preset,
                        "representation preset (T1..T9, S1-10..S3-100, W1..W5)");
        cmd->add_option("--embedding-file", embedding_file, "table for W presets");
        cmd->add_option("--topic-iterations", topic_iterations, "Gibbs sweeps");
        cmd->add_option("--topic-average-last", topic_average_last,
                        "sweeps averaged for the posterior mean");
        cmd->add_option("--topic-alpha", topic_alpha, "document-topic prior (0 = 50/K)");
        cmd->add_option("--topic-beta", topic_beta, "topic-word prior");
        cmd->add_option("--score-ridge", score_ridge, "ridge for score-based presets");
        cmd->add_option("--seed", seed, "seed for stochastic presets");
    }

    Representation build(const Corpus& corpus) const {
        PipelineConfig config;
        config.seed = seed;
        config.topic_iterations = topic_iterations;
        config.topic_average_last = topic_average_last;
        config.topic_alpha = topic_alpha;
        config.topic_beta = topic_beta;
        config.score_ridge = score_ridge;
        if (!embedding_file.empty() && preset.size() == 2 && preset[0] == 'W')
            config.embedding_files[preset] = embedding_file;
        RepresentationCache cache(corpus, config);
        return cache.get(preset);
    }
};

Metric metric_from_name(const std::string& name) {
    if (name == "euclidean") return Metric::Euclidean;
    if (name == "cosine") return Metric::Cosine;
    if (name == "mahalanobis") return Metric::Mahalanobis;
    throw ConfigError("unknown continuous metric: " + name);
}

CaliperRule caliper_from_flags(const std::string& rule, double value) {
    if (rule == "quantile") return CaliperRule::quantile(value);
    if (rule == "sd_multiple") return CaliperRule::sd_multiple(value);
    if (rule == "absolute") return CaliperRule::absolute(value);
    if (rule == "none") return CaliperRule::absolute(kInf);
    throw ConfigError("unknown caliper rule: " + rule);
}

DistanceMatrix compute_distance(const Corpus& corpus, const RepArgs& rep_args,
                                const std::string& metric, int cem_bins, double ridge) {
    const std::vector<int> z = corpus.group_vector();
    if (metric == "cem") {
        const Representation rep = rep_args.build(corpus);
        CoarseningRule rule;
        rule.bins = cem_bins;
        return cem_distance(coarsen(rep, rule), z);
    }
    if (metric == "propensity") {
        const Representation rep = rep_args.build(corpus);
        const PropensityModel model = fit_propensity(rep, z, rep_args.score_ridge);
        return score_distance(model, z, ScoreScale::Raw);
    }
    PairwiseOptions opt;
    opt.ridge = ridge;
    const Representation rep = rep_args.build(corpus);
    return pairwise_distance(rep, z, metric_from_name(metric), opt);
}

void write_distance_sparse(const DistanceMatrix& dist, const Corpus& corpus, double caliper,
                           const std::string& path) {
    std::string out;
    csv::write_row(out, {"treated_id", "control_id", "distance"});
    for (int i = 0; i < dist.n_treated; ++i)
        for (int j = 0; j < dist.n_control; ++j) {
            const double d = dist.at(i, j);
            if (d <= caliper)
                csv::write_row(out, {corpus.documents[dist.treated_docs[i]].id,
                                     corpus.documents[dist.control_docs[j]].id,
                                     csv::format_double(d)});
        }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << out;
}

void write_distance_dense(const DistanceMatrix& dist, const Corpus& corpus,
                          const std::string& path) {
    std::string out;
    std::vector<std::string> header = {"treated_id"};
    for (int j = 0; j < dist.n_control; ++j)
        header.push_back(corpus.documents[dist.control_docs[j]].id);
    csv::write_row(out, header);
    for (int i = 0; i < dist.n_treated; ++i) {
        std::vector<std::string> row = {corpus.documents[dist.treated_docs[i]].id};
        for (int j = 0; j < dist.n_control; ++j)
            row.push_back(csv::format_double(dist.at(i, j)));
        csv::write_row(out, row);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << out;
}

std::vector<std::string> column_or_fail(const csv::Table& table, const std::string& name) {
    const int col = table.column(name);
    if (col < 0) throw FormatError("missing column \"" + name + "\"");
    std::vector<std::string> values;
    values.reserve(table.rows.size());
    for (const auto& row : table.rows) values.push_back(row[col]);
    return values;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"text matching toolkit: representations, distances, matching, balance "
                 "diagnostics and survey-sampling evaluation"};
    app.require_subcommand(1);

    // ---------------------------------------------------------------- ingest
    auto* ingest = app.add_subcommand("ingest", "validate a corpus file and print a summary");
    CorpusArgs ingest_corpus_args;
    ingest_corpus_args.attach(ingest);
    std::string ingest_tdm_out, ingest_vocab_out;
    int ingest_min_df = 1, ingest_max_df = 0;
    ingest->add_option("--tdm-out", ingest_tdm_out, "write the TF term-document triplets");
    ingest->add_option("--vocab-out", ingest_vocab_out, "write the vocabulary sidecar");
    ingest->add_option("--min-df", ingest_min_df, "vocabulary lower bound");
    ingest->add_option("--max-df", ingest_max_df, "vocabulary upper bound (0 = N)");
    ingest->callback([&]() {
        const Corpus corpus = ingest_corpus_args.load();
        std::cout << "documents: " << corpus.size() << "\n"
                  << "treated:   " << corpus.n_treated << "\n"
                  << "control:   " << corpus.n_control << "\n"
                  << "binary:    " << (corpus.binary ? "yes" : "no") << "\n";
        if (!ingest_tdm_out.empty()) {
            const int max_df = ingest_max_df > 0 ? ingest_max_df : corpus.size();
            const Vocabulary vocab =
                build_vocabulary(corpus, TokenRules{}, ingest_min_df, max_df);
            const TermDocumentMatrix tdm = build_tdm(corpus, vocab, TokenRules{});
            const std::string vocab_path =
                ingest_vocab_out.empty() ? ingest_tdm_out + ".vocab.csv" : ingest_vocab_out;
            write_tdm(tdm, corpus, vocab, ingest_tdm_out, vocab_path);
            std::cout << "vocabulary: " << vocab.size() << " terms\n";
        }
    });

    // ----------------------------------------------------------------- synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic confounded corpus");
    std::string synth_dir = "synth";
    SyntheticSpec synth_spec = default_confounded_spec();
    bool news_shape = false;
    std::vector<int> synth_embed_dims;
    synth->add_option("--out-dir", synth_dir, "output directory");
    synth->add_option("--n-treated", synth_spec.n_treated, "group-1 size");
    synth->add_option("--n-control", synth_spec.n_control, "group-0 size");
    synth->add_option("--topics", synth_spec.n_topics, "latent topics");
    synth->add_option("--doc-length", synth_spec.doc_length, "tokens per document");
    synth->add_option("--confound", synth_spec.confound_strength,
                      "topic-prevalence shift between groups");
    synth->add_option("--seed", synth_spec.seed, "generator seed");
    synth->add_flag("--news-shape", news_shape, "use the 1796/1565 evaluation-corpus shape");
    synth->add_option("--embedding-dims", synth_embed_dims,
                      "write synthetic embedding tables of these dimensions")
        ->delimiter(',');
    synth->callback([&]() {
        if (news_shape) {
            synth_spec.n_treated = 1796;
            synth_spec.n_control = 1565;
        }
        fs::create_directories(synth_dir);
        const SyntheticData data = generate_synthetic(synth_spec);
        const auto corpus_path = fs::path(synth_dir) / "corpus.csv";
        write_synthetic(data, corpus_path.string(),
                        (fs::path(synth_dir) / "ground_truth.csv").string());
        for (std::size_t i = 0; i < synth_embed_dims.size(); ++i) {
            const auto path = fs::path(synth_dir) /
                              ("embedding_" + std::to_string(i) + "_" +
                               std::to_string(synth_embed_dims[i]) + "d.txt");
            write_random_embedding(data.corpus, synth_embed_dims[i],
                                   synth_spec.seed + 1000 + i, path.string());
        }
        std::cout << "wrote " << corpus_path.string() << " (" << data.corpus.size()
                  << " documents)\n";
    });

    // ------------------------------------------------------------- represent
    auto* represent = app.add_subcommand("represent", "build a representation and export it");
    CorpusArgs rep_corpus;
    rep_corpus.attach(represent);
    RepArgs rep_args;
    rep_args.attach(represent);
    std::string rep_out = "representation.csv";
    represent->add_option("--out", rep_out, "dense CSV output");
    represent->callback([&]() {
        const Corpus corpus = rep_corpus.load();
        const Representation rep = rep_args.build(corpus);
        write_representation(rep, rep_out);
        std::cout << rep.preset_name << ": " << rep.rows() << " x " << rep.cols() << " -> "
                  << rep_out << "\n";
    });

    // -------------------------------------------------------------- distance
    auto* distance = app.add_subcommand("distance", "pairwise treated-control distances");
    CorpusArgs dist_corpus;
    dist_corpus.attach(distance);
    RepArgs dist_rep;
    dist_rep.attach(distance);
    std::string dist_metric = "cosine", dist_out = "distances.csv";
    std::string dist_caliper_rule = "none";
    double dist_caliper_value = 0.0, dist_ridge = -1.0;
    int dist_cem_bins = 2;
    bool dist_dense = false;
    distance->add_option("--metric", dist_metric, "euclidean|cosine|mahalanobis|propensity|cem")
        ->check(CLI::IsMember({"euclidean", "cosine", "mahalanobis", "propensity", "cem"}));
    distance->add_option("--out", dist_out, "output CSV");
    distance->add_option("--caliper-rule", dist_caliper_rule,
                         "quantile|sd_multiple|absolute|none");
    distance->add_option("--caliper-value", dist_caliper_value, "rule parameter");
    distance->add_option("--ridge", dist_ridge, "mahalanobis ridge (<0 = auto)");
    distance->add_option("--cem-bins", dist_cem_bins, "bins for the cem metric");
    distance->add_flag("--dense", dist_dense, "write the dense matrix instead of triplets");
    distance->callback([&]() {
        const Corpus corpus = dist_corpus.load();
        const DistanceMatrix dist =
            compute_distance(corpus, dist_rep, dist_metric, dist_cem_bins, dist_ridge);
        if (dist_dense) {
            write_distance_dense(dist, corpus, dist_out);
        } else {
            double cap = kInf;
            if (dist_caliper_rule != "none")
                cap = derive_caliper(dist,
                                     caliper_from_flags(dist_caliper_rule, dist_caliper_value))
                          .value;
            write_distance_sparse(dist, corpus, cap, dist_out);
        }
        std::cout << dist.n_treated << " x " << dist.n_control << " distances -> " << dist_out
                  << "\n";
    });

    // ----------------------------------------------------------------- match
    auto* match = app.add_subcommand("match", "produce a matched pair set");
    CorpusArgs match_corpus;
    match_corpus.attach(match);
    RepArgs match_rep;
    match_rep.attach(match);
    std::string match_metric = "cosine", match_out = "pairs.csv";
    std::string match_procedure = "caliper";
    std::string match_caliper_rule = "quantile";
    double match_caliper_value = 0.001, match_ridge = -1.0, match_ps_sd = 0.1;
    int match_cem_bins = 2;
    std::vector<std::string> match_ps_covs;
    double match_ps_ridge = 1.0;
    match->add_option("--metric", match_metric, "euclidean|cosine|mahalanobis|propensity|cem")
        ->check(CLI::IsMember({"euclidean", "cosine", "mahalanobis", "propensity", "cem"}));
    match->add_option("--procedure", match_procedure, "caliper|optimal|within_ps_calipers")
        ->check(CLI::IsMember({"caliper", "optimal", "within_ps_calipers"}));
    match->add_option("--caliper-rule", match_caliper_rule, "quantile|sd_multiple|absolute|none");
    match->add_option("--caliper-value", match_caliper_value, "rule parameter");
    match->add_option("--ridge", match_ridge, "mahalanobis ridge (<0 = auto)");
    match->add_option("--cem-bins", match_cem_bins, "bins for the cem metric");
    match->add_option("--ps-caliper-sd", match_ps_sd, "propensity caliper in score SDs");
    match->add_option("--ps-covariates", match_ps_covs, "columns for the propensity fit")
        ->delimiter(',');
    match->add_option("--ps-ridge", match_ps_ridge, "ridge for the propensity fit");
    match->add_option("--out", match_out, "pairs CSV");
    match->callback([&]() {
        const Corpus corpus = match_corpus.load();
        const DistanceMatrix dist =
            compute_distance(corpus, match_rep, match_metric, match_cem_bins, match_ridge);
        Caliper caliper = Caliper::unlimited();
        if (match_metric == "cem")
            caliper = Caliper::absolute(0.0);
        else if (match_caliper_rule != "none")
            caliper = derive_caliper(
                dist, caliper_from_flags(match_caliper_rule, match_caliper_value));
        MatchedPairSet pairs;
        if (match_procedure == "caliper") {
            pairs = caliper_match(dist, caliper);
        } else if (match_procedure == "optimal") {
            pairs = optimal_match(dist, caliper);
        } else {
            std::vector<std::string> cols =
                match_ps_covs.empty() ? match_corpus.covariates : match_ps_covs;
            if (cols.empty())
                throw ConfigError("within_ps_calipers needs --ps-covariates or --covariates");
            Eigen::MatrixXd x(corpus.size(), cols.size());
            for (int i = 0; i < corpus.size(); ++i)
                for (std::size_t c = 0; c < cols.size(); ++c) {
                    auto it = corpus.documents[i].covariates.find(cols[c]);
                    x(i, c) = it == corpus.documents[i].covariates.end() ? 0.0 : it->second;
                }
            const Representation ps_rep =
                dense_representation(std::move(x), RepKind::SCORE, "ps", cols);
            const PropensityModel ps =
                fit_propensity(ps_rep, corpus.group_vector(), match_ps_ridge);
            pairs = match_within_calipers(dist, ps, match_ps_sd, caliper);
        }
        pairs.procedure_id = match_rep.preset + "-" + match_metric + "-" + match_procedure;
        write_pairs_csv(pairs, corpus, match_out);
        std::cout << pairs.size() << " pairs -> " << match_out << "\n";
    });

    // -------------------------------------------------------------- template
    auto* tmpl = app.add_subcommand("template",
                                    "template selection and per-source template matching");
    CorpusArgs tmpl_corpus;
    tmpl_corpus.attach(tmpl);
    RepArgs tmpl_rep;
    tmpl_rep.attach(tmpl);
    std::string tmpl_labels_file, tmpl_out_dir = "template_out", tmpl_metric = "cosine";
    int tmpl_n = 150, tmpl_candidates = 500;
    std::uint64_t tmpl_seed = 1;
    tmpl->add_option("--labels-file", tmpl_labels_file,
                     "CSV with id,label primary-topic assignments")
        ->required();
    tmpl->add_option("--n-template", tmpl_n, "template sample size");
    tmpl->add_option("--n-candidates", tmpl_candidates, "candidate samples drawn");
    tmpl->add_option("--template-seed", tmpl_seed, "seed for candidate draws");
    tmpl->add_option("--metric", tmpl_metric, "continuous metric for matching")
        ->check(CLI::IsMember({"euclidean", "cosine", "mahalanobis"}));
    tmpl->add_option("--out-dir", tmpl_out_dir, "output directory");
    tmpl->callback([&]() {
        const Corpus corpus = tmpl_corpus.load();
        const csv::Table labels_table = csv::read_file(tmpl_labels_file);
        const std::vector<std::string> label_ids = column_or_fail(labels_table, "id");
        const std::vector<std::string> label_values = column_or_fail(labels_table, "label");
        std::vector<std::string> labels(corpus.size());
        for (std::size_t r = 0; r < label_ids.size(); ++r) {
            const int doc = corpus.index_of(label_ids[r]);
            if (doc < 0) throw DataError("label references unknown id " + label_ids[r]);
            labels[doc] = label_values[r];
        }
        std::vector<std::string> sources(corpus.size());
        for (int i = 0; i < corpus.size(); ++i) sources[i] = corpus.documents[i].group_label;

        const TemplateSample sample =
            select_template(corpus, labels, tmpl_n, tmpl_candidates, tmpl_seed);
        fs::create_directories(tmpl_out_dir);
        std::string ttext;
        csv::write_row(ttext, {"id", "label"});
        for (int doc : sample.doc_indices)
            csv::write_row(ttext, {corpus.documents[doc].id, labels[doc]});
        {
            std::ofstream f(fs::path(tmpl_out_dir) / "template_sample.csv", std::ios::binary);
            f << ttext;
        }

        const Representation rep = tmpl_rep.build(corpus);
        const TemplateMatchResult result = template_match(
            rep, metric_from_name(tmpl_metric), sample, sources, labels, corpus);
        int total = 0;
        for (const auto& [source, set] : result.per_source) {
            write_pairs_csv(set, corpus,
                            (fs::path(tmpl_out_dir) / ("pairs_" + source + ".csv")).string());
            total += set.size();
        }
        for (const auto& [source, ids] : result.unmatched)
            std::cerr << "warning: source " << source << " left " << ids.size()
                      << " template documents unmatched\n";
        std::cout << result.per_source.size() << " sources, " << total << " matched pairs -> "
                  << tmpl_out_dir << "\n";
    });

    // --------------------------------------------------------------- balance
    auto* balance = app.add_subcommand("balance", "standardized-difference balance report");
    CorpusArgs bal_corpus;
    bal_corpus.attach(balance);
    std::string bal_pairs_file, bal_out = "balance.csv";
    balance->add_option("--pairs", bal_pairs_file, "matched pairs CSV")->required();
    balance->add_option("--out", bal_out, "balance report CSV");
    balance->callback([&]() {
        const Corpus corpus = bal_corpus.load();
        if (bal_corpus.covariates.empty())
            throw ConfigError("balance needs --covariates");
        const MatchedPairSet pairs = read_pairs_csv(bal_pairs_file, corpus);
        const auto rows = balance_report(corpus, bal_corpus.covariates, pairs);
        write_balance_csv(rows, bal_out);
        std::cout << "ESS " << effective_sample_size(pairs) << ", report -> " << bal_out
                  << "\n";
    });

    // -------------------------------------------------------------- evaluate
    auto* evaluate = app.add_subcommand(
        "evaluate", "survey-sampling quality estimates over matched pair sets");
    CorpusArgs eval_corpus;
    eval_corpus.attach(evaluate);
    std::vector<std::string> eval_pair_files;
    std::string eval_ratings, eval_design_file, eval_out = "quality_report.csv";
    int eval_reps = 100000, eval_boot = 500;
    double eval_raw_sd = 2.37, eval_resid_sd = 1.6;
    std::uint64_t eval_seed = 1;
    evaluate->add_option("--pairs", eval_pair_files, "matched pair CSVs, one per procedure")
        ->required();
    evaluate->add_option("--ratings", eval_ratings, "ratings CSV (pair_id,rater_id,score)")
        ->required();
    evaluate->add_option("--design", eval_design_file, "sampling design JSON");
    evaluate->add_option("--inclusion-reps", eval_reps, "simulation replicates for pi");
    evaluate->add_option("--bootstrap-reps", eval_boot, "bootstrap replicates");
    evaluate->add_option("--raw-sd", eval_raw_sd, "pseudo-score SD for raw SEs");
    evaluate->add_option("--residual-sd", eval_resid_sd, "residual SD for adjusted SEs");
    evaluate->add_option("--seed", eval_seed, "seed");
    evaluate->add_option("--out", eval_out, "quality report CSV");
    evaluate->callback([&]() {
        const Corpus corpus = eval_corpus.load();
        std::vector<MatchedPairSet> sets;
        for (const auto& file : eval_pair_files) {
            MatchedPairSet set = read_pairs_csv(file, corpus);
            if (set.procedure_id.empty()) set.procedure_id = fs::path(file).stem().string();
            sets.push_back(std::move(set));
        }
        const PairUniverse universe = make_universe(sets);
        DesignSpec design;
        if (eval_design_file.empty()) {
            design.stages.push_back({StageKind::ProcedureQuota, 4, true, {}, 0.2});
        } else {
            std::ifstream in(eval_design_file);
            if (!in) throw ConfigError("cannot open design: " + eval_design_file);
            nlohmann::json j;
            in >> j;
            design = design_from_json(j);
        }
        const EvaluatedSet evaluated = load_ratings(eval_ratings, universe, corpus);
        EvaluationOptions options;
        options.inclusion_reps = eval_reps;
        options.bootstrap_reps = eval_boot;
        options.raw_noise_sd = eval_raw_sd;
        options.residual_noise_sd = eval_resid_sd;
        options.seed = eval_seed;
        const auto estimates =
            evaluate_procedures(universe, design, evaluated, nullptr, options);
        write_quality_csv(estimates, eval_out);
        std::cout << estimates.size() << " procedures -> " << eval_out << "\n";
    });

    // ---------------------------------------------------------- quality-model
    auto* qmodel = app.add_subcommand(
        "quality-model", "cross-validated match-quality model over distance features");
    std::string qm_features, qm_ratings_col = "rating", qm_out = "quality_model.csv";
    int qm_folds = 10;
    std::uint64_t qm_seed = 1;
    qmodel->add_option("--features", qm_features,
                       "CSV: pair_id, rating, then one column per distance feature")
        ->required();
    qmodel->add_option("--rating-column", qm_ratings_col, "outcome column name");
    qmodel->add_option("--folds", qm_folds, "cross-validation folds");
    qmodel->add_option("--seed", qm_seed, "fold-assignment seed");
    qmodel->add_option("--out", qm_out, "coefficients CSV");
    qmodel->callback([&]() {
        const csv::Table table = csv::read_file(qm_features);
        const int rating_col = table.column(qm_ratings_col);
        if (rating_col < 0) throw FormatError("missing rating column " + qm_ratings_col);
        std::vector<std::string> labels;
        std::vector<int> feature_cols;
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            if (static_cast<int>(c) == rating_col || table.header[c] == "pair_id") continue;
            labels.push_back(table.header[c]);
            feature_cols.push_back(static_cast<int>(c));
        }
        const int n = static_cast<int>(table.rows.size());
        Eigen::MatrixXd x(n, feature_cols.size());
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            y[i] = std::stod(table.rows[i][rating_col]);
            for (std::size_t c = 0; c < feature_cols.size(); ++c)
                x(i, c) = std::stod(table.rows[i][feature_cols[c]]);
        }
        const QualityModel model = fit_quality_model(x, labels, y, qm_folds, qm_seed);
        std::string out;
        csv::write_row(out, {"feature", "coefficient"});
        csv::write_row(out, {"(intercept)", csv::format_double(model.intercept)});
        for (std::size_t f = 0; f < model.feature_labels.size(); ++f)
            csv::write_row(out, {model.feature_labels[f],
                                 csv::format_double(model.coefficients[f])});
        std::ofstream fq(qm_out, std::ios::binary);
        fq << out;
        std::cout << "lambda " << model.lambda << " -> " << qm_out << "\n";
    });

    // --------------------------------------------------------------- randtest
    auto* randtest = app.add_subcommand(
        "randtest", "randomization consistency test for template-matched samples");
    CorpusArgs rt_corpus;
    rt_corpus.attach(randtest);
    std::string rt_matched, rt_dem = "dem", rt_rep = "rep";
    int rt_sample = 150, rt_iters = 10000;
    std::uint64_t rt_seed = 1;
    randtest->add_option("--matched", rt_matched, "matched sample CSV (id,source)")->required();
    randtest->add_option("--dem-field", rt_dem, "first outcome covariate");
    randtest->add_option("--rep-field", rt_rep, "second outcome covariate");
    randtest->add_option("--sample-size", rt_sample, "per-source null sample size");
    randtest->add_option("--iterations", rt_iters, "null draws");
    randtest->add_option("--seed", rt_seed, "seed");
    randtest->callback([&]() {
        CorpusArgs args = rt_corpus;
        args.covariates.push_back(rt_dem);
        args.covariates.push_back(rt_rep);
        const Corpus corpus = args.load();
        std::vector<double> dem(corpus.size()), rep(corpus.size());
        std::vector<std::string> sources(corpus.size());
        for (int i = 0; i < corpus.size(); ++i) {
            const auto& covs = corpus.documents[i].covariates;
            dem[i] = covs.count(rt_dem) ? covs.at(rt_dem) : 0.0;
            rep[i] = covs.count(rt_rep) ? covs.at(rt_rep) : 0.0;
            sources[i] = corpus.documents[i].group_label;
        }
        const csv::Table matched_table = csv::read_file(rt_matched);
        const auto ids = column_or_fail(matched_table, "id");
        const auto matched_sources = column_or_fail(matched_table, "source");
        std::map<std::string, std::vector<int>> matched;
        for (std::size_t r = 0; r < ids.size(); ++r) {
            const int doc = corpus.index_of(ids[r]);
            if (doc < 0) throw DataError("matched sample references unknown id " + ids[r]);
            matched[matched_sources[r]].push_back(doc);
        }
        const RandTestResult result =
            randomization_test(dem, rep, sources, matched, rt_sample, rt_iters, rt_seed);
        std::cout << "T_obs = " << result.t_obs << "\n"
                  << "p     = " << result.p << "  (" << rt_iters << " null draws)\n";
    });

    // ------------------------------------------------------------------- grid
    auto* grid = app.add_subcommand(
        "grid", "emit the full representation-by-metric evaluation grid config");
    std::string grid_corpus_path, grid_out = "grid_config.json";
    std::vector<std::string> grid_embeddings;
    std::uint64_t grid_seed = 1;
    grid->add_option("--corpus", grid_corpus_path, "corpus file for the config")->required();
    grid->add_option("--out", grid_out, "config JSON path");
    grid->add_option("--embeddings", grid_embeddings, "W1=path,...,W5=path entries")
        ->delimiter(',');
    grid->add_option("--seed", grid_seed, "pipeline seed");
    grid->callback([&]() {
        PipelineConfig config;
        config.seed = grid_seed;
        config.corpus_path = grid_corpus_path;
        for (const auto& entry : grid_embeddings) {
            const auto eq = entry.find('=');
            if (eq == std::string::npos)
                throw ConfigError("embedding entries look like W1=path: " + entry);
            config.embedding_files[entry.substr(0, eq)] = entry.substr(eq + 1);
        }
        config.procedures = grid_procedures(grid_presets(!config.embedding_files.empty()));
        std::ofstream f(grid_out, std::ios::binary);
        if (!f) throw Error("cannot write " + grid_out);
        f << config_to_json(config).dump(2) << "\n";
        std::cout << config.procedures.size() << " procedures -> " << grid_out << "\n";
    });

    // -------------------------------------------------------------------- run
    auto* run = app.add_subcommand("run", "run a full pipeline from a JSON config");
    std::string run_config_path, run_output_override;
    std::uint64_t run_seed_override = 0;
    bool run_seed_set = false;
    run->add_option("--config", run_config_path, "pipeline config JSON")->required();
    run->add_option("--output-dir", run_output_override, "override the output directory");
    auto* seed_opt = run->add_option("--seed", run_seed_override, "override the seed");
    run->callback([&]() {
        PipelineConfig config = load_config(run_config_path);
        if (!run_output_override.empty()) config.output_dir = run_output_override;
        if (seed_opt->count() > 0) config.seed = run_seed_override;
        (void)run_seed_set;
        const PipelineResult result = run_pipeline(config);
        int matched = 0, empty = 0;
        for (const auto& proc : result.procedures) {
            if (proc.pairs.size() > 0)
                ++matched;
            else
                ++empty;
        }
        std::cout << result.procedures.size() << " procedures (" << matched << " matched, "
                  << empty << " empty) -> " << result.output_dir << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // bad flags are config errors
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
