#include "textmatch/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "textmatch/csv.hpp"
#include "textmatch/diagnostics.hpp"
#include "textmatch/errors.hpp"
#include "textmatch/hash.hpp"
#include "textmatch/lasso.hpp"
#include "textmatch/logistic.hpp"

namespace textmatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "textmatch 0.1.0";

[[noreturn]] void config_fail(const std::string& field, const std::string& why) {
    throw ConfigError("config field \"" + field + "\": " + why);
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        config_fail(key, "wrong type");
    }
}

CaliperRule parse_caliper(const json& j) {
    const std::string rule = get_or<std::string>(j, "rule", "quantile");
    const double value = get_or<double>(j, "value", 0.001);
    if (rule == "quantile") {
        if (value < 0.0 || value > 1.0) config_fail("caliper.value", "quantile must be in [0,1]");
        return CaliperRule::quantile(value);
    }
    if (rule == "sd_multiple") return CaliperRule::sd_multiple(value);
    if (rule == "absolute") return CaliperRule::absolute(value);
    if (rule == "none") return CaliperRule::absolute(kInf);
    config_fail("caliper.rule", "unknown rule " + rule);
}

json caliper_to_json(const CaliperRule& rule) {
    json j;
    switch (rule.kind) {
        case CaliperRuleKind::Quantile: j["rule"] = "quantile"; break;
        case CaliperRuleKind::SdMultiple: j["rule"] = "sd_multiple"; break;
        case CaliperRuleKind::Absolute: j["rule"] = "absolute"; break;
    }
    j["value"] = rule.param;
    return j;
}

}  // namespace

DesignSpec design_from_json(const json& j) {
    DesignSpec spec;
    spec.pool_equal_probability = get_or<bool>(j, "pool_equal_probability", true);
    if (!j.contains("stages") || !j.at("stages").is_array())
        config_fail("evaluation.design.stages", "must be an array");
    for (const auto& s : j.at("stages")) {
        DesignStage stage;
        const std::string kind = get_or<std::string>(s, "kind", "");
        if (kind == "procedure_quota") {
            stage.kind = StageKind::ProcedureQuota;
            stage.count = get_or<int>(s, "count", 4);
            stage.weight_by_prediction = get_or<bool>(s, "weight_by_prediction", true);
        } else if (kind == "fixed_pairs") {
            stage.kind = StageKind::FixedPairs;
            stage.fixed_pairs = get_or<std::vector<int>>(s, "pairs", {});
        } else if (kind == "tier_draws") {
            stage.kind = StageKind::TierDraws;
            stage.count = get_or<int>(s, "count", 5);
        } else if (kind == "pilot_weighted") {
            stage.kind = StageKind::PilotWeighted;
            stage.count = get_or<int>(s, "count", 500);
            stage.singleton_weight = get_or<double>(s, "singleton_weight", 0.2);
        } else {
            config_fail("evaluation.design.stages.kind", "unknown stage " + kind);
        }
        if (stage.kind != StageKind::FixedPairs && stage.count < 1)
            config_fail("evaluation.design.stages.count", "must be >= 1");
        spec.stages.push_back(std::move(stage));
    }
    return spec;
}

namespace {

json design_to_json(const DesignSpec& spec) {
    json stages = json::array();
    for (const auto& s : spec.stages) {
        json stage;
        switch (s.kind) {
            case StageKind::ProcedureQuota:
                stage["kind"] = "procedure_quota";
                stage["count"] = s.count;
                stage["weight_by_prediction"] = s.weight_by_prediction;
                break;
            case StageKind::FixedPairs:
                stage["kind"] = "fixed_pairs";
                stage["pairs"] = s.fixed_pairs;
                break;
            case StageKind::TierDraws:
                stage["kind"] = "tier_draws";
                stage["count"] = s.count;
                break;
            case StageKind::PilotWeighted:
                stage["kind"] = "pilot_weighted";
                stage["count"] = s.count;
                stage["singleton_weight"] = s.singleton_weight;
                break;
        }
        stages.push_back(std::move(stage));
    }
    return json{{"stages", stages}, {"pool_equal_probability", spec.pool_equal_probability}};
}

bool known_representation(const std::string& name) {
    for (const auto& p : tdm_presets())
        if (p.name == name) return true;
    for (int k : {10, 30, 50, 100})
        for (const char* form : {"S1-", "S2-", "S3-"})
            if (name == form + std::to_string(k)) return true;
    for (int w = 1; w <= 5; ++w)
        if (name == "W" + std::to_string(w)) return true;
    return false;
}

const std::set<std::string>& known_metrics() {
    static const std::set<std::string> metrics = {"euclidean", "cosine", "mahalanobis",
                                                  "propensity", "cem"};
    return metrics;
}

}  // namespace

PipelineConfig parse_config(const json& j) {
    PipelineConfig config;
    if (!j.contains("seed")) config_fail("seed", "required");
    config.seed = get_or<std::uint64_t>(j, "seed", 0);
    config.jobs = get_or<int>(j, "jobs", 0);
    config.output_dir = get_or<std::string>(j, "output_dir", "out");

    if (!j.contains("corpus")) config_fail("corpus", "required");
    const json& c = j.at("corpus");
    config.corpus_path = get_or<std::string>(c, "path", "");
    if (config.corpus_path.empty()) config_fail("corpus.path", "required");
    const std::string format = get_or<std::string>(c, "format", "csv");
    if (format == "csv")
        config.corpus_format = CorpusFormat::CSV;
    else if (format == "jsonl")
        config.corpus_format = CorpusFormat::JSONL;
    else
        config_fail("corpus.format", "must be csv or jsonl");
    if (c.contains("fields")) {
        const json& f = c.at("fields");
        config.fields.id = get_or<std::string>(f, "id", "id");
        config.fields.group = get_or<std::string>(f, "group", "group");
        config.fields.text = get_or<std::string>(f, "text", "text");
        config.fields.covariates = get_or<std::vector<std::string>>(f, "covariates", {});
        config.fields.outcome = get_or<std::string>(f, "outcome", "");
    }

    if (j.contains("tokenizer")) {
        const json& t = j.at("tokenizer");
        config.tokenizer.lowercase = get_or<bool>(t, "lowercase", true);
        config.tokenizer.strip_punctuation = get_or<bool>(t, "strip_punctuation", true);
        config.tokenizer.ngram = get_or<int>(t, "ngram", 1);
        const std::string stopwords = get_or<std::string>(t, "stopwords_file", "");
        if (!stopwords.empty()) {
            std::ifstream in(stopwords);
            if (!in) config_fail("tokenizer.stopwords_file", "cannot open " + stopwords);
            std::string word;
            while (in >> word) config.tokenizer.stopwords.insert(word);
        }
    }

    if (j.contains("topics")) {
        const json& t = j.at("topics");
        config.topic_iterations = get_or<int>(t, "iterations", 400);
        config.topic_average_last = get_or<int>(t, "average_last", 100);
        config.topic_alpha = get_or<double>(t, "alpha", 0.0);
        config.topic_beta = get_or<double>(t, "beta", 0.01);
    }
    if (j.contains("score")) {
        config.score_ridge = get_or<double>(j.at("score"), "ridge", 1.0);
        config.ps_ridge = get_or<double>(j.at("score"), "ps_ridge", 1.0);
    }
    if (j.contains("embeddings")) {
        for (const auto& [preset, path] : j.at("embeddings").items())
            config.embedding_files[preset] = path.get<std::string>();
    }

    config.balance_covariates =
        get_or<std::vector<std::string>>(j, "balance_covariates", {});

    std::set<std::string> ids;
    if (j.contains("procedures")) {
        if (!j.at("procedures").is_array()) config_fail("procedures", "must be an array");
        for (const auto& p : j.at("procedures")) {
            ProcedureSpec spec;
            spec.representation = get_or<std::string>(p, "representation", "");
            spec.metric = get_or<std::string>(p, "metric", "");
            if (!known_representation(spec.representation))
                config_fail("procedures.representation",
                            "unknown preset " + spec.representation);
            if (!known_metrics().count(spec.metric))
                config_fail("procedures.metric", "unknown metric " + spec.metric);
            spec.procedure = get_or<std::string>(p, "procedure", "caliper");
            if (spec.procedure != "caliper" && spec.procedure != "optimal" &&
                spec.procedure != "within_ps_calipers")
                config_fail("procedures.procedure", "unknown procedure " + spec.procedure);
            if (p.contains("caliper")) spec.caliper = parse_caliper(p.at("caliper"));
            spec.cem_bins = get_or<int>(p, "cem_bins", 2);
            if (spec.cem_bins < 1) config_fail("procedures.cem_bins", "must be >= 1");
            spec.ps_caliper_sd = get_or<double>(p, "ps_caliper_sd", 0.1);
            spec.ps_covariates = get_or<std::vector<std::string>>(p, "ps_covariates", {});
            spec.mahalanobis_ridge = get_or<double>(p, "ridge", -1.0);
            spec.id = get_or<std::string>(p, "id", spec.representation + "-" + spec.metric +
                                                       "-" + spec.procedure);
            if (!ids.insert(spec.id).second)
                config_fail("procedures.id", "duplicate id " + spec.id);
            config.procedures.push_back(std::move(spec));
        }
    }

    if (j.contains("evaluation")) {
        const json& e = j.at("evaluation");
        config.evaluation.enabled = true;
        config.evaluation.ratings_file = get_or<std::string>(e, "ratings_file", "");
        config.evaluation.predictions_file = get_or<std::string>(e, "predictions_file", "");
        if (e.contains("design"))
            config.evaluation.design = design_from_json(e.at("design"));
        else
            config.evaluation.design.stages.push_back(
                {StageKind::ProcedureQuota, 4, true, {}, 0.2});
        config.evaluation.inclusion_reps = get_or<int>(e, "inclusion_reps", 100000);
        if (config.evaluation.inclusion_reps < 1)
            config_fail("evaluation.inclusion_reps", "must be >= 1");
        config.evaluation.unmatched_pool = get_or<int>(e, "unmatched_pool", 0);
        if (e.contains("quality_model")) {
            config.evaluation.fit_model = true;
            config.evaluation.model_folds = get_or<int>(e.at("quality_model"), "folds", 10);
        }
        if (e.contains("bootstrap")) {
            const json& b = e.at("bootstrap");
            config.evaluation.bootstrap_reps = get_or<int>(b, "n_boot", 500);
            config.evaluation.raw_noise_sd = get_or<double>(b, "raw_sd", 2.37);
            config.evaluation.residual_noise_sd = get_or<double>(b, "residual_sd", 1.6);
        }
    }
    return config;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

json config_to_json(const PipelineConfig& config) {
    json j;
    j["seed"] = config.seed;
    j["jobs"] = config.jobs;
    j["output_dir"] = config.output_dir;
    j["corpus"] = {{"path", config.corpus_path},
                   {"format", config.corpus_format == CorpusFormat::CSV ? "csv" : "jsonl"},
                   {"fields",
                    {{"id", config.fields.id},
                     {"group", config.fields.group},
                     {"text", config.fields.text},
                     {"covariates", config.fields.covariates},
                     {"outcome", config.fields.outcome}}}};
    j["tokenizer"] = {{"lowercase", config.tokenizer.lowercase},
                      {"strip_punctuation", config.tokenizer.strip_punctuation},
                      {"ngram", config.tokenizer.ngram}};
    j["topics"] = {{"iterations", config.topic_iterations},
                   {"average_last", config.topic_average_last},
                   {"alpha", config.topic_alpha},
                   {"beta", config.topic_beta}};
    j["score"] = {{"ridge", config.score_ridge}, {"ps_ridge", config.ps_ridge}};
    j["embeddings"] = config.embedding_files;
    j["balance_covariates"] = config.balance_covariates;
    json procs = json::array();
    for (const auto& p : config.procedures) {
        procs.push_back({{"id", p.id},
                         {"representation", p.representation},
                         {"metric", p.metric},
                         {"procedure", p.procedure},
                         {"caliper", caliper_to_json(p.caliper)},
                         {"cem_bins", p.cem_bins},
                         {"ps_caliper_sd", p.ps_caliper_sd},
                         {"ps_covariates", p.ps_covariates},
                         {"ridge", p.mahalanobis_ridge}});
    }
    j["procedures"] = procs;
    if (config.evaluation.enabled) {
        j["evaluation"] = {{"ratings_file", config.evaluation.ratings_file},
                           {"predictions_file", config.evaluation.predictions_file},
                           {"design", design_to_json(config.evaluation.design)},
                           {"inclusion_reps", config.evaluation.inclusion_reps},
                           {"unmatched_pool", config.evaluation.unmatched_pool},
                           {"bootstrap",
                            {{"n_boot", config.evaluation.bootstrap_reps},
                             {"raw_sd", config.evaluation.raw_noise_sd},
                             {"residual_sd", config.evaluation.residual_noise_sd}}}};
        if (config.evaluation.fit_model)
            j["evaluation"]["quality_model"] = {{"folds", config.evaluation.model_folds}};
    }
    return j;
}

RepresentationCache::RepresentationCache(const Corpus& corpus, const PipelineConfig& config)
    : corpus_(corpus), config_(config) {}

void RepresentationCache::build_base() {
    if (base_built_) return;
    // the topic models run over the T1 bounds so extremely rare terms do not
    // dominate the sampler
    const int n = corpus_.size();
    const int max_df = std::min(1000, n);
    base_vocab_ = build_vocabulary(corpus_, config_.tokenizer, std::min(4, n), max_df);
    base_tf_ = build_tdm(corpus_, base_vocab_, config_.tokenizer);
    base_built_ = true;
}

const TopicModel& RepresentationCache::topic_model(int k) {
    auto it = topic_models_.find(k);
    if (it != topic_models_.end()) return it->second;
    build_base();
    const double alpha = config_.topic_alpha > 0.0 ? config_.topic_alpha : 50.0 / k;
    TopicModel model = fit_topic_model(base_tf_, k, alpha, config_.topic_beta,
                                       config_.topic_iterations,
                                       splitmix64(config_.seed ^ (0x70ull + k)),
                                       config_.topic_average_last);
    return topic_models_.emplace(k, std::move(model)).first->second;
}

const Representation& RepresentationCache::get(const std::string& preset) {
    auto it = reps_.find(preset);
    if (it != reps_.end()) return it->second;

    Representation rep;
    if (preset.size() >= 2 && preset[0] == 'T') {
        rep = make_tdm_preset(corpus_, preset, config_.tokenizer);
    } else if (preset.size() >= 4 && preset[0] == 'S') {
        const int k = std::stoi(preset.substr(3));
        const TopicModel& model = topic_model(k);
        if (preset[1] == '1') {
            rep = topic_representation(model, preset);
        } else if (preset[1] == '3') {
            rep = coarsen_topics(model);
        } else {  // S2: topics + estimated sufficient reduction over the TDM
            const Representation s1 = topic_representation(model, "S1-" + std::to_string(k));
            build_base();
            const Representation tdm_rep =
                representation_from_tdm(base_tf_, base_vocab_, "T1");
            const PropensityModel sr =
                fit_propensity(tdm_rep, corpus_.group_vector(), config_.score_ridge);
            const Representation score = score_column(sr, "SR");
            rep = compose({&s1, &score});
            rep.preset_name = preset;
        }
    } else if (preset.size() == 2 && preset[0] == 'W') {
        auto file = config_.embedding_files.find(preset);
        if (file == config_.embedding_files.end())
            throw ConfigError("no embedding file configured for preset " + preset);
        const EmbeddingTable table = load_embedding_table(file->second);
        rep = embed_documents(corpus_, table, Weighting::TF, preset, config_.tokenizer);
    } else {
        throw ConfigError("unknown representation preset: " + preset);
    }
    return reps_.emplace(preset, std::move(rep)).first->second;
}

const PropensityModel& RepresentationCache::propensity_for(const std::string& preset) {
    auto it = propensity_.find(preset);
    if (it != propensity_.end()) return it->second;
    const Representation& rep = get(preset);
    PropensityModel model = fit_propensity(rep, corpus_.group_vector(), config_.score_ridge);
    return propensity_.emplace(preset, std::move(model)).first->second;
}

std::vector<std::string> RepresentationCache::known_presets() const {
    std::vector<std::string> names;
    for (const auto& [name, rep] : reps_) names.push_back(name);
    return names;
}

ProcedureResult run_procedure(const ProcedureSpec& spec, const Corpus& corpus,
                              RepresentationCache& cache, const PipelineConfig& config) {
    ProcedureResult result;
    result.spec = spec;
    const std::vector<int> z = corpus.group_vector();

    DistanceMatrix dist;
    if (spec.metric == "cem") {
        const Representation& rep = cache.get(spec.representation);
        CoarseningRule rule;
        rule.bins = spec.cem_bins;
        dist = cem_distance(coarsen(rep, rule), z);
        dist.representation_preset = rep.preset_name;
        result.caliper = Caliper::absolute(0.0);  // CEM matches exact bin agreement
    } else if (spec.metric == "propensity") {
        const PropensityModel& model = cache.propensity_for(spec.representation);
        dist = score_distance(model, z, ScoreScale::Raw);
        dist.representation_preset = spec.representation;
        result.caliper = derive_caliper(dist, spec.caliper);
    } else {
        const Representation& rep = cache.get(spec.representation);
        Metric metric;
        if (spec.metric == "euclidean")
            metric = Metric::Euclidean;
        else if (spec.metric == "cosine")
            metric = Metric::Cosine;
        else
            metric = Metric::Mahalanobis;
        PairwiseOptions opt;
        opt.ridge = spec.mahalanobis_ridge;
        dist = pairwise_distance(rep, z, metric, opt);
        result.caliper = derive_caliper(dist, spec.caliper);
    }

    if (spec.procedure == "caliper") {
        result.pairs = caliper_match(dist, result.caliper);
    } else if (spec.procedure == "optimal") {
        result.pairs = optimal_match(dist, result.caliper);
    } else {
        std::vector<std::string> ps_covs = spec.ps_covariates;
        if (ps_covs.empty()) ps_covs = config.fields.covariates;
        if (ps_covs.empty())
            throw ConfigError("within_ps_calipers needs ps_covariates or corpus covariates");
        Eigen::MatrixXd x(corpus.size(), ps_covs.size());
        for (int i = 0; i < corpus.size(); ++i)
            for (std::size_t c = 0; c < ps_covs.size(); ++c) {
                auto it = corpus.documents[i].covariates.find(ps_covs[c]);
                x(i, c) = it == corpus.documents[i].covariates.end() ? 0.0 : it->second;
            }
        const Representation ps_rep =
            dense_representation(std::move(x), RepKind::SCORE, "ps_covariates", ps_covs);
        const PropensityModel ps = fit_propensity(ps_rep, z, config.ps_ridge);
        result.pairs = match_within_calipers(dist, ps, spec.ps_caliper_sd, result.caliper);
    }
    result.pairs.procedure_id = spec.id;
    return result;
}

namespace {

void atomic_write(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw Error("cannot write " + tmp.string());
        f << content;
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

std::string pairs_csv_text(const MatchedPairSet& set, const Corpus& corpus) {
    std::string out;
    csv::write_row(out, {"procedure_id", "treated_id", "control_id", "distance"});
    for (const auto& p : set.pairs)
        csv::write_row(out, {set.procedure_id, corpus.documents[p.treated_doc].id,
                             corpus.documents[p.control_doc].id, csv::format_double(p.distance)});
    return out;
}

// distance features for the quality model: one column per distinct
// (representation, continuous metric) combination among the procedures
struct FeatureBuilder {
    std::vector<std::string> labels;
    Eigen::MatrixXd matrix;  // universe pairs x features
};

FeatureBuilder build_pair_features(const PairUniverse& universe, const Corpus& corpus,
                                   RepresentationCache& cache, const PipelineConfig& config) {
    std::vector<std::pair<std::string, std::string>> combos;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& p : config.procedures) {
        if (p.metric == "cem") continue;  // zero/inf by construction
        if (seen.insert({p.representation, p.metric}).second)
            combos.emplace_back(p.representation, p.metric);
    }
    std::sort(combos.begin(), combos.end());

    FeatureBuilder fb;
    fb.matrix.resize(universe.size(), static_cast<int>(combos.size()));
    int col = 0;
    for (const auto& [preset, metric] : combos) {
        fb.labels.push_back(preset + ":" + metric);
        if (metric == "propensity") {
            const PropensityModel& model = cache.propensity_for(preset);
            for (int i = 0; i < universe.size(); ++i)
                fb.matrix(i, col) = std::abs(model.scores[universe.pairs[i].first] -
                                             model.scores[universe.pairs[i].second]);
        } else if (metric == "mahalanobis") {
            const Representation& rep = cache.get(preset);
            const Eigen::MatrixXd x = rep.to_dense();
            const Eigen::RowVectorXd mean = x.colwise().mean();
            const Eigen::MatrixXd centered = x.rowwise() - mean;
            Eigen::MatrixXd sigma =
                (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
            sigma.diagonal().array() += 1e-8 * sigma.trace() / x.cols();
            Eigen::LLT<Eigen::MatrixXd> llt(sigma);
            const Eigen::MatrixXd whitened = llt.matrixL().solve(centered.transpose());
            for (int i = 0; i < universe.size(); ++i)
                fb.matrix(i, col) = (whitened.col(universe.pairs[i].first) -
                                     whitened.col(universe.pairs[i].second))
                                        .squaredNorm();
        } else {
            const Representation& rep = cache.get(preset);
            for (int i = 0; i < universe.size(); ++i) {
                const auto [t, c] = universe.pairs[i];
                if (metric == "euclidean") {
                    fb.matrix(i, col) = std::sqrt(std::max(0.0, rep.row_squared_distance(t, c)));
                } else {
                    const double denom = std::sqrt(rep.row_squared_norm(t)) *
                                         std::sqrt(rep.row_squared_norm(c));
                    fb.matrix(i, col) =
                        denom == 0.0 ? 1.0 : std::max(0.0, 1.0 - rep.row_dot(t, c) / denom);
                }
            }
        }
        ++col;
    }
    return fb;
}

Eigen::VectorXd load_predictions(const std::string& path, const PairUniverse& universe,
                                 const Corpus& corpus) {
    const csv::Table table = csv::read_file(path);
    const int pair_col = table.column("pair_id");
    const int q_col = table.column("q_hat");
    if (pair_col < 0 || q_col < 0)
        throw FormatError("predictions CSV needs pair_id and q_hat columns");
    Eigen::VectorXd pred =
        Eigen::VectorXd::Constant(universe.size(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& row : table.rows) {
        const std::string& pid = row[pair_col];
        const std::size_t sep = pid.find(':');
        if (sep == std::string::npos) throw FormatError("pair_id must be treated_id:control_id");
        const int t = corpus.index_of(pid.substr(0, sep));
        const int c = corpus.index_of(pid.substr(sep + 1));
        const int idx = t >= 0 && c >= 0 ? universe.find_pair(t, c) : -1;
        if (idx >= 0) pred[idx] = std::stod(row[q_col]);
    }
    return pred;
}

void extend_with_unmatched_pool(PairUniverse& universe, const Corpus& corpus, int pool_size,
                                std::uint64_t seed) {
    if (pool_size <= 0) return;
    const std::vector<int> treated = corpus.treated_indices();
    const std::vector<int> control = corpus.control_indices();
    const std::int64_t total =
        static_cast<std::int64_t>(treated.size()) * static_cast<std::int64_t>(control.size());
    Rng rng(splitmix64(seed ^ 0xB00Cull));
    std::set<std::pair<int, int>> chosen;
    int attempts = 0;
    while (static_cast<int>(chosen.size()) < pool_size && attempts < pool_size * 50 &&
           static_cast<std::int64_t>(chosen.size()) < total) {
        ++attempts;
        const int t = treated[rng.below(treated.size())];
        const int c = control[rng.below(control.size())];
        if (universe.find_pair(t, c) >= 0) continue;  // already in the frame
        chosen.insert({t, c});
    }
    for (const auto& [t, c] : chosen) {
        universe.pairs.push_back({t, c});
        universe.frequency.push_back(0);
    }
    universe.rebuild_index();
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
    PipelineResult result;
    result.output_dir = config.output_dir;
    const fs::path out_dir(config.output_dir);
    fs::create_directories(out_dir);

    const Corpus corpus = ingest_corpus(config.corpus_path, config.corpus_format, config.fields);
    if (!corpus.binary)
        throw DataError("pipeline requires a binary-group corpus (use the template tools "
                        "for multi-group studies)");

    RepresentationCache cache(corpus, config);

    // warm the caches serially: presets, topic models and propensity fits are
    // shared across procedures
    for (const auto& p : config.procedures) {
        cache.get(p.representation);
        if (p.metric == "propensity") cache.propensity_for(p.representation);
    }

    // procedures run concurrently up to the jobs bound
    result.procedures.resize(config.procedures.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= config.procedures.size()) return;
            try {
                result.procedures[i] =
                    run_procedure(config.procedures[i], corpus, cache, config);
            } catch (const std::exception& e) {
                result.procedures[i].spec = config.procedures[i];
                result.procedures[i].error =
                    "procedure " + config.procedures[i].id + ": " + e.what();
            }
        }
    };
    int jobs = config.jobs > 0 ? config.jobs
                               : static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    jobs = std::min<int>(jobs, std::max<std::size_t>(config.procedures.size(), 1));
    {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& proc : result.procedures)
        if (!proc.error.empty()) throw DataError(proc.error);

    // per-procedure artifacts
    for (const auto& proc : result.procedures) {
        const std::string name = "pairs_" + proc.spec.id + ".csv";
        atomic_write(out_dir / name, pairs_csv_text(proc.pairs, corpus));
        result.files.push_back(name);
        if (!config.balance_covariates.empty() && !proc.pairs.pairs.empty()) {
            const auto rows = balance_report(corpus, config.balance_covariates, proc.pairs);
            std::string btext;
            csv::write_row(btext, {"covariate", "before", "after", "ci_low", "ci_high"});
            for (const auto& r : rows)
                csv::write_row(btext,
                               {r.covariate, csv::format_double(r.before.value),
                                csv::format_double(r.after.value),
                                csv::format_double(r.after.value - r.after.half_width),
                                csv::format_double(r.after.value + r.after.half_width)});
            const std::string bname = "balance_" + proc.spec.id + ".csv";
            atomic_write(out_dir / bname, btext);
            result.files.push_back(bname);
        }
    }

    std::vector<MatchedPairSet> all_sets;
    for (const auto& proc : result.procedures) all_sets.push_back(proc.pairs);

    if (!all_sets.empty()) {
        const PairFrequencyTable freq = pair_frequency(all_sets);
        std::string ftext;
        csv::write_row(ftext, {"treated_id", "control_id", "F"});
        for (std::size_t i = 0; i < freq.pair_docs.size(); ++i)
            csv::write_row(ftext, {corpus.documents[freq.pair_docs[i].first].id,
                                   corpus.documents[freq.pair_docs[i].second].id,
                                   std::to_string(freq.frequency[i])});
        atomic_write(out_dir / "frequency_table.csv", ftext);
        result.files.push_back("frequency_table.csv");
    }

    if (config.evaluation.enabled && !all_sets.empty()) {
        PairUniverse universe = make_universe(all_sets);
        extend_with_unmatched_pool(universe, corpus, config.evaluation.unmatched_pool,
                                   config.seed);

        if (!config.evaluation.predictions_file.empty()) {
            const Eigen::VectorXd prior =
                load_predictions(config.evaluation.predictions_file, universe, corpus);
            universe.predicted_quality.assign(prior.data(), prior.data() + prior.size());
            for (auto& q : universe.predicted_quality)
                if (!std::isfinite(q)) q = 1.0;  // unscored pairs get a floor weight
        }

        EvaluatedSet evaluated;
        if (!config.evaluation.ratings_file.empty())
            evaluated = load_ratings(config.evaluation.ratings_file, universe, corpus);

        Eigen::VectorXd predictions;
        bool have_predictions = false;
        if (config.evaluation.fit_model && !evaluated.pairs.empty()) {
            const FeatureBuilder fb = build_pair_features(universe, corpus, cache, config);
            if (static_cast<int>(evaluated.pairs.size()) >= config.evaluation.model_folds &&
                fb.matrix.cols() > 0) {
                Eigen::MatrixXd x(evaluated.pairs.size(), fb.matrix.cols());
                Eigen::VectorXd y(evaluated.pairs.size());
                for (std::size_t i = 0; i < evaluated.pairs.size(); ++i) {
                    x.row(i) = fb.matrix.row(evaluated.pairs[i].pair_index);
                    y[i] = evaluated.pairs[i].mean_rating;
                }
                const QualityModel model = fit_quality_model(
                    x, fb.labels, y, config.evaluation.model_folds, config.seed);
                predictions = model.predict_all(fb.matrix);
                have_predictions = true;

                std::string mtext;
                csv::write_row(mtext, {"feature", "coefficient"});
                csv::write_row(mtext, {"(intercept)", csv::format_double(model.intercept)});
                for (std::size_t f = 0; f < model.feature_labels.size(); ++f)
                    csv::write_row(mtext, {model.feature_labels[f],
                                           csv::format_double(model.coefficients[f])});
                atomic_write(out_dir / "quality_model.csv", mtext);
                result.files.push_back("quality_model.csv");
            }
        }

        EvaluationOptions options;
        options.inclusion_reps = config.evaluation.inclusion_reps;
        options.bootstrap_reps = config.evaluation.bootstrap_reps;
        options.raw_noise_sd = config.evaluation.raw_noise_sd;
        options.residual_noise_sd = config.evaluation.residual_noise_sd;
        options.seed = config.seed;
        const std::vector<QualityEstimate> estimates = evaluate_procedures(
            universe, config.evaluation.design, evaluated,
            have_predictions ? &predictions : nullptr, options);

        std::string qtext;
        csv::write_row(qtext, {"procedure_id", "n_pairs", "n_sampled", "Q_samp", "Q_adj",
                               "Q_pred", "se_samp", "se_adj"});
        auto opt = [](const std::optional<double>& v) {
            return v ? csv::format_double(*v) : std::string();
        };
        for (const auto& e : estimates)
            csv::write_row(qtext, {e.procedure_id, std::to_string(e.n_pairs),
                                   std::to_string(e.n_sampled), opt(e.q_samp), opt(e.q_adj),
                                   opt(e.q_pred), opt(e.se_samp), opt(e.se_adj)});
        atomic_write(out_dir / "quality_report.csv", qtext);
        result.files.push_back("quality_report.csv");
    }

    // machine-readable run manifest with content hashes
    json manifest;
    manifest["version"] = kVersion;
    manifest["seed"] = config.seed;
    manifest["config_hash"] = fnv1a64_hex(config_to_json(config).dump());
    std::sort(result.files.begin(), result.files.end());
    json files = json::array();
    for (const auto& name : result.files) {
        files.push_back(
            {{"path", name}, {"hash", fnv1a64_hex(read_file(out_dir / name))}});
    }
    manifest["files"] = files;
    json summary = json::array();
    for (const auto& proc : result.procedures)
        summary.push_back({{"id", proc.spec.id},
                           {"n_pairs", proc.pairs.size()},
                           {"caliper", proc.caliper.value}});
    manifest["procedures"] = summary;
    atomic_write(out_dir / "run_manifest.json", manifest.dump(2) + "\n");
    result.files.push_back("run_manifest.json");
    return result;
}

std::vector<std::string> grid_presets(bool with_embeddings) {
    std::vector<std::string> presets;
    for (const auto& p : tdm_presets()) presets.push_back(p.name);
    for (int k : {10, 30, 50, 100})
        for (const char* form : {"S1-", "S2-", "S3-"})
            presets.push_back(form + std::to_string(k));
    if (with_embeddings)
        for (int w = 1; w <= 5; ++w) presets.push_back("W" + std::to_string(w));
    return presets;
}

std::vector<ProcedureSpec> grid_procedures(const std::vector<std::string>& presets) {
    std::vector<ProcedureSpec> procedures;
    const std::vector<std::string> metrics = {"euclidean", "cosine", "mahalanobis",
                                              "propensity", "cem"};
    for (const auto& preset : presets)
        for (const auto& metric : metrics) {
            ProcedureSpec spec;
            spec.representation = preset;
            spec.metric = metric;
            spec.procedure = "caliper";
            spec.caliper = CaliperRule::quantile(0.001);
            spec.cem_bins = 2;
            spec.id = preset + "-" + metric;
            procedures.push_back(std::move(spec));
        }
    return procedures;
}

std::pair<Vocabulary, Vocabulary> split_outcome_vocabulary(const Corpus& corpus,
                                                           const std::string& covariate_term_file,
                                                           const std::string& outcome_term_file,
                                                           const TokenRules& rules) {
    auto load_terms = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IngestError("cannot open term file: " + path);
        std::set<std::string> terms;
        std::string word;
        while (in >> word) terms.insert(word);
        return terms;
    };
    const std::set<std::string> covariate_terms = load_terms(covariate_term_file);
    const std::set<std::string> outcome_terms = load_terms(outcome_term_file);
    for (const auto& t : covariate_terms)
        if (outcome_terms.count(t)) throw OverlapError("term in both vocabularies: " + t);

    const Vocabulary full = build_vocabulary(corpus, rules, 1, corpus.size());
    auto restrict = [&](const std::set<std::string>& keep) {
        Vocabulary v;
        v.n_docs = full.n_docs;
        v.min_df = full.min_df;
        v.max_df = full.max_df;
        for (int t = 0; t < full.size(); ++t)
            if (keep.count(full.terms[t])) {
                v.terms.push_back(full.terms[t]);
                v.doc_frequency.push_back(full.doc_frequency[t]);
            }
        if (v.terms.empty()) throw EmptyVocabulary("no corpus terms match the term file");
        v.build_index();
        return v;
    };
    return {restrict(covariate_terms), restrict(outcome_terms)};
}

}  // namespace textmatch
