#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "textmatch/corpus.hpp"
#include "textmatch/distance.hpp"
#include "textmatch/eval.hpp"
#include "textmatch/lda.hpp"
#include "textmatch/represent.hpp"

namespace textmatch {

struct ProcedureSpec {
    std::string id;
    std::string representation;  // T1..T9, S1-10..S3-100, W1..W5
    std::string metric;          // euclidean | cosine | mahalanobis | propensity | cem
    CaliperRule caliper = CaliperRule::quantile(0.001);
    std::string procedure = "caliper";  // caliper | optimal | within_ps_calipers
    int cem_bins = 2;
    double ps_caliper_sd = 0.1;
    std::vector<std::string> ps_covariates;  // propensity source for within_ps_calipers
    double mahalanobis_ridge = -1.0;
};

struct EvaluationSpec {
    bool enabled = false;
    std::string ratings_file;
    std::string predictions_file;  // optional prior q-hat per pair
    DesignSpec design;
    int inclusion_reps = 100000;
    int unmatched_pool = 0;  // never-matched pairs added to the frame
    bool fit_model = false;
    int model_folds = 10;
    int bootstrap_reps = 500;
    double raw_noise_sd = 2.37;
    double residual_noise_sd = 1.6;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    int jobs = 0;  // <= 0: hardware concurrency
    std::string output_dir = "out";
    std::string corpus_path;
    CorpusFormat corpus_format = CorpusFormat::CSV;
    FieldMap fields;
    TokenRules tokenizer;
    int topic_iterations = 400;
    int topic_average_last = 100;
    double topic_alpha = 0.0;  // 0 selects the 50/K default
    double topic_beta = 0.01;
    double score_ridge = 1.0;  // SR / propensity-metric ridge
    double ps_ridge = 1.0;     // within_ps_calipers propensity ridge
    std::map<std::string, std::string> embedding_files;  // preset -> path
    std::vector<ProcedureSpec> procedures;
    std::vector<std::string> balance_covariates;
    EvaluationSpec evaluation;
};

PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);
nlohmann::json config_to_json(const PipelineConfig& config);

DesignSpec design_from_json(const nlohmann::json& j);

// Caches fitted representations and models so the grid shares work.
class RepresentationCache {
public:
    RepresentationCache(const Corpus& corpus, const PipelineConfig& config);

    const Representation& get(const std::string& preset);
    const PropensityModel& propensity_for(const std::string& preset);  // metric=propensity
    std::vector<std::string> known_presets() const;

private:
    const Corpus& corpus_;
    const PipelineConfig& config_;
    std::map<std::string, Representation> reps_;
    std::map<std::string, PropensityModel> propensity_;
    std::map<int, TopicModel> topic_models_;
    TermDocumentMatrix base_tf_;  // bounded TF counts for the topic models
    Vocabulary base_vocab_;
    bool base_built_ = false;

    const TopicModel& topic_model(int k);
    void build_base();
};

struct ProcedureResult {
    ProcedureSpec spec;
    MatchedPairSet pairs;
    Caliper caliper;
    std::string error;  // nonempty when the procedure failed
};

ProcedureResult run_procedure(const ProcedureSpec& spec, const Corpus& corpus,
                              RepresentationCache& cache, const PipelineConfig& config);

struct PipelineResult {
    std::string output_dir;
    std::vector<ProcedureResult> procedures;
    std::vector<std::string> files;  // written artifacts, relative paths
};

PipelineResult run_pipeline(const PipelineConfig& config);

// The paper-scale evaluation grid: every representation preset crossed with
// the five distance metrics (cem via 2 bins), caliper matching at the 0.001
// distance quantile. 26 representations x 5 metrics = 130 procedures when all
// embedding presets are configured.
std::vector<ProcedureSpec> grid_procedures(const std::vector<std::string>& presets);
std::vector<std::string> grid_presets(bool with_embeddings);

// Emits two vocabularies that never share a term, so matching covariates and
// text-derived outcomes stay separated.
std::pair<Vocabulary, Vocabulary> split_outcome_vocabulary(const Corpus& corpus,
                                                           const std::string& covariate_term_file,
                                                           const std::string& outcome_term_file,
                                                           const TokenRules& rules);

}  // namespace textmatch
