#include "textmatch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "textmatch/csv.hpp"
#include "textmatch/errors.hpp"

namespace textmatch {

namespace {

std::uint64_t pair_key(int treated_doc, int control_doc) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(treated_doc)) << 32) |
           static_cast<std::uint32_t>(control_doc);
}

}  // namespace

int PairUniverse::find_pair(int treated_doc, int control_doc) const {
    auto it = index_.find(pair_key(treated_doc, control_doc));
    return it == index_.end() ? -1 : it->second;
}

void PairUniverse::rebuild_index() {
    index_.clear();
    for (int i = 0; i < size(); ++i) index_.emplace(pair_key(pairs[i].first, pairs[i].second), i);
}

PairUniverse make_universe(const std::vector<MatchedPairSet>& sets) {
    PairUniverse u;
    std::map<std::pair<int, int>, int> freq;
    for (const auto& set : sets)
        for (const auto& p : set.pairs) ++freq[{p.treated_doc, p.control_doc}];
    u.pairs.reserve(freq.size());
    u.frequency.reserve(freq.size());
    for (const auto& [key, f] : freq) {
        u.pairs.push_back(key);
        u.frequency.push_back(f);
    }
    u.rebuild_index();
    u.procedure_pairs.resize(sets.size());
    for (std::size_t j = 0; j < sets.size(); ++j) {
        u.procedure_ids.push_back(sets[j].procedure_id);
        auto& r = u.procedure_pairs[j];
        r.reserve(sets[j].pairs.size());
        for (const auto& p : sets[j].pairs) r.push_back(u.find_pair(p.treated_doc, p.control_doc));
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
    }
    return u;
}

namespace {

// sequential weighted sampling without replacement
void weighted_draw(const std::vector<int>& candidates, std::vector<double> weights, int count,
                   Rng& rng, std::vector<char>& selected) {
    const int n = static_cast<int>(candidates.size());
    if (count >= n) {
        for (int i : candidates) selected[i] = 1;
        return;
    }
    std::vector<char> taken(n, 0);
    double total = 0.0;
    for (double w : weights) total += w;
    for (int draw = 0; draw < count; ++draw) {
        if (total <= 0.0) break;
        double u = rng.uniform01() * total;
        int pick = -1;
        for (int i = 0; i < n; ++i) {
            if (taken[i]) continue;
            u -= weights[i];
            if (u <= 0.0) {
                pick = i;
                break;
            }
        }
        if (pick < 0) {  // numerical tail: take the last untaken
            for (int i = n - 1; i >= 0; --i)
                if (!taken[i]) {
                    pick = i;
                    break;
                }
        }
        if (pick < 0) break;
        taken[pick] = 1;
        total -= weights[pick];
        weights[pick] = 0.0;
        selected[candidates[pick]] = 1;
    }
}

int tier_of(double predicted) {  // quality tiers 0..8+ on the 0-10 scale
    int t = static_cast<int>(std::floor(predicted));
    return std::clamp(t, 0, 8);
}

}  // namespace

namespace {

// Candidate pools and weights only depend on the universe, so they are
// precomputed once and reused across simulation replicates.
struct SamplePlan {
    struct Pool {
        std::vector<int> candidates;
        std::vector<double> weights;
        int count = 0;
    };
    std::vector<Pool> pools;
    std::vector<int> fixed;
    int universe_size = 0;
    std::vector<std::vector<int>> equal_probability_groups;  // pooled tier groups
};

SamplePlan make_sample_plan(const PairUniverse& universe, const DesignSpec& spec) {
    SamplePlan plan;
    plan.universe_size = universe.size();
    const bool have_pred =
        static_cast<int>(universe.predicted_quality.size()) == universe.size();

    for (const DesignStage& stage : spec.stages) {
        switch (stage.kind) {
            case StageKind::ProcedureQuota: {
                for (const auto& r : universe.procedure_pairs) {
                    if (r.empty()) continue;
                    SamplePlan::Pool pool;
                    pool.candidates = r;
                    pool.weights.assign(r.size(), 1.0);
                    if (stage.weight_by_prediction && have_pred)
                        for (std::size_t i = 0; i < r.size(); ++i)
                            pool.weights[i] = std::max(universe.predicted_quality[r[i]], 1e-3);
                    pool.count = stage.count;
                    plan.pools.push_back(std::move(pool));
                }
                break;
            }
            case StageKind::FixedPairs: {
                for (int i : stage.fixed_pairs) {
                    if (i < 0 || i >= universe.size())
                        throw ConfigError("fixed pair index out of range");
                    plan.fixed.push_back(i);
                }
                break;
            }
            case StageKind::TierDraws: {
                std::map<int, std::vector<int>> tiers;
                for (int i = 0; i < universe.size(); ++i)
                    if (universe.frequency[i] == 0)
                        tiers[have_pred ? tier_of(universe.predicted_quality[i]) : 0]
                            .push_back(i);
                for (auto& [tier, members] : tiers) {
                    SamplePlan::Pool pool;
                    pool.weights.assign(members.size(), 1.0);
                    pool.candidates = members;
                    pool.count = stage.count;
                    plan.pools.push_back(std::move(pool));
                    plan.equal_probability_groups.push_back(
                        plan.pools.back().candidates);
                }
                break;
            }
            case StageKind::PilotWeighted: {
                SamplePlan::Pool pool;
                for (int i = 0; i < universe.size(); ++i) {
                    if (universe.frequency[i] < 1) continue;
                    pool.candidates.push_back(i);
                    pool.weights.push_back(universe.frequency[i] == 1
                                               ? stage.singleton_weight
                                               : static_cast<double>(universe.frequency[i]));
                }
                pool.count = stage.count;
                plan.pools.push_back(std::move(pool));
                break;
            }
        }
    }
    return plan;
}

void draw_into(const SamplePlan& plan, Rng& rng, std::vector<char>& selected,
               std::vector<double>& scratch) {
    std::fill(selected.begin(), selected.end(), 0);
    for (const auto& pool : plan.pools) {
        scratch = pool.weights;
        weighted_draw(pool.candidates, std::move(scratch), pool.count, rng, selected);
        scratch.clear();
    }
    for (int i : plan.fixed) selected[i] = 1;
}

}  // namespace

std::vector<int> draw_sample(const PairUniverse& universe, const DesignSpec& spec, Rng& rng) {
    const SamplePlan plan = make_sample_plan(universe, spec);
    std::vector<char> selected(universe.size(), 0);
    std::vector<double> scratch;
    draw_into(plan, rng, selected, scratch);
    std::vector<int> sample;
    for (int i = 0; i < universe.size(); ++i)
        if (selected[i]) sample.push_back(i);
    return sample;
}

SamplingDesign simulate_inclusion(const PairUniverse& universe, const DesignSpec& spec,
                                  int n_reps, std::uint64_t seed) {
    if (n_reps < 1) throw ConfigError("simulate_inclusion requires n_reps >= 1");
    SamplingDesign design;
    design.n_reps = n_reps;
    const SamplePlan plan = make_sample_plan(universe, spec);
    std::vector<std::int64_t> counts(universe.size(), 0);
    std::vector<char> selected(universe.size(), 0);
    std::vector<double> scratch;
    for (int rep = 0; rep < n_reps; ++rep) {
        Rng rng(replicate_seed(seed, static_cast<std::uint64_t>(rep)));
        draw_into(plan, rng, selected, scratch);
        for (int i = 0; i < universe.size(); ++i) counts[i] += selected[i];
    }
    design.pi.resize(universe.size());
    for (int i = 0; i < universe.size(); ++i)
        design.pi[i] = static_cast<double>(counts[i]) / n_reps;

    if (spec.pool_equal_probability) {
        // pairs in the same never-matched quality tier share a true selection
        // probability; averaging their estimates removes Monte Carlo noise
        for (const auto& members : plan.equal_probability_groups) {
            double total = 0.0;
            for (int i : members) total += design.pi[i];
            const double avg = total / static_cast<double>(members.size());
            for (int i : members) design.pi[i] = avg;
        }
    }

    design.weight.resize(universe.size());
    design.never_selected = 0;
    for (int i = 0; i < universe.size(); ++i) {
        if (design.pi[i] > 0.0) {
            design.weight[i] = 1.0 / design.pi[i];
        } else {
            design.weight[i] = 0.0;
            ++design.never_selected;
        }
    }
    return design;
}

void EvaluatedSet::add(int pair_index, double mean_rating, int m) {
    by_pair.emplace(pair_index, static_cast<int>(pairs.size()));
    pairs.push_back({pair_index, mean_rating, m});
}

const EvaluatedPair* EvaluatedSet::find(int pair_index) const {
    auto it = by_pair.find(pair_index);
    return it == by_pair.end() ? nullptr : &pairs[it->second];
}

EvaluatedSet load_ratings(const std::string& path, const PairUniverse& universe,
                          const Corpus& corpus) {
    const csv::Table table = csv::read_file(path);
    const int pair_col = table.column("pair_id");
    const int score_col = table.column("score");
    const int excluded_col = table.column("excluded");
    if (pair_col < 0 || score_col < 0)
        throw FormatError("ratings CSV needs pair_id and score columns");

    std::map<int, std::pair<double, int>> acc;  // universe index -> (sum, count)
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (excluded_col >= 0 && excluded_col < static_cast<int>(row.size())) {
            const std::string& e = row[excluded_col];
            if (e == "1" || e == "true") continue;
        }
        const std::string& pid = row[pair_col];
        const std::size_t sep = pid.find(':');
        if (sep == std::string::npos)
            throw FormatError("pair_id must be treated_id:control_id at row " +
                              std::to_string(r + 1));
        const int t = corpus.index_of(pid.substr(0, sep));
        const int c = corpus.index_of(pid.substr(sep + 1));
        if (t < 0 || c < 0)
            throw DataError("ratings reference unknown document at row " + std::to_string(r + 1));
        const int idx = universe.find_pair(t, c);
        if (idx < 0)
            throw DataError("rated pair not in the sampling frame at row " +
                            std::to_string(r + 1));
        double score;
        try {
            score = std::stod(row[score_col]);
        } catch (const std::exception&) {
            throw FormatError("bad score at row " + std::to_string(r + 1));
        }
        if (score < 0.0 || score > 10.0)
            throw DataError("score outside [0,10] at row " + std::to_string(r + 1));
        auto& [sum, count] = acc[idx];
        sum += score;
        ++count;
    }
    EvaluatedSet set;
    for (const auto& [idx, sc] : acc) set.add(idx, sc.first / sc.second, sc.second);
    return set;
}

QualityEstimate hajek_quality(const PairUniverse& universe, int procedure,
                              const EvaluatedSet& evaluated, const SamplingDesign& design) {
    QualityEstimate est;
    est.procedure_id = universe.procedure_ids[procedure];
    const auto& r = universe.procedure_pairs[procedure];
    est.n_pairs = static_cast<int>(r.size());
    if (r.empty()) {  // zero identified pairs report quality 0
        est.q_samp = 0.0;
        return est;
    }
    double num = 0.0, denom = 0.0;
    for (int i : r) {
        const EvaluatedPair* e = evaluated.find(i);
        if (!e) continue;
        if (!(design.pi[i] > 0.0))
            throw DesignInconsistency("sampled pair has estimated inclusion probability 0");
        const double w = 1.0 / design.pi[i];
        num += w * e->mean_rating;
        denom += w;
        ++est.n_sampled;
    }
    est.z_weight = denom;
    if (est.n_sampled == 0) {
        est.insufficient_sample = true;
        return est;
    }
    est.q_samp = std::clamp(num / denom, 0.0, 10.0);
    return est;
}

QualityEstimate adjusted_quality(const PairUniverse& universe, int procedure,
                                 const Eigen::VectorXd& predictions,
                                 const EvaluatedSet& evaluated, const SamplingDesign& design) {
    QualityEstimate est;
    est.procedure_id = universe.procedure_ids[procedure];
    const auto& r = universe.procedure_pairs[procedure];
    est.n_pairs = static_cast<int>(r.size());
    if (r.empty()) {
        est.q_adj = 0.0;
        est.q_pred = 0.0;
        return est;
    }
    if (predictions.size() != universe.size())
        throw ShapeError("prediction vector does not cover the pair universe");

    double pred_mean = 0.0;
    for (int i : r) {
        if (!std::isfinite(predictions[i]))
            throw MissingFeature("missing prediction for pair " + std::to_string(i));
        pred_mean += predictions[i];
    }
    pred_mean /= static_cast<double>(r.size());
    est.q_pred = std::clamp(pred_mean, 0.0, 10.0);

    double resid = 0.0, denom = 0.0;
    for (int i : r) {
        const EvaluatedPair* e = evaluated.find(i);
        if (!e) continue;
        if (!(design.pi[i] > 0.0))
            throw DesignInconsistency("sampled pair has estimated inclusion probability 0");
        const double w = 1.0 / design.pi[i];
        resid += w * (e->mean_rating - predictions[i]);
        denom += w;
        ++est.n_sampled;
    }
    est.z_weight = denom;
    if (est.n_sampled == 0) {
        est.extrapolated = true;  // Q_pred only, no survey correction possible
        est.insufficient_sample = true;
        return est;
    }
    est.q_adj = std::clamp(pred_mean + resid / denom, 0.0, 10.0);
    return est;
}

double bootstrap_se(BootstrapTarget target, const PairUniverse& universe, int procedure,
                    const DesignSpec& spec, const SamplingDesign& design,
                    const Eigen::VectorXd* predictions, double center, double noise_sd,
                    int n_boot, std::uint64_t seed) {
    if (n_boot < 2) throw ConfigError("bootstrap requires n_boot >= 2");
    if (noise_sd < 0.0) throw ConfigError("noise_sd must be nonnegative");
    const auto& r = universe.procedure_pairs[procedure];
    if (r.empty()) return 0.0;
    if (target == BootstrapTarget::Adjusted &&
        (!predictions || predictions->size() != universe.size()))
        throw ShapeError("adjusted bootstrap needs predictions over the universe");

    double pred_mean = 0.0;
    if (target == BootstrapTarget::Adjusted) {
        for (int i : r) pred_mean += (*predictions)[i];
        pred_mean /= static_cast<double>(r.size());
    }

    const SamplePlan plan = make_sample_plan(universe, spec);
    std::vector<char> selected(universe.size(), 0);
    std::vector<double> scratch;
    std::vector<double> replicates;
    replicates.reserve(n_boot);
    for (int b = 0; b < n_boot; ++b) {
        Rng rng(replicate_seed(seed, static_cast<std::uint64_t>(b)));
        draw_into(plan, rng, selected, scratch);
        double num = 0.0, denom = 0.0;
        for (int i : r) {
            if (!selected[i]) continue;
            if (!(design.pi[i] > 0.0)) continue;  // outside the estimated frame
            const double w = 1.0 / design.pi[i];
            const double noise = noise_sd * rng.normal();
            if (target == BootstrapTarget::Raw)
                num += w * (center + noise);
            else
                num += w * noise;  // synthetic residual around the prediction
            denom += w;
        }
        if (denom <= 0.0) continue;  // replicate sampled none of this procedure's pairs
        replicates.push_back(target == BootstrapTarget::Raw ? num / denom
                                                            : pred_mean + num / denom);
    }
    if (replicates.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : replicates) mean += v;
    mean /= static_cast<double>(replicates.size());
    double ss = 0.0;
    for (double v : replicates) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(replicates.size() - 1));
}

void write_quality_csv(const std::vector<QualityEstimate>& estimates, const std::string& path) {
    std::string out;
    csv::write_row(out, {"procedure_id", "n_pairs", "n_sampled", "Q_samp", "Q_adj", "Q_pred",
                         "se_samp", "se_adj"});
    auto opt = [](const std::optional<double>& v) {
        return v ? csv::format_double(*v) : std::string();
    };
    for (const auto& e : estimates)
        csv::write_row(out, {e.procedure_id, std::to_string(e.n_pairs),
                             std::to_string(e.n_sampled), opt(e.q_samp), opt(e.q_adj),
                             opt(e.q_pred), opt(e.se_samp), opt(e.se_adj)});
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << out;
}

std::vector<QualityEstimate> evaluate_procedures(const PairUniverse& universe,
                                                 const DesignSpec& spec,
                                                 const EvaluatedSet& evaluated,
                                                 const Eigen::VectorXd* predictions,
                                                 const EvaluationOptions& options) {
    const SamplingDesign design =
        simulate_inclusion(universe, spec, options.inclusion_reps, options.seed);
    std::vector<QualityEstimate> estimates;
    for (std::size_t j = 0; j < universe.procedure_ids.size(); ++j) {
        QualityEstimate est = hajek_quality(universe, static_cast<int>(j), evaluated, design);
        if (predictions) {
            const QualityEstimate adj = adjusted_quality(universe, static_cast<int>(j),
                                                         *predictions, evaluated, design);
            est.q_adj = adj.q_adj;
            est.q_pred = adj.q_pred;
            est.extrapolated = adj.extrapolated;
        }
        if (est.n_pairs > 0 && est.n_sampled > 0) {
            est.se_samp = bootstrap_se(BootstrapTarget::Raw, universe, static_cast<int>(j),
                                       spec, design, nullptr, est.q_samp.value_or(0.0),
                                       options.raw_noise_sd, options.bootstrap_reps,
                                       splitmix64(options.seed ^ (0x5Eull + j)));
            if (predictions)
                est.se_adj = bootstrap_se(BootstrapTarget::Adjusted, universe,
                                          static_cast<int>(j), spec, design, predictions, 0.0,
                                          options.residual_noise_sd, options.bootstrap_reps,
                                          splitmix64(options.seed ^ (0xADull + j)));
        }
        estimates.push_back(std::move(est));
    }
    return estimates;
}

RandTestResult randomization_test(const std::vector<double>& outcome_dem,
                                  const std::vector<double>& outcome_rep,
                                  const std::vector<std::string>& sources,
                                  const std::map<std::string, std::vector<int>>& matched_sample,
                                  int sample_size, int n_iter, std::uint64_t seed) {
    const int n = static_cast<int>(sources.size());
    if (static_cast<int>(outcome_dem.size()) != n || static_cast<int>(outcome_rep.size()) != n)
        throw ShapeError("outcome vectors do not match source labels");
    if (n_iter < 1) throw ConfigError("randomization test requires n_iter >= 1");

    std::map<std::string, std::vector<int>> by_source;
    for (int i = 0; i < n; ++i) by_source[sources[i]].push_back(i);
    for (const auto& [source, docs] : by_source)
        if (static_cast<int>(docs.size()) < sample_size)
            throw SizeError("source " + source + " has " + std::to_string(docs.size()) +
                            " documents, fewer than sample size " + std::to_string(sample_size));

    auto mean_over = [&](const std::vector<int>& docs, const std::vector<double>& y) {
        double s = 0.0;
        for (int i : docs) s += y[i];
        return s / static_cast<double>(docs.size());
    };

    const int n_sources = static_cast<int>(by_source.size());
    std::map<std::string, std::pair<double, double>> full_means;
    for (const auto& [source, docs] : by_source)
        full_means[source] = {mean_over(docs, outcome_dem), mean_over(docs, outcome_rep)};

    auto statistic = [&](const std::map<std::string, std::vector<int>>& samples) {
        double t = 0.0;
        for (const auto& [source, docs] : samples) {
            auto it = full_means.find(source);
            if (it == full_means.end())
                throw DataError("matched sample references unknown source " + source);
            if (docs.empty()) throw SizeError("empty matched sample for source " + source);
            t += std::abs(it->second.first - mean_over(docs, outcome_dem)) +
                 std::abs(it->second.second - mean_over(docs, outcome_rep));
        }
        return t / static_cast<double>(n_sources);
    };

    RandTestResult result;
    result.t_obs = statistic(matched_sample);
    result.t_null.reserve(n_iter);
    int exceed = 0;
    for (int iter = 0; iter < n_iter; ++iter) {
        Rng rng(replicate_seed(seed, static_cast<std::uint64_t>(iter)));
        std::map<std::string, std::vector<int>> null_sample;
        for (const auto& [source, docs] : by_source) {
            std::vector<int> draw =
                rng.sample_without_replacement(static_cast<int>(docs.size()), sample_size);
            std::vector<int>& out = null_sample[source];
            out.reserve(draw.size());
            for (int k : draw) out.push_back(docs[k]);
        }
        const double t = statistic(null_sample);
        result.t_null.push_back(t);
        if (t >= result.t_obs) ++exceed;
    }
    result.p = (1.0 + exceed) / (1.0 + static_cast<double>(n_iter));
    return result;
}

}  // namespace textmatch
