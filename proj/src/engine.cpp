#include "engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rng.hpp"

namespace happymap {

using nlohmann::json;

nlohmann::json RunReport::to_json() const {
    json j;
    j["status"] = status_string();
    j["final_max_violation"] = final_max_violation;
    j["resolved_eta"] = resolved_eta;
    j["resolved_T"] = resolved_T;
    j["progress_bound"] = progress_bound;
    j["potential_upper"] = potential_upper;
    j["potential_lower"] = potential_lower;
    if (fold_size_used > 0) j["fold_size"] = fold_size_used;
    j["warnings"] = warnings;
    json iters = json::array();
    for (const auto& r : iterations) {
        json ji;
        ji["iteration"] = r.iteration;
        ji["member_index"] = r.member_index;
        ji["auditor_id"] = r.auditor_id;
        ji["violation"] = r.violation;
        ji["potential_before"] = r.potential_before;
        ji["potential_after"] = r.potential_after;
        iters.push_back(ji);
    }
    j["iterations"] = iters;
    return j;
}

std::string RunReport::to_csv() const {
    std::ostringstream os;
    os << "iteration,auditor_id,violation,potential_before,potential_after\n";
    for (const auto& r : iterations) {
        os << r.iteration << ",\"" << r.auditor_id << "\"," << format_real(r.violation) << ","
           << format_real(r.potential_before) << "," << format_real(r.potential_after) << "\n";
    }
    return os.str();
}

Engine::Engine(const FitConfig& config, const Dataset& ds, AuditorFamily family,
               const Mapping& mapping, InitialPredictor f0, ProjectionInterval proj,
               std::vector<std::size_t> rows)
    : ds_(&ds), family_(std::move(family)), mapping_(mapping), f0_(std::move(f0)), proj_(proj),
      config_(config) {
    proj_.validate();
    if (!(config.alpha > 0.0)) fail(ErrorCode::InvalidArgument, "alpha must be positive");
    if (config.eta && !(*config.eta > 0.0)) fail(ErrorCode::InvalidArgument, "eta must be positive");
    if (config.max_iters && *config.max_iters < 0)
        fail(ErrorCode::InvalidArgument, "max_iters must be nonnegative");
    if (mapping.id != MappingId::ParityExpected && !ds.has_labels())
        fail(ErrorCode::InvalidArgument, "mapping requires labels");
    f0_.validate(ds.dim);

    if (rows.empty()) {
        rows.resize(ds.rows);
        for (std::size_t i = 0; i < ds.rows; ++i) rows[i] = i;
    }
    const bool sample_mode = config.mode != FitMode::Population;
    if (config.mode == FitMode::FreshFolds) {
        // Seeded shuffle so consecutive fold windows are exchangeable.
        for (std::size_t i = rows.size(); i > 1; --i) {
            const std::size_t j = rng::key(config.seed, i - 1, 0, 0xF01D) % i;
            std::swap(rows[i - 1], rows[j]);
        }
    }

    compiled_ = std::make_unique<CompiledFamily>(family_, ds, std::move(rows));
    const auto& wr = compiled_->rows();
    const std::size_t n = wr.size();

    values_.resize(n);
    labels_.resize(n);
    double max_abs_label = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = wr[i];
        values_[i] = proj_.clamp(f0_.eval(RowView{ds.x(r), ds.g(r)}));
        labels_[i] = ds.has_labels() ? ds.y(r) : 0.0;
        if (!std::isfinite(values_[i]))
            fail(ErrorCode::Numeric, "initial predictor produced a non-finite value");
        if (!std::isfinite(labels_[i]))
            fail(ErrorCode::Numeric, "labels must be finite on the working rows");
        max_abs_label = std::max(max_abs_label, std::fabs(labels_[i]));
    }
    s_.resize(n);
    refresh_s();

    const double kappa = mapping_.kappa();
    const double b = family_.b_bound;
    eta_ = config.eta ? *config.eta
                      : (sample_mode ? config.alpha / (4.0 * kappa * b)
                                     : config.alpha / (2.0 * kappa * b));
    threshold_ = sample_mode ? 0.75 * config.alpha : config.alpha;

    double cu = 0.0;
    for (std::size_t i = 0; i < n; ++i) cu += mapping_.potential(values_[i], labels_[i]);
    cu /= static_cast<double>(n);
    const double cl = mapping_.potential_lower(max_abs_label);
    report_.potential_upper = cu;
    report_.potential_lower = cl;
    report_.progress_bound = sample_mode
                                 ? config.alpha * config.alpha / (16.0 * kappa * b)
                                 : config.alpha * config.alpha / (4.0 * kappa * b);
    long long t_auto = 1;
    if (cu > cl) t_auto = static_cast<long long>(std::ceil((cu - cl) / report_.progress_bound));
    t_auto = std::max<long long>(t_auto, 1);
    T_ = config.max_iters ? *config.max_iters : t_auto;

    if (config.mode == FitMode::FreshFolds) {
        fold_size_ = config.fold_size
                         ? *config.fold_size
                         : static_cast<std::size_t>(std::max(
                               200.0, std::ceil((family_.dim_estimate + std::log(20.0)) * 16.0 /
                                                (config.alpha * config.alpha))));
        if (fold_size_ == 0) fail(ErrorCode::InvalidArgument, "fold size must be positive");
        const long long fold_budget = static_cast<long long>(n / fold_size_) - 1;
        if (config.max_iters) {
            if (n < (static_cast<std::size_t>(T_) + 1) * fold_size_)
                fail(ErrorCode::InvalidArgument,
                     "fresh-folds requires n >= (T+1)*m; have n=" + std::to_string(n) +
                         ", T=" + std::to_string(T_) + ", m=" + std::to_string(fold_size_));
        } else {
            if (fold_budget < 1)
                fail(ErrorCode::InvalidArgument,
                     "fresh-folds: not enough rows for a single fold of size " +
                         std::to_string(fold_size_));
            if (t_auto > fold_budget) {
                report_.warnings.push_back("fresh-folds: iteration budget capped at " +
                                           std::to_string(fold_budget) +
                                           " by fold availability (auto T was " +
                                           std::to_string(t_auto) + ")");
                T_ = fold_budget;
            }
        }
        report_.fold_size_used = fold_size_;
    }
    report_.resolved_eta = eta_;
    report_.resolved_T = T_;
}

void Engine::refresh_s() {
    for (std::size_t i = 0; i < s_.size(); ++i) s_[i] = mapping_.s(values_[i], labels_[i]);
}

std::pair<std::size_t, std::size_t> Engine::window(long long t) const {
    if (config_.mode == FitMode::FreshFolds) {
        const std::size_t begin = static_cast<std::size_t>(t) * fold_size_;
        return {begin, begin + fold_size_};
    }
    return {0, values_.size()};
}

double Engine::potential() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i)
        acc += mapping_.potential(values_[i], labels_[i]);
    return acc / static_cast<double>(values_.size());
}

StepOutcome Engine::step() {
    const auto [begin, end] = window(iteration_);
    if (end > values_.size()) fail(ErrorCode::InvalidArgument, "step: fold budget exhausted");
    WeakLearnResult found = compiled_->weak_learn(values_, s_, begin, end);

    StepOutcome out;
    out.auditor = found.best;
    out.member_index = found.member_index;
    out.violation = found.violation;
    if (!(found.violation > threshold_)) return out;

    // The previous step's fresh recomputation doubles as this step's before.
    const double pot_before = report_.iterations.empty()
                                  ? potential()
                                  : report_.iterations.back().potential_after;
    std::vector<double> c;
    compiled_->member_values(found.member_index, found.best, values_, c);
    for (std::size_t i = 0; i < values_.size(); ++i) {
        values_[i] = proj_.clamp(values_[i] - eta_ * c[i]);
        if (!std::isfinite(values_[i]))
            fail(ErrorCode::Numeric, "update produced a non-finite prediction at working row " +
                                         std::to_string(i));
    }
    refresh_s();
    const double pot_after = potential();

    steps_.push_back(ChainStep{found.best, eta_});
    report_.iterations.push_back(IterationRecord{iteration_, found.member_index,
                                                 found.best.display(), found.violation, pot_before,
                                                 pot_after});
    ++iteration_;
    out.updated = true;
    return out;
}

FitResult Engine::run() {
    bool converged = false;
    while (iteration_ < T_) {
        const StepOutcome out = step();
        if (!out.updated) {
            converged = true;
            break;
        }
    }
    report_.status = converged ? FitStatus::Converged : FitStatus::BudgetExhausted;

    // Final training-set audit; for symmetric families this equals the weak
    // learner's last violation in population mode.
    const AuditReport final_audit = compiled_->audit(values_, s_, 0, values_.size());
    report_.final_max_violation = final_audit.max_abs_violation;

    FitResult res;
    res.chain.f0 = f0_;
    res.chain.steps = steps_;
    res.chain.proj = proj_;
    res.chain.n_features = ds_->dim;
    res.chain.n_groups = ds_->n_groups;
    res.report = report_;
    res.fitted_values = values_;
    res.working_rows = compiled_->rows();
    return res;
}

FitResult fit(const FitConfig& config, const Dataset& ds, const AuditorFamily& family,
              const Mapping& mapping, const InitialPredictor& f0, const ProjectionInterval& proj,
              std::vector<std::size_t> rows) {
    Engine engine(config, ds, family, mapping, f0, proj, std::move(rows));
    return engine.run();
}

} // namespace happymap
