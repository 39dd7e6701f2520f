#include "synth.hpp"

#include <cmath>

#include "rng.hpp"

namespace happymap {

using nlohmann::json;

namespace {

constexpr uint64_t kStreamFeature = 0;
constexpr uint64_t kStreamLabel = 1;
constexpr uint64_t kStreamMissing = 2;

double dot_with_intercept(const std::vector<double>& theta, std::span<const double> x) {
    const std::size_t d = theta.size() - 1;
    double acc = theta[d];
    for (std::size_t j = 0; j < d && j < x.size(); ++j) acc += theta[j] * x[j];
    return acc;
}

} // namespace

SynthOutput gen_hetero(std::size_t n, std::size_t d, uint64_t seed) {
    if (n < 1 || d < 1) fail(ErrorCode::InvalidArgument, "gen_hetero requires n >= 1 and d >= 1");
    SynthOutput out;
    Dataset& ds = out.data;
    ds.rows = n;
    ds.dim = d;
    ds.features.resize(n * d);
    ds.labels.resize(n);
    for (std::size_t j = 0; j < d; ++j) ds.feature_names.push_back(std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j)
            ds.features[i * d + j] = rng::uniform(seed, i, j, kStreamFeature);
        const double m = ds.features[i * d + 0];
        const double sig = 0.1 + (d >= 2 ? 0.2 * ds.features[i * d + 1] : 0.0);
        const double eps = rng::normal(seed, i, 0, kStreamLabel);
        ds.labels[i] = m + sig * eps;
    }
    ds.validate();

    json o;
    o["kind"] = "hetero";
    o["mean_col"] = 0;
    o["sigma0"] = 0.1;
    o["sigma_slope"] = d >= 2 ? 0.2 : 0.0;
    o["sigma_col"] = d >= 2 ? 1 : -1;
    o["density_bound"] = 1.0 / (0.1 * std::sqrt(2.0 * M_PI));
    out.oracle = o;
    return out;
}

SynthOutput gen_shift(std::size_t n_so, std::size_t n_ta, const std::vector<double>& mu,
                      uint64_t seed, const std::vector<double>& gamma_in, double noise_width) {
    if (n_so < 1) fail(ErrorCode::InvalidArgument, "gen_shift requires n_source >= 1");
    if (mu.empty()) fail(ErrorCode::InvalidArgument, "gen_shift requires a shift vector");
    if (!(noise_width > 0.0 && noise_width < 1.0))
        fail(ErrorCode::InvalidArgument, "gen_shift noise width must lie in (0,1)");
    const std::size_t d = mu.size();
    std::vector<double> gamma = gamma_in;
    if (gamma.empty()) {
        gamma.resize(d + 1);
        for (std::size_t j = 0; j < d; ++j)
            gamma[j] = (j % 2 == 0 ? 1.0 : -1.0) * 0.9 / (1.0 + static_cast<double>(j));
        gamma[d] = 0.2;
    }
    if (gamma.size() != d + 1)
        fail(ErrorCode::InvalidArgument, "gen_shift gamma must have d+1 entries (intercept last)");

    SynthOutput out;
    Dataset& ds = out.data;
    const std::size_t n = n_so + n_ta;
    ds.rows = n;
    ds.dim = d;
    ds.features.resize(n * d);
    ds.labels.resize(n);
    ds.domain.resize(n);
    for (std::size_t j = 0; j < d; ++j) ds.feature_names.push_back(std::to_string(j));
    const double w = noise_width;
    for (std::size_t i = 0; i < n; ++i) {
        const bool target = i >= n_so;
        ds.domain[i] = target ? 1 : 0;
        for (std::size_t j = 0; j < d; ++j) {
            double v = rng::normal(seed, i, j, kStreamFeature);
            if (target) v += mu[j];
            ds.features[i * d + j] = v;
        }
        const double m = w / 2.0 + (1.0 - w) * logistic(dot_with_intercept(gamma, ds.x(i)));
        const double u = rng::uniform(seed, i, 0, kStreamLabel);
        ds.labels[i] = m + (u - 0.5) * w;
    }
    ds.validate();

    double mu_sq = 0.0;
    for (double v : mu) mu_sq += v * v;
    std::vector<double> theta_star(d + 1);
    for (std::size_t j = 0; j < d; ++j) theta_star[j] = -mu[j];
    theta_star[d] = mu_sq / 2.0;

    json o;
    o["kind"] = "shift";
    o["mu"] = mu;
    o["gamma"] = gamma;
    o["noise_width"] = w;
    o["theta_star"] = theta_star;
    o["density_bound"] = 1.0 / w;
    o["prior"] = "uniform"; // P(z=so) = P(z=ta) convention behind theta_star
    out.oracle = o;
    return out;
}

SynthOutput gen_missing(const Dataset& base, const json& base_oracle, const MissingSpec& spec,
                        uint64_t seed) {
    if (base.has_mask()) fail(ErrorCode::InvalidArgument, "gen_missing requires a complete base");
    const std::size_t d = base.dim;
    int mc = spec.masked_col >= 0 ? spec.masked_col : static_cast<int>(d) - 1;
    if (mc < 0 || static_cast<std::size_t>(mc) >= d)
        fail(ErrorCode::InvalidArgument, "gen_missing: masked column out of range");

    if (spec.mechanism == MissingSpec::Mechanism::MCAR) {
        if (!(spec.rho > 0.0 && spec.rho <= 1.0))
            fail(ErrorCode::InvalidArgument, "MCAR completeness probability must lie in (0,1]");
    } else {
        if (spec.theta.size() != d + 1)
            fail(ErrorCode::InvalidArgument, "missingness theta must have d+1 entries");
        if (spec.mechanism == MissingSpec::Mechanism::MAR && spec.theta[static_cast<std::size_t>(mc)] != 0.0)
            fail(ErrorCode::InvalidArgument, "MAR requires a zero coefficient on the masked column");
    }

    SynthOutput out;
    out.aux = base;
    out.has_aux = true;
    Dataset& ds = out.data;
    ds = base;
    ds.miss_mask.assign(ds.rows * d, 1);
    ds.complete.assign(ds.rows, 1);
    bool any = false;
    for (std::size_t i = 0; i < ds.rows; ++i) {
        double p = spec.rho;
        if (spec.mechanism != MissingSpec::Mechanism::MCAR)
            p = logistic(dot_with_intercept(spec.theta, base.x(i)));
        const double u = rng::uniform(seed, i, 0, kStreamMissing);
        if (u >= p) {
            ds.features[i * d + static_cast<std::size_t>(mc)] =
                std::numeric_limits<double>::quiet_NaN();
            ds.miss_mask[i * d + static_cast<std::size_t>(mc)] = 0;
            ds.complete[i] = 0;
            any = true;
        }
    }
    if (!any) {
        ds.miss_mask.clear();
        ds.complete.clear();
    }
    ds.validate();

    json o = base_oracle;
    json m;
    switch (spec.mechanism) {
        case MissingSpec::Mechanism::MCAR:
            m["mechanism"] = "mcar";
            m["rho"] = spec.rho;
            break;
        case MissingSpec::Mechanism::MAR:
            m["mechanism"] = "mar";
            m["theta"] = spec.theta;
            break;
        case MissingSpec::Mechanism::MNAR:
            m["mechanism"] = "mnar";
            m["theta"] = spec.theta;
            break;
    }
    m["masked_col"] = mc;
    o["missing"] = m;
    out.oracle = o;
    return out;
}

Dataset gen_groups(const Dataset& ds, const std::vector<PredicateSpec>& preds, int depth) {
    if (preds.empty()) fail(ErrorCode::InvalidArgument, "gen_groups requires predicates");
    if (depth != 1 && depth != 2) fail(ErrorCode::InvalidArgument, "gen_groups depth must be 1 or 2");
    for (const auto& p : preds)
        if (p.feature < 0 || static_cast<std::size_t>(p.feature) >= ds.dim)
            fail(ErrorCode::InvalidArgument,
                 "gen_groups: predicate references missing feature " + std::to_string(p.feature));

    auto eval_pred = [&](const PredicateSpec& p, std::size_t i) {
        const double v = ds.features[i * ds.dim + static_cast<std::size_t>(p.feature)];
        return p.greater ? v > p.threshold : v <= p.threshold;
    };

    Dataset out = ds;
    std::vector<std::vector<double>> cols;
    std::vector<std::string> names;
    for (std::size_t a = 0; a < preds.size(); ++a) {
        std::vector<double> col(ds.rows);
        for (std::size_t i = 0; i < ds.rows; ++i) col[i] = eval_pred(preds[a], i) ? 1.0 : 0.0;
        cols.push_back(std::move(col));
        names.push_back(preds[a].name.empty() ? "p" + std::to_string(a) : preds[a].name);
    }
    if (depth == 2) {
        const std::size_t base = preds.size();
        for (std::size_t a = 0; a < base; ++a) {
            for (std::size_t b = a + 1; b < base; ++b) {
                std::vector<double> col(ds.rows);
                for (std::size_t i = 0; i < ds.rows; ++i) col[i] = cols[a][i] * cols[b][i];
                cols.push_back(std::move(col));
                names.push_back(names[a] + "&" + names[b]);
            }
        }
    }
    const std::size_t old_g = out.n_groups;
    out.n_groups = old_g + cols.size();
    std::vector<double> groups(out.rows * out.n_groups);
    for (std::size_t i = 0; i < out.rows; ++i) {
        for (std::size_t j = 0; j < old_g; ++j) groups[i * out.n_groups + j] = ds.groups[i * old_g + j];
        for (std::size_t j = 0; j < cols.size(); ++j) groups[i * out.n_groups + old_g + j] = cols[j][i];
    }
    out.groups = std::move(groups);
    for (const auto& nm : names) out.group_names.push_back(nm);
    out.validate();
    return out;
}

namespace oracle {

double cond_mean(const json& o, std::span<const double> x) {
    const std::string kind = o.at("kind").get<std::string>();
    if (kind == "hetero") return x[o.at("mean_col").get<std::size_t>()];
    if (kind == "shift") {
        const double w = o.at("noise_width").get<double>();
        const auto gamma = o.at("gamma").get<std::vector<double>>();
        return w / 2.0 + (1.0 - w) * logistic(dot_with_intercept(gamma, x));
    }
    fail(ErrorCode::InvalidArgument, "oracle lacks a conditional mean");
}

double cond_quantile(const json& o, double delta, std::span<const double> x) {
    const std::string kind = o.at("kind").get<std::string>();
    if (kind == "hetero") {
        const double m = x[o.at("mean_col").get<std::size_t>()];
        const int sc = o.at("sigma_col").get<int>();
        const double sig = o.at("sigma0").get<double>() +
                           (sc >= 0 ? o.at("sigma_slope").get<double>() * x[static_cast<std::size_t>(sc)]
                                    : 0.0);
        return m + sig * normal_quantile(delta);
    }
    if (kind == "shift") {
        const double w = o.at("noise_width").get<double>();
        return cond_mean(o, x) + w * (delta - 0.5);
    }
    fail(ErrorCode::InvalidArgument, "oracle lacks conditional quantiles");
}

double density_bound(const json& o) { return o.at("density_bound").get<double>(); }

double propensity_ratio(const json& o, std::span<const double> x) {
    if (o.at("kind").get<std::string>() != "shift")
        fail(ErrorCode::InvalidArgument, "oracle lacks a propensity ratio");
    const auto mu = o.at("mu").get<std::vector<double>>();
    double acc = 0.0, mu_sq = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        acc += mu[j] * x[j];
        mu_sq += mu[j] * mu[j];
    }
    return std::exp(acc - mu_sq / 2.0);
}

std::vector<double> true_theta(const json& o) {
    return o.at("theta_star").get<std::vector<double>>();
}

double complete_propensity(const json& o, std::span<const double> x) {
    const auto& m = o.at("missing");
    const std::string mech = m.at("mechanism").get<std::string>();
    if (mech == "mcar") return m.at("rho").get<double>();
    const auto theta = m.at("theta").get<std::vector<double>>();
    return logistic(dot_with_intercept(theta, x));
}

InitialPredictor bayes_predictor(const json& o) {
    if (o.at("kind").get<std::string>() == "shift") {
        InitialPredictor p;
        p.kind = InitialPredictor::Kind::LogisticLinear;
        p.weights = o.at("gamma").get<std::vector<double>>();
        const double w = o.at("noise_width").get<double>();
        p.offset = w / 2.0;   // out_offset
        p.value = 1.0 - w;    // out_scale
        return p;
    }
    fail(ErrorCode::InvalidArgument, "oracle lacks a closed-form regression");
}

} // namespace oracle

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) fail(ErrorCode::InvalidArgument, where + ": unknown key '" + it.key() + "'");
    }
}

std::vector<PredicateSpec> parse_predicates(const json& j) {
    std::vector<PredicateSpec> preds;
    for (const auto& jp : j) {
        check_keys(jp, {"feature", "op", "threshold", "name"}, "predicate");
        PredicateSpec p;
        p.feature = jp.at("feature").get<int>();
        const std::string op = jp.at("op").get<std::string>();
        if (op == "gt") p.greater = true;
        else if (op == "le") p.greater = false;
        else fail(ErrorCode::InvalidArgument, "predicate op must be le or gt");
        p.threshold = jp.at("threshold").get<double>();
        if (jp.contains("name")) p.name = jp.at("name").get<std::string>();
        preds.push_back(std::move(p));
    }
    return preds;
}

} // namespace

SynthOutput run_generator(const json& spec) {
    if (!spec.is_object() || !spec.contains("kind"))
        fail(ErrorCode::InvalidArgument, "generator spec must be an object with a kind");
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "hetero") {
        check_keys(spec, {"kind", "n", "d", "seed"}, "hetero generator");
        return gen_hetero(spec.at("n").get<std::size_t>(), spec.at("d").get<std::size_t>(),
                          spec.at("seed").get<uint64_t>());
    }
    if (kind == "shift") {
        check_keys(spec, {"kind", "n_source", "n_target", "mu", "seed", "gamma", "noise_width"},
                   "shift generator");
        return gen_shift(spec.at("n_source").get<std::size_t>(),
                         spec.at("n_target").get<std::size_t>(),
                         spec.at("mu").get<std::vector<double>>(), spec.at("seed").get<uint64_t>(),
                         spec.contains("gamma") ? spec.at("gamma").get<std::vector<double>>()
                                                : std::vector<double>{},
                         spec.contains("noise_width") ? spec.at("noise_width").get<double>() : 0.5);
    }
    if (kind == "missing") {
        check_keys(spec, {"kind", "base", "mechanism", "rho", "theta", "masked_col", "seed"},
                   "missing generator");
        SynthOutput base = run_generator(spec.at("base"));
        MissingSpec ms;
        const std::string mech = spec.at("mechanism").get<std::string>();
        if (mech == "mcar") ms.mechanism = MissingSpec::Mechanism::MCAR;
        else if (mech == "mar") ms.mechanism = MissingSpec::Mechanism::MAR;
        else if (mech == "mnar") ms.mechanism = MissingSpec::Mechanism::MNAR;
        else fail(ErrorCode::InvalidArgument, "mechanism must be mcar, mar or mnar");
        if (spec.contains("rho")) ms.rho = spec.at("rho").get<double>();
        if (spec.contains("theta")) ms.theta = spec.at("theta").get<std::vector<double>>();
        if (spec.contains("masked_col")) ms.masked_col = spec.at("masked_col").get<int>();
        return gen_missing(base.data, base.oracle, ms, spec.at("seed").get<uint64_t>());
    }
    if (kind == "groups") {
        check_keys(spec, {"kind", "base", "predicates", "depth"}, "groups generator");
        SynthOutput base = run_generator(spec.at("base"));
        const int depth = spec.contains("depth") ? spec.at("depth").get<int>() : 1;
        base.data = gen_groups(base.data, parse_predicates(spec.at("predicates")), depth);
        if (base.has_aux) base.aux = gen_groups(base.aux, parse_predicates(spec.at("predicates")), depth);
        return base;
    }
    fail(ErrorCode::InvalidArgument, "unknown generator kind '" + kind + "'");
}

} // namespace happymap
