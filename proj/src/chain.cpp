#include "chain.hpp"

#include <cmath>
#include <unordered_map>

namespace happymap {

using nlohmann::json;

bool PredictorChain::uses_groups() const {
    for (const auto& s : steps)
        if (s.auditor.uses_groups()) return true;
    return false;
}

double PredictorChain::predict(const RowView& row) const {
    double v = proj.clamp(f0.eval(row));
    for (const auto& s : steps)
        v = proj.clamp(v - s.eta * s.auditor.eval(v, row));
    return v;
}

double PredictorChain::predict(std::span<const double> x, std::span<const double> g) const {
    if (x.size() != n_features)
        fail(ErrorCode::InvalidArgument, "predict: expected " + std::to_string(n_features) +
                                             " features, got " + std::to_string(x.size()));
    if (uses_groups() && g.size() != n_groups)
        fail(ErrorCode::InvalidArgument, "predict: chain references group columns; expected " +
                                             std::to_string(n_groups) + " group values");
    return predict(RowView{x, g});
}

std::vector<double> PredictorChain::predict_batch(const Dataset& ds) const {
    if (ds.dim != n_features)
        fail(ErrorCode::InvalidArgument, "predict_batch: feature dimension mismatch");
    if (uses_groups() && ds.n_groups < n_groups)
        fail(ErrorCode::InvalidArgument, "predict_batch: dataset lacks the chain's group columns");
    const std::size_t n = ds.rows;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = proj.clamp(f0.eval(RowView{ds.x(i), ds.g(i)}));

    // Chains repeat a handful of auditors many times; key the x-part cache on
    // the sign-stripped serialized descriptor.
    std::unordered_map<std::string, std::vector<double>> xpart_cache;
    std::unordered_map<std::string, std::vector<double>> baseline_cache;
    for (const auto& step : steps) {
        AuditorDescriptor unsigned_desc = step.auditor;
        unsigned_desc.sign = 1.0;
        const std::string key = unsigned_desc.to_json().dump();
        auto it = xpart_cache.find(key);
        if (it == xpart_cache.end()) {
            std::vector<double> a(n);
            for (std::size_t i = 0; i < n; ++i) a[i] = unsigned_desc.x_part(RowView{ds.x(i), ds.g(i)});
            it = xpart_cache.emplace(key, std::move(a)).first;
        }
        const std::vector<double>& a = it->second;
        const double sgn = step.auditor.sign;
        const double eta = step.eta;
        switch (step.auditor.f_part_kind()) {
            case AuditorDescriptor::FPart::One:
                for (std::size_t i = 0; i < n; ++i)
                    v[i] = proj.clamp(v[i] - eta * (sgn * a[i] * 1.0));
                break;
            case AuditorDescriptor::FPart::BinInd: {
                const auto& d = step.auditor;
                for (std::size_t i = 0; i < n; ++i) {
                    const double fp = d.in_bin(v[i]) ? 1.0 : 0.0;
                    v[i] = proj.clamp(v[i] - eta * (sgn * a[i] * fp));
                }
                break;
            }
            case AuditorDescriptor::FPart::FMinusBase: {
                const std::string bkey = step.auditor.baseline.to_json().dump();
                auto bit = baseline_cache.find(bkey);
                if (bit == baseline_cache.end()) {
                    std::vector<double> p(n);
                    for (std::size_t i = 0; i < n; ++i)
                        p[i] = step.auditor.baseline.eval(RowView{ds.x(i), ds.g(i)});
                    bit = baseline_cache.emplace(bkey, std::move(p)).first;
                }
                const std::vector<double>& p = bit->second;
                for (std::size_t i = 0; i < n; ++i)
                    v[i] = proj.clamp(v[i] - eta * (sgn * a[i] * (v[i] - p[i])));
                break;
            }
        }
    }
    return v;
}

static json proj_to_json(const ProjectionInterval& p) {
    json j;
    j["lo"] = real_to_json(p.lo);
    j["hi"] = real_to_json(p.hi);
    return j;
}

static ProjectionInterval proj_from_json(const json& j) {
    ProjectionInterval p;
    p.lo = real_from_json(j.at("lo"));
    p.hi = real_from_json(j.at("hi"));
    p.validate();
    return p;
}

static json chain_to_json(const PredictorChain& c) {
    json j;
    j["format"] = "happymap-chain-v1";
    j["n_features"] = c.n_features;
    j["n_groups"] = c.n_groups;
    j["f0"] = c.f0.to_json();
    j["proj"] = proj_to_json(c.proj);
    json steps = json::array();
    for (const auto& s : c.steps) {
        json js;
        js["auditor"] = s.auditor.to_json();
        js["eta"] = real_to_json(s.eta);
        steps.push_back(js);
    }
    j["steps"] = steps;
    return j;
}

static PredictorChain chain_from_json(const json& j) {
    if (!j.is_object()) fail(ErrorCode::Parse, "chain: expected a JSON object");
    if (!j.contains("format") || j.at("format").get<std::string>() != "happymap-chain-v1")
        fail(ErrorCode::Parse, "chain: missing or unsupported format tag");
    PredictorChain c;
    c.n_features = j.at("n_features").get<std::size_t>();
    c.n_groups = j.at("n_groups").get<std::size_t>();
    c.f0 = InitialPredictor::from_json(j.at("f0"));
    c.f0.validate(c.n_features);
    c.proj = proj_from_json(j.at("proj"));
    for (const auto& js : j.at("steps")) {
        ChainStep s;
        s.auditor = AuditorDescriptor::from_json(js.at("auditor"));
        s.auditor.validate(c.n_features, c.n_groups);
        s.eta = real_from_json(js.at("eta"));
        if (!(s.eta > 0.0)) fail(ErrorCode::Parse, "chain: step size must be positive");
        c.steps.push_back(std::move(s));
    }
    return c;
}

std::string PredictorChain::serialize() const { return chain_to_json(*this).dump(2) + "\n"; }

PredictorChain PredictorChain::deserialize(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::Parse, std::string("chain: ") + e.what());
    }
    return chain_from_json(j);
}

std::pair<double, double> IntervalPredictor::interval(const RowView& row) const {
    if (construction == Construction::TwoChains) {
        const double lo = lower ? lower->predict(row) : -kInf;
        const double hi = upper ? upper->predict(row) : kInf;
        return {lo, hi};
    }
    const double h = score_base.eval(row);
    const double q = threshold ? threshold->predict(row) : kInf;
    return {h - q, h + q};
}

bool IntervalPredictor::covers(const RowView& row, double y) const {
    if (construction == Construction::ScoreBased) {
        // Membership is defined through the score so that
        // y in I(x)  <=>  m(x,y) <= q(x)  holds as an identity.
        const double q = threshold ? threshold->predict(row) : kInf;
        return std::fabs(y - score_base.eval(row)) <= q;
    }
    auto [lo, hi] = interval(row);
    return lo <= y && y <= hi;
}

std::string IntervalPredictor::serialize() const {
    json j;
    j["format"] = "happymap-interval-v1";
    if (construction == Construction::TwoChains) {
        j["construction"] = "two-chains";
        if (lower) j["lower"] = json::parse(lower->serialize());
        if (upper) j["upper"] = json::parse(upper->serialize());
    } else {
        j["construction"] = "score-based";
        j["score_base"] = score_base.to_json();
        if (threshold) j["threshold"] = json::parse(threshold->serialize());
    }
    if (!meta.empty()) j["meta"] = meta;
    return j.dump(2) + "\n";
}

IntervalPredictor IntervalPredictor::deserialize(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::Parse, std::string("interval: ") + e.what());
    }
    if (!j.contains("format") || j.at("format").get<std::string>() != "happymap-interval-v1")
        fail(ErrorCode::Parse, "interval: missing or unsupported format tag");
    IntervalPredictor ip;
    const std::string cons = j.at("construction").get<std::string>();
    if (cons == "two-chains") {
        ip.construction = Construction::TwoChains;
        if (j.contains("lower")) ip.lower = PredictorChain::deserialize(j.at("lower").dump());
        if (j.contains("upper")) ip.upper = PredictorChain::deserialize(j.at("upper").dump());
        if (ip.lower && ip.upper &&
            (ip.lower->proj.lo != ip.upper->proj.lo || ip.lower->proj.hi != ip.upper->proj.hi))
            fail(ErrorCode::Parse, "interval: the two chains must share a projection interval");
    } else if (cons == "score-based") {
        ip.construction = Construction::ScoreBased;
        ip.score_base = InitialPredictor::from_json(j.at("score_base"));
        if (j.contains("threshold")) ip.threshold = PredictorChain::deserialize(j.at("threshold").dump());
    } else {
        fail(ErrorCode::Parse, "interval: unknown construction '" + cons + "'");
    }
    if (j.contains("meta")) ip.meta = j.at("meta");
    return ip;
}

} // namespace happymap
