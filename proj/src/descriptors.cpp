#include "descriptors.hpp"

#include <cmath>
#include <sstream>

namespace happymap {

using nlohmann::json;

nlohmann::json real_to_json(double v) { return encode_real(v); }

double real_from_json(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return decode_real(j.get<std::string>());
    fail(ErrorCode::Parse, "expected a real number");
}

nlohmann::json reals_to_json(const std::vector<double>& v) {
    json arr = json::array();
    for (double x : v) arr.push_back(real_to_json(x));
    return arr;
}

std::vector<double> reals_from_json(const json& j) {
    if (!j.is_array()) fail(ErrorCode::Parse, "expected an array of reals");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& e : j) out.push_back(real_from_json(e));
    return out;
}

double InitialPredictor::eval(const RowView& row) const {
    switch (kind) {
        case Kind::Constant: return value;
        case Kind::Linear: {
            double acc = offset;
            for (std::size_t j = 0; j < weights.size(); ++j) acc += weights[j] * row.x[j];
            return acc;
        }
        case Kind::Column: return row.x[static_cast<std::size_t>(column)];
        case Kind::LogisticLinear: {
            // offset + value * logistic(theta . [x,1]); value defaults to 1.
            const std::size_t d = weights.size() - 1;
            double acc = weights[d];
            for (std::size_t j = 0; j < d; ++j) acc += weights[j] * row.x[j];
            return offset + value * logistic(acc);
        }
    }
    return 0.0;
}

json InitialPredictor::to_json() const {
    json j;
    switch (kind) {
        case Kind::Constant:
            j["kind"] = "constant";
            j["value"] = real_to_json(value);
            break;
        case Kind::Linear:
            j["kind"] = "linear";
            j["weights"] = reals_to_json(weights);
            j["offset"] = real_to_json(offset);
            break;
        case Kind::Column:
            j["kind"] = "column";
            j["col"] = column;
            break;
        case Kind::LogisticLinear:
            j["kind"] = "logistic";
            j["theta"] = reals_to_json(weights);
            j["out_scale"] = real_to_json(value);
            j["out_offset"] = real_to_json(offset);
            break;
    }
    return j;
}

InitialPredictor InitialPredictor::from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind"))
        fail(ErrorCode::Parse, "predictor: expected an object with a kind");
    InitialPredictor p;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") {
        p.kind = Kind::Constant;
        p.value = real_from_json(j.at("value"));
    } else if (kind == "linear") {
        p.kind = Kind::Linear;
        p.weights = reals_from_json(j.at("weights"));
        p.offset = j.contains("offset") ? real_from_json(j.at("offset")) : 0.0;
    } else if (kind == "column") {
        p.kind = Kind::Column;
        p.column = j.at("col").get<int>();
        if (p.column < 0) fail(ErrorCode::Parse, "predictor: negative column");
    } else if (kind == "logistic") {
        p.kind = Kind::LogisticLinear;
        p.weights = reals_from_json(j.at("theta"));
        if (p.weights.empty()) fail(ErrorCode::Parse, "predictor: empty theta");
        p.value = j.contains("out_scale") ? real_from_json(j.at("out_scale")) : 1.0;
        p.offset = j.contains("out_offset") ? real_from_json(j.at("out_offset")) : 0.0;
    } else {
        fail(ErrorCode::Parse, "predictor: unknown kind '" + kind + "'");
    }
    return p;
}

bool AuditorDescriptor::uses_groups() const {
    for (const auto& t : terms)
        if (t.is_group) return true;
    return false;
}

void InitialPredictor::validate(std::size_t n_features) const {
    switch (kind) {
        case Kind::Constant: break;
        case Kind::Linear:
            if (weights.size() != n_features)
                fail(ErrorCode::InvalidArgument,
                     "linear predictor has " + std::to_string(weights.size()) +
                         " weights for " + std::to_string(n_features) + " features");
            break;
        case Kind::Column:
            if (column < 0 || static_cast<std::size_t>(column) >= n_features)
                fail(ErrorCode::InvalidArgument, "predictor column out of range");
            break;
        case Kind::LogisticLinear:
            if (weights.size() != n_features + 1)
                fail(ErrorCode::InvalidArgument,
                     "logistic predictor needs d+1 parameters (intercept last)");
            break;
    }
}

void AuditorDescriptor::validate(std::size_t n_features, std::size_t n_groups) const {
    for (const auto& t : terms) {
        const std::size_t limit = t.is_group ? n_groups : n_features;
        if (t.col < 0 || static_cast<std::size_t>(t.col) >= limit)
            fail(ErrorCode::InvalidArgument, "auditor predicate column out of range");
    }
    switch (kind) {
        case Kind::Stump:
            if (col < 0 || static_cast<std::size_t>(col) >= n_features)
                fail(ErrorCode::InvalidArgument, "stump column out of range");
            break;
        case Kind::Linear:
            if (weights.size() != n_features)
                fail(ErrorCode::InvalidArgument,
                     "linear auditor has " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(n_features) + " features");
            break;
        case Kind::PropensityRatio:
        case Kind::ShiftComposite:
            if (theta.size() != n_features + 1)
                fail(ErrorCode::InvalidArgument,
                     "propensity theta needs d+1 parameters (intercept last)");
            if (kind == Kind::ShiftComposite) baseline.validate(n_features);
            break;
        default: break;
    }
}

double AuditorDescriptor::propensity_ratio(const RowView& row) const {
    const std::size_t d = theta.size() - 1;
    double acc = theta[d];
    for (std::size_t j = 0; j < d; ++j) acc += theta[j] * row.x[j];
    double sigma = logistic(acc);
    if (sigma < clamp_lo) sigma = clamp_lo;
    if (sigma > clamp_hi) sigma = clamp_hi;
    return (1.0 - sigma) / sigma;
}

double AuditorDescriptor::x_part(const RowView& row) const {
    switch (kind) {
        case Kind::Constant: return sign;
        case Kind::Group:
        case Kind::Product: {
            for (const auto& t : terms)
                if (!t.eval(row)) return 0.0;
            return sign * scale;
        }
        case Kind::Stump: {
            const double v = row.x[static_cast<std::size_t>(col)];
            const bool in = greater ? v > tau : v <= tau;
            return in ? sign : 0.0;
        }
        case Kind::Linear: {
            double acc = offset;
            for (std::size_t j = 0; j < weights.size(); ++j) acc += weights[j] * row.x[j];
            return sign * acc;
        }
        case Kind::Bin: return sign;
        case Kind::PropensityRatio:
        case Kind::ShiftComposite: return sign * propensity_ratio(row);
        case Kind::CenteredGroup: {
            double ind = 1.0;
            for (const auto& t : terms)
                if (!t.eval(row)) { ind = 0.0; break; }
            return sign * scale * (ind - center);
        }
    }
    return 0.0;
}

double AuditorDescriptor::f_part(double f, const RowView& row) const {
    switch (f_part_kind()) {
        case FPart::One: return 1.0;
        case FPart::BinInd: return in_bin(f) ? 1.0 : 0.0;
        case FPart::FMinusBase: return f - baseline.eval(row);
    }
    return 1.0;
}

static std::string term_str(const PredTerm& t) {
    std::ostringstream os;
    os << (t.is_group ? "g" : "x") << t.col << (t.greater ? ">" : "<=") << format_real_fixed(t.tau, 4);
    return os.str();
}

std::string AuditorDescriptor::display() const {
    std::ostringstream os;
    os << (sign >= 0 ? "+" : "-");
    switch (kind) {
        case Kind::Constant: os << "const"; break;
        case Kind::Group: {
            os << "group(";
            for (std::size_t i = 0; i < terms.size(); ++i) os << (i ? "&" : "") << term_str(terms[i]);
            os << ")";
            if (scale != 1.0) os << "*" << format_real_fixed(scale, 4);
            break;
        }
        case Kind::Stump:
            os << "stump(x" << col << (greater ? ">" : "<=") << format_real_fixed(tau, 4) << ")";
            break;
        case Kind::Linear: {
            os << "lin([";
            for (std::size_t i = 0; i < weights.size(); ++i)
                os << (i ? "," : "") << format_real_fixed(weights[i], 4);
            os << "]+" << format_real_fixed(offset, 4) << ")";
            break;
        }
        case Kind::Bin:
            os << "bin[" << format_real_fixed(bin_lo, 4) << "," << format_real_fixed(bin_hi, 4)
               << (bin_hi_closed ? "]" : ")");
            break;
        case Kind::Product: {
            os << "prodbin[" << format_real_fixed(bin_lo, 4) << "," << format_real_fixed(bin_hi, 4)
               << (bin_hi_closed ? "]" : ")") << "*(";
            for (std::size_t i = 0; i < terms.size(); ++i) os << (i ? "&" : "") << term_str(terms[i]);
            os << ")";
            break;
        }
        case Kind::PropensityRatio: {
            os << "ratio(theta=[";
            for (std::size_t i = 0; i < theta.size(); ++i)
                os << (i ? "," : "") << format_real_fixed(theta[i], 4);
            os << "])";
            break;
        }
        case Kind::ShiftComposite: {
            os << "shift(theta=[";
            for (std::size_t i = 0; i < theta.size(); ++i)
                os << (i ? "," : "") << format_real_fixed(theta[i], 4);
            os << "],p=" << baseline.to_json().dump() << ")";
            break;
        }
        case Kind::CenteredGroup: {
            os << "centered(";
            for (std::size_t i = 0; i < terms.size(); ++i) os << (i ? "&" : "") << term_str(terms[i]);
            os << "-" << format_real_fixed(center, 4) << ")";
            break;
        }
    }
    return os.str();
}

static json terms_to_json(const std::vector<PredTerm>& terms) {
    json arr = json::array();
    for (const auto& t : terms) {
        json jt;
        jt["col"] = t.col;
        jt["space"] = t.is_group ? "group" : "feature";
        jt["op"] = t.greater ? "gt" : "le";
        jt["tau"] = real_to_json(t.tau);
        arr.push_back(jt);
    }
    return arr;
}

static std::vector<PredTerm> terms_from_json(const json& j) {
    if (!j.is_array() || j.empty()) fail(ErrorCode::Parse, "auditor: terms must be a non-empty array");
    std::vector<PredTerm> out;
    for (const auto& jt : j) {
        PredTerm t;
        t.col = jt.at("col").get<int>();
        if (t.col < 0) fail(ErrorCode::Parse, "auditor: negative column");
        const std::string space = jt.at("space").get<std::string>();
        if (space == "group") t.is_group = true;
        else if (space == "feature") t.is_group = false;
        else fail(ErrorCode::Parse, "auditor: unknown space '" + space + "'");
        const std::string op = jt.at("op").get<std::string>();
        if (op == "gt") t.greater = true;
        else if (op == "le") t.greater = false;
        else fail(ErrorCode::Parse, "auditor: unknown op '" + op + "'");
        t.tau = real_from_json(jt.at("tau"));
        out.push_back(t);
    }
    return out;
}

json AuditorDescriptor::to_json() const {
    json j;
    j["sign"] = sign >= 0 ? 1 : -1;
    switch (kind) {
        case Kind::Constant:
            j["kind"] = "constant";
            break;
        case Kind::Group:
            j["kind"] = "group";
            j["terms"] = terms_to_json(terms);
            if (scale != 1.0) j["scale"] = real_to_json(scale);
            break;
        case Kind::Stump:
            j["kind"] = "stump";
            j["col"] = col;
            j["op"] = greater ? "gt" : "le";
            j["tau"] = real_to_json(tau);
            break;
        case Kind::Linear:
            j["kind"] = "linear";
            j["weights"] = reals_to_json(weights);
            j["offset"] = real_to_json(offset);
            break;
        case Kind::Bin:
            j["kind"] = "bin";
            j["lo"] = real_to_json(bin_lo);
            j["hi"] = real_to_json(bin_hi);
            j["hi_closed"] = bin_hi_closed;
            break;
        case Kind::Product:
            j["kind"] = "product";
            j["terms"] = terms_to_json(terms);
            j["lo"] = real_to_json(bin_lo);
            j["hi"] = real_to_json(bin_hi);
            j["hi_closed"] = bin_hi_closed;
            if (scale != 1.0) j["scale"] = real_to_json(scale);
            break;
        case Kind::PropensityRatio:
            j["kind"] = "propensity-ratio";
            j["theta"] = reals_to_json(theta);
            j["clamp"] = json::array({real_to_json(clamp_lo), real_to_json(clamp_hi)});
            break;
        case Kind::ShiftComposite:
            j["kind"] = "shift-composite";
            j["theta"] = reals_to_json(theta);
            j["clamp"] = json::array({real_to_json(clamp_lo), real_to_json(clamp_hi)});
            j["baseline"] = baseline.to_json();
            break;
        case Kind::CenteredGroup:
            j["kind"] = "centered-group";
            j["terms"] = terms_to_json(terms);
            j["center"] = real_to_json(center);
            if (scale != 1.0) j["scale"] = real_to_json(scale);
            break;
    }
    return j;
}

AuditorDescriptor AuditorDescriptor::from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind"))
        fail(ErrorCode::Parse, "auditor: expected an object with a kind");
    AuditorDescriptor d;
    const int s = j.contains("sign") ? j.at("sign").get<int>() : 1;
    if (s != 1 && s != -1) fail(ErrorCode::Parse, "auditor: sign must be +-1");
    d.sign = s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") {
        d.kind = Kind::Constant;
    } else if (kind == "group") {
        d.kind = Kind::Group;
        d.terms = terms_from_json(j.at("terms"));
        if (j.contains("scale")) d.scale = real_from_json(j.at("scale"));
    } else if (kind == "stump") {
        d.kind = Kind::Stump;
        d.col = j.at("col").get<int>();
        if (d.col < 0) fail(ErrorCode::Parse, "auditor: negative column");
        d.greater = j.at("op").get<std::string>() == "gt";
        d.tau = real_from_json(j.at("tau"));
    } else if (kind == "linear") {
        d.kind = Kind::Linear;
        d.weights = reals_from_json(j.at("weights"));
        d.offset = j.contains("offset") ? real_from_json(j.at("offset")) : 0.0;
    } else if (kind == "bin" || kind == "product") {
        d.kind = kind == "bin" ? Kind::Bin : Kind::Product;
        d.bin_lo = real_from_json(j.at("lo"));
        d.bin_hi = real_from_json(j.at("hi"));
        d.bin_hi_closed = j.contains("hi_closed") && j.at("hi_closed").get<bool>();
        if (d.kind == Kind::Product) {
            d.terms = terms_from_json(j.at("terms"));
            if (j.contains("scale")) d.scale = real_from_json(j.at("scale"));
        }
    } else if (kind == "propensity-ratio" || kind == "shift-composite") {
        d.kind = kind == "propensity-ratio" ? Kind::PropensityRatio : Kind::ShiftComposite;
        d.theta = reals_from_json(j.at("theta"));
        if (d.theta.empty()) fail(ErrorCode::Parse, "auditor: empty theta");
        const auto clamp = reals_from_json(j.at("clamp"));
        if (clamp.size() != 2) fail(ErrorCode::Parse, "auditor: clamp must be [c1,c2]");
        d.clamp_lo = clamp[0];
        d.clamp_hi = clamp[1];
        if (!(0.0 < d.clamp_lo && d.clamp_lo < d.clamp_hi && d.clamp_hi < 1.0))
            fail(ErrorCode::Parse, "auditor: clamp requires 0 < c1 < c2 < 1");
        if (d.kind == Kind::ShiftComposite)
            d.baseline = InitialPredictor::from_json(j.at("baseline"));
    } else if (kind == "centered-group") {
        d.kind = Kind::CenteredGroup;
        d.terms = terms_from_json(j.at("terms"));
        d.center = real_from_json(j.at("center"));
        if (j.contains("scale")) d.scale = real_from_json(j.at("scale"));
    } else {
        fail(ErrorCode::Parse, "auditor: unknown kind '" + kind + "'");
    }
    return d;
}

} // namespace happymap
