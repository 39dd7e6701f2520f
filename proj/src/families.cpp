#include "families.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace happymap {

namespace {

// Appends -c after each c. Builders construct positive members only.
void close_under_negation(std::vector<AuditorDescriptor>& members) {
    std::vector<AuditorDescriptor> closed;
    closed.reserve(members.size() * 2);
    for (const auto& m : members) {
        closed.push_back(m);
        closed.push_back(m.negated());
    }
    members = std::move(closed);
}

double group_mass(const Dataset& ds, const std::vector<PredTerm>& terms) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < ds.rows; ++i) {
        RowView row{ds.x(i), ds.g(i)};
        bool in = true;
        for (const auto& t : terms)
            if (!t.eval(row)) { in = false; break; }
        if (in) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(ds.rows);
}

} // namespace

AuditorFamily make_constant_family() {
    AuditorFamily fam;
    AuditorDescriptor c;
    c.kind = AuditorDescriptor::Kind::Constant;
    fam.members.push_back(c);
    close_under_negation(fam.members);
    fam.b_bound = 1.0;
    fam.dim_estimate = std::log(2.0);
    return fam;
}

std::vector<GroupPredicate> group_predicates_from_columns(const Dataset& ds) {
    std::vector<GroupPredicate> preds;
    for (std::size_t j = 0; j < ds.n_groups; ++j) {
        GroupPredicate p;
        PredTerm t;
        t.col = static_cast<int>(j);
        t.is_group = true;
        t.greater = true;
        t.tau = 0.5;
        p.terms.push_back(t);
        p.name = j < ds.group_names.size() ? ds.group_names[j] : "g" + std::to_string(j);
        preds.push_back(std::move(p));
    }
    return preds;
}

AuditorFamily make_group_family(const Dataset& ds, std::vector<GroupPredicate> preds,
                                int depth, bool scale_inv_mass) {
    if (preds.empty()) fail(ErrorCode::InvalidArgument, "group family requires at least one group");
    if (depth == 2) {
        const std::size_t base = preds.size();
        for (std::size_t i = 0; i < base; ++i) {
            for (std::size_t j = i + 1; j < base; ++j) {
                GroupPredicate inter;
                inter.terms = preds[i].terms;
                inter.terms.insert(inter.terms.end(), preds[j].terms.begin(), preds[j].terms.end());
                inter.name = preds[i].name + "&" + preds[j].name;
                preds.push_back(std::move(inter));
            }
        }
    } else if (depth != 1) {
        fail(ErrorCode::InvalidArgument, "group family depth must be 1 or 2");
    }

    AuditorFamily fam;
    double b = scale_inv_mass ? 0.0 : 1.0;
    for (const auto& p : preds) {
        const double mass = group_mass(ds, p.terms);
        if (mass == 0.0)
            fam.warnings.push_back("group '" + p.name + "' has no members; kept with zero mass");
        AuditorDescriptor d;
        d.kind = AuditorDescriptor::Kind::Group;
        d.terms = p.terms;
        if (scale_inv_mass && mass > 0.0) {
            d.scale = 1.0 / mass;
            // E[c^2] = scale^2 * mass = 1/mass for an indicator scaled by 1/mass.
            b = std::max(b, 1.0 / mass);
        } else if (scale_inv_mass) {
            b = std::max(b, 1.0);
        }
        fam.members.push_back(std::move(d));
    }
    close_under_negation(fam.members);
    fam.b_bound = b;
    fam.dim_estimate = std::log(static_cast<double>(fam.members.size()));
    return fam;
}

AuditorFamily make_stump_family(const Dataset& ds, int thresholds_per_feature) {
    if (thresholds_per_feature < 1)
        fail(ErrorCode::InvalidArgument, "stump family requires thresholds_per_feature >= 1");
    AuditorFamily fam;
    std::vector<double> column(ds.rows);
    for (std::size_t j = 0; j < ds.dim; ++j) {
        for (std::size_t i = 0; i < ds.rows; ++i) column[i] = ds.features[i * ds.dim + j];
        std::sort(column.begin(), column.end());
        std::set<double> taus;
        for (int q = 1; q <= thresholds_per_feature; ++q) {
            const double frac = static_cast<double>(q) / (thresholds_per_feature + 1.0);
            std::size_t idx = static_cast<std::size_t>(frac * static_cast<double>(ds.rows));
            if (idx >= ds.rows) idx = ds.rows - 1;
            taus.insert(column[idx]); // constant features collapse to one threshold
        }
        for (double tau : taus) {
            AuditorDescriptor d;
            d.kind = AuditorDescriptor::Kind::Stump;
            d.col = static_cast<int>(j);
            d.tau = tau;
            d.greater = false;
            fam.members.push_back(std::move(d));
        }
    }
    close_under_negation(fam.members);
    fam.b_bound = 1.0;
    fam.dim_estimate = std::log(static_cast<double>(fam.members.size()));
    return fam;
}

AuditorFamily make_linear_family(const Dataset& ds, double b_w, bool include_offset) {
    if (!(b_w > 0.0)) fail(ErrorCode::InvalidArgument, "linear family requires b_w > 0");
    AuditorFamily fam;
    fam.linear = LinearSpec{b_w, include_offset};
    double mean_sq = 0.0;
    for (std::size_t i = 0; i < ds.rows; ++i) {
        double nrm = include_offset ? 1.0 : 0.0;
        for (std::size_t j = 0; j < ds.dim; ++j) {
            const double v = ds.features[i * ds.dim + j];
            nrm += v * v;
        }
        mean_sq += nrm;
    }
    mean_sq /= static_cast<double>(ds.rows);
    fam.b_bound = b_w * b_w * mean_sq; // Cauchy-Schwarz: E[(w.phi)^2] <= b_w^2 E[|phi|^2]
    fam.dim_estimate = static_cast<double>(ds.dim + (include_offset ? 1 : 0));
    return fam;
}

AuditorFamily make_propensity_family(const std::vector<std::vector<double>>& theta_grid,
                                     double clamp_lo, double clamp_hi, bool include_constant) {
    if (theta_grid.empty()) fail(ErrorCode::InvalidArgument, "propensity family requires a theta grid");
    if (!(0.0 < clamp_lo && clamp_lo < clamp_hi && clamp_hi < 1.0))
        fail(ErrorCode::InvalidArgument, "propensity clamp requires 0 < c1 < c2 < 1");
    AuditorFamily fam;
    if (include_constant) {
        AuditorDescriptor c;
        c.kind = AuditorDescriptor::Kind::Constant;
        fam.members.push_back(c);
    }
    for (const auto& theta : theta_grid) {
        if (theta.empty()) fail(ErrorCode::InvalidArgument, "propensity theta must be non-empty");
        AuditorDescriptor d;
        d.kind = AuditorDescriptor::Kind::PropensityRatio;
        d.theta = theta;
        d.clamp_lo = clamp_lo;
        d.clamp_hi = clamp_hi;
        fam.members.push_back(std::move(d));
    }
    close_under_negation(fam.members);
    const double max_ratio = (1.0 - clamp_lo) / clamp_lo;
    fam.b_bound = std::max(max_ratio * max_ratio, include_constant ? 1.0 : 0.0);
    fam.dim_estimate = std::log(static_cast<double>(fam.members.size()));
    return fam;
}

AuditorFamily make_shift_composite_family(const std::vector<std::vector<double>>& theta_grid,
                                          const std::vector<InitialPredictor>& p_list,
                                          double clamp_lo, double clamp_hi,
                                          const Dataset* validate_on) {
    if (theta_grid.empty() || p_list.empty())
        fail(ErrorCode::InvalidArgument, "shift-composite family requires theta and p grids");
    if (!(0.0 < clamp_lo && clamp_lo < clamp_hi && clamp_hi < 1.0))
        fail(ErrorCode::InvalidArgument, "shift-composite clamp requires 0 < c1 < c2 < 1");
    if (validate_on) {
        for (const auto& p : p_list) {
            for (std::size_t i = 0; i < validate_on->rows; ++i) {
                const double v = p.eval(RowView{validate_on->x(i), validate_on->g(i)});
                if (!(v >= 0.0 && v <= 1.0))
                    fail(ErrorCode::InvalidArgument, "baseline predictor leaves [0,1] on the data");
            }
        }
    }
    AuditorFamily fam;
    for (const auto& theta : theta_grid) {
        if (theta.empty()) fail(ErrorCode::InvalidArgument, "shift-composite theta must be non-empty");
        for (const auto& p : p_list) {
            AuditorDescriptor d;
            d.kind = AuditorDescriptor::Kind::ShiftComposite;
            d.theta = theta;
            d.clamp_lo = clamp_lo;
            d.clamp_hi = clamp_hi;
            d.baseline = p;
            fam.members.push_back(std::move(d));
        }
    }
    close_under_negation(fam.members);
    const double bound = 2.0 * (1.0 - clamp_lo) / clamp_lo;
    fam.b_bound = bound * bound;
    fam.dim_estimate = std::log(static_cast<double>(fam.members.size()));
    return fam;
}

AuditorFamily make_multivalidity_family(double lambda, double lo, double hi,
                                        const std::vector<GroupPredicate>& base) {
    if (!(lambda > 0.0)) fail(ErrorCode::InvalidArgument, "bin width must be positive");
    if (!(hi > lo)) fail(ErrorCode::InvalidArgument, "bin range must be non-degenerate");
    AuditorFamily fam;
    std::size_t n_bins = static_cast<std::size_t>(std::ceil((hi - lo) / lambda));
    if (n_bins == 0) n_bins = 1;
    if (lambda >= hi - lo) {
        n_bins = 1;
        fam.warnings.push_back("bin width spans the whole range; single bin");
    }
    for (std::size_t v = 0; v < n_bins; ++v) {
        const double blo = lo + static_cast<double>(v) * lambda;
        const bool last = v + 1 == n_bins;
        const double bhi = last ? hi : lo + static_cast<double>(v + 1) * lambda;
        if (base.empty()) {
            AuditorDescriptor d;
            d.kind = AuditorDescriptor::Kind::Bin;
            d.bin_lo = blo;
            d.bin_hi = bhi;
            d.bin_hi_closed = last;
            fam.members.push_back(std::move(d));
        } else {
            for (const auto& g : base) {
                AuditorDescriptor d;
                d.kind = AuditorDescriptor::Kind::Product;
                d.terms = g.terms;
                d.bin_lo = blo;
                d.bin_hi = bhi;
                d.bin_hi_closed = last;
                fam.members.push_back(std::move(d));
            }
        }
    }
    close_under_negation(fam.members);
    fam.b_bound = 1.0;
    fam.dim_estimate = std::log(static_cast<double>(fam.members.size()));
    return fam;
}

AuditorFamily make_centered_group_family(const Dataset& ds,
                                         const std::vector<GroupPredicate>& preds) {
    if (preds.empty()) fail(ErrorCode::InvalidArgument, "centered family requires at least one group");
    AuditorFamily fam;
    for (const auto& p : preds) {
        AuditorDescriptor d;
        d.kind = AuditorDescriptor::Kind::CenteredGroup;
        d.terms = p.terms;
        d.center = group_mass(ds, p.terms);
        fam.members.push_back(std::move(d));
    }
    close_under_negation(fam.members);
    fam.b_bound = 1.0;
    fam.dim_estimate = std::log(static_cast<double>(fam.members.size()));
    return fam;
}

AuditorFamily union_family(std::vector<AuditorFamily> parts) {
    if (parts.empty()) fail(ErrorCode::InvalidArgument, "union of zero families");
    AuditorFamily fam;
    for (auto& p : parts) {
        for (auto& m : p.members) fam.members.push_back(std::move(m));
        if (p.linear) {
            if (fam.linear) fail(ErrorCode::InvalidArgument, "union supports at most one linear part");
            fam.linear = p.linear;
        }
        fam.b_bound = std::max(fam.b_bound, p.b_bound);
        for (auto& w : p.warnings) fam.warnings.push_back(std::move(w));
    }
    fam.dim_estimate = std::log(static_cast<double>(std::max<std::size_t>(fam.members.size(), 2)));
    if (fam.linear) fam.dim_estimate += fam.linear->include_offset ? 1.0 : 0.0;
    return fam;
}

CompiledFamily::CompiledFamily(const AuditorFamily& family, const Dataset& ds,
                               std::vector<std::size_t> rows)
    : family_(&family), ds_(&ds), rows_(std::move(rows)) {
    if (family.empty()) fail(ErrorCode::InvalidArgument, "auditor family is empty");
    for (const auto& m : family.members) m.validate(ds.dim, ds.n_groups);
    if (rows_.empty()) {
        rows_.resize(ds.rows);
        for (std::size_t i = 0; i < ds.rows; ++i) rows_[i] = i;
    }
    const std::size_t n = rows_.size();
    members_.resize(family.members.size());
    for (std::size_t m = 0; m < family.members.size(); ++m) {
        const auto& desc = family.members[m];
        auto& cache = members_[m];
        cache.fkind = desc.f_part_kind();
        cache.bin_lo = desc.bin_lo;
        cache.bin_hi = desc.bin_hi;
        cache.hi_closed = desc.bin_hi_closed;
        cache.a.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            cache.a[i] = desc.x_part(RowView{ds.x(rows_[i]), ds.g(rows_[i])});
        if (cache.fkind == AuditorDescriptor::FPart::FMinusBase) {
            cache.p.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                cache.p[i] = desc.baseline.eval(RowView{ds.x(rows_[i]), ds.g(rows_[i])});
        }
    }
    if (family.linear) {
        const std::size_t d = ds.dim + (family.linear->include_offset ? 1 : 0);
        phi_.assign(d, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto x = ds.x(rows_[i]);
            for (std::size_t j = 0; j < ds.dim; ++j) phi_[j][i] = x[j];
            if (family.linear->include_offset) phi_[ds.dim][i] = 1.0;
        }
    }
}

double CompiledFamily::member_mean(const MemberCache& m, std::span<const double> values,
                                   std::span<const double> s, std::size_t begin,
                                   std::size_t end) const {
    double acc = 0.0;
    switch (m.fkind) {
        case AuditorDescriptor::FPart::One:
            for (std::size_t i = begin; i < end; ++i) acc += m.a[i] * 1.0 * s[i];
            break;
        case AuditorDescriptor::FPart::BinInd:
            for (std::size_t i = begin; i < end; ++i) {
                const double v = values[i];
                const bool in = v >= m.bin_lo && (m.hi_closed ? v <= m.bin_hi : v < m.bin_hi);
                if (in) acc += m.a[i] * 1.0 * s[i];
            }
            break;
        case AuditorDescriptor::FPart::FMinusBase:
            for (std::size_t i = begin; i < end; ++i) acc += m.a[i] * (values[i] - m.p[i]) * s[i];
            break;
    }
    return acc / static_cast<double>(end - begin);
}

std::pair<AuditorDescriptor, double> CompiledFamily::linear_best(std::span<const double> s,
                                                                 std::size_t begin,
                                                                 std::size_t end) const {
    const std::size_t d = phi_.size();
    std::vector<double> v(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        const auto& col = phi_[j];
        for (std::size_t i = begin; i < end; ++i) acc += col[i] * s[i];
        v[j] = acc / static_cast<double>(end - begin);
    }
    double norm = 0.0;
    for (double c : v) norm += c * c;
    norm = std::sqrt(norm);
    AuditorDescriptor lin;
    lin.kind = AuditorDescriptor::Kind::Linear;
    lin.weights.assign(d, 0.0);
    if (norm > 0.0) {
        const double scale = family_->linear->b_w / norm;
        for (std::size_t j = 0; j < d; ++j) lin.weights[j] = scale * v[j];
    }
    if (family_->linear->include_offset) {
        lin.offset = lin.weights.back();
        lin.weights.pop_back();
    }
    return {std::move(lin), family_->linear->b_w * norm};
}

WeakLearnResult CompiledFamily::weak_learn(std::span<const double> values,
                                           std::span<const double> s, std::size_t begin,
                                           std::size_t end) const {
    if (begin >= end || end > rows_.size())
        fail(ErrorCode::InvalidArgument, "weak_learn: bad window");
    WeakLearnResult best;
    bool have = false;
    for (std::size_t m = 0; m < members_.size(); ++m) {
        const double mean = member_mean(members_[m], values, s, begin, end);
        if (!std::isfinite(mean)) fail(ErrorCode::Numeric, "weak_learn: non-finite violation");
        if (!have || mean > best.violation) {
            best.violation = mean;
            best.member_index = static_cast<int>(m);
            have = true;
        }
    }
    if (have) best.best = family_->members[static_cast<std::size_t>(best.member_index)];

    if (family_->linear) {
        auto [lin, viol] = linear_best(s, begin, end);
        if (!have || viol > best.violation) {
            best.best = std::move(lin);
            best.member_index = -1;
            best.violation = viol;
            have = true;
        }
    }
    if (!have) fail(ErrorCode::InvalidArgument, "auditor family is empty");
    // Closure makes the signed max nonnegative; an exactly-zero signal keeps
    // the first member with violation 0.
    if (best.violation < 0.0 && !family_->members.empty()) {
        best.violation = 0.0;
        best.member_index = 0;
        best.best = family_->members.front();
    }
    return best;
}

AuditReport CompiledFamily::audit(std::span<const double> values, std::span<const double> s,
                                  std::size_t begin, std::size_t end) const {
    AuditReport rep;
    for (std::size_t m = 0; m < members_.size(); ++m) {
        const double mean = member_mean(members_[m], values, s, begin, end);
        rep.rows.push_back({family_->members[m].display(), mean});
        rep.max_abs_violation = std::max(rep.max_abs_violation, std::fabs(mean));
    }
    if (family_->linear) {
        // The ball's max |mean| equals the closed-form violation.
        auto [lin, viol] = linear_best(s, begin, end);
        (void)lin;
        rep.rows.push_back({"linear-ball", viol});
        rep.max_abs_violation = std::max(rep.max_abs_violation, viol);
    }
    return rep;
}

void CompiledFamily::member_values(int member_index, const AuditorDescriptor& desc,
                                   std::span<const double> values, std::vector<double>& out) const {
    const std::size_t n = rows_.size();
    out.resize(n);
    if (member_index >= 0) {
        const auto& m = members_[static_cast<std::size_t>(member_index)];
        switch (m.fkind) {
            case AuditorDescriptor::FPart::One:
                for (std::size_t i = 0; i < n; ++i) out[i] = m.a[i] * 1.0;
                break;
            case AuditorDescriptor::FPart::BinInd:
                for (std::size_t i = 0; i < n; ++i) {
                    const double v = values[i];
                    const bool in = v >= m.bin_lo && (m.hi_closed ? v <= m.bin_hi : v < m.bin_hi);
                    out[i] = in ? m.a[i] * 1.0 : m.a[i] * 0.0;
                }
                break;
            case AuditorDescriptor::FPart::FMinusBase:
                for (std::size_t i = 0; i < n; ++i) out[i] = m.a[i] * (values[i] - m.p[i]);
                break;
        }
        return;
    }
    for (std::size_t i = 0; i < n; ++i)
        out[i] = desc.eval(values[i], RowView{ds_->x(rows_[i]), ds_->g(rows_[i])});
}

WeakLearnResult weak_learn(const AuditorFamily& family, std::span<const double> predictions,
                           const Dataset& ds, const Mapping& mapping) {
    if (predictions.size() != ds.rows)
        fail(ErrorCode::InvalidArgument, "weak_learn: predictions not aligned with dataset rows");
    CompiledFamily compiled(family, ds, {});
    std::vector<double> s(ds.rows);
    for (std::size_t i = 0; i < ds.rows; ++i)
        s[i] = mapping.s(predictions[i], ds.has_labels() ? ds.y(i) : 0.0);
    return compiled.weak_learn(predictions, s, 0, ds.rows);
}

AuditReport audit(const AuditorFamily& family, std::span<const double> predictions,
                  const Dataset& ds, const Mapping& mapping) {
    if (predictions.size() != ds.rows)
        fail(ErrorCode::InvalidArgument, "audit: predictions not aligned with dataset rows");
    CompiledFamily compiled(family, ds, {});
    std::vector<double> s(ds.rows);
    for (std::size_t i = 0; i < ds.rows; ++i)
        s[i] = mapping.s(predictions[i], ds.has_labels() ? ds.y(i) : 0.0);
    return compiled.audit(predictions, s, 0, ds.rows);
}

} // namespace happymap
