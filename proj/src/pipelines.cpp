#include "pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chain.hpp"
#include "csv.hpp"
#include "engine.hpp"
#include "fairness.hpp"
#include "shift.hpp"
#include "synth.hpp"

namespace happymap {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) fail(ErrorCode::InvalidArgument, where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) fail(ErrorCode::InvalidArgument, where + ": unknown key '" + it.key() + "'");
    }
}

constexpr std::initializer_list<const char*> kFitKeys = {"alpha", "eta", "max_iters", "mode",
                                                         "fold_size", "seed"};

FitConfig parse_fit_config(const json& cfg) {
    FitConfig fc;
    if (cfg.contains("alpha")) fc.alpha = cfg.at("alpha").get<double>();
    if (cfg.contains("eta") && !(cfg.at("eta").is_string() && cfg.at("eta") == "auto"))
        fc.eta = cfg.at("eta").get<double>();
    if (cfg.contains("max_iters") &&
        !(cfg.at("max_iters").is_string() && cfg.at("max_iters") == "auto"))
        fc.max_iters = cfg.at("max_iters").get<long long>();
    if (cfg.contains("mode")) {
        const std::string m = cfg.at("mode").get<std::string>();
        if (m == "population") fc.mode = FitMode::Population;
        else if (m == "fresh-folds") fc.mode = FitMode::FreshFolds;
        else if (m == "reuse") fc.mode = FitMode::Reuse;
        else fail(ErrorCode::InvalidArgument, "mode must be population, fresh-folds or reuse");
    }
    if (cfg.contains("fold_size")) fc.fold_size = cfg.at("fold_size").get<std::size_t>();
    if (cfg.contains("seed")) fc.seed = cfg.at("seed").get<uint64_t>();
    return fc;
}

InitialPredictor parse_f0(const json& j, const Dataset& ds) {
    if (!j.is_object() || !j.contains("kind"))
        fail(ErrorCode::InvalidArgument, "f0 must be an object with a kind");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "label-mean") {
        check_keys(j, {"kind"}, "f0");
        if (!ds.has_labels()) fail(ErrorCode::InvalidArgument, "label-mean f0 requires labels");
        double m = 0.0;
        for (double y : ds.labels) m += y;
        return InitialPredictor::constant(m / static_cast<double>(ds.rows));
    }
    if (kind == "label-quantile") {
        check_keys(j, {"kind", "level"}, "f0");
        return InitialPredictor::constant(label_quantile(ds, j.at("level").get<double>()));
    }
    if (kind == "column" && j.contains("name")) {
        const int col = ds.find_feature(j.at("name").get<std::string>());
        if (col < 0)
            fail(ErrorCode::InvalidArgument, "f0 column '" + j.at("name").get<std::string>() +
                                                 "' not found among features");
        InitialPredictor p;
        p.kind = InitialPredictor::Kind::Column;
        p.column = col;
        return p;
    }
    InitialPredictor p = InitialPredictor::from_json(j);
    if (p.kind == InitialPredictor::Kind::Column &&
        static_cast<std::size_t>(p.column) >= ds.dim)
        fail(ErrorCode::InvalidArgument, "f0 column index out of range");
    return p;
}

std::vector<GroupPredicate> parse_predicate_list(const json& j, const Dataset& ds) {
    std::vector<GroupPredicate> preds;
    for (const auto& jp : j) {
        check_keys(jp, {"feature", "op", "threshold", "name", "terms"}, "group predicate");
        GroupPredicate g;
        if (jp.contains("terms")) {
            for (const auto& jt : jp.at("terms")) {
                check_keys(jt, {"feature", "op", "threshold"}, "group term");
                PredTerm t;
                t.col = jt.at("feature").get<int>();
                t.greater = jt.at("op").get<std::string>() == "gt";
                t.tau = jt.at("threshold").get<double>();
                g.terms.push_back(t);
            }
        } else {
            PredTerm t;
            t.col = jp.at("feature").get<int>();
            t.greater = jp.at("op").get<std::string>() == "gt";
            t.tau = jp.at("threshold").get<double>();
            g.terms.push_back(t);
        }
        for (const auto& t : g.terms)
            if (t.col < 0 || static_cast<std::size_t>(t.col) >= ds.dim)
                fail(ErrorCode::InvalidArgument, "group predicate references a missing feature");
        g.name = jp.contains("name") ? jp.at("name").get<std::string>() : "p" + std::to_string(preds.size());
        preds.push_back(std::move(g));
    }
    return preds;
}

// "columns" uses the dataset's g_ columns; otherwise an array of predicates.
std::vector<GroupPredicate> parse_group_source(const json& j, const Dataset& ds) {
    if (j.is_string() && j.get<std::string>() == "columns") {
        auto preds = group_predicates_from_columns(ds);
        if (preds.empty()) fail(ErrorCode::InvalidArgument, "dataset has no g_ group columns");
        return preds;
    }
    if (j.is_array()) return parse_predicate_list(j, ds);
    fail(ErrorCode::InvalidArgument, "groups must be \"columns\" or a predicate array");
}

std::vector<std::vector<double>> parse_theta_grid(const json& j, const json* oracle) {
    std::vector<std::vector<double>> grid;
    for (const auto& e : j) {
        if (e.is_string()) {
            if (e.get<std::string>() != "oracle" || !oracle)
                fail(ErrorCode::InvalidArgument, "theta_grid entries are arrays or \"oracle\"");
            grid.push_back(oracle::true_theta(*oracle));
        } else {
            grid.push_back(e.get<std::vector<double>>());
        }
    }
    if (grid.empty()) fail(ErrorCode::InvalidArgument, "theta_grid must be non-empty");
    return grid;
}

std::vector<InitialPredictor> parse_p_list(const json& j, const Dataset& ds, const json* oracle) {
    std::vector<InitialPredictor> ps;
    for (const auto& e : j) {
        if (e.is_object() && e.contains("kind") && e.at("kind") == "oracle") {
            if (!oracle) fail(ErrorCode::InvalidArgument, "oracle p entry needs an oracle block");
            ps.push_back(oracle::bayes_predictor(*oracle));
        } else {
            ps.push_back(parse_f0(e, ds));
        }
    }
    if (ps.empty()) fail(ErrorCode::InvalidArgument, "p_list must be non-empty");
    return ps;
}

std::pair<double, double> parse_clamp(const json& cfg) {
    if (!cfg.contains("clamp")) return {0.05, 0.95};
    const auto c = cfg.at("clamp").get<std::vector<double>>();
    if (c.size() != 2) fail(ErrorCode::InvalidArgument, "clamp must be [c1,c2]");
    return {c[0], c[1]};
}

AuditorFamily parse_family(const json& j, const Dataset& ds, const ProjectionInterval& proj,
                           const json* oracle) {
    if (!j.is_object() || !j.contains("kind"))
        fail(ErrorCode::InvalidArgument, "family must be an object with a kind");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") {
        check_keys(j, {"kind"}, "family");
        return make_constant_family();
    }
    if (kind == "groups") {
        check_keys(j, {"kind", "source", "predicates", "depth", "scale"}, "family");
        std::vector<GroupPredicate> preds;
        if (j.contains("predicates")) preds = parse_predicate_list(j.at("predicates"), ds);
        else preds = parse_group_source(j.contains("source") ? j.at("source") : json("columns"), ds);
        const int depth = j.contains("depth") ? j.at("depth").get<int>() : 1;
        bool inv_mass = false;
        if (j.contains("scale")) {
            const std::string s = j.at("scale").get<std::string>();
            if (s == "inv-mass") inv_mass = true;
            else if (s != "none") fail(ErrorCode::InvalidArgument, "group scale must be none or inv-mass");
        }
        return make_group_family(ds, std::move(preds), depth, inv_mass);
    }
    if (kind == "stumps") {
        check_keys(j, {"kind", "thresholds_per_feature"}, "family");
        return make_stump_family(ds, j.at("thresholds_per_feature").get<int>());
    }
    if (kind == "linear") {
        check_keys(j, {"kind", "b_w", "include_offset"}, "family");
        return make_linear_family(ds, j.contains("b_w") ? j.at("b_w").get<double>() : 1.0,
                                  j.contains("include_offset") && j.at("include_offset").get<bool>());
    }
    if (kind == "propensity") {
        check_keys(j, {"kind", "theta_grid", "clamp", "include_constant"}, "family");
        auto [c1, c2] = parse_clamp(j);
        return make_propensity_family(parse_theta_grid(j.at("theta_grid"), oracle), c1, c2,
                                      j.contains("include_constant") &&
                                          j.at("include_constant").get<bool>());
    }
    if (kind == "shift-composite") {
        check_keys(j, {"kind", "theta_grid", "p_list", "clamp"}, "family");
        auto [c1, c2] = parse_clamp(j);
        return make_shift_composite_family(parse_theta_grid(j.at("theta_grid"), oracle),
                                           parse_p_list(j.at("p_list"), ds, oracle), c1, c2, &ds);
    }
    if (kind == "multivalidity") {
        check_keys(j, {"kind", "lambda", "base"}, "family");
        const double lambda = j.contains("lambda") ? j.at("lambda").get<double>()
                                                   : (proj.hi - proj.lo) / 10.0;
        std::vector<GroupPredicate> base;
        if (j.contains("base") && !(j.at("base").is_string() && j.at("base") == "none"))
            base = parse_group_source(j.at("base"), ds);
        return make_multivalidity_family(lambda, proj.lo, proj.hi, base);
    }
    if (kind == "centered-groups") {
        check_keys(j, {"kind", "source", "predicates"}, "family");
        std::vector<GroupPredicate> preds;
        if (j.contains("predicates")) preds = parse_predicate_list(j.at("predicates"), ds);
        else preds = parse_group_source(j.contains("source") ? j.at("source") : json("columns"), ds);
        return make_centered_group_family(ds, preds);
    }
    if (kind == "union") {
        check_keys(j, {"kind", "parts"}, "family");
        std::vector<AuditorFamily> parts;
        for (const auto& part : j.at("parts")) parts.push_back(parse_family(part, ds, proj, oracle));
        return union_family(std::move(parts));
    }
    fail(ErrorCode::InvalidArgument, "unknown family kind '" + kind + "'");
}

ProjectionInterval parse_proj(const json& cfg, const Dataset& ds, const std::string& dflt) {
    json j = cfg.contains("proj") ? cfg.at("proj") : json(dflt);
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "unit") return ProjectionInterval{0.0, 1.0};
        if (s == "label-range") return label_range_proj(ds);
        fail(ErrorCode::InvalidArgument, "proj must be unit, label-range or {lo,hi}");
    }
    check_keys(j, {"lo", "hi"}, "proj");
    ProjectionInterval p;
    p.lo = j.contains("lo") ? real_from_json(j.at("lo")) : -kInf;
    p.hi = j.contains("hi") ? real_from_json(j.at("hi")) : kInf;
    p.validate();
    return p;
}

json metric_row(const std::string& metric, const std::string& group, const std::string& bin,
                std::size_t n, double value, double deviation, double se) {
    json r;
    r["metric"] = metric;
    r["group_id"] = group;
    r["bin_id"] = bin;
    r["n"] = n;
    r["value"] = value;
    r["deviation"] = deviation;
    r["se"] = se;
    return r;
}

std::string metric_rows_csv(const json& rows) {
    std::ostringstream os;
    os << "metric,group_id,bin_id,n,value,deviation,se\n";
    for (const auto& r : rows) {
        os << r.at("metric").get<std::string>() << ",\"" << r.at("group_id").get<std::string>()
           << "\",\"" << r.at("bin_id").get<std::string>() << "\"," << r.at("n").get<std::size_t>()
           << "," << format_real(r.at("value").get<double>()) << ","
           << format_real(r.at("deviation").get<double>()) << ","
           << format_real(r.at("se").get<double>()) << "\n";
    }
    return os.str();
}

json coverage_cells_json(const std::vector<CellCoverage>& cells) {
    json rows = json::array();
    for (const auto& c : cells) {
        json r;
        r["group_id"] = c.group_id;
        r["bin_id"] = c.bin_id;
        r["n"] = c.n;
        r["coverage"] = c.coverage;
        r["deviation"] = c.deviation;
        r["mass_weighted_deviation"] = c.mass_weighted;
        r["se"] = c.se;
        rows.push_back(r);
    }
    return rows;
}

void attach_report(json& bundle, const RunReport& report, const std::string& key_prefix = "") {
    bundle[key_prefix.empty() ? "report" : key_prefix] = report.to_json();
    bundle[key_prefix.empty() ? "report_csv" : key_prefix + "_csv"] = report.to_csv();
    for (const auto& w : report.warnings) bundle["warnings"].push_back(w);
}

double max_abs_cell_mass_dev(const std::vector<CellCoverage>& cells, bool skip_marginal) {
    double m = 0.0;
    for (const auto& c : cells) {
        if (skip_marginal && c.group_id == "all" && c.bin_id == "all") continue;
        m = std::max(m, std::fabs(c.mass_weighted));
    }
    return m;
}

json run_fit(const json& cfg, const Dataset& ds, const Dataset* holdout) {
    check_keys(cfg,
               {"alpha", "eta", "max_iters", "mode", "fold_size", "seed", "mapping",
                "density_bound", "f0", "family", "proj"},
               "fit config");
    const double density_bound =
        cfg.contains("density_bound") ? cfg.at("density_bound").get<double>() : 10.0;
    Mapping mapping = Mapping::parse(cfg.at("mapping").get<std::string>(), density_bound);
    const std::string proj_default = mapping.id == MappingId::Quantile ? "label-range" : "unit";
    const ProjectionInterval proj = parse_proj(cfg, ds, proj_default);
    AuditorFamily family = parse_family(cfg.at("family"), ds, proj, nullptr);
    InitialPredictor f0 =
        cfg.contains("f0") ? parse_f0(cfg.at("f0"), ds)
                           : (mapping.id == MappingId::Quantile
                                  ? InitialPredictor::constant(label_quantile(ds, mapping.delta))
                                  : parse_f0(json{{"kind", "label-mean"}}, ds));
    const FitConfig fc = parse_fit_config(cfg);

    FitResult res = fit(fc, ds, family, mapping, f0, proj);

    json bundle;
    bundle["warnings"] = json::array();
    for (const auto& w : family.warnings) bundle["warnings"].push_back(w);
    bundle["chain"] = json::parse(res.chain.serialize());
    attach_report(bundle, res.report);

    json metrics;
    metrics["status"] = res.report.status_string();
    metrics["final_max_violation"] = res.report.final_max_violation;
    metrics["iterations"] = res.report.iterations.size();
    json rows = json::array();
    rows.push_back(metric_row("max_violation", "all", "all", ds.rows,
                              res.report.final_max_violation, 0.0, 0.0));
    if (holdout) {
        const std::vector<double> hp = res.chain.predict_batch(*holdout);
        const AuditReport ar = audit(family, hp, *holdout, mapping);
        metrics["holdout_max_violation"] = ar.max_abs_violation;
        rows.push_back(metric_row("max_violation_holdout", "all", "all", holdout->rows,
                                  ar.max_abs_violation, 0.0, 0.0));
    }
    bundle["metrics"] = metrics;
    bundle["metric_rows"] = rows;
    bundle["metrics_csv"] = metric_rows_csv(rows);
    return bundle;
}

json run_audit(const json& cfg, const Dataset& ds) {
    check_keys(cfg, {"mapping", "density_bound", "family", "chain"}, "audit config");
    const double density_bound =
        cfg.contains("density_bound") ? cfg.at("density_bound").get<double>() : 10.0;
    Mapping mapping = Mapping::parse(cfg.at("mapping").get<std::string>(), density_bound);
    PredictorChain chain = PredictorChain::deserialize(cfg.at("chain").dump());
    const ProjectionInterval proj = chain.proj;
    AuditorFamily family = parse_family(cfg.at("family"), ds, proj, nullptr);
    const std::vector<double> preds = chain.predict_batch(ds);
    const AuditReport rep = audit(family, preds, ds, mapping);

    json bundle;
    bundle["warnings"] = json::array();
    json metrics;
    metrics["max_abs_violation"] = rep.max_abs_violation;
    bundle["metrics"] = metrics;
    std::ostringstream os;
    os << "auditor_id,mean_cs\n";
    json rows = json::array();
    for (const auto& r : rep.rows) {
        os << "\"" << r.auditor_id << "\"," << format_real(r.mean_cs) << "\n";
        json jr;
        jr["auditor_id"] = r.auditor_id;
        jr["mean_cs"] = r.mean_cs;
        rows.push_back(jr);
    }
    bundle["metric_rows"] = rows;
    bundle["metrics_csv"] = os.str();
    return bundle;
}

json run_conformal(const json& cfg, const Dataset& ds, const Dataset* holdout) {
    check_keys(cfg,
               {"delta", "alpha", "eta", "max_iters", "mode", "fold_size", "seed", "f0", "family",
                "density_bound"},
               "conformal config");
    const double delta = cfg.at("delta").get<double>();
    const double density_bound =
        cfg.contains("density_bound") ? cfg.at("density_bound").get<double>() : 10.0;
    const ProjectionInterval proj = label_range_proj(ds);
    AuditorFamily family = parse_family(cfg.at("family"), ds, proj, nullptr);
    InitialPredictor f0 = cfg.contains("f0")
                              ? parse_f0(cfg.at("f0"), ds)
                              : InitialPredictor::constant(label_quantile(ds, delta));
    const FitConfig fc = parse_fit_config(cfg);
    FitResult res = fit_lower_bound(delta, ds, family, fc, f0, density_bound, proj);

    json bundle;
    bundle["warnings"] = json::array();
    for (const auto& w : family.warnings) bundle["warnings"].push_back(w);
    bundle["chain"] = json::parse(res.chain.serialize());
    attach_report(bundle, res.report);

    const auto groups = group_predicates_from_columns(ds);
    const std::vector<double> train_preds = res.chain.predict_batch(ds);
    const auto train_cells = coverage_cells(train_preds, ds, delta, groups, 0.0, proj);
    json metrics;
    metrics["delta"] = delta;
    metrics["final_max_violation"] = res.report.final_max_violation;
    metrics["train_coverage"] = train_cells.front().coverage;
    bundle["coverage_train"] = coverage_cells_json(train_cells);
    bundle["metrics_csv"] = coverage_csv(train_cells);
    if (holdout) {
        const std::vector<double> hp = res.chain.predict_batch(*holdout);
        const auto cells = coverage_cells(hp, *holdout, delta, groups, 0.0, proj);
        metrics["holdout_coverage"] = cells.front().coverage;
        bundle["coverage_holdout"] = coverage_cells_json(cells);
        bundle["holdout_csv"] = coverage_csv(cells);
    }
    bundle["metrics"] = metrics;
    return bundle;
}

json run_conformal2(const json& cfg, const Dataset& ds, const Dataset* holdout) {
    check_keys(cfg,
               {"delta", "alpha", "eta", "max_iters", "mode", "fold_size", "seed", "family",
                "density_bound"},
               "conformal2 config");
    const double delta = cfg.at("delta").get<double>();
    const double density_bound =
        cfg.contains("density_bound") ? cfg.at("density_bound").get<double>() : 10.0;
    const ProjectionInterval proj = label_range_proj(ds);
    AuditorFamily family = parse_family(cfg.at("family"), ds, proj, nullptr);
    const FitConfig fc = parse_fit_config(cfg);
    TwoSidedResult res = fit_two_sided(delta, ds, family, fc, density_bound);

    json bundle;
    bundle["warnings"] = json::array();
    for (const auto& w : family.warnings) bundle["warnings"].push_back(w);
    for (const auto& w : res.warnings) bundle["warnings"].push_back(w);
    bundle["interval"] = json::parse(res.interval.serialize());
    attach_report(bundle, res.lower_fit.report, "report_lower");
    attach_report(bundle, res.upper_fit.report, "report_upper");

    const auto groups = group_predicates_from_columns(ds);
    auto interval_rows = [&](const Dataset& d) {
        json rows = json::array();
        std::vector<double> lo = res.interval.lower->predict_batch(d);
        std::vector<double> hi = res.interval.upper->predict_batch(d);
        auto add_group = [&](const std::string& name, const std::vector<PredTerm>* terms) {
            std::size_t n = 0, cov = 0;
            double width = 0.0;
            for (std::size_t i = 0; i < d.rows; ++i) {
                if (terms) {
                    RowView row{d.x(i), d.g(i)};
                    bool in = true;
                    for (const auto& t : *terms)
                        if (!t.eval(row)) { in = false; break; }
                    if (!in) continue;
                }
                ++n;
                if (lo[i] <= d.y(i) && d.y(i) <= hi[i]) ++cov;
                width += hi[i] - lo[i];
            }
            const double c = n ? static_cast<double>(cov) / static_cast<double>(n) : 0.0;
            const double se = n ? std::sqrt(c * (1.0 - c) / static_cast<double>(n)) : 0.0;
            rows.push_back(metric_row("interval_coverage", name, "all", n, c, c - (1.0 - delta), se));
            rows.push_back(metric_row("interval_width", name, "all", n,
                                      n ? width / static_cast<double>(n) : 0.0, 0.0, 0.0));
        };
        add_group("all", nullptr);
        for (const auto& g : groups) add_group(g.name, &g.terms);
        return rows;
    };
    json train_rows = interval_rows(ds);
    json metrics;
    metrics["delta"] = delta;
    metrics["crossing_fraction"] = res.crossing_fraction;
    metrics["train_coverage"] = train_rows[0]["value"];
    bundle["metric_rows"] = train_rows;
    bundle["metrics_csv"] = metric_rows_csv(train_rows);
    if (holdout) {
        json hrows = interval_rows(*holdout);
        metrics["holdout_coverage"] = hrows[0]["value"];
        bundle["holdout_rows"] = hrows;
        bundle["holdout_csv"] = metric_rows_csv(hrows);
    }
    bundle["metrics"] = metrics;
    return bundle;
}

json run_multivalid(const json& cfg, const Dataset& ds, const Dataset* holdout) {
    check_keys(cfg,
               {"delta", "lambda", "alpha", "eta", "max_iters", "mode", "fold_size", "seed", "f0",
                "base", "density_bound"},
               "multivalid config");
    const double delta = cfg.at("delta").get<double>();
    const double density_bound =
        cfg.contains("density_bound") ? cfg.at("density_bound").get<double>() : 10.0;
    const ProjectionInterval proj = label_range_proj(ds);
    const double lambda =
        cfg.contains("lambda") ? cfg.at("lambda").get<double>() : (proj.hi - proj.lo) / 10.0;
    std::vector<GroupPredicate> base;
    if (cfg.contains("base") && !(cfg.at("base").is_string() && cfg.at("base") == "none"))
        base = parse_group_source(cfg.at("base"), ds);
    InitialPredictor f0 = cfg.contains("f0")
                              ? parse_f0(cfg.at("f0"), ds)
                              : InitialPredictor::constant(label_quantile(ds, delta));
    const FitConfig fc = parse_fit_config(cfg);
    MultivalidResult res = fit_multivalid(delta, ds, lambda, base, fc, f0, density_bound);

    json bundle;
    bundle["warnings"] = json::array();
    bundle["chain"] = json::parse(res.fit.chain.serialize());
    attach_report(bundle, res.fit.report);

    const std::vector<double> train_preds = res.fit.chain.predict_batch(ds);
    const auto train_cells = coverage_cells(train_preds, ds, delta, base, lambda, proj);
    json metrics;
    metrics["delta"] = delta;
    metrics["lambda"] = lambda;
    metrics["max_cell_mass_deviation_train"] = max_abs_cell_mass_dev(train_cells, true);
    bundle["cells_train"] = coverage_cells_json(train_cells);
    bundle["metrics_csv"] = coverage_csv(train_cells);
    if (holdout) {
        const std::vector<double> hp = res.fit.chain.predict_batch(*holdout);
        const auto cells = coverage_cells(hp, *holdout, delta, base, lambda, proj);
        metrics["max_cell_mass_deviation_holdout"] = max_abs_cell_mass_dev(cells, true);
        bundle["cells_holdout"] = coverage_cells_json(cells);
        bundle["holdout_csv"] = coverage_csv(cells);
    }
    bundle["metrics"] = metrics;
    return bundle;
}

std::string shift_csv(const std::string& scenario, std::size_t n_so, std::size_t n_ta,
                      const std::vector<std::pair<std::string, std::pair<double, double>>>& rows,
                      bool realizable) {
    std::ostringstream os;
    os << "scenario,n_source,n_target,metric,value,deviation,realizable\n";
    for (const auto& [metric, vd] : rows) {
        os << "\"" << scenario << "\"," << n_so << "," << n_ta << "," << metric << ","
           << format_real(vd.first) << "," << format_real(vd.second) << ","
           << (realizable ? "yes" : "no") << "\n";
    }
    return os.str();
}

json run_shift_conformal(const json& cfg, const Dataset& ds) {
    check_keys(cfg,
               {"delta", "alpha", "eta", "max_iters", "mode", "fold_size", "seed", "f0",
                "theta_grid", "clamp", "density_bound", "oracle", "scenario", "realizable"},
               "shift-conformal config");
    const double delta = cfg.at("delta").get<double>();
    const json* oracle = cfg.contains("oracle") ? &cfg.at("oracle") : nullptr;
    const double density_bound = cfg.contains("density_bound")
                                     ? cfg.at("density_bound").get<double>()
                                     : (oracle ? oracle::density_bound(*oracle) : 10.0);
    auto [c1, c2] = parse_clamp(cfg);
    const auto grid = parse_theta_grid(cfg.at("theta_grid"), oracle);

    // Warm start at the source-marginal quantile; target labels stay unseen.
    const auto source_rows = domain_rows(ds, 0);
    if (source_rows.empty()) fail(ErrorCode::InvalidArgument, "no source rows");
    std::vector<double> ys;
    for (std::size_t i : source_rows) ys.push_back(ds.y(i));
    std::sort(ys.begin(), ys.end());
    const double warm = ys[static_cast<std::size_t>(delta * static_cast<double>(ys.size() - 1))];

    InitialPredictor f0 =
        cfg.contains("f0") ? parse_f0(cfg.at("f0"), ds) : InitialPredictor::constant(warm);
    const FitConfig fc = parse_fit_config(cfg);
    ShiftConformalResult res = fit_shift_conformal(delta, ds, grid, c1, c2, fc, f0, density_bound);

    json bundle;
    bundle["warnings"] = json::array();
    bundle["chain"] = json::parse(res.fit.chain.serialize());
    attach_report(bundle, res.fit.report);

    json metrics;
    metrics["delta"] = delta;
    metrics["target_coverage"] = res.target_coverage;
    metrics["source_coverage"] = res.source_coverage;
    metrics["target_deviation"] = res.target_coverage - (1.0 - delta);
    metrics["n_target"] = res.n_target;
    bundle["metrics"] = metrics;
    bundle["metrics_csv"] = shift_csv(
        cfg.contains("scenario") ? cfg.at("scenario").get<std::string>() : "shift-conformal",
        ds.rows - res.n_target, res.n_target,
        {{"target_coverage", {res.target_coverage, res.target_coverage - (1.0 - delta)}},
         {"source_coverage", {res.source_coverage, res.source_coverage - (1.0 - delta)}}},
        cfg.contains("realizable") && cfg.at("realizable").get<bool>());
    return bundle;
}

json run_universal_l2(const json& cfg, const Dataset& ds) {
    check_keys(cfg,
               {"alpha", "eta", "max_iters", "mode", "fold_size", "seed", "f0", "theta_grid",
                "p_list", "clamp", "oracle", "scenario", "realizable"},
               "universal-l2 config");
    const json* oracle = cfg.contains("oracle") ? &cfg.at("oracle") : nullptr;
    auto [c1, c2] = parse_clamp(cfg);
    const auto grid = parse_theta_grid(cfg.at("theta_grid"), oracle);
    const auto p_list = parse_p_list(cfg.at("p_list"), ds, oracle);
    InitialPredictor f0 =
        cfg.contains("f0") ? parse_f0(cfg.at("f0"), ds) : InitialPredictor::constant(0.5);
    const FitConfig fc = parse_fit_config(cfg);
    UniversalL2Result res = fit_universal_l2(ds, grid, p_list, c1, c2, fc, f0, oracle);

    json bundle;
    bundle["warnings"] = json::array();
    bundle["chain"] = json::parse(res.fit.chain.serialize());
    attach_report(bundle, res.fit.report);

    json metrics;
    metrics["target_mse_label"] = res.target_mse_label;
    metrics["n_target"] = res.n_target;
    std::vector<std::pair<std::string, std::pair<double, double>>> rows = {
        {"target_mse_label", {res.target_mse_label, 0.0}}};
    if (res.target_mse_bayes >= 0.0) {
        metrics["target_mse_bayes"] = res.target_mse_bayes;
        metrics["baseline_mse_bayes"] = res.baseline_mse_bayes;
        rows.push_back({"target_mse_bayes", {res.target_mse_bayes, 0.0}});
        rows.push_back({"baseline_mse_bayes", {res.baseline_mse_bayes, 0.0}});
    }
    bundle["metrics"] = metrics;
    bundle["metrics_csv"] = shift_csv(
        cfg.contains("scenario") ? cfg.at("scenario").get<std::string>() : "universal-l2",
        ds.rows - res.n_target, res.n_target, rows,
        cfg.contains("realizable") && cfg.at("realizable").get<bool>());
    return bundle;
}

json run_missing(const json& cfg, const Dataset& ds, const Dataset* oracle_complete) {
    check_keys(cfg,
               {"alpha", "eta", "max_iters", "mode", "fold_size", "seed", "f0", "theta_grid",
                "p_list", "clamp", "oracle", "scenario"},
               "missing config");
    const json* oracle = cfg.contains("oracle") ? &cfg.at("oracle") : nullptr;
    auto [c1, c2] = parse_clamp(cfg);
    const auto grid = parse_theta_grid(cfg.at("theta_grid"), oracle);
    const auto p_list = parse_p_list(cfg.at("p_list"), ds, oracle);
    InitialPredictor f0 =
        cfg.contains("f0") ? parse_f0(cfg.at("f0"), ds) : InitialPredictor::constant(0.5);
    const FitConfig fc = parse_fit_config(cfg);
    MissingFitResult res = fit_missing(ds, grid, p_list, c1, c2, fc, f0, oracle_complete);

    json bundle;
    bundle["warnings"] = json::array();
    bundle["chain"] = json::parse(res.fit.chain.serialize());
    attach_report(bundle, res.fit.report);

    json metrics;
    metrics["n_complete"] = res.n_complete;
    metrics["complete_fraction"] = static_cast<double>(res.n_complete) / static_cast<double>(ds.rows);
    metrics["complete_case_mse"] = res.complete_case_mse;
    std::vector<std::pair<std::string, std::pair<double, double>>> rows = {
        {"complete_case_mse", {res.complete_case_mse, 0.0}}};
    if (res.full_mse >= 0.0) {
        metrics["full_mse"] = res.full_mse;
        rows.push_back({"full_mse", {res.full_mse, 0.0}});
    }
    bundle["metrics"] = metrics;
    bundle["metrics_csv"] =
        shift_csv(cfg.contains("scenario") ? cfg.at("scenario").get<std::string>() : "missing",
                  res.n_complete, ds.rows - res.n_complete, rows, true);
    return bundle;
}

json run_parity(const json& cfg, const Dataset& ds) {
    check_keys(cfg, {"alpha", "eta", "max_iters", "mode", "fold_size", "seed", "f0", "groups"},
               "parity config");
    const auto groups =
        parse_group_source(cfg.contains("groups") ? cfg.at("groups") : json("columns"), ds);
    InitialPredictor f0 =
        cfg.contains("f0") ? parse_f0(cfg.at("f0"), ds) : InitialPredictor::constant(0.5);
    const FitConfig fc = parse_fit_config(cfg);
    MultiParityResult res = fit_multiparity(ds, groups, fc, f0);

    json bundle;
    bundle["warnings"] = json::array();
    bundle["chain"] = json::parse(res.fit.chain.serialize());
    attach_report(bundle, res.fit.report);

    json metrics;
    metrics["post_sup_violation"] = res.post_sup_violation;
    json rows = json::array();
    rows.push_back(metric_row("sup_violation", "all", "all", ds.rows, res.post_sup_violation, 0.0, 0.0));
    for (std::size_t g = 0; g < groups.size(); ++g)
        rows.push_back(metric_row("selection_rate", groups[g].name, "all", ds.rows,
                                  res.selection_rates[g], 0.0, 0.0));
    bundle["metric_rows"] = rows;
    bundle["metrics"] = metrics;
    bundle["metrics_csv"] = metric_rows_csv(rows);
    return bundle;
}

json run_eval(const json& cfg, const Dataset& ds) {
    check_keys(cfg,
               {"delta", "chain", "interval", "metrics", "family", "mapping", "density_bound",
                "lambda", "oracle"},
               "eval config");
    std::vector<std::string> wanted;
    if (cfg.contains("metrics")) wanted = cfg.at("metrics").get<std::vector<std::string>>();

    std::optional<PredictorChain> chain;
    std::optional<IntervalPredictor> interval;
    if (cfg.contains("chain")) chain = PredictorChain::deserialize(cfg.at("chain").dump());
    if (cfg.contains("interval"))
        interval = IntervalPredictor::deserialize(cfg.at("interval").dump());
    if (!chain && !interval)
        fail(ErrorCode::InvalidArgument, "eval requires a chain or an interval");
    if (wanted.empty()) wanted = chain ? std::vector<std::string>{"coverage", "mse"}
                                       : std::vector<std::string>{"coverage", "width"};

    const auto groups = group_predicates_from_columns(ds);
    json rows = json::array();
    json metrics;

    std::vector<double> preds;
    if (chain) preds = chain->predict_batch(ds);

    for (const auto& m : wanted) {
        if (m == "coverage") {
            const double delta = cfg.at("delta").get<double>();
            if (chain) {
                const double lambda = cfg.contains("lambda") ? cfg.at("lambda").get<double>() : 0.0;
                const auto cells = coverage_cells(preds, ds, delta, groups, lambda, chain->proj);
                for (const auto& c : cells)
                    rows.push_back(metric_row("coverage", c.group_id, c.bin_id, c.n, c.coverage,
                                              c.deviation, c.se));
                metrics["coverage"] = cells.front().coverage;
            } else {
                auto add_group = [&](const std::string& name, const std::vector<PredTerm>* terms) {
                    std::size_t n = 0, cov = 0;
                    for (std::size_t i = 0; i < ds.rows; ++i) {
                        RowView row{ds.x(i), ds.g(i)};
                        if (terms) {
                            bool in = true;
                            for (const auto& t : *terms)
                                if (!t.eval(row)) { in = false; break; }
                            if (!in) continue;
                        }
                        ++n;
                        if (interval->covers(row, ds.y(i))) ++cov;
                    }
                    const double c = n ? static_cast<double>(cov) / static_cast<double>(n) : 0.0;
                    const double se = n ? std::sqrt(c * (1.0 - c) / static_cast<double>(n)) : 0.0;
                    rows.push_back(
                        metric_row("coverage", name, "all", n, c, c - (1.0 - delta), se));
                    if (name == "all") metrics["coverage"] = c;
                };
                add_group("all", nullptr);
                for (const auto& g : groups) add_group(g.name, &g.terms);
            }
        } else if (m == "mse") {
            if (!chain) fail(ErrorCode::InvalidArgument, "mse metric requires a chain");
            double mse = 0.0;
            for (std::size_t i = 0; i < ds.rows; ++i) {
                const double d = preds[i] - ds.y(i);
                mse += d * d;
            }
            mse /= static_cast<double>(ds.rows);
            rows.push_back(metric_row("mse", "all", "all", ds.rows, mse, 0.0, 0.0));
            metrics["mse"] = mse;
            if (cfg.contains("oracle")) {
                double mb = 0.0;
                for (std::size_t i = 0; i < ds.rows; ++i) {
                    const double d = preds[i] - oracle::cond_mean(cfg.at("oracle"), ds.x(i));
                    mb += d * d;
                }
                mb /= static_cast<double>(ds.rows);
                rows.push_back(metric_row("mse_to_bayes", "all", "all", ds.rows, mb, 0.0, 0.0));
                metrics["mse_to_bayes"] = mb;
            }
        } else if (m == "width") {
            if (!interval) fail(ErrorCode::InvalidArgument, "width metric requires an interval");
            double width = 0.0;
            for (std::size_t i = 0; i < ds.rows; ++i) {
                auto [lo, hi] = interval->interval(RowView{ds.x(i), ds.g(i)});
                width += hi - lo;
            }
            width /= static_cast<double>(ds.rows);
            rows.push_back(metric_row("width", "all", "all", ds.rows, width, 0.0, 0.0));
            metrics["width"] = width;
        } else if (m == "violation") {
            if (!chain) fail(ErrorCode::InvalidArgument, "violation metric requires a chain");
            const double density_bound =
                cfg.contains("density_bound") ? cfg.at("density_bound").get<double>() : 10.0;
            Mapping mapping = Mapping::parse(cfg.at("mapping").get<std::string>(), density_bound);
            AuditorFamily family = parse_family(cfg.at("family"), ds, chain->proj, nullptr);
            const AuditReport rep = audit(family, preds, ds, mapping);
            rows.push_back(metric_row("max_violation", "all", "all", ds.rows,
                                      rep.max_abs_violation, 0.0, 0.0));
            metrics["max_violation"] = rep.max_abs_violation;
        } else {
            fail(ErrorCode::InvalidArgument, "unknown eval metric '" + m + "'");
        }
    }

    json bundle;
    bundle["warnings"] = json::array();
    bundle["metrics"] = metrics;
    bundle["metric_rows"] = rows;
    bundle["metrics_csv"] = metric_rows_csv(rows);
    return bundle;
}

} // namespace

json run_command(const std::string& command, const json& config, const Dataset& data,
                 const Dataset* holdout) {
    json bundle;
    if (command == "fit") bundle = run_fit(config, data, holdout);
    else if (command == "audit") bundle = run_audit(config, data);
    else if (command == "conformal") bundle = run_conformal(config, data, holdout);
    else if (command == "conformal2") bundle = run_conformal2(config, data, holdout);
    else if (command == "multivalid") bundle = run_multivalid(config, data, holdout);
    else if (command == "shift-conformal") bundle = run_shift_conformal(config, data);
    else if (command == "universal-l2") bundle = run_universal_l2(config, data);
    else if (command == "missing") bundle = run_missing(config, data, holdout);
    else if (command == "parity") bundle = run_parity(config, data);
    else if (command == "eval") bundle = run_eval(config, data);
    else fail(ErrorCode::InvalidArgument, "unknown command '" + command + "'");
    bundle["command"] = command;
    return bundle;
}

} // namespace happymap
