#include "happymap/happymap.h"

#include <cstring>
#include <new>
#include <string>

#include "chain.hpp"
#include "csv.hpp"
#include "pipelines.hpp"
#include "synth.hpp"
#include "types.hpp"
#include "util.hpp"

using namespace happymap;

struct hm_dataset {
    Dataset ds;
};

struct hm_chain {
    PredictorChain chain;
};

namespace {

thread_local std::string g_last_error;

hm_status to_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return HM_ERR_INVALID_ARGUMENT;
        case ErrorCode::Parse: return HM_ERR_PARSE;
        case ErrorCode::Io: return HM_ERR_IO;
        case ErrorCode::Numeric: return HM_ERR_NUMERIC;
        case ErrorCode::Internal: return HM_ERR_INTERNAL;
    }
    return HM_ERR_INTERNAL;
}

template <typename Fn>
hm_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return HM_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return HM_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return HM_ERR_INTERNAL;
    }
}

hm_status invalid(const char* msg) {
    g_last_error = msg;
    return HM_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

nlohmann::json parse_json_arg(const char* text, const char* what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::Parse, std::string(what) + ": " + e.what());
    }
}

} // namespace

extern "C" {

const char* hm_version(void) { return "1.0.0"; }

const char* hm_last_error(void) { return g_last_error.c_str(); }

void hm_string_free(char* s) { delete[] s; }

hm_status hm_dataset_load_csv(const char* path, hm_dataset** out) {
    if (!path || !out) return invalid("hm_dataset_load_csv: null argument");
    return guarded([&] { *out = new hm_dataset{load_dataset_csv(path)}; });
}

hm_status hm_dataset_parse_csv(const char* text, hm_dataset** out) {
    if (!text || !out) return invalid("hm_dataset_parse_csv: null argument");
    return guarded([&] { *out = new hm_dataset{parse_dataset_csv(text)}; });
}

hm_status hm_dataset_save_csv(const hm_dataset* ds, const char* path) {
    if (!ds || !path) return invalid("hm_dataset_save_csv: null argument");
    return guarded([&] { save_dataset_csv(ds->ds, path); });
}

hm_status hm_dataset_format_csv(const hm_dataset* ds, char** out_text) {
    if (!ds || !out_text) return invalid("hm_dataset_format_csv: null argument");
    return guarded([&] { *out_text = dup_string(format_dataset_csv(ds->ds)); });
}

hm_status hm_dataset_create(const double* features, size_t n, size_t d, const double* labels,
                            hm_dataset** out) {
    if (!features || !out) return invalid("hm_dataset_create: null argument");
    return guarded([&] {
        Dataset ds;
        ds.rows = n;
        ds.dim = d;
        ds.features.assign(features, features + n * d);
        if (labels) ds.labels.assign(labels, labels + n);
        for (size_t j = 0; j < d; ++j) ds.feature_names.push_back(std::to_string(j));
        ds.validate();
        *out = new hm_dataset{std::move(ds)};
    });
}

hm_status hm_dataset_split_tail(const hm_dataset* ds, double tail_fraction, hm_dataset** head,
                                hm_dataset** tail) {
    if (!ds) return invalid("hm_dataset_split_tail: null dataset");
    if (!(tail_fraction > 0.0 && tail_fraction < 1.0))
        return invalid("hm_dataset_split_tail: fraction must lie in (0,1)");
    return guarded([&] {
        const Dataset& src = ds->ds;
        const size_t tail_rows = static_cast<size_t>(tail_fraction * static_cast<double>(src.rows));
        if (tail_rows == 0 || tail_rows >= src.rows)
            fail(ErrorCode::InvalidArgument, "split leaves an empty part");
        auto slice = [&](size_t begin, size_t end) {
            Dataset out_ds;
            out_ds.rows = end - begin;
            out_ds.dim = src.dim;
            out_ds.n_groups = src.n_groups;
            out_ds.feature_names = src.feature_names;
            out_ds.group_names = src.group_names;
            out_ds.features.assign(src.features.begin() + begin * src.dim,
                                   src.features.begin() + end * src.dim);
            if (src.has_labels())
                out_ds.labels.assign(src.labels.begin() + begin, src.labels.begin() + end);
            if (src.n_groups)
                out_ds.groups.assign(src.groups.begin() + begin * src.n_groups,
                                     src.groups.begin() + end * src.n_groups);
            if (src.has_domain())
                out_ds.domain.assign(src.domain.begin() + begin, src.domain.begin() + end);
            if (src.has_mask()) {
                out_ds.miss_mask.assign(src.miss_mask.begin() + begin * src.dim,
                                        src.miss_mask.begin() + end * src.dim);
                out_ds.complete.assign(src.complete.begin() + begin, src.complete.begin() + end);
            }
            out_ds.validate();
            return out_ds;
        };
        const size_t cut = src.rows - tail_rows;
        if (head) *head = new hm_dataset{slice(0, cut)};
        if (tail) *tail = new hm_dataset{slice(cut, src.rows)};
    });
}

size_t hm_dataset_rows(const hm_dataset* ds) { return ds ? ds->ds.rows : 0; }
size_t hm_dataset_features(const hm_dataset* ds) { return ds ? ds->ds.dim : 0; }
size_t hm_dataset_groups(const hm_dataset* ds) { return ds ? ds->ds.n_groups : 0; }

void hm_dataset_free(hm_dataset* ds) { delete ds; }

hm_status hm_synth(const char* generator_json, hm_dataset** out_data, hm_dataset** out_aux,
                   char** out_oracle_json) {
    if (!generator_json || !out_data) return invalid("hm_synth: null argument");
    return guarded([&] {
        SynthOutput res = run_generator(parse_json_arg(generator_json, "generator spec"));
        *out_data = new hm_dataset{std::move(res.data)};
        if (out_aux) *out_aux = res.has_aux ? new hm_dataset{std::move(res.aux)} : nullptr;
        if (out_oracle_json) *out_oracle_json = dup_string(res.oracle.dump(2));
    });
}

hm_status hm_chain_parse(const char* text, hm_chain** out) {
    if (!text || !out) return invalid("hm_chain_parse: null argument");
    return guarded([&] { *out = new hm_chain{PredictorChain::deserialize(text)}; });
}

hm_status hm_chain_format(const hm_chain* chain, char** out_text) {
    if (!chain || !out_text) return invalid("hm_chain_format: null argument");
    return guarded([&] { *out_text = dup_string(chain->chain.serialize()); });
}

hm_status hm_chain_predict(const hm_chain* chain, const double* x, size_t n_features,
                           double* out_value) {
    if (!chain || !x || !out_value) return invalid("hm_chain_predict: null argument");
    return guarded([&] {
        *out_value = chain->chain.predict(std::span<const double>(x, n_features));
    });
}

hm_status hm_chain_predict_dataset(const hm_chain* chain, const hm_dataset* ds,
                                   double* out_values) {
    if (!chain || !ds || !out_values) return invalid("hm_chain_predict_dataset: null argument");
    return guarded([&] {
        const std::vector<double> v = chain->chain.predict_batch(ds->ds);
        std::memcpy(out_values, v.data(), v.size() * sizeof(double));
    });
}

void hm_chain_free(hm_chain* chain) { delete chain; }

hm_status hm_run(const char* command, const char* config_json, const hm_dataset* data,
                 const hm_dataset* holdout, char** out_bundle_json) {
    if (!command || !config_json || !data || !out_bundle_json)
        return invalid("hm_run: null argument");
    return guarded([&] {
        const nlohmann::json cfg = parse_json_arg(config_json, "config");
        const nlohmann::json bundle =
            run_command(command, cfg, data->ds, holdout ? &holdout->ds : nullptr);
        *out_bundle_json = dup_string(bundle.dump(2));
    });
}

} // extern "C"
