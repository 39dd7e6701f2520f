// happymap command-line tool. Talks to the library exclusively through the C
// API in happymap/happymap.h; this file owns argument parsing and file I/O.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "happymap/happymap.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError {
    int status;
    std::string message;
};

[[noreturn]] void die(int status, const std::string& message) { throw CliError{status, message}; }

void check_status(hm_status st, const std::string& what) {
    if (st != HM_OK) die(static_cast<int>(st), what + ": " + hm_last_error());
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) die(HM_ERR_IO, "cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Tracks written files; unless commit() runs, a failing run removes its
// partial outputs on unwind.
struct OutputTracker {
    std::vector<fs::path> written;
    bool committed = false;

    void write(const fs::path& path, const std::string& content) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) die(HM_ERR_IO, "cannot write '" + path.string() + "'");
        out << content;
        if (!out) die(HM_ERR_IO, "failed writing '" + path.string() + "'");
        written.push_back(path);
    }
    void commit() { committed = true; }
    ~OutputTracker() {
        if (committed) return;
        for (const auto& p : written) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
};

struct DatasetHandle {
    hm_dataset* ds = nullptr;
    ~DatasetHandle() { hm_dataset_free(ds); }
};

struct StringHandle {
    char* s = nullptr;
    ~StringHandle() { hm_string_free(s); }
};

const std::set<std::string> kCommands = {"fit",      "audit",          "conformal",
                                         "conformal2", "multivalid",   "shift-conformal",
                                         "universal-l2", "missing",    "parity",
                                         "synth",    "eval"};

int run(int argc, char** argv) {
    CLI::App app{"happymap: auditor-driven projected-update calibration"};
    app.set_version_flag("--version", hm_version());
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::optional<uint64_t> seed_override;
    std::optional<double> holdout_fraction;

    std::vector<CLI::App*> subs;
    for (const auto& name : kCommands) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON configuration file")->required();
        sub->add_option("--seed", seed_override, "override the config seed");
        sub->add_option("--out", out_dir, "output directory (default .)");
        sub->add_option("--holdout", holdout_fraction,
                        "hold out this tail fraction of rows for evaluation");
        subs.push_back(sub);
    }
    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    json cfg;
    try {
        cfg = json::parse(read_text_file(config_path));
    } catch (const json::parse_error& e) {
        die(HM_ERR_PARSE, std::string("config: ") + e.what());
    }
    if (!cfg.is_object()) die(HM_ERR_PARSE, "config must be a JSON object");
    if (seed_override) cfg["seed"] = *seed_override;

    fs::create_directories(out_dir);
    OutputTracker out;
    const auto started = std::chrono::steady_clock::now();

    if (command == "synth") {
        if (!cfg.contains("generator")) die(HM_ERR_INVALID_ARGUMENT, "synth config needs a generator block");
        DatasetHandle data, aux;
        StringHandle oracle;
        check_status(hm_synth(cfg.at("generator").dump().c_str(), &data.ds, &aux.ds, &oracle.s),
                     "synth");
        StringHandle csv;
        check_status(hm_dataset_format_csv(data.ds, &csv.s), "format dataset");
        out.write(fs::path(out_dir) / "dataset.csv", csv.s);
        out.write(fs::path(out_dir) / "oracle.json", std::string(oracle.s) + "\n");
        if (aux.ds) {
            StringHandle aux_csv;
            check_status(hm_dataset_format_csv(aux.ds, &aux_csv.s), "format complete copy");
            out.write(fs::path(out_dir) / "dataset_complete.csv", aux_csv.s);
        }
    } else {
        // CLI-level keys name input files; their content is embedded before
        // handing the block to the library.
        if (!cfg.contains("dataset")) die(HM_ERR_INVALID_ARGUMENT, "config needs a dataset path");
        const std::string data_path = cfg.at("dataset").get<std::string>();
        cfg.erase("dataset");

        DatasetHandle data, holdout;
        check_status(hm_dataset_load_csv(data_path.c_str(), &data.ds), "load dataset");
        if (cfg.contains("holdout_dataset")) {
            const std::string hp = cfg.at("holdout_dataset").get<std::string>();
            cfg.erase("holdout_dataset");
            check_status(hm_dataset_load_csv(hp.c_str(), &holdout.ds), "load holdout dataset");
        }
        if (holdout_fraction) {
            if (holdout.ds) die(HM_ERR_INVALID_ARGUMENT, "--holdout conflicts with holdout_dataset");
            hm_dataset* head = nullptr;
            hm_dataset* tail = nullptr;
            check_status(hm_dataset_split_tail(data.ds, *holdout_fraction, &head, &tail),
                         "holdout split");
            hm_dataset_free(data.ds);
            if (command == "eval") {
                // eval consumes only the held-out rows.
                data.ds = tail;
                hm_dataset_free(head);
            } else {
                data.ds = head;
                holdout.ds = tail;
            }
        }
        for (const char* key : {"chain_file", "interval_file", "oracle_file"}) {
            if (!cfg.contains(key)) continue;
            const std::string path = cfg.at(key).get<std::string>();
            cfg.erase(key);
            json loaded;
            try {
                loaded = json::parse(read_text_file(path));
            } catch (const json::parse_error& e) {
                die(HM_ERR_PARSE, std::string(key) + ": " + e.what());
            }
            const std::string target = std::string(key) == "chain_file"
                                           ? "chain"
                                           : (std::string(key) == "interval_file" ? "interval"
                                                                                  : "oracle");
            cfg[target] = loaded;
        }

        StringHandle bundle_text;
        check_status(hm_run(command.c_str(), cfg.dump().c_str(), data.ds, holdout.ds,
                            &bundle_text.s),
                     command);
        json bundle = json::parse(std::string(bundle_text.s));

        const fs::path dir(out_dir);
        if (bundle.contains("chain")) out.write(dir / "chain.json", bundle["chain"].dump(2) + "\n");
        if (bundle.contains("interval"))
            out.write(dir / "interval.json", bundle["interval"].dump(2) + "\n");
        if (bundle.contains("report")) {
            out.write(dir / "run_report.json", bundle["report"].dump(2) + "\n");
            out.write(dir / "run_report.csv", bundle["report_csv"].get<std::string>());
        }
        for (const char* side : {"lower", "upper"}) {
            const std::string key = std::string("report_") + side;
            if (bundle.contains(key)) {
                out.write(dir / ("run_report_" + std::string(side) + ".json"),
                          bundle[key].dump(2) + "\n");
                out.write(dir / ("run_report_" + std::string(side) + ".csv"),
                          bundle[key + "_csv"].get<std::string>());
            }
        }
        if (bundle.contains("metrics"))
            out.write(dir / "metrics.json", bundle["metrics"].dump(2) + "\n");
        if (bundle.contains("metrics_csv"))
            out.write(dir / "metrics.csv", bundle["metrics_csv"].get<std::string>());
        if (bundle.contains("holdout_csv"))
            out.write(dir / "metrics_holdout.csv", bundle["holdout_csv"].get<std::string>());
        if (bundle.contains("warnings"))
            for (const auto& w : bundle["warnings"])
                std::cerr << "warning: " << w.get<std::string>() << "\n";
    }

    out.commit();
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    std::cerr << "happymap " << command << ": ok (" << elapsed.count() << " ms)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CliError& e) {
        json err;
        err["error"]["status"] = e.status;
        err["error"]["message"] = e.message;
        std::cerr << err.dump() << "\n";
        return e.status == 0 ? 1 : e.status;
    } catch (const std::exception& e) {
        json err;
        err["error"]["status"] = HM_ERR_INTERNAL;
        err["error"]["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return HM_ERR_INTERNAL;
    }
}
