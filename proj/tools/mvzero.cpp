// mvzero: zero-shot multi-view shape recognition over precomputed embeddings.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error,
// 3 missing layer-2 prompts encountered under --strict.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mvzero/mvzero.hpp"

namespace {

using namespace mvzero;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitMissingPrompts = 3;

struct PipelineFlags {
    std::string manifest;
    std::string bank;
    double delta = kDefaultDelta;
    std::size_t top_k = kDefaultTopK;
    std::size_t m_select = 4;
    std::size_t m_total = 20;
    double temperature = kDefaultTemperature;
    std::string selection = "entropy_min";
    std::string aggregation = "sum_logits";
    bool no_hierarchical = false;
    bool strict = false;
    std::size_t threads = 0;
    std::string out;
    std::string format;

    ClassifierConfig config() const {
        ClassifierConfig c;
        c.delta = delta;
        c.top_k = top_k;
        c.temperature = temperature;
        c.selection.m_select = m_select;
        c.selection.m_total = m_total;
        c.selection.mode = parse_selection_mode(selection);
        c.aggregation = parse_aggregation(aggregation);
        c.hierarchical_enabled = !no_hierarchical;
        c.validate();
        return c;
    }

    std::size_t thread_count() const {
        if (threads > 0) return threads;
        if (const char* env = std::getenv("MVZERO_THREADS")) {
            try {
                const long n = std::stol(env);
                if (n > 0) return static_cast<std::size_t>(n);
            } catch (const std::exception&) {
            }
            throw Error(ErrorCode::InvalidConfig, std::string("MVZERO_THREADS must be a positive integer, got \"") +
                                                      env + "\"");
        }
        return std::max(1u, std::thread::hardware_concurrency());
    }
};

void add_inputs(CLI::App* cmd, PipelineFlags& f) {
    cmd->add_option("--manifest", f.manifest, "Dataset manifest JSON (views EMB1 file resolved relative to it)")
        ->required();
    cmd->add_option("--bank", f.bank, "Prompt bank JSON")->required();
}

void add_config(CLI::App* cmd, PipelineFlags& f) {
    cmd->add_option("--delta", f.delta,
                    "Confidence threshold in [0,1]; shapes whose max layer-1 probability is below it are refined "
                    "with layer-2 prompts. Default 0.96 (published setting)")
        ->capture_default_str();
    cmd->add_option("--top-k", f.top_k,
                    "Number of candidate classes matched at layer 2 (>= 2). Default 3 (published best value)")
        ->capture_default_str();
    cmd->add_option("--m-select", f.m_select,
                    "Views kept per shape by entropy selection. Default 4 (published setting)")
        ->capture_default_str();
    cmd->add_option("--m-total", f.m_total,
                    "Rendered views per shape expected in the input. Default 20 (published setting)")
        ->capture_default_str();
    cmd->add_option("--temperature", f.temperature,
                    "Logit scale applied to cosine similarities. Default 100.0 (conventional scale of CLIP-family "
                    "encoders; not published, sweep it)")
        ->capture_default_str();
    cmd->add_option("--selection", f.selection,
                    "View selection: entropy_min (published method), none (all views), diverse_decisions "
                    "(ablation variant)")
        ->check(CLI::IsMember({"entropy_min", "none", "diverse_decisions"}))
        ->capture_default_str();
    cmd->add_option("--aggregation", f.aggregation,
                    "Multi-view fusion: sum_logits (published method), mean_pool_features, max_pool_features "
                    "(ablation variants)")
        ->check(CLI::IsMember({"sum_logits", "mean_pool_features", "max_pool_features"}))
        ->capture_default_str();
    cmd->add_flag("--no-hierarchical", f.no_hierarchical, "Disable layer-2 refinement");
    cmd->add_option("--threads", f.threads,
                    "Worker threads (default: MVZERO_THREADS, else available parallelism); output is identical "
                    "for any value");
}

void write_output(const std::string& path, const std::string& payload) {
    if (path.empty() || path == "-") {
        std::cout << payload;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing", path);
    out << payload;
    if (!out) throw Error(ErrorCode::IoError, "write to " + path + " failed", path);
}

/// Timing and wall-clock time go to a sidecar next to the output so the
/// payload itself stays byte-identical across runs.
void write_sidecar(const std::string& out_path, const std::string& subcommand, double runtime_ms,
                   std::size_t threads) {
    if (out_path.empty() || out_path == "-") return;
    std::ofstream log(out_path + ".log", std::ios::trunc);
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    log << "subcommand=" << subcommand << "\ntimestamp=" << stamp << "\nruntime_ms=" << runtime_ms
        << "\nthreads=" << threads << '\n';
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> values;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw Error(ErrorCode::InvalidSweepValue, "not a number: \"" + item + "\"", item);
        values.push_back(v);
    }
    if (values.empty()) throw Error(ErrorCode::InvalidSweepValue, "--values is empty");
    return values;
}

int run_classify(const PipelineFlags& f) {
    const auto start = std::chrono::steady_clock::now();
    const auto config = f.config();
    const auto threads = f.thread_count();
    const auto data = load_dataset(f.manifest);
    const auto bank = load_bank(f.bank);
    const auto records = classify_all(data, bank, config, threads);
    std::string payload;
    std::size_t deferred = 0;
    for (const auto& r : records) {
        payload += to_json(r, bank.classes).dump() + '\n';
        if (r.deferred_refinement) ++deferred;
    }
    write_output(f.out, payload);
    write_sidecar(f.out, "classify", elapsed_ms(start), threads);
    if (deferred > 0) {
        std::cerr << deferred << " shape(s) deferred: layer-2 prompts missing (see prompts-missing)\n";
        if (f.strict) return kExitMissingPrompts;
    }
    return kExitOk;
}

int run_eval(const PipelineFlags& f) {
    const auto start = std::chrono::steady_clock::now();
    const auto config = f.config();
    const auto format = parse_report_format(f.format);
    const auto threads = f.thread_count();
    const auto data = load_dataset(f.manifest);
    const auto bank = load_bank(f.bank);
    const auto report = evaluate(data, bank, config, threads);
    write_output(f.out, emit_report(report, format));
    write_sidecar(f.out, "eval", elapsed_ms(start), threads);
    if (!f.out.empty() && f.out != "-") {
        std::cout << "accuracy " << detail::fixed(report.overall_accuracy, 6) << " (" << report.correct << "/"
                  << report.total << "), refined " << report.refined_count << '\n';
    }
    if (report.deferred_count > 0) {
        std::cerr << report.deferred_count << " shape(s) deferred: layer-2 prompts missing\n";
        if (f.strict) return kExitMissingPrompts;
    }
    return kExitOk;
}

int run_ablate(const PipelineFlags& f) {
    const auto start = std::chrono::steady_clock::now();
    const auto config = f.config();
    const auto format = parse_report_format(f.format);
    const auto threads = f.thread_count();
    const auto data = load_dataset(f.manifest);
    const auto bank = load_bank(f.bank);
    write_output(f.out, emit_report(ablation_grid(data, bank, config, threads), format));
    write_sidecar(f.out, "ablate", elapsed_ms(start), threads);
    return kExitOk;
}

int run_sweep(const PipelineFlags& f, const std::string& param, const std::string& values) {
    const auto start = std::chrono::steady_clock::now();
    const auto config = f.config();
    const auto format = parse_report_format(f.format);
    const auto parameter = parse_sweep_parameter(param);
    const auto vals = parse_values(values);
    const auto threads = f.thread_count();
    const auto data = load_dataset(f.manifest);
    const auto bank = load_bank(f.bank);
    write_output(f.out, emit_report(sweep(data, bank, config, parameter, vals, threads), format));
    write_sidecar(f.out, "sweep", elapsed_ms(start), threads);
    return kExitOk;
}

int run_view_stats(const PipelineFlags& f) {
    const auto config = f.config();
    const auto threads = f.thread_count();
    const auto data = load_dataset(f.manifest);
    const auto bank = load_bank(f.bank);
    const auto pv = per_view_accuracy(data, bank, config, threads);
    const auto hist = decision_variance(data, bank, config, threads);
    const nlohmann::json j = {{"all_views_accuracy", pv.all_views()},
                              {"selected_views_accuracy", pv.selected_views()},
                              {"all_views", pv.all_total},
                              {"selected_views", pv.selected_total},
                              {"distinct_decision_histogram", hist},
                              {"config_echo", to_json(config)}};
    write_output(f.out, j.dump(2) + '\n');
    return kExitOk;
}

int run_prompts_missing(const PipelineFlags& f) {
    const auto config = f.config();
    const auto data = load_dataset(f.manifest);
    const auto bank = load_bank(f.bank);
    std::string payload;
    const auto keys = missing_prompt_keys(data, bank, config, f.thread_count());
    for (const auto& k : keys) payload += k + '\n';
    write_output(f.out, payload);
    std::cerr << keys.size() << " candidate key(s) missing from the bank\n";
    return kExitOk;
}

int run_validate(const std::string& manifest, const std::string& bank_path) {
    int status = kExitOk;
    if (!manifest.empty()) {
        const auto data = load_dataset(manifest);
        std::cout << "manifest OK: " << data.manifest.shapes.size() << " shapes, " << data.manifest.classes.size()
                  << " classes, " << data.views.rows() << " view rows\n";
    }
    if (!bank_path.empty()) {
        const auto bank = load_bank(bank_path, /*normalize=*/false);
        const auto findings = validate_bank(bank);
        for (const auto& fd : findings) std::cout << fd.code << ' ' << fd.location << '\n';
        if (findings.empty()) {
            std::cout << "bank OK: " << bank.classes.size() << " classes, " << bank.layer2.size()
                      << " layer-2 entries\n";
        } else {
            status = kExitData;
        }
    }
    return status;
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::InvalidConfig:
        case ErrorCode::InvalidSweepValue:
        case ErrorCode::NonPositiveTemperature: return kExitUsage;
        default: return kExitData;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot multi-view 3D shape recognition over precomputed embeddings"};
    app.require_subcommand(1);

    PipelineFlags f;

    auto* classify = app.add_subcommand("classify", "Classify every shape; write one JSON record per line");
    add_inputs(classify, f);
    add_config(classify, f);
    classify->add_option("--out", f.out, "Trace file (JSON lines); stdout when omitted");
    classify->add_flag("--strict", f.strict, "Exit 3 if any shape lacks layer-2 prompts");

    auto* eval = app.add_subcommand("eval", "Evaluate accuracy against manifest labels");
    add_inputs(eval, f);
    add_config(eval, f);
    eval->add_option("--format", f.format, "json | csv | md (default json)")->check(CLI::IsMember({"json", "csv", "md"}));
    eval->add_option("--out", f.out, "Report file; stdout when omitted");
    eval->add_flag("--strict", f.strict, "Exit 3 if any shape lacks layer-2 prompts");

    auto* ablate = app.add_subcommand("ablate", "View selection x hierarchical prompts ablation grid");
    add_inputs(ablate, f);
    add_config(ablate, f);
    ablate->add_option("--format", f.format, "md | csv | json (default md)")->check(CLI::IsMember({"json", "csv", "md"}));
    ablate->add_option("--out", f.out, "Grid file; stdout when omitted");

    std::string sweep_param;
    std::string sweep_values;
    auto* sweep_cmd = app.add_subcommand("sweep", "Sensitivity sweep over one parameter");
    add_inputs(sweep_cmd, f);
    add_config(sweep_cmd, f);
    sweep_cmd->add_option("--param", sweep_param, "delta | m_select | top_k | temperature")
        ->required()
        ->check(CLI::IsMember({"delta", "m_select", "top_k", "temperature"}));
    sweep_cmd->add_option("--values", sweep_values, "Comma-separated values, e.g. 0,0.5,0.96,1")->required();
    sweep_cmd->add_option("--format", f.format, "csv | md | json (default csv)")->check(CLI::IsMember({"json", "csv", "md"}));
    sweep_cmd->add_option("--out", f.out, "Curve file; stdout when omitted");

    auto* stats = app.add_subcommand("view-stats", "Per-view accuracy (all vs selected) and decision histogram");
    add_inputs(stats, f);
    add_config(stats, f);
    stats->add_option("--out", f.out, "JSON file; stdout when omitted");

    auto* missing = app.add_subcommand("prompts-missing",
                                       "List candidate keys the dataset needs at layer 2 but the bank lacks");
    add_inputs(missing, f);
    add_config(missing, f);
    missing->add_option("--out", f.out, "Keys file, one key per line; stdout when omitted");

    std::string validate_manifest_path;
    std::string validate_bank_path;
    auto* validate = app.add_subcommand("validate", "Check a manifest or a prompt bank against its invariants");
    auto* vm = validate->add_option("--manifest", validate_manifest_path, "Dataset manifest JSON");
    auto* vb = validate->add_option("--bank", validate_bank_path, "Prompt bank JSON");
    vm->excludes(vb);
    validate->require_option(1);

    SyntheticSpec synth_spec;
    std::string synth_dir;
    std::string ambiguous_mode = "uniform_mixture";
    std::string layer2_sizes = "3";
    auto* synth = app.add_subcommand("synth", "Write a seed-deterministic planted fixture (manifest, views, bank)");
    synth->add_option("--classes", synth_spec.classes, "Number of classes")->capture_default_str();
    synth->add_option("--dim", synth_spec.dim, "Embedding dimension (>= classes)")->capture_default_str();
    synth->add_option("--shapes", synth_spec.shapes_per_class, "Shapes per class")->capture_default_str();
    synth->add_option("--views", synth_spec.views, "Views per shape")->capture_default_str();
    synth->add_option("--clean", synth_spec.clean_views, "Clean views per shape; the rest are ambiguous")
        ->capture_default_str();
    synth->add_option("--sigma", synth_spec.noise_sigma, "Per-view noise; shape drift scales with it")
        ->capture_default_str();
    synth->add_option("--seed", synth_spec.seed, "RNG seed")->capture_default_str();
    synth->add_option("--ambiguous-mode", ambiguous_mode, "uniform_mixture | wrong_class_leak")
        ->check(CLI::IsMember({"uniform_mixture", "wrong_class_leak"}))
        ->capture_default_str();
    synth->add_option("--ambiguous-sigma", synth_spec.ambiguous_sigma, "Noise of ambiguous views")->capture_default_str();
    synth->add_option("--leak", synth_spec.leak, "Wrong-class weight in wrong_class_leak views")->capture_default_str();
    synth->add_option("--drift-ratio", synth_spec.drift_ratio, "Shape drift / per-view noise")->capture_default_str();
    synth->add_option("--text-bias", synth_spec.text_bias, "Layer-1 prompt misalignment")->capture_default_str();
    synth->add_option("--modality-gap", synth_spec.modality_gap, "Shared view offset orthogonal to prompts")
        ->capture_default_str();
    synth->add_option("--layer2-blur", synth_spec.layer2_blur, "Layer-2 prompt blur per extra candidate")
        ->capture_default_str();
    synth->add_option("--layer2-sizes", layer2_sizes, "Comma-separated candidate set sizes to populate")
        ->capture_default_str();
    synth->add_option("--view-config", synth_spec.view_config, "View configuration tag")
        ->check(CLI::IsMember({"circular", "spherical", "random", "other"}))
        ->capture_default_str();
    synth->add_option("--out-dir", synth_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*classify) return run_classify(f);
        if (*eval) {
            if (f.format.empty()) f.format = "json";
            return run_eval(f);
        }
        if (*ablate) {
            if (f.format.empty()) f.format = "md";
            return run_ablate(f);
        }
        if (*sweep_cmd) {
            if (f.format.empty()) f.format = "csv";
            return run_sweep(f, sweep_param, sweep_values);
        }
        if (*stats) return run_view_stats(f);
        if (*missing) return run_prompts_missing(f);
        if (*validate) return run_validate(validate_manifest_path, validate_bank_path);
        if (*synth) {
            synth_spec.ambiguous_mode = parse_ambiguous_mode(ambiguous_mode);
            synth_spec.layer2_sizes.clear();
            for (double v : parse_values(layer2_sizes)) synth_spec.layer2_sizes.push_back(static_cast<std::size_t>(v));
            const auto fx = generate_synthetic(synth_spec);
            write_fixture(fx, synth_dir);
            std::cout << "wrote " << fx.manifest.shapes.size() << " shapes, " << fx.bank.layer2.size()
                      << " layer-2 entries to " << synth_dir << '\n';
            return kExitOk;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
