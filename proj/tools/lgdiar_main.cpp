// lgdiar: simulate feature-space conversations, run the local-global
// diarization pipeline, score RTTM pairs, and sweep RTF/DER benchmarks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lgdiar/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lgdiar;

namespace {

SpeakerCount parse_speakers(const std::string& text) {
    if (text == "auto") return SpeakerCount::autodetect(10);
    if (text.rfind("auto:", 0) == 0) return SpeakerCount::autodetect(std::stoi(text.substr(5)));
    if (text.rfind("oracle:", 0) == 0) return SpeakerCount::oracle(std::stoi(text.substr(7)));
    throw CLI::ValidationError("--speakers", "expected auto | auto:K | oracle:M");
}

void apply_config_json(const nlohmann::json& j, PipelineConfig& cfg) {
    if (j.contains("window_frames")) cfg.window_frames = j["window_frames"].get<int>();
    if (j.contains("threshold")) cfg.threshold = j["threshold"].get<float>();
    if (j.contains("median_len")) cfg.median_len = j["median_len"].get<int>();
    if (j.contains("min_nonoverlap")) cfg.min_nonoverlap = j["min_nonoverlap"].get<int>();
    if (j.contains("frame_select")) {
        cfg.frame_strategy = FrameSelectStrategy::parse(j["frame_select"].get<std::string>());
    }
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
    if (j.contains("speakers")) cfg.speakers = parse_speakers(j["speakers"].get<std::string>());
    if (j.contains("backend")) cfg.backend_spec = j["backend"].get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("recording_id")) cfg.recording_id = j["recording_id"].get<std::string>();
    if (j.contains("backend_config")) {
        const auto& b = j["backend_config"];
        if (b.contains("s_local")) cfg.backend.s_local = b["s_local"].get<int>();
        if (b.contains("layers")) cfg.backend.layers = b["layers"].get<int>();
        if (b.contains("heads")) cfg.backend.heads = b["heads"].get<int>();
        if (b.contains("hidden")) cfg.backend.hidden = b["hidden"].get<int>();
        if (b.contains("feat_dim")) cfg.backend.feat_dim = b["feat_dim"].get<int>();
        if (b.contains("epsilon_oracle")) {
            cfg.backend.epsilon_oracle = b["epsilon_oracle"].get<double>();
        }
    }
}

// Features from a scenario directory, a WAV file, or a raw feature file.
FeatureSequence load_input(const std::string& path, bool keep_identities) {
    if (fs::is_directory(path)) {
        return scenario_to_inputs(load_scenario(path), keep_identities).first;
    }
    if (path.size() > 4 && path.substr(path.size() - 4) == ".wav") {
        FrontendConfig frontend;
        int rate = 0;
        const auto samples = read_wav(path, &rate);
        if (rate != frontend.sample_rate_hz) {
            throw std::runtime_error("expected " + std::to_string(frontend.sample_rate_hz) +
                                     " Hz input, got " + std::to_string(rate) +
                                     " Hz (resampling not supported)");
        }
        return subsample(compute_logmel(samples, frontend), frontend.subsample_factor);
    }
    return read_features(path);
}

void print_der_table(const DerReport& report) {
    std::printf("%-12s %10.3f s\n", "miss", report.miss_s);
    std::printf("%-12s %10.3f s\n", "falarm", report.falarm_s);
    std::printf("%-12s %10.3f s\n", "confusion", report.confusion_s);
    std::printf("%-12s %10.3f s\n", "scored", report.scored_speech_s);
    std::printf("%-12s %10.2f %%\n", "DER", 100.0 * report.der);
}

int run(int argc, char** argv) {
    CLI::App app{"local-global EEND speaker diarization toolkit"};
    app.require_subcommand(1);

    // simulate ---------------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "generate a synthetic scenario directory");
    SimConfig sim_cfg;
    std::string sim_out;
    sim->add_option("--speakers", sim_cfg.n_speakers, "number of speakers (1-6)")->required();
    sim->add_option("--duration", sim_cfg.duration_s, "duration in seconds")->required();
    sim->add_option("--beta", sim_cfg.beta_s, "mean pause seconds (0 = default for count)");
    sim->add_option("--utt-min", sim_cfg.utt_min_s, "minimum utterance seconds");
    sim->add_option("--utt-max", sim_cfg.utt_max_s, "maximum utterance seconds");
    sim->add_option("--noise", sim_cfg.signature_noise, "per-frame feature noise sigma");
    sim->add_option("--dim", sim_cfg.feat_dim, "feature dimension");
    sim->add_option("--seed", sim_cfg.seed, "random seed");
    sim->add_option("--out", sim_out, "output directory")->required();

    // diarize ----------------------------------------------------------------
    auto* dia = app.add_subcommand("diarize", "run the pipeline on features, a WAV, or a scenario");
    PipelineConfig cfg;
    std::string dia_in, dia_out, dia_speakers = "auto", dia_strategy = "all", dia_config;
    bool dia_stats = false;
    dia->add_option("--in", dia_in, "input: scenario dir, .wav, or feature file")->required();
    dia->add_option("--out", dia_out, "output RTTM path")->required();
    auto* opt_backend = dia->add_option("--backend", cfg.backend_spec,
                                        "oracle | transformer:PATH | transformer:random:SEED");
    auto* opt_window = dia->add_option("--window-frames", cfg.window_frames, "local window length");
    auto* opt_threshold = dia->add_option("--threshold", cfg.threshold, "binarization threshold");
    auto* opt_median = dia->add_option("--median", cfg.median_len, "median filter length (odd)");
    auto* opt_minno = dia->add_option("--min-nonoverlap", cfg.min_nonoverlap,
                                      "overlap-fallback threshold in frames");
    auto* opt_select = dia->add_option("--frame-select", dia_strategy,
                                       "all | first:N | sub:F | random:N");
    auto* opt_batch = dia->add_option("--batch-size", cfg.batch_size, "global-step batch size");
    auto* opt_speakers = dia->add_option("--speakers", dia_speakers, "auto | auto:K | oracle:M");
    auto* opt_seed = dia->add_option("--seed", cfg.seed, "random seed");
    auto* opt_rec = dia->add_option("--rec-id", cfg.recording_id, "recording id for the RTTM");
    auto* opt_slocal = dia->add_option("--s-local", cfg.backend.s_local, "backend speaker slots");
    auto* opt_layers = dia->add_option("--layers", cfg.backend.layers, "transformer layers");
    auto* opt_heads = dia->add_option("--heads", cfg.backend.heads, "attention heads");
    auto* opt_hidden = dia->add_option("--hidden", cfg.backend.hidden, "hidden size");
    dia->add_option("--config", dia_config, "JSON config file (flags override it)");
    dia->add_flag("--stats", dia_stats, "print pipeline diagnostics");

    // score ------------------------------------------------------------------
    auto* sco = app.add_subcommand("score", "compute DER between two RTTM files");
    std::string sco_ref, sco_hyp, sco_json;
    double sco_collar = 0.25;
    bool sco_no_overlap = false;
    sco->add_option("--ref", sco_ref, "reference RTTM")->required();
    sco->add_option("--hyp", sco_hyp, "hypothesis RTTM")->required();
    sco->add_option("--collar", sco_collar, "collar seconds around reference boundaries");
    sco->add_flag("--no-overlap", sco_no_overlap, "skip reference overlap regions");
    sco->add_option("--json", sco_json, "also write the report as JSON to this path");

    // bench ------------------------------------------------------------------
    auto* ben = app.add_subcommand("bench", "RTF/DER sweep over scenarios");
    std::string ben_scenarios, ben_grid, ben_out;
    ben->add_option("--scenarios", ben_scenarios, "directory of scenario subdirectories")->required();
    ben->add_option("--grid", ben_grid, "grid JSON: backend, speakers, rows[]")->required();
    ben->add_option("--out", ben_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    if (sim->parsed()) {
        save_scenario(sim_out, generate_scenario(sim_cfg), sim_cfg);
        std::printf("wrote scenario to %s\n", sim_out.c_str());
        return 0;
    }

    if (dia->parsed()) {
        if (!dia_config.empty()) {
            // Config file values fill in first; flags the user actually
            // passed (already sitting in `cfg`) win over the file.
            std::ifstream in(dia_config);
            if (!in) throw std::runtime_error("cannot open config: " + dia_config);
            PipelineConfig flags;
            std::swap(cfg, flags);
            apply_config_json(nlohmann::json::parse(in), cfg);
            if (opt_backend->count()) cfg.backend_spec = flags.backend_spec;
            if (opt_window->count()) cfg.window_frames = flags.window_frames;
            if (opt_threshold->count()) cfg.threshold = flags.threshold;
            if (opt_median->count()) cfg.median_len = flags.median_len;
            if (opt_minno->count()) cfg.min_nonoverlap = flags.min_nonoverlap;
            if (opt_batch->count()) cfg.batch_size = flags.batch_size;
            if (opt_seed->count()) cfg.seed = flags.seed;
            if (opt_rec->count()) cfg.recording_id = flags.recording_id;
            if (opt_slocal->count()) cfg.backend.s_local = flags.backend.s_local;
            if (opt_layers->count()) cfg.backend.layers = flags.backend.layers;
            if (opt_heads->count()) cfg.backend.heads = flags.backend.heads;
            if (opt_hidden->count()) cfg.backend.hidden = flags.backend.hidden;
        }
        if (opt_select->count() || dia_config.empty()) {
            cfg.frame_strategy = FrameSelectStrategy::parse(dia_strategy);
        }
        if (opt_speakers->count() || dia_config.empty()) {
            cfg.speakers = parse_speakers(dia_speakers);
        }
        if (cfg.frame_strategy.kind == FrameSelectStrategy::Kind::kRandomN &&
            cfg.frame_strategy.seed == 0) {
            cfg.frame_strategy.seed = cfg.seed;
        }

        const auto backend = make_backend(cfg.backend_spec, cfg.backend);
        const FeatureSequence features = load_input(dia_in, cfg.backend_spec == "oracle");
        Annotation hypothesis;
        Diagnostics diag;
        const RtfReport rtf = measure_rtf(
            [&] {
                auto result = diarize(features, cfg, *backend);
                hypothesis = std::move(result.annotation);
                diag = std::move(result.diagnostics);
            },
            features.duration_s());
        write_rttm_file(dia_out, hypothesis);
        std::printf("wrote %s (%zu segments, %zu speakers), rtf %.4f\n", dia_out.c_str(),
                    hypothesis.segments.size(), hypothesis.speakers().size(), rtf.rtf);
        if (dia_stats) {
            std::printf("windows %d, chunks %zu, local speakers %d, clusters %d%s\n",
                        diag.num_windows, diag.num_chunks, diag.s_global, diag.num_clusters,
                        diag.global_skipped ? " (global step skipped)" : "");
            std::printf("stage seconds: local %.3f, global %.3f, cluster %.3f\n", diag.local_s,
                        diag.global_s, diag.cluster_s);
        }
        return 0;
    }

    if (sco->parsed()) {
        const Annotation ref = read_rttm_file(sco_ref);
        const Annotation hyp = read_rttm_file(sco_hyp);
        const DerReport report = compute_der(ref, hyp, sco_collar, !sco_no_overlap);
        print_der_table(report);
        if (!sco_json.empty()) {
            nlohmann::json j = {
                {"miss_s", report.miss_s},
                {"falarm_s", report.falarm_s},
                {"confusion_s", report.confusion_s},
                {"scored_speech_s", report.scored_speech_s},
                {"der", report.der},
            };
            std::ofstream out(sco_json);
            if (!out) throw std::runtime_error("cannot open for writing: " + sco_json);
            out << j.dump(2) << "\n";
        }
        return 0;
    }

    // bench
    std::vector<Scenario> scenarios;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(ben_scenarios)) {
        if (entry.is_directory() && fs::exists(entry.path() / "scenario.json")) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) scenarios.push_back(load_scenario(dir.string()));

    std::ifstream grid_in(ben_grid);
    if (!grid_in) throw std::runtime_error("cannot open grid: " + ben_grid);
    const nlohmann::json grid = nlohmann::json::parse(grid_in);
    PipelineConfig base;
    apply_config_json(grid, base);
    std::vector<PipelineConfig> configs;
    for (const auto& row : grid.at("rows")) {
        PipelineConfig c = base;
        c.frame_strategy = FrameSelectStrategy::parse(row.at("strategy").get<std::string>());
        if (c.frame_strategy.kind == FrameSelectStrategy::Kind::kRandomN &&
            c.frame_strategy.seed == 0) {
            c.frame_strategy.seed = c.seed;
        }
        c.batch_size = row.at("batch_size").get<int>();
        configs.push_back(std::move(c));
    }

    const auto rows = bench_sweep(configs, scenarios);
    const std::string csv = bench_csv(rows);
    std::ofstream out(ben_out);
    if (!out) throw std::runtime_error("cannot open for writing: " + ben_out);
    out << csv;
    std::printf("%s", csv.c_str());
    std::printf("wrote %s (%zu rows over %zu scenarios)\n", ben_out.c_str(), rows.size(),
                scenarios.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
