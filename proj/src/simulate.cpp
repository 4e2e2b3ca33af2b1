#include "lgdiar/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "lgdiar/rng.hpp"

namespace lgdiar {

double SimConfig::resolved_beta() const {
    if (beta_s > 0.0) return beta_s;
    return n_speakers <= 2 ? 2.0 : 9.0;
}

void SimConfig::validate() const {
    if (n_speakers < 1 || n_speakers > 6) throw std::invalid_argument("n_speakers must be in 1..6");
    if (!(duration_s > 0.0)) throw std::invalid_argument("duration_s must be positive");
    if (!(utt_min_s > 0.0) || utt_min_s > utt_max_s) {
        throw std::invalid_argument("need 0 < utt_min_s <= utt_max_s");
    }
    if (beta_s < 0.0) throw std::invalid_argument("beta_s must be >= 0");
    if (signature_noise < 0.0) throw std::invalid_argument("signature_noise must be >= 0");
    if (feat_dim < 1) throw std::invalid_argument("feat_dim must be >= 1");
    if (!(frame_period_s > 0.0)) throw std::invalid_argument("frame_period_s must be positive");
}

std::vector<std::string> Scenario::speaker_names() const {
    std::vector<std::string> names;
    names.reserve(speaker_signatures.rows());
    for (std::size_t i = 0; i < speaker_signatures.rows(); ++i) {
        names.push_back("spk" + std::to_string(i));
    }
    return names;
}

namespace {

constexpr const char* kRecordingId = "rec0";
constexpr int kMaxTries = 1000;

struct MsSpan {
    long long start_ms;
    long long end_ms;
};

// Signature on the radius-3 sphere, at distance >= 2 from all previous ones.
std::vector<float> draw_signature(Rng& rng, int dim, const MatF& previous, std::size_t n_previous) {
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
        std::vector<double> v(dim);
        double norm = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        for (auto& x : v) x *= 3.0 / norm;

        bool ok = true;
        for (std::size_t p = 0; p < n_previous && ok; ++p) {
            double dist2 = 0.0;
            for (int f = 0; f < dim; ++f) {
                const double d = v[f] - previous(p, f);
                dist2 += d * d;
            }
            ok = dist2 >= 4.0;
        }
        if (ok) return {v.begin(), v.end()};
    }
    throw std::runtime_error("could not place a speaker signature after 1000 tries");
}

std::vector<MsSpan> draw_timeline(Rng& rng, const SimConfig& config) {
    const long long duration_ms = std::llround(config.duration_s * 1000.0);
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
        std::vector<MsSpan> spans;
        double t = 0.0;
        while (true) {
            t += rng.exponential(config.resolved_beta());
            if (t >= config.duration_s) break;
            const double end = std::min(t + rng.uniform(config.utt_min_s, config.utt_max_s),
                                        config.duration_s);
            const long long start_ms = std::llround(t * 1000.0);
            const long long end_ms = std::min(std::llround(end * 1000.0), duration_ms);
            if (end_ms - start_ms >= 1) spans.push_back({start_ms, end_ms});
            t = end;
        }
        if (!spans.empty()) return spans;
        // A speaker that never got to talk would leave the reference with
        // fewer ids than configured; redraw.
    }
    throw std::runtime_error("could not draw a non-empty speaker timeline after 1000 tries");
}

} // namespace

Scenario generate_scenario(const SimConfig& config) {
    config.validate();
    Rng rng(config.seed);

    Scenario scenario;
    scenario.speaker_signatures = MatF(config.n_speakers, config.feat_dim);
    for (int spk = 0; spk < config.n_speakers; ++spk) {
        const auto sig = draw_signature(rng, config.feat_dim, scenario.speaker_signatures, spk);
        std::copy(sig.begin(), sig.end(), &scenario.speaker_signatures(spk, 0));
    }

    std::vector<std::vector<MsSpan>> timelines;
    for (int spk = 0; spk < config.n_speakers; ++spk) {
        timelines.push_back(draw_timeline(rng, config));
    }

    scenario.reference.recording_id = kRecordingId;
    for (int spk = 0; spk < config.n_speakers; ++spk) {
        for (const MsSpan& span : timelines[spk]) {
            scenario.reference.segments.push_back({"spk" + std::to_string(spk),
                                                   static_cast<double>(span.start_ms) / 1000.0,
                                                   static_cast<double>(span.end_ms) / 1000.0});
        }
    }
    scenario.reference = scenario.reference.normalized();

    const auto n_frames =
        static_cast<std::size_t>(std::floor(config.duration_s / config.frame_period_s + 1e-9));
    const long long fp_ms = std::llround(config.frame_period_s * 1000.0);

    IdentityTrack identities(n_frames);
    for (std::size_t t = 0; t < n_frames; ++t) {
        const long long mid_ms = static_cast<long long>(t) * fp_ms + fp_ms / 2;
        for (int spk = 0; spk < config.n_speakers; ++spk) {
            for (const MsSpan& span : timelines[spk]) {
                if (span.start_ms <= mid_ms && mid_ms < span.end_ms) {
                    identities[t].push_back(spk);
                    break;
                }
            }
        }
    }

    scenario.features.frames = MatF(n_frames, config.feat_dim);
    scenario.features.frame_period_s = config.frame_period_s;
    for (std::size_t t = 0; t < n_frames; ++t) {
        const auto& active = identities[t];
        for (int f = 0; f < config.feat_dim; ++f) {
            double mean = 0.0;
            for (int spk : active) mean += scenario.speaker_signatures(spk, f);
            if (!active.empty()) mean /= static_cast<double>(active.size());
            scenario.features.frames(t, f) =
                static_cast<float>(mean + config.signature_noise * rng.normal());
        }
    }
    scenario.features.hidden_identities = std::move(identities);
    return scenario;
}

std::pair<FeatureSequence, Annotation> scenario_to_inputs(const Scenario& scenario,
                                                          bool keep_identities) {
    FeatureSequence features = scenario.features;
    if (!keep_identities) features.hidden_identities.reset();
    return {std::move(features), scenario.reference};
}

IdentityTrack identities_from_reference(const Annotation& reference,
                                        const std::vector<std::string>& speaker_names,
                                        std::size_t n_frames, double frame_period_s) {
    const long long fp_ms = std::llround(frame_period_s * 1000.0);
    const Annotation ref = reference.normalized();

    IdentityTrack identities(n_frames);
    for (std::size_t spk = 0; spk < speaker_names.size(); ++spk) {
        for (const Segment& seg : ref.segments) {
            if (seg.speaker != speaker_names[spk]) continue;
            const long long start_ms = std::llround(seg.start_s * 1000.0);
            const long long end_ms = std::llround(seg.end_s * 1000.0);
            for (std::size_t t = 0; t < n_frames; ++t) {
                const long long mid_ms = static_cast<long long>(t) * fp_ms + fp_ms / 2;
                if (start_ms <= mid_ms && mid_ms < end_ms) {
                    identities[t].push_back(static_cast<int>(spk));
                }
            }
        }
    }
    for (auto& frame : identities) {
        std::sort(frame.begin(), frame.end());
        frame.erase(std::unique(frame.begin(), frame.end()), frame.end());
    }
    return identities;
}

void save_scenario(const std::string& dir, const Scenario& scenario, const SimConfig& config) {
    std::filesystem::create_directories(dir);
    write_features(dir + "/features.f32", scenario.features);
    write_rttm_file(dir + "/ref.rttm", scenario.reference);

    nlohmann::json meta;
    meta["config"] = {
        {"n_speakers", config.n_speakers},   {"duration_s", config.duration_s},
        {"beta_s", config.beta_s},           {"utt_min_s", config.utt_min_s},
        {"utt_max_s", config.utt_max_s},     {"signature_noise", config.signature_noise},
        {"feat_dim", config.feat_dim},       {"frame_period_s", config.frame_period_s},
        {"seed", config.seed},
    };
    meta["recording_id"] = scenario.reference.recording_id;
    meta["speakers"] = scenario.speaker_names();
    auto signatures = nlohmann::json::array();
    for (std::size_t i = 0; i < scenario.speaker_signatures.rows(); ++i) {
        const auto row = scenario.speaker_signatures.row(i);
        signatures.push_back(std::vector<float>(row.begin(), row.end()));
    }
    meta["signatures"] = signatures;

    std::ofstream out(dir + "/scenario.json");
    if (!out) throw std::runtime_error("cannot open for writing: " + dir + "/scenario.json");
    out << meta.dump(2) << "\n";
}

SimConfig load_scenario_config(const std::string& dir) {
    std::ifstream in(dir + "/scenario.json");
    if (!in) throw std::runtime_error("cannot open scenario: " + dir + "/scenario.json");
    const nlohmann::json meta = nlohmann::json::parse(in);
    const auto& c = meta.at("config");
    SimConfig config;
    config.n_speakers = c.at("n_speakers").get<int>();
    config.duration_s = c.at("duration_s").get<double>();
    config.beta_s = c.at("beta_s").get<double>();
    config.utt_min_s = c.at("utt_min_s").get<double>();
    config.utt_max_s = c.at("utt_max_s").get<double>();
    config.signature_noise = c.at("signature_noise").get<double>();
    config.feat_dim = c.at("feat_dim").get<int>();
    config.frame_period_s = c.at("frame_period_s").get<double>();
    config.seed = c.at("seed").get<std::uint64_t>();
    return config;
}

Scenario load_scenario(const std::string& dir) {
    std::ifstream in(dir + "/scenario.json");
    if (!in) throw std::runtime_error("cannot open scenario: " + dir + "/scenario.json");
    const nlohmann::json meta = nlohmann::json::parse(in);

    Scenario scenario;
    scenario.features = read_features(dir + "/features.f32");
    scenario.reference = read_rttm_file(dir + "/ref.rttm");
    if (scenario.reference.recording_id != meta.at("recording_id").get<std::string>()) {
        throw std::runtime_error("scenario rttm recording id does not match scenario.json");
    }

    const auto speakers = meta.at("speakers").get<std::vector<std::string>>();
    const auto signatures = meta.at("signatures");
    scenario.speaker_signatures = MatF(speakers.size(), scenario.features.dim());
    for (std::size_t i = 0; i < speakers.size(); ++i) {
        const auto row = signatures.at(i).get<std::vector<float>>();
        if (row.size() != scenario.features.dim()) {
            throw std::runtime_error("scenario signature dimension mismatch");
        }
        std::copy(row.begin(), row.end(), &scenario.speaker_signatures(i, 0));
    }

    scenario.features.hidden_identities = identities_from_reference(
        scenario.reference, speakers, scenario.features.size(), scenario.features.frame_period_s);
    return scenario;
}

} // namespace lgdiar
