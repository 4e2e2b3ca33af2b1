#include "doctest.h"

#include <cmath>
#include <limits>

#include "lgdiar/features.hpp"
#include "lgdiar/rng.hpp"
#include "test_support.hpp"

using namespace lgdiar;

namespace {

FeatureSequence sequence_of(std::size_t frames, std::size_t dim, float base = 0.0f) {
    FeatureSequence f;
    f.frames = MatF(frames, dim);
    f.frame_period_s = 0.1;
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t d = 0; d < dim; ++d) {
            f.frames(t, d) = base + static_cast<float>(t) + 0.01f * static_cast<float>(d);
        }
    }
    return f;
}

} // namespace

TEST_CASE("digital silence yields 98 floor-valued frames per second") {
    FrontendConfig cfg;
    const std::vector<float> silence(8000, 0.0f);
    const FeatureSequence out = compute_logmel(silence, cfg);

    CHECK(out.size() == 98); // (8000 - 200) / 80 + 1
    CHECK(out.dim() == 23);
    const float floor_value = static_cast<float>(std::log(cfg.log_floor));
    for (std::size_t t = 0; t < out.size(); ++t) {
        for (std::size_t m = 0; m < out.dim(); ++m) {
            CHECK(out.frames(t, m) == doctest::Approx(floor_value).epsilon(1e-6));
        }
    }
}

TEST_CASE("1 kHz sine peaks in the mel bin whose center is nearest 1 kHz") {
    FrontendConfig cfg;
    std::vector<float> sine(8000);
    for (std::size_t n = 0; n < sine.size(); ++n) {
        sine[n] = 0.5f * static_cast<float>(std::sin(2.0 * M_PI * 1000.0 * n / 8000.0));
    }
    const FeatureSequence out = compute_logmel(sine, cfg);

    // Independent oracle: recompute the filter centers from the HTK mel
    // formula and find the one closest to 1 kHz.
    const double mel_max = 2595.0 * std::log10(1.0 + 4000.0 / 700.0);
    int expected = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double mel = mel_max * (m + 1) / (cfg.n_mels + 1);
        const double hz = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
        if (std::abs(hz - 1000.0) < best) {
            best = std::abs(hz - 1000.0);
            expected = m;
        }
    }
    const auto centers = mel_center_frequencies(cfg);
    REQUIRE(centers.size() == 23);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double mel = mel_max * (m + 1) / (cfg.n_mels + 1);
        const double hz = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
        CHECK(centers[m] == doctest::Approx(hz).epsilon(1e-9));
    }

    for (std::size_t t = 0; t < out.size(); ++t) {
        int argmax = 0;
        for (std::size_t m = 1; m < out.dim(); ++m) {
            if (out.frames(t, m) > out.frames(t, argmax)) argmax = static_cast<int>(m);
        }
        CHECK(argmax == expected);
    }
}

TEST_CASE("frame count arithmetic") {
    FrontendConfig cfg;
    CHECK(compute_logmel(std::vector<float>(8000, 0.1f), cfg).size() == 98);
    CHECK(compute_logmel(std::vector<float>(200, 0.1f), cfg).size() == 1);
    CHECK(compute_logmel(std::vector<float>(279, 0.1f), cfg).size() == 1);
    CHECK(compute_logmel(std::vector<float>(280, 0.1f), cfg).size() == 2);
    CHECK_THROWS(compute_logmel(std::vector<float>(199, 0.1f), cfg));
}

TEST_CASE("logmel output is finite for arbitrary finite input") {
    Rng rng(11);
    std::vector<float> noise(4000);
    for (auto& x : noise) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    const FeatureSequence out = compute_logmel(noise, FrontendConfig{});
    for (std::size_t t = 0; t < out.size(); ++t) {
        for (std::size_t m = 0; m < out.dim(); ++m) CHECK(std::isfinite(out.frames(t, m)));
    }
}

TEST_CASE("subsample keeps every factor-th frame and scales the period") {
    FeatureSequence f = sequence_of(3000, 4);
    f.frame_period_s = 0.01;
    const FeatureSequence sub = subsample(f, 10);
    CHECK(sub.size() == 300);
    CHECK(sub.frame_period_s == doctest::Approx(0.1));
    for (std::size_t t = 0; t < sub.size(); ++t) {
        CHECK(sub.frames(t, 0) == f.frames(t * 10, 0));
    }

    const FeatureSequence same = subsample(f, 1);
    CHECK(same.frames == f.frames);
    CHECK(same.frame_period_s == f.frame_period_s);

    const FeatureSequence three = subsample(sequence_of(7, 2), 3);
    CHECK(three.size() == 3);
    CHECK(three.frames(1, 0) == doctest::Approx(3.0));
    CHECK(three.frames(2, 0) == doctest::Approx(6.0));
}

TEST_CASE("subsample composes: a then b equals a*b") {
    const FeatureSequence f = sequence_of(101, 3);
    const FeatureSequence ab = subsample(subsample(f, 2), 3);
    const FeatureSequence direct = subsample(f, 6);
    CHECK(ab.frames == direct.frames);
    CHECK(ab.frame_period_s == doctest::Approx(direct.frame_period_s));
}

TEST_CASE("split_windows tiles without gaps and round-trips") {
    const FeatureSequence f = sequence_of(750, 5);
    auto windows = split_windows(f, 300);
    REQUIRE(windows.size() == 3);
    CHECK(windows[0].length_frames() == 300);
    CHECK(windows[1].length_frames() == 300);
    CHECK(windows[2].length_frames() == 150);
    CHECK(windows[0].features.start_time_s == doctest::Approx(0.0));
    CHECK(windows[1].features.start_time_s == doctest::Approx(30.0));
    CHECK(windows[2].features.start_time_s == doctest::Approx(60.0));

    FeatureSequence joined = windows[0].features;
    joined.append(windows[1].features);
    joined.append(windows[2].features);
    CHECK(joined.frames == f.frames);

    CHECK(split_windows(sequence_of(300, 2), 300).size() == 1);
    auto uneven = split_windows(sequence_of(301, 2), 300);
    REQUIRE(uneven.size() == 2);
    CHECK(uneven[1].length_frames() == 1);
    CHECK(split_windows(FeatureSequence{}, 300).empty());
}

TEST_CASE("split_windows carries hidden identities") {
    FeatureSequence f = sequence_of(10, 2);
    IdentityTrack ids(10);
    for (int t = 0; t < 10; ++t) ids[t] = {t % 2};
    f.hidden_identities = ids;
    auto windows = split_windows(f, 4);
    REQUIRE(windows.size() == 3);
    REQUIRE(windows[2].features.hidden_identities.has_value());
    CHECK((*windows[2].features.hidden_identities)[0] == std::vector<int>{0});
    CHECK((*windows[2].features.hidden_identities)[1] == std::vector<int>{1});
}

TEST_CASE("gather checks bounds and keeps order") {
    const FeatureSequence f = sequence_of(5, 2);
    const FeatureSequence g = f.gather({4, 0, 2});
    CHECK(g.size() == 3);
    CHECK(g.frames(0, 0) == f.frames(4, 0));
    CHECK(g.frames(1, 0) == f.frames(0, 0));
    CHECK_THROWS(f.gather({5}));
    CHECK_THROWS(f.gather({-1}));
}

TEST_CASE("feature serialization round-trips exactly") {
    testsupport::TempDir tmp;
    FeatureSequence f = sequence_of(37, 23, 1.5f);
    f.frame_period_s = 0.1;
    f.start_time_s = 2.5;
    write_features(tmp.file("feats.f32"), f);
    const FeatureSequence back = read_features(tmp.file("feats.f32"));
    CHECK(back.frames == f.frames);
    CHECK(back.frame_period_s == f.frame_period_s);
    CHECK(back.start_time_s == f.start_time_s);
    CHECK_FALSE(back.hidden_identities.has_value());

    CHECK_THROWS(read_features(tmp.file("missing.f32")));
}

TEST_CASE("truncated feature data is rejected") {
    testsupport::TempDir tmp;
    FeatureSequence f = sequence_of(10, 4);
    write_features(tmp.file("feats.f32"), f);
    // Chop the raw payload short.
    std::ofstream(tmp.file("feats.f32"), std::ios::binary | std::ios::trunc) << "abc";
    CHECK_THROWS(read_features(tmp.file("feats.f32")));
}

TEST_CASE("wav reader handles PCM16 mono and rejects the rest") {
    testsupport::TempDir tmp;
    std::vector<std::int16_t> pcm(400);
    for (std::size_t i = 0; i < pcm.size(); ++i) pcm[i] = static_cast<std::int16_t>(i * 50 - 10000);
    testsupport::write_wav_pcm16(tmp.file("a.wav"), pcm, 8000);

    int rate = 0;
    const auto samples = read_wav(tmp.file("a.wav"), &rate);
    CHECK(rate == 8000);
    REQUIRE(samples.size() == pcm.size());
    for (std::size_t i = 0; i < pcm.size(); ++i) {
        CHECK(samples[i] == doctest::Approx(pcm[i] / 32768.0f));
    }

    std::ofstream(tmp.file("junk.wav"), std::ios::binary) << "not a wav at all";
    CHECK_THROWS(read_wav(tmp.file("junk.wav"), nullptr));
}

TEST_CASE("wav to features end to end") {
    testsupport::TempDir tmp;
    std::vector<std::int16_t> pcm(16000);
    for (std::size_t i = 0; i < pcm.size(); ++i) {
        pcm[i] = static_cast<std::int16_t>(8000.0 * std::sin(2.0 * M_PI * 700.0 * i / 8000.0));
    }
    testsupport::write_wav_pcm16(tmp.file("tone.wav"), pcm, 8000);
    int rate = 0;
    const auto samples = read_wav(tmp.file("tone.wav"), &rate);
    const FeatureSequence feats = subsample(compute_logmel(samples, FrontendConfig{}), 10);
    CHECK(feats.frame_period_s == doctest::Approx(0.1));
    CHECK(feats.size() == 20); // 198 10ms frames decimated by 10
}
