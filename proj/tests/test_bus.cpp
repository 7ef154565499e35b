#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <filesystem>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "neurostream/bus/broker.hpp"
#include "neurostream/bus/jitter.hpp"
#include "neurostream/bus/nodes.hpp"
#include "neurostream/bus/synth.hpp"
#include "neurostream/bus/tcp.hpp"
#include "neurostream/core/grid.hpp"
#include "neurostream/dsp/stream.hpp"
#include "neurostream/io/container.hpp"

using namespace neurostream;
using namespace std::chrono_literals;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("neurostream_bus_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

core::NeuroFrame tiny_frame(std::uint64_t seq) {
  core::NeuroFrame f;
  f.seq = seq;
  f.timestamp_ns = seq * 1000;
  f.sampling_rate = 2.0;
  f.channel_names = {"A"};
  f.num_samples = 2;
  f.samples = {static_cast<float>(seq), static_cast<float>(seq) + 0.5f};
  return f;
}

core::LatentCode tiny_code(std::uint64_t seq) {
  core::LatentCode c;
  c.values.assign(core::kLatentSize, static_cast<float>(seq));
  c.source_seq = seq;
  c.timestamp_ns = seq * 7;
  return c;
}

bool wait_until(const std::function<bool()>& pred, std::chrono::milliseconds budget) {
  const auto give_up = std::chrono::steady_clock::now() + budget;
  while (std::chrono::steady_clock::now() < give_up) {
    if (pred()) return true;
    std::this_thread::sleep_for(2ms);
  }
  return pred();
}

double pearson(const std::vector<float>& x, const std::vector<float>& y) {
  REQUIRE(x.size() == y.size());
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

// Amplitude of the f_hz component over an integer number of cycles.
double tone_amplitude(const std::vector<float>& x, double f_hz, double fs) {
  std::complex<double> acc = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n)
    acc += static_cast<double>(x[n]) *
           std::exp(std::complex<double>(0.0, -2.0 * std::numbers::pi * f_hz *
                                                  static_cast<double>(n) / fs));
  return 2.0 * std::abs(acc) / static_cast<double>(x.size());
}

double cell_distance(const std::string& label, double row, double col) {
  const auto pos = core::default_grid().find(label);
  REQUIRE(pos.has_value());
  return std::hypot(pos->row - row, pos->col - col);
}

}  // namespace

TEST_CASE("broker delivers messages in publish order") {
  bus::Broker broker;
  auto sub = broker.subscribe("/t", io::Schema::neuro_frame, 256);
  for (std::uint64_t i = 0; i < 100; ++i) broker.publish("/t", io::Message(tiny_frame(i)));

  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto m = sub->try_pop();
    REQUIRE(m.has_value());
    CHECK(std::get<core::NeuroFrame>(**m).seq == i);
  }
  CHECK_FALSE(sub->try_pop().has_value());
  CHECK(sub->dropped() == 0);
}

TEST_CASE("broker fans one topic out to every subscriber identically") {
  bus::Broker broker;
  auto a = broker.subscribe("/t", io::Schema::neuro_frame, 64);
  auto b = broker.subscribe("/t", io::Schema::neuro_frame, 64);
  CHECK(broker.subscriber_count("/t") == 2);

  for (std::uint64_t i = 0; i < 20; ++i) broker.publish("/t", io::Message(tiny_frame(i)));
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto ma = a->try_pop();
    const auto mb = b->try_pop();
    REQUIRE(ma.has_value());
    REQUIRE(mb.has_value());
    // Fan-out shares one immutable message rather than copying per subscriber.
    CHECK(ma->get() == mb->get());
    CHECK(std::get<core::NeuroFrame>(**ma).seq == i);
  }
}

TEST_CASE("broker accepts publishes on topics nobody subscribes to") {
  bus::Broker broker;
  CHECK_NOTHROW(broker.publish("/void", io::Message(tiny_frame(0))));
  CHECK(broker.subscriber_count("/void") == 0);
  CHECK(broker.topic_schema("/void") == io::Schema::neuro_frame);
}

TEST_CASE("a topic's schema is locked by first use") {
  bus::Broker broker;

  SUBCASE("publish after conflicting subscribe") {
    auto sub = broker.subscribe("/t", io::Schema::neuro_frame);
    CHECK_THROWS_WITH_AS(broker.publish("/t", io::Message(tiny_code(0))),
                         doctest::Contains("carries schema tag"), bus::SchemaMismatch);
  }

  SUBCASE("subscribe after conflicting publish") {
    broker.publish("/t", io::Message(tiny_frame(0)));
    CHECK_THROWS_AS(broker.subscribe("/t", io::Schema::latent_code), bus::SchemaMismatch);
  }

  SUBCASE("matching uses are fine") {
    broker.publish("/t", io::Message(tiny_frame(0)));
    CHECK_NOTHROW(broker.subscribe("/t", io::Schema::neuro_frame));
  }
}

TEST_CASE("a full queue drops the oldest message and counts it") {
  bus::Broker broker;
  auto sub = broker.subscribe("/t", io::Schema::neuro_frame, 8);
  for (std::uint64_t i = 0; i < 12; ++i) broker.publish("/t", io::Message(tiny_frame(i)));

  CHECK(sub->pending() == 8);
  CHECK(sub->dropped() == 4);
  const auto first = sub->try_pop();
  REQUIRE(first.has_value());
  CHECK(std::get<core::NeuroFrame>(**first).seq == 4);  // 0..3 were displaced
}

TEST_CASE("the error overflow policy rejects the overflowing publish") {
  bus::Broker broker;
  auto sub = broker.subscribe("/t", io::Schema::neuro_frame, 2, bus::OverflowPolicy::error);
  broker.publish("/t", io::Message(tiny_frame(0)));
  broker.publish("/t", io::Message(tiny_frame(1)));
  CHECK_THROWS_WITH_AS(broker.publish("/t", io::Message(tiny_frame(2))),
                       doctest::Contains("exceeded depth 2"), bus::QueueOverflow);
  CHECK(sub->pending() == 2);
}

TEST_CASE("blocking pop wakes on publish and on close") {
  bus::Broker broker;
  auto sub = broker.subscribe("/t", io::Schema::neuro_frame);

  SUBCASE("publish from another thread") {
    std::thread publisher([&] {
      std::this_thread::sleep_for(30ms);
      broker.publish("/t", io::Message(tiny_frame(9)));
    });
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = sub->pop(2000ms);
    const auto waited = std::chrono::steady_clock::now() - t0;
    publisher.join();
    REQUIRE(m.has_value());
    CHECK(std::get<core::NeuroFrame>(**m).seq == 9);
    CHECK(waited < 1500ms);
  }

  SUBCASE("close wakes an empty pop") {
    std::thread closer([&] {
      std::this_thread::sleep_for(30ms);
      broker.close();
    });
    const auto m = sub->pop(2000ms);
    closer.join();
    CHECK_FALSE(m.has_value());
    CHECK(sub->closed());
  }

  SUBCASE("timeout on a silent topic") {
    const auto m = sub->pop(20ms);
    CHECK_FALSE(m.has_value());
    CHECK_FALSE(sub->closed());
  }
}

TEST_CASE("dead subscribers are pruned on the next publish") {
  bus::Broker broker;
  auto sub = broker.subscribe("/t", io::Schema::neuro_frame);
  CHECK(broker.subscriber_count("/t") == 1);
  sub.reset();
  CHECK_NOTHROW(broker.publish("/t", io::Message(tiny_frame(0))));
  CHECK(broker.subscriber_count("/t") == 0);
}

TEST_CASE("synthetic EEG is deterministic per seed and well-formed") {
  bus::SynthConfig cfg;
  cfg.seed = 42;
  bus::SyntheticEeg a(cfg), b(cfg);

  CHECK(a.channels().size() == 61);
  CHECK(a.channels() == bus::default_channel_order());
  CHECK(a.sampling_rate() == 512.0);

  auto fa0 = a.next_frame(32);
  auto fb0 = b.next_frame(32);
  auto fa1 = a.next_frame(32);
  CHECK_NOTHROW(fa0.validate());
  CHECK(fa0.samples == fb0.samples);  // same seed, bit-identical
  CHECK(fa0.seq == 0);
  CHECK(fa1.seq == 1);
  CHECK(fa1.timestamp_ns == 62500000);  // 32 samples at 512 Hz

  cfg.seed = 43;
  bus::SyntheticEeg c(cfg);
  CHECK(c.next_frame(32).samples != fa0.samples);

  SUBCASE("custom channel lists are honored") {
    bus::SynthConfig small;
    small.channels = {"x1", "x2", "x3"};
    bus::SyntheticEeg gen(small);
    const auto f = gen.next_frame(8);
    CHECK(f.channel_names == small.channels);
    CHECK(f.samples.size() == 8 * 3);
    CHECK_NOTHROW(f.validate());
  }
}

TEST_CASE("nearby channels correlate more strongly than distant ones") {
  bus::SynthConfig cfg;
  cfg.seed = 7;
  bus::SyntheticEeg gen(cfg);
  std::vector<float> rows;
  const std::size_t n = 5120;  // 10 seconds
  gen.generate(n, rows);

  // Rank channels by distance to the alpha source; compare the two closest
  // against the farthest.
  const auto& chans = gen.channels();
  std::size_t near0 = 0, near1 = 0, far = 0;
  double d0 = 1e9, d1 = 1e9, dmax = -1;
  for (std::size_t c = 0; c < chans.size(); ++c) {
    const double d = cell_distance(chans[c], 8.0, 4.0);
    if (d < d0) {
      near1 = near0;
      d1 = d0;
      near0 = c;
      d0 = d;
    } else if (d < d1) {
      near1 = c;
      d1 = d;
    }
    if (d > dmax) {
      far = c;
      dmax = d;
    }
  }
  REQUIRE(d1 < 2.0);
  REQUIRE(dmax > 6.0);

  const auto column = [&](std::size_t c) {
    std::vector<float> out(n);
    for (std::size_t s = 0; s < n; ++s) out[s] = rows[s * chans.size() + c];
    return out;
  };
  const double corr_near = pearson(column(near0), column(near1));
  const double corr_far = pearson(column(near0), column(far));
  CHECK(corr_near > corr_far + 0.1);
  CHECK(corr_near > 0.5);
}

TEST_CASE("the DSP chain removes the generator's mains component") {
  bus::SynthConfig cfg;
  cfg.seed = 5;
  bus::SyntheticEeg gen(cfg);
  dsp::DspChain chain(cfg.sampling_rate);

  // Channel 0 is frontal; posterior is the channel nearest the alpha source.
  std::size_t posterior = 0;
  for (std::size_t c = 1; c < gen.channels().size(); ++c)
    if (cell_distance(gen.channels()[c], 8.0, 4.0) <
        cell_distance(gen.channels()[posterior], 8.0, 4.0))
      posterior = c;

  std::vector<float> raw, filtered, filtered_posterior;
  for (int i = 0; i < 112; ++i) {  // 7 seconds in 32-sample frames
    const auto frame = gen.next_frame(32);
    for (std::size_t s = 0; s < frame.num_samples; ++s) raw.push_back(frame.at(s, 0));
    if (const auto out = chain.apply(frame)) {
      if (out->timestamp_ns < 2'500'000'000ull) continue;  // past settling
      for (std::size_t s = 0; s < out->num_samples; ++s) {
        filtered.push_back(out->at(s, 0));
        filtered_posterior.push_back(out->at(s, posterior));
      }
    }
  }

  // Integer cycle counts keep both measurements leakage-free.
  const std::vector<float> raw_win(raw.begin() + 512, raw.begin() + 512 + 2048);
  REQUIRE(filtered.size() >= 512);
  filtered.resize(512);
  filtered_posterior.resize(512);

  const double amp_in = tone_amplitude(raw_win, 50.0, 512.0);
  const double amp_out = tone_amplitude(filtered, 50.0, chain.output_rate());
  CHECK(amp_in > 10.0);  // the configured 15 uV line, plus noise
  CHECK(amp_out < amp_in * 0.01);  // at least 40 dB of rejection

  // The alpha rhythm must survive the chain where it is strongest.
  CHECK(tone_amplitude(filtered_posterior, 10.0, chain.output_rate()) > 3.0);
}

TEST_CASE("jitter report summarizes interval statistics") {
  SUBCASE("perfectly periodic series") {
    std::vector<std::uint64_t> ts;
    for (int i = 0; i < 17; ++i) ts.push_back(static_cast<std::uint64_t>(i) * 62'500'000);
    const auto report = bus::jitter_report(ts);
    CHECK(report.nominal_ms == 62.5);
    CHECK(report.intervals_ms.size() == 16);
    CHECK(report.mean_ms == doctest::Approx(62.5));
    CHECK(report.std_ms == doctest::Approx(0.0));
    CHECK(report.fraction_within_1ms == 1.0);
    REQUIRE(report.histogram.size() == 1);
    CHECK(report.histogram[0].center_ms == doctest::Approx(62.5));
    CHECK(report.histogram[0].count == 16);
  }

  SUBCASE("hand-computed spread") {
    const std::vector<std::uint64_t> ts{0, 62'500'000, 125'300'000, 187'500'000};
    const auto report = bus::jitter_report(ts);
    // Intervals: 62.5, 62.8, 62.2 ms.
    CHECK(report.mean_ms == doctest::Approx(62.5));
    CHECK(report.std_ms == doctest::Approx(std::sqrt(0.18 / 3.0)));
    CHECK(report.fraction_within_1ms == 1.0);
    REQUIRE(report.histogram.size() == 3);
    CHECK(report.histogram.front().center_ms == doctest::Approx(62.2));
    CHECK(report.histogram.back().center_ms == doctest::Approx(62.8));
  }

  SUBCASE("far-off intervals fall outside the 1 ms window") {
    const std::vector<std::uint64_t> ts{0, 62'500'000, 130'000'000};  // 62.5, 67.5
    const auto report = bus::jitter_report(ts);
    CHECK(report.fraction_within_1ms == doctest::Approx(0.5));
  }

  SUBCASE("a non-monotonic series yields a negative interval") {
    const std::vector<std::uint64_t> ts{10'000'000, 5'000'000};
    const auto report = bus::jitter_report(ts);
    CHECK(report.intervals_ms[0] == doctest::Approx(-5.0));
  }

  SUBCASE("fewer than two timestamps is an error") {
    CHECK_THROWS_WITH_AS(bus::jitter_report(std::vector<std::uint64_t>{123}),
                         doctest::Contains("at least 2"), bus::TooFewTimestamps);
    CHECK_THROWS_AS(bus::jitter_report(std::vector<std::uint64_t>{}), bus::TooFewTimestamps);
  }

  SUBCASE("formatting mentions the headline numbers") {
    std::vector<std::uint64_t> ts{0, 62'500'000, 125'000'000};
    const auto text = bus::jitter_format(bus::jitter_report(ts));
    CHECK(text.find("mean") != std::string::npos);
    CHECK(text.find("62.5") != std::string::npos);
    CHECK(text.find('#') != std::string::npos);
  }
}

TEST_CASE("synthetic source delivers the requested duration and stops") {
  bus::SynthConfig cfg;
  cfg.seed = 1;
  bus::SyntheticSource source(cfg, 2.0);
  CHECK(source.sampling_rate() == 512.0);
  CHECK(source.channels().size() == 61);

  core::NeuroFrame frame;
  std::size_t count = 0;
  while (source.next(32, frame)) {
    CHECK(frame.seq == count);
    CHECK(frame.num_samples == 32);
    ++count;
  }
  CHECK(count == 32);  // 2 s * 512 Hz / 32 samples
  CHECK_FALSE(source.next(32, frame));  // stays exhausted
}

TEST_CASE("playback source re-frames a recorded container") {
  TempDir dir;
  const std::string path = dir.file("signal.nsig");

  bus::SynthConfig cfg;
  cfg.seed = 9;
  bus::SyntheticEeg gen(cfg);
  std::vector<core::NeuroFrame> frames;
  for (int i = 0; i < 11; ++i) frames.push_back(gen.next_frame(32));
  io::container_write(path, frames, {512.0, 0, gen.channels()});

  SUBCASE("native frame size reproduces the stored samples") {
    bus::PlaybackSource source(path);
    CHECK(source.sampling_rate() == 512.0);
    core::NeuroFrame frame;
    for (int i = 0; i < 11; ++i) {
      REQUIRE(source.next(32, frame));
      CHECK(frame.seq == static_cast<std::uint64_t>(i));
      CHECK(frame.samples == frames[static_cast<std::size_t>(i)].samples);
    }
    CHECK_FALSE(source.next(32, frame));
  }

  SUBCASE("larger frames concatenate records and drop the partial tail") {
    bus::PlaybackSource source(path);
    core::NeuroFrame frame;
    std::size_t count = 0;
    while (source.next(64, frame)) {
      CHECK(frame.num_samples == 64);
      // Each 64-sample frame is two stored records back to back.
      const auto& first = frames[count * 2].samples;
      CHECK(std::equal(first.begin(), first.end(), frame.samples.begin()));
      ++count;
    }
    CHECK(count == 5);  // 11 * 32 = 352 samples -> five 64-sample frames
  }
}

TEST_CASE("acquisition configuration is validated up front") {
  bus::Broker broker;
  bus::SynthConfig cfg;

  bus::AcquisitionConfig bad_rate;
  bad_rate.frame_rate = 0.0;
  CHECK_THROWS_AS(
      bus::AcquisitionNode(broker, std::make_unique<bus::SyntheticSource>(cfg, 1.0), bad_rate),
      bus::ConfigError);

  bus::AcquisitionConfig uneven;
  uneven.frame_rate = 7.0;  // 512 / 7 is not an integer
  CHECK_THROWS_WITH_AS(
      bus::AcquisitionNode(broker, std::make_unique<bus::SyntheticSource>(cfg, 1.0), uneven),
      doctest::Contains("does not evenly divide"), bus::ConfigError);

  CHECK_THROWS_AS(bus::AcquisitionNode(broker, nullptr, bus::AcquisitionConfig{}),
                  bus::ConfigError);
}

TEST_CASE("unpaced acquisition publishes every frame of a finite source") {
  bus::Broker broker;
  auto sub = broker.subscribe("/neurodata", io::Schema::neuro_frame, 256);

  bus::SynthConfig cfg;
  cfg.seed = 3;
  bus::AcquisitionConfig acq;
  acq.paced = false;
  bus::AcquisitionNode node(broker, std::make_unique<bus::SyntheticSource>(cfg, 10.0), acq);
  node.start();
  node.join();

  CHECK(node.frames_published() == 160);  // 10 s at 16 frames/s
  CHECK(node.exhausted());
  CHECK_FALSE(node.error().has_value());
  for (std::uint64_t i = 0; i < 160; ++i) {
    const auto m = sub->try_pop();
    REQUIRE(m.has_value());
    const auto& f = std::get<core::NeuroFrame>(**m);
    CHECK(f.seq == i);
    CHECK(f.num_samples == 32);
  }
}

TEST_CASE("paced acquisition holds the 16 Hz frame cadence") {
  bus::Broker broker;
  auto sub = broker.subscribe("/neurodata", io::Schema::neuro_frame, 64);

  bus::SynthConfig cfg;
  cfg.seed = 4;
  bus::AcquisitionNode node(broker, std::make_unique<bus::SyntheticSource>(cfg, 1.0),
                            bus::AcquisitionConfig{});
  const auto t0 = std::chrono::steady_clock::now();
  node.start();

  std::vector<std::uint64_t> recv_ns;
  while (recv_ns.size() < 16) {
    const auto m = sub->pop(500ms);
    if (!m) break;
    recv_ns.push_back(static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                             t0)
            .count()));
  }
  node.join();
  const auto elapsed = std::chrono::steady_clock::now() - t0;

  REQUIRE(recv_ns.size() == 16);
  CHECK(node.frames_published() == 16);
  // The last deadline sits at 15/16 s; the run cannot legitimately end sooner.
  CHECK(elapsed >= 900ms);
  CHECK(elapsed < 3000ms);

  const auto report = bus::jitter_report(recv_ns);
  CHECK(report.mean_ms == doctest::Approx(62.5).epsilon(0.04));
  CHECK(report.std_ms < 5.0);
}

namespace {

ae::Autoencoder<float> test_model() {
  ae::Autoencoder<float> model;
  model.init(11);
  return model;
}

// Runs a finite synthetic stream through acquisition + encoder and returns
// the codes seen on /encoded.
std::vector<core::LatentCode> run_encoder_pipeline(std::uint64_t seed, double duration_s) {
  bus::Broker broker;
  auto codes_sub = broker.subscribe("/encoded", io::Schema::latent_code, 256);

  bus::EncoderNodeConfig enc_cfg;
  enc_cfg.queue_depth = 256;
  bus::EncoderNode encoder(broker, test_model(), enc_cfg);

  bus::SynthConfig cfg;
  cfg.seed = seed;
  bus::AcquisitionConfig acq;
  acq.paced = false;
  bus::AcquisitionNode acquisition(broker, std::make_unique<bus::SyntheticSource>(cfg, duration_s),
                                   acq);

  encoder.start();
  acquisition.start();
  acquisition.join();
  encoder.stop();  // drains whatever is still queued, then exits
  encoder.join();
  REQUIRE_FALSE(encoder.error().has_value());

  std::vector<core::LatentCode> codes;
  while (const auto m = codes_sub->try_pop()) codes.push_back(std::get<core::LatentCode>(**m));
  CHECK(codes.size() == encoder.codes_published());
  return codes;
}

}  // namespace

TEST_CASE("encoder emits one code per frame after a two-frame warm-up") {
  const auto codes = run_encoder_pipeline(21, 1.0);  // 16 frames in

  // Frames 0 and 1 fill the first window; every frame after that completes one.
  REQUIRE(codes.size() == 15);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    CHECK(codes[i].values.size() == core::kLatentSize);
    CHECK_NOTHROW(codes[i].validate());
    CHECK(codes[i].source_seq == i + 1);
    // Window k starts at decimated row 8k: 62.5 ms apart.
    CHECK(codes[i].timestamp_ns == i * 62'500'000);
  }
}

TEST_CASE("the encoder pipeline is deterministic end to end") {
  const auto first = run_encoder_pipeline(33, 1.0);
  const auto second = run_encoder_pipeline(33, 1.0);
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].values == second[i].values);  // bit-identical
    CHECK(first[i].timestamp_ns == second[i].timestamp_ns);
  }
}

TEST_CASE("a sequence gap restarts the window instead of stitching") {
  bus::Broker broker;
  auto codes_sub = broker.subscribe("/encoded", io::Schema::latent_code, 64);
  bus::EncoderNodeConfig enc_cfg;
  enc_cfg.queue_depth = 64;
  bus::EncoderNode encoder(broker, test_model(), enc_cfg);

  bus::SynthConfig cfg;
  cfg.seed = 13;
  bus::SyntheticEeg gen(cfg);
  std::vector<core::NeuroFrame> frames;
  for (int i = 0; i < 12; ++i) frames.push_back(gen.next_frame(32));

  encoder.start();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i == 3) continue;  // frame 3 is lost in transit
    broker.publish("/neurodata", io::Message(frames[i]));
  }
  encoder.stop();
  encoder.join();
  REQUIRE_FALSE(encoder.error().has_value());

  // Codes complete at frames 1, 2, then (after the gap resets the fill at
  // frame 4) at frames 5..11.
  std::vector<std::uint64_t> sources;
  while (const auto m = codes_sub->try_pop())
    sources.push_back(std::get<core::LatentCode>(**m).source_seq);
  CHECK(sources == std::vector<std::uint64_t>{1, 2, 5, 6, 7, 8, 9, 10, 11});
}

TEST_CASE("the encoder surfaces a channel mismatch instead of dying silently") {
  bus::Broker broker;
  bus::EncoderNode encoder(broker, test_model());

  bus::SynthConfig cfg;
  cfg.channels = {"bogus1", "bogus2"};
  bus::SyntheticEeg gen(cfg);
  encoder.start();
  broker.publish("/neurodata", io::Message(gen.next_frame(32)));

  CHECK(wait_until([&] { return encoder.error().has_value(); }, 2000ms));
  encoder.stop();
  encoder.join();
  CHECK(encoder.codes_published() == 0);
}

TEST_CASE("recorder captures a raw stream that plays back identically") {
  TempDir dir;
  const std::string path = dir.file("session.nsig");

  bus::SynthConfig cfg;
  cfg.seed = 17;
  {
    bus::Broker broker;
    bus::RecorderNode recorder(broker, "/neurodata", io::Schema::neuro_frame, path, 256);
    bus::AcquisitionConfig acq;
    acq.paced = false;
    bus::AcquisitionNode acquisition(broker, std::make_unique<bus::SyntheticSource>(cfg, 1.0),
                                     acq);
    recorder.start();
    acquisition.start();
    acquisition.join();
    recorder.stop();
    recorder.join();
    REQUIRE_FALSE(recorder.error().has_value());
    CHECK(recorder.records_written() == 16);
    CHECK(recorder.messages_dropped() == 0);
  }

  // The recording replays bit-identically to a fresh generator run.
  bus::SyntheticEeg reference(cfg);
  bus::PlaybackSource playback(path);
  CHECK(playback.channels() == reference.channels());
  core::NeuroFrame replayed;
  for (int i = 0; i < 16; ++i) {
    REQUIRE(playback.next(32, replayed));
    const auto expected = reference.next_frame(32);
    CHECK(replayed.samples == expected.samples);
    CHECK(replayed.timestamp_ns == expected.timestamp_ns);
  }
  CHECK_FALSE(playback.next(32, replayed));
}

TEST_CASE("recorder writes latent codes with their source sequence numbers") {
  TempDir dir;
  const std::string path = dir.file("codes.nsig");

  bus::Broker broker;
  bus::RecorderNode recorder(broker, "/encoded", io::Schema::latent_code, path, 64);
  recorder.start();
  for (std::uint64_t i = 1; i <= 5; ++i) broker.publish("/encoded", io::Message(tiny_code(i)));
  recorder.stop();
  recorder.join();
  REQUIRE_FALSE(recorder.error().has_value());
  CHECK(recorder.records_written() == 5);

  io::ContainerReader reader(path);
  CHECK(reader.header().channel_names == io::code_channel_names());
  core::NeuroFrame record;
  std::uint64_t recv_ns = 0;
  for (std::uint64_t i = 1; i <= 5; ++i) {
    REQUIRE(reader.next(record, &recv_ns));
    CHECK(record.seq == i);
    CHECK(record.num_samples == 1);
    CHECK(record.samples == std::vector<float>(core::kLatentSize, static_cast<float>(i)));
  }
  CHECK_FALSE(reader.next(record));
}

TEST_CASE("an unwritable recording path stops the recorder gracefully") {
  bus::Broker broker;
  bus::RecorderNode recorder(broker, "/neurodata", io::Schema::neuro_frame,
                             "/nonexistent-dir/out.nsig");
  recorder.start();
  broker.publish("/neurodata", io::Message(tiny_frame(0)));

  CHECK(wait_until([&] { return recorder.error().has_value(); }, 2000ms));
  recorder.stop();
  recorder.join();
  CHECK(recorder.error()->find("cannot open") != std::string::npos);
  CHECK(recorder.records_written() == 0);
}

TEST_CASE("tcp sink and feed bridge a topic between brokers") {
  bus::Broker upstream;
  bus::Broker downstream;

  bus::SynthConfig cfg;
  cfg.channels = {"a", "b", "c", "d"};
  cfg.sampling_rate = 64.0;
  cfg.seed = 2;
  bus::SyntheticEeg gen(cfg);

  auto sink = std::make_unique<bus::TcpSink>(upstream, "/link", io::Schema::neuro_frame,
                                             std::uint16_t{0}, 64);
  REQUIRE(sink->port() != 0);

  auto mirror_sub = downstream.subscribe("/mirror", io::Schema::neuro_frame, 64);
  bus::TcpFeed feed(downstream, "/mirror", "127.0.0.1", sink->port());

  sink->start();
  feed.start();

  std::vector<core::NeuroFrame> sent;
  for (int i = 0; i < 10; ++i) {
    sent.push_back(gen.next_frame(8));
    upstream.publish("/link", io::Message(sent.back()));
  }

  CHECK(wait_until([&] { return feed.messages_received() == 10; }, 5000ms));
  CHECK(sink->clients_seen() == 1);
  for (int i = 0; i < 10; ++i) {
    const auto m = mirror_sub->try_pop();
    REQUIRE(m.has_value());
    const auto& f = std::get<core::NeuroFrame>(**m);
    CHECK(f.seq == sent[static_cast<std::size_t>(i)].seq);
    CHECK(f.samples == sent[static_cast<std::size_t>(i)].samples);
    CHECK(f.channel_names == sent[static_cast<std::size_t>(i)].channel_names);
  }

  SUBCASE("an idle link carries heartbeats") {
    CHECK(wait_until([&] { return feed.heartbeats_received() >= 1; }, 3000ms));
    CHECK(feed.messages_received() == 10);  // heartbeats are not republished
  }

  SUBCASE("a vanished sink is detected as a disconnect") {
    sink.reset();  // closes the listener and every client socket
    CHECK(wait_until([&] { return feed.disconnected(); }, 3000ms));
  }
  feed.stop();
  feed.join();
  CHECK_FALSE(feed.error().has_value());
}

