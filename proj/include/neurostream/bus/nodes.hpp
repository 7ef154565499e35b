#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "neurostream/ae/model.hpp"
#include "neurostream/bus/broker.hpp"
#include "neurostream/bus/synth.hpp"
#include "neurostream/core/grid.hpp"
#include "neurostream/dsp/stream.hpp"
#include "neurostream/io/container.hpp"

namespace neurostream::bus {

struct ConfigError : Error {
  using Error::Error;
};

// Produces frames of a caller-chosen size on demand. Implementations keep
// their own read position; next() returning false means cleanly exhausted.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual double sampling_rate() const = 0;
  virtual const std::vector<std::string>& channels() const = 0;
  virtual bool next(std::size_t num_samples, core::NeuroFrame& out) = 0;
};

// Finite stretch of generated EEG (duration_s <= 0 means unbounded).
class SyntheticSource final : public FrameSource {
 public:
  explicit SyntheticSource(SynthConfig config = {}, double duration_s = -1.0);

  double sampling_rate() const override { return gen_.sampling_rate(); }
  const std::vector<std::string>& channels() const override { return gen_.channels(); }
  bool next(std::size_t num_samples, core::NeuroFrame& out) override;

 private:
  SyntheticEeg gen_;
  std::int64_t samples_left_;  // negative = unbounded
};

// Replays a recorded signal container, re-framing the stored records to the
// requested frame size; a trailing partial frame is dropped.
class PlaybackSource final : public FrameSource {
 public:
  explicit PlaybackSource(const std::string& path);

  double sampling_rate() const override { return reader_.header().sampling_rate; }
  const std::vector<std::string>& channels() const override {
    return reader_.header().channel_names;
  }
  bool next(std::size_t num_samples, core::NeuroFrame& out) override;

 private:
  io::ContainerReader reader_;
  std::vector<float> pending_;  // buffered rows not yet emitted
  std::uint32_t pending_flags_ = 0;
  std::uint64_t sample_index_ = 0;
  std::uint64_t next_seq_ = 0;
  bool exhausted_ = false;
};

// Publishes fixed-size frames onto a topic at a fixed rate, pacing each
// publish against an absolute deadline (start + n * period) so timing errors
// do not accumulate. Unpaced mode runs the same loop flat out.
struct AcquisitionConfig {
  std::string topic = "/neurodata";
  double frame_rate = 16.0;  // frames per second
  bool paced = true;
};

class AcquisitionNode {
 public:
  AcquisitionNode(Broker& broker, std::unique_ptr<FrameSource> source,
                  AcquisitionConfig config = {});
  ~AcquisitionNode();

  AcquisitionNode(const AcquisitionNode&) = delete;
  AcquisitionNode& operator=(const AcquisitionNode&) = delete;

  void start();
  void stop() { stop_.store(true); }
  void join();

  std::size_t frames_published() const { return frames_published_.load(); }
  bool exhausted() const { return exhausted_.load(); }
  // First failure that ended the loop, if any (read after join).
  const std::optional<std::string>& error() const { return error_; }

 private:
  void run();

  Broker& broker_;
  std::unique_ptr<FrameSource> source_;
  AcquisitionConfig config_;
  std::size_t samples_per_frame_ = 0;
  std::thread thread_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> exhausted_{false};
  std::atomic<std::size_t> frames_published_{0};
  std::optional<std::string> error_;
};

// Rolls decimated sample rows into overlapping 16-row windows (hop 8) with
// per-row timestamps. Shared by the streaming encoder node and the offline
// encoding path so both produce identical code sequences.
class ChunkAssembler {
 public:
  explicit ChunkAssembler(std::size_t num_channels);

  void reset() { rows_filled_ = 0; }  // e.g. after a sequence gap

  // Feeds one frame; calls sink(rows, start_ts_ns) for every window the new
  // rows complete, rows being kChunkTimesteps x num_channels row-major.
  void feed(const core::NeuroFrame& frame,
            const std::function<void(std::span<const float>, std::uint64_t)>& sink);

  std::size_t num_channels() const { return num_channels_; }

 private:
  std::size_t num_channels_;
  std::vector<float> window_;
  std::vector<std::uint64_t> row_ts_ns_;
  std::size_t rows_filled_ = 0;
};

// Consumes raw frames, runs the DSP chain, renders a sliding 16-row window
// (hop 8) onto the grid, encodes it, and publishes the latent code. After a
// two-frame warm-up this emits one code per input frame. A sequence gap
// restarts the window fill so no chunk stitches non-adjacent samples.
struct EncoderNodeConfig {
  std::string input_topic = "/neurodata";
  std::string output_topic = "/encoded";
  std::size_t queue_depth = kDefaultQueueDepth;
  core::RenderMode render_mode = core::RenderMode::strict;
  dsp::DspChainConfig dsp;
};

class EncoderNode {
 public:
  EncoderNode(Broker& broker, ae::Autoencoder<float> model, EncoderNodeConfig config = {});
  ~EncoderNode();

  EncoderNode(const EncoderNode&) = delete;
  EncoderNode& operator=(const EncoderNode&) = delete;

  void start();
  void stop() { stop_.store(true); }
  void join();

  std::size_t codes_published() const { return codes_published_.load(); }
  std::size_t frames_dropped() const;  // input queue overflow drops
  const std::optional<std::string>& error() const { return error_; }
  // Steady-clock publish instants of every code, for jitter analysis
  // (read after join).
  const std::vector<std::uint64_t>& output_times_ns() const { return output_times_ns_; }

 private:
  void run();
  void consume(const core::NeuroFrame& frame);

  Broker& broker_;
  ae::Autoencoder<float> model_;
  EncoderNodeConfig config_;
  std::shared_ptr<Subscription> sub_;
  std::thread thread_;
  std::atomic<bool> stop_{false};
  std::atomic<std::size_t> codes_published_{0};
  std::optional<std::string> error_;
  std::vector<std::uint64_t> output_times_ns_;

  // Streaming state, touched only by the worker thread.
  std::optional<dsp::DspChain> chain_;
  std::optional<core::GridRenderer> renderer_;
  std::optional<ChunkAssembler> assembler_;
  std::uint64_t last_seq_ = 0;
  bool saw_frame_ = false;
  core::Chunk chunk_;
};

// Appends every message on one topic to a signal container, stamping each
// record with its local receive time. An IO failure stops the node and is
// reported via error() instead of tearing down the process.
class RecorderNode {
 public:
  RecorderNode(Broker& broker, std::string topic, io::Schema schema, std::string path,
               std::size_t queue_depth = kDefaultQueueDepth);
  ~RecorderNode();

  RecorderNode(const RecorderNode&) = delete;
  RecorderNode& operator=(const RecorderNode&) = delete;

  void start();
  void stop() { stop_.store(true); }
  void join();

  std::size_t records_written() const { return records_written_.load(); }
  std::size_t messages_dropped() const;
  const std::optional<std::string>& error() const { return error_; }

 private:
  void run();
  void write(const io::Message& message);

  Broker& broker_;
  std::string topic_;
  io::Schema schema_;
  std::string path_;
  std::shared_ptr<Subscription> sub_;
  std::unique_ptr<io::ContainerWriter> writer_;
  std::chrono::steady_clock::time_point epoch_;
  std::thread thread_;
  std::atomic<bool> stop_{false};
  std::atomic<std::size_t> records_written_{0};
  std::optional<std::string> error_;
};

}  // namespace neurostream::bus
