#include "neurostream/bus/nodes.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <variant>

namespace neurostream::bus {
namespace {

std::uint64_t steady_now_ns() {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                        std::chrono::steady_clock::now().time_since_epoch())
                                        .count());
}

}  // namespace

// --- SyntheticSource -------------------------------------------------------

SyntheticSource::SyntheticSource(SynthConfig config, double duration_s)
    : gen_(std::move(config)),
      samples_left_(duration_s <= 0 ? -1
                                    : std::llround(duration_s * gen_.sampling_rate())) {}

bool SyntheticSource::next(std::size_t num_samples, core::NeuroFrame& out) {
  if (num_samples < 1) throw ConfigError("frame size must be >= 1 sample");
  if (samples_left_ >= 0) {
    if (samples_left_ < static_cast<std::int64_t>(num_samples)) return false;
    samples_left_ -= static_cast<std::int64_t>(num_samples);
  }
  out = gen_.next_frame(num_samples);
  return true;
}

// --- PlaybackSource --------------------------------------------------------

PlaybackSource::PlaybackSource(const std::string& path) : reader_(path) {
  if (reader_.header().sampling_rate <= 0)
    throw ConfigError("playback container " + path + " has no sampling rate");
}

bool PlaybackSource::next(std::size_t num_samples, core::NeuroFrame& out) {
  if (num_samples < 1) throw ConfigError("frame size must be >= 1 sample");
  const std::size_t channels = reader_.header().channel_names.size();
  const std::size_t want = num_samples * channels;
  core::NeuroFrame record;
  while (pending_.size() < want && !exhausted_) {
    if (!reader_.next(record)) {
      exhausted_ = true;
      break;
    }
    pending_.insert(pending_.end(), record.samples.begin(), record.samples.end());
    pending_flags_ |= record.flags;
  }
  if (pending_.size() < want) return false;  // trailing partial frame dropped

  out.seq = next_seq_++;
  out.timestamp_ns = static_cast<std::uint64_t>(
      1e9 * static_cast<double>(sample_index_) / reader_.header().sampling_rate);
  out.sampling_rate = reader_.header().sampling_rate;
  out.flags = pending_flags_;
  out.channel_names = reader_.header().channel_names;
  out.num_samples = num_samples;
  out.samples.assign(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(want));
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(want));
  if (pending_.empty()) pending_flags_ = 0;
  sample_index_ += num_samples;
  return true;
}

// --- AcquisitionNode -------------------------------------------------------

AcquisitionNode::AcquisitionNode(Broker& broker, std::unique_ptr<FrameSource> source,
                                 AcquisitionConfig config)
    : broker_(broker), source_(std::move(source)), config_(std::move(config)) {
  if (!source_) throw ConfigError("acquisition needs a frame source");
  if (config_.frame_rate <= 0) throw ConfigError("frame rate must be positive");
  const double fs = source_->sampling_rate();
  const double per_frame = fs / config_.frame_rate;
  const auto rounded = std::llround(per_frame);
  if (rounded < 1 || std::abs(per_frame - static_cast<double>(rounded)) > 1e-6)
    throw ConfigError("frame rate " + std::to_string(config_.frame_rate) +
                      " Hz does not evenly divide the sampling rate " + std::to_string(fs) +
                      " Hz");
  samples_per_frame_ = static_cast<std::size_t>(rounded);
}

AcquisitionNode::~AcquisitionNode() {
  stop();
  join();
}

void AcquisitionNode::start() {
  if (thread_.joinable()) return;
  thread_ = std::thread(&AcquisitionNode::run, this);
}

void AcquisitionNode::join() {
  if (thread_.joinable()) thread_.join();
}

void AcquisitionNode::run() {
  using clock = std::chrono::steady_clock;
  const auto period =
      std::chrono::nanoseconds(std::llround(1e9 / config_.frame_rate));
  const auto start = clock::now();
  std::uint64_t n = 0;
  try {
    while (!stop_.load(std::memory_order_relaxed)) {
      core::NeuroFrame frame;
      if (!source_->next(samples_per_frame_, frame)) {
        exhausted_.store(true);
        break;
      }
      if (config_.paced) {
        // Deadlines are absolute so one late wakeup cannot shift every
        // subsequent frame. Coarse sleep, then a short spin for precision.
        const auto deadline = start + period * n;
        std::this_thread::sleep_until(deadline - std::chrono::microseconds(200));
        while (clock::now() < deadline) {
        }
      }
      broker_.publish(config_.topic, io::Message(std::move(frame)));
      frames_published_.fetch_add(1, std::memory_order_relaxed);
      ++n;
    }
  } catch (const std::exception& e) {
    error_ = e.what();
  }
}

// --- ChunkAssembler ----------------------------------------------------------

ChunkAssembler::ChunkAssembler(std::size_t num_channels)
    : num_channels_(num_channels),
      window_(core::kChunkTimesteps * num_channels, 0.0f),
      row_ts_ns_(core::kChunkTimesteps, 0) {
  if (num_channels < 1) throw ConfigError("chunk assembler needs at least one channel");
}

void ChunkAssembler::feed(const core::NeuroFrame& frame,
                          const std::function<void(std::span<const float>, std::uint64_t)>& sink) {
  const auto row_step_ns =
      static_cast<std::uint64_t>(std::llround(1e9 / frame.sampling_rate));
  for (std::size_t r = 0; r < frame.num_samples; ++r) {
    std::copy_n(frame.samples.begin() + static_cast<std::ptrdiff_t>(r * num_channels_),
                num_channels_,
                window_.begin() + static_cast<std::ptrdiff_t>(rows_filled_ * num_channels_));
    row_ts_ns_[rows_filled_] = frame.timestamp_ns + r * row_step_ns;
    if (++rows_filled_ < core::kChunkTimesteps) continue;

    sink(std::span<const float>(window_), row_ts_ns_[0]);

    // Slide by half a window: every sample appears in two consecutive codes.
    constexpr std::size_t kHop = core::kChunkTimesteps / 2;
    std::copy(window_.begin() + static_cast<std::ptrdiff_t>(kHop * num_channels_), window_.end(),
              window_.begin());
    std::copy(row_ts_ns_.begin() + kHop, row_ts_ns_.end(), row_ts_ns_.begin());
    rows_filled_ = core::kChunkTimesteps - kHop;
  }
}

// --- EncoderNode -----------------------------------------------------------

EncoderNode::EncoderNode(Broker& broker, ae::Autoencoder<float> model, EncoderNodeConfig config)
    : broker_(broker), model_(std::move(model)), config_(std::move(config)) {
  // Subscribe up front so frames published before start() are not lost.
  sub_ = broker_.subscribe(config_.input_topic, io::Schema::neuro_frame, config_.queue_depth);
}

EncoderNode::~EncoderNode() {
  stop();
  join();
}

void EncoderNode::start() {
  if (thread_.joinable()) return;
  thread_ = std::thread(&EncoderNode::run, this);
}

void EncoderNode::join() {
  if (thread_.joinable()) thread_.join();
}

std::size_t EncoderNode::frames_dropped() const { return sub_->dropped(); }

void EncoderNode::run() {
  try {
    while (true) {
      if (auto m = sub_->pop(std::chrono::milliseconds(50))) {
        consume(std::get<core::NeuroFrame>(**m));
        continue;
      }
      // Nothing pending: finish once asked to stop or the bus is closed.
      if (stop_.load(std::memory_order_relaxed) || sub_->closed()) break;
    }
  } catch (const std::exception& e) {
    error_ = e.what();
  }
}

void EncoderNode::consume(const core::NeuroFrame& frame) {
  if (!saw_frame_) {
    chain_.emplace(frame.sampling_rate, config_.dsp);
    renderer_.emplace(core::default_grid(), frame.channel_names, config_.render_mode);
    assembler_.emplace(frame.num_channels());
    saw_frame_ = true;
  } else if (frame.seq != last_seq_ + 1) {
    assembler_->reset();  // dropped frame: never stitch non-adjacent samples
  }
  last_seq_ = frame.seq;

  const auto filtered = chain_->apply(frame);
  if (!filtered) return;

  assembler_->feed(*filtered, [&](std::span<const float> rows, std::uint64_t start_ts_ns) {
    renderer_->render_into(rows, assembler_->num_channels(), chunk_);
    chunk_.start_timestamp_ns = start_ts_ns;
    core::LatentCode code = model_.encode(chunk_);
    code.source_seq = frame.seq;
    broker_.publish(config_.output_topic, io::Message(std::move(code)));
    output_times_ns_.push_back(steady_now_ns());
    codes_published_.fetch_add(1, std::memory_order_relaxed);
  });
}

// --- RecorderNode ----------------------------------------------------------

RecorderNode::RecorderNode(Broker& broker, std::string topic, io::Schema schema,
                           std::string path, std::size_t queue_depth)
    : broker_(broker), topic_(std::move(topic)), schema_(schema), path_(std::move(path)) {
  sub_ = broker_.subscribe(topic_, schema_, queue_depth);
}

RecorderNode::~RecorderNode() {
  stop();
  join();
}

void RecorderNode::start() {
  if (thread_.joinable()) return;
  epoch_ = std::chrono::steady_clock::now();
  thread_ = std::thread(&RecorderNode::run, this);
}

void RecorderNode::join() {
  if (thread_.joinable()) thread_.join();
}

std::size_t RecorderNode::messages_dropped() const { return sub_->dropped(); }

void RecorderNode::run() {
  try {
    while (true) {
      if (auto m = sub_->pop(std::chrono::milliseconds(50))) {
        write(**m);
        continue;
      }
      if (stop_.load(std::memory_order_relaxed) || sub_->closed()) break;
    }
    if (writer_) writer_->flush();
  } catch (const std::exception& e) {
    error_ = e.what();  // e.g. the disk filling up; the bus keeps running
  }
}

void RecorderNode::write(const io::Message& message) {
  const auto recv_ns = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                           epoch_)
          .count());
  if (const auto* frame = std::get_if<core::NeuroFrame>(&message)) {
    if (!writer_)
      writer_ = std::make_unique<io::ContainerWriter>(
          path_,
          io::ContainerHeader{frame->sampling_rate, frame->timestamp_ns, frame->channel_names});
    writer_->append(*frame, recv_ns);
  } else {
    const auto& code = std::get<core::LatentCode>(message);
    if (!writer_)
      // Latent containers use pseudo-channels; the rate field is meaningless.
      writer_ = std::make_unique<io::ContainerWriter>(
          path_, io::ContainerHeader{0.0, code.timestamp_ns, io::code_channel_names()});
    writer_->append_code(code, recv_ns);
  }
  records_written_.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace neurostream::bus
