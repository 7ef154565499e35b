// neurostream: operator entry points for the EEG compression pipeline.
//
// Subcommands: synth, import, train, eval, encode, stream, bench-jitter,
// filter-response. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "neurostream/ae/train.hpp"
#include "neurostream/bus/broker.hpp"
#include "neurostream/bus/jitter.hpp"
#include "neurostream/bus/nodes.hpp"
#include "neurostream/bus/synth.hpp"
#include "neurostream/dsp/design.hpp"
#include "neurostream/io/container.hpp"
#include "neurostream/log.hpp"

using namespace neurostream;
using namespace std::chrono_literals;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : Error {
  using Error::Error;
};

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path))
    throw UsageError(what + " " + path + " does not exist");
}

std::string format_mse(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  double duration_s = 10.0;
  double sampling_rate = 512.0;
  double frame_rate = 16.0;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& args) {
  if (args.duration_s <= 0) throw UsageError("duration must be positive");
  bus::SynthConfig cfg;
  cfg.seed = args.seed;
  cfg.sampling_rate = args.sampling_rate;
  bus::SyntheticSource source(cfg, args.duration_s);

  const double per_frame = args.sampling_rate / args.frame_rate;
  if (per_frame < 1 || per_frame != std::floor(per_frame))
    throw UsageError("frame rate must evenly divide the sampling rate");

  io::ContainerWriter writer(args.out,
                             {args.sampling_rate, 0, std::vector<std::string>(source.channels())});
  core::NeuroFrame frame;
  while (source.next(static_cast<std::size_t>(per_frame), frame)) writer.append(frame);
  writer.flush();
  std::printf("wrote %zu frames (%zu channels, %.0f Hz, %.1f s) to %s\n",
              writer.records_written(), source.channels().size(), args.sampling_rate,
              args.duration_s, args.out.c_str());
  return kExitOk;
}

// --- import ------------------------------------------------------------------

struct ImportArgs {
  std::string csv;
  std::string out;
  double sampling_rate = 512.0;
  std::size_t frame_size = 32;
  bool no_header = false;
};

int cmd_import(const ImportArgs& args) {
  require_file(args.csv, "csv file");
  io::CsvOptions options;
  options.sampling_rate = args.sampling_rate;
  options.frame_size = args.frame_size;
  options.header_row = !args.no_header;
  const auto [header, frames] = io::csv_import(args.csv, options);
  io::container_write(args.out, frames, header);
  std::printf("imported %zu frames of %zu channels to %s\n", frames.size(),
              header.channel_names.size(), args.out.c_str());
  return kExitOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string report;
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t folds = 0;  // 0 disables cross-validation
  std::size_t repeats = 1;
  bool zscore = false;
  bool lenient = false;
};

int cmd_train(const TrainArgs& args) {
  if (args.epochs < 1) throw UsageError("epochs must be >= 1");
  require_file(args.data, "data container");

  const auto chunks = ae::chunks_from_container(args.data, args.lenient);
  std::printf("dataset: %zu chunks from %s\n", chunks.size(), args.data.c_str());

  ae::TrainConfig cfg;
  cfg.epochs = args.epochs;
  cfg.batch_size = args.batch_size;
  cfg.lr = args.lr;
  cfg.seed = args.seed;
  cfg.folds = args.folds ? args.folds : 3;
  cfg.repeats = args.repeats;
  cfg.zscore = args.zscore;

  if (args.folds >= 2) {
    const auto report = ae::crossvalidate(chunks, cfg);
    std::string table = "repeat,fold,mse\n";
    for (const auto& fold : report.folds)
      table += std::to_string(fold.repeat) + "," + std::to_string(fold.fold) + "," +
               format_mse(fold.mse) + "\n";
    std::fputs(table.c_str(), stdout);
    std::printf("cross-validation mse: %s +- %s over %zu evaluations\n",
                format_mse(report.mean_mse).c_str(), format_mse(report.std_mse).c_str(),
                report.folds.size());
    if (!args.report.empty()) {
      std::ofstream out(args.report);
      out << table;
      if (!out) throw io::IoError("cannot write report " + args.report);
    }
  }

  ae::Autoencoder<float> model;
  model.init((args.seed + 1) * 1000003);
  const auto result = ae::train(model, chunks, cfg);
  std::printf("trained %zu epochs%s: mse %s -> %s\n", result.epochs_run,
              result.stopped_early ? " (stopped early)" : "",
              format_mse(result.loss_curve.front()).c_str(),
              format_mse(result.loss_curve.back()).c_str());
  if (!args.out.empty()) {
    model.save(args.out);
    std::printf("checkpoint written to %s\n", args.out.c_str());
  }
  return kExitOk;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  bool lenient = false;
};

int cmd_eval(const EvalArgs& args) {
  require_file(args.checkpoint, "checkpoint");
  require_file(args.data, "data container");
  auto model = ae::Autoencoder<float>::from_checkpoint(args.checkpoint);
  const auto chunks = ae::chunks_from_container(args.data, args.lenient);
  const double mse = ae::evaluate(model, chunks);
  std::printf("per-element reconstruction mse over %zu chunks: %s\n", chunks.size(),
              format_mse(mse).c_str());
  return kExitOk;
}

// --- encode ------------------------------------------------------------------

struct EncodeArgs {
  std::string data;
  std::string checkpoint;
  std::string out;
  bool lenient = false;
};

// Offline twin of the streaming encoder: same DSP chain, same hop-8 window,
// so a recording encodes to the exact code sequence `stream` would publish.
int cmd_encode(const EncodeArgs& args) {
  require_file(args.checkpoint, "checkpoint");
  require_file(args.data, "data container");
  auto model = ae::Autoencoder<float>::from_checkpoint(args.checkpoint);

  io::ContainerReader reader(args.data);
  const auto& header = reader.header();
  constexpr double kTargetRate = 128.0;
  std::optional<dsp::DspChain> chain;
  if (header.sampling_rate != kTargetRate) {
    const double factor = header.sampling_rate / kTargetRate;
    if (factor < 1.0 || factor != std::floor(factor))
      throw dsp::RateNotDivisible("container rate " + std::to_string(header.sampling_rate) +
                                  " Hz is not an integer multiple of 128 Hz");
    dsp::DspChainConfig cfg;
    cfg.decimation = static_cast<unsigned>(factor);
    chain.emplace(header.sampling_rate, cfg);
  }

  const core::GridRenderer renderer(
      core::default_grid(), header.channel_names,
      args.lenient ? core::RenderMode::lenient : core::RenderMode::strict);
  bus::ChunkAssembler assembler(header.channel_names.size());
  io::ContainerWriter writer(args.out, {kTargetRate, 0, io::code_channel_names()});

  core::Chunk chunk;
  core::NeuroFrame frame;
  std::uint64_t last_seq = 0;
  bool first = true;
  while (reader.next(frame)) {
    if (!first && frame.seq != last_seq + 1) assembler.reset();
    first = false;
    last_seq = frame.seq;

    std::optional<core::NeuroFrame> filtered;
    if (chain)
      filtered = chain->apply(frame);
    else
      filtered = frame;
    if (!filtered) continue;

    assembler.feed(*filtered, [&](std::span<const float> rows, std::uint64_t start_ts_ns) {
      renderer.render_into(rows, assembler.num_channels(), chunk);
      chunk.start_timestamp_ns = start_ts_ns;
      core::LatentCode code = model.encode(chunk);
      code.source_seq = frame.seq;
      writer.append_code(code);
    });
  }
  writer.flush();
  std::printf("encoded %zu codes to %s\n", writer.records_written(), args.out.c_str());
  return kExitOk;
}

// --- stream ------------------------------------------------------------------

struct StreamArgs {
  std::string source;  // "synth", "synth:SEED", or a container path
  std::string checkpoint;
  double frame_rate = 16.0;
  double duration_s = 0.0;  // 0 = play a file to its end
  std::string record;       // optional /encoded recording
  std::string jitter_csv;   // optional intervals file
  bool no_pace = false;
};

std::unique_ptr<bus::FrameSource> open_source(const std::string& spec, double duration_s) {
  if (spec == "synth" || spec.rfind("synth:", 0) == 0) {
    if (duration_s <= 0) throw UsageError("synthetic sources need --duration > 0");
    bus::SynthConfig cfg;
    if (const auto colon = spec.find(':'); colon != std::string::npos)
      cfg.seed = std::stoull(spec.substr(colon + 1));
    return std::make_unique<bus::SyntheticSource>(cfg, duration_s);
  }
  require_file(spec, "source container");
  return std::make_unique<bus::PlaybackSource>(spec);
}

int cmd_stream(const StreamArgs& args) {
  require_file(args.checkpoint, "checkpoint");
  auto model = ae::Autoencoder<float>::from_checkpoint(args.checkpoint);
  auto source = open_source(args.source, args.duration_s);

  bus::Broker broker;
  bus::EncoderNodeConfig enc_cfg;
  // Paced runs sustain 16 Hz with the spec queue depth; flat-out runs need
  // the queue to absorb the whole backlog to stay lossless.
  enc_cfg.queue_depth = args.no_pace ? (1u << 16) : bus::kDefaultQueueDepth;
  bus::EncoderNode encoder(broker, std::move(model), enc_cfg);

  std::unique_ptr<bus::RecorderNode> recorder;
  if (!args.record.empty())
    recorder = std::make_unique<bus::RecorderNode>(broker, "/encoded", io::Schema::latent_code,
                                                   args.record, 1u << 12);

  bus::AcquisitionConfig acq_cfg;
  acq_cfg.frame_rate = args.frame_rate;
  acq_cfg.paced = !args.no_pace;
  bus::AcquisitionNode acquisition(broker, std::move(source), acq_cfg);

  encoder.start();
  if (recorder) recorder->start();
  acquisition.start();

  // A finite source ends the run by exhausting; a playback capped by
  // --duration is stopped from here.
  if (args.duration_s > 0 && args.source.rfind("synth", 0) != 0) {
    std::this_thread::sleep_for(std::chrono::duration<double>(args.duration_s));
    acquisition.stop();
  }
  acquisition.join();
  encoder.stop();
  encoder.join();
  if (recorder) {
    recorder->stop();
    recorder->join();
  }

  const auto failed = [](const char* name, const std::optional<std::string>& err) {
    if (!err) return false;
    std::fprintf(stderr, "%s failed: %s\n", name, err->c_str());
    return true;
  };
  if (failed("acquisition", acquisition.error()) || failed("encoder", encoder.error()) ||
      (recorder && failed("recorder", recorder->error())))
    return kExitFailure;

  std::printf("acquired %zu frames, published %zu codes (%zu input frames dropped)\n",
              acquisition.frames_published(), encoder.codes_published(),
              encoder.frames_dropped());
  if (recorder) std::printf("recorded %zu codes to %s\n", recorder->records_written(),
                            args.record.c_str());

  if (encoder.output_times_ns().size() >= 2) {
    const double nominal_ms = 1000.0 / args.frame_rate;
    const auto report = bus::jitter_report(encoder.output_times_ns(), nominal_ms);
    std::fputs(bus::jitter_format(report).c_str(), stdout);
    if (!args.jitter_csv.empty()) {
      std::ofstream out(args.jitter_csv);
      for (const double v : report.intervals_ms) {
        char line[32];
        std::snprintf(line, sizeof(line), "%.6f\n", v);
        out << line;
      }
      if (!out) throw io::IoError("cannot write jitter csv " + args.jitter_csv);
      std::printf("jitter intervals written to %s\n", args.jitter_csv.c_str());
    }
  }
  return kExitOk;
}

// --- bench-jitter --------------------------------------------------------------

struct BenchArgs {
  double frame_rate = 16.0;
  double duration_s = 10.0;
  std::string csv;
};

// Transport-only pacing baseline: no DSP, no model, just acquisition -> pop.
int cmd_bench_jitter(const BenchArgs& args) {
  if (args.duration_s <= 0) throw UsageError("duration must be positive");
  bus::Broker broker;
  auto sub = broker.subscribe("/neurodata", io::Schema::neuro_frame, 64);

  bus::SynthConfig cfg;
  bus::AcquisitionConfig acq_cfg;
  acq_cfg.frame_rate = args.frame_rate;
  bus::AcquisitionNode acquisition(
      broker, std::make_unique<bus::SyntheticSource>(cfg, args.duration_s), acq_cfg);
  acquisition.start();

  std::vector<std::uint64_t> arrivals_ns;
  while (true) {
    if (const auto m = sub->pop(500ms)) {
      arrivals_ns.push_back(static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(
              std::chrono::steady_clock::now().time_since_epoch())
              .count()));
      continue;
    }
    if (acquisition.exhausted() || acquisition.error().has_value()) break;
  }
  acquisition.join();
  if (acquisition.error()) {
    std::fprintf(stderr, "acquisition failed: %s\n", acquisition.error()->c_str());
    return kExitFailure;
  }

  const auto report = bus::jitter_report(arrivals_ns, 1000.0 / args.frame_rate);
  std::fputs(bus::jitter_format(report).c_str(), stdout);
  if (!args.csv.empty()) {
    std::ofstream out(args.csv);
    for (const double v : report.intervals_ms) {
      char line[32];
      std::snprintf(line, sizeof(line), "%.6f\n", v);
      out << line;
    }
    if (!out) throw io::IoError("cannot write jitter csv " + args.csv);
  }
  return kExitOk;
}

// --- filter-response -----------------------------------------------------------

struct FilterArgs {
  std::string filter = "bandpass";  // bandpass | notch
  std::size_t points = 200;
  double sampling_rate = 512.0;
};

int cmd_filter_response(const FilterArgs& args) {
  dsp::BiquadCascade cascade;
  if (args.filter == "notch")
    cascade = dsp::design_notch(50.0, 30.0, args.sampling_rate);
  else if (args.filter == "bandpass")
    cascade = dsp::design_butterworth_bandpass(5, 0.5, 60.0, args.sampling_rate);
  else
    throw UsageError("unknown filter '" + args.filter + "' (expected bandpass or notch)");
  if (args.points < 2) throw UsageError("points must be >= 2");

  std::printf("hz,db\n");
  std::printf("0,%.6f\n", cascade.magnitude_db(0.0, args.sampling_rate));
  const double lo = std::log10(0.1);
  const double hi = std::log10(args.sampling_rate / 2.0);
  for (std::size_t i = 0; i < args.points; ++i) {
    const double f =
        std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) /
                                static_cast<double>(args.points - 1));
    std::printf("%.6f,%.6f\n", f, cascade.magnitude_db(f, args.sampling_rate));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neurostream: real-time EEG compression pipeline"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic EEG recording");
  synth_cmd->add_option("--out", synth.out, "Output signal container")->required();
  synth_cmd->add_option("--duration", synth.duration_s, "Length in seconds (default 10)");
  synth_cmd->add_option("--rate", synth.sampling_rate, "Sampling rate in Hz (default 512)");
  synth_cmd->add_option("--frame-rate", synth.frame_rate, "Frames per second (default 16)");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed (default 0)");

  ImportArgs import_args;
  auto* import_cmd = app.add_subcommand("import", "Convert a CSV recording to a container");
  import_cmd->add_option("--csv", import_args.csv, "Input CSV (channels as columns)")->required();
  import_cmd->add_option("--out", import_args.out, "Output signal container")->required();
  import_cmd->add_option("--rate", import_args.sampling_rate, "Sampling rate in Hz (default 512)");
  import_cmd->add_option("--frame-size", import_args.frame_size,
                         "Samples per stored frame (default 32)");
  import_cmd->add_flag("--no-header", import_args.no_header,
                       "First CSV row is data, not channel labels");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the autoencoder on a recording");
  train_cmd->add_option("--data", train_args.data, "Training signal container")->required();
  train_cmd->add_option("--out", train_args.out, "Checkpoint to write");
  train_cmd->add_option("--report", train_args.report, "Also write the fold table as CSV");
  train_cmd->add_option("--epochs", train_args.epochs, "Training epochs (default 50)");
  train_cmd->add_option("--batch", train_args.batch_size, "Batch size (default 8)");
  train_cmd->add_option("--lr", train_args.lr, "Learning rate (default 1e-3)");
  train_cmd->add_option("--seed", train_args.seed, "Shuffle/init seed (default 0)");
  train_cmd->add_option("--folds", train_args.folds,
                        "Cross-validation folds (default 0 = no cross-validation)");
  train_cmd->add_option("--repeats", train_args.repeats,
                        "Cross-validation repeats with distinct splits (default 1)");
  train_cmd->add_flag("--zscore", train_args.zscore, "Standardize per grid cell before training");
  train_cmd->add_flag("--lenient", train_args.lenient, "Zero-fill missing grid channels");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Reconstruction error of a checkpoint on data");
  eval_cmd->add_option("--data", eval_args.data, "Evaluation signal container")->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint")->required();
  eval_cmd->add_flag("--lenient", eval_args.lenient, "Zero-fill missing grid channels");

  EncodeArgs encode_args;
  auto* encode_cmd = app.add_subcommand("encode", "Offline-encode a recording to latent codes");
  encode_cmd->add_option("--data", encode_args.data, "Input signal container")->required();
  encode_cmd->add_option("--checkpoint", encode_args.checkpoint, "Model checkpoint")->required();
  encode_cmd->add_option("--out", encode_args.out, "Output code container")->required();
  encode_cmd->add_flag("--lenient", encode_args.lenient, "Zero-fill missing grid channels");

  StreamArgs stream_args;
  auto* stream_cmd = app.add_subcommand("stream", "Run the acquisition->encoder node graph");
  stream_cmd
      ->add_option("--source", stream_args.source,
                   "'synth', 'synth:SEED', or a recorded container to play back")
      ->required();
  stream_cmd->add_option("--checkpoint", stream_args.checkpoint, "Model checkpoint")->required();
  stream_cmd->add_option("--rate", stream_args.frame_rate, "Frame rate in Hz (default 16)");
  stream_cmd->add_option("--duration", stream_args.duration_s,
                         "Run length in seconds (0 = play a file to its end)");
  stream_cmd->add_option("--record", stream_args.record, "Record /encoded to this container");
  stream_cmd->add_option("--jitter", stream_args.jitter_csv,
                         "Write inter-code intervals (ms, one per line)");
  stream_cmd->add_flag("--no-pace", stream_args.no_pace,
                       "Run flat out with lossless deep queues instead of real-time pacing");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench-jitter", "Measure frame pacing without a model");
  bench_cmd->add_option("--rate", bench_args.frame_rate, "Frame rate in Hz (default 16)");
  bench_cmd->add_option("--duration", bench_args.duration_s, "Run length in seconds (default 10)");
  bench_cmd->add_option("--out", bench_args.csv, "Write intervals (ms, one per line)");

  FilterArgs filter_args;
  auto* filter_cmd = app.add_subcommand("filter-response", "Tabulate a designed filter response");
  filter_cmd->add_option("--filter", filter_args.filter, "bandpass (default) or notch");
  filter_cmd->add_option("--points", filter_args.points, "Log-grid size (default 200)");
  filter_cmd->add_option("--fs", filter_args.sampling_rate, "Sampling rate in Hz (default 512)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*import_cmd) return cmd_import(import_args);
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*encode_cmd) return cmd_encode(encode_args);
    if (*stream_cmd) return cmd_stream(stream_args);
    if (*bench_cmd) return cmd_bench_jitter(bench_args);
    if (*filter_cmd) return cmd_filter_response(filter_args);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;  // unreachable with require_subcommand(1)
}
