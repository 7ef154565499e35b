#include "neurostream/ae/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "neurostream/core/grid.hpp"
#include "neurostream/dsp/stream.hpp"
#include "neurostream/io/container.hpp"
#include "neurostream/log.hpp"

namespace neurostream::ae {

namespace {

nn::Tensor<float> gather(std::span<const core::Chunk> chunks,
                         std::span<const std::size_t> idx) {
  nn::Tensor<float> x({idx.size(), 1, core::kChunkTimesteps, core::kGridRows,
                       core::kGridCols});
  float* p = x.ptr();
  for (std::size_t i : idx) {
    std::copy(chunks[i].data.begin(), chunks[i].data.end(), p);
    p += core::kChunkScalars;
  }
  return x;
}

// Batch boundaries over `count` samples; a trailing batch of one sample is
// merged into its predecessor so batch norm always sees >= 2.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t count,
                                                              std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < count; b += batch_size)
    out.emplace_back(b, std::min(count, b + batch_size));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("epochs must be >= 1");
  if (batch_size < 1) throw Error("batch size must be >= 1");
  if (lr < 0.0) throw Error("learning rate must be >= 0");
  if (code_size < 1) throw Error("code size must be >= 1");
  if (folds < 2) throw Error("fold count must be >= 2");
  if (repeats < 1) throw Error("repeat count must be >= 1");
  if (holdout < 0.0 || holdout > 0.5) throw Error("holdout fraction must be in [0, 0.5]");
}

Standardizer Standardizer::fit(std::span<const core::Chunk> chunks) {
  if (chunks.empty()) throw EmptyDataset("cannot fit standardizer on an empty dataset");
  constexpr std::size_t cells = core::kGridRows * core::kGridCols;
  Standardizer s;
  std::vector<double> sum(cells, 0.0), sq(cells, 0.0);
  for (const core::Chunk& c : chunks)
    for (std::size_t t = 0; t < core::kChunkTimesteps; ++t)
      for (std::size_t cell = 0; cell < cells; ++cell) {
        const double v = c.data[t * cells + cell];
        sum[cell] += v;
        sq[cell] += v * v;
      }
  const double m = static_cast<double>(chunks.size() * core::kChunkTimesteps);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const double mean = sum[cell] / m;
    const double var = std::max(0.0, sq[cell] / m - mean * mean);
    const double sd = std::sqrt(var);
    s.shift[cell] = static_cast<float>(mean);
    s.scale[cell] = sd > 1e-6 ? static_cast<float>(sd) : 1.0f;  // empty cells stay as-is
  }
  return s;
}

core::Chunk Standardizer::apply(const core::Chunk& chunk) const {
  constexpr std::size_t cells = core::kGridRows * core::kGridCols;
  core::Chunk out = chunk;
  for (std::size_t t = 0; t < core::kChunkTimesteps; ++t)
    for (std::size_t cell = 0; cell < cells; ++cell)
      out.data[t * cells + cell] = (chunk.data[t * cells + cell] - shift[cell]) / scale[cell];
  return out;
}

std::vector<core::Chunk> Standardizer::apply(std::span<const core::Chunk> chunks) const {
  std::vector<core::Chunk> out;
  out.reserve(chunks.size());
  for (const core::Chunk& c : chunks) out.push_back(apply(c));
  return out;
}

double evaluate_tensor(Autoencoder<float>& model, const nn::Tensor<float>& x) {
  const std::size_t n = x.dim(0);
  double sum = 0.0;
  constexpr std::size_t kEvalBatch = 64;
  for (std::size_t b = 0; b < n; b += kEvalBatch) {
    const std::size_t e = std::min(n, b + kEvalBatch);
    nn::Tensor<float> xb({e - b, 1, core::kChunkTimesteps, core::kGridRows, core::kGridCols});
    std::copy(x.ptr() + b * core::kChunkScalars, x.ptr() + e * core::kChunkScalars, xb.ptr());
    const auto recon = model.reconstruct(xb, false);
    sum += nn::mse_loss(recon, xb, nn::Reduction::sum);
  }
  return sum / static_cast<double>(n * core::kChunkScalars);
}

double evaluate(Autoencoder<float>& model, std::span<const core::Chunk> dataset) {
  if (dataset.empty()) throw EmptyDataset("evaluation dataset is empty");
  for (const core::Chunk& c : dataset) c.validate();
  return evaluate_tensor(model, Autoencoder<float>::chunks_to_tensor(dataset));
}

TrainResult train(Autoencoder<float>& model, std::span<const core::Chunk> dataset,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw EmptyDataset("training dataset is empty");
  for (const core::Chunk& c : dataset) c.validate();

  std::vector<core::Chunk> standardized;
  std::span<const core::Chunk> chunks = dataset;
  if (cfg.zscore) {
    standardized = Standardizer::fit(dataset).apply(dataset);
    chunks = standardized;
  }

  const std::size_t m = chunks.size();
  nn::Rng rng(cfg.seed);
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});

  // Carve out a holdout slice for early stopping when enabled and affordable.
  std::size_t monitor_count = 0;
  if (cfg.patience > 0 && cfg.holdout > 0.0 && m >= 4) {
    monitor_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.holdout * static_cast<double>(m))));
    if (monitor_count >= m) monitor_count = 0;
  }
  rng.shuffle(idx.begin(), idx.end());
  std::vector<std::size_t> monitor_idx(idx.begin(), idx.begin() + monitor_count);
  std::vector<std::size_t> train_idx(idx.begin() + monitor_count, idx.end());
  nn::Tensor<float> monitor_x;
  if (monitor_count) monitor_x = gather(chunks, monitor_idx);

  nn::Optimizer<float> opt(cfg.optimizer, cfg.lr);
  opt.attach(model.params());

  TrainResult result;
  double best_monitor = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train_idx.begin(), train_idx.end());
    double loss_sum = 0.0;
    for (const auto& [b, e] : batch_ranges(train_idx.size(), cfg.batch_size)) {
      const auto xb = gather(chunks, std::span(train_idx).subspan(b, e - b));
      model.zero_grad();
      const auto recon = model.reconstruct(xb, true);
      loss_sum += nn::mse_loss(recon, xb, nn::Reduction::sum);
      model.backward(nn::mse_loss_grad(recon, xb, nn::Reduction::mean));
      opt.step();
    }
    const double epoch_loss =
        loss_sum / static_cast<double>(train_idx.size() * core::kChunkScalars);
    result.loss_curve.push_back(epoch_loss);
    result.epochs_run = epoch + 1;
    log_debug("epoch " + std::to_string(epoch + 1) + " loss " +
                             std::to_string(epoch_loss));

    if (cfg.stop_below_loss >= 0.0 && epoch_loss <= cfg.stop_below_loss) {
      result.stopped_early = true;
      break;
    }
    if (monitor_count) {
      const double mon = evaluate_tensor(model, monitor_x);
      if (mon < best_monitor) {
        best_monitor = mon;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        log_info("early stop after " + std::to_string(epoch + 1) + " epochs");
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

EvalReport crossvalidate(std::span<const core::Chunk> dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw EmptyDataset("cross-validation dataset is empty");
  if (dataset.size() < cfg.folds)
    throw TooFewSamples("dataset of " + std::to_string(dataset.size()) +
                        " chunks cannot form " + std::to_string(cfg.folds) + " folds");

  const std::size_t m = dataset.size();
  EvalReport report;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    nn::Rng rng(cfg.seed * 1000003 + r);  // distinct shuffle per repeat
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx.begin(), idx.end());

    for (std::size_t f = 0; f < cfg.folds; ++f) {
      const std::size_t lo = f * m / cfg.folds;
      const std::size_t hi = (f + 1) * m / cfg.folds;
      std::vector<core::Chunk> train_set, test_set;
      train_set.reserve(m - (hi - lo));
      test_set.reserve(hi - lo);
      for (std::size_t i = 0; i < m; ++i)
        (i >= lo && i < hi ? test_set : train_set).push_back(dataset[idx[i]]);

      if (cfg.zscore) {
        const Standardizer s = Standardizer::fit(train_set);
        train_set = s.apply(train_set);
        test_set = s.apply(test_set);
      }

      // Every fold starts from the same initialization so that fold-to-fold
      // spread measures the data split, not initialization noise. On a
      // degenerate dataset of identical chunks the folds then score
      // identically.
      Autoencoder<float> model(AutoencoderConfig{cfg.code_size});
      model.init((cfg.seed + 1) * 1000003);
      TrainConfig fold_cfg = cfg;
      fold_cfg.zscore = false;  // already applied above, on training folds only
      train(model, train_set, fold_cfg);
      const double mse = evaluate(model, test_set);
      report.folds.push_back(
          {r, f, mse, std::vector<std::size_t>(idx.begin() + lo, idx.begin() + hi)});
      log_info("repeat " + std::to_string(r) + " fold " + std::to_string(f) +
                              " test mse " + std::to_string(mse));
    }
  }

  double sum = 0.0;
  for (const auto& fr : report.folds) sum += fr.mse;
  report.mean_mse = sum / static_cast<double>(report.folds.size());
  double sq = 0.0;
  for (const auto& fr : report.folds) {
    const double d = fr.mse - report.mean_mse;
    sq += d * d;
  }
  report.std_mse = std::sqrt(sq / static_cast<double>(report.folds.size()));
  return report;
}

std::vector<GridPoint> grid_search(std::span<const core::Chunk> dataset,
                                   const TrainConfig& base, std::span<const double> lrs,
                                   std::span<const std::size_t> code_sizes) {
  std::vector<GridPoint> out;
  for (double lr : lrs)
    for (std::size_t cs : code_sizes) {
      TrainConfig cfg = base;
      cfg.lr = lr;
      cfg.code_size = cs;
      cfg.folds = 5;
      cfg.repeats = 1;
      const EvalReport report = crossvalidate(dataset, cfg);
      out.push_back({lr, cs, report.mean_mse, report.std_mse});
      log_info("grid lr " + std::to_string(lr) + " code " + std::to_string(cs) +
                              " mean mse " + std::to_string(report.mean_mse));
    }
  return out;
}

std::vector<core::Chunk> chunks_from_container(const std::string& path, bool lenient) {
  io::ContainerReader reader(path);
  const io::ContainerHeader& header = reader.header();

  constexpr double kTargetRate = 128.0;
  std::unique_ptr<dsp::DspChain> chain;
  if (header.sampling_rate != kTargetRate) {
    dsp::DspChainConfig cfg;
    const double factor = header.sampling_rate / kTargetRate;
    if (factor != std::floor(factor) || factor < 1.0)
      throw dsp::RateNotDivisible("container rate " + std::to_string(header.sampling_rate) +
                                  " Hz is not an integer multiple of 128 Hz");
    cfg.decimation = static_cast<unsigned>(factor);
    chain = std::make_unique<dsp::DspChain>(header.sampling_rate, cfg);
  }

  const core::GridRenderer renderer(core::default_grid(), header.channel_names,
                                    lenient ? core::RenderMode::lenient
                                            : core::RenderMode::strict);

  std::vector<core::Chunk> chunks;
  std::vector<float> rows;  // rolling window, row-major (t, channel)
  std::vector<std::uint64_t> row_ts;
  const std::size_t nch = header.channel_names.size();

  core::NeuroFrame frame;
  while (reader.next(frame)) {
    std::optional<core::NeuroFrame> out;
    if (chain) {
      out = chain->apply(frame);
      if (!out || out->settling()) continue;
    } else {
      out = frame;
    }
    for (std::size_t s = 0; s < out->num_samples; ++s) {
      rows.insert(rows.end(), out->samples.begin() + s * nch,
                  out->samples.begin() + (s + 1) * nch);
      row_ts.push_back(out->timestamp_ns +
                       static_cast<std::uint64_t>(std::llround(
                           1e9 * static_cast<double>(s) / out->sampling_rate)));
      if (row_ts.size() == core::kChunkTimesteps) {
        core::Chunk chunk;
        renderer.render_into(rows, nch, chunk);
        chunk.start_timestamp_ns = row_ts.front();
        chunks.push_back(std::move(chunk));
        rows.clear();
        row_ts.clear();
      }
    }
  }
  log_info("rendered " + std::to_string(chunks.size()) + " chunks from " + path);
  return chunks;
}

}  // namespace neurostream::ae
