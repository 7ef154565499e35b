#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neurostream/ae/model.hpp"
#include "neurostream/nn/optim.hpp"

namespace neurostream::ae {

struct EmptyDataset : Error {
  using Error::Error;
};
struct TooFewSamples : Error {
  using Error::Error;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  std::size_t code_size = core::kLatentSize;
  std::size_t folds = 3;
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
  std::size_t patience = 5;        // epochs of no holdout improvement; 0 disables
  double holdout = 0.1;            // fraction of the train set watched for early stop
  double stop_below_loss = -1.0;   // stop once epoch loss <= this; < 0 disables
  bool zscore = false;             // standardize per grid cell, fit on training data

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss_curve;  // per-epoch mean per-element train MSE
  std::size_t epochs_run = 0;
  bool stopped_early = false;
};

struct FoldResult {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  double mse = 0.0;                       // per-element test MSE
  std::vector<std::size_t> test_indices;  // dataset positions held out this fold
};

struct EvalReport {
  std::vector<FoldResult> folds;
  double mean_mse = 0.0;
  double std_mse = 0.0;  // population std across fold results
};

// Per-grid-cell affine standardization; fit on training data only.
struct Standardizer {
  std::vector<float> shift = std::vector<float>(core::kGridRows * core::kGridCols, 0.0f);
  std::vector<float> scale = std::vector<float>(core::kGridRows * core::kGridCols, 1.0f);

  static Standardizer fit(std::span<const core::Chunk> chunks);
  core::Chunk apply(const core::Chunk& chunk) const;
  std::vector<core::Chunk> apply(std::span<const core::Chunk> chunks) const;
};

// Minimizes the reconstruction error over the dataset. When cfg.zscore is
// set, chunks are standardized in place of the raw signal (fit over this
// dataset) before batching.
TrainResult train(Autoencoder<float>& model, std::span<const core::Chunk> dataset,
                  const TrainConfig& cfg);

// Eval-mode mean per-element reconstruction MSE.
double evaluate(Autoencoder<float>& model, std::span<const core::Chunk> dataset);
double evaluate_tensor(Autoencoder<float>& model, const nn::Tensor<float>& x);

// Shuffled contiguous-block k-fold protocol; a fresh model per fold, repeats
// reshuffle with distinct seeds.
EvalReport crossvalidate(std::span<const core::Chunk> dataset, const TrainConfig& cfg);

struct GridPoint {
  double lr = 0.0;
  std::size_t code_size = 0;
  double mean_mse = 0.0;
  double std_mse = 0.0;
};

// 5-fold model selection over learning rate x code size.
std::vector<GridPoint> grid_search(std::span<const core::Chunk> dataset,
                                   const TrainConfig& base, std::span<const double> lrs,
                                   std::span<const std::size_t> code_sizes);

// Reads a signal container and produces encoder-ready chunks: preprocesses
// (unless already at 128 Hz), drops the settling transient, renders each
// sample row onto the default grid, and windows 16 rows at a time.
std::vector<core::Chunk> chunks_from_container(const std::string& path,
                                               bool lenient = false);

}  // namespace neurostream::ae
