#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "neurostream/core/types.hpp"

namespace neurostream::core {

struct DuplicateLabel : Error {
  using Error::Error;
};
struct OutOfBounds : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};

struct CellPos {
  int row = 0;
  int col = 0;
  bool operator==(const CellPos&) const = default;
};

// Electrode-label -> (row, col) placement on the 10x9 matrix. Cells without
// a placement are empty and always render as 0.
class ChannelGrid {
 public:
  static constexpr int kRows = static_cast<int>(kGridRows);
  static constexpr int kCols = static_cast<int>(kGridCols);

  void place(const std::string& label, int row, int col);

  std::optional<CellPos> find(const std::string& label) const;
  bool occupied(int row, int col) const;
  const std::unordered_map<std::string, CellPos>& placement() const { return placement_; }
  std::size_t channel_count() const { return placement_.size(); }

  // 10x9 boolean mask, row-major.
  std::vector<bool> mask() const;

  bool operator==(const ChannelGrid& other) const { return placement_ == other.placement_; }

 private:
  std::unordered_map<std::string, CellPos> placement_;
  std::vector<std::string> cell_to_label_ = std::vector<std::string>(kGridRows * kGridCols);
};

// The default electrode arrangement (61 channels over frontal, central,
// parietal and temporal sites).
const ChannelGrid& default_grid();

// Parses a grid layout document: one line per grid row, labels separated by
// whitespace, "-" for empty cells; exactly 10 lines, at most 9 tokens each.
// An empty (whitespace-only) document yields a grid with no placements.
ChannelGrid grid_from_config(const std::string& text);

enum class RenderMode {
  strict,   // a placed label missing from the stream is an error
  lenient,  // missing labels zero-fill with a warning
};

// Renders 16 rows of multichannel samples onto the grid, producing a chunk.
// `rows` is row-major (num_rows x num_channels).
Chunk grid_render(const ChannelGrid& grid, std::span<const float> rows, std::size_t num_channels,
                  const std::vector<std::string>& channel_names,
                  RenderMode mode = RenderMode::strict);

// Precomputed label->column mapping for rendering many blocks from one
// stream without per-call lookups or allocation.
class GridRenderer {
 public:
  GridRenderer(const ChannelGrid& grid, const std::vector<std::string>& channel_names,
               RenderMode mode = RenderMode::strict);

  void render_into(std::span<const float> rows, std::size_t num_channels, Chunk& out) const;
  std::size_t num_channels() const { return num_channels_; }

 private:
  struct Slot {
    std::size_t cell;     // r * 9 + c
    std::size_t channel;  // column in the sample matrix
  };
  std::vector<Slot> slots_;
  std::size_t num_channels_ = 0;
};

}  // namespace neurostream::core
