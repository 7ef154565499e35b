#include "neurostream/core/grid.hpp"

#include <sstream>

#include "neurostream/log.hpp"

namespace neurostream::core {

namespace {

// Default 61-channel layout, row 0 at the top. "-" marks an empty cell;
// rows shorter than 9 tokens leave their trailing cells empty.
constexpr const char* kDefaultLayout =
    "-    -    F3   F1   Fz   F2   F4   -    -\n"
    "-    FFC5 FFC3 FFC1 -    FFC2 FFC4 FFC6 -\n"
    "-    FC5  FC3  FC1  FCz  FC2  FC4  FC6  -\n"
    "FTT7 FCC5 FCC3 FCC1 -    FCC2 FCC4 FCC6 FTT8\n"
    "-    C5   C3   C1   Cz   C2   C4   C6   -\n"
    "TTP7 CCP5 CCP3 CCP1 -    CCP2 CCP4 CCP6 TTP8\n"
    "-    CP5  CP3  CP1  CPz  CP2  CP4  CP6  -\n"
    "-    CPP5 CPP3 CPP1 -    CPP2 CPP4 CPP6 -\n"
    "-    -    P3   P1   Pz   P2   P4   -    -\n"
    "-    -    -    PPO1 -    PPO2 -    -    -\n";

bool blank(const std::string& text) {
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch))) return false;
  return true;
}

}  // namespace

void ChannelGrid::place(const std::string& label, int row, int col) {
  if (row < 0 || row >= kRows || col < 0 || col >= kCols)
    throw OutOfBounds("grid cell (" + std::to_string(row) + ", " + std::to_string(col) +
                      ") outside 10x9");
  if (placement_.count(label) > 0) throw DuplicateLabel("label placed twice: " + label);
  std::string& cell = cell_to_label_[static_cast<std::size_t>(row) * kGridCols + col];
  if (!cell.empty()) throw DuplicateLabel("cell (" + std::to_string(row) + ", " +
                                          std::to_string(col) + ") already holds " + cell);
  cell = label;
  placement_.emplace(label, CellPos{row, col});
}

std::optional<CellPos> ChannelGrid::find(const std::string& label) const {
  auto it = placement_.find(label);
  if (it == placement_.end()) return std::nullopt;
  return it->second;
}

bool ChannelGrid::occupied(int row, int col) const {
  if (row < 0 || row >= kRows || col < 0 || col >= kCols) return false;
  return !cell_to_label_[static_cast<std::size_t>(row) * kGridCols + col].empty();
}

std::vector<bool> ChannelGrid::mask() const {
  std::vector<bool> m(kGridRows * kGridCols, false);
  for (const auto& [label, pos] : placement_)
    m[static_cast<std::size_t>(pos.row) * kGridCols + pos.col] = true;
  return m;
}

const ChannelGrid& default_grid() {
  static const ChannelGrid grid = grid_from_config(kDefaultLayout);
  return grid;
}

ChannelGrid grid_from_config(const std::string& text) {
  ChannelGrid grid;
  if (blank(text)) return grid;

  std::vector<std::string> lines;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) lines.push_back(line);
  while (!lines.empty() && blank(lines.back())) lines.pop_back();
  if (lines.size() != kGridRows)
    throw ParseError("grid config must have exactly 10 rows, got " +
                     std::to_string(lines.size()));

  for (std::size_t r = 0; r < lines.size(); ++r) {
    std::istringstream row(lines[r]);
    std::string token;
    int c = 0;
    while (row >> token) {
      if (c >= ChannelGrid::kCols)
        throw ParseError("grid config row " + std::to_string(r) + " has more than 9 tokens");
      if (token != "-") grid.place(token, static_cast<int>(r), c);
      ++c;
    }
  }
  return grid;
}

Chunk grid_render(const ChannelGrid& grid, std::span<const float> rows, std::size_t num_channels,
                  const std::vector<std::string>& channel_names, RenderMode mode) {
  GridRenderer renderer(grid, channel_names, mode);
  Chunk chunk;
  renderer.render_into(rows, num_channels, chunk);
  return chunk;
}

GridRenderer::GridRenderer(const ChannelGrid& grid, const std::vector<std::string>& channel_names,
                           RenderMode mode)
    : num_channels_(channel_names.size()) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(channel_names.size());
  for (std::size_t i = 0; i < channel_names.size(); ++i) index.emplace(channel_names[i], i);

  for (const auto& [label, pos] : grid.placement()) {
    auto it = index.find(label);
    if (it == index.end()) {
      if (mode == RenderMode::strict)
        throw MissingChannel("channel " + label + " not present in the stream");
      log_warn("grid_render: channel " + label + " missing, cell zero-filled");
      continue;
    }
    slots_.push_back(Slot{static_cast<std::size_t>(pos.row) * kGridCols + pos.col, it->second});
  }
}

void GridRenderer::render_into(std::span<const float> rows, std::size_t num_channels,
                               Chunk& out) const {
  if (num_channels != num_channels_)
    throw ShapeError("grid_render: channel count does not match the renderer");
  if (num_channels == 0 || rows.size() % num_channels != 0)
    throw ShapeError("grid_render: sample block is not rectangular");
  const std::size_t num_rows = rows.size() / num_channels;
  if (num_rows != kChunkTimesteps)
    throw ShapeError("grid_render: expected 16 rows, got " + std::to_string(num_rows));

  std::fill(out.data.begin(), out.data.end(), 0.0f);
  constexpr std::size_t cells = kGridRows * kGridCols;
  for (std::size_t t = 0; t < kChunkTimesteps; ++t) {
    const float* src = rows.data() + t * num_channels;
    float* dst = out.data.data() + t * cells;
    for (const Slot& slot : slots_) dst[slot.cell] = src[slot.channel];
  }
}

}  // namespace neurostream::core
