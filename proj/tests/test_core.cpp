#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>
#include <string>
#include <vector>

#include "neurostream/core/grid.hpp"
#include "neurostream/core/types.hpp"

using namespace neurostream;
using namespace neurostream::core;

TEST_CASE("default grid holds 61 channels at their documented cells") {
  const ChannelGrid& g = default_grid();
  CHECK(g.channel_count() == 61);

  REQUIRE(g.find("Fz").has_value());
  CHECK(*g.find("Fz") == CellPos{0, 4});
  CHECK(*g.find("FTT7") == CellPos{3, 0});
  CHECK(*g.find("FTT8") == CellPos{3, 8});
  CHECK(*g.find("Cz") == CellPos{4, 4});
  CHECK(*g.find("TTP7") == CellPos{5, 0});
  CHECK(*g.find("CPz") == CellPos{6, 4});
  CHECK(*g.find("PPO1") == CellPos{9, 3});
  CHECK(*g.find("PPO2") == CellPos{9, 5});
  CHECK_FALSE(g.find("Oz").has_value());

  CHECK(g.occupied(0, 4));
  CHECK_FALSE(g.occupied(0, 0));
  CHECK_FALSE(g.occupied(-1, 4));

  std::size_t mask_count = 0;
  for (bool b : g.mask()) mask_count += b ? 1 : 0;
  CHECK(mask_count == 61);
}

TEST_CASE("grid placement rejects duplicates and out-of-range cells") {
  ChannelGrid g;
  g.place("C3", 4, 2);
  CHECK_THROWS_AS(g.place("C3", 4, 3), DuplicateLabel);
  CHECK_THROWS_AS(g.place("C4", 4, 2), DuplicateLabel);
  CHECK_THROWS_AS(g.place("X1", 10, 0), OutOfBounds);
  CHECK_THROWS_AS(g.place("X2", 0, 9), OutOfBounds);
  CHECK_THROWS_AS(g.place("X3", -1, 0), OutOfBounds);
}

TEST_CASE("grid config parsing") {
  SUBCASE("round-trips a sparse layout") {
    const std::string doc =
        "A - - - - - - - B\n- - - - - - - - -\n- - - - - - - - -\n"
        "- - - - C - - - -\n- - - - - - - - -\n- - - - - - - - -\n"
        "- - - - - - - - -\n- - - - - - - - -\n- - - - - - - - -\n"
        "- - - - - - - - D\n";
    ChannelGrid g = grid_from_config(doc);
    CHECK(g.channel_count() == 4);
    CHECK(*g.find("A") == CellPos{0, 0});
    CHECK(*g.find("B") == CellPos{0, 8});
    CHECK(*g.find("C") == CellPos{3, 4});
    CHECK(*g.find("D") == CellPos{9, 8});
  }
  SUBCASE("short rows leave trailing cells empty") {
    ChannelGrid g = grid_from_config("A\n-\n-\n-\n-\n-\n-\n-\n-\n-\n");
    CHECK(g.channel_count() == 1);
    CHECK(*g.find("A") == CellPos{0, 0});
  }
  SUBCASE("an empty document is a grid with no placements") {
    CHECK(grid_from_config("").channel_count() == 0);
    CHECK(grid_from_config("  \n \n").channel_count() == 0);
  }
  SUBCASE("wrong row count") {
    CHECK_THROWS_AS(grid_from_config("A - -\n- - -\n"), ParseError);
  }
  SUBCASE("too many tokens in a row") {
    CHECK_THROWS_AS(grid_from_config("a b c d e f g h i j\n-\n-\n-\n-\n-\n-\n-\n-\n-\n"),
                    ParseError);
  }
  SUBCASE("duplicate label across rows") {
    CHECK_THROWS_AS(grid_from_config("A\nA\n-\n-\n-\n-\n-\n-\n-\n-\n"), DuplicateLabel);
  }
}

namespace {

std::vector<float> make_rows(std::size_t nch) {
  std::vector<float> rows(kChunkTimesteps * nch);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<float>(i) * 0.5f;
  return rows;
}

}  // namespace

TEST_CASE("grid rendering maps channels onto cells") {
  ChannelGrid g;
  g.place("ch0", 0, 0);
  g.place("ch1", 2, 5);
  g.place("ch2", 9, 8);
  const std::vector<std::string> names{"ch0", "ch1", "ch2"};
  const auto rows = make_rows(names.size());

  Chunk chunk = grid_render(g, rows, names.size(), names);
  for (std::size_t t = 0; t < kChunkTimesteps; ++t) {
    CHECK(chunk.at(t, 0, 0) == rows[t * 3 + 0]);
    CHECK(chunk.at(t, 2, 5) == rows[t * 3 + 1]);
    CHECK(chunk.at(t, 9, 8) == rows[t * 3 + 2]);
    CHECK(chunk.at(t, 4, 4) == 0.0f);  // unplaced cells render as zero
  }
}

TEST_CASE("grid rendering modes for missing channels") {
  ChannelGrid g;
  g.place("present", 1, 1);
  g.place("absent", 1, 2);
  const std::vector<std::string> names{"present"};
  const auto rows = make_rows(1);

  CHECK_THROWS_AS(grid_render(g, rows, 1, names, RenderMode::strict), MissingChannel);

  Chunk chunk = grid_render(g, rows, 1, names, RenderMode::lenient);
  CHECK(chunk.at(0, 1, 1) == rows[0]);
  CHECK(chunk.at(0, 1, 2) == 0.0f);
}

TEST_CASE("grid rendering validates the row block shape") {
  ChannelGrid g;
  g.place("a", 0, 0);
  const std::vector<std::string> names{"a"};
  std::vector<float> short_rows(15, 1.0f);  // 15 rows of one channel
  CHECK_THROWS_AS(grid_render(g, short_rows, 1, names), ShapeError);
}

TEST_CASE("renderer reuses one chunk without reallocating") {
  ChannelGrid g;
  g.place("x", 5, 5);
  const std::vector<std::string> names{"x", "y"};
  GridRenderer renderer(g, names, RenderMode::lenient);
  std::vector<float> rows(kChunkTimesteps * 2, 0.0f);
  rows[0 * 2 + 0] = 7.0f;
  Chunk chunk;
  renderer.render_into(rows, 2, chunk);
  CHECK(chunk.at(0, 5, 5) == 7.0f);
  rows[0] = 9.0f;
  renderer.render_into(rows, 2, chunk);
  CHECK(chunk.at(0, 5, 5) == 9.0f);
}

TEST_CASE("NeuroFrame validation") {
  NeuroFrame f;
  f.sampling_rate = 512.0;
  f.channel_names = {"a", "b"};
  f.num_samples = 2;
  f.samples = {1.0f, 2.0f, 3.0f, 4.0f};
  CHECK_NOTHROW(f.validate());
  CHECK(f.at(1, 0) == 3.0f);

  SUBCASE("zero samples") {
    f.num_samples = 0;
    f.samples.clear();
    CHECK_THROWS_AS(f.validate(), ShapeError);
  }
  SUBCASE("non-positive rate") {
    f.sampling_rate = 0.0;
    CHECK_THROWS_AS(f.validate(), ShapeError);
  }
  SUBCASE("ragged matrix") {
    f.samples.pop_back();
    CHECK_THROWS_AS(f.validate(), ShapeError);
  }
  SUBCASE("non-finite sample") {
    f.samples[2] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(f.validate(), ShapeError);
  }
}

TEST_CASE("Chunk and LatentCode validation") {
  Chunk c;
  CHECK(c.data.size() == kChunkScalars);
  CHECK_NOTHROW(c.validate());
  c.at(15, 9, 8) = 3.5f;
  CHECK(c.data.back() == 3.5f);
  c.data.pop_back();
  CHECK_THROWS_AS(c.validate(), ShapeError);

  LatentCode code;
  code.values.assign(kLatentSize, 0.0f);
  CHECK_NOTHROW(code.validate());
  code.values.push_back(1.0f);
  CHECK_THROWS_AS(code.validate(), ShapeError);
  code.values.resize(kLatentSize);
  code.values[5] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(code.validate(), ShapeError);
}
