#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "neurostream/io/container.hpp"
#include "neurostream/io/wire.hpp"

using namespace neurostream;
using namespace neurostream::io;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("neurostream-test-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

core::NeuroFrame random_frame(std::mt19937& gen, std::uint64_t seq, std::size_t channels,
                              std::size_t samples) {
  std::uniform_real_distribution<float> dist(-100.0f, 100.0f);
  core::NeuroFrame f;
  f.seq = seq;
  f.timestamp_ns = seq * 62'500'000ull;
  f.sampling_rate = 512.0;
  f.flags = seq < 2 ? core::kFrameSettling : 0;
  for (std::size_t c = 0; c < channels; ++c) f.channel_names.push_back("e" + std::to_string(c));
  f.num_samples = samples;
  f.samples.resize(samples * channels);
  for (float& v : f.samples) v = dist(gen);
  return f;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("container round-trips header and frames") {
  TempDir tmp;
  const std::string path = tmp.file("roundtrip.nsig");

  ContainerHeader header;
  header.sampling_rate = 512.0;
  header.start_time_ns = 123456789;
  header.channel_names = {"C3", "C4", "Cz"};

  std::mt19937 gen(11);
  std::vector<core::NeuroFrame> frames;
  for (std::uint64_t i = 0; i < 20; ++i) frames.push_back(random_frame(gen, i, 3, 32));

  {
    ContainerWriter writer(path, header);
    for (std::size_t i = 0; i < frames.size(); ++i)
      writer.append(frames[i], 1000 + i);
    CHECK(writer.records_written() == frames.size());
  }

  ContainerHeader got_header;
  ContainerReader reader(path);
  got_header = reader.header();
  CHECK(got_header.sampling_rate == header.sampling_rate);
  CHECK(got_header.start_time_ns == header.start_time_ns);
  CHECK(got_header.channel_names == header.channel_names);

  core::NeuroFrame frame;
  std::uint64_t recv = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    REQUIRE(reader.next(frame, &recv));
    CHECK(frame.seq == frames[i].seq);
    CHECK(frame.timestamp_ns == frames[i].timestamp_ns);
    CHECK(frame.flags == frames[i].flags);
    CHECK(frame.num_samples == frames[i].num_samples);
    CHECK(frame.samples == frames[i].samples);
    CHECK(frame.channel_names == header.channel_names);
    CHECK(frame.sampling_rate == 512.0);
    CHECK(recv == 1000 + i);
  }
  CHECK_FALSE(reader.next(frame));

  // convenience wrappers agree
  ContainerHeader h2;
  const auto all = container_read(path, &h2);
  CHECK(all.size() == frames.size());
  CHECK(h2.channel_names == header.channel_names);
}

TEST_CASE("container rejects corrupt input") {
  TempDir tmp;
  const std::string path = tmp.file("base.nsig");
  ContainerHeader header;
  header.sampling_rate = 512.0;
  header.channel_names = {"a", "b"};
  std::mt19937 gen(5);
  {
    ContainerWriter writer(path, header);
    for (std::uint64_t i = 0; i < 4; ++i) writer.append(random_frame(gen, i, 2, 16));
  }
  const auto bytes = slurp(path);

  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    dump(tmp.file("badmagic.nsig"), bad);
    CHECK_THROWS_AS(ContainerReader(tmp.file("badmagic.nsig")), CorruptFile);
  }
  SUBCASE("unsupported version") {
    auto bad = bytes;
    bad[4] = 0x7f;
    dump(tmp.file("badver.nsig"), bad);
    CHECK_THROWS_AS(ContainerReader(tmp.file("badver.nsig")), VersionMismatch);
  }
  SUBCASE("truncated mid-record") {
    auto bad = bytes;
    bad.resize(bytes.size() - 7);
    dump(tmp.file("trunc.nsig"), bad);
    ContainerReader reader(tmp.file("trunc.nsig"));
    core::NeuroFrame frame;
    const auto drain = [&] {
      while (reader.next(frame)) {
      }
    };
    CHECK_THROWS_AS(drain(), CorruptFile);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(ContainerReader(tmp.file("absent.nsig")), IoError);
  }
}

TEST_CASE("container insists on monotonic sequence numbers") {
  TempDir tmp;
  const std::string path = tmp.file("seq.nsig");
  ContainerHeader header;
  header.sampling_rate = 512.0;
  header.channel_names = {"a"};
  std::mt19937 gen(17);
  {
    ContainerWriter writer(path, header);
    writer.append(random_frame(gen, 5, 1, 8));
    writer.append(random_frame(gen, 6, 1, 8));
    writer.append(random_frame(gen, 6, 1, 8));  // duplicate seq on disk
  }
  ContainerReader reader(path);
  core::NeuroFrame frame;
  CHECK(reader.next(frame));
  CHECK(reader.next(frame));
  CHECK_THROWS_AS(reader.next(frame), CorruptFile);
}

TEST_CASE("latent codes are stored as pseudo-channel records") {
  TempDir tmp;
  const std::string path = tmp.file("codes.nsig");
  ContainerHeader header;
  header.sampling_rate = 16.0;
  header.channel_names = code_channel_names();
  REQUIRE(header.channel_names.size() == core::kLatentSize);
  CHECK(header.channel_names.front() == "z000");
  CHECK(header.channel_names.back() == "z127");

  core::LatentCode code;
  code.values.resize(core::kLatentSize);
  for (std::size_t i = 0; i < code.values.size(); ++i)
    code.values[i] = static_cast<float>(i) * 0.25f;
  code.source_seq = 42;
  code.timestamp_ns = 777;

  {
    ContainerWriter writer(path, header);
    writer.append_code(code, 888);
  }
  ContainerReader reader(path);
  core::NeuroFrame frame;
  std::uint64_t recv = 0;
  REQUIRE(reader.next(frame, &recv));
  CHECK(frame.seq == 42);
  CHECK(frame.timestamp_ns == 777);
  CHECK(recv == 888);
  CHECK(frame.num_samples == 1);
  REQUIRE(frame.samples.size() == core::kLatentSize);
  CHECK(frame.samples == code.values);
}

TEST_CASE("csv import") {
  TempDir tmp;
  CsvOptions opt;
  opt.sampling_rate = 512.0;
  opt.frame_size = 4;

  SUBCASE("with header row") {
    const std::string path = tmp.file("ok.csv");
    std::ofstream(path) << "C3,C4\n"
                        << "1.0,2.0\n1.5,2.5\n-3.25,0.5\n4.0,5.0\n"  // frame 0
                        << "7.0,8.0\n7.5,8.5\n9.0,10.0\n11.0,12.0\n"  // frame 1
                        << "99.0,99.0\n";  // dropped: short of a full frame
    const auto [header, frames] = csv_import(path, opt);
    CHECK(header.sampling_rate == 512.0);
    CHECK(header.channel_names == std::vector<std::string>{"C3", "C4"});
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].num_samples == 4);
    CHECK(frames[0].at(0, 0) == 1.0f);
    CHECK(frames[0].at(2, 1) == 0.5f);
    CHECK(frames[1].seq == 1);
    // frame timestamps follow the frame index at the sampling rate
    CHECK(frames[1].timestamp_ns ==
          static_cast<std::uint64_t>(std::llround(1e9 * 4.0 / 512.0)));
  }
  SUBCASE("without header row synthesizes labels") {
    opt.header_row = false;
    const std::string path = tmp.file("nohdr.csv");
    std::ofstream(path) << "1,2,3\n4,5,6\n7,8,9\n10,11,12\n";
    const auto [header, frames] = csv_import(path, opt);
    CHECK(header.channel_names == std::vector<std::string>{"ch0", "ch1", "ch2"});
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].at(3, 2) == 12.0f);
  }
  SUBCASE("ragged rows") {
    const std::string path = tmp.file("ragged.csv");
    std::ofstream(path) << "a,b\n1,2\n3\n";
    CHECK_THROWS_AS(csv_import(path, opt), RaggedRows);
  }
  SUBCASE("non-numeric cell is reported with its position") {
    const std::string path = tmp.file("nan.csv");
    std::ofstream(path) << "a,b\n1,2\n3,oops\n";
    CHECK_THROWS_WITH_AS(csv_import(path, opt),
                         doctest::Contains("row 3 column 2"), NonNumericCell);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(csv_import(tmp.file("nope.csv"), opt), IoError);
  }
}

TEST_CASE("wire messages round-trip") {
  std::mt19937 gen(23);
  SUBCASE("neuro frame") {
    const core::NeuroFrame f = random_frame(gen, 9, 4, 32);
    const auto bytes = message_encode(Message{f});
    CHECK(message_schema(Message{f}) == Schema::neuro_frame);
    const Message m = message_decode(bytes);
    REQUIRE(std::holds_alternative<core::NeuroFrame>(m));
    const auto& got = std::get<core::NeuroFrame>(m);
    CHECK(got.seq == f.seq);
    CHECK(got.timestamp_ns == f.timestamp_ns);
    CHECK(got.sampling_rate == f.sampling_rate);
    CHECK(got.flags == f.flags);
    CHECK(got.channel_names == f.channel_names);
    CHECK(got.num_samples == f.num_samples);
    CHECK(got.samples == f.samples);
  }
  SUBCASE("latent code payload is 20 header bytes plus 128 x 4 value bytes") {
    core::LatentCode code;
    code.values.resize(core::kLatentSize);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (float& v : code.values) v = dist(gen);
    code.source_seq = 3;
    code.timestamp_ns = 1234;
    const auto bytes = message_encode(Message{code});
    // wire header, then source_seq u64 + timestamp u64 + count u32, then values
    CHECK(bytes.size() == kWireHeaderSize + 8 + 8 + 4 + core::kLatentSize * 4);
    const Message m = message_decode(bytes);
    REQUIRE(std::holds_alternative<core::LatentCode>(m));
    const auto& got = std::get<core::LatentCode>(m);
    CHECK(got.values == code.values);
    CHECK(got.source_seq == 3);
    CHECK(got.timestamp_ns == 1234);
  }
  SUBCASE("heartbeat") {
    const auto hb = heartbeat_encode();
    CHECK(hb.size() == kWireHeaderSize);
    CHECK(is_heartbeat(hb));
    CHECK_FALSE(is_heartbeat(message_encode(Message{random_frame(gen, 0, 1, 4)})));
  }
}

TEST_CASE("wire rejects malformed bytes") {
  std::mt19937 gen(29);
  const auto good = message_encode(Message{random_frame(gen, 1, 2, 8)});

  SUBCASE("bad magic") {
    auto bad = good;
    bad[0] = 'Q';
    CHECK_THROWS_AS(message_decode(bad), UnknownSchema);
  }
  SUBCASE("bad version") {
    auto bad = good;
    bad[2] = 0x55;
    CHECK_THROWS_AS(message_decode(bad), UnknownSchema);
  }
  SUBCASE("unknown schema tag") {
    auto bad = good;
    bad[3] = 0x7e;
    CHECK_THROWS_AS(message_decode(bad), UnknownSchema);
  }
  SUBCASE("truncation at every boundary") {
    for (std::size_t keep : {0ul, 3ul, 4ul, 10ul, good.size() - 1}) {
      std::vector<std::uint8_t> bad(good.begin(), good.begin() + keep);
      CHECK_THROWS_AS(message_decode(bad), Error);
    }
  }
  SUBCASE("trailing bytes") {
    auto bad = good;
    bad.push_back(0);
    CHECK_THROWS_AS(message_decode(bad), TruncatedMessage);
  }
  SUBCASE("heartbeat with a payload is not a heartbeat") {
    auto hb = heartbeat_encode();
    hb.push_back(1);
    CHECK_FALSE(is_heartbeat(hb));
  }
}
