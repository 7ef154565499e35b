#include "neurostream/io/container.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "neurostream/io/detail/binary.hpp"
#include "neurostream/log.hpp"

namespace neurostream::io {

namespace {

constexpr char kMagic[4] = {'N', 'S', 'I', 'G'};
constexpr std::uint8_t kVersion = 0x01;

void write_bytes(std::ostream& out, const std::vector<std::uint8_t>& bytes) {
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("container: write failed");
}

// Reads exactly n bytes; eof_ok permits a clean EOF before the first byte.
bool read_bytes(std::istream& in, std::uint8_t* dst, std::size_t n, bool eof_ok) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (in.gcount() == static_cast<std::streamsize>(n)) return true;
  if (eof_ok && in.gcount() == 0 && in.eof()) return false;
  throw CorruptFile("container: truncated record or header");
}

}  // namespace

ContainerWriter::ContainerWriter(const std::string& path, ContainerHeader header)
    : header_(std::move(header)) {
  auto file = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
  if (!file->is_open()) throw IoError("container: cannot open " + path + " for writing");
  sink_ = std::move(file);
  write_header();
}

ContainerWriter::ContainerWriter(std::unique_ptr<std::ostream> sink, ContainerHeader header)
    : sink_(std::move(sink)), header_(std::move(header)) {
  write_header();
}

ContainerWriter::~ContainerWriter() = default;

void ContainerWriter::write_header() {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  detail::put_u8(bytes, kVersion);
  detail::put_f64(bytes, header_.sampling_rate);
  detail::put_u32(bytes, static_cast<std::uint32_t>(header_.channel_names.size()));
  detail::put_u64(bytes, header_.start_time_ns);
  for (const auto& name : header_.channel_names) detail::put_string(bytes, name);
  write_bytes(*sink_, bytes);
}

void ContainerWriter::write_record(std::uint64_t seq, std::uint64_t timestamp_ns,
                                   std::uint64_t recv_ns, std::uint32_t flags,
                                   std::uint32_t num_samples, const float* payload) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(32 + 4ull * num_samples * header_.channel_names.size());
  detail::put_u64(bytes, seq);
  detail::put_u64(bytes, timestamp_ns);
  detail::put_u64(bytes, recv_ns);
  detail::put_u32(bytes, flags);
  detail::put_u32(bytes, num_samples);
  const std::size_t count = static_cast<std::size_t>(num_samples) * header_.channel_names.size();
  for (std::size_t i = 0; i < count; ++i) detail::put_f32(bytes, payload[i]);
  write_bytes(*sink_, bytes);
  ++records_;
}

void ContainerWriter::append(const core::NeuroFrame& frame, std::uint64_t recv_timestamp_ns) {
  if (frame.num_channels() != header_.channel_names.size())
    throw IoError("container: frame channel count does not match header");
  if (frame.num_samples < 1) throw IoError("container: frame has no samples");
  write_record(frame.seq, frame.timestamp_ns, recv_timestamp_ns, frame.flags,
               static_cast<std::uint32_t>(frame.num_samples), frame.samples.data());
}

void ContainerWriter::append_code(const core::LatentCode& code, std::uint64_t recv_timestamp_ns) {
  if (code.values.size() != header_.channel_names.size())
    throw IoError("container: code length does not match header channel count");
  write_record(code.source_seq, code.timestamp_ns, recv_timestamp_ns, 0, 1, code.values.data());
}

void ContainerWriter::flush() {
  sink_->flush();
  if (!*sink_) throw IoError("container: flush failed");
}

ContainerReader::ContainerReader(const std::string& path) {
  auto file = std::make_unique<std::ifstream>(path, std::ios::binary);
  if (!file->is_open()) throw IoError("container: cannot open " + path);
  source_ = std::move(file);

  std::uint8_t fixed[25];
  if (!read_bytes(*source_, fixed, sizeof(fixed), false))
    throw CorruptFile("container: empty file");
  if (std::memcmp(fixed, kMagic, 4) != 0) throw CorruptFile("container: bad magic");
  if (fixed[4] != kVersion)
    throw VersionMismatch("container: unsupported version " + std::to_string(fixed[4]));
  header_.sampling_rate = detail::load_f64(fixed + 5);
  const std::uint32_t channels = detail::load_u32(fixed + 13);
  header_.start_time_ns = detail::load_u64(fixed + 17);
  header_.channel_names.reserve(channels);
  for (std::uint32_t i = 0; i < channels; ++i) {
    std::uint8_t len_bytes[2];
    read_bytes(*source_, len_bytes, 2, false);
    const std::uint16_t len = detail::load_u16(len_bytes);
    std::string name(len, '\0');
    if (len > 0) read_bytes(*source_, reinterpret_cast<std::uint8_t*>(name.data()), len, false);
    header_.channel_names.push_back(std::move(name));
  }
}

ContainerReader::~ContainerReader() = default;

bool ContainerReader::next(core::NeuroFrame& out, std::uint64_t* recv_timestamp_ns) {
  std::uint8_t fixed[32];
  if (!read_bytes(*source_, fixed, sizeof(fixed), true)) return false;

  out.seq = detail::load_u64(fixed);
  out.timestamp_ns = detail::load_u64(fixed + 8);
  const std::uint64_t recv = detail::load_u64(fixed + 16);
  out.flags = detail::load_u32(fixed + 24);
  const std::uint32_t num_samples = detail::load_u32(fixed + 28);
  if (recv_timestamp_ns != nullptr) *recv_timestamp_ns = recv;

  out.sampling_rate = header_.sampling_rate;
  out.channel_names = header_.channel_names;
  out.num_samples = num_samples;
  const std::size_t count = static_cast<std::size_t>(num_samples) * header_.channel_names.size();
  std::vector<std::uint8_t> payload(count * 4);
  if (count > 0) read_bytes(*source_, payload.data(), payload.size(), false);
  out.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) out.samples[i] = detail::load_f32(&payload[i * 4]);

  if (any_record_ && out.seq <= last_seq_)
    throw CorruptFile("container: records out of order (seq " + std::to_string(out.seq) +
                      " after " + std::to_string(last_seq_) + ")");
  last_seq_ = out.seq;
  any_record_ = true;
  return true;
}

void container_write(const std::string& path, const std::vector<core::NeuroFrame>& frames,
                     const ContainerHeader& header) {
  ContainerWriter writer(path, header);
  for (const auto& frame : frames) writer.append(frame);
  writer.flush();
}

std::vector<core::NeuroFrame> container_read(const std::string& path, ContainerHeader* header) {
  ContainerReader reader(path);
  if (header != nullptr) *header = reader.header();
  std::vector<core::NeuroFrame> frames;
  core::NeuroFrame frame;
  while (reader.next(frame)) frames.push_back(frame);
  return frames;
}

std::vector<std::string> code_channel_names(std::size_t count) {
  std::vector<std::string> names;
  names.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string n = std::to_string(i);
    if (n.size() < 3) n.insert(0, 3 - n.size(), '0');
    names.push_back("z" + n);
  }
  return names;
}

std::pair<ContainerHeader, std::vector<core::NeuroFrame>> csv_import(const std::string& path,
                                                                     const CsvOptions& options) {
  std::ifstream file(path);
  if (!file.is_open()) throw IoError("csv: cannot open " + path);

  ContainerHeader header;
  header.sampling_rate = options.sampling_rate;

  std::vector<std::vector<float>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  bool want_header = options.header_row;

  while (std::getline(file, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }

    if (want_header) {
      header.channel_names = cells;
      columns = cells.size();
      want_header = false;
      continue;
    }
    if (columns == 0) columns = cells.size();
    if (cells.size() != columns)
      throw RaggedRows("csv row " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(columns));

    std::vector<float> row(columns);
    for (std::size_t c = 0; c < columns; ++c) {
      const std::string& cell = cells[c];
      char* end = nullptr;
      const double value = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0' || !std::isfinite(value))
        throw NonNumericCell("csv row " + std::to_string(line_no) + " column " +
                             std::to_string(c + 1) + ": '" + cell + "'");
      row[c] = static_cast<float>(value);
    }
    rows.push_back(std::move(row));
  }

  if (header.channel_names.empty()) {
    header.channel_names.reserve(columns);
    for (std::size_t c = 0; c < columns; ++c) header.channel_names.push_back("ch" + std::to_string(c));
  }

  std::vector<core::NeuroFrame> frames;
  const std::size_t frame_size = options.frame_size;
  const std::size_t full = rows.size() / frame_size;
  if (rows.size() % frame_size != 0)
    log_warn("csv: dropping " + std::to_string(rows.size() % frame_size) +
             " trailing rows short of a full frame");
  const double period_ns = 1e9 / options.sampling_rate;
  for (std::size_t f = 0; f < full; ++f) {
    core::NeuroFrame frame;
    frame.seq = f;
    frame.timestamp_ns = static_cast<std::uint64_t>(std::llround(
        static_cast<double>(f) * static_cast<double>(frame_size) * period_ns));
    frame.sampling_rate = options.sampling_rate;
    frame.channel_names = header.channel_names;
    frame.num_samples = frame_size;
    frame.samples.reserve(frame_size * columns);
    for (std::size_t r = 0; r < frame_size; ++r) {
      const auto& row = rows[f * frame_size + r];
      frame.samples.insert(frame.samples.end(), row.begin(), row.end());
    }
    frames.push_back(std::move(frame));
  }
  return {header, frames};
}

}  // namespace neurostream::io
