#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "neurostream/core/types.hpp"

namespace neurostream::io {

struct IoError : Error {
  using Error::Error;
};
struct CorruptFile : Error {
  using Error::Error;
};
struct VersionMismatch : Error {
  using Error::Error;
};
struct RaggedRows : Error {
  using Error::Error;
};
struct NonNumericCell : Error {
  using Error::Error;
};

// Signal container ("NSIG" v1): header + ordered frame records. Exact byte
// layout in docs/FORMATS.md.
struct ContainerHeader {
  double sampling_rate = 0.0;
  std::uint64_t start_time_ns = 0;
  std::vector<std::string> channel_names;
};

class ContainerWriter {
 public:
  ContainerWriter(const std::string& path, ContainerHeader header);
  // Takes ownership of an arbitrary sink (used by tests to inject IO failures).
  ContainerWriter(std::unique_ptr<std::ostream> sink, ContainerHeader header);
  ~ContainerWriter();

  ContainerWriter(const ContainerWriter&) = delete;
  ContainerWriter& operator=(const ContainerWriter&) = delete;

  void append(const core::NeuroFrame& frame, std::uint64_t recv_timestamp_ns = 0);
  void append_code(const core::LatentCode& code, std::uint64_t recv_timestamp_ns = 0);
  void flush();

  const ContainerHeader& header() const { return header_; }
  std::size_t records_written() const { return records_; }

 private:
  void write_header();
  void write_record(std::uint64_t seq, std::uint64_t timestamp_ns, std::uint64_t recv_ns,
                    std::uint32_t flags, std::uint32_t num_samples, const float* payload);

  std::unique_ptr<std::ostream> sink_;
  ContainerHeader header_;
  std::size_t records_ = 0;
};

class ContainerReader {
 public:
  explicit ContainerReader(const std::string& path);
  ~ContainerReader();

  ContainerReader(const ContainerReader&) = delete;
  ContainerReader& operator=(const ContainerReader&) = delete;

  const ContainerHeader& header() const { return header_; }

  // Returns false at a clean end of file. A partial record is CorruptFile.
  bool next(core::NeuroFrame& out, std::uint64_t* recv_timestamp_ns = nullptr);

 private:
  std::unique_ptr<std::istream> source_;
  ContainerHeader header_;
  std::uint64_t last_seq_ = 0;
  bool any_record_ = false;
};

void container_write(const std::string& path, const std::vector<core::NeuroFrame>& frames,
                     const ContainerHeader& header);
std::vector<core::NeuroFrame> container_read(const std::string& path,
                                             ContainerHeader* header = nullptr);

// Pseudo-channel labels ("z000"...) used when recording latent codes.
std::vector<std::string> code_channel_names(std::size_t count = core::kLatentSize);

struct CsvOptions {
  double sampling_rate = 512.0;
  std::size_t frame_size = 32;
  bool header_row = true;  // first row holds channel labels
};

// Imports a rectangular numeric CSV (comma separator, "." decimal point) as
// container frames. Trailing rows short of a full frame are dropped.
std::pair<ContainerHeader, std::vector<core::NeuroFrame>> csv_import(const std::string& path,
                                                                     const CsvOptions& options);

}  // namespace neurostream::io
