#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "patchflow/model.hpp"

namespace patchflow::netd {

// Frame layout, all integers big-endian:
//   u32 length   bytes after this field
//   u8  type
//   u16 body_len
//   body         canonical JSON, sorted keys
//   filler       PATCH and FRAME only: size_bytes of 0xAB
inline constexpr std::uint32_t kMaxFrameBytes = 64u * 1024u * 1024u;
inline constexpr std::size_t kLengthFieldBytes = 4;
inline constexpr std::uint8_t kFillerByte = 0xAB;
inline constexpr std::int64_t kProtocolVersion = 1;

enum class MessageType : std::uint8_t {
  Hello = 0x01,
  Probe = 0x02,
  ProbeAck = 0x03,
  Patch = 0x04,
  Result = 0x05,
  Frame = 0x06,
  Stats = 0x07,
};

struct Hello {
  std::int64_t version = kProtocolVersion;
  std::string node_id;
  bool operator==(const Hello&) const = default;
};

struct Probe {
  bool operator==(const Probe&) const = default;
};

struct ProbeAck {
  std::uint64_t occupancy = 0;
  std::uint64_t n_max = 0;
  bool operator==(const ProbeAck&) const = default;
};

struct PatchMsg {
  PatchDescriptor patch;
  bool operator==(const PatchMsg&) const = default;
};

struct ResultMsg {
  RecognitionRecord record;
  NodeRole role = NodeRole::Edge;
  bool operator==(const ResultMsg&) const = default;
};

// A raw frame for the cloud-only baseline. patch_sizes is the frame's
// extraction outcome, so the cloud extracts exactly what an edge would.
struct FrameMsg {
  FrameDescriptor frame;
  std::vector<std::uint64_t> patch_sizes;
  bool operator==(const FrameMsg&) const = default;
};

// Sent empty as a request; the reply carries the counters.
struct Stats {
  std::string node_id;
  std::map<std::string, std::uint64_t> counters;
  bool operator==(const Stats&) const = default;
};

using Message = std::variant<Hello, Probe, ProbeAck, PatchMsg, ResultMsg, FrameMsg, Stats>;

MessageType type_of(const Message& m);
std::string_view to_string(MessageType t);

class WireError : public std::runtime_error {
 public:
  enum class Kind { Truncated, Oversize, Malformed, UnknownType };
  WireError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> encode(const Message& m);
// Total encoded size without building the frame.
std::uint64_t encoded_size(const Message& m);

// Decodes exactly one complete frame; trailing bytes are malformed.
Message decode(std::span<const std::uint8_t> bytes);

// Validates a length prefix. Throws Oversize above kMaxFrameBytes and
// Malformed when too short to hold a type and body length.
std::uint32_t check_length(std::span<const std::uint8_t, kLengthFieldBytes> prefix);

// Incremental decoder for a byte stream.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  // Next complete message, or nullopt if more bytes are needed.
  std::optional<Message> next();
  std::size_t buffered() const { return buffer_.size() - offset_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::size_t offset_ = 0;
};

}  // namespace patchflow::netd
