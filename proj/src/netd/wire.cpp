#include "patchflow/netd/wire.hpp"

#include <algorithm>
#include <cstring>

#include <nlohmann/json.hpp>

namespace patchflow::netd {

using nlohmann::json;

MessageType type_of(const Message& m) {
  return static_cast<MessageType>(static_cast<std::uint8_t>(m.index() + 1));
}

std::string_view to_string(MessageType t) {
  switch (t) {
    case MessageType::Hello: return "HELLO";
    case MessageType::Probe: return "PROBE";
    case MessageType::ProbeAck: return "PROBE_ACK";
    case MessageType::Patch: return "PATCH";
    case MessageType::Result: return "RESULT";
    case MessageType::Frame: return "FRAME";
    case MessageType::Stats: return "STATS";
  }
  return "?";
}

namespace {

json body_of(const Hello& m) { return {{"version", m.version}, {"node_id", m.node_id}}; }
json body_of(const Probe&) { return json::object(); }
json body_of(const ProbeAck& m) { return {{"occupancy", m.occupancy}, {"n_max", m.n_max}}; }

json body_of(const PatchMsg& m) {
  const PatchDescriptor& p = m.patch;
  return {{"patch_id", p.patch_id},       {"camera_id", p.camera_id},     {"frame_id", p.frame_id},
          {"capture_time", p.capture_time}, {"index", p.index},           {"siblings", p.siblings},
          {"size_bytes", p.size_bytes},   {"extracted_at", p.extracted_at}, {"origin_node", p.origin_node},
          {"hops", p.hops}};
}

json body_of(const ResultMsg& m) {
  const RecognitionRecord& r = m.record;
  return {{"patch_id", r.patch_id},         {"plate_text", r.plate_text},
          {"processed_by", r.processed_by}, {"completed_at", r.completed_at},
          {"latency", r.end_to_end_latency}, {"role", to_string(m.role)}};
}

json body_of(const FrameMsg& m) {
  return {{"frame_id", m.frame.frame_id},
          {"camera_id", m.frame.camera_id},
          {"capture_time", m.frame.capture_time},
          {"size_bytes", m.frame.size_bytes},
          {"patch_sizes", m.patch_sizes}};
}

json body_of(const Stats& m) {
  json c = json::object();
  for (const auto& [k, v] : m.counters) c[k] = v;
  return {{"node_id", m.node_id}, {"counters", std::move(c)}};
}

std::uint64_t filler_of(const Message& m) {
  if (const auto* p = std::get_if<PatchMsg>(&m)) return p->patch.size_bytes;
  if (const auto* f = std::get_if<FrameMsg>(&m)) return f->frame.size_bytes;
  return 0;
}

std::string body_text(const Message& m) {
  return std::visit([](const auto& v) { return body_of(v).dump(); }, m);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

[[noreturn]] void malformed(const std::string& what) { throw WireError(WireError::Kind::Malformed, what); }

// Strict typed field access: missing keys, wrong types and extra keys are errors.
class Body {
 public:
  Body(const json& j, std::initializer_list<const char*> keys) : j_(j) {
    if (!j.is_object()) malformed("message body is not an object");
    for (const auto& [k, _] : j.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
        malformed("unexpected field '" + k + "'");
    }
  }

  const json& at(const char* key) const {
    auto it = j_.find(key);
    if (it == j_.end()) malformed(std::string("missing field '") + key + "'");
    return *it;
  }
  std::string str(const char* key) const {
    const json& v = at(key);
    if (!v.is_string()) malformed(std::string("field '") + key + "' is not a string");
    return v.get<std::string>();
  }
  std::uint64_t u64(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_unsigned()) malformed(std::string("field '") + key + "' is not an unsigned integer");
    return v.get<std::uint64_t>();
  }
  std::uint32_t u32(const char* key) const {
    const std::uint64_t v = u64(key);
    if (v > 0xFFFFFFFFu) malformed(std::string("field '") + key + "' out of range");
    return static_cast<std::uint32_t>(v);
  }
  std::int64_t i64(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) malformed(std::string("field '") + key + "' is not an integer");
    return v.get<std::int64_t>();
  }
  template <typename T>
  std::vector<T> list(const char* key) const {
    const json& v = at(key);
    if (!v.is_array()) malformed(std::string("field '") + key + "' is not a list");
    std::vector<T> out;
    for (const auto& e : v) {
      if constexpr (std::is_same_v<T, std::string>) {
        if (!e.is_string()) malformed(std::string("field '") + key + "' holds a non-string");
      } else {
        if (!e.is_number_unsigned()) malformed(std::string("field '") + key + "' holds a non-integer");
      }
      out.push_back(e.get<T>());
    }
    return out;
  }

 private:
  const json& j_;
};

Message parse_body(MessageType type, const json& j) {
  switch (type) {
    case MessageType::Hello: {
      Body b(j, {"version", "node_id"});
      return Hello{b.i64("version"), b.str("node_id")};
    }
    case MessageType::Probe:
      Body(j, {});
      return Probe{};
    case MessageType::ProbeAck: {
      Body b(j, {"occupancy", "n_max"});
      return ProbeAck{b.u64("occupancy"), b.u64("n_max")};
    }
    case MessageType::Patch: {
      Body b(j, {"patch_id", "camera_id", "frame_id", "capture_time", "index", "siblings", "size_bytes",
                 "extracted_at", "origin_node", "hops"});
      PatchDescriptor p;
      p.patch_id = b.str("patch_id");
      p.camera_id = b.str("camera_id");
      p.frame_id = b.u64("frame_id");
      p.capture_time = b.u64("capture_time");
      p.index = b.u32("index");
      p.siblings = b.u32("siblings");
      p.size_bytes = b.u64("size_bytes");
      p.extracted_at = b.u64("extracted_at");
      p.origin_node = b.str("origin_node");
      p.hops = b.list<std::string>("hops");
      return PatchMsg{std::move(p)};
    }
    case MessageType::Result: {
      Body b(j, {"patch_id", "plate_text", "processed_by", "completed_at", "latency", "role"});
      ResultMsg m;
      m.record = {b.str("patch_id"), b.str("plate_text"), b.str("processed_by"), b.u64("completed_at"),
                  b.u64("latency")};
      auto role = parse_role(b.str("role"));
      if (!role) malformed("unknown role");
      m.role = *role;
      return m;
    }
    case MessageType::Frame: {
      Body b(j, {"frame_id", "camera_id", "capture_time", "size_bytes", "patch_sizes"});
      FrameMsg m;
      m.frame = {b.u64("frame_id"), b.str("camera_id"), b.u64("capture_time"), b.u64("size_bytes")};
      m.patch_sizes = b.list<std::uint64_t>("patch_sizes");
      return m;
    }
    case MessageType::Stats: {
      Body b(j, {"node_id", "counters"});
      Stats m;
      m.node_id = b.str("node_id");
      const json& c = b.at("counters");
      if (!c.is_object()) malformed("field 'counters' is not an object");
      for (const auto& [k, v] : c.items()) {
        if (!v.is_number_unsigned()) malformed("counter '" + k + "' is not an unsigned integer");
        m.counters[k] = v.get<std::uint64_t>();
      }
      return m;
    }
  }
  throw WireError(WireError::Kind::UnknownType, "unknown type code");
}

}  // namespace

std::uint64_t encoded_size(const Message& m) {
  return kLengthFieldBytes + 1 + 2 + body_text(m).size() + filler_of(m);
}

std::vector<std::uint8_t> encode(const Message& m) {
  const std::string body = body_text(m);
  if (body.size() > 0xFFFF) throw WireError(WireError::Kind::Oversize, "message body exceeds 65535 bytes");
  const std::uint64_t filler = filler_of(m);
  const std::uint64_t length = 1 + 2 + body.size() + filler;
  if (length > kMaxFrameBytes) throw WireError(WireError::Kind::Oversize, "frame exceeds 64 MiB");
  std::vector<std::uint8_t> out;
  out.reserve(kLengthFieldBytes + length);
  put_u32(out, static_cast<std::uint32_t>(length));
  out.push_back(static_cast<std::uint8_t>(type_of(m)));
  out.push_back(static_cast<std::uint8_t>(body.size() >> 8));
  out.push_back(static_cast<std::uint8_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  out.resize(out.size() + filler, kFillerByte);
  return out;
}

std::uint32_t check_length(std::span<const std::uint8_t, kLengthFieldBytes> prefix) {
  const std::uint32_t length = get_u32(prefix.data());
  if (length > kMaxFrameBytes)
    throw WireError(WireError::Kind::Oversize, "frame length " + std::to_string(length) + " exceeds 64 MiB");
  if (length < 3) malformed("frame length " + std::to_string(length) + " too short");
  return length;
}

Message decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kLengthFieldBytes) throw WireError(WireError::Kind::Truncated, "truncated length field");
  const std::uint32_t length = check_length(bytes.first<kLengthFieldBytes>());
  if (bytes.size() < kLengthFieldBytes + length)
    throw WireError(WireError::Kind::Truncated, "truncated frame: have " + std::to_string(bytes.size()) +
                                                    " of " + std::to_string(kLengthFieldBytes + length));
  if (bytes.size() > kLengthFieldBytes + length) malformed("trailing bytes after frame");
  const std::uint8_t* p = bytes.data() + kLengthFieldBytes;
  const std::uint8_t code = p[0];
  if (code < 0x01 || code > 0x07)
    throw WireError(WireError::Kind::UnknownType, "unknown type code " + std::to_string(code));
  const auto type = static_cast<MessageType>(code);
  const std::size_t body_len = (std::size_t{p[1]} << 8) | p[2];
  if (3 + body_len > length) malformed("body length exceeds frame");
  json j;
  try {
    j = json::parse(p + 3, p + 3 + body_len);
  } catch (const json::exception& e) {
    malformed(std::string("body is not JSON: ") + e.what());
  }
  Message m = parse_body(type, j);
  const std::uint64_t filler = length - 3 - body_len;
  if (filler != filler_of(m))
    malformed("filler of " + std::to_string(filler) + " bytes does not match size_bytes " +
              std::to_string(filler_of(m)));
  return m;
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> FrameReader::next() {
  const std::size_t avail = buffer_.size() - offset_;
  if (avail < kLengthFieldBytes) return std::nullopt;
  const std::span<const std::uint8_t, kLengthFieldBytes> prefix(buffer_.data() + offset_, kLengthFieldBytes);
  const std::uint32_t length = check_length(prefix);
  if (avail < kLengthFieldBytes + length) return std::nullopt;
  Message m = decode(std::span<const std::uint8_t>(buffer_.data() + offset_, kLengthFieldBytes + length));
  offset_ += kLengthFieldBytes + length;
  if (offset_ > (1u << 20) && offset_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
    offset_ = 0;
  }
  return m;
}

}  // namespace patchflow::netd
