#include "splitwise/protocol.hpp"

#include <algorithm>

#include "splitwise/bytes.hpp"
#include "splitwise/error.hpp"

namespace splitwise::wire {

MsgType type_of(const Message& m) {
  return std::visit(
      [](const auto& v) -> MsgType {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Hello>) return MsgType::kHello;
        if constexpr (std::is_same_v<T, HelloAck>) return MsgType::kHelloAck;
        if constexpr (std::is_same_v<T, Feature>) return MsgType::kFeature;
        if constexpr (std::is_same_v<T, Result>) return MsgType::kResult;
        if constexpr (std::is_same_v<T, Ping>) return MsgType::kPing;
        if constexpr (std::is_same_v<T, Pong>) return MsgType::kPong;
        return MsgType::kError;
      },
      m);
}

namespace {

void encode_payload(ByteWriter& out, const Hello& m) {
  out.bytes(m.model_hash);
  out.u16_be(m.split_point);
}
void encode_payload(ByteWriter& out, const HelloAck& m) { out.u8(static_cast<std::uint8_t>(m.status)); }
void encode_payload(ByteWriter& out, const Feature& m) {
  std::size_t count = 1;
  for (auto d : m.dims) count *= d;
  if (m.dims.size() > 0xFF || count != m.data.size()) {
    fail(ErrorCode::kFraming, "feature dims do not match data length");
  }
  out.u64_be(m.request_id);
  out.u8(m.dtype);
  out.u8(static_cast<std::uint8_t>(m.dims.size()));
  for (auto d : m.dims) out.u32_be(d);
  out.f32_le(m.data);
}
void encode_payload(ByteWriter& out, const Result& m) {
  out.u64_be(m.request_id);
  out.u32_be(static_cast<std::uint32_t>(m.logits.size()));
  out.f32_le(m.logits);
  out.u64_be(m.server_compute_ns);
}
void encode_payload(ByteWriter&, const Ping&) {}
void encode_payload(ByteWriter&, const Pong&) {}
void encode_payload(ByteWriter& out, const ErrorMsg& m) {
  out.u16_be(static_cast<std::uint16_t>(m.code));
  out.text(m.message);
}

struct PayloadError {
  std::string detail;
};

Message decode_payload(MsgType type, std::span<const std::uint8_t> payload) {
  ByteReader in(payload);
  Message msg;
  switch (type) {
    case MsgType::kHello: {
      Hello h;
      auto hash = in.bytes(32);
      std::copy(hash.begin(), hash.end(), h.model_hash.begin());
      h.split_point = in.u16_be();
      msg = h;
      break;
    }
    case MsgType::kHelloAck: {
      const auto status = in.u8();
      if (status > 2) throw PayloadError{"unknown ack status " + std::to_string(status)};
      msg = HelloAck{static_cast<AckStatus>(status)};
      break;
    }
    case MsgType::kFeature: {
      Feature f;
      f.request_id = in.u64_be();
      f.dtype = in.u8();
      if (f.dtype != 0) throw PayloadError{"unsupported dtype " + std::to_string(f.dtype)};
      const auto ndim = in.u8();
      std::uint64_t count = 1;
      for (std::uint8_t i = 0; i < ndim; ++i) {
        f.dims.push_back(in.u32_be());
        count *= f.dims.back();
        if (count > kMaxPayload) throw PayloadError{"feature tensor too large"};
      }
      if (in.remaining() != count * sizeof(float)) {
        throw PayloadError{"feature data is " + std::to_string(in.remaining()) + " bytes, dims need " +
                           std::to_string(count * sizeof(float))};
      }
      f.data.resize(count);
      in.f32_le(f.data);
      msg = std::move(f);
      break;
    }
    case MsgType::kResult: {
      Result r;
      r.request_id = in.u64_be();
      const auto classes = in.u32_be();
      if (static_cast<std::uint64_t>(classes) * sizeof(float) + 8 != in.remaining()) {
        throw PayloadError{"result logits do not match class count"};
      }
      r.logits.resize(classes);
      in.f32_le(r.logits);
      r.server_compute_ns = in.u64_be();
      msg = std::move(r);
      break;
    }
    case MsgType::kPing: msg = Ping{}; break;
    case MsgType::kPong: msg = Pong{}; break;
    case MsgType::kError: {
      ErrorMsg e;
      e.code = static_cast<ErrorKind>(in.u16_be());
      e.message = in.text(in.remaining());
      msg = std::move(e);
      break;
    }
  }
  if (in.remaining() != 0) throw PayloadError{"trailing payload bytes"};
  return msg;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Message& m) {
  ByteWriter payload;
  std::visit([&](const auto& v) { encode_payload(payload, v); }, m);
  if (payload.buffer().size() > kMaxPayload) fail(ErrorCode::kFraming, "payload exceeds frame limit");
  ByteWriter out;
  out.bytes(kMagic);
  out.u8(kVersion);
  out.u8(static_cast<std::uint8_t>(type_of(m)));
  out.u16_be(0);
  out.u32_be(static_cast<std::uint32_t>(payload.buffer().size()));
  out.bytes(payload.buffer());
  return out.take();
}

std::optional<std::uint32_t> peek_payload_length(std::span<const std::uint8_t> header) {
  if (header.size() < kHeaderSize) return std::nullopt;
  ByteReader in(header.subspan(8, 4));
  return in.u32_be();
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes) {
  DecodeResult r;
  // Reject a wrong magic as early as its first byte arrives.
  const std::size_t magic_seen = std::min(bytes.size(), kMagic.size());
  if (!std::equal(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(magic_seen), kMagic.begin())) {
    r.status = DecodeStatus::kBadMagic;
    r.detail = "bad frame magic";
    return r;
  }
  if (bytes.size() < kHeaderSize) {
    r.status = DecodeStatus::kNeedMoreBytes;
    return r;
  }
  const std::uint8_t version = bytes[4];
  const std::uint8_t type = bytes[5];
  if (version != kVersion) {
    r.status = DecodeStatus::kUnsupportedVersion;
    r.detail = "unsupported protocol version " + std::to_string(version);
    return r;
  }
  if (type < 0x01 || type > 0x07) {
    r.status = DecodeStatus::kUnknownType;
    r.detail = "unknown message type " + std::to_string(type);
    return r;
  }
  if (bytes[6] != 0 || bytes[7] != 0) {
    r.status = DecodeStatus::kFramingError;
    r.detail = "reserved header bytes must be zero";
    return r;
  }
  const std::uint32_t length = *peek_payload_length(bytes);
  if (length > kMaxPayload) {
    r.status = DecodeStatus::kFramingError;
    r.detail = "payload length " + std::to_string(length) + " exceeds limit";
    return r;
  }
  if (bytes.size() < kHeaderSize + length) {
    r.status = DecodeStatus::kNeedMoreBytes;
    return r;
  }
  try {
    r.message = decode_payload(static_cast<MsgType>(type), bytes.subspan(kHeaderSize, length));
    r.status = DecodeStatus::kOk;
    r.consumed = kHeaderSize + length;
  } catch (const ByteOverrun&) {
    r.status = DecodeStatus::kFramingError;
    r.detail = "payload shorter than its fields";
  } catch (const PayloadError& e) {
    r.status = DecodeStatus::kFramingError;
    r.detail = e.detail;
  }
  return r;
}

ErrorKind error_kind_for(DecodeStatus status) {
  switch (status) {
    case DecodeStatus::kUnsupportedVersion: return ErrorKind::kVersion;
    case DecodeStatus::kOk:
    case DecodeStatus::kNeedMoreBytes: return ErrorKind::kInternal;
    default: return ErrorKind::kProtocol;
  }
}

}  // namespace splitwise::wire
