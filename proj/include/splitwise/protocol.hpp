#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace splitwise::wire {

// Frame header (12 bytes): "SWIR", u8 version, u8 msg_type, u16 reserved = 0,
// u32 payload_len. Header integers are big-endian; tensor and logit values
// are little-endian f32.
inline constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'W', 'I', 'R'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 12;
inline constexpr std::uint32_t kMaxPayload = 1u << 28;

enum class MsgType : std::uint8_t {
  kHello = 0x01,
  kHelloAck = 0x02,
  kFeature = 0x03,
  kResult = 0x04,
  kPing = 0x05,
  kPong = 0x06,
  kError = 0x07,
};

enum class AckStatus : std::uint8_t { kOk = 0, kHashMismatch = 1, kBadSplit = 2 };

enum class ErrorKind : std::uint16_t { kProtocol = 1, kVersion = 2, kShape = 3, kInternal = 4 };

struct Hello {
  std::array<std::uint8_t, 32> model_hash{};
  std::uint16_t split_point = 0;
  friend bool operator==(const Hello&, const Hello&) = default;
};

struct HelloAck {
  AckStatus status = AckStatus::kOk;
  friend bool operator==(const HelloAck&, const HelloAck&) = default;
};

struct Feature {
  std::uint64_t request_id = 0;
  std::uint8_t dtype = 0;  // 0 = f32
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
  friend bool operator==(const Feature&, const Feature&) = default;
};

struct Result {
  std::uint64_t request_id = 0;
  std::vector<float> logits;
  std::uint64_t server_compute_ns = 0;
  friend bool operator==(const Result&, const Result&) = default;
};

struct Ping {
  friend bool operator==(const Ping&, const Ping&) = default;
};

struct Pong {
  friend bool operator==(const Pong&, const Pong&) = default;
};

struct ErrorMsg {
  ErrorKind code = ErrorKind::kInternal;
  std::string message;
  friend bool operator==(const ErrorMsg&, const ErrorMsg&) = default;
};

using Message = std::variant<Hello, HelloAck, Feature, Result, Ping, Pong, ErrorMsg>;

MsgType type_of(const Message& m);

std::vector<std::uint8_t> encode_frame(const Message& m);

enum class DecodeStatus {
  kOk,
  kNeedMoreBytes,
  kBadMagic,
  kUnsupportedVersion,
  kUnknownType,
  kFramingError,
};

struct DecodeResult {
  DecodeStatus status = DecodeStatus::kNeedMoreBytes;
  std::optional<Message> message;
  std::size_t consumed = 0;  // bytes of the frame when status == kOk
  std::string detail;

  bool ok() const { return status == DecodeStatus::kOk; }
};

/// Decodes one frame from the front of `bytes`. Never throws on malformed
/// input; a truncated frame reports kNeedMoreBytes and can be retried once
/// more bytes arrive.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes);

/// Payload length announced by a complete header, or nullopt.
std::optional<std::uint32_t> peek_payload_length(std::span<const std::uint8_t> header);

ErrorKind error_kind_for(DecodeStatus status);

}  // namespace splitwise::wire
