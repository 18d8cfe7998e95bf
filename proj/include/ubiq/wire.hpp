#pragma once

// Message format and two-part addressing.
//
// Every message on the wire is
//
//   [length:u32][object:u64][component:u16][payload...]
//
// little-endian, where `length` counts the bytes after the length field
// (10 + payload size). The 14-byte prefix is the only part of a message the
// network ever inspects.

#include "ubiq/random.hpp"

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace ubiq {

using Bytes = std::vector<std::uint8_t>;
using SharedBytes = std::shared_ptr<const Bytes>;
using ByteView = std::span<const std::uint8_t>;
using Json = nlohmann::json;

inline constexpr std::size_t kLengthFieldSize = 4;
inline constexpr std::size_t kAddressSize = 10;
inline constexpr std::size_t kPrefixSize = kLengthFieldSize + kAddressSize;
/// Largest legal value of the length field.
inline constexpr std::size_t kMaxMessageLength = 1u << 20;
inline constexpr std::size_t kMaxPayloadSize = kMaxMessageLength - kAddressSize;

/// Object half of an address. Zero is never addressable; 1..255 are reserved
/// for system services.
struct NetworkId {
    std::uint64_t value = 0;

    static constexpr std::uint64_t kReservedMax = 255;

    constexpr bool valid() const noexcept { return value != 0; }
    constexpr bool reserved() const noexcept { return value != 0 && value <= kReservedMax; }

    std::string to_string() const { return std::to_string(value); }
    /// Parses the decimal text form used in JSON payloads. Throws Error(parse_error).
    static NetworkId parse(const std::string& text);

    friend constexpr auto operator<=>(NetworkId, NetworkId) = default;
};

/// Component half of an address. Zero is invalid.
struct ComponentId {
    std::uint16_t value = 0;

    constexpr bool valid() const noexcept { return value != 0; }

    friend constexpr auto operator<=>(ComponentId, ComponentId) = default;
};

struct Address {
    NetworkId object;
    ComponentId component;

    constexpr bool valid() const noexcept { return object.valid() && component.valid(); }

    friend constexpr auto operator<=>(const Address&, const Address&) = default;
};

std::string to_string(const Address& address);

/// Well-known ids agreed at design time.
namespace ids {
inline constexpr NetworkId kRoomServerObject{1};
inline constexpr NetworkId kSpawnerObject{2};
inline constexpr NetworkId kLogChannelObject{3};
inline constexpr NetworkId kBoidsObject{4};

inline constexpr ComponentId kRoomServer{1};
inline constexpr ComponentId kRoomClient{2};
inline constexpr ComponentId kSpawner{3};
inline constexpr ComponentId kLogEmitter{4};
inline constexpr ComponentId kLatencyMeter{5};
inline constexpr ComponentId kLogCollector{6};
inline constexpr ComponentId kAvatarPose{10};
inline constexpr ComponentId kBoids{11};

inline constexpr Address kRoomServerAddress{kRoomServerObject, kRoomServer};
} // namespace ids

struct WireMessage {
    Address address;
    Bytes payload;

    std::uint32_t length() const noexcept {
        return static_cast<std::uint32_t>(kAddressSize + payload.size());
    }

    friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

/// Serializes one message. Throws Error(oversize) past the length cap and
/// Error(invalid_address) for a zero object or component id.
Bytes encode(Address address, ByteView payload);
inline Bytes encode(const WireMessage& message) { return encode(message.address, message.payload); }

struct DecodeResult {
    std::vector<WireMessage> messages;
    Bytes remainder;
};

/// Splits a byte stream into complete messages plus the unconsumed tail.
/// Throws Error(malformed_stream) for a length field below 10 or above the cap.
DecodeResult decode_stream(ByteView buffer);

/// One complete encoded message held in a shared immutable buffer, so a relay
/// can forward it to many connections without copying.
class Frame {
public:
    /// Throws Error(malformed_stream) unless `encoded` is exactly one message.
    explicit Frame(SharedBytes encoded);

    static Frame make(Address address, ByteView payload);

    Address address() const noexcept { return address_; }
    ByteView payload() const noexcept { return ByteView(*bytes_).subspan(kPrefixSize); }
    ByteView bytes() const noexcept { return *bytes_; }
    std::size_t size() const noexcept { return bytes_->size(); }
    const SharedBytes& shared() const noexcept { return bytes_; }

    WireMessage to_message() const;

private:
    SharedBytes bytes_;
    Address address_;
};

/// Incremental reframer: feed arbitrary fragments, receive whole frames in
/// order. After a malformed length the reader stays poisoned.
class FrameReader {
public:
    /// Throws Error(malformed_stream); the connection should be dropped.
    std::vector<Frame> feed(ByteView fragment);

    std::size_t buffered() const noexcept { return buffer_.size() - consumed_; }

private:
    Bytes buffer_;
    std::size_t consumed_ = 0;
    bool poisoned_ = false;
};

/// Uniformly random id above the reserved range.
NetworkId generate_network_id(Rng& rng);

/// JSON text-object helpers for payloads.
Bytes to_text_object(const Json& value);
/// Throws Error(parse_error) on malformed or non-UTF-8 input.
Json from_text_object(ByteView payload);

} // namespace ubiq

template <>
struct std::hash<ubiq::NetworkId> {
    std::size_t operator()(ubiq::NetworkId id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};

template <>
struct std::hash<ubiq::Address> {
    std::size_t operator()(const ubiq::Address& a) const noexcept {
        return std::hash<std::uint64_t>{}(a.object.value * 0x9E3779B97F4A7C15ull ^ a.component.value);
    }
};
