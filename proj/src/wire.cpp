#include "ubiq/wire.hpp"

#include "ubiq/error.hpp"

#include <charconv>
#include <cstdio>

namespace ubiq {

namespace {

void put_u16(std::uint8_t* out, std::uint16_t v) {
    out[0] = static_cast<std::uint8_t>(v);
    out[1] = static_cast<std::uint8_t>(v >> 8);
}

void put_u32(std::uint8_t* out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out[i] = static_cast<std::uint8_t>(v >> (8 * i));
    }
}

void put_u64(std::uint8_t* out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out[i] = static_cast<std::uint8_t>(v >> (8 * i));
    }
}

std::uint16_t get_u16(const std::uint8_t* in) {
    return static_cast<std::uint16_t>(in[0] | (in[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* in) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | in[i];
    }
    return v;
}

std::uint64_t get_u64(const std::uint8_t* in) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | in[i];
    }
    return v;
}

// Returns the full frame size for a prefix starting at `in`, validating the
// length field.
std::size_t checked_frame_size(const std::uint8_t* in) {
    const std::uint32_t length = get_u32(in);
    if (length < kAddressSize || length > kMaxMessageLength) {
        throw Error(Errc::malformed_stream, "length field " + std::to_string(length));
    }
    return kLengthFieldSize + length;
}

Address read_address(const std::uint8_t* in) {
    return Address{NetworkId{get_u64(in + kLengthFieldSize)},
                   ComponentId{get_u16(in + kLengthFieldSize + 8)}};
}

} // namespace

NetworkId NetworkId::parse(const std::string& text) {
    std::uint64_t value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw Error(Errc::parse_error, "bad network id '" + text + "'");
    }
    return NetworkId{value};
}

std::string to_string(const Address& address) {
    return address.object.to_string() + ":" + std::to_string(address.component.value);
}

Bytes encode(Address address, ByteView payload) {
    if (payload.size() > kMaxPayloadSize) {
        throw Error(Errc::oversize, "payload of " + std::to_string(payload.size()) + " bytes");
    }
    if (!address.valid()) {
        throw Error(Errc::invalid_address, to_string(address));
    }
    Bytes out(kPrefixSize + payload.size());
    put_u32(out.data(), static_cast<std::uint32_t>(kAddressSize + payload.size()));
    put_u64(out.data() + 4, address.object.value);
    put_u16(out.data() + 12, address.component.value);
    std::copy(payload.begin(), payload.end(), out.begin() + kPrefixSize);
    return out;
}

DecodeResult decode_stream(ByteView buffer) {
    DecodeResult result;
    std::size_t pos = 0;
    while (buffer.size() - pos >= kLengthFieldSize) {
        const std::size_t frame_size = checked_frame_size(buffer.data() + pos);
        if (buffer.size() - pos < frame_size) {
            break;
        }
        const auto* frame = buffer.data() + pos;
        result.messages.push_back(WireMessage{read_address(frame), Bytes(frame + kPrefixSize, frame + frame_size)});
        pos += frame_size;
    }
    result.remainder.assign(buffer.begin() + static_cast<std::ptrdiff_t>(pos), buffer.end());
    return result;
}

Frame::Frame(SharedBytes encoded) : bytes_(std::move(encoded)) {
    if (!bytes_ || bytes_->size() < kPrefixSize || checked_frame_size(bytes_->data()) != bytes_->size()) {
        throw Error(Errc::malformed_stream, "frame buffer is not exactly one message");
    }
    address_ = read_address(bytes_->data());
}

Frame Frame::make(Address address, ByteView payload) {
    return Frame(std::make_shared<const Bytes>(encode(address, payload)));
}

WireMessage Frame::to_message() const {
    auto body = payload();
    return WireMessage{address_, Bytes(body.begin(), body.end())};
}

std::vector<Frame> FrameReader::feed(ByteView fragment) {
    if (poisoned_) {
        throw Error(Errc::malformed_stream, "reader poisoned by earlier error");
    }
    std::vector<Frame> frames;

    // Fast path: nothing buffered, slice whole frames straight from the fragment.
    std::size_t pos = 0;
    if (buffered() == 0) {
        buffer_.clear();
        consumed_ = 0;
        try {
            while (fragment.size() - pos >= kLengthFieldSize) {
                const std::size_t frame_size = checked_frame_size(fragment.data() + pos);
                if (fragment.size() - pos < frame_size) {
                    break;
                }
                auto bytes = std::make_shared<const Bytes>(fragment.begin() + static_cast<std::ptrdiff_t>(pos),
                                                           fragment.begin() + static_cast<std::ptrdiff_t>(pos + frame_size));
                frames.emplace_back(std::move(bytes));
                pos += frame_size;
            }
        } catch (const Error&) {
            poisoned_ = true;
            throw;
        }
        buffer_.assign(fragment.begin() + static_cast<std::ptrdiff_t>(pos), fragment.end());
        return frames;
    }

    buffer_.insert(buffer_.end(), fragment.begin(), fragment.end());
    try {
        while (buffer_.size() - consumed_ >= kLengthFieldSize) {
            const std::size_t frame_size = checked_frame_size(buffer_.data() + consumed_);
            if (buffer_.size() - consumed_ < frame_size) {
                break;
            }
            auto first = buffer_.begin() + static_cast<std::ptrdiff_t>(consumed_);
            frames.emplace_back(std::make_shared<const Bytes>(first, first + static_cast<std::ptrdiff_t>(frame_size)));
            consumed_ += frame_size;
        }
    } catch (const Error&) {
        poisoned_ = true;
        throw;
    }
    if (consumed_ == buffer_.size()) {
        buffer_.clear();
        consumed_ = 0;
    } else if (consumed_ > buffer_.size() / 2) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(consumed_));
        consumed_ = 0;
    }
    return frames;
}

NetworkId generate_network_id(Rng& rng) {
    std::uint64_t value = rng();
    while (value <= NetworkId::kReservedMax) {
        value = rng();
    }
    return NetworkId{value};
}

Bytes to_text_object(const Json& value) {
    const std::string text = value.dump();
    return Bytes(text.begin(), text.end());
}

Json from_text_object(ByteView payload) {
    try {
        return Json::parse(payload.begin(), payload.end());
    } catch (const Json::exception& e) {
        throw Error(Errc::parse_error, e.what());
    }
}

std::string make_uuid(Rng& rng) {
    std::uint64_t hi = rng();
    std::uint64_t lo = rng();
    hi = (hi & 0xFFFFFFFFFFFF0FFFull) | 0x0000000000004000ull;
    lo = (lo & 0x3FFFFFFFFFFFFFFFull) | 0x8000000000000000ull;
    char text[37];
    std::snprintf(text, sizeof text, "%08x-%04x-%04x-%04x-%012llx",
                  static_cast<unsigned>(hi >> 32), static_cast<unsigned>((hi >> 16) & 0xFFFF),
                  static_cast<unsigned>(hi & 0xFFFF), static_cast<unsigned>(lo >> 48),
                  static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFull));
    return text;
}

} // namespace ubiq
