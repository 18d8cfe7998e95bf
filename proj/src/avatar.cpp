#include "ubiq/avatar.hpp"

#include "ubiq/error.hpp"

#include <bit>

namespace ubiq {

namespace {

void put_f32(std::uint8_t*& out, float value) {
    const auto bits = std::bit_cast<std::uint32_t>(value);
    for (int i = 0; i < 4; ++i) {
        *out++ = static_cast<std::uint8_t>(bits >> (8 * i));
    }
}

float get_f32(const std::uint8_t*& in) {
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) {
        bits = (bits << 8) | in[i];
    }
    in += 4;
    return std::bit_cast<float>(bits);
}

void put_pose(std::uint8_t*& out, const Pose& pose) {
    for (float v : {pose.position.x, pose.position.y, pose.position.z, pose.rotation.x, pose.rotation.y,
                    pose.rotation.z, pose.rotation.w}) {
        put_f32(out, v);
    }
}

Pose get_pose(const std::uint8_t*& in) {
    Pose pose;
    pose.position.x = get_f32(in);
    pose.position.y = get_f32(in);
    pose.position.z = get_f32(in);
    pose.rotation.x = get_f32(in);
    pose.rotation.y = get_f32(in);
    pose.rotation.z = get_f32(in);
    pose.rotation.w = get_f32(in);
    return pose;
}

} // namespace

std::array<std::uint8_t, AvatarPose::kEncodedSize> AvatarPose::encode() const {
    std::array<std::uint8_t, kEncodedSize> out{};
    auto* cursor = out.data();
    put_pose(cursor, head);
    put_pose(cursor, left_hand);
    put_pose(cursor, right_hand);
    return out;
}

AvatarPose AvatarPose::decode(ByteView bytes) {
    if (bytes.size() != kEncodedSize) {
        throw Error(Errc::parse_error, "avatar pose must be 84 bytes, got " + std::to_string(bytes.size()));
    }
    const auto* cursor = bytes.data();
    AvatarPose pose;
    pose.head = get_pose(cursor);
    pose.left_hand = get_pose(cursor);
    pose.right_hand = get_pose(cursor);
    return pose;
}

RemoteAvatar::RemoteAvatar(PeerScene& scene, NetworkId avatar_id)
    : context_(scene.register_component(*this, Address{avatar_id, ids::kAvatarPose})) {}

void RemoteAvatar::process_message(const ReceivedMessage& message) {
    ++updates_;
    if (message.payload.size() >= AvatarPose::kEncodedSize) {
        last_ = AvatarPose::decode(message.payload.first(AvatarPose::kEncodedSize));
    }
}

} // namespace ubiq
