#pragma once

#include "ubiq/scene.hpp"

#include <array>
#include <cstdint>
#include <optional>

namespace ubiq {

struct Vec3f {
    float x = 0, y = 0, z = 0;
    friend bool operator==(const Vec3f&, const Vec3f&) = default;
};

struct Quatf {
    float x = 0, y = 0, z = 0, w = 1;
    friend bool operator==(const Quatf&, const Quatf&) = default;
};

struct Pose {
    Vec3f position;
    Quatf rotation;
    friend bool operator==(const Pose&, const Pose&) = default;
};

/// Three-point tracking rig: head and both hands.
struct AvatarPose {
    Pose head;
    Pose left_hand;
    Pose right_hand;

    /// 3 poses x (3 + 4) little-endian float32.
    static constexpr std::size_t kEncodedSize = 84;

    std::array<std::uint8_t, kEncodedSize> encode() const;
    /// Throws Error(parse_error) unless exactly 84 bytes.
    static AvatarPose decode(ByteView bytes);

    friend bool operator==(const AvatarPose&, const AvatarPose&) = default;
};

/// Receives pose updates for one avatar id at (avatar id, 10).
class RemoteAvatar final : public MessageHandler {
public:
    RemoteAvatar(PeerScene& scene, NetworkId avatar_id);

    NetworkId id() const noexcept { return context_.address().object; }
    std::uint64_t updates() const noexcept { return updates_; }
    const std::optional<AvatarPose>& last_pose() const noexcept { return last_; }

    void process_message(const ReceivedMessage& message) override;

private:
    std::uint64_t updates_ = 0;
    std::optional<AvatarPose> last_;
    NetworkContext context_;
};

} // namespace ubiq
