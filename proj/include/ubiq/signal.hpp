#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace ubiq {

/// Minimal multicast event. Not thread-safe; owned by one update context.
template <typename... Args>
class Signal {
public:
    using Slot = std::function<void(Args...)>;

    std::size_t connect(Slot slot) {
        slots_.emplace_back(next_id_, std::move(slot));
        return next_id_++;
    }

    void disconnect(std::size_t id) {
        std::erase_if(slots_, [id](const auto& entry) { return entry.first == id; });
    }

    void operator()(Args... args) const {
        // Copy so slots may connect/disconnect while being invoked.
        auto slots = slots_;
        for (const auto& [id, slot] : slots) {
            slot(args...);
        }
    }

    std::size_t size() const noexcept { return slots_.size(); }

private:
    std::vector<std::pair<std::size_t, Slot>> slots_;
    std::size_t next_id_ = 1;
};

} // namespace ubiq
