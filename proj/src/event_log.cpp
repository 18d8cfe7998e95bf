#include "ubiq/event_log.hpp"

#include "ubiq/error.hpp"

#include <algorithm>
#include <chrono>

namespace ubiq {

std::int64_t monotonic_ticks() {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string LogEvent::to_line() const {
    nlohmann::ordered_json line;
    line["ticks"] = ticks;
    line["peer"] = peer;
    line["event"] = event;
    line["args"] = args;
    return line.dump();
}

LogEvent LogEvent::parse(std::string_view line) {
    Json value;
    try {
        value = Json::parse(line);
    } catch (const Json::exception& e) {
        throw Error(Errc::parse_error, e.what());
    }
    if (!value.is_object() || !value.contains("ticks") || !value["ticks"].is_number_integer() ||
        !value.contains("peer") || !value["peer"].is_string() || !value.contains("event") ||
        !value["event"].is_string() || !value.contains("args")) {
        throw Error(Errc::parse_error, "log line missing required fields");
    }
    return LogEvent{value["ticks"].get<std::int64_t>(), value["peer"].get<std::string>(),
                    value["event"].get<std::string>(), value["args"]};
}

JsonlWriter::JsonlWriter(std::string path, std::function<void(const std::string&)> on_error)
    : path_(std::move(path)), on_error_(std::move(on_error)) {
    out_.open(path_, std::ios::app);
    if (!out_) {
        error_ = "cannot open " + path_;
        if (on_error_) {
            on_error_(*error_);
        }
    }
}

void JsonlWriter::write_line(std::string_view line) {
    std::lock_guard lock(mutex_);
    if (error_) {
        return;
    }
    out_ << line << '\n';
    out_.flush();
    if (!out_) {
        error_ = "write to " + path_ + " failed";
        if (on_error_) {
            on_error_(*error_);
        }
        return;
    }
    ++lines_;
}

std::optional<std::string> JsonlWriter::error() const {
    std::lock_guard lock(mutex_);
    return error_;
}

std::size_t JsonlWriter::lines_written() const {
    std::lock_guard lock(mutex_);
    return lines_;
}

EventLogger::EventLogger(PeerScene scene, std::string peer_uuid, std::string path)
    : scene_(std::move(scene)),
      peer_uuid_(std::move(peer_uuid)),
      file_(path.empty() ? nullptr : std::make_unique<JsonlWriter>(std::move(path))),
      context_(scene_.register_component(*this, Address{ids::kLogChannelObject, ids::kLogEmitter})) {}

std::string EventLogger::log(const std::string& event, const Json& args) {
    last_ticks_ = std::max(last_ticks_, monotonic_ticks());
    const std::string line = LogEvent{last_ticks_, peer_uuid_, event, args}.to_line();
    if (file_) {
        file_->write_line(line);
    }
    if (local_collector_ != nullptr) {
        local_collector_->accept_line(line);
    } else if (remote_collector_) {
        scene_.send(Address{*remote_collector_, ids::kLogCollector},
                    ByteView(reinterpret_cast<const std::uint8_t*>(line.data()), line.size()));
    }
    ++emitted_;
    return line;
}

void EventLogger::set_local_collector(LogCollector* collector) {
    local_collector_ = collector;
    if (collector != nullptr) {
        remote_collector_.reset();
    }
}

void EventLogger::process_message(const ReceivedMessage& message) {
    const Json json = message.json();
    if (json.value("type", std::string{}) != "collector") {
        return;
    }
    remote_collector_ = NetworkId::parse(json.at("sceneid").get<std::string>());
    local_collector_ = nullptr;
}

LogCollector::LogCollector(PeerScene scene, RoomClient& rooms, EventLogger* local)
    : scene_(std::move(scene)),
      rooms_(rooms),
      local_(local),
      context_(scene_.register_component(*this, ids::kLogCollector)) {}

LogCollector::~LogCollector() {
    if (peer_added_slot_ != 0) {
        rooms_.peer_added.disconnect(peer_added_slot_);
    }
}

void LogCollector::start() {
    active_ = true;
    if (local_ != nullptr) {
        local_->set_local_collector(this);
    }
    if (peer_added_slot_ == 0) {
        peer_added_slot_ = rooms_.peer_added.connect([this](const PeerRecord&) { announce(); });
    }
    announce();
}

void LogCollector::announce() {
    scene_.send_json(Address{ids::kLogChannelObject, ids::kLogEmitter},
                     Json{{"type", "collector"}, {"sceneid", scene_.id().to_string()}});
}

void LogCollector::accept_line(std::string line) {
    if (active_) {
        lines_.push_back(std::move(line));
    }
}

void LogCollector::process_message(const ReceivedMessage& message) {
    accept_line(std::string(message.payload.begin(), message.payload.end()));
}

std::vector<std::string> LogCollector::sorted_lines() const {
    struct Keyed {
        std::string peer;
        std::int64_t ticks;
        const std::string* line;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(lines_.size());
    for (const auto& line : lines_) {
        try {
            const auto event = LogEvent::parse(line);
            keyed.push_back(Keyed{event.peer, event.ticks, &line});
        } catch (const Error&) {
            keyed.push_back(Keyed{{}, 0, &line});
        }
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        return std::tie(a.peer, a.ticks) < std::tie(b.peer, b.ticks);
    });
    std::vector<std::string> out;
    out.reserve(keyed.size());
    for (const auto& k : keyed) {
        out.push_back(*k.line);
    }
    return out;
}

std::size_t LogCollector::flush(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error(Errc::config, "cannot open " + path);
    }
    const auto lines = sorted_lines();
    for (const auto& line : lines) {
        out << line << '\n';
    }
    return lines.size();
}

} // namespace ubiq
