#pragma once

// Append-only JSON-lines event log of the click experiment.
//
// Each line is {"ts":..., "session":..., "condition":..., "kind":..., "payload":{...}}.
// Kinds: init (condition layout, session is empty), created, type, options,
// click, rating.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace poprank {

namespace event_kind {
inline constexpr std::string_view init = "init";
inline constexpr std::string_view created = "created";
inline constexpr std::string_view type = "type";
inline constexpr std::string_view options = "options";
inline constexpr std::string_view click = "click";
inline constexpr std::string_view rating = "rating";
}  // namespace event_kind

struct Event {
  std::int64_t ts = 0;  // microseconds, strictly increasing within a log
  std::string session;
  std::string condition;
  std::string kind;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const Event&) const = default;
};

std::string to_line(const Event& event);

/// Parses one log line; throws InvalidInput on malformed JSON or missing
/// fields.
Event parse_event(std::string_view line);

class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Destination of the event log. append must be durable (flushed) when it
/// returns, or throw StorageError.
class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual void append(const std::string& line) = 0;
  /// All lines written so far, including those from earlier runs.
  virtual std::vector<std::string> lines() const = 0;
};

class MemoryEventSink : public EventSink {
 public:
  MemoryEventSink() = default;
  explicit MemoryEventSink(std::vector<std::string> existing) : lines_(std::move(existing)) {}

  void append(const std::string& line) override;
  std::vector<std::string> lines() const override;

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> lines_;
};

/// Appends to <dir>/events.jsonl, creating the directory if needed.
class FileEventSink : public EventSink {
 public:
  explicit FileEventSink(const std::filesystem::path& dir);

  void append(const std::string& line) override;
  std::vector<std::string> lines() const override;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::ofstream out_;
};

}  // namespace poprank
