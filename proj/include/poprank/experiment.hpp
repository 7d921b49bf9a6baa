#pragma once

// Live replication server core: condition assignment, per-condition shared
// popularity rankings, and the per-session event state machine
// (created -> typed -> options shown -> clicked -> rated). All state changes
// go through the append-only event log, which is replayed on startup.

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "poprank/design.hpp"
#include "poprank/event_log.hpp"
#include "poprank/model.hpp"

namespace poprank {

enum class ServiceErrorKind { not_found, conflict, rejected, storage };

class ServiceError : public std::runtime_error {
 public:
  ServiceError(ServiceErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ServiceErrorKind kind() const { return kind_; }

 private:
  ServiceErrorKind kind_;
};

enum class AssignmentPolicy { uniform, blocked };

/// Restricts assignment to the dynamic or the static conditions.
enum class ModeOverride { none, dynamic_only, static_only };

AssignmentPolicy parse_assignment_policy(std::string_view name);
ModeOverride parse_mode_override(std::string_view name);

struct ServiceOptions {
  std::uint64_t seed = 1;
  AssignmentPolicy assignment = AssignmentPolicy::uniform;
  ModeOverride mode = ModeOverride::none;
  /// Seed for session tokens; drawn from std::random_device when empty.
  std::optional<std::uint64_t> token_seed;
  /// Microsecond clock; defaults to the system clock.
  std::function<std::int64_t()> clock;
};

struct SessionInfo {
  std::string session_id;
  std::string condition;
};

struct OptionItem {
  int position;  // 1-based
  std::string item;
  std::string handle;
};

class ExperimentService {
 public:
  /// Replays everything already in `sink`, then logs the layout of any
  /// condition not yet initialized. Throws InvalidInput if the existing log
  /// is inconsistent.
  ExperimentService(std::shared_ptr<EventSink> sink, ServiceOptions options = {});
  ~ExperimentService();

  ExperimentService(const ExperimentService&) = delete;
  ExperimentService& operator=(const ExperimentService&) = delete;

  SessionInfo create_session();
  void record_type(const std::string& session_id, std::string_view answer);
  /// The list is frozen at the first call for a session; later calls return
  /// the same list.
  std::vector<OptionItem> get_options(const std::string& session_id);
  /// Returns the 1-based position of the item in the list shown.
  int record_click(const std::string& session_id, const std::string& item);
  void record_rating(const std::string& session_id, int stars);

  nlohmann::json results_summary() const;
  std::vector<std::string> export_log() const;

  /// Class and label of an image handle, for the placeholder image route.
  struct ImageInfo {
    ItemClass item_class;
    int index;
  };
  std::optional<ImageInfo> image(const std::string& handle) const;

  /// Current ranking of a condition (for tests and diagnostics).
  Ranking ranking(std::string_view condition) const;
  std::size_t replayed_events() const { return replayed_events_; }

 private:
  struct Item {
    std::string id;
    std::string handle;
    ItemClass item_class;
  };
  struct Session;
  struct Condition;

  void replay(const std::vector<std::string>& lines);
  void initialize_missing_layouts();
  std::size_t assign_condition(std::uint64_t k) const;
  std::string session_token(std::uint64_t k) const;
  /// Assigns the timestamp and appends; throws ServiceError(storage).
  Event log_event(std::string session, std::string condition, std::string_view kind, nlohmann::json payload);
  Session& find_session(const std::string& session_id);

  std::shared_ptr<EventSink> sink_;
  ServiceOptions options_;
  std::uint64_t token_key_;
  std::vector<std::size_t> allowed_;

  std::array<std::unique_ptr<Condition>, 8> conditions_;
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> handle_index_;

  mutable std::shared_mutex sessions_mutex_;
  std::unordered_map<std::string, std::unique_ptr<Session>> sessions_;

  std::mutex create_mutex_;
  std::uint64_t sessions_created_ = 0;

  mutable std::mutex log_mutex_;
  std::int64_t last_ts_ = 0;

  std::size_t replayed_events_ = 0;
};

}  // namespace poprank
