#include "poprank/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>

#include "poprank/click_log.hpp"
#include "poprank/error.hpp"

namespace poprank {

namespace {

constexpr std::uint64_t kAssignmentStream = 1;
constexpr std::uint64_t kBlockStream = 2;
constexpr std::uint64_t kLayoutStream = 3;

std::string hex(std::uint64_t v, int digits) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf + (16 - digits));
}

std::int64_t system_micros() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

struct ExperimentService::Session {
  std::string id;
  std::size_t condition;
  std::optional<UserType> type;
  std::optional<std::vector<ItemId>> shown;
  std::optional<ItemId> clicked;
  std::optional<int> rating;
};

struct ExperimentService::Condition {
  const ConditionSpec& spec;
  std::mutex mutex;
  std::vector<Item> items;  // indexed by ItemId; ItemId = initial rank - 1
  std::unordered_map<std::string, ItemId> item_by_id;
  Ranking ranking;
  std::size_t sessions = 0;
  std::array<std::size_t, 3> typed{0, 0, 0};
  std::array<std::size_t, 3> clicked_by_type{0, 0, 0};
  std::size_t clicks = 0;
  std::size_t class1_clicks = 0;

  Condition(const ConditionSpec& s, std::vector<Item> layout)
      : spec(s), items(std::move(layout)), ranking(Ranking::initial(s.m0 + s.m1, s.m1)) {
    for (ItemId i = 0; i < items.size(); ++i) item_by_id.emplace(items[i].id, i);
  }

  void apply_click(ItemId item) {
    if (spec.dynamic) {
      ranking.record_click(item);
    } else {
      ranking.add_click_frozen(item);
    }
  }
};

AssignmentPolicy parse_assignment_policy(std::string_view name) {
  if (name == "uniform") return AssignmentPolicy::uniform;
  if (name == "blocked") return AssignmentPolicy::blocked;
  throw InvalidInput("unknown assignment policy '" + std::string(name) + "' (expected uniform or blocked)");
}

ModeOverride parse_mode_override(std::string_view name) {
  if (name == "none" || name.empty()) return ModeOverride::none;
  if (name == "dynamic") return ModeOverride::dynamic_only;
  if (name == "static") return ModeOverride::static_only;
  throw InvalidInput("unknown mode override '" + std::string(name) + "' (expected none, dynamic or static)");
}

ExperimentService::ExperimentService(std::shared_ptr<EventSink> sink, ServiceOptions options)
    : sink_(std::move(sink)), options_(std::move(options)) {
  if (!sink_) throw InvalidInput("the experiment service needs an event sink");
  if (!options_.clock) options_.clock = system_micros;
  token_key_ = options_.token_seed ? *options_.token_seed : (std::uint64_t{std::random_device{}()} << 32) ^
                                                                std::random_device{}();
  for (std::size_t k = 0; k < kConditions.size(); ++k) {
    const bool dyn = kConditions[k].dynamic;
    if (options_.mode == ModeOverride::none || (options_.mode == ModeOverride::dynamic_only) == dyn) {
      allowed_.push_back(k);
    }
  }
  replay(sink_->lines());
  initialize_missing_layouts();
  for (std::size_t k = 0; k < conditions_.size(); ++k) {
    const auto& items = conditions_[k]->items;
    for (std::size_t i = 0; i < items.size(); ++i) handle_index_.emplace(items[i].handle, std::pair{k, i});
  }
}

ExperimentService::~ExperimentService() = default;

void ExperimentService::replay(const std::vector<std::string>& lines) {
  ingest_event_lines(lines);  // validates the whole log before any state is built

  for (const auto& line : lines) {
    if (line.empty()) continue;
    const Event e = parse_event(line);
    last_ts_ = std::max(last_ts_, e.ts);
    ++replayed_events_;
    const auto k = condition_index(e.condition);
    if (!k) throw InvalidInput("event log names unknown condition '" + e.condition + "'");

    if (e.kind == event_kind::init) {
      const ConditionSpec& spec = kConditions[*k];
      if (e.payload.at("m0").get<std::size_t>() != spec.m0 || e.payload.at("m1").get<std::size_t>() != spec.m1 ||
          e.payload.at("dynamic").get<bool>() != spec.dynamic) {
        throw InvalidInput("logged layout of " + e.condition + " does not match the condition design");
      }
      std::vector<Item> layout;
      for (const auto& it : e.payload.at("items")) {
        layout.push_back({it.at("id").get<std::string>(), it.at("handle").get<std::string>(),
                          static_cast<ItemClass>(it.at("class").get<int>())});
      }
      for (std::size_t i = 0; i < layout.size(); ++i) {
        if (layout[i].item_class != (i < spec.m0 ? 0 : 1)) {
          throw InvalidInput("logged layout of " + e.condition + " does not start with cats on top");
        }
      }
      conditions_[*k] = std::make_unique<Condition>(spec, std::move(layout));
      continue;
    }

    Condition& c = *conditions_[*k];
    if (e.kind == event_kind::created) {
      auto s = std::make_unique<Session>();
      s->id = e.session;
      s->condition = *k;
      sessions_.emplace(e.session, std::move(s));
      ++c.sessions;
      ++sessions_created_;
      continue;
    }
    Session& s = *sessions_.at(e.session);
    if (e.kind == event_kind::type) {
      s.type = parse_user_type(e.payload.at("answer").get<std::string>());
      ++c.typed[static_cast<std::size_t>(*s.type)];
    } else if (e.kind == event_kind::options) {
      std::vector<ItemId> shown;
      for (const auto& id : e.payload.at("order")) shown.push_back(c.item_by_id.at(id.get<std::string>()));
      s.shown = std::move(shown);
    } else if (e.kind == event_kind::click) {
      const ItemId item = c.item_by_id.at(e.payload.at("item").get<std::string>());
      s.clicked = item;
      c.apply_click(item);
      ++c.clicks;
      c.class1_clicks += c.items[item].item_class;
      ++c.clicked_by_type[static_cast<std::size_t>(*s.type)];
    } else if (e.kind == event_kind::rating) {
      s.rating = e.payload.at("stars").get<int>();
    }
  }
}

void ExperimentService::initialize_missing_layouts() {
  for (std::size_t k = 0; k < kConditions.size(); ++k) {
    if (conditions_[k]) continue;
    const ConditionSpec& spec = kConditions[k];
    const std::size_t m = spec.m0 + spec.m1;
    Rng rng(derive_seed(derive_seed(options_.seed, kLayoutStream), k));
    std::vector<int> labels(m);
    for (std::size_t i = 0; i < m; ++i) labels[i] = static_cast<int>(i + 1);
    rng.shuffle(labels);
    std::vector<Item> layout;
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < m; ++i) {
      char id[8];
      std::snprintf(id, sizeof id, "i%02d", labels[i]);
      Item item{id, "img-" + hex(rng.next(), 12), static_cast<ItemClass>(i < spec.m0 ? 0 : 1)};
      items.push_back({{"id", item.id}, {"handle", item.handle}, {"class", int(item.item_class)}});
      layout.push_back(std::move(item));
    }
    log_event("", std::string(spec.id), event_kind::init,
              {{"m0", spec.m0}, {"m1", spec.m1}, {"dynamic", spec.dynamic}, {"items", std::move(items)}});
    conditions_[k] = std::make_unique<Condition>(spec, std::move(layout));
  }
}

std::size_t ExperimentService::assign_condition(std::uint64_t k) const {
  const std::size_t n = allowed_.size();
  if (options_.assignment == AssignmentPolicy::uniform) {
    Rng rng(derive_seed(derive_seed(options_.seed, kAssignmentStream), k));
    return allowed_[rng.index(n)];
  }
  Rng rng(derive_seed(derive_seed(options_.seed, kBlockStream), k / n));
  auto block = allowed_;
  rng.shuffle(block);
  return block[k % n];
}

std::string ExperimentService::session_token(std::uint64_t k) const {
  return hex(derive_seed(token_key_, k), 16) + hex(derive_seed(token_key_ ^ 0x5bd1e995u, k), 16);
}

Event ExperimentService::log_event(std::string session, std::string condition, std::string_view kind,
                                   nlohmann::json payload) {
  std::lock_guard lock(log_mutex_);
  Event e{std::max(options_.clock(), last_ts_ + 1), std::move(session), std::move(condition), std::string(kind),
          std::move(payload)};
  try {
    sink_->append(to_line(e));
  } catch (const std::exception& err) {
    throw ServiceError(ServiceErrorKind::storage, std::string("event log write failed: ") + err.what());
  }
  last_ts_ = e.ts;
  return e;
}

ExperimentService::Session& ExperimentService::find_session(const std::string& session_id) {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw ServiceError(ServiceErrorKind::not_found, "unknown session");
  return *it->second;
}

SessionInfo ExperimentService::create_session() {
  std::lock_guard create_lock(create_mutex_);
  const std::uint64_t k = sessions_created_;
  const std::size_t ci = assign_condition(k);
  std::string token = session_token(k);
  {
    std::shared_lock lock(sessions_mutex_);
    for (std::uint64_t salt = 1; sessions_.contains(token); ++salt) token = session_token(k ^ (salt << 48));
  }
  Condition& c = *conditions_[ci];
  {
    std::lock_guard cond_lock(c.mutex);
    log_event(token, std::string(c.spec.id), event_kind::created, nlohmann::json::object());
    ++c.sessions;
  }
  auto s = std::make_unique<Session>();
  s->id = token;
  s->condition = ci;
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(token, std::move(s));
  }
  ++sessions_created_;
  return {token, std::string(c.spec.id)};
}

void ExperimentService::record_type(const std::string& session_id, std::string_view answer) {
  Session& s = find_session(session_id);
  UserType type;
  if (answer == "cat" || answer == "dog" || answer == "neither") {
    type = parse_user_type(answer);
  } else {
    throw ServiceError(ServiceErrorKind::rejected, "answer must be cat, dog or neither");
  }
  Condition& c = *conditions_[s.condition];
  std::lock_guard lock(c.mutex);
  if (s.type) throw ServiceError(ServiceErrorKind::conflict, "type already answered");
  log_event(s.id, std::string(c.spec.id), event_kind::type, {{"answer", std::string(answer)}});
  s.type = type;
  ++c.typed[static_cast<std::size_t>(type)];
}

std::vector<OptionItem> ExperimentService::get_options(const std::string& session_id) {
  Session& s = find_session(session_id);
  Condition& c = *conditions_[s.condition];
  std::lock_guard lock(c.mutex);
  if (!s.type) throw ServiceError(ServiceErrorKind::conflict, "answer the type question first");
  if (s.clicked) throw ServiceError(ServiceErrorKind::conflict, "session already clicked");
  if (!s.shown) {
    const auto order = c.ranking.order();
    nlohmann::json ids = nlohmann::json::array();
    for (ItemId i : order) ids.push_back(c.items[i].id);
    log_event(s.id, std::string(c.spec.id), event_kind::options, {{"order", std::move(ids)}});
    s.shown = std::vector<ItemId>(order.begin(), order.end());
  }
  std::vector<OptionItem> out;
  out.reserve(s.shown->size());
  for (std::size_t r = 0; r < s.shown->size(); ++r) {
    const Item& item = c.items[(*s.shown)[r]];
    out.push_back({static_cast<int>(r + 1), item.id, item.handle});
  }
  return out;
}

int ExperimentService::record_click(const std::string& session_id, const std::string& item_id) {
  Session& s = find_session(session_id);
  Condition& c = *conditions_[s.condition];
  std::lock_guard lock(c.mutex);
  if (s.clicked) throw ServiceError(ServiceErrorKind::conflict, "session already clicked");
  if (!s.type || !s.shown) throw ServiceError(ServiceErrorKind::conflict, "options have not been shown");
  auto it = c.item_by_id.find(item_id);
  if (it == c.item_by_id.end()) throw ServiceError(ServiceErrorKind::rejected, "unknown item for this condition");
  const ItemId item = it->second;
  const auto pos = std::find(s.shown->begin(), s.shown->end(), item) - s.shown->begin();
  const int rank = static_cast<int>(pos) + 1;
  log_event(s.id, std::string(c.spec.id), event_kind::click, {{"item", item_id}, {"rank", rank}});
  s.clicked = item;
  c.apply_click(item);
  ++c.clicks;
  c.class1_clicks += c.items[item].item_class;
  ++c.clicked_by_type[static_cast<std::size_t>(*s.type)];
  return rank;
}

void ExperimentService::record_rating(const std::string& session_id, int stars) {
  Session& s = find_session(session_id);
  if (stars < 1 || stars > 5) throw ServiceError(ServiceErrorKind::rejected, "stars must be between 1 and 5");
  Condition& c = *conditions_[s.condition];
  std::lock_guard lock(c.mutex);
  if (!s.clicked) throw ServiceError(ServiceErrorKind::conflict, "rate after clicking");
  if (s.rating) throw ServiceError(ServiceErrorKind::conflict, "session already rated");
  log_event(s.id, std::string(c.spec.id), event_kind::rating, {{"stars", stars}});
  s.rating = stars;
}

nlohmann::json ExperimentService::results_summary() const {
  nlohmann::json rows = nlohmann::json::array();
  std::array<std::size_t, 3> typed{0, 0, 0};
  std::array<std::size_t, 3> participants{0, 0, 0};
  auto type_counts = [](const std::array<std::size_t, 3>& t) {
    return nlohmann::json{{"cat", t[0]}, {"neither", t[2]}, {"dog", t[1]}};
  };
  for (const auto& cp : conditions_) {
    Condition& c = *cp;
    std::lock_guard lock(c.mutex);
    for (int t = 0; t < 3; ++t) {
      typed[t] += c.typed[t];
      participants[t] += c.clicked_by_type[t];
    }
    rows.push_back({
        {"id", c.spec.id},
        {"m0", c.spec.m0},
        {"m1", c.spec.m1},
        {"dynamic", c.spec.dynamic},
        {"sessions", c.sessions},
        {"participants", c.clicks},
        {"types", type_counts(c.clicked_by_type)},
        {"clicks", c.clicks},
        {"class1_clicks", c.class1_clicks},
        {"class1_share", c.clicks == 0 ? nlohmann::json(nullptr)
                                       : nlohmann::json(static_cast<double>(c.class1_clicks) /
                                                        static_cast<double>(c.clicks))},
    });
  }
  return {{"conditions", std::move(rows)},
          {"typed", type_counts(typed)},
          {"participants", type_counts(participants)}};
}

std::vector<std::string> ExperimentService::export_log() const {
  std::lock_guard lock(log_mutex_);
  return sink_->lines();
}

std::optional<ExperimentService::ImageInfo> ExperimentService::image(const std::string& handle) const {
  auto it = handle_index_.find(handle);
  if (it == handle_index_.end()) return std::nullopt;
  const auto& [k, i] = it->second;
  const Condition& c = *conditions_[k];
  const int index = c.items[i].item_class == 0 ? static_cast<int>(i) + 1 : static_cast<int>(i - c.spec.m0) + 1;
  return ImageInfo{c.items[i].item_class, index};
}

Ranking ExperimentService::ranking(std::string_view condition) const {
  const auto k = condition_index(condition);
  if (!k) throw ServiceError(ServiceErrorKind::not_found, "unknown condition");
  Condition& c = *conditions_[*k];
  std::lock_guard lock(c.mutex);
  return c.ranking;
}

}  // namespace poprank
