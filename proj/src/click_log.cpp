#include "poprank/click_log.hpp"

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "poprank/event_log.hpp"

namespace poprank {

namespace {

struct ConditionReplay {
  Ranking ranking;
  bool dynamic;
  std::unordered_map<std::string, ItemId> item_by_id;
  std::vector<std::string> id_of_item;
  std::int64_t last_ts;
};

struct SessionReplay {
  std::string condition;
  std::optional<UserType> type;
  std::optional<Ranking> shown;
  bool clicked = false;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

IngestError::IngestError(std::size_t line, const std::string& what)
    : InvalidInput("line " + std::to_string(line) + ": " + what), line_(line) {}

UserType parse_user_type(std::string_view t) {
  if (t == "type0" || t == "0" || t == "cat") return UserType::type0;
  if (t == "type1" || t == "1" || t == "dog") return UserType::type1;
  if (t == "type2" || t == "2" || t == "neither") return UserType::type2;
  throw InvalidInput("unknown participant type '" + std::string(t) + "'");
}

const char* answer_name(UserType type) {
  switch (type) {
    case UserType::type0: return "cat";
    case UserType::type1: return "dog";
    case UserType::type2: return "neither";
  }
  return "neither";
}

std::vector<ClickRecord> ingest_event_lines(std::span<const std::string> lines) {
  std::map<std::string, ConditionReplay> conditions;
  std::unordered_map<std::string, SessionReplay> sessions;
  std::vector<ClickRecord> records;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty()) continue;
    auto fail = [&](const std::string& what) { return IngestError(line_no, what); };
    Event e;
    try {
      e = parse_event(lines[i]);
    } catch (const InvalidInput& err) {
      throw fail(err.what());
    }

    try {
      if (e.kind == event_kind::init) {
        const auto& items = e.payload.at("items");
        std::vector<ItemClass> classes;
        std::vector<std::string> ids;
        for (const auto& item : items) {
          const int cls = item.at("class").get<int>();
          if (cls != 0 && cls != 1) throw fail("item class must be 0 or 1");
          classes.push_back(static_cast<ItemClass>(cls));
          ids.push_back(item.at("id").get<std::string>());
        }
        ConditionReplay c{Ranking::from_pattern(ClassPattern(classes)), e.payload.at("dynamic").get<bool>(), {},
                          ids, e.ts};
        for (ItemId k = 0; k < ids.size(); ++k) {
          if (!c.item_by_id.emplace(ids[k], k).second) throw fail("duplicate item id '" + ids[k] + "'");
        }
        if (conditions.contains(e.condition)) throw fail("condition " + e.condition + " initialized twice");
        conditions.emplace(e.condition, std::move(c));
        continue;
      }

      auto cit = conditions.find(e.condition);
      if (cit == conditions.end()) throw fail("event for uninitialized condition '" + e.condition + "'");
      ConditionReplay& cond = cit->second;
      if (e.ts <= cond.last_ts) throw fail("timestamp does not increase within condition " + e.condition);
      cond.last_ts = e.ts;

      if (e.kind == event_kind::created) {
        if (!sessions.emplace(e.session, SessionReplay{e.condition, {}, {}, false}).second) {
          throw fail("session '" + e.session + "' created twice");
        }
        continue;
      }
      auto sit = sessions.find(e.session);
      if (sit == sessions.end()) throw fail("event for unknown session '" + e.session + "'");
      SessionReplay& s = sit->second;
      if (s.condition != e.condition) throw fail("session '" + e.session + "' changed condition");

      if (e.kind == event_kind::type) {
        if (s.type) throw fail("type answered twice");
        s.type = parse_user_type(e.payload.at("answer").get<std::string>());
      } else if (e.kind == event_kind::options) {
        if (s.shown) throw fail("options logged twice for session '" + e.session + "'");
        const auto logged = e.payload.at("order").get<std::vector<std::string>>();
        const auto order = cond.ranking.order();
        bool same = logged.size() == order.size();
        for (std::size_t r = 0; same && r < order.size(); ++r) same = logged[r] == cond.id_of_item[order[r]];
        if (!same) throw fail("logged order differs from the replayed ranking");
        s.shown = cond.ranking;
      } else if (e.kind == event_kind::click) {
        if (!s.type) throw fail("click before the type question was answered");
        if (!s.shown) throw fail("click before options were shown");
        if (s.clicked) throw fail("second click in session '" + e.session + "'");
        const auto id = e.payload.at("item").get<std::string>();
        auto it = cond.item_by_id.find(id);
        if (it == cond.item_by_id.end()) throw fail("unknown item '" + id + "'");
        s.clicked = true;
        records.push_back({*s.type, s.shown->pattern(), s.shown->rank_of(it->second),
                           cond.dynamic ? Regime::dynamic : Regime::static_order});
        if (cond.dynamic) {
          cond.ranking.record_click(it->second);
        } else {
          cond.ranking.add_click_frozen(it->second);
        }
      } else if (e.kind == event_kind::rating) {
        if (!s.clicked) throw fail("rating before click");
      } else {
        throw fail("unknown event kind '" + e.kind + "'");
      }
    } catch (const nlohmann::json::exception& err) {
      throw fail(std::string("bad payload: ") + err.what());
    } catch (const IngestError&) {
      throw;
    } catch (const InvalidInput& err) {
      throw fail(err.what());
    }
  }
  return records;
}

std::vector<ClickRecord> ingest_event_log(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return ingest_event_lines(lines);
}

std::vector<ClickRecord> read_click_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::vector<std::string>> header;
  int col_type = -1, col_rank = -1, col_classes = -1, col_regime = -1;
  std::vector<ClickRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_csv(line);
    if (!header) {
      header = fields;
      for (int c = 0; c < static_cast<int>(fields.size()); ++c) {
        if (fields[c] == "participant_type") col_type = c;
        if (fields[c] == "clicked_rank") col_rank = c;
        if (fields[c] == "classes_by_rank") col_classes = c;
        if (fields[c] == "regime") col_regime = c;
      }
      if (col_type < 0 || col_rank < 0 || col_classes < 0) {
        throw IngestError(line_no, "header must name participant_type, clicked_rank and classes_by_rank");
      }
      continue;
    }
    if (fields.size() != header->size()) {
      throw IngestError(line_no, "expected " + std::to_string(header->size()) + " fields, found " +
                                     std::to_string(fields.size()));
    }
    try {
      ClickRecord r{parse_user_type(fields[col_type]), ClassPattern::parse(fields[col_classes]), 0};
      std::size_t used = 0;
      r.clicked_rank = std::stoi(fields[col_rank], &used);
      if (used != fields[col_rank].size()) throw InvalidInput("clicked_rank is not an integer");
      if (col_regime >= 0) {
        const auto& g = fields[col_regime];
        if (g == "dynamic") {
          r.regime = Regime::dynamic;
        } else if (g == "static") {
          r.regime = Regime::static_order;
        } else if (g.empty() || g == "unknown") {
          r.regime = Regime::unknown;
        } else {
          throw InvalidInput("unknown regime '" + g + "'");
        }
      }
      validate(r);
      records.push_back(std::move(r));
    } catch (const IngestError&) {
      throw;
    } catch (const InvalidInput& err) {
      throw IngestError(line_no, err.what());
    } catch (const std::logic_error&) {
      throw IngestError(line_no, "clicked_rank is not an integer");
    }
  }
  if (!header) throw IngestError(line_no, "missing header");
  return records;
}

void write_click_csv(std::ostream& out, std::span<const ClickRecord> records) {
  out << "participant_type,clicked_rank,classes_by_rank,regime\n";
  for (const auto& r : records) {
    out << "type" << static_cast<int>(r.participant_type) << ',' << r.clicked_rank << ','
        << r.classes_by_rank.str() << ',' << to_string(r.regime) << '\n';
  }
}

}  // namespace poprank
