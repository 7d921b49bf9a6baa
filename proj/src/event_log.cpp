#include "poprank/event_log.hpp"

#include "poprank/error.hpp"

namespace poprank {

std::string to_line(const Event& e) {
  nlohmann::json j = {
      {"ts", e.ts}, {"session", e.session}, {"condition", e.condition}, {"kind", e.kind}, {"payload", e.payload}};
  return j.dump();
}

Event parse_event(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& err) {
    throw InvalidInput(std::string("malformed JSON: ") + err.what());
  }
  if (!j.is_object()) throw InvalidInput("event is not a JSON object");
  auto need = [&](const char* key) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end()) throw InvalidInput(std::string("event is missing '") + key + "'");
    return *it;
  };
  Event e;
  const auto& ts = need("ts");
  if (!ts.is_number_integer()) throw InvalidInput("event 'ts' must be an integer");
  e.ts = ts.get<std::int64_t>();
  for (auto [key, field] : {std::pair{"session", &e.session}, {"condition", &e.condition}, {"kind", &e.kind}}) {
    const auto& v = need(key);
    if (!v.is_string()) throw InvalidInput(std::string("event '") + key + "' must be a string");
    *field = v.get<std::string>();
  }
  e.payload = need("payload");
  if (!e.payload.is_object()) throw InvalidInput("event 'payload' must be an object");
  return e;
}

void MemoryEventSink::append(const std::string& line) {
  std::lock_guard lock(mutex_);
  lines_.push_back(line);
}

std::vector<std::string> MemoryEventSink::lines() const {
  std::lock_guard lock(mutex_);
  return lines_;
}

FileEventSink::FileEventSink(const std::filesystem::path& dir) : path_(dir / "events.jsonl") {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw StorageError("cannot create data directory " + dir.string() + ": " + ec.message());
  out_.open(path_, std::ios::app);
  if (!out_) throw StorageError("cannot open " + path_.string() + " for appending");
}

void FileEventSink::append(const std::string& line) {
  std::lock_guard lock(mutex_);
  out_ << line << '\n';
  out_.flush();
  if (!out_) throw StorageError("write to " + path_.string() + " failed");
}

std::vector<std::string> FileEventSink::lines() const {
  std::lock_guard lock(mutex_);
  std::ifstream in(path_);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace poprank
