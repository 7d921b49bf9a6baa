#pragma once

// Conversion of raw experiment logs into click records, and the click-record
// CSV format used by `poprank fit`.

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "poprank/error.hpp"
#include "poprank/estimation.hpp"

namespace poprank {

/// Malformed input at a specific 1-based line.
class IngestError : public InvalidInput {
 public:
  IngestError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Accepts type0/type1/type2, 0/1/2 and cat/dog/neither.
UserType parse_user_type(std::string_view text);
const char* answer_name(UserType type);  // cat, dog, neither

/// Replays an event log: rebuilds every condition's ranking from its init
/// layout and the logged clicks, and emits one record per click with the
/// class layout the participant was shown. Orders logged at option time are
/// cross-checked against the replay. Throws IngestError on malformed rows,
/// inconsistent sequences, or timestamps that do not increase within a
/// condition.
std::vector<ClickRecord> ingest_event_log(std::istream& in);
std::vector<ClickRecord> ingest_event_lines(std::span<const std::string> lines);

/// Header: participant_type,clicked_rank,classes_by_rank[,regime]. Lines
/// starting with '#' are ignored.
std::vector<ClickRecord> read_click_csv(std::istream& in);
void write_click_csv(std::ostream& out, std::span<const ClickRecord> records);

}  // namespace poprank
