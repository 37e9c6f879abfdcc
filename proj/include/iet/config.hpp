#pragma once

#include <map>
#include <string>

#include "iet/model.hpp"

namespace iet::net {

// Flat key=value configuration text: one `key = value` pair per line,
// '#' comments, lists comma-separated. Later occurrences of a key win, so
// CLI overrides can simply be appended to the file contents. Unknown keys
// are rejected. See README for the key table.
ModelConfig config_from_kv_text(const std::string& text);

// Parsed key/value view (exposed for the CLI's non-model keys).
std::map<std::string, std::string> parse_kv(const std::string& text);

}  // namespace iet::net
