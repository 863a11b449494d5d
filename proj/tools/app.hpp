#pragma once

#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace eic::cli {

/// Resolved settings: dotted key -> value text.
using Settings = std::map<std::string, std::string>;

/// Flat `key = value` lines; `[section]` prefixes following keys with "section.".
/// `#` and `;` start comments. Unknown keys and malformed lines are reported together.
Settings parse_config(std::string_view text);
/// Inverse of parse_config, one key per line in key order.
std::string render_config(const Settings& s);

/// Keys a command reads, with their defaults.
Settings defaults_for(std::string_view command);
/// Hash of the settings that define a run; names its directory.
std::string config_hash(const Settings& s);

/// Runs the command line (without the program name) and returns the exit code:
/// 0 success, 1 internal, 2 config, 3 data, 4 model, 5 numeric, 6 transport.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eic::cli
