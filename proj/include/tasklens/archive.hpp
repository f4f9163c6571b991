#pragma once

#include <map>
#include <string>
#include <string_view>

namespace tasklens::archive {

// Member path -> file bytes. Ordered so writes are deterministic.
using Members = std::map<std::string, std::string>;

// Reads a gzip-compressed ustar archive held in memory. Directory entries
// are skipped; a leading "./" on member names is dropped.
Members read_tgz(std::string_view bytes);

// Writes members as a gzip-compressed ustar archive with zeroed mtimes and
// ownership, so identical members always yield identical bytes.
std::string write_tgz(const Members& members);

bool looks_like_gzip(std::string_view bytes);

}  // namespace tasklens::archive
