// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#include "handsight/log.hpp"

#include <cinttypes>
#include <cstdio>
#include <mutex>

namespace handsight::log {

namespace {

int level_rank(std::string_view level) {
  if (level == "warn") return 1;
  if (level == "error") return 2;
  return 0;
}

int g_min_level = 0;
std::mutex g_mutex;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

bool needs_quotes(const std::string& s) {
  if (s.empty()) return true;
  for (char c : s) {
    if (c == ' ' || c == '=' || c == '"') return true;
  }
  return false;
}

}  // namespace

Field::Field(std::string_view k, double v) : key(k), value(format_double(v)) {}
Field::Field(std::string_view k, int64_t v) : key(k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%" PRId64, v);
  value = buf;
}
Field::Field(std::string_view k, uint64_t v) : key(k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%" PRIu64, v);
  value = buf;
}

void set_min_level(std::string_view level) { g_min_level = level_rank(level); }

void emit(std::string_view level, std::string_view event,
          std::initializer_list<Field> fields) {
  if (level_rank(level) < g_min_level) return;
  std::string line;
  line.reserve(64);
  line += "level=";
  line += level;
  line += " event=";
  line += event;
  for (const auto& f : fields) {
    line += ' ';
    line += f.key;
    line += '=';
    if (needs_quotes(f.value)) {
      line += '"';
      for (char c : f.value) {
        if (c == '"') line += '\\';
        line += c;
      }
      line += '"';
    } else {
      line += f.value;
    }
  }
  line += '\n';
  std::lock_guard<std::mutex> lock(g_mutex);
  std::fputs(line.c_str(), stderr);
}

}  // namespace handsight::log
