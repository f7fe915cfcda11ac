// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <string>
#include <string_view>

namespace handsight::log {

// Line-oriented key=value records on stderr, machine-parseable.
// Usage: log::info("train_nvs", {{"step", "100"}, {"loss", "0.42"}});
struct Field {
  std::string key;
  std::string value;

  Field(std::string_view k, std::string_view v) : key(k), value(v) {}
  Field(std::string_view k, const char* v) : key(k), value(v) {}
  Field(std::string_view k, double v);
  Field(std::string_view k, int64_t v);
  Field(std::string_view k, uint64_t v);
  Field(std::string_view k, int v) : Field(k, static_cast<int64_t>(v)) {}
};

void emit(std::string_view level, std::string_view event,
          std::initializer_list<Field> fields);

inline void info(std::string_view event, std::initializer_list<Field> fields = {}) {
  emit("info", event, fields);
}
inline void warn(std::string_view event, std::initializer_list<Field> fields = {}) {
  emit("warn", event, fields);
}
inline void error(std::string_view event, std::initializer_list<Field> fields = {}) {
  emit("error", event, fields);
}

// Silences log output below the given level ("info" < "warn" < "error").
void set_min_level(std::string_view level);

}  // namespace handsight::log
