// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "emoalign/errors.hpp"

namespace emoalign::detail {

template <typename Json>
void require_object(const Json& j, std::string_view context) {
  if (!j.is_object()) throw ValidationError(std::string(context) + ": expected a JSON object");
}

/// Throws ValidationError naming the first key of `j` not in `allowed`.
template <typename Json>
void reject_unknown_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view context) {
  require_object(j, context);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ValidationError(std::string(context) + ": unknown key \"" + it.key() + "\"");
    }
  }
}

/// Reads j[key] into `out` when present.
template <typename Json, typename T>
void read_opt(const Json& j, const char* key, T& out, std::string_view context) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string(context) + "." + key + ": " + e.what());
  }
}

}  // namespace emoalign::detail
