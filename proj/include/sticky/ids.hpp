#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>

namespace sticky {

struct NodeId {
  std::string value;

  NodeId() = default;
  explicit NodeId(std::string v) : value(std::move(v)) {}
  auto operator<=>(const NodeId&) const = default;
};

struct SessionId {
  std::string value;

  SessionId() = default;
  explicit SessionId(std::string v) : value(std::move(v)) {}
  auto operator<=>(const SessionId&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const NodeId& id) { return os << id.value; }
inline std::ostream& operator<<(std::ostream& os, const SessionId& id) { return os << id.value; }

}  // namespace sticky

template <>
struct std::hash<sticky::NodeId> {
  std::size_t operator()(const sticky::NodeId& id) const noexcept {
    return std::hash<std::string>{}(id.value);
  }
};

template <>
struct std::hash<sticky::SessionId> {
  std::size_t operator()(const sticky::SessionId& id) const noexcept {
    return std::hash<std::string>{}(id.value);
  }
};
