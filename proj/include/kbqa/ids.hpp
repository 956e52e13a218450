#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>

namespace kbqa {

// Dense integer handles. Each id type is distinct so an entity can never be
// passed where a relation is expected.
struct EntityId {
  std::uint32_t value = 0;
  auto operator<=>(const EntityId&) const = default;
};

struct RelationId {
  std::uint32_t value = 0;
  auto operator<=>(const RelationId&) const = default;
};

struct WordId {
  std::uint32_t value = 0;
  auto operator<=>(const WordId&) const = default;
};

// Pseudo-relations delimiting a relation sequence. They live outside the
// dense range handed out by interning and never appear in a fact.
inline constexpr RelationId kStartRelation{0xFFFFFFFFu};
inline constexpr RelationId kStopRelation{0xFFFFFFFEu};

inline constexpr bool is_pseudo_relation(RelationId r) {
  return r == kStartRelation || r == kStopRelation;
}

}  // namespace kbqa

template <>
struct std::hash<kbqa::EntityId> {
  std::size_t operator()(kbqa::EntityId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
template <>
struct std::hash<kbqa::RelationId> {
  std::size_t operator()(kbqa::RelationId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
template <>
struct std::hash<kbqa::WordId> {
  std::size_t operator()(kbqa::WordId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
