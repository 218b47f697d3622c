#pragma once

// Triple datasets: loading, vocabularies, reciprocal-relation augmentation
// and the filter index used by filtered ranking.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace neptune {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct RawTriple {
  std::string head;
  std::string relation;
  std::string tail;

  friend bool operator==(const RawTriple&, const RawTriple&) = default;
};

/// Dense bidirectional label <-> id map. Ids are assigned in insertion order.
class Vocabulary {
 public:
  /// Returns the existing id or appends the label.
  std::uint32_t intern(std::string_view label);
  std::optional<std::uint32_t> find(std::string_view label) const;
  const std::string& label(std::uint32_t id) const;
  std::size_t size() const noexcept { return labels_.size(); }
  std::span<const std::string> labels() const noexcept { return labels_; }

  /// FNV-1a over the labels in id order; identifies a vocabulary in checkpoints.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

enum class Split { train, valid, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

inline constexpr std::string_view kReciprocalSuffix = "_reciprocal";

class KnowledgeGraph {
 public:
  const Vocabulary& entities() const noexcept { return entities_; }
  /// Raw relations followed by their reciprocals (id + raw_relation_count()).
  const Vocabulary& relations() const noexcept { return relations_; }
  std::size_t num_entities() const noexcept { return entities_.size(); }
  std::size_t num_relations() const noexcept { return relations_.size(); }
  std::size_t raw_relation_count() const noexcept { return raw_relations_; }

  /// Augmented split: the raw triples in file order, then their reciprocals
  /// in the same order.
  std::span<const Triple> split(Split s) const noexcept;
  /// The raw (first) half of an augmented split.
  std::span<const Triple> raw_split(Split s) const noexcept;

  /// All known-true tails of (h, r) over every augmented split, ascending.
  std::span<const EntityId> known_tails(EntityId h, RelationId r) const;

  RelationId inverse(RelationId r) const noexcept {
    return r < raw_relations_ ? r + static_cast<RelationId>(raw_relations_)
                              : r - static_cast<RelationId>(raw_relations_);
  }

  friend KnowledgeGraph build_graph(std::span<const RawTriple> train,
                                    std::span<const RawTriple> valid,
                                    std::span<const RawTriple> test);

 private:
  static std::uint64_t key(EntityId h, RelationId r) noexcept {
    return (static_cast<std::uint64_t>(h) << 32) | r;
  }

  Vocabulary entities_;
  Vocabulary relations_;
  std::size_t raw_relations_ = 0;
  std::vector<Triple> splits_[3];
  std::unordered_map<std::uint64_t, std::vector<EntityId>> filter_;
};

/// One tab-separated head/relation/tail triple per line; fields are trimmed
/// and blank lines skipped.
std::vector<RawTriple> load_split(const std::filesystem::path& path);
std::vector<RawTriple> parse_split(std::istream& in, const std::string& source_name);

/// Vocabularies are assigned by first occurrence over train, then valid,
/// then test. Every split is augmented with (t, r_reciprocal, h).
KnowledgeGraph build_graph(std::span<const RawTriple> train, std::span<const RawTriple> valid,
                           std::span<const RawTriple> test);

/// Reads train.txt, valid.txt and test.txt from `dir`.
KnowledgeGraph load_graph(const std::filesystem::path& dir);

/// Known-true tails of (h, r) other than `true_tail`; these are removed
/// from the candidate list when ranking (h, r, true_tail).
std::vector<EntityId> candidate_filter(const KnowledgeGraph& g, EntityId h, RelationId r,
                                       EntityId true_tail);

/// `id<TAB>label` per line.
void write_vocabulary(std::ostream& out, const Vocabulary& vocab);

}  // namespace neptune
