#include "neptune/kg.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "neptune/errors.hpp"

namespace neptune {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

std::uint32_t Vocabulary::intern(std::string_view label) {
  auto [it, inserted] =
      ids_.try_emplace(std::string(label), static_cast<std::uint32_t>(labels_.size()));
  if (inserted) labels_.emplace_back(label);
  return it->second;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view label) const {
  auto it = ids_.find(std::string(label));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::label(std::uint32_t id) const {
  if (id >= labels_.size()) {
    throw ContractViolation("vocabulary id " + std::to_string(id) + " out of range (size " +
                            std::to_string(labels_.size()) + ")");
  }
  return labels_[id];
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : labels_) {
    for (unsigned char c : l) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::valid:
      return "valid";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw ContractViolation("unknown split '" + std::string(name) + "'");
}

std::span<const Triple> KnowledgeGraph::split(Split s) const noexcept {
  return splits_[static_cast<int>(s)];
}

std::span<const Triple> KnowledgeGraph::raw_split(Split s) const noexcept {
  const auto all = split(s);
  return all.first(all.size() / 2);
}

std::span<const EntityId> KnowledgeGraph::known_tails(EntityId h, RelationId r) const {
  auto it = filter_.find(key(h, r));
  if (it == filter_.end()) return {};
  return it->second;
}

std::vector<RawTriple> parse_split(std::istream& in, const std::string& source_name) {
  std::vector<RawTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view l = trim(line);
    if (l.empty()) continue;
    std::string_view fields[3];
    std::size_t n = 0;
    std::size_t pos = 0;
    while (true) {
      const auto tab = l.find('\t', pos);
      const auto piece = l.substr(pos, tab == std::string_view::npos ? l.npos : tab - pos);
      if (n < 3) fields[n] = trim(piece);
      ++n;
      if (tab == std::string_view::npos) break;
      pos = tab + 1;
    }
    if (n != 3) {
      throw ParseError(source_name, lineno,
                       "expected 3 tab-separated fields, found " + std::to_string(n));
    }
    for (const auto& f : fields) {
      if (f.empty()) throw ParseError(source_name, lineno, "empty field");
    }
    out.push_back({std::string(fields[0]), std::string(fields[1]), std::string(fields[2])});
  }
  if (in.bad()) throw IoError("read failure on " + source_name);
  return out;
}

std::vector<RawTriple> load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_split(in, path.string());
}

KnowledgeGraph build_graph(std::span<const RawTriple> train, std::span<const RawTriple> valid,
                           std::span<const RawTriple> test) {
  KnowledgeGraph g;
  const std::span<const RawTriple> raw[3] = {train, valid, test};

  for (const auto& split : raw) {
    for (const auto& t : split) {
      g.entities_.intern(t.head);
      g.relations_.intern(t.relation);
      g.entities_.intern(t.tail);
    }
  }
  g.raw_relations_ = g.relations_.size();
  for (std::size_t r = 0; r < g.raw_relations_; ++r) {
    const std::string inv = g.relations_.label(static_cast<RelationId>(r)) +
                            std::string(kReciprocalSuffix);
    if (g.relations_.find(inv)) {
      throw ContractViolation("relation label '" + inv +
                              "' collides with a generated reciprocal relation");
    }
    g.relations_.intern(inv);
  }

  for (int s = 0; s < 3; ++s) {
    auto& dst = g.splits_[s];
    dst.reserve(raw[s].size() * 2);
    for (const auto& t : raw[s]) {
      dst.push_back({*g.entities_.find(t.head), *g.relations_.find(t.relation),
                     *g.entities_.find(t.tail)});
    }
    const std::size_t n = dst.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Triple t = dst[i];
      dst.push_back({t.tail, g.inverse(t.relation), t.head});
    }
    for (const auto& t : dst) g.filter_[KnowledgeGraph::key(t.head, t.relation)].push_back(t.tail);
  }
  for (auto& [k, tails] : g.filter_) {
    std::sort(tails.begin(), tails.end());
    tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
  }
  return g;
}

KnowledgeGraph load_graph(const std::filesystem::path& dir) {
  const auto train = load_split(dir / "train.txt");
  const auto valid = load_split(dir / "valid.txt");
  const auto test = load_split(dir / "test.txt");
  return build_graph(train, valid, test);
}

std::vector<EntityId> candidate_filter(const KnowledgeGraph& g, EntityId h, RelationId r,
                                       EntityId true_tail) {
  const auto tails = g.known_tails(h, r);
  std::vector<EntityId> out;
  out.reserve(tails.size());
  for (EntityId t : tails) {
    if (t != true_tail) out.push_back(t);
  }
  return out;
}

void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << i << '\t' << vocab.labels()[i] << '\n';
  }
}

}  // namespace neptune
