#pragma once

// Item catalogs, interaction logs, the per-sequence train/test split, and a
// seeded synthetic generator with known latent preferences.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ialp/common.hpp"

namespace ialp {

struct ItemRecord {
  ItemId id = 0;
  std::vector<std::pair<std::string, std::string>> attributes;

  const std::string* attribute(std::string_view name) const {
    for (const auto& [k, v] : attributes) {
      if (k == name) return &v;
    }
    return nullptr;
  }
};

struct ItemCatalog {
  std::vector<std::string> schema;  // attribute names, header order
  std::vector<ItemRecord> items;    // items[i].id == i

  std::size_t num_items() const { return items.size(); }
  const ItemRecord& at(ItemId id) const {
    if (id >= items.size()) throw DataError("unknown item id " + std::to_string(id));
    return items[id];
  }
};

struct UserSequence {
  UserId user_id = 0;
  ItemSequence items;
  std::vector<std::int64_t> timestamps;

  bool operator==(const UserSequence&) const = default;
};

struct InteractionLog {
  std::vector<UserSequence> sequences;
  std::size_t dropped_short = 0;  // sequences with < 2 items skipped at load

  std::size_t interaction_count() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.items.size();
    return n;
  }
};

struct SyntheticGroundTruth {
  std::size_t latent_dim = 0;
  std::vector<std::vector<Real>> user_latents;  // indexed by user id
  std::vector<std::vector<Real>> item_latents;  // indexed by item id

  Real affinity(UserId user, ItemId item) const {
    const auto& u = user_latents.at(static_cast<std::size_t>(user));
    const auto& v = item_latents.at(item);
    Real acc = 0.0;
    for (std::size_t c = 0; c < latent_dim; ++c) acc += u[c] * v[c];
    return acc;
  }
};

namespace csv {

// Splits one line on commas; double-quoted fields may contain commas and
// "" escapes.
inline std::vector<std::string> split_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool field_was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      if (!cur.empty() || field_was_quoted) {
        throw DataError("line " + std::to_string(line_no) + ": stray quote");
      }
      quoted = true;
      field_was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      field_was_quoted = false;
    } else {
      if (field_was_quoted) {
        throw DataError("line " + std::to_string(line_no) + ": text after closing quote");
      }
      cur.push_back(ch);
    }
  }
  if (quoted) throw DataError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file '" + path.string() + "'");
  return in;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace csv

inline ItemCatalog parse_catalog(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("line 1: missing header");
  csv::strip_cr(line);
  auto header = csv::split_line(line, 1);
  if (header.size() < 2 || header[0] != "id") {
    throw DataError("line 1: header must be 'id,<attr1>,...'");
  }
  ItemCatalog cat;
  cat.schema.assign(header.begin() + 1, header.end());

  std::map<ItemId, std::pair<std::size_t, ItemRecord>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    csv::strip_cr(line);
    if (line.empty()) continue;
    auto fields = csv::split_line(line, line_no);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    ItemId id = 0;
    if (!csv::parse_int(fields[0], id) || id == kPaddingItem) {
      throw DataError("line " + std::to_string(line_no) + ": malformed id '" + fields[0] + "'");
    }
    ItemRecord rec;
    rec.id = id;
    bool any_text = false;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      any_text = any_text || !fields[c].empty();
      rec.attributes.emplace_back(cat.schema[c - 1], fields[c]);
    }
    if (!any_text) {
      throw DataError("line " + std::to_string(line_no) + ": item has no attribute text");
    }
    auto [it, inserted] = rows.emplace(id, std::make_pair(line_no, std::move(rec)));
    if (!inserted) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate id " +
                      std::to_string(id) + " (first seen on line " +
                      std::to_string(it->second.first) + ")");
    }
  }
  ItemId expected = 0;
  for (auto& [id, entry] : rows) {
    if (id != expected) throw DataError("id gap at " + std::to_string(expected));
    cat.items.push_back(std::move(entry.second));
    ++expected;
  }
  if (cat.items.size() < 2) throw DataError("catalog needs at least 2 items");
  return cat;
}

inline ItemCatalog load_catalog(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return parse_catalog(in);
}

inline void write_catalog(const ItemCatalog& cat, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "id";
  for (const auto& name : cat.schema) out << ',' << csv::escape(name);
  out << '\n';
  for (const auto& item : cat.items) {
    out << item.id;
    for (const auto& [_, value] : item.attributes) out << ',' << csv::escape(value);
    out << '\n';
  }
}

inline InteractionLog parse_interactions(std::istream& in, std::size_t num_items) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("line 1: missing header");
  csv::strip_cr(line);
  auto header = csv::split_line(line, 1);
  if (header != std::vector<std::string>{"user_id", "item_id", "timestamp"}) {
    throw DataError("line 1: header must be 'user_id,item_id,timestamp'");
  }
  struct Row {
    std::int64_t ts;
    std::size_t order;
    ItemId item;
  };
  std::map<UserId, std::vector<Row>> by_user;
  std::size_t line_no = 1;
  std::size_t order = 0;
  while (std::getline(in, line)) {
    ++line_no;
    csv::strip_cr(line);
    if (line.empty()) continue;
    auto f = csv::split_line(line, line_no);
    const std::string where = "line " + std::to_string(line_no);
    if (f.size() != 3) throw DataError(where + ": expected 3 fields");
    UserId user = 0;
    ItemId item = 0;
    std::int64_t ts = 0;
    if (!csv::parse_int(f[0], user)) throw DataError(where + ": malformed user id '" + f[0] + "'");
    if (!csv::parse_int(f[1], item)) throw DataError(where + ": malformed item id '" + f[1] + "'");
    if (item >= num_items) {
      throw DataError(where + ": unknown item id " + std::to_string(item));
    }
    if (!csv::parse_int(f[2], ts)) {
      throw DataError(where + ": unparseable timestamp '" + f[2] + "'");
    }
    by_user[user].push_back({ts, order++, item});
  }
  InteractionLog log;
  for (auto& [user, rows] : by_user) {
    if (rows.size() < 2) {
      ++log.dropped_short;
      continue;
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.ts < b.ts; });
    UserSequence seq;
    seq.user_id = user;
    for (const auto& r : rows) {
      seq.items.push_back(r.item);
      seq.timestamps.push_back(r.ts);
    }
    log.sequences.push_back(std::move(seq));
  }
  return log;
}

inline InteractionLog load_interactions(const std::filesystem::path& path,
                                        const ItemCatalog& catalog) {
  auto in = csv::open_input(path);
  return parse_interactions(in, catalog.num_items());
}

inline void write_interactions(const InteractionLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "user_id,item_id,timestamp\n";
  for (const auto& s : log.sequences) {
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      out << s.user_id << ',' << s.items[i] << ',' << s.timestamps[i] << '\n';
    }
  }
}

// Partitions whole user sequences: train gets floor(fraction * n) of a
// seeded shuffle; both halves keep the input's relative order.
inline std::pair<InteractionLog, InteractionLog> split_log(const InteractionLog& log,
                                                           Real train_fraction,
                                                           std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DataError("train fraction must lie in (0, 1)");
  }
  if (log.sequences.empty()) throw DataError("cannot split an empty log");
  const std::size_t n = log.sequences.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<Real>(n)));
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;
  InteractionLog train, test;
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? train : test).sequences.push_back(log.sequences[i]);
  }
  return {std::move(train), std::move(test)};
}

struct SyntheticDataset {
  ItemCatalog catalog;
  InteractionLog log;
  SyntheticGroundTruth truth;
};

inline const std::vector<std::string>& synthetic_genres() {
  static const std::vector<std::string> names = {"ambient", "blues",   "classical", "disco",
                                                 "electro", "folk",    "garage",    "house",
                                                 "indie",   "jazz",    "krautrock", "lofi"};
  return names;
}

// Latents ~ N(0,1). Each user's sequence lists the seq_len items with the
// highest dot(user, item) + noise * N(0,1), in descending order.
inline SyntheticDataset generate_synthetic(std::size_t num_users, std::size_t num_items,
                                           std::size_t seq_len, std::size_t d_lat,
                                           std::uint64_t seed, Real noise = 0.1) {
  if (num_users < 2 || num_items < 2 || seq_len < 2 || d_lat < 2) {
    throw DataError("synthetic generator needs all counts >= 2");
  }
  if (seq_len > num_items) throw DataError("seq_len cannot exceed num_items");
  SyntheticDataset ds;
  Rng rng(seed);
  std::normal_distribution<Real> normal(0.0, 1.0);
  ds.truth.latent_dim = d_lat;
  ds.truth.user_latents.assign(num_users, std::vector<Real>(d_lat));
  ds.truth.item_latents.assign(num_items, std::vector<Real>(d_lat));
  for (auto& u : ds.truth.user_latents) {
    for (auto& v : u) v = normal(rng);
  }
  for (auto& it : ds.truth.item_latents) {
    for (auto& v : it) v = normal(rng);
  }

  const auto& genres = synthetic_genres();
  ds.catalog.schema = {"title", "genre", "artist"};
  for (std::size_t i = 0; i < num_items; ++i) {
    const auto& lat = ds.truth.item_latents[i];
    const std::size_t top = static_cast<std::size_t>(
        std::distance(lat.begin(), std::max_element(lat.begin(), lat.end())));
    const std::size_t low = static_cast<std::size_t>(
        std::distance(lat.begin(), std::min_element(lat.begin(), lat.end())));
    ItemRecord rec;
    rec.id = static_cast<ItemId>(i);
    rec.attributes = {{"title", "Track " + std::to_string(i)},
                      {"genre", genres[(top * d_lat + low) % genres.size()]},
                      {"artist", "Artist " + std::to_string(top)}};
    ds.catalog.items.push_back(std::move(rec));
  }

  for (std::size_t u = 0; u < num_users; ++u) {
    std::vector<std::pair<Real, ItemId>> scored(num_items);
    for (std::size_t i = 0; i < num_items; ++i) {
      const Real jitter = noise * normal(rng);
      scored[i] = {ds.truth.affinity(static_cast<UserId>(u), static_cast<ItemId>(i)) + jitter,
                   static_cast<ItemId>(i)};
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(seq_len),
                      scored.end(), [](const auto& a, const auto& b) {
                        return a.first != b.first ? a.first > b.first : a.second < b.second;
                      });
    UserSequence seq;
    seq.user_id = static_cast<UserId>(u);
    for (std::size_t t = 0; t < seq_len; ++t) {
      seq.items.push_back(scored[t].second);
      seq.timestamps.push_back(static_cast<std::int64_t>(t));
    }
    ds.log.sequences.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace ialp
