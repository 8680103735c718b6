#pragma once

// Compiled-KB archive: one versioned JSON document. LEG cells are stored as
// little-endian IEEE-754 doubles in base64 so a load reproduces them bit for
// bit.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "mekb/error.hpp"
#include "mekb/knowledge_base.hpp"
#include "mekb/maxent.hpp"
#include "mekb/parser.hpp"

namespace mekb {

inline constexpr const char* kArchiveFormat = "mekb-archive";
inline constexpr int kArchiveVersion = 1;

namespace detail {

inline constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<std::uint8_t>& in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t n = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += kB64[(n >> 6) & 63];
    out += kB64[n & 63];
  }
  if (i < in.size()) {
    std::uint32_t n = in[i] << 16;
    if (i + 1 < in.size()) n |= in[i + 1] << 8;
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += i + 1 < in.size() ? kB64[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view in) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (in.size() % 4 != 0) throw Error(ErrorKind::kParse, "base64 block has a bad length");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < in.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      if (in[i + k] == '=' && i + 4 == in.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else if ((v[k] = value(in[i + k])) < 0 || pad) {
        throw Error(ErrorKind::kParse, "invalid base64 character");
      }
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 255));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 255));
  }
  return out;
}

inline std::string encode_cells(std::span<const double> cells) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(cells.size() * 8);
  for (double d : cells) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
  }
  return base64_encode(bytes);
}

inline std::vector<double> decode_cells(std::string_view text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % 8 != 0) throw Error(ErrorKind::kParse, "table block is not a whole number of doubles");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= std::uint64_t{bytes[i * 8 + k]} << (8 * k);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace detail

inline nlohmann::json schema_json(const Schema& schema) {
  nlohmann::json vars = nlohmann::json::array();
  for (const Variable& v : schema)
    vars.push_back({{"name", v.name}, {"kind", to_string(v.kind)}, {"values", v.values}});
  return vars;
}

inline nlohmann::json rules_json(const std::vector<Rule>& rules, const Schema& schema) {
  nlohmann::json out = nlohmann::json::array();
  for (const Rule& r : rules)
    out.push_back({{"id", r.id},
                   {"mode", to_string(r.mode)},
                   {"target", r.target},
                   {"premise", to_text(r.premise, schema)},
                   {"conclusion", to_text(r.conclusion, schema)},
                   {"text", format_rule(r, schema)}});
  return out;
}

inline nlohmann::json to_archive_json(const KnowledgeBase& kb) {
  using nlohmann::json;
  const Hypertree& ht = kb.tree();
  json tables = json::array();
  for (std::size_t h = 0; h < kb.dist.size(); ++h)
    tables.push_back({{"hyperedge", h},
                      {"encoding", "f64le-base64"},
                      {"cells", detail::encode_cells(kb.dist.leg(h).cells())}});
  json edges = json::array();
  for (auto [a, b] : ht.edges) edges.push_back({a, b});
  return {{"format", kArchiveFormat},
          {"version", kArchiveVersion},
          {"options",
           {{"tolerance", kb.options.tolerance},
            {"max_sweeps", kb.options.max_sweeps},
            {"heuristic", to_string(kb.options.heuristic)},
            {"plateau_window", kb.options.plateau_window}}},
          {"variables", schema_json(kb.schema)},
          {"rules", rules_json(kb.rules, kb.schema)},
          {"hypertree",
           {{"hyperedges", ht.hyperedges},
            {"edges", edges},
            {"separators", ht.separators},
            {"homes", ht.homes}}},
          {"tables", tables},
          {"report", report_json(kb.report)}};
}

inline std::string save_archive(const KnowledgeBase& kb) { return to_archive_json(kb).dump(1) + "\n"; }

inline KnowledgeBase from_archive_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kArchiveFormat) throw Error(ErrorKind::kParse, "not a knowledge-base archive");
    if (j.at("version") != kArchiveVersion)
      throw Error(ErrorKind::kParse, "unsupported archive version " + j.at("version").dump());
    KnowledgeBase kb;
    const auto& o = j.at("options");
    kb.options.tolerance = o.at("tolerance").get<double>();
    kb.options.max_sweeps = o.at("max_sweeps").get<std::size_t>();
    auto h = parse_heuristic(o.at("heuristic").get<std::string>());
    if (!h) throw Error(ErrorKind::kParse, "unknown heuristic in archive");
    kb.options.heuristic = *h;
    kb.options.plateau_window = o.value("plateau_window", std::size_t{25});
    for (const auto& v : j.at("variables")) {
      const std::string kind = v.at("kind").get<std::string>();
      const std::string name = v.at("name").get<std::string>();
      const auto values = v.at("values").get<std::vector<std::string>>();
      if (kind == "boolean") kb.schema.add(Variable::boolean(name));
      else if (kind == "nominal") kb.schema.add(Variable::nominal(name, values));
      else if (kind == "ordinal") kb.schema.add(Variable::ordinal(name, values));
      else throw Error(ErrorKind::kParse, "unknown variable kind '" + kind + "'");
    }
    for (const auto& r : j.at("rules")) {
      Rule rule;
      rule.id = r.at("id").get<std::string>();
      rule.mode = r.at("mode") == "ground" ? RuleMode::kGround : RuleMode::kFloat;
      rule.target = r.at("target").get<double>();
      rule.premise = parse_fact(r.at("premise").get<std::string>(), kb.schema);
      rule.conclusion = parse_fact(r.at("conclusion").get<std::string>(), kb.schema);
      kb.rules.push_back(std::move(rule));
    }
    Hypertree ht;
    const auto& t = j.at("hypertree");
    ht.hyperedges = t.at("hyperedges").get<std::vector<VarSet>>();
    for (const auto& e : t.at("edges")) ht.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    ht.separators = t.at("separators").get<std::vector<VarSet>>();
    ht.homes = t.at("homes").get<std::vector<std::size_t>>();
    for (const auto& he : ht.hyperedges)
      for (VarId v : he)
        if (v >= kb.schema.size()) throw Error(ErrorKind::kParse, "hyperedge references an unknown variable");
    if (ht.separators.size() != ht.edges.size() || !ht.is_tree() || !ht.running_intersection())
      throw Error(ErrorKind::kParse, "archive hypertree is not a valid junction tree");
    std::vector<Table> legs(ht.size());
    const auto& tables = j.at("tables");
    if (tables.size() != ht.size()) throw Error(ErrorKind::kParse, "one table per hyperedge is required");
    for (const auto& tab : tables) {
      const std::size_t idx = tab.at("hyperedge").get<std::size_t>();
      if (idx >= ht.size()) throw Error(ErrorKind::kParse, "table for an unknown hyperedge");
      if (tab.at("encoding") != "f64le-base64") throw Error(ErrorKind::kParse, "unknown table encoding");
      legs[idx] = Table(Scope(ht.hyperedges[idx], kb.schema), detail::decode_cells(tab.at("cells").get<std::string>()));
    }
    kb.dist = FactoredDistribution(std::make_shared<const Hypertree>(std::move(ht)), std::move(legs));
    kb.report = report_from_json(j.at("report"));
    return kb;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed archive: ") + e.what());
  }
}

inline KnowledgeBase load_archive(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("archive is not JSON: ") + e.what());
  }
  return from_archive_json(j);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "'", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path + "'", path);
  out << content;
  if (!out) throw Error(ErrorKind::kIo, "write to '" + path + "' failed", path);
}

}  // namespace mekb
