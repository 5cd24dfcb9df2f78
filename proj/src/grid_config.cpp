#include "mtmatch/grid_config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

namespace mtmatch {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

struct Entry {
  std::string key;
  std::vector<std::string> values;
  int line = 0;
};

struct Block {
  std::vector<Entry> entries;
  int line = 0;
};

std::string where(int line) { return "grid config line " + std::to_string(line) + ": "; }

template <class T>
T parse_number(const std::string& text, const Entry& e) {
  T v{};
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ValidationError(where(e.line) + "invalid value '" + text + "' for " + e.key);
  }
  return v;
}

bool parse_bool(const std::string& text, const Entry& e) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ValidationError(where(e.line) + "invalid boolean '" + text + "' for " + e.key);
}

// Returns true when `key` set a base seed.
bool apply(SimConfig& c, const Entry& e, const std::string& v, std::uint64_t& base) {
  const std::string& k = e.key;
  if (k == "f") c.f = parse_covariate_dist(v);
  else if (k == "g") c.g = parse_response_link(v);
  else if (k == "P") c.P = parse_number<int>(v, e);
  else if (k == "b") c.b = parse_number<double>(v, e);
  else if (k == "gamma") c.gamma = parse_number<double>(v, e);
  else if (k == "n1") c.n1 = parse_number<int>(v, e);
  else if (k == "sigma2sq") c.sigma2sq = parse_number<double>(v, e);
  else if (k == "sigma3sq") c.sigma3sq = parse_number<double>(v, e);
  else if (k == "sigma_sq") c.sigma2sq = c.sigma3sq = parse_number<double>(v, e);
  else if (k == "lambda") c.lambda = parse_number<double>(v, e);
  else if (k == "theta") c.theta = parse_number<double>(v, e);
  else if (k == "replications") c.replications = parse_number<int>(v, e);
  else if (k == "m") c.m = parse_number<int>(v, e);
  else if (k == "J") c.J = parse_number<int>(v, e);
  else if (k == "clusters" || k == "K") c.clusters = parse_number<int>(v, e);
  else if (k == "standardize_t") c.standardize_t = parse_bool(v, e);
  else if (k == "redraw_beta") c.redraw_beta = parse_bool(v, e);
  else if (k == "alpha") c.alpha = parse_number<double>(v, e);
  else if (k == "estimators") {
    c.estimators.clear();
    std::istringstream is(v);
    for (std::string name; is >> name;) c.estimators.push_back(name);
  } else if (k == "seed") {
    base = parse_number<std::uint64_t>(v, e);
    return true;
  } else {
    throw ValidationError(where(e.line) + "unknown key '" + k + "'");
  }
  return false;
}

void expand(const Block& block, std::size_t at, SimConfig cfg, std::uint64_t base,
            std::optional<std::uint64_t> seed_override, GridSpec& out) {
  if (at == block.entries.size()) {
    const std::uint64_t b = seed_override.value_or(base);
    cfg.seed = cell_seed(cfg, b);
    try {
      cfg.check();
      out.cells.push_back(cfg);
    } catch (const ValidationError& err) {
      out.skipped.push_back(cfg.canonical() + ": " + err.what());
    }
    return;
  }
  const Entry& e = block.entries[at];
  for (const auto& v : e.values) {
    SimConfig next = cfg;
    std::uint64_t next_base = base;
    try {
      apply(next, e, v, next_base);
    } catch (const ValidationError& err) {
      const std::string msg = err.what();
      throw ValidationError(msg.rfind("grid config", 0) == 0 ? msg : where(e.line) + msg);
    }
    expand(block, at + 1, next, next_base, seed_override, out);
  }
}

}  // namespace

std::uint64_t cell_seed(const SimConfig& cfg, std::uint64_t base) {
  SimConfig c = cfg;
  c.seed = 0;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : c.canonical()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(base, h);
}

GridSpec parse_grid(std::istream& in, std::optional<std::uint64_t> seed_override) {
  Block defaults;
  std::vector<Block> grids;
  Block* current = &defaults;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ValidationError(where(line) + "unterminated section header");
      const std::string name = trim(text.substr(1, text.size() - 2));
      if (name == "defaults") {
        current = &defaults;
      } else if (name == "grid") {
        grids.push_back(Block{{}, line});
        current = &grids.back();
      } else {
        throw ValidationError(where(line) + "unknown section [" + name + "]");
      }
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ValidationError(where(line) + "expected key = value");
    Entry e{trim(text.substr(0, eq)), split(text.substr(eq + 1), ','), line};
    if (e.key.empty()) throw ValidationError(where(line) + "missing key");
    for (const auto& v : e.values) {
      if (v.empty()) throw ValidationError(where(line) + "empty value for " + e.key);
    }
    if (current == &defaults && e.values.size() != 1) {
      throw ValidationError(where(line) + "lists are only allowed inside [grid] sections");
    }
    for (const auto& prev : current->entries) {
      if (prev.key == e.key) throw ValidationError(where(line) + "key '" + e.key + "' repeated in one section");
    }
    current->entries.push_back(std::move(e));
  }
  if (grids.empty()) throw ValidationError("grid config has no [grid] section");

  SimConfig base_cfg;
  std::uint64_t base_seed = 1;
  for (const auto& e : defaults.entries) {
    try {
      apply(base_cfg, e, e.values.front(), base_seed);
    } catch (const ValidationError& err) {
      const std::string msg = err.what();
      throw ValidationError(msg.rfind("grid config", 0) == 0 ? msg : where(e.line) + msg);
    }
  }
  GridSpec out;
  for (const auto& g : grids) expand(g, 0, base_cfg, base_seed, seed_override, out);
  if (out.cells.empty()) throw ValidationError("grid config expands to no valid cells");
  return out;
}

GridSpec read_grid(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open grid config " + path.string());
  return parse_grid(in, seed_override);
}

}  // namespace mtmatch
