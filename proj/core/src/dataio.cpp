#include "pper/dataio.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace pper::dataio {

namespace {

// --------------------------------------------------------------------------
// Synthetic name pools: a fixed syllable inventory expanded into deterministic
// pools. Pool membership is independent of the run seed; only selection is
// seeded.
// --------------------------------------------------------------------------

const std::array<const char*, 30> kOnsets = {"b",  "br", "c", "ch", "d",  "dr", "f",  "fr",
                                             "g",  "gr", "h", "j",  "k",  "kl", "l",  "m",
                                             "n",  "p",  "pr", "r", "s",  "sh", "st", "t",
                                             "th", "tr", "v", "w",  "y",  "z"};
const std::array<const char*, 8> kMids = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
const std::array<const char*, 10> kCodas = {"", "n", "r", "s", "l", "m", "t", "th", "nd", "ck"};

std::vector<std::string> make_name_pool(std::size_t n, std::uint64_t pool_seed) {
  std::mt19937_64 rng(pool_seed);
  std::set<std::string> pool;
  while (pool.size() < n) {
    std::string w;
    const int syllables = (rng() % 3 == 0) ? 3 : 2;
    for (int i = 0; i < syllables; ++i) {
      w += kOnsets[rng() % kOnsets.size()];
      w += kMids[rng() % kMids.size()];
    }
    w += kCodas[rng() % kCodas.size()];
    if (w.size() >= 3 && w.size() <= 10) pool.insert(std::move(w));
  }
  return {pool.begin(), pool.end()};
}

const std::vector<std::string>& first_name_pool() {
  static const std::vector<std::string> pool = make_name_pool(600, 0xf17e);
  return pool;
}

const std::vector<std::string>& last_name_pool() {
  static const std::vector<std::string> pool = make_name_pool(900, 0x1a57);
  return pool;
}

constexpr std::array<int, 12> kDaysInMonth = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

bool valid_date(int m, int d, int y) {
  if (y < 1 || m < 1 || m > 12 || d < 1) return false;
  int dmax = kDaysInMonth[static_cast<std::size_t>(m - 1)];
  if (m == 2 && is_leap(y)) dmax = 29;
  return d <= dmax;
}

std::string format_date(int m, int d, int y) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d/%02d/%04d", m, d, y);
  return buf;
}

std::string lower_trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out;
  out.reserve(e - b);
  for (std::size_t i = b; i < e; ++i)
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
  return out;
}

struct Entity {
  std::string ssn;  // canonical nine digits
  int dob_m, dob_d, dob_y;
  std::string first_name, last_name;
};

std::string random_valid_ssn(std::mt19937_64& rng, std::unordered_set<std::string>& used) {
  for (;;) {
    const int area = 1 + static_cast<int>(rng() % 898);  // 001..898, skips 000 and 9xx
    if (area == 666) continue;
    const int group = 1 + static_cast<int>(rng() % 99);
    const int serial = 1 + static_cast<int>(rng() % 9999);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d%02d%04d", area, group, serial);
    std::string ssn(buf);
    if (used.insert(ssn).second) return ssn;
  }
}

std::string apply_typo(const std::string& name, std::mt19937_64& rng) {
  if (name.empty()) return name;
  const std::size_t i = rng() % name.size();
  switch (rng() % 3) {
    case 0:  // deletion
      if (name.size() > 3) return name.substr(0, i) + name.substr(i + 1);
      [[fallthrough]];
    case 1:  // transposition
      if (i + 1 < name.size()) {
        std::string out = name;
        std::swap(out[i], out[i + 1]);
        return out;
      }
      [[fallthrough]];
    default: {  // substitution
      std::string out = name;
      out[i] = static_cast<char>('a' + rng() % 26);
      return out;
    }
  }
}

std::string ssn_raw_form(const std::string& digits, std::mt19937_64& rng, double variant_prob) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) >= variant_prob)
    return digits.substr(0, 3) + "-" + digits.substr(3, 2) + "-" + digits.substr(5, 4);
  switch (rng() % 3) {
    case 0: return digits;
    case 1: return digits.substr(0, 3) + " " + digits.substr(3, 2) + " " + digits.substr(5, 4);
    default: return digits.substr(0, 3) + "-" + digits.substr(3, 2) + "-" + digits.substr(5, 4) + " ";
  }
}

std::string dob_raw_form(int m, int d, int y, std::mt19937_64& rng, double variant_prob) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  char buf[24];
  if (u(rng) >= variant_prob) {
    std::snprintf(buf, sizeof(buf), "%02d/%02d/%04d", m, d, y);
    return buf;
  }
  switch (rng() % 3) {
    case 0: std::snprintf(buf, sizeof(buf), "%d/%d/%04d", m, d, y); break;
    case 1: std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d); break;
    default: std::snprintf(buf, sizeof(buf), "%02d-%02d-%04d", m, d, y); break;
  }
  return buf;
}

// --------------------------------------------------------------------------
// Tokenizer atoms: field-tagged full values plus leading-boundary name
// bigrams, hashed into [0, token_domain).
// --------------------------------------------------------------------------

void collect_atoms(const Record& r, std::vector<std::string>& atoms) {
  if (!r.dob_norm.empty()) atoms.push_back("dob:" + r.dob_norm);
  if (!r.first_name.empty()) {
    atoms.push_back("fn:" + r.first_name);
    const std::string padded = "^" + r.first_name;
    for (std::size_t i = 0; i + 1 < padded.size(); ++i)
      atoms.push_back("fn2:" + padded.substr(i, 2));
  }
  if (!r.last_name.empty()) {
    atoms.push_back("ln:" + r.last_name);
    const std::string padded = "^" + r.last_name;
    for (std::size_t i = 0; i + 1 < padded.size(); ++i)
      atoms.push_back("ln2:" + padded.substr(i, 2));
  }
}

std::uint32_t atom_code(const std::string& atom, std::uint32_t token_domain) {
  return static_cast<std::uint32_t>(fnv1a64(atom) % token_domain);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

void GenConfig::validate() const {
  if (n1 < 0 || n2 < 0) throw ConfigError("dataset sizes must be non-negative");
  if (overlap < 0 || overlap > std::min(n1, n2))
    throw ConfigError("overlap must not exceed min(n1, n2)");
  for (double r : {ssn_present1, ssn_present2, dob_present1, dob_present2, name_present1,
                   name_present2, typo_prob, dob_variant_prob, ssn_variant_prob, duplicate_rate})
    if (r < 0.0 || r > 1.0) throw ConfigError("rates must lie in [0, 1]");
}

bool GroundTruth::contains(std::int64_t id1, std::int64_t id2) const {
  return std::binary_search(pairs.begin(), pairs.end(), std::make_pair(id1, id2));
}

GenOutput generate(const GenConfig& cfg) {
  cfg.validate();
  SeedStream root(cfg.seed);
  auto ent_rng = root.sub("entities").engine();
  auto d1_rng = root.sub("d1").engine();
  auto d2_rng = root.sub("d2").engine();
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const auto& fns = first_name_pool();
  const auto& lns = last_name_pool();
  std::unordered_set<std::string> used_ssn;

  const std::int64_t total_entities = cfg.n1 + cfg.n2 - cfg.overlap;
  std::vector<Entity> entities;
  entities.reserve(static_cast<std::size_t>(total_entities));
  for (std::int64_t e = 0; e < total_entities; ++e) {
    Entity ent;
    ent.ssn = random_valid_ssn(ent_rng, used_ssn);
    ent.dob_y = 1930 + static_cast<int>(ent_rng() % 76);
    ent.dob_m = 1 + static_cast<int>(ent_rng() % 12);
    int dmax = kDaysInMonth[static_cast<std::size_t>(ent.dob_m - 1)];
    if (ent.dob_m == 2 && is_leap(ent.dob_y)) dmax = 29;
    ent.dob_d = 1 + static_cast<int>(ent_rng() % dmax);
    ent.first_name = fns[ent_rng() % fns.size()];
    ent.last_name = lns[ent_rng() % lns.size()];
    entities.push_back(std::move(ent));
  }

  // Entities [0, overlap) appear in both datasets; D1 then takes
  // [overlap, n1), D2 takes [n1, n1 + n2 - overlap).
  auto emit = [&](std::vector<RawRecord>& out, const Entity& ent, std::int64_t local_id,
                  std::mt19937_64& rng, bool is_d2, const char* mrn_prefix) {
    RawRecord r;
    r.local_id = local_id;
    const double ssn_p = is_d2 ? cfg.ssn_present2 : cfg.ssn_present1;
    const double dob_p = is_d2 ? cfg.dob_present2 : cfg.dob_present1;
    const double name_p = is_d2 ? cfg.name_present2 : cfg.name_present1;
    if (u(rng) < ssn_p) r.ssn = ssn_raw_form(ent.ssn, rng, cfg.ssn_variant_prob);
    if (u(rng) < dob_p) r.dob = dob_raw_form(ent.dob_m, ent.dob_d, ent.dob_y, rng, cfg.dob_variant_prob);
    std::string fn = ent.first_name, ln = ent.last_name;
    if (is_d2) {
      if (u(rng) < cfg.typo_prob) fn = apply_typo(fn, rng);
      if (u(rng) < cfg.typo_prob) ln = apply_typo(ln, rng);
    }
    if (u(rng) < name_p) r.first_name = fn;
    if (u(rng) < name_p) r.last_name = ln;
    char mrn[32];
    std::snprintf(mrn, sizeof(mrn), "%s%08lld", mrn_prefix, static_cast<long long>(local_id));
    r.mrn = mrn;
    out.push_back(std::move(r));
  };

  GenOutput out;
  out.d1.reserve(static_cast<std::size_t>(cfg.n1));
  for (std::int64_t i = 0; i < cfg.n1; ++i)
    emit(out.d1, entities[static_cast<std::size_t>(i)], i, d1_rng, false, "A");
  out.d2.reserve(static_cast<std::size_t>(cfg.n2));
  for (std::int64_t j = 0; j < cfg.n2; ++j) {
    const std::int64_t e = j < cfg.overlap ? j : cfg.n1 + (j - cfg.overlap);
    emit(out.d2, entities[static_cast<std::size_t>(e)], j, d2_rng, true, "B");
  }

  // Optional near-duplicates: re-emission with a fresh local id and a format
  // variant; they collapse back in preprocess.
  if (cfg.duplicate_rate > 0.0) {
    auto dup_rng = root.sub("dups").engine();
    auto inject = [&](std::vector<RawRecord>& ds, const char* mrn_prefix) {
      const std::size_t n = ds.size();
      std::vector<RawRecord> dups;
      for (std::size_t i = 0; i < n; ++i) {
        if (u(dup_rng) < cfg.duplicate_rate) {
          RawRecord d = ds[i];
          d.local_id = static_cast<std::int64_t>(n + dups.size());
          char mrn[32];
          std::snprintf(mrn, sizeof(mrn), "%s%08lld", mrn_prefix,
                        static_cast<long long>(d.local_id));
          d.mrn = mrn;
          dups.push_back(std::move(d));
        }
      }
      ds.insert(ds.end(), dups.begin(), dups.end());
    };
    inject(out.d1, "A");
    inject(out.d2, "B");
  }

  out.truth.pairs.reserve(static_cast<std::size_t>(cfg.overlap));
  for (std::int64_t j = 0; j < cfg.overlap; ++j) out.truth.pairs.emplace_back(j, j);
  std::sort(out.truth.pairs.begin(), out.truth.pairs.end());
  return out;
}

std::optional<std::string> normalize_ssn(const std::string& s) {
  std::string digits;
  for (char c : s)
    if (std::isdigit(static_cast<unsigned char>(c))) digits.push_back(c);
  if (digits.size() != 9) return std::nullopt;
  const int area = std::stoi(digits.substr(0, 3));
  const int group = std::stoi(digits.substr(3, 2));
  const int serial = std::stoi(digits.substr(5, 4));
  if (area == 0 || area == 666 || area >= 900) return std::nullopt;
  if (group == 0 || serial == 0) return std::nullopt;
  return digits.substr(0, 3) + "-" + digits.substr(3, 2) + "-" + digits.substr(5, 4);
}

std::optional<std::string> normalize_dob(const std::string& s) {
  std::string t = lower_trim(s);
  if (t.empty()) return std::nullopt;
  int m = 0, d = 0, y = 0;
  char extra = 0;
  if (std::sscanf(t.c_str(), "%d/%d/%d%c", &m, &d, &y, &extra) == 3 ||
      std::sscanf(t.c_str(), "%d-%d-%d%c", &m, &d, &y, &extra) == 3) {
    // YYYY-MM-DD arrives with the year first.
    if (m > 31) {
      std::swap(m, y);   // m=year, d=month, y=day
      std::swap(m, d);   // now m=month, d=day... careful below
    }
  } else {
    return std::nullopt;
  }
  if (!valid_date(m, d, y) || y < 1000 || y > 9999) return std::nullopt;
  return format_date(m, d, y);
}

std::vector<Record> preprocess(const std::vector<RawRecord>& raw) {
  std::vector<Record> out;
  out.reserve(raw.size());
  std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
  for (const auto& rr : raw) {
    Record r;
    r.local_id = rr.local_id;
    if (auto ssn = normalize_ssn(rr.ssn)) r.ssn_norm = *ssn;
    if (auto dob = normalize_dob(rr.dob)) r.dob_norm = *dob;
    r.first_name = lower_trim(rr.first_name);
    r.last_name = lower_trim(rr.last_name);
    r.mrn = lower_trim(rr.mrn);
    auto key = std::make_tuple(r.ssn_norm, r.dob_norm, r.first_name, r.last_name);
    if (!seen.insert(key).second) continue;  // exact duplicate after normalization
    out.push_back(std::move(r));
  }
  return out;
}

std::uint32_t TokenVec::pad_code(Side side, std::uint32_t token_domain) {
  // Pads sit a full domain width apart so the masked-inverse equality's
  // xi/(a-b) residue on pad-vs-pad comparisons stays negligible.
  return side == Side::A ? token_domain : 2 * token_domain;
}

TokenVec tokenize(const Record& r, Side side, std::uint32_t token_domain, int length) {
  std::vector<std::string> atoms;
  collect_atoms(r, atoms);
  std::set<std::uint32_t> codes;
  for (const auto& a : atoms) codes.insert(atom_code(a, token_domain));

  TokenVec tv;
  tv.cardinality = static_cast<int>(std::min<std::size_t>(codes.size(),
                                                          static_cast<std::size_t>(length)));
  tv.truncated = static_cast<int>(codes.size()) - tv.cardinality;
  tv.slots.assign(static_cast<std::size_t>(length), TokenVec::pad_code(side, token_domain));
  int i = 0;
  for (std::uint32_t c : codes) {
    if (i >= length) break;
    tv.slots[static_cast<std::size_t>(i++)] = c;
  }
  return tv;
}

GroundTruth derive_ground_truth(const std::vector<Record>& d1, const std::vector<Record>& d2) {
  std::unordered_map<std::string, std::vector<std::int64_t>> by_ssn;
  for (const auto& r : d1)
    if (!r.ssn_norm.empty()) by_ssn[r.ssn_norm].push_back(r.local_id);
  GroundTruth gt;
  for (const auto& r : d2) {
    if (r.ssn_norm.empty()) continue;
    auto it = by_ssn.find(r.ssn_norm);
    if (it == by_ssn.end()) continue;
    for (std::int64_t id1 : it->second) gt.pairs.emplace_back(id1, r.local_id);
  }
  std::sort(gt.pairs.begin(), gt.pairs.end());
  gt.pairs.erase(std::unique(gt.pairs.begin(), gt.pairs.end()), gt.pairs.end());
  return gt;
}

TokenStats measure_token_collisions(const std::vector<Record>& records,
                                    std::uint32_t token_domain) {
  TokenStats st;
  std::vector<std::string> atoms;
  for (const auto& r : records) {
    atoms.clear();
    collect_atoms(r, atoms);
    std::sort(atoms.begin(), atoms.end());
    atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
    std::unordered_map<std::uint32_t, int> per_code;
    for (const auto& a : atoms) ++per_code[atom_code(a, token_domain)];
    st.token_instances += static_cast<std::int64_t>(atoms.size());
    for (const auto& [code, n] : per_code)
      if (n > 1) st.colliding_instances += n;
  }
  return st;
}

void write_raw_csv(const std::string& path, const std::vector<RawRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataFault("cannot open for writing: " + path);
  f << "local_id,ssn,dob,first_name,last_name,mrn\n";
  for (const auto& r : records)
    f << r.local_id << ',' << csv_escape(r.ssn) << ',' << csv_escape(r.dob) << ','
      << csv_escape(r.first_name) << ',' << csv_escape(r.last_name) << ',' << csv_escape(r.mrn)
      << '\n';
}

std::vector<RawRecord> read_raw_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataFault("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataFault("empty csv: " + path);
  if (split_csv_line(line) !=
      std::vector<std::string>{"local_id", "ssn", "dob", "first_name", "last_name", "mrn"})
    throw DataFault("unexpected csv header in " + path);
  std::vector<RawRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 6) throw DataFault("bad csv row in " + path + ": " + line);
    RawRecord r;
    r.local_id = std::stoll(fields[0]);
    r.ssn = fields[1];
    r.dob = fields[2];
    r.first_name = fields[3];
    r.last_name = fields[4];
    r.mrn = fields[5];
    out.push_back(std::move(r));
  }
  return out;
}

void write_records_csv(const std::string& path, const std::vector<Record>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataFault("cannot open for writing: " + path);
  f << "local_id,ssn,dob,first_name,last_name,mrn\n";
  for (const auto& r : records)
    f << r.local_id << ',' << csv_escape(r.ssn_norm) << ',' << csv_escape(r.dob_norm) << ','
      << csv_escape(r.first_name) << ',' << csv_escape(r.last_name) << ',' << csv_escape(r.mrn)
      << '\n';
}

std::vector<Record> read_records_csv(const std::string& path) {
  auto raw = read_raw_csv(path);
  std::vector<Record> out;
  out.reserve(raw.size());
  for (const auto& rr : raw) {
    Record r;
    r.local_id = rr.local_id;
    r.ssn_norm = rr.ssn;
    r.dob_norm = rr.dob;
    r.first_name = rr.first_name;
    r.last_name = rr.last_name;
    r.mrn = rr.mrn;
    out.push_back(std::move(r));
  }
  return out;
}

void write_truth_csv(const std::string& path, const GroundTruth& truth) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataFault("cannot open for writing: " + path);
  f << "id1,id2\n";
  for (const auto& [a, b] : truth.pairs) f << a << ',' << b << '\n';
}

GroundTruth read_truth_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataFault("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataFault("empty csv: " + path);
  GroundTruth gt;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 2) throw DataFault("bad truth row: " + line);
    gt.pairs.emplace_back(std::stoll(fields[0]), std::stoll(fields[1]));
  }
  std::sort(gt.pairs.begin(), gt.pairs.end());
  gt.pairs.erase(std::unique(gt.pairs.begin(), gt.pairs.end()), gt.pairs.end());
  return gt;
}

}  // namespace pper::dataio
