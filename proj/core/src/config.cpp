#include "pper/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace pper::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

using Section = std::map<std::string, std::string>;

std::map<std::string, Section> parse_ini(const std::string& text) {
  std::map<std::string, Section> sections;
  std::string current = "";
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("malformed section at line " + std::to_string(lineno));
      current = trim(t.substr(1, t.size() - 2));
      sections.try_emplace(current);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value at line " + std::to_string(lineno) + ": " + t);
    if (current.empty())
      throw ConfigError("key outside any section at line " + std::to_string(lineno));
    sections[current][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return sections;
}

class SectionReader {
 public:
  SectionReader(const std::string& name, const Section* section)
      : name_(name), section_(section) {}

  template <typename T, typename Parse>
  void read(const std::string& key, T& out, Parse parse) {
    if (!section_) return;
    auto it = section_->find(key);
    if (it == section_->end()) return;
    used_.push_back(key);
    try {
      out = parse(it->second);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("bad value for " + name_ + "." + key + ": " + it->second);
    }
  }

  void read_int(const std::string& key, int& out) {
    read(key, out, [](const std::string& v) { return std::stoi(v); });
  }
  void read_i64(const std::string& key, std::int64_t& out) {
    read(key, out, [](const std::string& v) { return std::stoll(v); });
  }
  void read_u64(const std::string& key, std::uint64_t& out) {
    read(key, out, [](const std::string& v) { return std::stoull(v); });
  }
  void read_u32(const std::string& key, std::uint32_t& out) {
    read(key, out,
         [](const std::string& v) { return static_cast<std::uint32_t>(std::stoul(v)); });
  }
  void read_double(const std::string& key, double& out) {
    read(key, out, [](const std::string& v) { return std::stod(v); });
  }
  void read_string(const std::string& key, std::string& out) {
    read(key, out, [](const std::string& v) { return v; });
  }
  void read_bool(const std::string& key, bool& out) {
    read(key, out, [](const std::string& v) {
      if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "off" || v == "no") return false;
      throw ConfigError("not a boolean: " + v);
    });
  }

  void check_all_used() const {
    if (!section_) return;
    for (const auto& [key, value] : *section_)
      if (std::find(used_.begin(), used_.end(), key) == used_.end())
        throw ConfigError("unknown key " + name_ + "." + key);
  }

 private:
  std::string name_;
  const Section* section_;
  std::vector<std::string> used_;
};

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    const std::string item = trim(cur);
    if (!item.empty()) out.push_back(item);
    cur.clear();
  };
  for (char c : v) {
    if (c == ',')
      flush();
    else
      cur.push_back(c);
  }
  flush();
  return out;
}

}  // namespace

void AppConfig::validate() const {
  he_params.validate();
  comp_params.validate();
  gen.validate();
  pipeline.validate(he_params, comp_params);
  for (int cs : bench_chunk_sizes)
    if (cs < 1 || cs > he_params.batch_size)
      throw ConfigError("bench chunk size outside [1, batch_size]: " + std::to_string(cs));
}

AppConfig AppConfig::from_ini_text(const std::string& text) {
  const auto sections = parse_ini(text);
  for (const auto& [name, _] : sections)
    if (name != "he" && name != "approx" && name != "pipeline" && name != "gen" &&
        name != "paths" && name != "bench" && !name.empty())
      throw ConfigError("unknown config section [" + name + "]");

  auto find = [&](const char* name) -> const Section* {
    auto it = sections.find(name);
    return it == sections.end() ? nullptr : &it->second;
  };

  AppConfig cfg;

  SectionReader he_r("he", find("he"));
  he_r.read_int("multiplicative_depth", cfg.he_params.multiplicative_depth);
  he_r.read_int("scale_factor_bits", cfg.he_params.scale_factor_bits);
  he_r.read_int("batch_size", cfg.he_params.batch_size);
  he_r.read_int("num_large_digits", cfg.he_params.num_large_digits);
  he_r.read_int("first_mod_size", cfg.he_params.first_mod_size);
  he_r.read_string("security_level", cfg.he_params.security_level_label);
  he_r.read_bool("bootstrapping", cfg.he_params.bootstrapping_enabled);
  he_r.read_int("refresh_depth", cfg.he_params.refresh_depth);
  he_r.read_double("noise_sigma", cfg.he_params.noise_sigma);
  he_r.read_string("interactive_bootstrap_compression",
                   cfg.he_params.interactive_bootstrap_compression);
  he_r.check_all_used();

  SectionReader ap_r("approx", find("approx"));
  ap_r.read_int("m", cfg.comp_params.m);
  ap_r.read_int("d_prime", cfg.comp_params.d_prime);
  ap_r.read_int("d", cfg.comp_params.d);
  ap_r.read_int("t", cfg.comp_params.t);
  ap_r.check_all_used();

  SectionReader pl_r("pipeline", find("pipeline"));
  pl_r.read("variant", cfg.pipeline.variant,
            [](const std::string& v) { return protocol::variant_from_string(v); });
  pl_r.read("eeq_mode", cfg.pipeline.eeq_mode,
            [](const std::string& v) { return protocol::eeq_mode_from_string(v); });
  pl_r.read("backend", cfg.pipeline.backend,
            [](const std::string& v) { return he::backend_from_string(v); });
  pl_r.read_int("chunk_size", cfg.pipeline.chunk_size);
  pl_r.read_double("threshold", cfg.pipeline.threshold);
  pl_r.read_bool("parallel", cfg.pipeline.parallel);
  pl_r.read_int("workers", cfg.pipeline.workers);
  pl_r.read_bool("oblivious_rows", cfg.pipeline.oblivious_rows);
  pl_r.read_double("xi", cfg.pipeline.xi);
  pl_r.read_u32("token_domain_interactive", cfg.pipeline.token_domain_interactive);
  pl_r.read_u32("token_domain_ni", cfg.pipeline.token_domain_ni);
  pl_r.read_double("extract_tol", cfg.pipeline.extract_tol);
  pl_r.read_u64("seed", cfg.pipeline.seed);
  pl_r.check_all_used();

  SectionReader gen_r("gen", find("gen"));
  bool gen_seed_set = false;
  gen_r.read_i64("n1", cfg.gen.n1);
  gen_r.read_i64("n2", cfg.gen.n2);
  gen_r.read_i64("overlap", cfg.gen.overlap);
  gen_r.read_double("ssn_present1", cfg.gen.ssn_present1);
  gen_r.read_double("ssn_present2", cfg.gen.ssn_present2);
  gen_r.read_double("dob_present1", cfg.gen.dob_present1);
  gen_r.read_double("dob_present2", cfg.gen.dob_present2);
  gen_r.read_double("name_present1", cfg.gen.name_present1);
  gen_r.read_double("name_present2", cfg.gen.name_present2);
  gen_r.read_double("typo_prob", cfg.gen.typo_prob);
  gen_r.read_double("dob_variant_prob", cfg.gen.dob_variant_prob);
  gen_r.read_double("ssn_variant_prob", cfg.gen.ssn_variant_prob);
  gen_r.read_double("duplicate_rate", cfg.gen.duplicate_rate);
  gen_r.read("seed", cfg.gen.seed, [&](const std::string& v) {
    gen_seed_set = true;
    return std::stoull(v);
  });
  gen_r.check_all_used();
  if (!gen_seed_set) cfg.gen.seed = SeedStream(cfg.pipeline.seed).sub("gen").value();

  SectionReader pa_r("paths", find("paths"));
  pa_r.read_string("out_dir", cfg.out_dir);
  pa_r.read_string("d1", cfg.d1_path);
  pa_r.read_string("d2", cfg.d2_path);
  pa_r.read_string("truth", cfg.truth_path);
  pa_r.check_all_used();

  SectionReader be_r("bench", find("bench"));
  be_r.read("chunk_sizes", cfg.bench_chunk_sizes, [](const std::string& v) {
    std::vector<int> out;
    for (const auto& item : split_list(v)) out.push_back(std::stoi(item));
    if (out.empty()) throw ConfigError("empty chunk size list");
    return out;
  });
  be_r.read("variants", cfg.bench_variants, [](const std::string& v) {
    std::vector<protocol::Variant> out;
    for (const auto& item : split_list(v)) out.push_back(protocol::variant_from_string(item));
    return out;
  });
  be_r.read("eeq_modes", cfg.bench_eeq_modes, [](const std::string& v) {
    std::vector<protocol::EeqMode> out;
    for (const auto& item : split_list(v)) out.push_back(protocol::eeq_mode_from_string(item));
    return out;
  });
  be_r.read("parallel", cfg.bench_parallel, [](const std::string& v) {
    std::vector<bool> out;
    for (const auto& item : split_list(v)) {
      if (item == "on" || item == "true" || item == "1") out.push_back(true);
      else if (item == "off" || item == "false" || item == "0") out.push_back(false);
      else throw ConfigError("bad parallel list entry: " + item);
    }
    return out;
  });
  be_r.check_all_used();

  return cfg;
}

AppConfig AppConfig::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return from_ini_text(buf.str());
}

}  // namespace pper::config
