#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pper/common.hpp"

namespace pper::dataio {

// Which dataset a record belongs to. Side A is D1, side B is D2; padding
// sentinels are distinct per side so cross-side padding never matches.
enum class Side { A, B };

struct RawRecord {
  std::int64_t local_id = 0;
  std::string ssn;         // empty = missing
  std::string dob;
  std::string first_name;
  std::string last_name;
  std::string mrn;
};

struct Record {
  std::int64_t local_id = 0;
  std::string ssn_norm;    // XXX-XX-XXXX or empty
  std::string dob_norm;    // MM/DD/YYYY or empty
  std::string first_name;  // lowercase, trimmed
  std::string last_name;
  std::string mrn;
};

struct GenConfig {
  std::int64_t n1 = 500;
  std::int64_t n2 = 2000;
  std::int64_t overlap = 200;
  double ssn_present1 = 0.802;   // Presence rates; defaults mirror the source
  double ssn_present2 = 0.953;   // dataset statistics.
  double dob_present1 = 1.0;
  double dob_present2 = 0.9995;
  double name_present1 = 1.0;
  double name_present2 = 0.9999;
  double typo_prob = 0.12;         // per name field on the D2 copy of a shared entity
  double dob_variant_prob = 0.5;   // probability of a non-canonical DOB format
  double ssn_variant_prob = 0.5;   // probability of a non-canonical SSN format
  double duplicate_rate = 0.0;     // fraction of records re-emitted as near-duplicates
  std::uint64_t seed = 42;

  void validate() const;
};

struct GroundTruth {
  // Sorted unique (d1 local_id, d2 local_id) pairs.
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;

  bool contains(std::int64_t id1, std::int64_t id2) const;
};

struct GenOutput {
  std::vector<RawRecord> d1;
  std::vector<RawRecord> d2;
  GroundTruth truth;
};

GenOutput generate(const GenConfig& cfg);

// Digit extraction + XXX-XX-XXXX formatting. Rejects anything that is not
// exactly nine digits or falls in the invalid classes (area 000/666/9xx,
// group 00, serial 0000).
std::optional<std::string> normalize_ssn(const std::string& s);

// Accepts M/D/YYYY, MM/DD/YYYY, YYYY-MM-DD and MM-DD-YYYY; zero-pads and
// validates the calendar date.
std::optional<std::string> normalize_dob(const std::string& s);

// Normalizes all fields and collapses exact duplicates (all normalized
// identifier fields equal). Idempotent.
std::vector<Record> preprocess(const std::vector<RawRecord>& raw);

// Fixed-length token representation of one record. Real token codes live in
// [0, token_domain); the per-side pad codes are reserved values outside the
// hash range (token_domain for side A, 2*token_domain for side B).
struct TokenVec {
  std::vector<std::uint32_t> slots;  // length L, padded
  int cardinality = 0;
  int truncated = 0;  // tokens dropped because the record had more than L

  static std::uint32_t pad_code(Side side, std::uint32_t token_domain);
};

TokenVec tokenize(const Record& r, Side side, std::uint32_t token_domain, int length);

// SSN-equality pairs; in synthetic mode the generator identity is the
// authoritative truth and this serves as a consistency check.
GroundTruth derive_ground_truth(const std::vector<Record>& d1, const std::vector<Record>& d2);

struct TokenStats {
  std::int64_t token_instances = 0;
  std::int64_t colliding_instances = 0;  // distinct atoms sharing a code within one record
  std::int64_t truncated_records = 0;
  double collision_rate() const {
    return token_instances ? static_cast<double>(colliding_instances) /
                                 static_cast<double>(token_instances)
                           : 0.0;
  }
};

TokenStats measure_token_collisions(const std::vector<Record>& records,
                                    std::uint32_t token_domain);

// CSV I/O. Header: local_id,ssn,dob,first_name,last_name,mrn. Empty = missing.
void write_raw_csv(const std::string& path, const std::vector<RawRecord>& records);
std::vector<RawRecord> read_raw_csv(const std::string& path);
void write_records_csv(const std::string& path, const std::vector<Record>& records);
std::vector<Record> read_records_csv(const std::string& path);
void write_truth_csv(const std::string& path, const GroundTruth& truth);
GroundTruth read_truth_csv(const std::string& path);

}  // namespace pper::dataio
