#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "pper/dataio.hpp"
#include "pper/he_backend.hpp"

namespace pper::blocking {

using dataio::Record;
using dataio::Side;

// Classic 4-character soundex code, empty for empty input.
std::string soundex(std::string_view name);

// Hashed blocking keys of one record: exact DOB, soundex(last name), and
// soundex(first name) || birth year. Missing fields contribute no key.
std::set<std::uint64_t> blocking_keys(const Record& r);

// Cleartext chunk layout: records partitioned in input order, per-chunk key
// index built from that chunk's records only. in_chunk_id is the position.
struct ChunkPlan {
  Side side = Side::A;
  int chunk_index = 0;
  std::vector<std::int64_t> local_ids;
  std::map<std::uint64_t, std::vector<int>> key_index;  // key code -> in-chunk ids
};

std::vector<ChunkPlan> plan_chunks(const std::vector<Record>& records, int chunk_size, Side side,
                                   int batch_size);

struct CandidateSet {
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;  // sorted unique
  std::uint64_t total_comparisons = 0;                       // |T| = |d1| * |d2|
};

// Exact candidate pairs T' (pairs sharing at least one blocking key).
CandidateSet cleartext_candidates(const std::vector<Record>& d1, const std::vector<Record>& d2);

// Blocking-based baseline: keys are exchanged in cleartext, candidate pairs
// are formed globally, then partitioned into fixed-size pair chunks.
std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> chunk_by_blocks(
    const std::vector<Record>& d1, const std::vector<Record>& d2, int chunk_size);

// One record inside an encrypted chunk.
struct EncRecord {
  int in_chunk_id = 0;
  he::CipherVec tokens;
  he::CipherVec cardinality;
};

// Encrypted chunk as shipped to the evaluator: token vectors, cardinalities,
// the per-key index of encrypted in-chunk ids, and the packed id ladder used
// by the candidate-matrix update.
struct Chunk {
  Side side = Side::A;
  int chunk_index = 0;
  std::vector<std::int64_t> local_ids;         // owner-side mapping, positional
  std::vector<int> cardinalities;              // owner-side cleartext copy
  std::vector<EncRecord> records;
  std::map<std::uint64_t, std::vector<he::CipherVec>> key_index;
  // Populated only when the non-oblivious row mode is configured; shipping
  // cleartext in-chunk ids leaks block membership to the evaluator.
  std::map<std::uint64_t, std::vector<int>> plain_key_index;
  he::CipherVec all_ids;                       // slot j = encoded id j
};

// How ids and token codes are encoded into slots. The interactive equality
// works on raw integer codes; the non-interactive comparison needs values in
// [1/2, 3/2), so ids are rescaled by the batch size and token codes map into
// [0.5, 1.0) with the two pad codes at 1.125 / 1.375.
struct SlotEncoding {
  bool rescaled = false;
  std::uint32_t token_domain = 65536;
  int batch_size = 128;

  double id_value(int id) const;
  double token_value(std::uint32_t code) const;
};

struct EncodeContext {
  const he::HEBackend* backend = nullptr;
  const he::KeyMaterial* public_key = nullptr;
  SlotEncoding encoding;
  std::uint64_t stream_base = 0;     // substream root for deterministic encryption
  bool include_plain_index = false;  // non-oblivious row mode only
};

Chunk encrypt_chunk(const ChunkPlan& plan, const std::vector<Record>& dataset,
                    const EncodeContext& ctx);

// Manifest of chunk shapes and key codes for the bench harness.
std::string chunk_manifest_json(const std::vector<ChunkPlan>& plans);

}  // namespace pper::blocking
