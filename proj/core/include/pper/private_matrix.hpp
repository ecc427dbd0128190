#pragma once

#include <functional>
#include <vector>

#include "pper/he_backend.hpp"

namespace pper::pmatrix {

// Equality/refresh strategy injected by the protocol layer: eeq is either the
// interactive masked-inverse equality or the non-interactive polynomial one;
// ensure makes room for `n` upcoming multiplications (owner-assisted additive
// refresh in interactive mode, bootstrap in non-interactive mode, identity on
// large budgets).
struct EvalOps {
  std::function<he::CipherVec(const he::CipherVec&, const he::CipherVec&)> eeq;
  std::function<he::CipherVec(const he::CipherVec&, int)> ensure;
};

// M encrypted N-slot 0/1 rows marking candidate pairs within one chunk pair.
struct CandidateMatrix {
  std::vector<he::CipherVec> rows;
  int cols = 0;
};

CandidateMatrix init_matrix(const he::HEBackend& be, const he::KeyMaterial& public_key, int rows,
                            int cols, std::uint64_t stream);

// Fully oblivious masked update over all rows: every row i is OR-combined
// with eeq(i, row_id) * eeq(all_col_ids, col_id). The evaluator never learns
// which row or column was touched. row_probes[i] must hold an encryption of
// the broadcast encoding of row id i.
void oblivious_update(const he::HEBackend& be, CandidateMatrix& mat,
                      const he::CipherVec& enc_row_id, const he::CipherVec& enc_col_id,
                      const he::CipherVec& all_col_ids, const he::PlainVec& all_row_ids,
                      const std::vector<he::CipherVec>& row_probes, const EvalOps& ops,
                      bool parallel_rows = false);

// Cheaper non-oblivious variant: the evaluator indexes the row directly with
// a cleartext row id, leaking block membership of rows.
void plain_row_update(const he::HEBackend& be, CandidateMatrix& mat, int row_id,
                      const he::CipherVec& enc_col_id, const he::CipherVec& all_col_ids,
                      const EvalOps& ops);

// Multiplies each row slot-wise by fresh uniform randoms in [0.5, 2]. Zero
// slots stay ~0; one slots become non-integer randoms, destroying the 0/1
// magnitude structure while keeping candidacy positions recoverable.
void obfuscate(const he::HEBackend& be, CandidateMatrix& mat, const SeedStream& stream,
               const EvalOps& ops);

// All (row, col) positions whose decrypted magnitude exceeds tol.
std::vector<std::pair<int, int>> extract_candidates(const std::vector<he::PlainVec>& rows,
                                                    int cols, double tol = 0.25);

}  // namespace pper::pmatrix
