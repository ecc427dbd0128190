#include "pper/private_matrix.hpp"

#include <cmath>
#include <thread>

namespace pper::pmatrix {

namespace {

// OR(a, b) = a + b - a*b, slot-wise; keeps entries in {0,1}.
he::CipherVec or_combine(const he::HEBackend& be, const he::CipherVec& a, const he::CipherVec& b,
                         const EvalOps& ops) {
  he::CipherVec a2 = ops.ensure(a, 1);
  he::CipherVec b2 = ops.ensure(b, 1);
  he::CipherVec prod = be.mul(a2, b2, "matrix.or");
  return be.sub(be.add(a2, b2), prod);
}

}  // namespace

CandidateMatrix init_matrix(const he::HEBackend& be, const he::KeyMaterial& public_key, int rows,
                            int cols, std::uint64_t stream) {
  if (rows < 0 || cols < 0) throw ConfigError("matrix dimensions must be non-negative");
  if (cols > be.batch_size())
    throw ConfigError("matrix column count " + std::to_string(cols) + " exceeds batch size " +
                      std::to_string(be.batch_size()));
  CandidateMatrix mat;
  mat.cols = cols;
  SeedStream rows_stream = SeedStream(stream).sub("matrix_rows");
  mat.rows.reserve(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i)
    mat.rows.push_back(be.encrypt(he::PlainVec::zeros(be.batch_size()), public_key,
                                  rows_stream.sub(static_cast<std::uint64_t>(i) + 1).value()));
  return mat;
}

void oblivious_update(const he::HEBackend& be, CandidateMatrix& mat,
                      const he::CipherVec& enc_row_id, const he::CipherVec& enc_col_id,
                      const he::CipherVec& all_col_ids, const he::PlainVec& all_row_ids,
                      const std::vector<he::CipherVec>& row_probes, const EvalOps& ops,
                      bool parallel_rows) {
  if (row_probes.size() < mat.rows.size())
    throw ShapeError("row probe count below matrix row count");
  if (all_row_ids.size() != be.batch_size())
    throw ShapeError("all_row_ids must span the batch");

  // Column mask is shared across rows: slot j = [j == col_id].
  he::CipherVec col_mask = ops.eeq(all_col_ids, enc_col_id);
  col_mask = ops.ensure(col_mask, 1);

  auto update_row = [&](std::size_t i) {
    he::CipherVec row_mask = ops.eeq(row_probes[i], enc_row_id);
    he::CipherVec cell =
        be.mul(ops.ensure(row_mask, 1), col_mask, "matrix.update.cell");
    mat.rows[i] = ops.ensure(or_combine(be, mat.rows[i], cell, ops), 2);
  };

  if (!parallel_rows || mat.rows.size() < 2) {
    for (std::size_t i = 0; i < mat.rows.size(); ++i) update_row(i);
    return;
  }
  const std::size_t n_threads =
      std::min<std::size_t>(mat.rows.size(), std::thread::hardware_concurrency());
  std::vector<std::thread> workers;
  std::atomic<std::size_t> next{0};
  for (std::size_t t = 0; t < n_threads; ++t)
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < mat.rows.size(); i = next.fetch_add(1))
        update_row(i);
    });
  for (auto& w : workers) w.join();
}

void plain_row_update(const he::HEBackend& be, CandidateMatrix& mat, int row_id,
                      const he::CipherVec& enc_col_id, const he::CipherVec& all_col_ids,
                      const EvalOps& ops) {
  if (row_id < 0 || static_cast<std::size_t>(row_id) >= mat.rows.size())
    throw RangeError("row id outside matrix");
  he::CipherVec col_mask = ops.eeq(all_col_ids, enc_col_id);
  const auto i = static_cast<std::size_t>(row_id);
  mat.rows[i] = ops.ensure(or_combine(be, mat.rows[i], ops.ensure(col_mask, 1), ops), 2);
}

void obfuscate(const he::HEBackend& be, CandidateMatrix& mat, const SeedStream& stream,
               const EvalOps& ops) {
  const int B = be.batch_size();
  for (std::size_t i = 0; i < mat.rows.size(); ++i) {
    const SeedStream row_stream = stream.sub(i);
    std::vector<double> mask(static_cast<std::size_t>(B));
    for (std::size_t s = 0; s < mask.size(); ++s) mask[s] = 0.5 + 1.5 * row_stream.uniform01(s);
    mat.rows[i] = be.mul_plain(ops.ensure(mat.rows[i], 1), he::PlainVec{std::move(mask)},
                               "matrix.obfuscate");
  }
}

std::vector<std::pair<int, int>> extract_candidates(const std::vector<he::PlainVec>& rows,
                                                    int cols, double tol) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < cols && j < rows[i].size(); ++j)
      if (std::abs(rows[i][j]) > tol) out.emplace_back(static_cast<int>(i), j);
  return out;
}

}  // namespace pper::pmatrix
