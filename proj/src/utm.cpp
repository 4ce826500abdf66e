#include "blt/utm.hpp"

#include "blt/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace blt::utm {

std::vector<std::string> select_vocabulary(const corpus::UserCorpus& corpus, std::size_t max_terms,
                                           double min_user_fraction) {
  if (!(min_user_fraction > 0.0 && min_user_fraction <= 1.0)) {
    throw Error("utm", "min_user_fraction must lie in (0, 1]");
  }
  std::vector<std::uint32_t> user_counts(corpus.lexicon.size(), 0);
  for (const auto& user : corpus.users) {
    for (const auto& [token, count] : user.token_counts) {
      if (count > 0) ++user_counts[token];
    }
  }
  const double threshold = min_user_fraction * static_cast<double>(corpus.users.size());

  struct Candidate {
    std::uint32_t users;
    const std::string* token;
  };
  std::vector<Candidate> candidates;
  for (std::size_t id = 0; id < user_counts.size(); ++id) {
    if (user_counts[id] > 0 && static_cast<double>(user_counts[id]) >= threshold - 1e-9) {
      candidates.push_back({user_counts[id], &corpus.lexicon.token(static_cast<corpus::TokenId>(id))});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.users != b.users ? a.users > b.users : *a.token < *b.token;
  });
  if (candidates.size() > max_terms) candidates.resize(max_terms);

  std::vector<std::string> vocabulary;
  vocabulary.reserve(candidates.size());
  for (const auto& c : candidates) vocabulary.push_back(*c.token);
  return vocabulary;
}

UserTermMatrix UserTermMatrix::rows(const std::vector<std::size_t>& indices) const {
  UserTermMatrix out;
  out.vocabulary = vocabulary;
  out.values.resize(static_cast<Eigen::Index>(indices.size()), values.cols());
  out.raw_counts.resize(static_cast<Eigen::Index>(indices.size()), raw_counts.cols());
  out.total_tokens.resize(static_cast<Eigen::Index>(indices.size()));
  std::vector<Eigen::Triplet<double, std::int64_t>> vt, ct;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(indices[r]);
    out.user_ids.push_back(user_ids.at(indices[r]));
    out.total_tokens(static_cast<Eigen::Index>(r)) = total_tokens(src);
    for (SparseMatrix::InnerIterator it(values, src); it; ++it) vt.emplace_back(static_cast<std::int64_t>(r), it.col(), it.value());
    for (SparseMatrix::InnerIterator it(raw_counts, src); it; ++it) ct.emplace_back(static_cast<std::int64_t>(r), it.col(), it.value());
  }
  out.values.setFromTriplets(vt.begin(), vt.end());
  out.raw_counts.setFromTriplets(ct.begin(), ct.end());
  return out;
}

UserTermMatrix build_matrix(const corpus::UserCorpus& corpus, const std::vector<std::string>& vocabulary) {
  if (vocabulary.empty()) throw Error("utm", "vocabulary is empty");
  std::vector<std::int64_t> column_of(corpus.lexicon.size(), -1);
  for (std::size_t c = 0; c < vocabulary.size(); ++c) {
    if (auto id = corpus.lexicon.find(vocabulary[c])) column_of[*id] = static_cast<std::int64_t>(c);
  }

  UserTermMatrix m;
  m.vocabulary = vocabulary;
  std::vector<Eigen::Triplet<double, std::int64_t>> vt, ct;
  std::vector<double> totals;
  std::vector<std::pair<std::int64_t, std::uint32_t>> row;
  for (const auto& user : corpus.users) {
    row.clear();
    for (const auto& [token, count] : user.token_counts) {
      if (column_of[token] >= 0 && count > 0) row.emplace_back(column_of[token], count);
    }
    if (row.empty()) {
      m.dropped_users.push_back(user.user_id);
      continue;
    }
    std::sort(row.begin(), row.end());
    const auto r = static_cast<std::int64_t>(m.user_ids.size());
    const double total = static_cast<double>(user.total_token_count);
    for (const auto& [col, count] : row) {
      vt.emplace_back(r, col, static_cast<double>(count) / total);
      ct.emplace_back(r, col, static_cast<double>(count));
    }
    m.user_ids.push_back(user.user_id);
    totals.push_back(total);
  }
  const auto rows = static_cast<Eigen::Index>(m.user_ids.size());
  const auto cols = static_cast<Eigen::Index>(vocabulary.size());
  m.values.resize(rows, cols);
  m.raw_counts.resize(rows, cols);
  m.values.setFromTriplets(vt.begin(), vt.end());
  m.raw_counts.setFromTriplets(ct.begin(), ct.end());
  m.total_tokens = Eigen::Map<Vector>(totals.data(), static_cast<Eigen::Index>(totals.size()));
  return m;
}

std::size_t ColumnStats::zero_variance_count() const {
  std::size_t n = 0;
  for (Eigen::Index c = 0; c < std.size(); ++c) n += zero_variance(c) ? 1 : 0;
  return n;
}

ColumnStats column_stats(const UserTermMatrix& matrix) {
  const auto n = static_cast<double>(matrix.values.rows());
  const auto cols = matrix.values.cols();
  if (matrix.values.rows() == 0) throw Error("utm", "cannot compute column statistics of an empty matrix");
  ColumnStats stats;
  stats.vocabulary = matrix.vocabulary;
  stats.mean = Vector::Zero(cols);
  Vector sq = Vector::Zero(cols);
  std::vector<std::int64_t> nnz(static_cast<std::size_t>(cols), 0);
  for (Eigen::Index r = 0; r < matrix.values.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(matrix.values, r); it; ++it) stats.mean(it.col()) += it.value();
  }
  stats.mean /= n;
  for (Eigen::Index r = 0; r < matrix.values.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(matrix.values, r); it; ++it) {
      const double d = it.value() - stats.mean(it.col());
      sq(it.col()) += d * d;
      ++nnz[static_cast<std::size_t>(it.col())];
    }
  }
  stats.std.resize(cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    const double zeros = n - static_cast<double>(nnz[static_cast<std::size_t>(c)]);
    const double var = (sq(c) + zeros * stats.mean(c) * stats.mean(c)) / n;
    stats.std(c) = std::sqrt(std::max(var, 0.0));
  }
  return stats;
}

Matrix standardize_dense(const Matrix& values, const ColumnStats& stats) {
  if (values.cols() != stats.mean.size()) throw Error("utm", "column statistics do not match matrix width");
  Matrix z(values.rows(), values.cols());
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    if (stats.zero_variance(c)) {
      z.col(c).setZero();
    } else {
      z.col(c) = (values.col(c).array() - stats.mean(c)) / stats.std(c);
    }
  }
  return z;
}

Standardized standardize(const UserTermMatrix& matrix, const ColumnStats* stats) {
  Standardized out;
  if (stats) {
    if (stats->vocabulary != matrix.vocabulary) throw Error("utm", "vocabulary mismatch between matrix and statistics");
    out.stats = *stats;
  } else {
    out.stats = column_stats(matrix);
  }
  out.z = standardize_dense(matrix.dense(), out.stats);
  return out;
}

Demographics demographics_for(const corpus::UserCorpus& corpus, const std::vector<std::string>& user_ids,
                              std::vector<std::string>* missing) {
  Demographics d;
  std::vector<double> age, gender;
  for (const auto& id : user_ids) {
    const auto* user = corpus.find(id);
    if (!user || !user->age || user->gender == corpus::Gender::unknown) {
      if (missing) missing->push_back(id);
      continue;
    }
    d.user_ids.push_back(id);
    age.push_back(*user->age);
    gender.push_back(user->gender == corpus::Gender::female ? 1.0 : 0.0);
  }
  d.age = Eigen::Map<Vector>(age.data(), static_cast<Eigen::Index>(age.size()));
  d.gender = Eigen::Map<Vector>(gender.data(), static_cast<Eigen::Index>(gender.size()));
  if (d.age.size() > 0) d.age.array() -= d.age.mean();
  return d;
}

Residualized residualize(const Matrix& values, const Demographics& demo) {
  const auto n = values.rows();
  if (static_cast<std::size_t>(n) != demo.size()) throw Error("utm", "residualize: rows do not align with demographics");
  Residualized out;
  if (n == 0) {
    out.values = values;
    return out;
  }

  const std::pair<const char*, Vector> candidates[] = {
      {"intercept", Vector::Ones(n)}, {"age", demo.age}, {"gender", demo.gender}};
  Matrix design(n, 0);
  for (const auto& [name, column] : candidates) {
    Vector residual = column;
    if (design.cols() > 0) {
      Eigen::HouseholderQR<Matrix> qr(design);
      Matrix q = qr.householderQ() * Matrix::Identity(n, design.cols());
      residual -= q * (q.transpose() * column);
    }
    if (column.norm() == 0.0 || residual.norm() <= 1e-10 * column.norm()) {
      out.dropped_regressors.emplace_back(name);
      continue;
    }
    design.conservativeResize(n, design.cols() + 1);
    design.col(design.cols() - 1) = column;
  }

  Eigen::HouseholderQR<Matrix> qr(design);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, design.cols());
  out.values = values - q * (q.transpose() * values);
  return out;
}

namespace {

void append_u64(std::string& out, std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t read_u64(std::string_view bytes, std::size_t& pos) {
  if (pos + 8 > bytes.size()) throw Error("utm", "matrix.csr is truncated");
  std::uint64_t v;
  std::memcpy(&v, bytes.data() + pos, 8);
  pos += 8;
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  return v;
}

}  // namespace

std::string encode_csr(const SparseMatrix& input) {
  SparseMatrix m = input;
  m.makeCompressed();
  std::string out;
  const auto rows = static_cast<std::uint64_t>(m.rows());
  const auto nnz = static_cast<std::uint64_t>(m.nonZeros());
  out.reserve(16 + 8 * (rows + 1 + 2 * nnz));
  append_u64(out, rows);
  append_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (std::uint64_t r = 0; r <= rows; ++r) append_u64(out, static_cast<std::uint64_t>(m.outerIndexPtr()[r]));
  for (std::uint64_t i = 0; i < nnz; ++i) append_u64(out, static_cast<std::uint64_t>(m.innerIndexPtr()[i]));
  for (std::uint64_t i = 0; i < nnz; ++i) append_u64(out, std::bit_cast<std::uint64_t>(m.valuePtr()[i]));
  return out;
}

SparseMatrix decode_csr(std::string_view bytes) {
  std::size_t pos = 0;
  const auto rows = read_u64(bytes, pos);
  const auto cols = read_u64(bytes, pos);
  std::vector<std::uint64_t> row_ptr(rows + 1);
  for (auto& p : row_ptr) p = read_u64(bytes, pos);
  const auto nnz = row_ptr.back();
  if (row_ptr.front() != 0 || !std::is_sorted(row_ptr.begin(), row_ptr.end())) throw Error("utm", "matrix.csr has invalid row pointers");
  std::vector<std::uint64_t> col_idx(nnz);
  for (auto& c : col_idx) {
    c = read_u64(bytes, pos);
    if (c >= cols) throw Error("utm", "matrix.csr column index out of range");
  }
  std::vector<Eigen::Triplet<double, std::int64_t>> triplets;
  triplets.reserve(nnz);
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (auto i = row_ptr[r]; i < row_ptr[r + 1]; ++i) {
      triplets.emplace_back(static_cast<std::int64_t>(r), static_cast<std::int64_t>(col_idx[i]), 0.0);
    }
  }
  for (std::uint64_t i = 0; i < nnz; ++i) triplets[i] = {triplets[i].row(), triplets[i].col(), std::bit_cast<double>(read_u64(bytes, pos))};
  if (pos != bytes.size()) throw Error("utm", "matrix.csr has trailing bytes");
  SparseMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) {
    text += l;
    text += '\n';
  }
  io::write_file_atomic(path, text);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(io::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void save_stats(const std::filesystem::path& path, const ColumnStats& stats) {
  nlohmann::json j;
  j["terms"] = stats.vocabulary.size();
  j["means"] = std::vector<double>(stats.mean.data(), stats.mean.data() + stats.mean.size());
  j["stds"] = std::vector<double>(stats.std.data(), stats.std.data() + stats.std.size());
  io::write_file_atomic(path, j.dump(1) + "\n");
}

ColumnStats load_stats(const std::filesystem::path& path, std::vector<std::string> vocabulary) {
  const auto j = nlohmann::json::parse(io::read_file(path));
  const auto means = j.at("means").get<std::vector<double>>();
  const auto stds = j.at("stds").get<std::vector<double>>();
  if (means.size() != vocabulary.size() || stds.size() != vocabulary.size()) {
    throw Error("utm", "stats.json does not match vocabulary size");
  }
  ColumnStats stats;
  stats.vocabulary = std::move(vocabulary);
  stats.mean = Eigen::Map<const Vector>(means.data(), static_cast<Eigen::Index>(means.size()));
  stats.std = Eigen::Map<const Vector>(stds.data(), static_cast<Eigen::Index>(stds.size()));
  return stats;
}

void save_matrix(const std::filesystem::path& dir, const UserTermMatrix& matrix, const ColumnStats& stats) {
  std::filesystem::create_directories(dir);
  write_lines(dir / "vocabulary.txt", matrix.vocabulary);
  write_lines(dir / "users.txt", matrix.user_ids);
  io::write_file_atomic(dir / "matrix.csr", encode_csr(matrix.values));
  save_stats(dir / "stats.json", stats);
}

UserTermMatrix load_matrix(const std::filesystem::path& dir) {
  UserTermMatrix m;
  m.vocabulary = read_lines(dir / "vocabulary.txt");
  m.user_ids = read_lines(dir / "users.txt");
  m.values = decode_csr(io::read_file(dir / "matrix.csr"));
  if (static_cast<std::size_t>(m.values.rows()) != m.user_ids.size() ||
      static_cast<std::size_t>(m.values.cols()) != m.vocabulary.size()) {
    throw Error("utm", "matrix.csr dimensions disagree with users.txt / vocabulary.txt");
  }
  m.total_tokens = Vector::Zero(m.values.rows());
  m.raw_counts.resize(m.values.rows(), m.values.cols());
  return m;
}

}  // namespace blt::utm
