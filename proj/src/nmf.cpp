#include "blt/nmf.hpp"

#include "blt/io.hpp"
#include "blt/rng.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace blt::nmf {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

LikesMatrix parse_likes(std::string_view contents, std::size_t top_n) {
  int col_user = -1, col_like = -1;
  bool header_seen = false;
  std::set<std::pair<std::string, std::string>> events;  // (like, user)
  io::parse_csv(contents, [&](std::vector<std::string>& fields, std::size_t line) {
    if (!header_seen) {
      header_seen = true;
      for (int i = 0; i < static_cast<int>(fields.size()); ++i) {
        const auto name = trim(fields[static_cast<std::size_t>(i)]);
        if (name == "user_id") col_user = i;
        else if (name == "like_id") col_like = i;
      }
      if (col_user < 0 || col_like < 0) throw Error("nmfcluster", "likes CSV header needs user_id and like_id");
      return;
    }
    const auto need = static_cast<std::size_t>(std::max(col_user, col_like));
    if (fields.size() <= need) throw Error("nmfcluster", "likes row at line " + std::to_string(line) + " is short");
    const auto user = trim(fields[static_cast<std::size_t>(col_user)]);
    const auto like = trim(fields[static_cast<std::size_t>(col_like)]);
    if (user.empty() || like.empty()) {
      throw Error("nmfcluster", "likes row at line " + std::to_string(line) + " has an empty id");
    }
    events.emplace(std::string(like), std::string(user));
  });
  if (!header_seen) throw Error("nmfcluster", "likes CSV is empty");

  std::map<std::string, std::size_t> popularity;
  std::set<std::string> users;
  for (const auto& [like, user] : events) {
    ++popularity[like];
    users.insert(user);
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(popularity.begin(), popularity.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > top_n) ranked.resize(top_n);

  LikesMatrix m;
  m.user_ids.assign(users.begin(), users.end());
  std::unordered_map<std::string, Eigen::Index> like_col, user_row;
  for (const auto& [like, count] : ranked) {
    like_col.emplace(like, static_cast<Eigen::Index>(m.like_ids.size()));
    m.like_ids.push_back(like);
  }
  for (std::size_t i = 0; i < m.user_ids.size(); ++i) user_row.emplace(m.user_ids[i], static_cast<Eigen::Index>(i));
  std::vector<Eigen::Triplet<double, std::int64_t>> triplets;
  for (const auto& [like, user] : events) {
    auto it = like_col.find(like);
    if (it != like_col.end()) triplets.emplace_back(user_row.at(user), it->second, 1.0);
  }
  m.values.resize(static_cast<Eigen::Index>(m.user_ids.size()), static_cast<Eigen::Index>(m.like_ids.size()));
  m.values.setFromTriplets(triplets.begin(), triplets.end());
  m.values.makeCompressed();
  return m;
}

LikesMatrix load_likes(const std::filesystem::path& path, std::size_t top_n) {
  try {
    return parse_likes(io::read_file(path), top_n);
  } catch (const Error& e) {
    const std::string what = e.what();
    throw Error(e.module(), path.string() + ": " + what.substr(e.module().size() + 2));
  }
}

LikesMatrix likes_from_dense(const Matrix& values) {
  if ((values.array() < 0.0).any()) throw Error("nmfcluster", "likes matrix must be nonnegative");
  LikesMatrix m;
  for (Eigen::Index i = 0; i < values.rows(); ++i) m.user_ids.push_back("u" + std::to_string(i));
  for (Eigen::Index j = 0; j < values.cols(); ++j) m.like_ids.push_back("l" + std::to_string(j));
  m.values = values.sparseView();
  m.values.makeCompressed();
  return m;
}

LikesMatrix restrict_users(const LikesMatrix& m, const std::vector<std::string>& user_ids) {
  std::unordered_map<std::string, Eigen::Index> row_of;
  for (std::size_t i = 0; i < m.user_ids.size(); ++i) row_of.emplace(m.user_ids[i], static_cast<Eigen::Index>(i));
  LikesMatrix out;
  out.user_ids = user_ids;
  out.like_ids = m.like_ids;
  std::vector<Eigen::Triplet<double, std::int64_t>> triplets;
  for (std::size_t i = 0; i < user_ids.size(); ++i) {
    auto it = row_of.find(user_ids[i]);
    if (it == row_of.end()) continue;
    for (SparseMatrix::InnerIterator e(m.values, it->second); e; ++e) {
      triplets.emplace_back(static_cast<Eigen::Index>(i), e.col(), e.value());
    }
  }
  out.values.resize(static_cast<Eigen::Index>(user_ids.size()), m.values.cols());
  out.values.setFromTriplets(triplets.begin(), triplets.end());
  out.values.makeCompressed();
  return out;
}

double reconstruction_error(const SparseMatrix& m, const Matrix& w, const Matrix& h) {
  double total = 0.0;
  Eigen::RowVectorXd row(h.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    row.noalias() = w.row(i) * h;
    for (SparseMatrix::InnerIterator e(m, i); e; ++e) row(e.col()) -= e.value();
    total += row.squaredNorm();
  }
  return total;
}

NmfModel fit_nmf(const LikesMatrix& m, int rank, int iterations, std::uint64_t seed) {
  if (rank < 1) throw Error("nmfcluster", "NMF rank must be at least 1");
  if (iterations < 0) throw Error("nmfcluster", "NMF iterations must be non-negative");
  const SparseMatrix& x = m.values;
  bool any_positive = false;
  for (Eigen::Index k = 0; k < x.nonZeros(); ++k) {
    const double v = x.valuePtr()[k];
    if (v < 0.0) throw Error("nmfcluster", "likes matrix must be nonnegative");
    if (v > 0.0) any_positive = true;
  }
  if (!any_positive) throw Error("nmfcluster", "likes matrix is all zero");

  NmfModel model;
  model.user_ids = m.user_ids;
  model.like_ids = m.like_ids;
  model.rank = rank;
  model.seed = seed;
  const auto n = x.rows();
  const auto p = x.cols();
  Rng rng(seed);
  model.w.resize(n, rank);
  model.h.resize(rank, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index r = 0; r < rank; ++r) model.w(i, r) = rng.uniform();
  for (Eigen::Index r = 0; r < rank; ++r)
    for (Eigen::Index j = 0; j < p; ++j) model.h(r, j) = rng.uniform();

  model.objective.push_back(reconstruction_error(x, model.w, model.h));
  const SparseMatrix xt = x.transpose();
  for (int it = 0; it < iterations; ++it) {
    Matrix w = model.w;
    Matrix h = model.h;
    // H <- H .* (W'X) ./ (W'W H + eps)
    const Matrix wtx = (xt * w).transpose();
    const Matrix wtwh = (w.transpose() * w) * h;
    h.array() *= wtx.array() / (wtwh.array() + kEpsilon);
    // W <- W .* (X H') ./ (W H H' + eps)
    const Matrix xht = x * h.transpose();
    const Matrix whht = w * (h * h.transpose());
    w.array() *= xht.array() / (whht.array() + kEpsilon);
    const double objective = reconstruction_error(x, w, h);
    // A rise can only come from rounding at a fixed point.
    if (objective > model.objective.back()) break;
    model.w = std::move(w);
    model.h = std::move(h);
    model.objective.push_back(objective);
    model.iterations = it + 1;
  }
  return model;
}

int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = kUnassigned;
  double best_value = 0.0;
  for (Eigen::Index r = 0; r < row.size(); ++r) {
    if (row(r) > best_value) {
      best_value = row(r);
      best = static_cast<int>(r);
    }
  }
  return best;
}

std::vector<int> cluster_assign(const NmfModel& model) {
  std::vector<int> out(static_cast<std::size_t>(model.w.rows()));
  for (Eigen::Index i = 0; i < model.w.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_row(model.w.row(i));
  return out;
}

std::vector<std::string> top_items(const NmfModel& model, int cluster, std::size_t n) {
  if (cluster < 0 || cluster >= model.h.rows()) throw Error("nmfcluster", "cluster index out of range");
  std::vector<std::size_t> order(model.like_ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double wa = model.h(cluster, static_cast<Eigen::Index>(a));
    const double wb = model.h(cluster, static_cast<Eigen::Index>(b));
    if (wa != wb) return wa > wb;
    return model.like_ids[a] < model.like_ids[b];
  });
  if (order.size() > n) order.resize(n);
  std::vector<std::string> out;
  out.reserve(order.size());
  for (auto j : order) out.push_back(model.like_ids[j]);
  return out;
}

}  // namespace blt::nmf
