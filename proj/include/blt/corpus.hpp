#pragma once

// Message ingestion, tokenization and user-level aggregation.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace blt::corpus {

struct Message {
  std::string user_id;
  std::string text;
  std::optional<std::int64_t> timestamp;  // seconds since epoch
};

struct RowIssue {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct LoadResult {
  std::vector<Message> messages;
  std::vector<RowIssue> malformed;
};

enum class MessageFormat { jsonl, csv };

/// Guesses the format from the extension (".csv" is CSV, anything else JSONL).
MessageFormat format_for(const std::filesystem::path& path);

/// Loads messages. Malformed rows (bad JSON, missing or empty user_id, bad
/// timestamp) are skipped and reported with their line number; only an
/// unreadable file throws.
LoadResult load_messages(const std::filesystem::path& path, MessageFormat format);
LoadResult parse_messages(std::string_view contents, MessageFormat format);

enum class Gender { female, male, unknown };

Gender parse_gender(std::string_view text);
std::string_view to_string(Gender g);

struct DemographicRow {
  std::optional<double> age;
  Gender gender = Gender::unknown;
  bool include = true;  // locale / language exclusion column
};

using DemographicTable = std::map<std::string, DemographicRow>;

/// CSV with header user_id,age,gender[,include].
DemographicTable load_demographics(const std::filesystem::path& path);
DemographicTable parse_demographics(std::string_view contents);

const std::vector<std::string>& default_stopwords();
const std::vector<std::string>& default_emoticons();

/// One token per line; blank lines and lines starting with '#' are ignored.
std::vector<std::string> load_word_list(const std::filesystem::path& path);

/// Lowercasing unigram tokenizer.
///
/// Text is NFC-normalized, split on whitespace, and each chunk is scanned for
/// whitelisted emoticons (kept verbatim, case included). The remainder is
/// split into word tokens (letters, digits, marks, '_', with apostrophes and
/// hyphens allowed between word characters) and single-character
/// punctuation/symbol tokens. Word tokens are lowercased. Stopwords are
/// removed last.
class Tokenizer {
 public:
  Tokenizer();
  Tokenizer(std::vector<std::string> stopwords, std::vector<std::string> emoticons);

  std::vector<std::string> operator()(std::string_view text) const;

  const std::unordered_set<std::string>& stopwords() const noexcept { return stopwords_; }
  const std::vector<std::string>& emoticons() const noexcept { return emoticons_; }

 private:
  std::unordered_set<std::string> stopwords_;
  std::vector<std::string> emoticons_;           // longest first
  std::vector<std::u32string> emoticon_patterns_;  // entries containing a non-word character
};

/// Tokenizes with the default emoticon whitelist and the given stopwords.
std::vector<std::string> tokenize(std::string_view text,
                                  const std::unordered_set<std::string>& stopwords);

using TokenId = std::uint32_t;

struct TokenizedMessage {
  std::optional<std::int64_t> timestamp;
  std::vector<TokenId> tokens;
};

struct UserRecord {
  std::string user_id;
  std::optional<double> age;
  Gender gender = Gender::unknown;
  std::unordered_map<TokenId, std::uint32_t> token_counts;
  std::uint64_t total_token_count = 0;
  std::vector<std::int64_t> message_timestamps;  // ascending
  std::vector<TokenizedMessage> messages;        // ordered by timestamp, then input order
};

struct FilterConfig {
  std::uint64_t min_words = 1000;
  double max_age = 65.0;
  bool require_demographics = false;

  static FilterConfig none() {
    return {0, std::numeric_limits<double>::infinity(), false};
  }
};

/// Per-rule drop counts. Each dropped user is attributed to the first rule it
/// fails in the order min_words, max_age, excluded, demographics.
struct FilterSummary {
  std::size_t total_users = 0;
  std::size_t kept = 0;
  std::size_t dropped_min_words = 0;
  std::size_t dropped_max_age = 0;
  std::size_t dropped_excluded = 0;
  std::size_t dropped_demographics = 0;
};

/// Interned lexicon shared by every user in a corpus.
class Lexicon {
 public:
  TokenId intern(std::string_view token);
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const noexcept { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct UserCorpus {
  std::vector<UserRecord> users;  // sorted by user_id
  Lexicon lexicon;
  FilterConfig filter;
  FilterSummary summary;
  bool all_timestamped = true;

  const UserRecord* find(std::string_view user_id) const;
};

/// Groups messages by user, tokenizes, attaches demographics and applies the
/// user-level filters. Messages that tokenize to nothing are dropped.
UserCorpus build_corpus(const std::vector<Message>& messages, const DemographicTable& demographics,
                        const FilterConfig& cfg, const Tokenizer& tokenizer = Tokenizer());

/// Re-aggregates a subset of each user's messages into a new corpus sharing
/// the same lexicon. `keep(user_index, message_index)` selects messages; users
/// left with no tokens are omitted. No filters are applied.
template <class Keep>
UserCorpus subset_messages(const UserCorpus& source, Keep&& keep);

UserRecord aggregate_user(const UserRecord& base, std::vector<TokenizedMessage> messages);

template <class Keep>
UserCorpus subset_messages(const UserCorpus& source, Keep&& keep) {
  UserCorpus out;
  out.lexicon = source.lexicon;
  out.filter = FilterConfig::none();
  out.all_timestamped = source.all_timestamped;
  for (std::size_t u = 0; u < source.users.size(); ++u) {
    std::vector<TokenizedMessage> picked;
    const auto& user = source.users[u];
    for (std::size_t m = 0; m < user.messages.size(); ++m) {
      if (keep(u, m)) picked.push_back(user.messages[m]);
    }
    if (picked.empty()) continue;
    out.users.push_back(aggregate_user(user, std::move(picked)));
  }
  out.summary.total_users = source.users.size();
  out.summary.kept = out.users.size();
  return out;
}

}  // namespace blt::corpus
