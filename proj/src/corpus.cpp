#include "blt/corpus.hpp"

#include "blt/common.hpp"
#include "blt/io.hpp"

#include <nlohmann/json.hpp>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/locid.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace blt::corpus {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

bool is_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

std::u32string to_code_points(std::string_view utf8) {
  std::u32string out;
  if (is_ascii(utf8)) {
    out.reserve(utf8.size());
    for (char c : utf8) out.push_back(static_cast<char32_t>(c));
    return out;
  }
  UErrorCode status = U_ZERO_ERROR;
  const auto* nfc = icu::Normalizer2::getNFCInstance(status);
  icu::UnicodeString text = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::UnicodeString normalized = nfc->normalize(text, status);
  if (U_FAILURE(status)) normalized = text;
  out.reserve(static_cast<std::size_t>(normalized.length()));
  for (int32_t i = 0; i < normalized.length();) {
    const UChar32 cp = normalized.char32At(i);
    out.push_back(static_cast<char32_t>(cp));
    i += U16_LENGTH(cp);
  }
  return out;
}

bool is_space(char32_t c) {
  if (c < 0x80) return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  return u_isUWhiteSpace(static_cast<UChar32>(c));
}

bool is_word(char32_t c) {
  if (c < 0x80) return std::isalnum(static_cast<int>(c)) || c == '_';
  const auto cp = static_cast<UChar32>(c);
  if (u_isalnum(cp)) return true;
  const auto type = u_charType(cp);
  return type == U_NON_SPACING_MARK || type == U_COMBINING_SPACING_MARK || type == U_ENCLOSING_MARK ||
         type == U_CONNECTOR_PUNCTUATION;
}

bool is_joiner(char32_t c) { return c == U'\'' || c == U'’' || c == U'-'; }

std::string to_utf8(std::u32string_view cps) {
  std::string out;
  bool ascii = std::all_of(cps.begin(), cps.end(), [](char32_t c) { return c < 0x80; });
  if (ascii) {
    out.reserve(cps.size());
    for (char32_t c : cps) out.push_back(static_cast<char>(c));
    return out;
  }
  icu::UnicodeString s;
  for (char32_t c : cps) s.append(static_cast<UChar32>(c));
  s.toUTF8String(out);
  return out;
}

std::string lower_word(std::u32string_view cps) {
  bool ascii = std::all_of(cps.begin(), cps.end(), [](char32_t c) { return c < 0x80; });
  if (ascii) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t c : cps) out.push_back(static_cast<char>(std::tolower(static_cast<int>(c))));
    return out;
  }
  icu::UnicodeString s;
  for (char32_t c : cps) s.append(static_cast<UChar32>(c));
  s.toLower(icu::Locale::getRoot());
  UErrorCode status = U_ZERO_ERROR;
  const auto* nfc = icu::Normalizer2::getNFCInstance(status);
  icu::UnicodeString normalized = nfc->normalize(s, status);
  std::string out;
  (U_SUCCESS(status) ? normalized : s).toUTF8String(out);
  return out;
}

}  // namespace

MessageFormat format_for(const std::filesystem::path& path) {
  return lower_ascii(path.extension().string()) == ".csv" ? MessageFormat::csv : MessageFormat::jsonl;
}

LoadResult parse_messages(std::string_view contents, MessageFormat format) {
  LoadResult result;
  if (format == MessageFormat::jsonl) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= contents.size()) {
      std::size_t end = contents.find('\n', start);
      if (end == std::string_view::npos) end = contents.size();
      ++line_no;
      const auto line = trim(contents.substr(start, end - start));
      start = end + 1;
      if (line.empty()) {
        if (end == contents.size()) break;
        continue;
      }
      auto row = nlohmann::json::parse(line, nullptr, false);
      if (row.is_discarded() || !row.is_object()) {
        result.malformed.push_back({line_no, "invalid JSON object"});
        continue;
      }
      auto uid = row.find("user_id");
      if (uid == row.end() || !uid->is_string() || uid->get_ref<const std::string&>().empty()) {
        result.malformed.push_back({line_no, "missing user_id"});
        continue;
      }
      Message m;
      m.user_id = uid->get<std::string>();
      if (auto text = row.find("text"); text != row.end() && text->is_string()) m.text = text->get<std::string>();
      if (auto ts = row.find("timestamp"); ts != row.end() && !ts->is_null()) {
        if (!ts->is_number_integer()) {
          result.malformed.push_back({line_no, "timestamp is not an integer"});
          continue;
        }
        m.timestamp = ts->get<std::int64_t>();
      }
      result.messages.push_back(std::move(m));
    }
    return result;
  }

  int col_user = -1, col_text = -1, col_ts = -1;
  bool header_seen = false;
  io::parse_csv(contents, [&](std::vector<std::string>& fields, std::size_t line) {
    if (!header_seen) {
      header_seen = true;
      for (int i = 0; i < static_cast<int>(fields.size()); ++i) {
        const auto name = lower_ascii(trim(fields[static_cast<std::size_t>(i)]));
        if (name == "user_id") col_user = i;
        else if (name == "text") col_text = i;
        else if (name == "timestamp") col_ts = i;
      }
      if (col_user < 0) throw Error("corpus", "messages CSV header lacks user_id");
      return;
    }
    auto field = [&](int col) -> std::string_view {
      return col >= 0 && col < static_cast<int>(fields.size()) ? std::string_view(fields[static_cast<std::size_t>(col)])
                                                              : std::string_view();
    };
    Message m;
    m.user_id = std::string(trim(field(col_user)));
    if (m.user_id.empty()) {
      result.malformed.push_back({line, "missing user_id"});
      return;
    }
    m.text = std::string(field(col_text));
    if (auto ts = trim(field(col_ts)); !ts.empty()) {
      auto parsed = parse_int(ts);
      if (!parsed) {
        result.malformed.push_back({line, "timestamp is not an integer"});
        return;
      }
      m.timestamp = parsed;
    }
    result.messages.push_back(std::move(m));
  });
  return result;
}

LoadResult load_messages(const std::filesystem::path& path, MessageFormat format) {
  return parse_messages(io::read_file(path), format);
}

Gender parse_gender(std::string_view text) {
  const auto g = lower_ascii(trim(text));
  if (g == "f" || g == "female" || g == "1") return Gender::female;
  if (g == "m" || g == "male" || g == "0") return Gender::male;
  return Gender::unknown;
}

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::female: return "female";
    case Gender::male: return "male";
    default: return "unknown";
  }
}

DemographicTable parse_demographics(std::string_view contents) {
  DemographicTable table;
  int col_user = -1, col_age = -1, col_gender = -1, col_include = -1;
  bool header_seen = false;
  io::parse_csv(contents, [&](std::vector<std::string>& fields, std::size_t line) {
    if (!header_seen) {
      header_seen = true;
      for (int i = 0; i < static_cast<int>(fields.size()); ++i) {
        const auto name = lower_ascii(trim(fields[static_cast<std::size_t>(i)]));
        if (name == "user_id") col_user = i;
        else if (name == "age") col_age = i;
        else if (name == "gender") col_gender = i;
        else if (name == "include") col_include = i;
      }
      if (col_user < 0) throw Error("corpus", "demographics CSV header lacks user_id");
      return;
    }
    auto field = [&](int col) -> std::string_view {
      return col >= 0 && col < static_cast<int>(fields.size()) ? trim(fields[static_cast<std::size_t>(col)])
                                                              : std::string_view();
    };
    const std::string uid(field(col_user));
    if (uid.empty()) throw Error("corpus", "demographics row at line " + std::to_string(line) + " lacks user_id");
    DemographicRow row;
    row.age = parse_real(field(col_age));
    row.gender = parse_gender(field(col_gender));
    if (auto inc = field(col_include); !inc.empty()) row.include = inc != "0";
    table[uid] = row;
  });
  return table;
}

DemographicTable load_demographics(const std::filesystem::path& path) {
  return parse_demographics(io::read_file(path));
}

const std::vector<std::string>& default_stopwords() {
  static const std::vector<std::string> words = {
      "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as",
      "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can",
      "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for", "from", "further",
      "had", "has", "have", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his",
      "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "me", "more", "most", "my",
      "myself", "no", "nor", "not", "of", "off", "on", "once", "only", "or", "other", "our", "ours",
      "ourselves", "out", "over", "own", "same", "she", "should", "so", "some", "such", "than", "that",
      "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this", "those",
      "through", "to", "too", "under", "until", "up", "very", "was", "we", "were", "what", "when",
      "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours",
      "yourself", "yourselves"};
  return words;
}

const std::vector<std::string>& default_emoticons() {
  static const std::vector<std::string> emoticons = {":)", ":(", ":D", ":P", ":-)", "(:", "<3", "xd", "xx"};
  return emoticons;
}

std::vector<std::string> load_word_list(const std::filesystem::path& path) {
  std::vector<std::string> words;
  std::istringstream in(io::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto w = trim(line);
    if (w.empty() || w.front() == '#') continue;
    words.emplace_back(w);
  }
  return words;
}

Tokenizer::Tokenizer() : Tokenizer(default_stopwords(), default_emoticons()) {}

Tokenizer::Tokenizer(std::vector<std::string> stopwords, std::vector<std::string> emoticons)
    : stopwords_(stopwords.begin(), stopwords.end()), emoticons_(std::move(emoticons)) {
  std::stable_sort(emoticons_.begin(), emoticons_.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
  for (const auto& e : emoticons_) {
    auto cps = to_code_points(e);
    // Letter-only entries ("xd") are ordinary word tokens already.
    if (std::any_of(cps.begin(), cps.end(), [](char32_t c) { return !is_word(c); })) {
      emoticon_patterns_.push_back(std::move(cps));
    }
  }
}

std::vector<std::string> Tokenizer::operator()(std::string_view text) const {
  std::vector<std::string> tokens;
  if (text.empty()) return tokens;

  const std::u32string cps = to_code_points(text);
  auto emit = [&](std::string token) {
    if (!stopwords_.contains(token)) tokens.push_back(std::move(token));
  };

  std::size_t i = 0;
  const std::size_t n = cps.size();
  while (i < n) {
    if (is_space(cps[i])) {
      ++i;
      continue;
    }
    // Emoticon starting here? Word-character edges must not run into words.
    bool matched = false;
    for (const auto& e : emoticon_patterns_) {
      if (e.empty() || i + e.size() > n || cps.compare(i, e.size(), e) != 0) continue;
      if (is_word(e.front()) && i > 0 && is_word(cps[i - 1])) continue;
      if (is_word(e.back()) && i + e.size() < n && is_word(cps[i + e.size()])) continue;
      emit(to_utf8(e));
      i += e.size();
      matched = true;
      break;
    }
    if (matched) continue;

    if (is_word(cps[i])) {
      std::u32string word;
      while (i < n) {
        if (is_word(cps[i])) {
          word.push_back(cps[i]);
          ++i;
        } else if (is_joiner(cps[i]) && !word.empty() && i + 1 < n && is_word(cps[i + 1])) {
          word.push_back(cps[i] == U'’' ? U'\'' : cps[i]);
          ++i;
        } else {
          break;
        }
      }
      emit(lower_word(word));
      continue;
    }
    emit(to_utf8(std::u32string_view(&cps[i], 1)));
    ++i;
  }
  return tokens;
}

std::vector<std::string> tokenize(std::string_view text, const std::unordered_set<std::string>& stopwords) {
  return Tokenizer(std::vector<std::string>(stopwords.begin(), stopwords.end()), default_emoticons())(text);
}

TokenId Lexicon::intern(std::string_view token) {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::optional<TokenId> Lexicon::find(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  return std::nullopt;
}

const UserRecord* UserCorpus::find(std::string_view user_id) const {
  auto it = std::lower_bound(users.begin(), users.end(), user_id,
                             [](const UserRecord& u, std::string_view id) { return u.user_id < id; });
  return it != users.end() && it->user_id == user_id ? &*it : nullptr;
}

UserRecord aggregate_user(const UserRecord& base, std::vector<TokenizedMessage> messages) {
  UserRecord user;
  user.user_id = base.user_id;
  user.age = base.age;
  user.gender = base.gender;
  const bool timed = std::all_of(messages.begin(), messages.end(), [](const auto& m) { return m.timestamp.has_value(); });
  if (timed) {
    std::stable_sort(messages.begin(), messages.end(),
                     [](const auto& a, const auto& b) { return *a.timestamp < *b.timestamp; });
  }
  for (const auto& m : messages) {
    for (TokenId t : m.tokens) ++user.token_counts[t];
    user.total_token_count += m.tokens.size();
    if (m.timestamp) user.message_timestamps.push_back(*m.timestamp);
  }
  std::sort(user.message_timestamps.begin(), user.message_timestamps.end());
  user.messages = std::move(messages);
  return user;
}

UserCorpus build_corpus(const std::vector<Message>& messages, const DemographicTable& demographics,
                        const FilterConfig& cfg, const Tokenizer& tokenizer) {
  UserCorpus corpus;
  corpus.filter = cfg;

  std::map<std::string, std::vector<TokenizedMessage>> grouped;
  for (const auto& m : messages) {
    if (m.user_id.empty()) continue;
    if (!m.timestamp) corpus.all_timestamped = false;
    auto& bucket = grouped[m.user_id];
    const auto tokens = tokenizer(m.text);
    if (tokens.empty()) continue;
    TokenizedMessage tm;
    tm.timestamp = m.timestamp;
    tm.tokens.reserve(tokens.size());
    for (const auto& t : tokens) tm.tokens.push_back(corpus.lexicon.intern(t));
    bucket.push_back(std::move(tm));
  }

  auto& s = corpus.summary;
  s.total_users = grouped.size();
  for (auto& [uid, msgs] : grouped) {
    UserRecord base;
    base.user_id = uid;
    bool include = true;
    if (auto d = demographics.find(uid); d != demographics.end()) {
      base.age = d->second.age;
      base.gender = d->second.gender;
      include = d->second.include;
    }
    UserRecord user = aggregate_user(base, std::move(msgs));
    if (user.total_token_count < cfg.min_words) {
      ++s.dropped_min_words;
    } else if (user.age && *user.age > cfg.max_age) {
      ++s.dropped_max_age;
    } else if (!include) {
      ++s.dropped_excluded;
    } else if (cfg.require_demographics && (!user.age || user.gender == Gender::unknown)) {
      ++s.dropped_demographics;
    } else {
      corpus.users.push_back(std::move(user));
    }
  }
  s.kept = corpus.users.size();
  return corpus;
}

}  // namespace blt::corpus
