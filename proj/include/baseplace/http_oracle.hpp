#pragma once

// Oracle backed by a remote vision-language model reached over HTTP.
//
// Request (POST, JSON):
//   {"schema": 1, "model": str, "kind": "direction"|"keypoint"|"rank_candidates",
//    "prompt": str, "images": [{"name": str, "mime": "image/png", "data": base64}],
//    "options": [int, ...], "want": int, "answer_format": "ANSWER: i[, j, ...]"}
// Response: either {"text": str} or a plain-text body.  The last line of the
// form "ANSWER: ..." is parsed; "none" / "uncertain" / "-1" map to -1.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <semaphore>
#include <sstream>
#include <string>
#include <vector>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro that clashes
// with Eigen parameter names.
#include "baseplace/image.hpp"
#include "baseplace/oracle.hpp"

#include <httplib.h>
#include <json.hpp>

namespace baseplace {

#ifndef BASEPLACE_DATA_DIR
#define BASEPLACE_DATA_DIR "data"
#endif

struct HttpOracleConfig {
  std::string url;  // scheme://host[:port]/path
  std::string model = "gpt-4o";
  std::string token_env = "BASEPLACE_ORACLE_TOKEN";
  std::filesystem::path prompt_dir = std::filesystem::path(BASEPLACE_DATA_DIR) / "prompts";
  int timeout_seconds = 60;
  int max_attempts = 2;  // one retry
};

/// Prompt templates keyed by query kind.  Placeholders: {instruction},
/// {count}, {want}, {options}.
class PromptBook {
 public:
  PromptBook() = default;
  explicit PromptBook(const std::filesystem::path& dir) {
    const std::pair<QueryKind, const char*> files[] = {{QueryKind::Direction, "direction.txt"},
                                                       {QueryKind::Keypoint, "keypoint.txt"},
                                                       {QueryKind::RankCandidates, "base_selection.txt"}};
    for (const auto& [kind, file] : files) templates_[kind] = detail::read_bytes((dir / file).string());
  }

  void set(QueryKind kind, std::string text) { templates_[kind] = std::move(text); }

  std::string render(const OracleQuery& q) const {
    auto it = templates_.find(q.kind);
    if (it == templates_.end()) throw std::runtime_error("no prompt template for " + std::string(to_string(q.kind)));
    std::string options;
    for (std::size_t i = 0; i < q.options.size(); ++i) options += (i ? ", " : "") + std::to_string(q.options[i].index);
    std::string out = it->second;
    replace_all(out, "{instruction}", q.instruction);
    replace_all(out, "{count}", std::to_string(q.options.size()));
    replace_all(out, "{want}", std::to_string(q.want));
    replace_all(out, "{options}", options);
    return out;
  }

 private:
  static void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
      s.replace(pos, from.size(), to);
  }
  std::map<QueryKind, std::string> templates_;
};

/// Indices from the last "ANSWER:" line of `text`; nullopt when there is none
/// or it does not parse.
inline std::optional<std::vector<int>> parse_answer(const std::string& text) {
  static const std::regex kLine(R"(ANSWER\s*:\s*(.*))", std::regex::icase);
  std::optional<std::string> last;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    std::smatch m;
    if (std::regex_search(line, m, kLine)) last = m[1].str();
  }
  if (!last) return std::nullopt;
  std::string body = *last;
  for (char& c : body) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.pop_back();
  while (!body.empty() && (body.back() == '.')) body.pop_back();
  if (body.find("none") != std::string::npos || body.find("uncertain") != std::string::npos)
    return std::vector<int>{kUncertain};
  std::vector<int> out;
  static const std::regex kInt(R"(-?\d+)");
  for (auto it = std::sregex_iterator(body.begin(), body.end(), kInt); it != std::sregex_iterator(); ++it)
    out.push_back(std::stoi(it->str()));
  if (out.empty()) return std::nullopt;
  return out;
}

/// Caps concurrent requests across every HttpOracle in the process.
inline std::counting_semaphore<64>& http_request_slots() {
  static std::counting_semaphore<64> slots(4);
  return slots;
}

class HttpOracle final : public Oracle {
 public:
  HttpOracle(HttpOracleConfig cfg, PromptBook prompts) : cfg_(std::move(cfg)), prompts_(std::move(prompts)) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.url, m, kUrl)) throw std::invalid_argument("oracle url must be http(s)://host[:port]/path");
    origin_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/";
    if (const char* t = std::getenv(cfg_.token_env.c_str())) token_ = t;
  }

  std::string name() const override { return "http"; }
  bool wants_images() const override { return true; }

  nlohmann::json request_body(const OracleQuery& q) const {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& a : q.attachments)
      images.push_back({{"name", a.name}, {"mime", "image/png"}, {"data", httplib::detail::base64_encode(encode_png(a.image))}});
    std::vector<int> options;
    for (const auto& o : q.options) options.push_back(o.index);
    std::string format = q.want == 1 ? "ANSWER: i" : "ANSWER: i, j, ...";
    if (q.kind == QueryKind::Direction) format += "  (or ANSWER: none)";
    return {{"schema", 1},
            {"model", cfg_.model},
            {"kind", to_string(q.kind)},
            {"prompt", prompts_.render(q)},
            {"images", images},
            {"options", options},
            {"want", q.want},
            {"answer_format", format}};
  }

 protected:
  OracleReply answer(const OracleQuery& q) override {
    const std::string body = request_body(q).dump();
    OracleReply reply;
    for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
      std::string text;
      if (!post(body, text)) {
        reply.raw = text;
        continue;
      }
      reply.raw = text;
      if (auto idx = parse_answer(text)) {
        reply.indices = *idx;
        if (reply_is_valid(q, reply)) return reply;
      }
    }
    return reply;  // invalid; callers treat it as a failed query
  }

 private:
  bool post(const std::string& body, std::string& text) {
    auto& slots = http_request_slots();
    slots.acquire();
    struct Release {
      std::counting_semaphore<64>& s;
      ~Release() { s.release(); }
    } release{slots};
    httplib::Client cli(origin_);
    cli.set_connection_timeout(cfg_.timeout_seconds, 0);
    cli.set_read_timeout(cfg_.timeout_seconds, 0);
    cli.set_write_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    auto res = cli.Post(path_, headers, body, "application/json");
    if (!res) {
      text = "transport error: " + httplib::to_string(res.error());
      return false;
    }
    if (res->status != 200) {
      text = "http status " + std::to_string(res->status) + ": " + res->body;
      return false;
    }
    text = res->body;
    try {
      auto j = nlohmann::json::parse(res->body);
      if (j.is_object() && j.contains("text")) text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception&) {
    }
    return true;
  }

  HttpOracleConfig cfg_;
  PromptBook prompts_;
  std::string origin_;
  std::string path_;
  std::string token_;
};

}  // namespace baseplace
