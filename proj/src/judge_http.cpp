#include "ovgsr/judge_http.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ovgsr/errors.hpp"

namespace ovgsr {

std::optional<int> first_integer(const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
    std::size_t j = i;
    long v = 0;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
      v = v * 10 + (text[j] - '0');
      if (v > 1000000) v = 1000000;  // scores never need more
      ++j;
    }
    const bool neg = i > 0 && text[i - 1] == '-';
    return static_cast<int>(neg ? -v : v);
  }
  return std::nullopt;
}

std::string load_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("missing prompt template: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string render_template(const std::string& tpl,
                            const std::map<std::string, std::string>& values) {
  std::string out = tpl;
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = out.find(token, pos)) != std::string::npos) {
      out.replace(pos, token.size(), value);
      pos += value.size();
    }
  }
  return out;
}

HttpBackend::HttpBackend(HttpBackendOptions opt) : opt_(std::move(opt)) {
  if (opt_.max_retries < 1) throw InvalidConfig("max_retries must be >= 1");
  const std::string dir = opt_.template_dir + "/";
  tpl_pseudo_glimpse_ = load_template(dir + "pseudo_glimpse.txt");
  tpl_pseudo_gaze_ = load_template(dir + "pseudo_gaze.txt");
  tpl_judge_ = load_template(dir + "judge.txt");
  tpl_refine_ = load_template(dir + "refine.txt");
  tpl_negative_ = load_template(dir + "negative.txt");
}

std::string HttpBackend::id() const { return "http:" + opt_.model; }

std::string HttpBackend::generate(const std::string& prompt) {
  nlohmann::json body;
  body["model"] = opt_.model;
  body["messages"] = nlohmann::json::array(
      {nlohmann::json{{"role", "user"}, {"content", prompt}}});

  httplib::Client client(opt_.base_url);
  client.set_connection_timeout(opt_.timeout_s, 0);
  client.set_read_timeout(opt_.timeout_s, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(opt_.api_key_env.c_str()))
    headers.emplace("Authorization", std::string("Bearer ") + key);

  std::string last_error;
  for (int attempt = 0; attempt < opt_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(opt_.backoff_ms << (attempt - 1)));
    httplib::Result res = client.Post("/v1/chat/completions", headers,
                                      body.dump(), "application/json");
    if (!res) {
      last_error = "transport error " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    try {
      const nlohmann::json reply = nlohmann::json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("bad completion payload: ") + e.what();
    }
  }
  throw BackendError("chat completion failed after " +
                     std::to_string(opt_.max_retries) + " attempts: " +
                     last_error);
}

std::string HttpBackend::pseudo_rationale(const std::string& image_id,
                                          RationaleKind kind,
                                          const std::string& situation) {
  const std::string& tpl = kind == RationaleKind::Glimpse ? tpl_pseudo_glimpse_
                                                          : tpl_pseudo_gaze_;
  return generate(
      render_template(tpl, {{"image_id", image_id}, {"situation", situation}}));
}

int HttpBackend::judge(const std::string& rationale, const std::string& situation) {
  const std::string prompt = render_template(
      tpl_judge_, {{"rationale", rationale}, {"situation", situation}});
  for (int attempt = 0; attempt < 3; ++attempt) {
    const std::string reply = generate(prompt);
    if (const std::optional<int> v = first_integer(reply))
      return std::min(10, std::max(1, *v));
  }
  throw InvalidScore("judge reply carried no integer after 3 attempts");
}

std::string HttpBackend::refine(const std::string& rationale,
                                const std::string& situation, int score) {
  return generate(render_template(tpl_refine_,
                                  {{"rationale", rationale},
                                   {"situation", situation},
                                   {"score", std::to_string(score)}}));
}

std::string HttpBackend::negative(const std::string& positive_text,
                                  const std::string& situation) {
  return generate(render_template(
      tpl_negative_, {{"rationale", positive_text}, {"situation", situation}}));
}

}  // namespace ovgsr
