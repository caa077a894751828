#pragma once

#include <map>
#include <optional>
#include <string>

#include "ovgsr/rationales.hpp"

// Chat-completion client used as a rationale backend. Prompts come from
// plain-text template files with {placeholder} substitution; the API
// credential is read from the OVGSR_JUDGE_API_KEY environment variable
// and never from config files or flags.
namespace ovgsr {

struct HttpBackendOptions {
  std::string base_url = "http://localhost:8080";
  std::string model = "judge-v1";
  std::string template_dir = "templates";
  std::string api_key_env = "OVGSR_JUDGE_API_KEY";
  int max_retries = 3;     // total attempts per request
  int backoff_ms = 100;    // doubled after each failed attempt
  int timeout_s = 30;
};

// First base-10 integer appearing anywhere in the reply, if any.
std::optional<int> first_integer(const std::string& text);

// Read a template file and substitute {name} -> value for every entry.
std::string load_template(const std::string& path);
std::string render_template(const std::string& tpl,
                            const std::map<std::string, std::string>& values);

class HttpBackend : public RationaleBackend {
 public:
  explicit HttpBackend(HttpBackendOptions opt);

  std::string id() const override;
  std::string pseudo_rationale(const std::string& image_id, RationaleKind kind,
                               const std::string& situation) override;
  int judge(const std::string& rationale, const std::string& situation) override;
  std::string refine(const std::string& rationale, const std::string& situation,
                     int score) override;
  std::string negative(const std::string& positive_text,
                       const std::string& situation) override;

  // One chat completion round-trip with retry/backoff; exposed so the
  // transport can be exercised directly against a local server.
  std::string generate(const std::string& prompt);

 private:
  HttpBackendOptions opt_;
  std::string tpl_pseudo_glimpse_, tpl_pseudo_gaze_, tpl_judge_, tpl_refine_,
      tpl_negative_;
};

}  // namespace ovgsr
