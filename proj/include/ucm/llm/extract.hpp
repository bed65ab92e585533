#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "ucm/core/text.hpp"
#include "ucm/error.hpp"

namespace ucm::llm {

enum class BlockFormat { json, plantuml };

struct StructuredBlock {
  std::string info;     // the fence's info string, e.g. "json"
  std::string text;     // raw block body
  nlohmann::json data;  // parsed payload for json blocks, null otherwise
  std::size_t offset = 0;  // byte offset of the body inside the reply
};

/// Finds the first ``` or ~~~ fenced block and parses it in the requested
/// format. Prose before and after the block is ignored.
inline StructuredBlock extract_structured_block(std::string_view content, BlockFormat format) {
  std::size_t pos = 0;
  std::size_t open_line = std::string_view::npos;
  std::string fence;
  std::string info;
  std::size_t body_start = 0;
  while (pos <= content.size()) {
    std::size_t eol = content.find('\n', pos);
    if (eol == std::string_view::npos) eol = content.size();
    std::string_view line = text::trim_view(content.substr(pos, eol - pos));
    if (open_line == std::string_view::npos) {
      if (line.starts_with("```") || line.starts_with("~~~")) {
        std::size_t n = 0;
        while (n < line.size() && line[n] == line[0]) ++n;
        fence = std::string(line.substr(0, n));
        info = text::to_lower(text::trim(line.substr(n)));
        open_line = pos;
        body_start = std::min(eol + 1, content.size());
      }
    } else if (line.starts_with(fence) && text::trim_view(line.substr(fence.size())).empty()) {
      StructuredBlock b;
      b.info = info;
      b.offset = body_start;
      b.text = std::string(content.substr(body_start, pos - body_start));
      if (format == BlockFormat::json) {
        try {
          b.data = nlohmann::json::parse(b.text);
        } catch (const nlohmann::json::parse_error& e) {
          throw Error("E-MALFORMED", std::string("fenced block is not valid JSON: ") + e.what(),
                      {{"position", body_start + (e.byte > 0 ? e.byte - 1 : 0)}});
        }
      }
      return b;
    }
    if (eol == content.size()) break;
    pos = eol + 1;
  }
  if (open_line != std::string_view::npos) {
    throw Error("E-MALFORMED", "fenced block is not closed", {{"position", content.size()}});
  }
  throw Error("E-NO-BLOCK", "the reply contains no fenced block");
}

}  // namespace ucm::llm
