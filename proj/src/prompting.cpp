#include "eic/prompting.hpp"

#include "eic/error.hpp"

namespace eic {

std::optional<InputFormat> parse_input_format(std::string_view s) {
  InputFormat fmt;
  constexpr std::string_view inst = "inst+";
  if (s.starts_with(inst)) {
    fmt.include_instruction = true;
    s.remove_prefix(inst.size());
  }
  if (s == "natural") fmt.style = InputStyle::natural;
  else if (s == "structured") fmt.style = InputStyle::structured;
  else return std::nullopt;
  return fmt;
}

std::string to_string(const InputFormat& fmt) {
  std::string out = fmt.include_instruction ? "inst+" : "";
  out += fmt.style == InputStyle::natural ? "natural" : "structured";
  return out;
}

namespace {

/// Appends template pieces and records where each payload ends.
class Renderer {
 public:
  void literal(std::string_view s) { text_ += s; }

  /// Returns the segment-end offset for a naturally rendered payload.
  std::size_t natural(std::string_view payload) {
    const auto begin = text_.size();
    text_ += payload;
    if (!payload.empty()) return text_.size() - 1;
    return begin > 0 ? begin - 1 : 0;
  }

  /// "<tag> payload </tag>"; empty payload renders as "<tag> </tag>".
  std::size_t tagged(std::string_view tag, std::string_view payload) {
    text_ += '<';
    text_ += tag;
    text_ += "> ";
    if (!payload.empty()) {
      text_ += payload;
      text_ += ' ';
    }
    const auto end = text_.size() - 1;
    text_ += "</";
    text_ += tag;
    text_ += '>';
    return end;
  }

  std::string take() { return std::move(text_); }
  bool empty() const { return text_.empty(); }

 private:
  std::string text_;
};

}  // namespace

EncodedInput build_input(const EditSample& sample, const TaskSpec& task, const InputFormat& fmt) {
  const std::string_view old_s = sample.old_text ? std::string_view(*sample.old_text) : "";
  const std::string_view new_s = sample.new_text ? std::string_view(*sample.new_text) : "";
  const bool pair = task.input_arity == InputArity::pair;
  Renderer r;
  EncodedInput out;

  if (fmt.response_cue && fmt.style == InputStyle::natural) {
    if (fmt.include_instruction) {
      r.literal("Instruction: ");
      r.literal(task.instruction_text);
      r.literal("\n");
    }
    r.literal("INPUT:\n");
    if (pair) {
      r.literal("OLD: ");
      out.old_segment_end = r.natural(old_s);
      r.literal("\nNEW: ");
    } else {
      r.literal("TEXT: ");
    }
    out.new_segment_end = r.natural(new_s);
    r.literal("\nRESPONSE:");
  } else if (fmt.response_cue) {
    if (fmt.include_instruction) {
      r.literal("<instruction>\n");
      r.literal(task.instruction_text);
      r.literal("\n</instruction>\n");
    }
    r.literal("<input>\n");
    if (pair) {
      out.old_segment_end = r.tagged("old", old_s);
      r.literal("\n");
      out.new_segment_end = r.tagged("new", new_s);
    } else {
      out.new_segment_end = r.tagged("text", new_s);
    }
    r.literal("\n</input>\n<response>");
  } else {
    if (fmt.include_instruction) {
      r.literal(task.instruction_text);
      r.literal("\n");
    }
    if (fmt.style == InputStyle::natural) {
      if (pair) {
        out.old_segment_end = r.natural(old_s);
        r.literal("\n");
      }
      out.new_segment_end = r.natural(new_s);
    } else if (pair) {
      out.old_segment_end = r.tagged("old", old_s);
      r.literal("\n");
      out.new_segment_end = r.tagged("new", new_s);
    } else {
      out.new_segment_end = r.tagged("text", new_s);
    }
  }
  out.text = r.take();
  return out;
}

std::pair<EncodedInput, EncodedInput> build_siamese_inputs(const EditSample& sample,
                                                           const InputFormat& fmt) {
  auto side = [&](std::string_view tag, const std::optional<std::string>& payload, bool is_old) {
    Renderer r;
    EncodedInput in;
    std::optional<std::size_t> end;
    const std::string_view p = payload ? std::string_view(*payload) : "";
    if (fmt.style == InputStyle::structured) {
      end = r.tagged(tag, p);
    } else if (!p.empty()) {
      end = r.natural(p);
    }
    (is_old ? in.old_segment_end : in.new_segment_end) = end;
    in.text = r.take();
    return in;
  };
  return {side("old", sample.old_text, true), side("new", sample.new_text, false)};
}

namespace {

std::string between_tags(std::string_view text, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + "> ";
  const std::string close = "</" + std::string(tag) + ">";
  const auto b = text.find(open);
  if (b == std::string_view::npos) throw DataError("missing <" + std::string(tag) + "> segment");
  const auto start = b + open.size();
  const auto e = text.find(close, start);
  if (e == std::string_view::npos) throw DataError("missing " + close);
  if (e == start) return {};  // "<tag> </tag>"
  return std::string(text.substr(start, e - start - 1));
}

std::string after_prefix_line(std::string_view text, std::string_view prefix) {
  const auto b = text.find(prefix);
  if (b == std::string_view::npos) throw DataError("missing '" + std::string(prefix) + "' line");
  const auto start = b + prefix.size();
  return std::string(text.substr(start, text.find('\n', start) - start));
}

}  // namespace

std::pair<std::string, std::string> extract_payloads(std::string_view text, const TaskSpec& task,
                                                     const InputFormat& fmt) {
  const bool pair = task.input_arity == InputArity::pair;
  if (fmt.style == InputStyle::structured) {
    if (!pair) return {{}, between_tags(text, "text")};
    return {between_tags(text, "old"), between_tags(text, "new")};
  }
  if (fmt.response_cue) {
    if (!pair) return {{}, after_prefix_line(text, "\nTEXT: ")};
    return {after_prefix_line(text, "\nOLD: "), after_prefix_line(text, "\nNEW: ")};
  }
  if (fmt.include_instruction) {
    const std::string head = task.instruction_text + "\n";
    if (!text.starts_with(head)) throw DataError("missing instruction line");
    text.remove_prefix(head.size());
  }
  if (!pair) return {{}, std::string(text)};
  const auto nl = text.find('\n');
  if (nl == std::string_view::npos) throw DataError("natural pair input lacks a line break");
  return {std::string(text.substr(0, nl)), std::string(text.substr(nl + 1))};
}

}  // namespace eic
