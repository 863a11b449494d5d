#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "eic/corpus.hpp"

namespace eic {

enum class InputStyle { natural, structured };

/// How a sample is rendered to model input text.
///
/// `response_cue` selects the generation templates (with "INPUT:"/"RESPONSE:" or
/// <input>/<response> framing); encoding approaches render without it.
struct InputFormat {
  InputStyle style = InputStyle::structured;
  bool include_instruction = false;
  bool response_cue = false;

  friend bool operator==(const InputFormat&, const InputFormat&) = default;
};

/// "natural", "structured", "inst+natural", "inst+structured" (response cue is set by the approach).
std::optional<InputFormat> parse_input_format(std::string_view s);
std::string to_string(const InputFormat& fmt);

/// Model input plus character offsets of the last character of each sentence segment.
struct EncodedInput {
  std::string text;
  std::optional<std::size_t> old_segment_end;
  std::optional<std::size_t> new_segment_end;

  friend bool operator==(const EncodedInput&, const EncodedInput&) = default;
};

/// Renders one sample. Absent sentences render as empty segments; for structured style the
/// segment end is the character just before the closing tag.
EncodedInput build_input(const EditSample& sample, const TaskSpec& task, const InputFormat& fmt);

/// Each side rendered alone (no instruction). An absent side yields an empty payload.
std::pair<EncodedInput, EncodedInput> build_siamese_inputs(const EditSample& sample,
                                                           const InputFormat& fmt);

/// Inverse of build_input for pair tasks: recovers (old, new) payloads from rendered text.
/// Empty payloads come back as empty strings.
std::pair<std::string, std::string> extract_payloads(std::string_view text, const TaskSpec& task,
                                                     const InputFormat& fmt);

}  // namespace eic
