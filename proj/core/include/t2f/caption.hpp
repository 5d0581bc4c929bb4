#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "t2f/rng.hpp"

namespace t2f {

inline constexpr size_t kNumAttributes = 40;

/// Canonical attribute order. Serialized names match these identifiers
/// verbatim (see attribute_names()).
enum class Attr : size_t {
  Male = 0,
  Young,
  Chubby,
  Double_Chin,
  Oval_Face,
  High_Cheekbones,
  Big_Lips,
  Big_Nose,
  Pointy_Nose,
  Narrow_Eyes,
  Arched_Eyebrows,
  Bushy_Eyebrows,
  Bald,
  Bangs,
  Black_Hair,
  Blond_Hair,
  Brown_Hair,
  Gray_Hair,
  Straight_Hair,
  Wavy_Hair,
  Receding_Hairline,
  Five_o_Clock_Shadow,
  Goatee,
  Mustache,
  Sideburns,
  No_Beard,
  Mouth_Slightly_Open,
  Smiling,
  Attractive,
  Heavy_Makeup,
  Pale_Skin,
  Rosy_Cheeks,
  Eyeglasses,
  Wearing_Earrings,
  Wearing_Hat,
  Wearing_Lipstick,
  Wearing_Necklace,
  Wearing_Necktie,
  Bags_Under_Eyes,
  Blurry,
};

const std::array<std::string_view, kNumAttributes>& attribute_names();
/// Index of a canonical attribute name; throws DataError listing the valid
/// names on an unknown one.
size_t attribute_index(std::string_view name);

/// 40 named binary facial attributes.
struct AttributeVector {
  std::array<bool, kNumAttributes> flags{};

  bool operator==(const AttributeVector&) const = default;
  bool get(Attr a) const { return flags[static_cast<size_t>(a)]; }
  void set(Attr a, bool v) { flags[static_cast<size_t>(a)] = v; }
  bool get(std::string_view name) const { return flags[attribute_index(name)]; }
  void set(std::string_view name, bool v) { flags[attribute_index(name)] = v; }
  /// Names of the set attributes, in canonical order.
  std::vector<std::string> set_names() const;
  size_t count() const;
};

struct Caption {
  enum class Provenance { Parsed, Rendered };
  std::string text;
  Provenance provenance = Provenance::Parsed;
};

struct ParseResult {
  AttributeVector attrs;
  std::vector<std::string> warnings;  // sentences with nothing recognized
};

/// Bidirectional mapping between templated facial captions and attribute
/// vectors, driven by the versioned phrase table shipped with the artifact.
class CaptionGrammar {
 public:
  static const CaptionGrammar& builtin();
  static CaptionGrammar from_file(const std::string& path);
  static CaptionGrammar from_text(std::string_view text);

  int version() const { return version_; }

  /// Scans the text for known phrases. Unrecognized sentences are collected
  /// as warnings; a text with no recognizable phrase or gender cue at all is
  /// a DataError.
  ParseResult parse(const std::string& text) const;

  /// Deterministic templated caption; every set attribute appears as exactly
  /// one phrase. Throws DataError if the vector violates the exclusivity
  /// invariants (two hair colours, bald plus hair phrases).
  Caption render(const AttributeVector& attrs) const;

  /// Sets one flag, repairing exclusivity (setting a hair colour clears the
  /// others and Bald; setting Bald clears hair colour/style/bangs/hairline).
  AttributeVector flip(const AttributeVector& attrs, std::string_view name,
                       bool value) const;

  /// Throws DataError if the exclusivity invariants are violated.
  void validate(const AttributeVector& attrs) const;

  /// Seeded random vector satisfying the exclusivity invariants.
  AttributeVector random_valid(Rng& rng) const;

 private:
  CaptionGrammar() = default;

  struct Phrase {
    std::vector<std::string> tokens;
    std::vector<size_t> attrs;
  };

  int version_ = 0;
  std::array<std::string, kNumAttributes> render_text_;
  std::array<std::string, kNumAttributes> group_;
  std::vector<Phrase> phrases_;  // sorted longest-first
  std::vector<std::string> male_tokens_;
  std::vector<std::string> female_tokens_;
};

ParseResult parse_caption(const std::string& text);
Caption render_caption(const AttributeVector& attrs);
AttributeVector flip_attribute(const AttributeVector& attrs,
                               std::string_view name, bool value);

}  // namespace t2f
