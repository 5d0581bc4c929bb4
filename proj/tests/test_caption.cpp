#include "t2f/caption.hpp"

#include <set>
#include <string>

#include "doctest.h"
#include "t2f/errors.hpp"
#include "t2f/rng.hpp"

using namespace t2f;

namespace {

AttributeVector attrs_of(std::initializer_list<Attr> set_attrs) {
  AttributeVector a;
  for (Attr at : set_attrs) a.set(at, true);
  return a;
}

const std::string kManCaption =
    "The man has a chubby face. He sports a goatee with sideburns. His hair "
    "is black in color. He has narrow eyes and a slightly open mouth. The "
    "man looks young.";

}  // namespace

TEST_CASE("sample man caption parses to exactly its eight attributes") {
  const ParseResult r = parse_caption(kManCaption);
  const AttributeVector expected =
      attrs_of({Attr::Male, Attr::Chubby, Attr::Goatee, Attr::Sideburns,
                Attr::Black_Hair, Attr::Narrow_Eyes, Attr::Mouth_Slightly_Open,
                Attr::Young});
  CHECK(r.attrs == expected);
  CHECK(r.warnings.empty());
}

TEST_CASE("single-phrase caption") {
  const ParseResult r = parse_caption("She has arched eyebrows.");
  CHECK(r.attrs == attrs_of({Attr::Arched_Eyebrows}));
  CHECK_FALSE(r.attrs.get(Attr::Male));
}

TEST_CASE("parser is case-insensitive and accepts spelling variants") {
  CHECK(parse_caption("HIS HAIR IS BLACK IN COLOUR.")
            .attrs.get(Attr::Black_Hair));
  CHECK(parse_caption("His hair is black in color.")
            .attrs.get(Attr::Black_Hair));
  CHECK(parse_caption("He sports a mustache.").attrs.get(Attr::Mustache));
  CHECK(parse_caption("He sports a moustache.").attrs.get(Attr::Mustache));
}

TEST_CASE("combined paper phrasings") {
  const ParseResult r =
      parse_caption("He has big lips and big pointy nose. He sports a 5 "
                    "o'clock shadow. He is bald.");
  CHECK(r.attrs.get(Attr::Big_Lips));
  CHECK(r.attrs.get(Attr::Big_Nose));
  CHECK(r.attrs.get(Attr::Pointy_Nose));
  CHECK(r.attrs.get(Attr::Five_o_Clock_Shadow));
  CHECK(r.attrs.get(Attr::Bald));
}

TEST_CASE("unrecognized sentences are warnings, not failures") {
  const ParseResult r =
      parse_caption("She has arched eyebrows. The weather is nice today.");
  CHECK(r.attrs.get(Attr::Arched_Eyebrows));
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0] == "The weather is nice today.");
}

TEST_CASE("caption with nothing recognizable is an error") {
  CHECK_THROWS_AS(parse_caption("Nothing to see here."), DataError);
  CHECK_THROWS_AS(parse_caption("   "), DataError);
}

TEST_CASE("rendered woman caption carries the expected phrases") {
  const AttributeVector a = attrs_of(
      {Attr::Oval_Face, Attr::High_Cheekbones, Attr::Big_Lips,
       Attr::Arched_Eyebrows, Attr::Mouth_Slightly_Open, Attr::Smiling,
       Attr::Young, Attr::Attractive, Attr::Heavy_Makeup,
       Attr::Wearing_Earrings, Attr::Wearing_Necklace, Attr::Wearing_Lipstick});
  const Caption c = render_caption(a);
  for (const char* phrase :
       {"oval face", "high cheekbones", "big lips", "arched eyebrows",
        "slightly open mouth", "earrings, necklace and lipstick"}) {
    INFO("phrase = ", phrase, ", caption = ", c.text);
    CHECK(c.text.find(phrase) != std::string::npos);
  }
}

TEST_CASE("empty vector falls back to a minimal caption") {
  AttributeVector a;
  a.set(Attr::Male, true);
  CHECK(render_caption(a).text == "The man looks ordinary.");
  AttributeVector b;
  CHECK(render_caption(b).text == "The woman looks ordinary.");
}

TEST_CASE("rendering is deterministic") {
  Rng rng(4);
  const auto& g = CaptionGrammar::builtin();
  for (int i = 0; i < 20; ++i) {
    const AttributeVector a = g.random_valid(rng);
    CHECK(g.render(a).text == g.render(a).text);
  }
}

TEST_CASE("rendering rejects conflicting attributes") {
  AttributeVector a;
  a.set(Attr::Black_Hair, true);
  a.set(Attr::Brown_Hair, true);
  CHECK_THROWS_AS(render_caption(a), DataError);

  AttributeVector b;
  b.set(Attr::Bald, true);
  b.set(Attr::Wavy_Hair, true);
  CHECK_THROWS_AS(render_caption(b), DataError);
}

TEST_CASE("round trip over 1000 seeded valid vectors") {
  Rng rng(2024);
  const auto& g = CaptionGrammar::builtin();
  for (int i = 0; i < 1000; ++i) {
    const AttributeVector a = g.random_valid(rng);
    const Caption c = g.render(a);
    const ParseResult r = g.parse(c.text);
    INFO("caption = ", c.text);
    CHECK(r.attrs == a);
    CHECK(r.warnings.empty());
  }
}

TEST_CASE("rendering is injective on 1000 seeded vectors") {
  Rng rng(77);
  const auto& g = CaptionGrammar::builtin();
  std::set<std::string> texts;
  std::set<std::array<bool, kNumAttributes>> vecs;
  for (int i = 0; i < 1000; ++i) {
    const AttributeVector a = g.random_valid(rng);
    if (!vecs.insert(a.flags).second) continue;  // duplicate input vector
    CHECK(texts.insert(g.render(a).text).second);
  }
}

TEST_CASE("flip sets, repairs exclusivity and reports unknown names") {
  AttributeVector a;
  a.set(Attr::Brown_Hair, true);
  const AttributeVector b = flip_attribute(a, "Black_Hair", true);
  CHECK(b.get(Attr::Black_Hair));
  CHECK_FALSE(b.get(Attr::Brown_Hair));

  // Setting to the current value is a no-op on valid vectors.
  CHECK(flip_attribute(b, "Black_Hair", true) == b);
  CHECK(flip_attribute(b, "Smiling", b.get(Attr::Smiling)) == b);

  CHECK_THROWS_WITH_AS(flip_attribute(a, "Wears_Monocle", true),
                       doctest::Contains("unknown attribute"), DataError);
  try {
    flip_attribute(a, "Wears_Monocle", true);
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("Black_Hair") != std::string::npos);
  }
}

TEST_CASE("flip involution over all 40 names") {
  // Starting from vectors whose hair fields are clear, flipping any
  // attribute on and back off restores the original.
  Rng rng(15);
  const auto& g = CaptionGrammar::builtin();
  for (int trial = 0; trial < 25; ++trial) {
    AttributeVector a = g.random_valid(rng);
    for (Attr at : {Attr::Black_Hair, Attr::Blond_Hair, Attr::Brown_Hair,
                    Attr::Gray_Hair, Attr::Bald, Attr::Straight_Hair,
                    Attr::Wavy_Hair, Attr::Bangs, Attr::Receding_Hairline}) {
      a.set(at, false);
    }
    for (const auto& name : attribute_names()) {
      const bool orig = a.get(name);
      const AttributeVector flipped = g.flip(a, name, !orig);
      CHECK(flipped.get(name) == !orig);
      const AttributeVector back = g.flip(flipped, name, orig);
      INFO("attribute = ", std::string(name));
      CHECK(back == a);
    }
  }
}

TEST_CASE("builtin grammar matches the shipped grammar file") {
  const CaptionGrammar file_grammar =
      CaptionGrammar::from_file(std::string(T2F_SOURCE_DIR) +
                                "/core/data/caption_grammar_v1.txt");
  CHECK(file_grammar.version() == CaptionGrammar::builtin().version());
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const AttributeVector a = CaptionGrammar::builtin().random_valid(rng);
    const std::string text = CaptionGrammar::builtin().render(a).text;
    CHECK(file_grammar.render(a).text == text);
    CHECK(file_grammar.parse(text).attrs == a);
  }
}

TEST_CASE("attribute names serialize exactly as the canonical strings") {
  CHECK(attribute_names()[21] == "5_o_Clock_Shadow");
  CHECK(attribute_names()[0] == "Male");
  CHECK(attribute_names()[39] == "Blurry");
  CHECK(attribute_index("Wearing_Necktie") == 37);
}
