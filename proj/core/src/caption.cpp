#include "t2f/caption.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "t2f/errors.hpp"
#include "t2f_grammar_text.hpp"

namespace t2f {

namespace {

constexpr std::array<std::string_view, kNumAttributes> kNames = {
    "Male",
    "Young",
    "Chubby",
    "Double_Chin",
    "Oval_Face",
    "High_Cheekbones",
    "Big_Lips",
    "Big_Nose",
    "Pointy_Nose",
    "Narrow_Eyes",
    "Arched_Eyebrows",
    "Bushy_Eyebrows",
    "Bald",
    "Bangs",
    "Black_Hair",
    "Blond_Hair",
    "Brown_Hair",
    "Gray_Hair",
    "Straight_Hair",
    "Wavy_Hair",
    "Receding_Hairline",
    "5_o_Clock_Shadow",
    "Goatee",
    "Mustache",
    "Sideburns",
    "No_Beard",
    "Mouth_Slightly_Open",
    "Smiling",
    "Attractive",
    "Heavy_Makeup",
    "Pale_Skin",
    "Rosy_Cheeks",
    "Eyeglasses",
    "Wearing_Earrings",
    "Wearing_Hat",
    "Wearing_Lipstick",
    "Wearing_Necklace",
    "Wearing_Necktie",
    "Bags_Under_Eyes",
    "Blurry",
};

// Lowercase word tokens; apostrophes are dropped inside words so that
// "o'clock" -> "oclock" and "She's" -> "shes".
std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'') {
      continue;
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (cur.find_first_not_of(" \t\r\n") != std::string::npos) {
    out.push_back(cur);
  }
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t pos = 0;
  while (pos <= line.size()) {
    const size_t tab = line.find('\t', pos);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
  return fields;
}

// Joins items as "a, b and c".
std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
    out += items[i];
  }
  return out;
}

bool is_hair_color(size_t i) {
  const Attr a = static_cast<Attr>(i);
  return a == Attr::Black_Hair || a == Attr::Blond_Hair ||
         a == Attr::Brown_Hair || a == Attr::Gray_Hair;
}

bool is_bald_conflict(size_t i) {
  const Attr a = static_cast<Attr>(i);
  return is_hair_color(i) || a == Attr::Straight_Hair ||
         a == Attr::Wavy_Hair || a == Attr::Bangs ||
         a == Attr::Receding_Hairline;
}

}  // namespace

const std::array<std::string_view, kNumAttributes>& attribute_names() {
  return kNames;
}

size_t attribute_index(std::string_view name) {
  for (size_t i = 0; i < kNumAttributes; ++i) {
    if (kNames[i] == name) return i;
  }
  std::string msg = "unknown attribute '" + std::string(name) + "'; valid: ";
  for (size_t i = 0; i < kNumAttributes; ++i) {
    if (i) msg += ", ";
    msg += kNames[i];
  }
  throw DataError(msg);
}

std::vector<std::string> AttributeVector::set_names() const {
  std::vector<std::string> out;
  for (size_t i = 0; i < kNumAttributes; ++i) {
    if (flags[i]) out.emplace_back(kNames[i]);
  }
  return out;
}

size_t AttributeVector::count() const {
  size_t n = 0;
  for (bool f : flags) n += f ? 1 : 0;
  return n;
}

CaptionGrammar CaptionGrammar::from_text(std::string_view text) {
  CaptionGrammar g;
  std::array<bool, kNumAttributes> have_attr{};
  std::istringstream in{std::string(text)};
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_fields(line);
    const std::string where = " (grammar line " + std::to_string(lineno) + ")";
    if (f[0] == "version" && f.size() == 2) {
      g.version_ = std::stoi(std::string(f[1]));
    } else if (f[0] == "gender" && f.size() == 3) {
      auto& dst = f[1] == "male" ? g.male_tokens_ : g.female_tokens_;
      dst = tokenize(f[2]);
    } else if (f[0] == "attr" && f.size() == 4) {
      const size_t idx = attribute_index(f[1]);
      g.group_[idx] = std::string(f[2]);
      g.render_text_[idx] = std::string(f[3]);
      have_attr[idx] = true;
    } else if (f[0] == "parse" && f.size() == 3) {
      Phrase p;
      std::string names(f[1]);
      size_t pos = 0;
      while (pos < names.size()) {
        size_t comma = names.find(',', pos);
        if (comma == std::string::npos) comma = names.size();
        p.attrs.push_back(attribute_index(names.substr(pos, comma - pos)));
        pos = comma + 1;
      }
      p.tokens = tokenize(f[2]);
      if (p.tokens.empty()) throw DataError("empty parse phrase" + where);
      g.phrases_.push_back(std::move(p));
    } else {
      throw DataError("malformed grammar line '" + line + "'" + where);
    }
  }
  for (size_t i = 0; i < kNumAttributes; ++i) {
    if (!have_attr[i]) {
      throw DataError("grammar missing attr row for " + std::string(kNames[i]));
    }
  }
  if (g.version_ <= 0) throw DataError("grammar missing version");
  if (g.male_tokens_.empty() || g.female_tokens_.empty()) {
    throw DataError("grammar missing gender rows");
  }
  // Longest phrase first so e.g. "slightly open mouth" wins over "open mouth".
  std::stable_sort(g.phrases_.begin(), g.phrases_.end(),
                   [](const Phrase& a, const Phrase& b) {
                     return a.tokens.size() > b.tokens.size();
                   });
  return g;
}

CaptionGrammar CaptionGrammar::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open grammar file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

const CaptionGrammar& CaptionGrammar::builtin() {
  static const CaptionGrammar g = from_text(detail::kGrammarText);
  return g;
}

ParseResult CaptionGrammar::parse(const std::string& text) const {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw DataError("parse: empty caption");
  }
  ParseResult result;
  int male_votes = 0, female_votes = 0;
  bool any_phrase = false;
  for (const std::string& sentence : split_sentences(text)) {
    const auto tokens = tokenize(sentence);
    if (tokens.empty()) continue;
    std::vector<bool> used(tokens.size(), false);
    bool sentence_recognized = false;
    for (const Phrase& p : phrases_) {
      if (p.tokens.size() > tokens.size()) continue;
      for (size_t start = 0; start + p.tokens.size() <= tokens.size();
           ++start) {
        bool match = true;
        for (size_t k = 0; k < p.tokens.size(); ++k) {
          if (used[start + k] || tokens[start + k] != p.tokens[k]) {
            match = false;
            break;
          }
        }
        if (!match) continue;
        for (size_t k = 0; k < p.tokens.size(); ++k) used[start + k] = true;
        for (size_t a : p.attrs) result.attrs.flags[a] = true;
        sentence_recognized = true;
        any_phrase = true;
      }
    }
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (used[i]) continue;
      if (std::find(male_tokens_.begin(), male_tokens_.end(), tokens[i]) !=
          male_tokens_.end()) {
        ++male_votes;
        sentence_recognized = true;
      } else if (std::find(female_tokens_.begin(), female_tokens_.end(),
                           tokens[i]) != female_tokens_.end()) {
        ++female_votes;
        sentence_recognized = true;
      }
    }
    if (!sentence_recognized) {
      std::string s = sentence;
      const size_t a = s.find_first_not_of(" \t\r\n");
      result.warnings.push_back(s.substr(a));
    }
  }
  if (!any_phrase && male_votes == 0 && female_votes == 0) {
    throw DataError("parse: no recognizable phrase in caption: " + text);
  }
  result.attrs.set(Attr::Male, male_votes > female_votes);
  return result;
}

void CaptionGrammar::validate(const AttributeVector& a) const {
  size_t colors = 0;
  for (size_t i = 0; i < kNumAttributes; ++i) {
    if (is_hair_color(i) && a.flags[i]) ++colors;
  }
  if (colors > 1) {
    throw DataError("attribute vector invalid: multiple hair colours set");
  }
  if (a.get(Attr::Bald)) {
    for (size_t i = 0; i < kNumAttributes; ++i) {
      if (is_bald_conflict(i) && a.flags[i]) {
        throw DataError(
            "attribute vector invalid: Bald conflicts with " +
            std::string(kNames[i]));
      }
    }
  }
}

Caption CaptionGrammar::render(const AttributeVector& a) const {
  validate(a);
  const bool male = a.get(Attr::Male);
  const std::string subject = male ? "The man" : "The woman";
  const std::string pro = male ? "He" : "She";
  const std::string pos = male ? "His" : "Her";

  auto group_items = [&](std::string_view group,
                         const std::vector<Attr>& order) {
    std::vector<std::string> items;
    for (Attr at : order) {
      const size_t i = static_cast<size_t>(at);
      if (a.flags[i] && group_[i] == group) items.push_back(render_text_[i]);
    }
    return items;
  };

  std::vector<std::string> sentences;

  const auto face = group_items(
      "face", {Attr::Chubby, Attr::Double_Chin, Attr::Oval_Face,
               Attr::High_Cheekbones});
  if (!face.empty()) sentences.push_back(subject + " has " + join_list(face) + ".");

  const auto beard = group_items(
      "beard", {Attr::Five_o_Clock_Shadow, Attr::Goatee, Attr::Mustache,
                Attr::Sideburns});
  if (!beard.empty()) sentences.push_back(pro + " sports " + join_list(beard) + ".");

  if (a.get(Attr::No_Beard)) sentences.push_back(pro + " has no beard.");

  if (a.get(Attr::Bald)) {
    sentences.push_back(pro + " is bald.");
  } else {
    std::vector<std::string> styles;
    if (a.get(Attr::Straight_Hair)) styles.push_back("straight hair");
    if (a.get(Attr::Wavy_Hair)) styles.push_back("wavy hair");
    std::string color;
    for (size_t i = 0; i < kNumAttributes; ++i) {
      if (is_hair_color(i) && a.flags[i]) color = render_text_[i];
    }
    const bool bangs = a.get(Attr::Bangs);
    if (!styles.empty()) {
      std::string s = pro + " has " + join_list(styles);
      if (!color.empty()) s += " which is " + color + " in colour";
      if (bangs) s += " with bangs";
      sentences.push_back(s + ".");
    } else if (!color.empty()) {
      std::string s = pos + " hair is " + color + " in colour";
      if (bangs) s += " with bangs";
      sentences.push_back(s + ".");
    } else if (bangs) {
      sentences.push_back(pro + " has bangs.");
    }
  }

  if (a.get(Attr::Receding_Hairline)) {
    sentences.push_back(pro + " has a receding hairline.");
  }

  const auto features = group_items(
      "feature",
      {Attr::Big_Lips, Attr::Big_Nose, Attr::Pointy_Nose, Attr::Narrow_Eyes,
       Attr::Arched_Eyebrows, Attr::Bushy_Eyebrows, Attr::Bags_Under_Eyes,
       Attr::Mouth_Slightly_Open});
  if (!features.empty()) {
    sentences.push_back(pro + " has " + join_list(features) + ".");
  }

  if (a.get(Attr::Smiling)) sentences.push_back(pro + " is smiling.");
  if (a.get(Attr::Young)) sentences.push_back(pro + " looks young.");
  if (a.get(Attr::Attractive)) sentences.push_back(pro + " looks attractive.");

  const auto skin = group_items(
      "skin", {Attr::Heavy_Makeup, Attr::Pale_Skin, Attr::Rosy_Cheeks});
  if (!skin.empty()) sentences.push_back(pro + " has " + join_list(skin) + ".");

  const auto wear = group_items(
      "wear", {Attr::Eyeglasses, Attr::Wearing_Earrings, Attr::Wearing_Hat,
               Attr::Wearing_Necklace, Attr::Wearing_Necktie,
               Attr::Wearing_Lipstick});
  if (!wear.empty()) {
    sentences.push_back(pro + "'s wearing " + join_list(wear) + ".");
  }

  if (a.get(Attr::Blurry)) sentences.push_back("The image is blurry.");

  if (sentences.empty()) sentences.push_back(subject + " looks ordinary.");

  Caption c;
  c.provenance = Caption::Provenance::Rendered;
  for (size_t i = 0; i < sentences.size(); ++i) {
    if (i) c.text += ' ';
    c.text += sentences[i];
  }
  return c;
}

AttributeVector CaptionGrammar::flip(const AttributeVector& attrs,
                                     std::string_view name,
                                     bool value) const {
  const size_t idx = attribute_index(name);
  AttributeVector out = attrs;
  out.flags[idx] = value;
  if (value) {
    if (is_hair_color(idx)) {
      for (size_t i = 0; i < kNumAttributes; ++i) {
        if (is_hair_color(i) && i != idx) out.flags[i] = false;
      }
      out.set(Attr::Bald, false);
    } else if (idx == static_cast<size_t>(Attr::Bald)) {
      for (size_t i = 0; i < kNumAttributes; ++i) {
        if (is_bald_conflict(i)) out.flags[i] = false;
      }
    } else if (is_bald_conflict(idx)) {
      out.set(Attr::Bald, false);
    }
  }
  return out;
}

AttributeVector CaptionGrammar::random_valid(Rng& rng) const {
  AttributeVector a;
  a.set(Attr::Male, rng.bernoulli(0.5));
  for (size_t i = 1; i < kNumAttributes; ++i) {
    double p = 0.3;
    if (is_hair_color(i)) p = 0.15;
    if (i == static_cast<size_t>(Attr::Bald)) p = 0.08;
    a.flags[i] = rng.bernoulli(p);
  }
  // Repair to a valid vector: keep one hair colour, resolve Bald conflicts.
  std::vector<size_t> colors;
  for (size_t i = 0; i < kNumAttributes; ++i) {
    if (is_hair_color(i) && a.flags[i]) colors.push_back(i);
  }
  if (colors.size() > 1) {
    const size_t keep = colors[rng.index(colors.size())];
    for (size_t i : colors) a.flags[i] = (i == keep);
  }
  if (a.get(Attr::Bald)) {
    bool conflict = false;
    for (size_t i = 0; i < kNumAttributes; ++i) {
      if (is_bald_conflict(i) && a.flags[i]) conflict = true;
    }
    if (conflict) {
      if (rng.bernoulli(0.5)) {
        a.set(Attr::Bald, false);
      } else {
        for (size_t i = 0; i < kNumAttributes; ++i) {
          if (is_bald_conflict(i)) a.flags[i] = false;
        }
      }
    }
  }
  return a;
}

ParseResult parse_caption(const std::string& text) {
  return CaptionGrammar::builtin().parse(text);
}

Caption render_caption(const AttributeVector& attrs) {
  return CaptionGrammar::builtin().render(attrs);
}

AttributeVector flip_attribute(const AttributeVector& attrs,
                               std::string_view name, bool value) {
  return CaptionGrammar::builtin().flip(attrs, name, value);
}

}  // namespace t2f
