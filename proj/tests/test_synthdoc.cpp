#include <catch_amalgamated.hpp>

#include <set>

#include "dimt/metrics/structure.hpp"
#include "dimt/synthdoc/corpus.hpp"
#include "support.hpp"

using namespace dimt;

namespace {

GenConfig small_config(std::uint64_t seed, int n) {
  GenConfig c;
  c.seed = seed;
  c.samples = n;
  c.vocab_size = 32;
  c.min_words = 6;
  c.max_words = 14;
  c.render.height = 96;
  c.render.width = 72;
  c.render.margin = 2;
  c.render.body_scale = 1.0;
  return c;
}

std::string file_bytes(const std::filesystem::path& p) { return read_text_file(p); }

int ink_left(const RasterImage& img, int y0, int y1) {
  for (int x = 0; x < img.width(); ++x)
    for (int y = y0; y < y1; ++y)
      if (img.at(y, x, 0) < 1.0F) return x;
  return -1;
}

int ink_rows(const RasterImage& img, int y0, int y1) {
  int first = -1, last = -1;
  for (int y = y0; y < y1; ++y)
    for (int x = 0; x < img.width(); ++x)
      if (img.at(y, x, 0) < 1.0F) {
        if (first < 0) first = y;
        last = y;
        break;
      }
  return first < 0 ? 0 : last - first + 1;
}

}  // namespace

TEST_CASE("glyphs are pairwise distinct") {
  std::set<std::string> seen;
  const std::string chars = "abcdefghijklmnopqrstuvwxyz123+=-";
  for (char c : chars) {
    std::string key;
    for (auto row : font::glyph(c)) key += std::string(row);
    REQUIRE(seen.insert(key).second);
  }
}

TEST_CASE("translate_source follows the lexicon and keeps markup") {
  Lexicon lx({{"alpha", "ALQ"}, {"beta", "BEQ"}});
  REQUIRE(translate_source("# alpha beta", lx) == "# ALQ BEQ");
  REQUIRE(translate_source("", lx).empty());
  REQUIRE(translate_source("- alpha $x+y$ qq", lx) == "- ALQ $x+y$ ZQQ");
  REQUIRE(translate_source("| alpha | beta |\n| --- | --- |", lx) == "| ALQ | BEQ |\n| --- | --- |");
  REQUIRE(translate_source("$$x=1$$", lx) == "$$x=1$$");
  REQUIRE(translate_source("a $ x + y $ b", lx) == "ZA $ x + y $ ZB");
  REQUIRE(invert_target("# ALQ ZQQ", lx) == "# alpha qq");
  REQUIRE_THROWS_AS(Lexicon(std::vector<std::pair<std::string, std::string>>{{"a", "ZZZ"}}), DataError);
  REQUIRE_THROWS_AS(Lexicon({{"a", "AAA"}, {"b", "AAA"}}), DataError);
}

TEST_CASE("translation inverts exactly on generated documents") {
  GenConfig cfg = small_config(3, 1);
  cfg.vocab_size = 100;
  const Lexicon lx = Lexicon::generate(5, cfg.vocab_size);
  DocumentGenerator gen(cfg, lx);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const std::string src = gen(rng);
    const std::string tgt = translate_source(src, lx);
    REQUIRE(invert_target(tgt, lx) == src);
    REQUIRE(parse_structure_tree(src) == parse_structure_tree(tgt));
  }
}

TEST_CASE("context length and layout complexity") {
  REQUIRE(measure_context_length("one two three") == 3);
  REQUIRE(measure_context_length("") == 0);
  REQUIRE(measure_context_length("# ab $x+y$ cd\n\n| ef | --- |") == 3);
  REQUIRE(measure_layout_complexity("") == 1);
  REQUIRE(measure_layout_complexity("# h\n\npara") == 3);

  GenConfig cfg = small_config(1, 1);
  cfg.min_words = cfg.max_words = 120;
  const Lexicon lx = Lexicon::generate(1, cfg.vocab_size);
  DocumentGenerator gen(cfg, lx);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) REQUIRE(measure_context_length(gen(rng)) == 120);

  GenConfig page = cfg;
  page.render = RenderConfig{};
  page.render.body_scale = 1.0;
  page.render.height = 512;
  auto [md, img] = make_document(page, lx, 0);
  REQUIRE(measure_context_length(md) == 120);

  cfg.min_words = 6;
  cfg.max_words = 40;
  DocumentGenerator g2(cfg, lx);
  for (int i = 0; i < 500; ++i) {
    const std::string d = g2(rng);
    REQUIRE(measure_layout_complexity(d) == static_cast<int>(parse_structure_tree(d).size()));
  }
}

TEST_CASE("vocabulary round trips canonical markdown") {
  const Lexicon lx = Lexicon::generate(9, 40);
  const Vocabulary sv = source_vocabulary(lx);
  const Vocabulary tv = target_vocabulary(lx);
  REQUIRE(sv.token(kPad) == "<pad>");
  REQUIRE(sv.token(kNewline) == "<nl>");
  GenConfig cfg = small_config(1, 1);
  DocumentGenerator gen(cfg, lx);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 300; ++i) {
    const std::string src = gen(rng);
    const auto ids = sv.encode(src);
    REQUIRE(std::find(ids.begin(), ids.end(), kUnk) == ids.end());
    REQUIRE(sv.decode(ids) == src);
    const std::string tgt = translate_source(src, lx);
    REQUIRE(tv.decode(tv.encode(tgt)) == tgt);
  }
  REQUIRE(sv.encode("$x+1$") == std::vector<int>{sv.id("$"), sv.id("x"), sv.id("+"), sv.id("1"), sv.id("$")});
  REQUIRE(sv.decode({kBos, sv.id("$"), sv.id("x"), sv.id("$"), kEos, sv.id("x")}) == "$x$");
}

TEST_CASE("render_document contracts") {
  RenderConfig rc;
  rc.height = 224;
  rc.width = 168;
  const RasterImage blank = render_document("", rc);
  REQUIRE(blank.height() == 224);
  REQUIRE(blank.width() == 168);
  for (float v : blank.pixels()) REQUIRE(v == 1.0F);

  const std::string md = "# ab cd\n\nef gh ij\n\n- kl\n- mn\n\n$$x+y=2$$\n\n| ab | cd |\n| --- | --- |\n| ef | gh |";
  const RasterImage a = render_document(md, rc);
  REQUIRE(a == render_document(md, rc));
  for (float v : a.pixels()) REQUIRE((v >= 0.0F && v <= 1.0F));

  // Heading glyphs are taller than body glyphs.
  const RasterImage h = render_document("# ab", rc);
  const RasterImage p = render_document("ab", rc);
  REQUIRE(ink_rows(h, 0, 224) > ink_rows(p, 0, 224));

  // List text starts to the right of paragraph text; the bullet itself is indented too.
  const RasterImage l = render_document("- ab", rc);
  REQUIRE(ink_left(l, 0, 224) > ink_left(p, 0, 224));

  RenderConfig tiny = rc;
  tiny.height = 20;
  REQUIRE_THROWS_AS(render_document("ab cd ef\n\ngh ij kl\n\nmn op", tiny), RenderOverflow);
  RenderConfig narrow = rc;
  narrow.width = 12;
  REQUIRE_THROWS_AS(render_document("abcdefgh", narrow), RenderOverflow);
  RenderConfig bad = rc;
  bad.height = 0;
  REQUIRE_THROWS_AS(render_document("", bad), ContractError);
}

TEST_CASE("noisy preset jitters rendering deterministically") {
  GenConfig c = small_config(3, 1);
  c.preset = "noisy";
  const Lexicon lx = Lexicon::generate(1, c.vocab_size);
  auto [md, img] = make_document(c, lx, 0);
  auto [md2, img2] = make_document(c, lx, 0);
  REQUIRE(img == img2);
  const RasterImage clean = render_document(md, small_config(3, 1).effective_render());
  REQUIRE_FALSE(clean == img);
}

TEST_CASE("generate_corpus is deterministic and partitions splits") {
  namespace fs = std::filesystem;
  const auto root = dimt::testing::scratch_dir("corpus");
  const GenConfig cfg = small_config(7, 10);
  const auto m1 = generate_corpus(cfg, root / "a");
  const auto m2 = generate_corpus(cfg, root / "b");
  REQUIRE(file_bytes(root / "a" / "manifest.jsonl") == file_bytes(root / "b" / "manifest.jsonl"));
  for (const auto& id : m1.ids) {
    REQUIRE(file_bytes(root / "a" / "images" / (id + ".ppm")) == file_bytes(root / "b" / "images" / (id + ".ppm")));
    REQUIRE(file_bytes(root / "a" / "text" / (id + ".ref.md")) == file_bytes(root / "b" / "text" / (id + ".ref.md")));
  }

  std::set<std::string> all;
  std::size_t total = 0;
  for (const char* s : {"train", "valid", "test"}) {
    for (const auto& id : m1.ids_in(s)) all.insert(id);
    total += m1.ids_in(s).size();
  }
  REQUIRE(all.size() == m1.ids.size());
  REQUIRE(total == m1.ids.size());

  const Corpus c = load_corpus(root / "a");
  REQUIRE(c.samples.size() == 10);
  for (const auto& s : c.samples) {
    REQUIRE(s.image.height() == 96);
    REQUIRE(s.reference_markdown == translate_source(s.source_markdown, c.lexicon));
    REQUIRE(s.context_length >= 6);
    REQUIRE(s.context_length <= 14);
  }

  GenConfig one = small_config(7, 1);
  one.train = 1;
  one.valid = one.test = 0;
  const auto m3 = generate_corpus(one, root / "one");
  REQUIRE(m3.ids_in("train").size() == 1);
  REQUIRE(m3.ids_in("valid").empty());
  REQUIRE(m3.ids_in("test").empty());

  fs::remove(root / "a" / "text" / "doc-00003.src.md");
  REQUIRE_THROWS_AS(load_corpus(root / "a"), DataError);
  REQUIRE_THROWS_AS(load_corpus(root / "missing"), DataError);
}

TEST_CASE("different seeds change content but not the config snapshot") {
  const auto root = dimt::testing::scratch_dir("seeds");
  const auto a = generate_corpus(small_config(7, 100), root / "s7");
  const auto b = generate_corpus(small_config(8, 100), root / "s8");
  Json ca = a.config, cb = b.config;
  REQUIRE(ca["seed"] == 7);
  ca.erase("seed");
  cb.erase("seed");
  REQUIRE(ca == cb);
  Fnv1a ha, hb;
  for (const auto& id : a.ids) {
    ha.update(file_bytes(root / "s7" / "text" / (id + ".src.md")));
    hb.update(file_bytes(root / "s8" / "text" / (id + ".src.md")));
  }
  REQUIRE(ha.digest() != hb.digest());
}

TEST_CASE("generation config errors") {
  const auto root = dimt::testing::scratch_dir("bad");
  GenConfig c = small_config(1, 5);
  c.train = 0.5;
  REQUIRE_THROWS_AS(generate_corpus(c, root), ContractError);
  c = small_config(1, 5);
  c.vocab_size = 4;
  REQUIRE_THROWS_AS(generate_corpus(c, root), ContractError);
  c = small_config(1, 0);
  REQUIRE_THROWS_AS(generate_corpus(c, root), ContractError);
  c = small_config(1, 2);
  c.min_words = c.max_words = 400;
  REQUIRE_THROWS_AS(generate_corpus(c, root), DataError);

  const Json j = to_json(small_config(4, 3));
  REQUIRE(to_json(gen_config_from_json(j)) == j);
  Json typo = j;
  typo["sampels"] = 3;
  REQUIRE_THROWS_AS(gen_config_from_json(typo), DataError);
}
