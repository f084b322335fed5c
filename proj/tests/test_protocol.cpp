#include <doctest.h>

#include <string>
#include <vector>

#include "adarank/protocol.hpp"
#include "adarank/rng.hpp"
#include "test_util.hpp"

using namespace adarank;
using protocol::MalformedPolicy;
using protocol::ParseFailure;
using protocol::PromptTemplate;
using protocol::parse_selection;
using protocol::render_selection;

TEST_CASE("default template validates; broken templates do not") {
    auto tpl = PromptTemplate::default_template();
    CHECK_NOTHROW(tpl.validate());

    auto no_term = tpl;
    no_term.instruction_text = "Rank with \" > \" please.";
    CHECK_THROWS_AS(no_term.validate(), std::invalid_argument);

    auto no_sep = tpl;
    no_sep.instruction_text = "Output [0] if nothing fits.";
    CHECK_THROWS_AS(no_sep.validate(), std::invalid_argument);

    auto no_ordinal = tpl;
    no_ordinal.per_passage_format = "{title}: {text}";
    CHECK_THROWS_AS(no_ordinal.validate(), std::invalid_argument);

    auto bad_budget = tpl;
    bad_budget.per_passage_char_budget = 0;
    CHECK_THROWS_AS(bad_budget.validate(), std::invalid_argument);
}

TEST_CASE("template file round-trip and hash sensitivity") {
    testutil::TempDir tmp;
    auto tpl = PromptTemplate::default_template();
    testutil::spit(tmp.file("tpl.json"), tpl.to_json_string());
    auto back = PromptTemplate::from_file(tmp.file("tpl.json"));
    CHECK(back.system_text == tpl.system_text);
    CHECK(back.per_passage_format == tpl.per_passage_format);
    CHECK(back.instruction_text == tpl.instruction_text);
    CHECK(back.per_passage_char_budget == tpl.per_passage_char_budget);
    CHECK(protocol::template_hash(back) == protocol::template_hash(tpl));

    auto changed = tpl;
    changed.instruction_text += " Be quick about it. Use \" > \" and [0].";
    CHECK(protocol::template_hash(changed) != protocol::template_hash(tpl));
}

TEST_CASE("rank prompt enumerates passages and fills slots") {
    auto cs = testutil::make_cs("q9", 3);
    cs.passages[1].title.reset();  // falls back to the doc id
    auto msgs = protocol::build_rank_prompt(cs, PromptTemplate::default_template());
    REQUIRE(msgs.size() == 2);
    CHECK(msgs[0].role == "system");
    CHECK(msgs[1].role == "user");
    const std::string& user = msgs[1].content;
    CHECK(user.find("[1] title 1:") != std::string::npos);
    CHECK(user.find("[2] q9-d2:") != std::string::npos);
    CHECK(user.find("[3] title 3:") != std::string::npos);
    CHECK(user.find(cs.query.text) != std::string::npos);
    CHECK(user.find("the 3 passages") != std::string::npos);  // {m} slot
}

TEST_CASE("rank prompt truncates passage bodies at a word boundary") {
    auto tpl = PromptTemplate::default_template();
    tpl.per_passage_char_budget = 20;
    auto cs = testutil::make_cs("q", 1);
    cs.passages[0].text = "alpha beta gamma delta epsilon zeta";
    auto msgs = protocol::build_rank_prompt(cs, tpl);
    CHECK(msgs[1].content.find("alpha beta gamma") != std::string::npos);
    CHECK(msgs[1].content.find("delta") == std::string::npos);
}

TEST_CASE("rank prompt user content grows with m") {
    auto tpl = PromptTemplate::default_template();
    std::size_t prev = 0;
    for (int m = 1; m <= 10; ++m) {
        auto msgs = protocol::build_rank_prompt(testutil::make_cs("q", m), tpl);
        CHECK(msgs[1].content.size() > prev);
        prev = msgs[1].content.size();
    }
}

TEST_CASE("truncate_at_word") {
    CHECK(protocol::truncate_at_word("short", 100) == "short");
    CHECK(protocol::truncate_at_word("alpha beta gamma", 10) == "alpha beta");
    CHECK(protocol::truncate_at_word("alpha beta gamma", 9) == "alpha");
    // No boundary inside the budget: hard cut.
    CHECK(protocol::truncate_at_word("alphabetagamma", 5) == "alpha");
}

TEST_CASE("answer prompt renumbers context and picks the kind instruction") {
    auto cs = testutil::make_cs("q1", 5);
    cs.passages[3].title.reset();
    std::vector<Passage> ctx = {cs.passages[3], cs.passages[0]};

    auto msgs = protocol::build_answer_prompt(cs.query, ctx, GoldKind::short_answers);
    REQUIRE(msgs.size() == 2);
    const std::string& user = msgs[1].content;
    // Renumbered 1..2 in the given order, title falling back to the doc id.
    CHECK(user.find("Document [1] (q1-d4):") != std::string::npos);
    CHECK(user.find("Document [2] (title 1):") != std::string::npos);
    CHECK(user.find("Document [3]") == std::string::npos);
    CHECK(user.find("Question: " + cs.query.text) != std::string::npos);
    CHECK(user.find("short phrase") != std::string::npos);

    auto list_msgs = protocol::build_answer_prompt(cs.query, ctx, GoldKind::list_answers);
    CHECK(list_msgs[1].content.find("separated by commas") != std::string::npos);

    auto claims_msgs = protocol::build_answer_prompt(cs.query, {}, GoldKind::claims);
    CHECK(claims_msgs[1].content.find("Document [") == std::string::npos);
    CHECK(claims_msgs[1].content.find("few sentences") != std::string::npos);
}

TEST_CASE("parse_selection: well-formed output") {
    auto sel = parse_selection("[2] > [4] > [1]", 5, MalformedPolicy::error);
    CHECK(sel.ordinals == std::vector<int>{2, 4, 1});
    CHECK(sel.repair_notes.empty());
    CHECK(sel.raw_output == "[2] > [4] > [1]");

    // Separator variations do not matter; only the bracketed ids do.
    CHECK(parse_selection("[2]>[4]>[1]", 5, MalformedPolicy::error).ordinals ==
          std::vector<int>{2, 4, 1});
    CHECK(parse_selection("[2], [4], then [1]", 5, MalformedPolicy::error).ordinals ==
          std::vector<int>{2, 4, 1});
}

TEST_CASE("parse_selection: termination token") {
    auto empty = parse_selection("[0]", 5, MalformedPolicy::error);
    CHECK(empty.ordinals.empty());
    CHECK(empty.repair_notes.empty());

    // [0] first wins even with trailing ids.
    CHECK(parse_selection("[0] > [2]", 5, MalformedPolicy::error).ordinals.empty());

    // [0] after valid ids truncates, keeping the prefix.
    auto trunc = parse_selection("[3] > [0] > [1]", 5, MalformedPolicy::error);
    CHECK(trunc.ordinals == std::vector<int>{3});
    REQUIRE(trunc.repair_notes.size() == 1);
    CHECK(trunc.repair_notes[0].find("truncated") != std::string::npos);
}

TEST_CASE("parse_selection: repairs") {
    auto dup = parse_selection("[2] > [2] > [1]", 5, MalformedPolicy::error);
    CHECK(dup.ordinals == std::vector<int>{2, 1});
    REQUIRE(dup.repair_notes.size() == 1);
    CHECK(dup.repair_notes[0].find("duplicate") != std::string::npos);

    auto oor = parse_selection("[7] > [3]", 5, MalformedPolicy::error);
    CHECK(oor.ordinals == std::vector<int>{3});
    REQUIRE(oor.repair_notes.size() == 1);
    CHECK(oor.repair_notes[0].find("out-of-range") != std::string::npos);

    // Huge numbers do not overflow; they are dropped as out of range.
    auto huge = parse_selection("[99999999999999] > [1]", 5, MalformedPolicy::error);
    CHECK(huge.ordinals == std::vector<int>{1});

    // Bracketed tokens require digits immediately inside.
    CHECK(parse_selection("[ 2 ] [3]", 5, MalformedPolicy::error).ordinals ==
          std::vector<int>{3});
}

TEST_CASE("parse_selection: [0] after only invalid ids is an empty selection, not malformed") {
    auto sel = parse_selection("[9] > [0]", 5, MalformedPolicy::error);
    CHECK(sel.ordinals.empty());
    REQUIRE(sel.repair_notes.size() == 1);
    CHECK(sel.repair_notes[0].find("out-of-range") != std::string::npos);
}

TEST_CASE("parse_selection: malformed policy") {
    const std::string garbage = "I would rather not rank anything today.";

    CHECK_THROWS_AS((void)parse_selection(garbage, 4, MalformedPolicy::error), ParseFailure);
    try {
        (void)parse_selection(garbage, 4, MalformedPolicy::error);
    } catch (const ParseFailure& e) {
        CHECK(e.raw == garbage);
    }

    auto fb = parse_selection(garbage, 4, MalformedPolicy::fallback_original_order);
    CHECK(fb.ordinals == std::vector<int>{1, 2, 3, 4});
    CHECK_FALSE(fb.repair_notes.empty());

    auto empty = parse_selection(garbage, 4, MalformedPolicy::empty);
    CHECK(empty.ordinals.empty());
    CHECK_FALSE(empty.repair_notes.empty());

    // Only-invalid ids are also malformed for policy purposes.
    CHECK_THROWS_AS((void)parse_selection("[7]", 5, MalformedPolicy::error), ParseFailure);
    CHECK(parse_selection("[7]", 5, MalformedPolicy::fallback_original_order).ordinals ==
          std::vector<int>{1, 2, 3, 4, 5});
}

TEST_CASE("parse_selection rejects m < 1") {
    CHECK_THROWS_AS((void)parse_selection("[1]", 0, MalformedPolicy::error),
                    std::invalid_argument);
}

TEST_CASE("render_selection") {
    CHECK(render_selection({}) == "[0]");
    CHECK(render_selection({3}) == "[3]");
    CHECK(render_selection({3, 1}) == "[3] > [1]");
    CHECK_THROWS_AS((void)render_selection({1, 1}), std::invalid_argument);
    CHECK_THROWS_AS((void)render_selection({0}), std::invalid_argument);
    CHECK_THROWS_AS((void)render_selection({-2}), std::invalid_argument);
}

TEST_CASE("render/parse round-trip over every ordered subset of {1..5}") {
    std::vector<std::vector<int>> subsets;
    testutil::enumerate_ordered_subsets(5, subsets);
    CHECK(subsets.size() == 325);
    for (const auto& s : subsets) {
        auto sel = parse_selection(render_selection(s), 5, MalformedPolicy::error);
        CHECK(sel.ordinals == s);
        CHECK(sel.repair_notes.empty());
    }
    CHECK(parse_selection(render_selection({}), 5, MalformedPolicy::error).ordinals.empty());
}

TEST_CASE("parse_selection survives fuzzed input and keeps its invariants") {
    DetRng rng(4242);
    const std::string alphabet = "[]0123456789 >x,;.\nab[0]";
    const int m = 7;
    for (int it = 0; it < 2000; ++it) {
        std::string s;
        auto len = rng.uniform_int(40);
        for (std::uint64_t i = 0; i < len; ++i)
            s += alphabet[rng.uniform_int(alphabet.size())];
        auto sel = parse_selection(s, m, MalformedPolicy::fallback_original_order);
        std::vector<bool> seen(m + 1, false);
        for (int o : sel.ordinals) {
            CHECK(o >= 1);
            CHECK(o <= m);
            CHECK_FALSE(seen[static_cast<std::size_t>(o)]);
            seen[static_cast<std::size_t>(o)] = true;
        }
    }
}
