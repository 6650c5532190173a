#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "kgtod/dataset.hpp"
#include "kgtod/synth.hpp"

using namespace kgtod;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = std::string("/tmp/kgtod_test_") + name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

// hand-written 2-turn dialogue in the documented KETOD-style mapping
const char* kTwoTurnFixture = R"JSON([
  {
    "dialogue_id": "fix_001",
    "domains": ["music"],
    "kg_snippets": [
      {"id": "alejandro sanz|0|0|0", "title": "alejandro sanz",
       "text": "Alejandro Sanz is a Spanish singer."},
      {"id": "alejandro sanz|0|0|1", "title": "alejandro sanz",
       "text": "He has won many awards."}
    ],
    "turns": [
      {
        "speaker": "USER",
        "utterance": "play something by alejandro sanz .",
        "frames": [
          {"service": "music",
           "state": {"slot_values": {"artist": ["alejandro sanz"]}},
           "actions": [{"act": "INFORM", "slot": "artist", "values": ["alejandro sanz"]}]}
        ],
        "entity_query": [["music", "alejandro sanz"]]
      },
      {
        "speaker": "SYSTEM",
        "utterance": "playing corazon partio .",
        "frames": [
          {"service": "music",
           "actions": [{"act": "OFFER", "slot": "track", "values": ["corazon partio"]}],
           "service_results": [{"track": "corazon partio", "artist": "alejandro sanz"}],
           "match_count": 2}
        ],
        "enrich": true,
        "enriched_utter": "playing corazon partio . fun fact : Alejandro Sanz is a Spanish singer.",
        "kg_snippet_ids": ["alejandro sanz|0|0|0"]
      }
    ]
  }
])JSON";

}  // namespace

TEST_CASE("load_dataset parses the documented fixture field by field") {
    const auto path = write_temp("fixture.json", kTwoTurnFixture);
    const auto ds = load_dataset(path, DatasetFormat::kKetod);
    REQUIRE(ds.size() == 1);
    const Dialogue& d = ds[0];
    CHECK(d.id == "fix_001");
    REQUIRE(d.turns.size() == 2);
    CHECK(d.turns[0].speaker == Speaker::kUser);
    CHECK(d.turns[1].speaker == Speaker::kSystem);
    REQUIRE(d.turns[0].belief.size() == 1);
    CHECK(d.turns[0].belief.entries()[0].domain == "music");
    CHECK(d.turns[0].belief.entries()[0].slot == "artist");
    CHECK(d.turns[0].belief.entries()[0].value == "alejandro sanz");
    REQUIRE(d.turns[1].acts.size() == 1);
    CHECK(d.turns[1].acts[0].act == "OFFER");
    REQUIRE(d.turns[1].db.has_value());
    CHECK(d.turns[1].db->match_count == 2);
    REQUIRE(d.turns[1].db->records.size() == 1);
    CHECK(d.turns[1].enriched);
    CHECK(d.turns[1].gold_snippet_ids == std::vector<std::string>{"alejandro sanz|0|0|0"});
    REQUIRE(d.entities.size() == 1);
    CHECK(d.entities[0].name == "alejandro sanz");
    REQUIRE(d.snippet_pool.size() == 2);
    CHECK(d.snippet_pool[0].text == "Alejandro Sanz is a Spanish singer.");
}

TEST_CASE("load_dataset edge cases") {
    SUBCASE("empty dialogue list") {
        const auto path = write_temp("empty.json", "[]");
        CHECK(load_dataset(path, DatasetFormat::kKetod).empty());
    }
    SUBCASE("malformed JSON carries a byte offset") {
        const auto path = write_temp("bad.json", "[{\"dialogue_id\": }]");
        try {
            load_dataset(path, DatasetFormat::kKetod);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset > 0);
        }
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_dataset("/tmp/kgtod_no_such_file.json", DatasetFormat::kKetod),
                        ValidationError);
    }
    SUBCASE("invariant violation names the dialogue and turn") {
        const std::string bad = R"([{"dialogue_id": "bad_1", "turns": [
            {"speaker": "SYSTEM", "utterance": "hi"}]}])";
        const auto path = write_temp("badturn.json", bad);
        try {
            load_dataset(path, DatasetFormat::kKetod);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("bad_1") != std::string::npos);
            CHECK(msg.find("turn 0") != std::string::npos);
        }
    }
}

TEST_CASE("save -> load round-trips the structured model") {
    const auto path = write_temp("roundtrip_src.json", kTwoTurnFixture);
    const auto ds = load_dataset(path, DatasetFormat::kKetod);
    const auto out_path = write_temp("roundtrip_out.json", "");
    save_dataset(ds, out_path);
    const auto ds2 = load_dataset(out_path, DatasetFormat::kKetod);
    REQUIRE(ds2.size() == ds.size());
    const Dialogue &a = ds[0], &b = ds2[0];
    CHECK(a.id == b.id);
    CHECK(a.domains == b.domains);
    REQUIRE(a.turns.size() == b.turns.size());
    for (std::size_t i = 0; i < a.turns.size(); ++i) {
        CHECK(a.turns[i].speaker == b.turns[i].speaker);
        CHECK(a.turns[i].utterance == b.turns[i].utterance);
        CHECK(a.turns[i].belief == b.turns[i].belief);
        CHECK(a.turns[i].acts == b.turns[i].acts);
        CHECK(a.turns[i].enriched == b.turns[i].enriched);
        CHECK(a.turns[i].gold_snippet_ids == b.turns[i].gold_snippet_ids);
        CHECK(a.turns[i].db.has_value() == b.turns[i].db.has_value());
        if (a.turns[i].db) CHECK(*a.turns[i].db == *b.turns[i].db);
    }
    CHECK(a.entities == b.entities);
    CHECK(a.snippet_pool == b.snippet_pool);
}

TEST_CASE("extract_entities") {
    Dialogue d;
    d.id = "x";
    d.domains = {"music"};
    Turn t0;
    t0.speaker = Speaker::kUser;
    t0.utterance = "u";
    t0.belief.set(SlotValue("music", "artist", "Alejandro Sanz"));
    d.turns.push_back(t0);
    Turn t1;
    t1.speaker = Speaker::kSystem;
    t1.utterance = "s";
    t1.acts.emplace_back("OFFER", "track", std::vector<std::string>{"corazon partio"});
    d.turns.push_back(t1);

    SUBCASE("designated belief slot yields the entity") {
        EntitySlotConfig cfg{{"music", {"artist"}}};
        const auto es = extract_entities(d, cfg);
        REQUIRE(es.size() == 1);
        CHECK(es[0].name == "Alejandro Sanz");
        CHECK(es[0].domain == "music");
    }
    SUBCASE("no designated slots -> empty") {
        EntitySlotConfig cfg{{"music", {}}};
        CHECK(extract_entities(d, cfg).empty());
    }
    SUBCASE("acts contribute via the dialogue domain, dedup + order") {
        EntitySlotConfig cfg{{"music", {"artist", "track"}}};
        const auto es = extract_entities(d, cfg);
        REQUIRE(es.size() == 2);
        CHECK(es[0].name == "Alejandro Sanz");
        CHECK(es[1].name == "corazon partio");
    }
    SUBCASE("repeated values collapse (brute-force scan fixture)") {
        // 4 designated values, one repeated -> 3 entities in first-appearance order
        Dialogue d2;
        d2.id = "y";
        d2.domains = {"music"};
        Turn u;
        u.speaker = Speaker::kUser;
        u.utterance = "u";
        u.belief.set(SlotValue("music", "artist", "a one"));
        u.belief.set(SlotValue("music", "album", "b two"));
        d2.turns.push_back(u);
        Turn s;
        s.speaker = Speaker::kSystem;
        s.utterance = "s";
        s.acts.emplace_back("OFFER", "artist", std::vector<std::string>{"A ONE"});  // dup
        s.acts.emplace_back("OFFER", "track", std::vector<std::string>{"c three"});
        d2.turns.push_back(s);
        EntitySlotConfig cfg{{"music", {"artist", "album", "track"}}};
        const auto es = extract_entities(d2, cfg);
        REQUIRE(es.size() == 3);
        // within a turn, belief entries scan in sorted (domain, slot) order
        CHECK(es[0].name == "b two");
        CHECK(es[1].name == "a one");
        CHECK(es[2].name == "c three");
    }
    SUBCASE("annotated entities take precedence") {
        d.entities = {Entity{"someone else", "music"}};
        EntitySlotConfig cfg{{"music", {"artist"}}};
        const auto es = extract_entities(d, cfg);
        REQUIRE(es.size() == 1);
        CHECK(es[0].name == "someone else");
    }
}

TEST_CASE("filter_dialogues") {
    auto mk = [](const std::string& id, std::vector<std::string> domains, int n_entities) {
        Dialogue d;
        d.id = id;
        d.domains = std::move(domains);
        for (int i = 0; i < n_entities; ++i) {
            d.entities.push_back(Entity{"e" + std::to_string(i), d.domains.front()});
        }
        return d;
    };
    std::vector<Dialogue> ds;
    ds.push_back(mk("keep", {"Restaurants_1"}, 10));   // boundary: 10 entities kept
    ds.push_back(mk("banks", {"Banks_2"}, 1));         // excluded domain
    ds.push_back(mk("too_many", {"Hotels_1"}, 11));    // over 10 entities
    ds.push_back(mk("alarm", {"Alarm_1"}, 0));
    ds.push_back(mk("payment", {"Payment_1"}, 0));

    const auto kept = filter_dialogues(ds);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].id == "keep");

    SUBCASE("idempotent and never grows") {
        const auto again = filter_dialogues(kept);
        CHECK(again.size() == kept.size());
        CHECK(again[0].id == kept[0].id);
    }
    SUBCASE("configurable exclusion set") {
        FilterOptions opt;
        opt.excluded_domains = {"restaurants"};
        const auto r = filter_dialogues(ds, opt);
        // banks/alarm/payment now pass; 11-entity dialogue still dropped
        REQUIRE(r.size() == 3);
        CHECK(r[0].id == "banks");
    }
}

TEST_CASE("dataset_stats") {
    SUBCASE("empty dataset -> zero counts, absent averages") {
        const auto st = dataset_stats({});
        CHECK(st.dialogues == 0);
        CHECK(st.turns == 0);
        CHECK_FALSE(st.avg_turns_per_dialogue.has_value());
        CHECK_FALSE(st.avg_tokens_enriched_response.has_value());
    }
    SUBCASE("1 dialogue with 10 turns, 1 enriched") {
        Dialogue d;
        d.id = "s";
        d.domains = {"music"};
        for (int i = 0; i < 10; ++i) {
            Turn t;
            t.speaker = i % 2 == 0 ? Speaker::kUser : Speaker::kSystem;
            t.utterance = "one two three";
            if (i == 1) {
                t.enriched = true;
                t.gold_snippet_ids = {"x"};
                t.enriched_utterance = "one two three four";
            }
            d.turns.push_back(t);
        }
        const auto st = dataset_stats({d});
        CHECK(st.turns == 10);
        CHECK(st.enriched_turns == 1);
        CHECK(*st.avg_turns_per_dialogue == doctest::Approx(10.0));
        CHECK(*st.enriched_system_turn_fraction == doctest::Approx(0.2));
        CHECK(*st.avg_tokens_enriched_response == doctest::Approx(4.0));
    }
}
