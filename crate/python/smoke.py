"""Smoke test for the errag extension: build with `maturin develop -m crates/py/Cargo.toml`."""

import json
import math

import errag

EVENTS = "event,date\nNobel Prize in Physics 2023,2023-10-03\nNobel Prize in Chemistry 2023,2023-10-04\n"
PRICES = "symbol,date,price\nNVDA,2023-10-02,447.82\nNVDA,2023-10-03,435.17\nAAPL,2023-10-03,172.40\n"
PAGES = [
    {"title": "DeepMind", "body": "DeepMind is a research lab and a subsidiary of Google.", "infobox": {"founded": "2010"}},
    {"title": "Google", "body": "Google is a technology company.", "infobox": {"founded": "1998"}},
]
MOCK = {
    "strict": False,
    "facts": [{"context_contains": "subsidiary of Google", "name": "parent_company", "value": "Google"}],
}


def main():
    text = (
        'GET(DB, table = "events" AND event = "Nobel Prize in Physics 2023", {date})'
        '.JOIN(left.date = right.date)'
        '.GET(DB, table = "prices" AND symbol = "NVDA", {date, price})'
    )
    chain = errag.parse_chain(text)
    assert len(chain) == 2 and chain.aliases == ["g1", "g2"]
    assert errag.parse_chain(chain.render()) == chain

    try:
        errag.parse_chain("GET(DB, x = , {a})")
    except errag.ChainSyntaxError:
        pass
    else:
        raise AssertionError("malformed chain accepted")

    engine = errag.Engine(mock=json.dumps(MOCK))
    assert engine.add_csv("DB", "events", EVENTS) == 2
    assert engine.add_csv("DB", "prices", PRICES) == 3
    assert engine.add_pages("WIKI", json.dumps(PAGES)) == 2
    engine.add_document("WEB", "note.txt", "The Artemis II crew has four astronauts.")
    engine.add_self("SELF")

    records, trace = engine.execute(chain)
    assert records == [{"g1.date": "2023-10-03", "g2.date": "2023-10-03", "g2.price": 435.17}], records
    assert trace[0]["popped"] == "g1"

    records, _ = engine.execute(
        'GET(WIKI, search_key = "DeepMind", {content})'
        ".JOIN(content, parent_company, search_key)"
        ".GET(WIKI, , {search_key, founded})"
    )
    assert records[0]["g2.founded"] == "1998", records

    records, _ = engine.execute('GET(WEB, chunk ~ "Artemis crew", {chunk})')
    assert "four astronauts" in records[0]["g1.chunk"]
    assert engine.select("stock price on a date")[-1] == "SELF"

    rows = [{"company": c, "revenue": r} for c, r in [("A", "120M"), ("B", "8500K"), ("C", "95M"), ("D", "40M")]]
    tpl = '{join_str(map(top(sort_by(Data, num(r.revenue), desc), 3), r.company), ", ")}'
    assert errag.eval_template(tpl, rows) == "A, C, D"
    assert errag.eval_template("{r.missing}", []) == "no data"

    assert errag.normalize_number("$1,200") == 1200
    assert errag.normalize_date("October 3, 2023") == "2023-10-03"
    assert errag.stem_accuracy("he was running", "runs") == 1
    assert abs(errag.dpo_loss(0.5, 0.5, 0.5, 0.5, beta=1.0) - math.log(2)) < 1e-12
    assert errag.sft_loss([0.2, 0.4]) == -0.30000000000000004

    log = "\n".join(
        json.dumps(e)
        for e in [
            {"query": "q", "source": "DB", "correct": True, "retrieval_time_ms": 40, "top2": ["DB", "WEB"]},
            {"query": "q", "source": "WEB", "correct": True, "retrieval_time_ms": 300},
        ]
    )
    sft, pairs = errag.build_training_sets(log)
    assert len(sft) == 2 and pairs == [{"query": "q", "winner": "DB", "loser": "WEB"}]
    print("smoke ok")


if __name__ == "__main__":
    main()
