"""Regenerate the bundled movie fixtures under src/chainqa/data/movies.

Gold answers are computed here by plain nested scans over the triplet list, so
they stay independent of chainqa's chain executor.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from chainqa.pipeline import RESPONSE_INSTRUCTION
from chainqa.plan import DECOMPOSE_INSTRUCTION

OUT = Path(__file__).resolve().parents[1] / "src" / "chainqa" / "data" / "movies"

SIRK = "Douglas Sirk"
CAST = {
    "Shockproof": ["Cornel Wilde", "Patricia Knight"],
    "All That Heaven Allows": ["Rock Hudson"],
    "Magnificent Obsession": ["Rock Hudson"],
    "A Time to Love and a Time to Die": ["John Gavin"],
    "There's Always Tomorrow": ["Barbara Stanwyck"],
    "The Tarnished Angels": ["Rock Hudson", "Dorothy Malone"],
    "Meet Me at the Fair": ["Rochelle Hudson"],
    "Lured": ["Lucille Ball", "Boris Karloff", "Charles Coburn"],
    "Sleep, My Love": ["Claudette Colbert", "Robert Cummings", "Don Ameche"],
    "All I Desire": ["Barbara Stanwyck"],
    "Battle Hymn": ["Rock Hudson"],
    "Imitation of Life": ["John Gavin", "Sandra Dee"],
    "Written on the Wind": ["Rock Hudson", "Lauren Bacall", "Dorothy Malone"],
}
TRIPLETS = [("Written on the Wind", "directed_by", SIRK)]
TRIPLETS += [("Written on the Wind", "written_by", "Robert wilder"), ("Written on the Wind", "written_by", "George Zuckerman")]
TRIPLETS += [(f, "directed_by", SIRK) for f in CAST if f != "Written on the Wind"]
TRIPLETS += [(f, "starred_actors", a) for f, actors in CAST.items() for a in actors]
TRIPLETS += [
    ("The Tarnished Angels", "written_by", "George Zuckerman"),
    ("Magnificent Obsession", "written_by", "Lloyd C. Douglas"),
    ("Imitation of Life", "written_by", "Fannie Hurst"),
    ("Written on the Wind", "release_year", "1956"),
    ("Imitation of Life", "release_year", "1959"),
    ("All That Heaven Allows", "release_year", "1955"),
    ("Magnificent Obsession", "release_year", "1954"),
    ("Lured", "release_year", "1947"),
    ("Written on the Wind", "has_genre", "Drama"),
    ("Imitation of Life", "has_genre", "Drama"),
    ("Lured", "has_genre", "Thriller"),
    ("Battle Hymn", "has_genre", "War"),
    ("Casablanca", "directed_by", "Michael Curtiz"),
    ("Casablanca", "starred_actors", "Humphrey Bogart"),
    ("Casablanca", "starred_actors", "Ingrid Bergman"),
    ("Casablanca", "written_by", "Julius J. Epstein"),
    ("Casablanca", "release_year", "1942"),
    ("Casablanca", "in_language", "English"),
    ("The Big Sleep", "directed_by", "Howard Hawks"),
    ("The Big Sleep", "starred_actors", "Humphrey Bogart"),
    ("The Big Sleep", "starred_actors", "Lauren Bacall"),
    ("To Have and Have Not", "directed_by", "Howard Hawks"),
    ("To Have and Have Not", "starred_actors", "Humphrey Bogart"),
    ("To Have and Have Not", "starred_actors", "Lauren Bacall"),
    ("To Have and Have Not", "has_genre", "Drama"),
    ("Written on the Wind", "in_language", "English"),
]

TEMPLATES = {
    "actor_to_movie": ("which movies did [mask] act in?", "starred_actors:backward"),
    "director_to_movie": ("[mask] was the director of which movies?", "directed_by:backward"),
    "genre_to_movie": ("which movies belong to the genre [mask]?", "has_genre:backward"),
    "movie_to_actor": ("who acted in the movie [mask]?", "starred_actors:forward"),
    "movie_to_director": ("who was the director of [mask]?", "directed_by:forward"),
    "movie_to_genre": ("what genre is the movie [mask]?", "has_genre:forward"),
    "movie_to_language": ("what language is the movie [mask] in?", "in_language:forward"),
    "movie_to_writer": ("who wrote the movie [mask]?", "written_by:forward"),
    "movie_to_year": ("when was the movie [mask] released?", "release_year:forward"),
    "writer_to_movie": ("which movies were written by [mask]?", "written_by:backward"),
    "year_to_movie": ("which movies were released in [mask]?", "release_year:backward"),
}
# training paraphrases per template, MetaQA style with the seed in brackets
TRAIN_PHRASES = {
    "actor_to_movie": ["which movies did [{}] act in", "what films did [{}] appear in"],
    "director_to_movie": ["what movies did [{}] direct", "[{}] directed which films"],
    "genre_to_movie": ["which movies are [{}] films"],
    "movie_to_actor": ["who acted in [{}]", "who starred in [{}]"],
    "movie_to_director": ["who directed [{}]", "who was the director of [{}]"],
    "movie_to_genre": ["what genre is [{}]"],
    "movie_to_language": ["what language is [{}] in"],
    "movie_to_writer": ["who wrote [{}]", "who is the writer of [{}]"],
    "movie_to_year": ["when was [{}] released"],
    "writer_to_movie": ["what movies did [{}] write"],
    "year_to_movie": ["which movies came out in [{}]"],
}

# paraphrase whose gold template (movie_to_director) ranks second under the default embedder
AMBIGUOUS_SUBQ = "who was in the director chair in the movie [mask]?"


def step(triplets, seeds, chain):
    """One application of ``chain`` (list of (rel, dir)) by nested scans."""
    cur = set(seeds)
    for rel, direction in chain:
        nxt = set()
        for s, r, o in triplets:
            if r != rel:
                continue
            if direction == "forward" and s in cur:
                nxt.add(o)
            elif direction == "backward" and o in cur:
                nxt.add(s)
        cur = nxt
    return cur


def parse(chain):
    return [tuple(p.split(":")) for p in chain.split(",")]


def order(names, first_seen):
    return sorted(names, key=first_seen.index)


def plan_json(steps):
    out = []
    for i, (tid, seed) in enumerate(steps):
        pattern = TEMPLATES[tid][0] if tid in TEMPLATES else tid
        out.append(
            {
                "question": pattern,
                "id": i,
                "dep": [-1] if i == 0 else [i - 1],
                "args": {"seed_entities": [seed if i == 0 else f"<GENERATED>-{i - 1}"]},
            }
        )
    return out


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    seen_trip = []
    for t in TRIPLETS:
        if t not in seen_trip:
            seen_trip.append(t)
    first_seen = []
    for s, _, o in seen_trip:
        for e in (s, o):
            if e not in first_seen:
                first_seen.append(e)

    (OUT / "kb.txt").write_text("".join(f"{s}|{r}|{o}\n" for s, r, o in TRIPLETS), encoding="utf-8")
    (OUT / "templates.tsv").write_text(
        "# id<TAB>pattern\n" + "".join(f"{tid}\t{p}\n" for tid, (p, _) in sorted(TEMPLATES.items())),
        encoding="utf-8",
    )

    subjects = {tid: sorted({s for s, r, o in seen_trip if r == c.split(":")[0]}) for tid, (_, c) in TEMPLATES.items()}
    objects = {tid: sorted({o for s, r, o in seen_trip if r == c.split(":")[0]}) for tid, (_, c) in TEMPLATES.items()}

    train = []
    for tid, (_, chain) in sorted(TEMPLATES.items()):
        pool = subjects[tid] if chain.endswith("forward") else objects[tid]
        for k, seed in enumerate(pool):
            phrase = TRAIN_PHRASES[tid][k % len(TRAIN_PHRASES[tid])]
            ans = order(step(seen_trip, {seed}, parse(chain)), first_seen)
            train.append(f"{phrase.format(seed)}\t{'|'.join(ans)}\t{tid}")
    (OUT / "qa_train.txt").write_text("\n".join(train) + "\n", encoding="utf-8")

    gold_chains = {p: c for p, c in TEMPLATES.values()}
    gold_chains[AMBIGUOUS_SUBQ] = "directed_by:forward"
    (OUT / "gold_chains.json").write_text(json.dumps(gold_chains, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    # (query pattern, [(template, ...)], seeds)
    one_hop = [
        ("who directed [{}]", ["movie_to_director"], ["Written on the Wind", "Casablanca", "The Big Sleep", "Lured", "Battle Hymn"]),
        ("who acted in [{}]", ["movie_to_actor"], ["Written on the Wind", "Sleep, My Love", "Casablanca"]),
        ("who wrote [{}]", ["movie_to_writer"], ["Written on the Wind", "Imitation of Life"]),
        ("when was [{}] released", ["movie_to_year"], ["Lured", "Casablanca"]),
        ("what movies did [{}] act in", ["actor_to_movie"], ["Humphrey Bogart", "Dorothy Malone", "Rock Hudson"]),
        ("what genre is [{}]", ["movie_to_genre"], ["Battle Hymn"]),
    ]
    two_hop = [
        ("who directed the movies that [{}] acted in", ["actor_to_movie", "movie_to_director"], ["Humphrey Bogart", "Barbara Stanwyck", "Sandra Dee"]),
        ("who starred in the films directed by [{}]", ["director_to_movie", "movie_to_actor"], ["Howard Hawks", "Michael Curtiz"]),
        ("who co-starred with [{}]", ["actor_to_movie", "movie_to_actor"], ["Ingrid Bergman", "Lucille Ball", "Patricia Knight"]),
        ("which films share a director with [{}]", ["movie_to_director", "director_to_movie"], ["The Big Sleep", "Casablanca"]),
        ("when were the movies written by [{}] released", ["writer_to_movie", "movie_to_year"], ["George Zuckerman", "Fannie Hurst"]),
        ("what genres are the films of [{}]", ["actor_to_movie", "movie_to_genre"], ["John Gavin"]),
    ]
    three_hop = [
        ("which actors starred in movies directed by the director of [{}]", ["movie_to_director", "director_to_movie", "movie_to_actor"], ["Written on the Wind", "The Big Sleep", "Casablanca"]),
        ("who directed films that share actors with [{}]", ["movie_to_actor", "actor_to_movie", "movie_to_director"], ["Lured", "Imitation of Life", "To Have and Have Not"]),
        ("which writers wrote movies directed by the director of [{}]", ["movie_to_director", "director_to_movie", "movie_to_writer"], ["Battle Hymn", "Shockproof"]),
        ("when were the movies starring the actors of [{}] released", ["movie_to_actor", "actor_to_movie", "movie_to_year"], ["Casablanca", "Magnificent Obsession"]),
    ]
    plans = {}
    for name, groups in (("qa_1hop.txt", one_hop), ("qa_2hop.txt", two_hop), ("qa_3hop.txt", three_hop)):
        lines = []
        for pattern, tids, seeds in groups:
            chain = [p for tid in tids for p in parse(TEMPLATES[tid][1])]
            for seed in seeds:
                ans = order(step(seen_trip, {seed}, chain), first_seen)
                assert ans, (pattern, seed)
                lines.append(f"{pattern.format(seed)}\t{'|'.join(ans)}")
                plans[pattern.format(seed).replace("[", "").replace("]", "")] = plan_json([(t, seed) for t in tids])
        (OUT / name).write_text("\n".join(lines) + "\n", encoding="utf-8")

    amb = []
    for seed in ["Written on the Wind", "Casablanca", "The Big Sleep"]:
        q = f"who was in the director chair in [{seed}]"
        amb.append(f"{q}\t{'|'.join(order(step(seen_trip, {seed}, [('directed_by', 'forward')]), first_seen))}")
        plans[q.replace("[", "").replace("]", "")] = plan_json([(AMBIGUOUS_SUBQ, seed)])
    (OUT / "qa_ambiguous.txt").write_text("\n".join(amb) + "\n", encoding="utf-8")
    (OUT / "gold_plans.json").write_text(json.dumps(plans, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")

    # Table 1 replay session
    table1_query = (
        "I recently watched the movie Written on the Wind, and I think it was well made. "
        "I'd like to know what other works the director of this film has done and which famous actors were in them."
    )
    table1_plan = (
        '{"question": "who was the director of [mask]?", "id": 0, "dep": [-1], "args": {"seed_entities": ["Written on the Wind"]}}, '
        '{"question": "[mask] was the director of which movies?", "id": 1, "dep": [0], "args": "seed_entities": ["<GENERATED>-0"]}}, '
        '{"question": "who acted in the movie [mask]?", "id": 2, "dep": [1], "args": "seed_entities": "<GENERATED>-1"]}}]'
    )
    films = [
        "Shockproof", "All That Heaven Allows", "Magnificent Obsession", "A Time to Love and a Time to Die",
        "There's Always Tomorrow", "The Tarnished Angels", "Meet Me at the Fair", "Lured", "Sleep, My Love",
        "All I Desire", "Battle Hymn", "Imitation of Life", "Written on the Wind",
    ]
    actors = [
        "Cornel Wilde", "Claudette Colbert", "Boris Karloff", "Rock Hudson", "Don Ameche", "Robert Cummings",
        "John Gavin", "Patricia Knight", "Charles Coburn", "Lucille Ball", "Barbara Stanwyck", "Lauren Bacall",
        "Dorothy Malone", "Rochelle Hudson", "Sandra Dee",
    ]
    assert set(films) == step(seen_trip, {SIRK}, [("directed_by", "backward")])
    assert set(actors) == step(seen_trip, set(films), [("starred_actors", "forward")])
    narrative = (
        "Based on the inference results, the director of Written on the Wind is Douglas Sirk. The movies that "
        "Douglas Sirk directed include Shockproof, All That Heaven Allows, Magnificent Obsession, A Time to Love "
        "and a Time to Die, There's Always Tomorrow, The Tarnished Angels, Meet Me at the Fair, Lured, Sleep, My "
        "Love, All I Desire, Battle Hymn, Imitation of Life, and Written on the Wind. The actors who starred in "
        "these movies are Cornel  Wilde, Claudette Colbert, Boris Karloff, Rock Hudson, Don Ameche, Robert "
        "Cummings, John Gavin, Patricia Knight, Charles Coburn, Lucille Ball, Barbara Stanwyck, Lauren Bacall, "
        "Dorothy Malone, Rochelle Hudson, and Sandra Dee."
    )
    sha = lambda s: hashlib.sha256(s.encode("utf-8")).hexdigest()  # noqa: E731
    film_seeds = ", ".join(order(films, first_seen))
    entries = [
        {"instruction_sha256": sha(DECOMPOSE_INSTRUCTION), "input": table1_query, "reply": table1_plan},
        {"instruction_sha256": None, "input": "who was the director of Written on the Wind?", "reply": '["Douglas Sirk"]'},
        {"instruction_sha256": None, "input": "Douglas Sirk was the director of which movies?", "reply": json.dumps(films)},
        {"instruction_sha256": None, "input": f"who acted in the movie {film_seeds}?", "reply": json.dumps(actors)},
        {"instruction_sha256": sha(RESPONSE_INSTRUCTION), "input": None, "reply": narrative},
    ]
    (OUT / "table1_session.json").write_text(
        json.dumps({"query": table1_query, "entries": entries}, indent=1, ensure_ascii=False) + "\n", encoding="utf-8"
    )


if __name__ == "__main__":
    main()
