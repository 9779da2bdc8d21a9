"""Regenerate the synthetic fixture corpora.

    python3 tests/fixtures/make_fixtures.py

Writes ``corpus/`` (30 documents for optimizer and simulator runs),
``queries.json``, ``manifest.json`` and ``features/`` (20 documents for the
feature oracle). Output is fully determined by the seeds below. Each topic
has a small vocabulary so lexical similarity behaves like a topical
embedding would: sections of one document resemble each other, documents
on different topics do not.
"""

from __future__ import annotations

import json
import random
import re
from pathlib import Path

HERE = Path(__file__).parent

TOPICS = {
    "solar": {
        "title": "Residential Solar Panels",
        "nouns": "panel inverter cell silicon roof voltage sunlight efficiency installer grid output bracket".split(),
        "sub": [
            "shading angle orientation azimuth".split(),
            "warranty degradation lifespan coating".split(),
            "meter tariff export utility".split(),
            "cable conduit breaker junction".split(),
            "cleaning dust pollen residue".split(),
            "permit inspection zoning paperwork".split(),
        ],
    },
    "coffee": {
        "title": "Brewing Better Coffee",
        "nouns": "bean grinder roast espresso water temperature extraction crema kettle aroma brewer dose".split(),
        "sub": [
            "burr particle uniformity fines".split(),
            "origin altitude varietal harvest".split(),
            "bloom pour spiral saturation".split(),
            "pressure portafilter tamp puck".split(),
            "mineral hardness calcium magnesium".split(),
            "storage oxygen container freshness".split(),
        ],
    },
    "sourdough": {
        "title": "Sourdough Bread at Home",
        "nouns": "starter flour dough crust oven yeast hydration loaf fermentation crumb baker proofing".split(),
        "sub": [
            "levain culture feeding jar".split(),
            "rye wholemeal gluten protein".split(),
            "fold stretch tension shaping".split(),
            "banneton basket scoring lame".split(),
            "steam dutch lid bake".split(),
            "acidity sourness tang lactic".split(),
        ],
    },
    "marathon": {
        "title": "Training for a Marathon",
        "nouns": "runner pace mileage tempo recovery shoe interval stride endurance race coach taper".split(),
        "sub": [
            "cadence footstrike posture arm".split(),
            "glycogen carbohydrate gel fueling".split(),
            "injury tendon calf physio".split(),
            "threshold lactate heartrate zone".split(),
            "sleep rest massage foam".split(),
            "course elevation weather start".split(),
        ],
    },
    "aquarium": {
        "title": "Keeping a Home Aquarium",
        "nouns": "tank gravel fish ammonia nitrate heater plant algae substrate aquarist cycle pump".split(),
        "sub": [
            "bacteria nitrite biofilm colony".split(),
            "guppy tetra cichlid shrimp".split(),
            "lighting spectrum photoperiod lamp".split(),
            "ph buffer alkalinity kh".split(),
            "quarantine disease parasite medication".split(),
            "feeding flake pellet frozen".split(),
        ],
    },
    "ebike": {
        "title": "Choosing an Electric Bike",
        "nouns": "motor pedal torque throttle commute charger brake wheel rider range assist drivetrain".split(),
        "sub": [
            "hub mid crank sensor".split(),
            "lithium watt amp capacity".split(),
            "disc hydraulic rotor caliper".split(),
            "tire tread puncture pressure".split(),
            "regulation speed class license".split(),
            "lock theft insurance parking".split(),
        ],
    },
    "compost": {
        "title": "Composting Kitchen Scraps",
        "nouns": "compost bin nitrogen carbon worm moisture pile microbe garden scrap humus aeration".split(),
        "sub": [
            "greens browns ratio leaves".split(),
            "thermophilic heat decomposition core".split(),
            "vermicompost casting tray bedding".split(),
            "odor smell rodent pest".split(),
            "turning fork oxygen airflow".split(),
            "mulch soil amendment seedling".split(),
        ],
    },
    "bees": {
        "title": "Beekeeping for Beginners",
        "nouns": "hive colony queen honey comb nectar pollen beekeeper swarm brood wax smoker".split(),
        "sub": [
            "varroa mite treatment oxalic".split(),
            "forager worker drone caste".split(),
            "super extractor harvest jar".split(),
            "winter cluster insulation feed".split(),
            "veil suit glove sting".split(),
            "nuc package split queenless".split(),
        ],
    },
    "climbing": {
        "title": "Getting Into Rock Climbing",
        "nouns": "climber rope belay harness anchor hold route chalk crag carabiner grade ascent".split(),
        "sub": [
            "bouldering mat crash problem".split(),
            "lead clip quickdraw fall".split(),
            "crimp sloper jug pinch".split(),
            "gym wall setter volume".split(),
            "finger pulley hangboard strength".split(),
            "rappel descent knot backup".split(),
        ],
    },
    "wine": {
        "title": "Tasting Wine Like a Pro",
        "nouns": "wine grape tannin acidity vintage cellar barrel palate vineyard sommelier bouquet glass".split(),
        "sub": [
            "oak vanilla toast stave".split(),
            "terroir slope clay limestone".split(),
            "decanter sediment breathing pour".split(),
            "cork closure screwcap taint".split(),
            "sweetness residual sugar dessert".split(),
            "pairing cheese dish sauce".split(),
        ],
    },
}

VERBS = "improves requires affects supports reduces controls determines changes protects shapes".split()
ADJS = "stable careful consistent higher lower fresh daily seasonal precise gentle".split()
LONG_WORDS = (
    "considerable preparation variability characteristic temperature responsibility "
    "particularly consideration environmental additionally unpredictable occasionally"
).split()

TEMPLATES = [
    "The {a} {n1} {v} the {n2} of every {n3}.",
    "A {n1} with {a} {n2} {v} the {n3} and the {n4}.",
    "Every {n1} {v} {a} {n2} before the {n3} is ready.",
    "In practice the {n1} {v} the {n2}, and the {n3} follows.",
    "Good {n1} {v} the {n2} when the {n3} stays {a}.",
    "The {n1} and the {n2} {v} the {a} {n3}.",
    "Careful {n1} work {v} the {n2} around the {n3}.",
    "Most guides say the {n1} {v} the {n2} over about {num} weeks.",
    "A {a} {n1} {v} the {n2} while the {n3} settles.",
    "The {n1} {v} {a} {n2} for each {n3} and {n4}.",
]
ENUM_LEADS = ["First", "Second", "Third", "Next", "Finally"]


class Writer:
    """Sentence and block factory for one topic."""

    def __init__(self, topic: str, rng: random.Random):
        self.topic = TOPICS[topic]
        self.rng = rng

    def words(self, sub: int | None, k: int) -> list[str]:
        pool = list(self.topic["nouns"])
        if sub is not None:
            pool = self.topic["sub"][sub % len(self.topic["sub"])] * 2 + pool
        return [self.rng.choice(pool) for _ in range(k)]

    def sentence(self, sub: int | None = None) -> str:
        n = self.words(sub, 4)
        text = self.rng.choice(TEMPLATES).format(
            a=self.rng.choice(ADJS), v=self.rng.choice(VERBS), n1=n[0], n2=n[1], n3=n[2], n4=n[3],
            num=self.rng.randint(2, 12),
        )
        return text[0].upper() + text[1:]

    def long_sentence(self, sub: int | None = None) -> str:
        parts = []
        for k in range(4):
            n = self.words(sub, 3)
            lw = self.rng.sample(LONG_WORDS, 3)
            parts.append(f"the {lw[0]} {n[0]} {self.rng.choice(VERBS)} the {lw[1]} {n[1]} through {lw[2]} {n[2]}")
        conj = [", and ", ", but ", ", so "]
        text = parts[0]
        for k, p in enumerate(parts[1:]):
            text += conj[k % len(conj)] + p
        return text[0].upper() + text[1:] + "."

    def paragraph(self, words: int, sub: int | None = None, long: bool = False) -> str:
        out: list[str] = []
        count = 0
        while count < words:
            s = self.long_sentence(sub) if long else self.sentence(sub)
            out.append(s)
            count += len(re.findall(r"[\w']+", s))
        return " ".join(out)

    def enumeration(self, sub: int | None = None, n: int = 4) -> str:
        out = []
        for k in range(n):
            s = self.sentence(sub)
            out.append(f"{ENUM_LEADS[k % len(ENUM_LEADS)]}, {s[0].lower()}{s[1:]}")
        return " ".join(out)

    def bullet_list(self, sub: int | None = None, n: int = 4) -> str:
        return "\n".join(f"- {self.sentence(sub)}" for _ in range(n))

    def table(self, sub: int | None = None) -> str:
        n = self.words(sub, 6)
        return "\n".join(
            [
                "| Item | Detail | Note |",
                "| --- | --- | --- |",
                f"| {n[0]} | {n[1]} | {self.rng.randint(1, 40)} |",
                f"| {n[2]} | {n[3]} | {self.rng.randint(1, 40)} |",
                f"| {n[4]} | {n[5]} | {self.rng.randint(1, 40)} |",
            ]
        )

    def heading(self, sub: int) -> str:
        words = self.topic["sub"][sub % len(self.topic["sub"])]
        n = self.rng.choice(self.topic["nouns"])
        w = self.rng.sample(words, 2)
        return f"{w[0].capitalize()} and {n.capitalize()} {w[1].capitalize()}"


def emphasize(md: str, rng: random.Random, share: float) -> str:
    """Bold a share of the plain words of paragraph lines."""
    lines = md.split("\n")
    out = []
    for line in lines:
        if not line or line.startswith(("#", "|", "-", "```", ">")):
            out.append(line)
            continue
        words = line.split(" ")
        for k, w in enumerate(words):
            m = re.fullmatch(r"([A-Za-z]{4,})([.,]?)", w)
            if m and rng.random() < share:
                words[k] = f"**{m.group(1)}**{m.group(2)}"
        out.append(" ".join(words))
    return "\n".join(out)


def slug(text: str) -> str:
    return re.sub(r"\s+", "-", re.sub(r"[^\w\- ]", "", text.strip().lower()))


def add_links(md: str, rng: random.Random, count: int) -> str:
    """Turn ``count`` words into links to headings that share a topic word."""
    headings = [slug(h) for h in re.findall(r"^#+ (.*)$", md, flags=re.M)]
    lines = md.split("\n")
    body = [i for i, l in enumerate(lines) if l and not l.startswith(("#", "|", "-", "```", ">"))]
    in_code, fenced = False, set()
    for i, l in enumerate(lines):
        if l.startswith("```"):
            in_code = not in_code
        elif in_code:
            fenced.add(i)
    placed = 0
    for i in rng.sample(body, len(body)):
        if placed >= count:
            break
        if i in fenced:
            continue
        words = lines[i].split(" ")
        for k, w in enumerate(words):
            if re.fullmatch(r"[a-z]{4,}", w):
                words[k] = f"[{w}](#{rng.choice(headings)})"
                placed += 1
                break
        lines[i] = " ".join(words)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# document archetypes


def doc_well_formed(w: Writer, rng: random.Random) -> str:
    """Already on target: depth 4, balanced levels, lists, emphasis, links."""
    parts = [f"# {w.topic['title']}", w.paragraph(200)]
    sub = 0
    for _ in range(3):
        parts += [f"## {w.heading(sub)}", w.paragraph(200, sub)]
        parts += [f"### {w.heading(sub + 1)}", w.paragraph(200, sub + 1)]
        # the list is drawn either way so later documents keep their random stream
        extra = w.bullet_list(sub + 1)
        if sub < 2:
            parts.append(extra)
        parts += [f"#### {w.heading(sub + 2)}", w.paragraph(190, sub + 2), w.bullet_list(sub + 2)]
        sub += 1
    md = "\n\n".join(parts)
    md = emphasize(md, rng, 0.12)
    return add_links(md, rng, 3)


def doc_flat(w: Writer, rng: random.Random, long_paras: bool = False) -> str:
    """Two heading levels, prose only, no emphasis."""
    parts = [f"# {w.topic['title']}", w.paragraph(120)]
    for sub in range(rng.randint(4, 6)):
        parts.append(f"## {w.heading(sub)}")
        for _ in range(rng.randint(2, 4)):
            parts.append(w.paragraph(rng.randint(320, 460) if long_paras else rng.randint(150, 260), sub))
    return "\n\n".join(parts)


def doc_deep(w: Writer, rng: random.Random, depth: int) -> str:
    """A deep chain (5 or 6 levels) whose bottom level fans out into many tiny sections."""
    parts = [f"# {w.topic['title']}", w.paragraph(180)]
    sub = 0
    for level in range(2, depth):
        parts += [f"{'#' * level} {w.heading(sub)}", w.paragraph(rng.randint(180, 240), sub)]
        if level == 2:
            parts.append(w.paragraph(200, sub))
        sub += 1
    for k in range(rng.randint(6, 8)):
        parts += [f"{'#' * depth} {w.heading(sub + k)}", w.paragraph(rng.randint(40, 70), sub + k)]
    parts += [f"## {w.heading(sub + 9)}", w.paragraph(200, sub + 9), w.paragraph(210, sub + 9)]
    return "\n\n".join(parts)


def doc_wall(w: Writer, rng: random.Random) -> str:
    """Very long paragraphs under a shallow outline."""
    parts = [f"# {w.topic['title']}"]
    for sub in range(rng.randint(2, 3)):
        parts.append(f"## {w.heading(sub)}")
        for _ in range(rng.randint(1, 2)):
            parts.append(w.paragraph(rng.randint(480, 650), sub))
    return "\n\n".join(parts)


def doc_choppy(w: Writer, rng: random.Random) -> str:
    """Depth three with many short paragraphs."""
    parts = [f"# {w.topic['title']}", w.paragraph(60)]
    sub = 0
    for _ in range(3):
        parts.append(f"## {w.heading(sub)}")
        for _ in range(rng.randint(2, 3)):
            parts.append(w.paragraph(rng.randint(50, 90), sub))
        parts.append(f"### {w.heading(sub + 1)}")
        for _ in range(rng.randint(3, 4)):
            parts.append(w.paragraph(rng.randint(50, 90), sub + 1))
        sub += 2
    return "\n\n".join(parts)


def doc_list_heavy(w: Writer, rng: random.Random) -> str:
    """Mostly lists and tables; too much structure."""
    parts = [f"# {w.topic['title']}", w.paragraph(160)]
    for sub in range(3):
        parts += [f"## {w.heading(sub)}", w.bullet_list(sub), w.table(sub)]
        parts += [f"### {w.heading(sub + 3)}", w.bullet_list(sub + 3, 5), w.paragraph(180, sub + 3)]
    return "\n\n".join(parts)


def doc_long_sentences(w: Writer, rng: random.Random) -> str:
    """Dense prose: long, polysyllabic sentences."""
    parts = [f"# {w.topic['title']}", w.paragraph(150, None, long=True)]
    for sub in range(3):
        parts += [f"## {w.heading(sub)}", w.paragraph(220, sub, long=True)]
        parts += [f"### {w.heading(sub + 3)}", w.paragraph(200, sub + 3, long=True), w.enumeration(sub + 3)]
    return "\n\n".join(parts)


def doc_mid(w: Writer, rng: random.Random) -> str:
    """Reasonable outline, but no lists, emphasis or links."""
    parts = [f"# {w.topic['title']}", w.paragraph(rng.randint(160, 240))]
    sub = 0
    for _ in range(rng.randint(2, 3)):
        parts += [f"## {w.heading(sub)}", w.paragraph(rng.randint(170, 260), sub)]
        parts.append(w.enumeration(sub, rng.randint(3, 5)))
        parts += [f"### {w.heading(sub + 1)}", w.paragraph(rng.randint(170, 260), sub + 1)]
        parts.append(w.paragraph(rng.randint(170, 260), sub + 1))
        sub += 2
    return "\n\n".join(parts)


def doc_adversarial(rng: random.Random) -> str:
    """A six-level chain where the only merge available drops most of the topic mass.

    Bodies are single sentences with disjoint vocabulary, so no section pair
    is similar enough to link. The deepest heading is long and all of its
    words fall into one topic bucket that nothing else uses, so merging it
    into its parent shifts the document topic distribution far beyond the
    preservation threshold.
    """
    from geo_sfe.semantic import TopicModel
    from geo_sfe.text import content_lemmas

    topics = TopicModel()
    pool = sorted({w for t in TOPICS.values() for w in t["nouns"] + [x for s in t["sub"] for x in s]})
    pool = [w for w in pool if content_lemmas([w]) == [w]]
    by_bucket: dict[int, list[str]] = {}
    for word in pool:
        by_bucket.setdefault(topics.bucket(word), []).append(word)
    heavy = max(sorted(by_bucket), key=lambda b: len(by_bucket[b]))
    heading = " ".join(w.capitalize() for w in (by_bucket[heavy] * 8)[:40])
    bodies = [
        "Tidepools shelter anemones.",
        "Glaciers carve valleys.",
        "Lanterns glow softly.",
        "Violins need rosin.",
        "Comets trail ice.",
        "Quilts keep warmth.",
    ]
    short = ["Harbor Walk", "Mountain Pass", "Night Market", "Concert Hall", "Sky Watch"]
    parts = ["# Field Notes", "Short notes follow."]
    for level in range(2, 6):
        parts += [f"{'#' * level} {short[level - 2]}", bodies[level - 2]]
    parts += [f"###### {heading}", bodies[5]]
    return "\n\n".join(parts)


ARCHETYPES = [
    ("well_formed", 2),
    ("flat", 3),
    ("flat_long", 3),
    ("deep", 4),
    ("wall", 4),
    ("choppy", 4),
    ("list_heavy", 2),
    ("long_sentences", 2),
    ("adversarial", 1),
    ("mid", 5),
]

# archetypes built to break two or more principles that the optimizer can repair
REPAIRABLE = {"flat", "flat_long", "deep", "wall", "choppy", "long_sentences", "mid"}


# Corpus topics: five documents each, so every query has more candidate
# sources than an engine has citation slots.
CORPUS_TOPICS = ("solar", "coffee", "sourdough", "marathon", "aquarium", "bees")


def build_corpus() -> tuple[dict[str, str], list[dict], list[dict]]:
    rng = random.Random(20240917)
    topics = list(CORPUS_TOPICS)
    docs: dict[str, str] = {}
    manifest = []
    queries = []
    k = 0
    for arche, count in ARCHETYPES:
        for _ in range(count):
            topic = topics[k % len(topics)]
            w = Writer(topic, rng)
            if arche == "well_formed":
                md = doc_well_formed(w, rng)
            elif arche == "flat":
                md = doc_flat(w, rng)
            elif arche == "flat_long":
                md = doc_flat(w, rng, long_paras=True)
            elif arche == "deep":
                md = doc_deep(w, rng, depth=5 + (k % 2))
            elif arche == "wall":
                md = doc_wall(w, rng)
            elif arche == "choppy":
                md = doc_choppy(w, rng)
            elif arche == "list_heavy":
                md = doc_list_heavy(w, rng)
            elif arche == "long_sentences":
                md = doc_long_sentences(w, rng)
            elif arche == "adversarial":
                md = doc_adversarial(rng)
            else:
                md = doc_mid(w, rng)
            name = f"doc{k + 1:02d}.md"
            docs[name] = md + "\n"
            manifest.append({"file": name, "topic": topic if arche != "adversarial" else None, "archetype": arche, "repairable": arche in REPAIRABLE})
            k += 1
    for k, topic in enumerate(topics):
        t = TOPICS[topic]
        for j in range(5):
            qr = random.Random(1000 + 10 * k + j)
            n = qr.sample(t["nouns"], 2)
            s = qr.choice(t["sub"])
            queries.append({"id": f"q{len(queries) + 1:02d}", "text": f"how does the {n[0]} affect {s[0]} and {n[1]} {s[1]}"})
    return docs, manifest, queries


def build_feature_set() -> dict[str, str]:
    """Twenty small documents exercising every block kind and inline style."""
    rng = random.Random(7)
    topics = list(TOPICS)
    out = {}
    for k in range(20):
        w = Writer(topics[k % len(topics)], rng)
        parts = []
        if k % 5 == 4:
            parts.append(w.paragraph(40))  # preamble before any heading
        parts.append(f"# {w.topic['title']}")
        parts.append(w.paragraph(rng.randint(30, 120)))
        for s in range(rng.randint(1, 4)):
            level = 2 + (s % 3 if k % 2 else 0)
            parts.append(f"{'#' * level} {w.heading(s)}")
            kinds = rng.sample(["para", "para", "list", "table", "code", "quote", "enum", "long"], 3)
            for kind in kinds:
                if kind == "para":
                    parts.append(w.paragraph(rng.randint(20, 90), s))
                elif kind == "list":
                    parts.append(w.bullet_list(s, rng.randint(2, 4)))
                elif kind == "table":
                    parts.append(w.table(s))
                elif kind == "code":
                    parts.append("```python\nfor item in range(3):\n    print(item)\n```")
                elif kind == "quote":
                    parts.append("> " + w.paragraph(25, s))
                elif kind == "enum":
                    parts.append(w.enumeration(s, 3))
                else:
                    parts.append(w.paragraph(60, s, long=True))
        md = "\n\n".join(parts)
        if k % 3 != 0:
            md = emphasize(md, rng, 0.1)
        if k % 4 != 1:
            md = add_links(md, rng, rng.randint(1, 3))
        if k % 7 == 3:
            md = md.replace("**", "*", 2)  # one italic span
        if k % 6 == 5:
            md = md.replace(" the ", " the <u>very</u> ", 1)
        out[f"f{k + 1:02d}.md"] = md + "\n"
    return out


def main() -> None:
    docs, manifest, queries = build_corpus()
    corpus = HERE / "corpus"
    corpus.mkdir(exist_ok=True)
    for old in corpus.glob("*.md"):
        old.unlink()
    for name, text in docs.items():
        (corpus / name).write_text(text)
    (HERE / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    (HERE / "queries.json").write_text(json.dumps(queries, indent=1) + "\n")
    feats = HERE / "features"
    feats.mkdir(exist_ok=True)
    for name, text in build_feature_set().items():
        (feats / name).write_text(text)
    # the packaged reference statistics describe this corpus
    from geo_sfe.document import parse
    from geo_sfe.features import corpus_stats

    trees = [parse(p.read_text()) for p in sorted(corpus.glob("*.md"))]
    corpus_stats(trees).save(HERE.parents[1] / "src" / "geo_sfe" / "data" / "reference_stats.json")


if __name__ == "__main__":
    main()
