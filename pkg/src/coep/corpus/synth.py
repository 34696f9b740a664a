"""Deterministic synthetic corpora: a templated story grammar.

The generator builds three aligned datasets from one grammar so the pipeline
stages reinforce each other the way the real knowledge sources would:

* stories: five-event arcs.  Each scenario family shares its middle events
  between two variants whose opening event carries the latent state (diligent
  vs careless preparation, etc.) that decides how the arc ends, so predicting
  late events requires reading the history, not just the current event.
* inferential triples: (event, relation, explanation) pairs exposing that
  latent state explicitly, over the full character roster.
* sequential pairs: unambiguous adjacent transitions plus distractor activity
  chains, expressed as raw triples in mixed arrow directions.

Character names split into a training roster and a held-out roster; held-out
names never appear in training stories but do appear in inferential triples,
mirroring the broader coverage of the inferential source.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..numerics import Rng
from .examples import write_jsonl
from .relations import Relation, reformulate_relation
from .vocab import Vocab

TRAIN_NAMES = (
    "alice", "ben", "carla", "dan", "emma", "fred", "gina", "hugo", "iris",
    "jack", "kara", "liam", "mona", "noah", "opal", "pete", "quinn", "rosa",
    "sam", "tina", "umar", "vera", "wade", "xena", "yara", "zeke", "abby",
    "bruno", "celia", "drew",
)
HELDOUT_NAMES = ("felix", "greta", "irene", "kofi", "luna", "marco")
ALL_NAMES = TRAIN_NAMES + HELDOUT_NAMES


@dataclass(frozen=True)
class ScenarioVariant:
    key: str
    opening: str  # contains "{name}"
    middle: tuple[str, str]  # shared within the family
    outcome: tuple[str, str]  # variant-specific
    tails: dict[Relation, str]

    def events(self, name: str) -> list[str]:
        return [self.opening.format(name=name), *self.middle, *self.outcome]

    def opening_generic(self) -> str:
        return self.opening.format(name="they")


def _tails(intent, need, attr, effect, react, want, o_react, o_want, o_effect):
    return {
        Relation.X_INTENT: intent,
        Relation.X_NEED: need,
        Relation.X_ATTR: attr,
        Relation.X_EFFECT: effect,
        Relation.X_REACT: react,
        Relation.X_WANT: want,
        Relation.O_REACT: o_react,
        Relation.O_WANT: o_want,
        Relation.O_EFFECT: o_effect,
    }


SCENARIOS: tuple[ScenarioVariant, ...] = (
    ScenarioVariant(
        "exam_pass",
        "{name} studied hard for the big exam",
        ("they walked into the quiet classroom", "they started the first question"),
        ("they solved every problem with ease", "they earned the top score in class"),
        _tails(
            "to pass the exam", "to review the notes", "diligent", "feels prepared",
            "confident", "to earn a top score", "impressed", "to study like them",
            "others take notes",
        ),
    ),
    ScenarioVariant(
        "exam_fail",
        "{name} skipped studying for the big exam",
        ("they walked into the quiet classroom", "they started the first question"),
        ("they stared at the page in confusion", "they failed the exam badly"),
        _tails(
            "to relax and have fun", "to open the books", "careless",
            "feels unprepared", "anxious", "to avoid the test", "worried",
            "to warn them", "others shake heads",
        ),
    ),
    ScenarioVariant(
        "race_finish",
        "{name} trained daily for the city race",
        ("they arrived at the starting line", "they began to run with the crowd"),
        ("they kept a strong steady pace", "they crossed the finish line smiling"),
        _tails(
            "to finish the race", "to build endurance", "determined", "gets stronger",
            "energized", "to win a medal", "cheerful", "to cheer loudly",
            "others clap hands",
        ),
    ),
    ScenarioVariant(
        "race_quit",
        "{name} lazed around before the city race",
        ("they arrived at the starting line", "they began to run with the crowd"),
        ("they ran out of breath quickly", "they quit the race halfway"),
        _tails(
            "to take it easy", "to get off the couch", "lazy", "loses stamina",
            "tired", "to rest at home", "disappointed", "to encourage them",
            "others pass by",
        ),
    ),
    ScenarioVariant(
        "stew_serve",
        "{name} followed the recipe for the stew",
        ("they set the pot on the stove", "they stirred the pot slowly"),
        ("they tasted a rich warm flavor", "they served a delicious dinner to family"),
        _tails(
            "to cook a good meal", "to read the recipe", "careful", "learns to cook",
            "proud", "to feed the family", "grateful", "to ask for seconds",
            "others enjoy dinner",
        ),
    ),
    ScenarioVariant(
        "stew_burn",
        "{name} ignored the recipe for the stew",
        ("they set the pot on the stove", "they stirred the pot slowly"),
        ("they smelled something burning in the pot", "they ordered pizza for dinner instead"),
        _tails(
            "to improvise a meal", "to check the recipe", "reckless", "ruins the pot",
            "embarrassed", "to hide the mess", "hungry", "to open a window",
            "others order takeout",
        ),
    ),
    ScenarioVariant(
        "garden_harvest",
        "{name} watered the garden every morning",
        ("they looked over the garden beds", "they checked the young plants closely"),
        ("they found bright healthy flowers", "they picked a basket of fresh vegetables"),
        _tails(
            "to grow fresh food", "to fetch the watering can", "patient",
            "gains a green thumb", "peaceful", "to share the harvest", "delighted",
            "to taste the vegetables", "others admire the garden",
        ),
    ),
    ScenarioVariant(
        "garden_wilt",
        "{name} forgot the garden for weeks",
        ("they looked over the garden beds", "they checked the young plants closely"),
        ("they found dry wilted stems", "they replanted the beds with new seeds"),
        _tails(
            "to do it later", "to make a schedule", "forgetful", "loses the crop",
            "guilty", "to start over", "sorry", "to lend a hand",
            "others offer seeds",
        ),
    ),
    ScenarioVariant(
        "interview_offer",
        "{name} rehearsed answers for the job interview",
        ("they waited in the busy office lobby", "they shook hands with the manager"),
        ("they answered each question with confidence", "they got the job offer that week"),
        _tails(
            "to land the job", "to print the resume", "prepared", "earns respect",
            "hopeful", "to start a career", "convinced", "to hire them",
            "others send congratulations",
        ),
    ),
    ScenarioVariant(
        "interview_miss",
        "{name} stayed up late before the job interview",
        ("they waited in the busy office lobby", "they shook hands with the manager"),
        ("they mumbled through the hard questions", "they kept searching for another job"),
        _tails(
            "to watch one more episode", "to sleep early", "sleepy", "loses focus",
            "drowsy", "to drink more coffee", "unimpressed", "to end the meeting",
            "others keep interviewing",
        ),
    ),
    ScenarioVariant(
        "concert_applause",
        "{name} practiced the song all month",
        ("they stepped onto the bright stage", "they faced the waiting crowd"),
        ("they played every note cleanly", "they bowed to loud applause"),
        _tails(
            "to give a great show", "to tune the guitar", "devoted", "improves the craft",
            "thrilled", "to hear applause", "amazed", "to hear an encore",
            "others buy tickets",
        ),
    ),
    ScenarioVariant(
        "concert_fumble",
        "{name} barely touched the guitar all month",
        ("they stepped onto the bright stage", "they faced the waiting crowd"),
        ("they fumbled the opening chords", "they left the stage embarrassed"),
        _tails(
            "to wing the show", "to practice the chords", "overconfident",
            "loses the rhythm", "ashamed", "to leave early", "let down",
            "to ask for a refund", "others stop listening",
        ),
    ),
)

# Canonical nine-relation example used across inferential-knowledge sources.
SHOWCASE_TRIPLES: tuple[tuple[str, str, str], ...] = (
    ("PersonX repels PersonY's attack", "xIntent", "to protect others"),
    ("PersonX repels PersonY's attack", "xNeed", "to defense himself"),
    ("PersonX repels PersonY's attack", "xAttr", "skilled; brave"),
    ("PersonX repels PersonY's attack", "xEffect", "gains an enemy"),
    ("PersonX repels PersonY's attack", "xReact", "angry; tired"),
    ("PersonX repels PersonY's attack", "xWant", "to call the police"),
    ("PersonX repels PersonY's attack", "oReact", "weak; ashamed"),
    ("PersonX repels PersonY's attack", "oWant", "attack again"),
    ("PersonX repels PersonY's attack", "oEffect", "get hurts"),
)

ACTIVITY_CHAINS: tuple[tuple[str, ...], ...] = (
    ("they woke up at sunrise", "they ate a warm breakfast", "they packed a small bag",
     "they walked to the bus stop", "they rode the bus downtown"),
    ("they wrote a shopping list", "they drove to the market", "they filled the cart with food",
     "they paid at the counter", "they carried the bags home"),
    ("they entered the old library", "they searched the tall shelves", "they picked a thick novel",
     "they read by the window", "they borrowed the book for a week"),
    ("they packed towels for the beach", "they spread a blanket on the sand",
     "they swam in the cool waves", "they built a small sandcastle", "they watched the sunset"),
    ("they planned a long road trip", "they loaded the car with snacks", "they drove along the coast",
     "they stopped at a small diner", "they reached the cabin at night"),
    ("they invited friends for a picnic", "they spread lunch under a tree", "they played catch on the grass",
     "they shared slices of cold melon", "they packed up before the rain"),
    ("they bought tickets to the museum", "they wandered past the paintings", "they studied an ancient statue",
     "they sketched in a small notebook", "they visited the gift shop"),
    ("they picked a movie for the night", "they made a bowl of popcorn", "they dimmed the living room lights",
     "they laughed at the funny scenes", "they talked about the ending"),
    ("they saw snow falling outside", "they pulled on warm boots", "they rolled a giant snowball",
     "they built a crooked snowman", "they warmed up with cocoa"),
    ("they hung balloons for the party", "they baked a chocolate cake", "they greeted the noisy guests",
     "they sang over the candles", "they opened a pile of gifts"),
    ("they pitched a tent by the lake", "they gathered dry firewood", "they lit a small campfire",
     "they roasted marshmallows slowly", "they slept under the stars"),
    ("they dug worms for fishing", "they cast a line off the dock", "they waited in the quiet morning",
     "they reeled in a silver fish", "they cooked the catch for lunch"),
    ("they measured flour for the sale", "they rolled the cookie dough", "they baked three golden trays",
     "they set up a corner stand", "they sold out before noon"),
    ("they pumped the bike tires", "they rode along the river path", "they raced down the last hill",
     "they locked the bike at the cafe", "they drank a cold lemonade"),
)

# Raw sequential triples rotate through these framings; reversed-arrow
# relations swap head and tail so normalization restores temporal order.
_FRAMINGS = (
    ("Causes", False),
    ("HasSubevent", False),
    ("HasPrerequisite", True),
    ("HasFirstSubevent", False),
    ("HasLastSubevent", True),
    ("CausesDesire", False),
)

_NON_SEQUENTIAL = ("SimilarTo", "Antonym", "AtLocation", "IsA")


def generate_inferential() -> list[dict]:
    """Inferential triples over openings (full roster rotation) and outcomes."""
    records = []
    for v, scenario in enumerate(SCENARIOS):
        names = [ALL_NAMES[(v * 4 + j) % len(ALL_NAMES)] for j in range(4)]
        for name in names:
            head = scenario.opening.format(name=name)
            for relation in Relation:
                records.append(
                    {"head": head, "relation": relation.value,
                     "tail": scenario.tails[relation]}
                )
        records.append(
            {"head": scenario.opening_generic(), "relation": Relation.X_ATTR.value,
             "tail": scenario.tails[Relation.X_ATTR]}
        )
        for relation in (Relation.X_REACT, Relation.X_EFFECT):
            records.append(
                {"head": scenario.outcome[0], "relation": relation.value,
                 "tail": scenario.tails[relation]}
            )
    for head, relation, tail in SHOWCASE_TRIPLES:
        records.append({"head": head, "relation": relation, "tail": tail})
    return records


def _frame_pair(preceding: str, future: str, framing_index: int) -> dict:
    relation, reverse = _FRAMINGS[framing_index % len(_FRAMINGS)]
    head, tail = (future, preceding) if reverse else (preceding, future)
    return {"head": head, "relation": relation, "tail": tail}


def generate_sequential() -> list[dict]:
    """Raw sequential triples: scenario transitions plus activity chains.

    Transitions whose future event is ambiguous given the preceding event
    (the shared-middle divergence point) are excluded; a handful of
    non-sequential relations is kept to exercise normalization skipping.
    """
    records = []
    k = 0
    for scenario in SCENARIOS:
        transitions = [
            (scenario.opening_generic(), scenario.middle[0]),
            (scenario.middle[0], scenario.middle[1]),
            (scenario.outcome[0], scenario.outcome[1]),
        ]
        for pre, fut in transitions:
            for offset in (0, 3, 5):
                records.append(_frame_pair(pre, fut, k + offset))
                k += 1
    for chain in ACTIVITY_CHAINS:
        for pre, fut in zip(chain, chain[1:]):
            for offset in (0, 2, 4):
                records.append(_frame_pair(pre, fut, k + offset))
                k += 1
    for i, relation in enumerate(_NON_SEQUENTIAL * 3):
        chain = ACTIVITY_CHAINS[i % len(ACTIVITY_CHAINS)]
        records.append({"head": chain[0], "relation": relation, "tail": chain[-1]})
    return records


def generate_stories(rng: Rng) -> tuple[list[dict], list[dict]]:
    """(train, heldout) stories; held-out stories use the held-out roster."""
    train = [
        {"events": scenario.events(name)}
        for scenario in SCENARIOS
        for name in TRAIN_NAMES
    ]
    heldout = [
        {"events": scenario.events(name)}
        for scenario in SCENARIOS
        for name in HELDOUT_NAMES
    ]
    order = rng.child(101).permutation(len(train))
    train = [train[i] for i in order]
    order = rng.child(102).permutation(len(heldout))
    heldout = [heldout[i] for i in order]
    return train, heldout


def build_vocab(
    inferential: list[dict], sequential: list[dict], stories: list[dict]
) -> Vocab:
    """Union vocabulary over the three corpora plus the relation phrases."""
    texts: list[str] = [reformulate_relation(r) for r in Relation]
    for rec in inferential:
        texts += [rec["head"], rec["tail"]]
    for rec in sequential:
        texts += [rec["head"], rec["tail"]]
    for rec in stories:
        texts += rec["events"]
    return Vocab.build(texts)


def make_data(out_dir, seed: int) -> dict:
    """Write the bundled corpora and vocabulary; returns summary counts."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = Rng(seed)
    inferential = generate_inferential()
    sequential = generate_sequential()
    stories, stories_heldout = generate_stories(rng)
    write_jsonl(out / "inferential.jsonl", inferential)
    write_jsonl(out / "sequential.jsonl", sequential)
    write_jsonl(out / "stories.jsonl", stories)
    write_jsonl(out / "stories_eval.jsonl", stories_heldout)
    vocab = build_vocab(inferential, sequential, stories + stories_heldout)
    vocab.save(out / "vocab.txt")
    return {
        "inferential": len(inferential),
        "sequential": len(sequential),
        "stories": len(stories),
        "stories_eval": len(stories_heldout),
        "vocab": len(vocab),
    }
