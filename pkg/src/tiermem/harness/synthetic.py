"""Synthetic dialogues with known topic boundaries.

Every topic owns a small vocabulary disjoint from all others, and sentence
frames use stopwords only, so lexical overlap (and hence the mock attention
profile and hash embeddings) changes sharply exactly at topic switches.
"""

from __future__ import annotations

import json
import random
from datetime import datetime, timedelta
from pathlib import Path

from ..core import Turn
from .dataset import EvalInstance, Session, dump_instance

TOPICS: dict[str, tuple[str, ...]] = {
    "cooking": ("recipe", "garlic", "oven", "pasta", "basil", "simmer", "skillet"),
    "hiking": ("trail", "summit", "boots", "backpack", "ridge", "altitude", "campsite"),
    "finance": ("budget", "savings", "mortgage", "interest", "invoice", "pension", "dividend"),
    "gardening": ("tomatoes", "compost", "seedlings", "trellis", "mulch", "pruning", "greenhouse"),
    "music": ("guitar", "chords", "melody", "rehearsal", "drummer", "amplifier", "setlist"),
    "travel": ("flight", "passport", "itinerary", "luggage", "hostel", "layover", "museum"),
    "fitness": ("squats", "treadmill", "protein", "stretching", "dumbbells", "cardio", "sprint"),
    "pets": ("puppy", "leash", "kibble", "veterinarian", "kennel", "grooming", "fetch"),
    "coding": ("python", "compiler", "debugger", "refactor", "repository", "function", "unittest"),
    "photography": ("camera", "aperture", "tripod", "lens", "exposure", "portrait", "shutter"),
    "reading": ("novel", "chapter", "author", "paperback", "library", "bookmark", "trilogy"),
    "cars": ("engine", "tires", "mechanic", "brakes", "mileage", "transmission", "dealership"),
    "weather": ("forecast", "thunderstorm", "humidity", "drizzle", "blizzard", "temperature", "umbrella"),
    "movies": ("director", "sequel", "screenplay", "popcorn", "trailer", "cinema", "actress"),
    "health": ("dentist", "allergy", "vitamins", "prescription", "checkup", "insomnia", "pharmacy"),
    "home": ("plumber", "kitchen", "renovation", "carpet", "drywall", "faucet", "landlord"),
    "school": ("homework", "semester", "professor", "lecture", "thesis", "campus", "exam"),
    "work": ("manager", "deadline", "promotion", "meeting", "quarterly", "colleague", "spreadsheet"),
    "art": ("canvas", "watercolor", "sketch", "gallery", "easel", "charcoal", "sculpture"),
    "sports": ("soccer", "goalkeeper", "stadium", "tournament", "referee", "jersey", "penalty"),
    "baking": ("sourdough", "flour", "yeast", "croissant", "dough", "frosting", "muffins"),
    "cycling": ("bicycle", "helmet", "pedals", "gears", "handlebars", "velodrome", "saddle"),
    "astronomy": ("telescope", "nebula", "planets", "eclipse", "constellation", "orbit", "comet"),
    "languages": ("vocabulary", "grammar", "spanish", "pronunciation", "flashcards", "verbs", "fluency"),
}

USER_FRAMES = (
    "so what about {0} and {1} with {2} {3} {4}?",
    "i have a {0} {1} and {2}, {3} {4}.",
    "can you do {0} {1} for {2} {3} {4}?",
    "we were at the {0} with {1} {2} {3} and {4}.",
    "how do i do {0} {1} {2} if {3} {4}?",
)
ASSISTANT_FRAMES = (
    "yes, the {0} and {1} are about {2}; {3} with {4} is also a {5}.",
    "it is {0} {1} {2} so you can do {3} and {4} with the {5}.",
    "there are {0} {1} {2}, but {3} {4} {5} would be it.",
)


def topic_sentence(rng: random.Random, topic: str, frames, n_words: int) -> str:
    words = rng.sample(TOPICS[topic], n_words)
    return rng.choice(frames).format(*words)


def topic_turns(
    rng: random.Random, topic: str, count: int, start_id: int, session_id: str, date: str = ""
) -> list[Turn]:
    out = []
    for i in range(count):
        tid = start_id + i
        out.append(
            Turn(
                turn_id=tid,
                session_id=session_id,
                user_text=topic_sentence(rng, topic, USER_FRAMES, 5),
                assistant_text=topic_sentence(rng, topic, ASSISTANT_FRAMES, 6),
                timestamp=tid,
                date=date,
            )
        )
    return out


def _partition(rng: random.Random, total: int, parts: int, minimum: int) -> list[int]:
    if parts * minimum > total:
        raise ValueError("cannot partition: segments would be shorter than the minimum")
    cuts = sorted(rng.sample(range(1, total - parts * (minimum - 1)), parts - 1))
    sizes = [b - a for a, b in zip([0, *cuts], [*cuts, total - parts * (minimum - 1)])]
    return [s + minimum - 1 for s in sizes]


def _topic_sequence(rng: random.Random, count: int) -> list[str]:
    names = list(TOPICS)
    seq: list[str] = []
    for _ in range(count):
        seq.append(rng.choice([t for t in names if not seq or t != seq[-1]]))
    return seq


def planted_corpus(n_turns: int = 200, n_boundaries: int = 20, seed: int = 0, min_len: int = 5):
    """``(turns, boundary_turn_ids)``: ``n_boundaries`` topic switches at known turns."""
    rng = random.Random(seed)
    sizes = _partition(rng, n_turns, n_boundaries + 1, min_len)
    topics = _topic_sequence(rng, n_boundaries + 1)
    turns: list[Turn] = []
    boundaries = []
    for idx, (topic, size) in enumerate(zip(topics, sizes)):
        if idx:
            boundaries.append(len(turns))
        turns.extend(topic_turns(rng, topic, size, len(turns), f"seg{idx:03d}"))
    return turns, boundaries


def multi_session_instance(
    n_sessions: int = 50, seed: int = 0, turns_per_session: tuple[int, int] = (6, 12)
) -> EvalInstance:
    """One long history, one topic per session, with dated sessions a day apart."""
    rng = random.Random(seed)
    topics = _topic_sequence(rng, n_sessions)
    start = datetime(2023, 5, 1, 9, 0)
    sessions, next_id = [], 0
    for i, topic in enumerate(topics):
        date = (start + timedelta(days=i)).strftime("%Y/%m/%d (%a) %H:%M")
        turns = topic_turns(rng, topic, rng.randint(*turns_per_session), next_id, f"session_{i:03d}", date)
        next_id += len(turns)
        sessions.append(Session(f"session_{i:03d}", date, tuple(turns)))
    last = topics[-1]
    return EvalInstance(
        question_id=f"synthetic_{seed}",
        question_type="multi-session",
        question=f"what did we say about the {TOPICS[last][0]}?",
        answer=TOPICS[last][0],
        question_date=(start + timedelta(days=n_sessions)).strftime("%Y/%m/%d (%a) %H:%M"),
        sessions=sessions,
    )


# Fixture facts: (question_id, question_type, fact said by the user, question, answer)
FIXTURE_FACTS = (
    ("fx01", "single-session-user", "my sister lives in Lisbon near the river.",
     "Where does my sister live?", "Lisbon"),
    ("fx02", "single-session-assistant", "which wine goes with salmon?",
     "Which wine did you suggest for the salmon?", "Chablis"),
    ("fx03", "multi-session", "i adopted a cat named Miso last spring.",
     "What is the name of my cat?", "Miso"),
    ("fx04", "temporal-reasoning", "i started learning the cello on March 3.",
     "How many days passed between starting the cello and my first recital?", "18 days"),
    ("fx05", "knowledge-update", "i moved my office to Denver this month.",
     "Which city is my office in now?", "Denver"),
    ("fx06", "single-session-preference", "i prefer window seats and vegetarian meals on flights.",
     "Can you suggest flight booking options for me?",
     "The user would prefer suggestions with window seats and vegetarian meals."),
    ("fx07", "single-session-user", "my favourite tea is a smoky lapsang souchong.",
     "What is my favourite tea?", "lapsang souchong"),
    ("fx08_abs", "single-session-user", "i bought a green kayak yesterday.",
     "What colour is my canoe paddle?", "The user never mentioned a canoe paddle."),
    ("fx09", "multi-session", "my daughter Ana plays the violin every evening.",
     "Which instrument does Ana play?", "violin"),
    ("fx10", "temporal-reasoning", "we visited Kyoto in October after the Tokyo trip.",
     "Which city did I visit after the Tokyo trip?", "Kyoto"),
)


def fixture_instances(seed: int = 7) -> list[EvalInstance]:
    """Ten small instances covering every question category."""
    rng = random.Random(seed)
    out = []
    for k, (qid, qtype, fact, question, answer) in enumerate(FIXTURE_FACTS):
        start = datetime(2023, 1, 2 + k, 10, 0)
        topics = _topic_sequence(rng, 4)
        fact_session = rng.randrange(4)
        sessions, next_id = [], 0
        for i, topic in enumerate(topics):
            date = (start + timedelta(days=3 * i)).strftime("%Y/%m/%d (%a) %H:%M")
            turns = topic_turns(rng, topic, rng.randint(3, 5), next_id, f"{qid}_s{i}", date)
            if i == fact_session:
                reply = "Chablis is a crisp choice for salmon." if qid == "fx02" else "noted, thanks for sharing."
                turns.insert(0, Turn(0, f"{qid}_s{i}", fact, reply, 0, date))
            turns = [Turn(next_id + j, t.session_id, t.user_text, t.assistant_text, next_id + j, date)
                     for j, t in enumerate(turns)]
            next_id += len(turns)
            sessions.append(Session(f"{qid}_s{i}", date, tuple(turns)))
        out.append(EvalInstance(
            question_id=qid,
            question_type=qtype,
            question=question,
            answer=answer,
            question_date=(start + timedelta(days=14)).strftime("%Y/%m/%d (%a) %H:%M"),
            sessions=sessions,
        ))
    return out


def write_dataset(instances: list[EvalInstance], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps([dump_instance(i) for i in instances], indent=1, ensure_ascii=False) + "\n",
                    encoding="utf-8")
    return path


FIXTURE_PATH = Path(__file__).resolve().parent.parent / "data" / "fixture.json"


if __name__ == "__main__":
    print(write_dataset(fixture_instances(), FIXTURE_PATH))
