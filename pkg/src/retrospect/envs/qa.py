"""synthqa: multi-hop questions over a small generated entity-fact graph.

Every question has the form "what is attribute A of the creator of work W",
so the gold solution is two hops plus a lookup::

    Search[W] -> Search[creator] -> Lookup[keyword] -> Finish[answer]

Each work page also names a co-producer whose page carries no facts; the
wrong-entity failure follows that co-producer instead.
"""

from __future__ import annotations

from ..core import FailureMode
from ..rewards import f1_reward, normalize_tokens
from ..seeding import rng
from .base import Environment, TaskSpec

_SYLLABLES = (
    "ka", "ri", "mo", "sel", "van", "dor", "lin", "tas", "bru", "nef",
    "zo", "pel", "quin", "ra", "tov", "mer", "sil", "gar", "lu", "vek",
    "an", "ost", "fen", "dal", "yor", "cim", "bel", "ur", "hask", "tre",
)
_GENRES = ("novel", "film", "album", "stage play", "comic series", "video game", "opera", "podcast",
           "documentary", "sitcom")
_WORK_NOUNS = ("Chronicles", "Saga", "Tales", "Legacy", "Voyage", "Echoes", "Requiem", "Almanac",
               "Odyssey", "Ballads")
_PROFESSIONS = ("writer", "director", "composer", "painter", "architect", "poet", "sculptor",
                "choreographer", "screenwriter", "novelist")

# attribute -> (fact template, lookup keyword, question template, answer suffixes)
ATTRIBUTES = {
    "birthplace": ("{person} was born in {value}.", "born",
                   "Where was the creator of {work} born?", ("Harbor", "Ridge", "Crossing", "Bay")),
    "school": ("{person} studied at {value}.", "studied",
               "Where did the creator of {work} study?", ("University", "Academy", "Institute", "College")),
    "town": ("{person} now lives in {value}.", "lives",
             "In which town does the creator of {work} live?", ("Falls", "Hollow", "Springs", "Meadow")),
    "award": ("{person} received the {value}.", "received",
              "Which award did the creator of {work} receive?", ("Prize", "Medal", "Laurel", "Trophy")),
}

MODES = (
    FailureMode.NONE,
    FailureMode.PREMATURE_FINISH,
    FailureMode.WRONG_ENTITY,
    FailureMode.LOOP_REPEAT,
    FailureMode.MISSED_LOOKUP,
    FailureMode.WRONG_OPTION,
)

N_WORKS = 10
N_PRODUCERS = 5


def _article(noun: str) -> str:
    return "an" if noun[0] in "aeiou" else "a"


def _pseudo_words(gen, count: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < count:
        n = 2 + int(gen.integers(0, 2))
        word = "".join(_SYLLABLES[int(i)] for i in gen.integers(0, len(_SYLLABLES), size=n))
        if len(word) < 4 or word in seen or normalize_tokens(word) != [word]:
            continue
        seen.add(word)
        words.append(word.capitalize())
    return words


def generate_world(seed: int) -> dict:
    gen = rng("synthqa-world", seed)
    words = iter(_pseudo_words(gen, N_WORKS + 2 * N_WORKS + 2 * N_PRODUCERS + 4 * N_WORKS))
    pages: dict[str, dict] = {}
    works = []
    producers = []
    for _ in range(N_PRODUCERS):
        name = f"{next(words)} {next(words)}"
        producers.append(name)
        pages[name] = {"summary": f"{name} is a producer.", "facts": []}
    for i in range(N_WORKS):
        creator = f"{next(words)} {next(words)}"
        values = {}
        facts = []
        for attr, (fact, _, _, suffixes) in ATTRIBUTES.items():
            values[attr] = f"{next(words)} {suffixes[int(gen.integers(0, len(suffixes)))]}"
            facts.append(fact.format(person=creator, value=values[attr]))
        profession = _PROFESSIONS[int(gen.integers(0, len(_PROFESSIONS)))]
        pages[creator] = {"summary": f"{creator} is {_article(profession)} {profession}.", "facts": facts}
        work = f"{next(words)} {_WORK_NOUNS[i % len(_WORK_NOUNS)]}"
        producer = producers[i % N_PRODUCERS]
        genre = _GENRES[int(gen.integers(0, len(_GENRES)))]
        pages[work] = {
            "summary": f"{work} is {_article(genre)} {genre} created by {creator}. It was co-produced by {producer}.",
            "facts": [],
        }
        works.append({"name": work, "creator": creator, "producer": producer, "values": values})
    return {"pages": pages, "works": works}


def _plans(work: dict, attr: str) -> dict[FailureMode, tuple[str, ...]]:
    keyword = ATTRIBUTES[attr][1]
    answer = work["values"][attr]
    creator, producer, name = work["creator"], work["producer"], work["name"]
    gold = (f"Search[{name}]", f"Search[{creator}]", f"Lookup[{keyword}]", f"Finish[{answer}]")
    return {
        FailureMode.NONE: gold,
        FailureMode.PREMATURE_FINISH: (f"Search[{name}]", f"Finish[{creator}]"),
        FailureMode.WRONG_ENTITY: (f"Search[{name}]", f"Search[{producer}]", f"Lookup[{keyword}]",
                                   f"Finish[{producer}]"),
        FailureMode.LOOP_REPEAT: (f"Search[{name}]",),
        FailureMode.MISSED_LOOKUP: (f"Search[{name}]", f"Search[{creator}]", f"Finish[{answer.split()[0]}]"),
        FailureMode.WRONG_OPTION: gold[:-1] + (f"Finish[{answer} and {creator}]",),
    }


def generate_tasks(world: dict, seed: int, n_train: int = 50, n_val: int = 30) -> list[TaskSpec]:
    gen = rng("synthqa-tasks", seed)
    combos = [(w, attr) for w in range(len(world["works"])) for attr in ATTRIBUTES]
    order = gen.permutation(len(combos))
    tasks = []
    for j in range(n_train + n_val):
        w, attr = combos[int(order[j % len(combos)])]
        work = world["works"][w]
        mode = MODES[j % len(MODES)]
        plans = _plans(work, attr)
        tasks.append(
            TaskSpec(
                env_id=SynthQA.env_id,
                task_id=f"q{j + 1:03d}",
                goal_text=ATTRIBUTES[attr][2].format(work=work["name"]),
                hidden_answer=work["values"][attr],
                failure_mode=mode,
                gold_actions=plans[FailureMode.NONE],
                failure_actions=plans[mode],
                split="train" if j < n_train else "val",
            )
        )
    return tasks


class SynthQA(Environment):
    env_id = "synthqa"
    verbs = ("Search", "Lookup", "Finish")
    default_max_steps = 8

    @classmethod
    def generate(cls, seed: int = 0, n_train: int = 50, n_val: int = 30) -> "SynthQA":
        world = generate_world(seed)
        return cls(world, generate_tasks(world, seed, n_train, n_val), seed=seed)

    def _initial(self, task, seed):
        obs = f"{task.goal_text} Available actions: Search[entity], Lookup[keyword], Finish[answer]."
        return obs, {"page": None, "lookup": None, "lookup_index": 0, "answer": None}

    def _find_page(self, query: str) -> str | None:
        wanted = query.strip().lower()
        for name in self.world["pages"]:
            if name.lower() == wanted:
                return name
        return None

    def _transition(self, task, raw, verb, arg):
        pages = self.world["pages"]
        if verb == "Search":
            name = self._find_page(arg)
            if name is None:
                tokens = set(normalize_tokens(arg))
                similar = [n for n in pages if tokens & set(normalize_tokens(n))][:3]
                return f"Could not find [{arg}]. Similar: {similar}.", raw, False
            raw.update(page=name, lookup=None, lookup_index=0)
            return pages[name]["summary"], raw, False
        if verb == "Lookup":
            if raw["page"] is None:
                return "No more results.", raw, False
            page = pages[raw["page"]]
            sentences = [s.strip() + "." for s in page["summary"].split(".") if s.strip()] + page["facts"]
            keyword = arg.lower()
            hits = [s for s in sentences if keyword and keyword in s.lower()]
            index = raw["lookup_index"] if raw["lookup"] == keyword else 0
            if index >= len(hits):
                raw.update(lookup=keyword, lookup_index=index)
                return "No more results.", raw, False
            raw.update(lookup=keyword, lookup_index=index + 1)
            return f"(Result {index + 1} / {len(hits)}) {hits[index]}", raw, False
        # Finish
        raw["answer"] = arg
        score = f1_reward(arg, task.hidden_answer)
        return f"Episode finished, reward = {score:.3f}", raw, True

    def episode_return(self, state):
        answer = state.raw.get("answer")
        if answer is None:
            return 0.0
        return f1_reward(answer, self.get_task(state.raw["task_id"]).hidden_answer)
