"""synthshop: instruction-following purchases from a generated catalog.

The catalog is built from pairs of products with identical attribute sets
but token-disjoint types, so the wrong-entity failure (buying the twin)
scores zero through the type-match term of the reward.

Gold solution: ``Search[attrs type] -> Choose[pid] -> Choose[option] -> Choose[buy]``.
"""

from __future__ import annotations

from ..core import FailureMode
from ..rewards import ShopChoice, ShopTarget, normalize_tokens, shop_reward
from ..seeding import rng
from .base import Environment, TaskSpec

TYPES = (
    "running shoes", "coffee grinder", "desk lamp", "travel backpack", "water bottle",
    "yoga mat", "phone case", "wireless earbuds", "wool blanket", "kitchen scale",
)
ATTRIBUTES = (
    "waterproof", "lightweight", "recycled", "organic", "foldable", "rechargeable",
    "insulated", "ergonomic", "compact", "durable", "vegan", "handmade",
)
OPTIONS = ("black", "white", "red", "blue", "green", "small", "medium", "large")

MODES = (
    FailureMode.NONE,
    FailureMode.PREMATURE_FINISH,
    FailureMode.WRONG_ENTITY,
    FailureMode.LOOP_REPEAT,
    FailureMode.WRONG_OPTION,
)

N_PAIRS = 20
RESULTS_PER_PAGE = 5


def generate_world(seed: int) -> dict:
    gen = rng("synthshop-world", seed)
    products = []
    ids = gen.choice(9000, size=2 * N_PAIRS, replace=False) + 1000
    for i in range(N_PAIRS):
        n_att = 2 + int(gen.integers(0, 3))
        attrs = sorted(ATTRIBUTES[int(k)] for k in gen.choice(len(ATTRIBUTES), size=n_att, replace=False))
        type_a, type_b = (TYPES[int(k)] for k in gen.choice(len(TYPES), size=2, replace=False))
        for j, ptype in enumerate((type_a, type_b)):
            n_opt = 1 + int(gen.integers(0, 3)) if j else 2 + int(gen.integers(0, 2))
            opts = sorted(OPTIONS[int(k)] for k in gen.choice(len(OPTIONS), size=n_opt, replace=False))
            pid = f"P{int(ids[2 * i + j])}"
            products.append({
                "id": pid,
                "title": " ".join(a.capitalize() for a in attrs) + " " + ptype.title(),
                "type": ptype,
                "attributes": attrs,
                "options": opts,
                "price": round(float(gen.uniform(5.0, 120.0)), 2),
                "twin": f"P{int(ids[2 * i + 1 - j])}",
            })
    return {"products": products}


def search(world: dict, query: str) -> list[dict]:
    tokens = set(normalize_tokens(query))
    scored = []
    for p in world["products"]:
        overlap = len(tokens & set(normalize_tokens(p["title"])))
        if overlap:
            scored.append((-overlap, p["id"], p))
    scored.sort(key=lambda s: (s[0], s[1]))
    return [p for _, _, p in scored[:RESULTS_PER_PAGE]]


def _target(product: dict, option: str) -> dict:
    return {
        "product_id": product["id"],
        "U_att": list(product["attributes"]),
        "U_opt": [option],
        "u_price": round(product["price"] * 1.25, 2),
        "type_text": product["type"],
    }


def generate_tasks(world: dict, seed: int, n_train: int = 50, n_val: int = 30) -> list[TaskSpec]:
    gen = rng("synthshop-tasks", seed)
    by_id = {p["id"]: p for p in world["products"]}
    # targets need two options (for the wrong-option failure) and a twin visible in the results
    candidates = []
    for p in world["products"]:
        query = " ".join(p["attributes"]) + " " + p["type"]
        ids = [r["id"] for r in search(world, query)]
        if len(p["options"]) >= 2 and p["id"] in ids and p["twin"] in ids:
            candidates.append(p)
    tasks = []
    for j in range(n_train + n_val):
        product = candidates[int(gen.integers(0, len(candidates)))]
        option = product["options"][int(gen.integers(0, len(product["options"])))]
        other = next(o for o in product["options"] if o != option)
        twin = by_id[product["twin"]]
        twin_option = option if option in twin["options"] else twin["options"][0]
        target = _target(product, option)
        query = " ".join(product["attributes"]) + " " + product["type"]
        gold = (f"Search[{query}]", f"Choose[{product['id']}]", f"Choose[{option}]", "Choose[buy]")
        plans = {
            FailureMode.NONE: gold,
            FailureMode.PREMATURE_FINISH: gold[:2] + ("Choose[buy]",),
            FailureMode.WRONG_ENTITY: (gold[0], f"Choose[{twin['id']}]", f"Choose[{twin_option}]", "Choose[buy]"),
            FailureMode.LOOP_REPEAT: gold[:1],
            FailureMode.WRONG_OPTION: gold[:2] + (f"Choose[{other}]", "Choose[buy]"),
        }
        mode = MODES[j % len(MODES)]
        attrs = " and ".join(product["attributes"])
        goal = (f"i am looking for {product['type']} that is {attrs}, in {option}, "
                f"and price lower than {target['u_price']:.2f} dollars")
        tasks.append(
            TaskSpec(
                env_id=SynthShop.env_id,
                task_id=f"s{j + 1:03d}",
                goal_text=goal,
                hidden_answer=target,
                failure_mode=mode,
                gold_actions=gold,
                failure_actions=plans[mode],
                split="train" if j < n_train else "val",
            )
        )
    return tasks


class SynthShop(Environment):
    env_id = "synthshop"
    verbs = ("Search", "Choose")
    default_max_steps = 10

    @classmethod
    def generate(cls, seed: int = 0, n_train: int = 50, n_val: int = 30) -> "SynthShop":
        world = generate_world(seed)
        return cls(world, generate_tasks(world, seed, n_train, n_val), seed=seed)

    def _product(self, pid: str) -> dict | None:
        return next((p for p in self.world["products"] if p["id"] == pid), None)

    def _initial(self, task, seed):
        obs = f"Instruction: {task.goal_text}. Available actions: Search[query], Choose[item]."
        return obs, {"page": "home", "results": [], "product": None, "selected": [], "bought": None}

    def _transition(self, task, raw, verb, arg):
        if verb == "Search":
            results = search(self.world, arg)
            raw.update(page="results", results=[p["id"] for p in results], product=None, selected=[])
            if not results:
                return "[Search results] no products found.", raw, False
            listing = " ".join(f"[{p['id']}] {p['title']} ${p['price']:.2f}" for p in results)
            return f"[Search results] {listing}", raw, False
        choice = arg.strip()
        if raw["page"] == "results" and choice in raw["results"]:
            p = self._product(choice)
            raw.update(page="product", product=choice, selected=[])
            opts = " ".join(f"[{o}]" for o in p["options"])
            return (f"[{p['id']}] {p['title']}. Category: {p['type']}. Attributes: {', '.join(p['attributes'])}. "
                    f"Options: {opts}. Price: ${p['price']:.2f}. [buy]"), raw, False
        if raw["page"] == "product":
            p = self._product(raw["product"])
            if choice.lower() == "buy":
                raw.update(page="done", bought={"product": p["id"], "selected": list(raw["selected"])})
                score = self.episode_return_from(task, raw["bought"])
                return f"Thank you for shopping. Your score (min 0.0, max 1.0): {score:.2f}", raw, True
            if choice.lower() in p["options"]:
                raw["selected"] = sorted(set(raw["selected"]) | {choice.lower()})
                return f"You selected option: {choice.lower()}.", raw, False
        return f"You cannot choose [{choice}] here.", raw, False

    def episode_return_from(self, task: TaskSpec, bought: dict | None) -> float:
        if bought is None:
            return 0.0
        p = self._product(bought["product"])
        t = task.hidden_answer
        target = ShopTarget(frozenset(t["U_att"]), frozenset(t["U_opt"]), t["u_price"], t["type_text"])
        choice = ShopChoice(frozenset(p["attributes"]), frozenset(bought["selected"]), p["price"], p["type"])
        return shop_reward(target, choice)

    def episode_return(self, state):
        return self.episode_return_from(self.get_task(state.raw["task_id"]), state.raw.get("bought"))
