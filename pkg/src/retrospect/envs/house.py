"""synthhouse: object-placement goals on a 5x5 grid of rooms.

Gold solution: walk to the object's room, Take it, walk to the receptacle's
room, Open the receptacle, Put the object in it. Movement is only between
orthogonally adjacent rooms. Reward is binary: 1 once the object is inside
the target receptacle.
"""

from __future__ import annotations

from collections import deque

from ..core import FailureMode
from ..rewards import binary_reward
from ..seeding import rng
from .base import Environment, TaskSpec

GRID = 5
ROOMS = (
    "kitchen", "pantry", "hallway", "bedroom", "study",
    "bathroom", "garage", "attic", "cellar", "library",
    "nursery", "office", "laundry", "lounge", "porch",
    "den", "gallery", "closet", "foyer", "parlor",
    "sunroom", "workshop", "storeroom", "mudroom", "balcony",
)
OBJECTS = ("mug", "apple", "book", "candle", "key", "towel", "spoon", "vase", "pillow", "plate", "soap", "watch")
RECEPTACLES = ("fridge", "cabinet", "drawer", "safe", "chest", "wardrobe", "crate", "locker")

MODES = (
    FailureMode.NONE,
    FailureMode.PREMATURE_FINISH,
    FailureMode.WRONG_ENTITY,
    FailureMode.LOOP_REPEAT,
    FailureMode.MISSED_LOOKUP,
)

MAX_GOLD_LENGTH = 18


def generate_world(seed: int) -> dict:
    gen = rng("synthhouse-world", seed)
    names = [ROOMS[int(i)] for i in gen.permutation(len(ROOMS))]
    grid = [names[r * GRID:(r + 1) * GRID] for r in range(GRID)]
    receptacle_rooms = {}
    for rec in RECEPTACLES:
        receptacle_rooms[rec] = names[int(gen.integers(0, len(names)))]
    return {"grid": grid, "receptacles": receptacle_rooms}


def _positions(world: dict) -> dict[str, tuple[int, int]]:
    return {name: (r, c) for r, row in enumerate(world["grid"]) for c, name in enumerate(row)}


def neighbours(world: dict, room: str) -> list[str]:
    r, c = _positions(world)[room]
    out = []
    for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
        rr, cc = r + dr, c + dc
        if 0 <= rr < GRID and 0 <= cc < GRID:
            out.append(world["grid"][rr][cc])
    return out


def shortest_path(world: dict, start: str, goal: str) -> list[str]:
    """Rooms visited after ``start`` on a BFS shortest path (deterministic neighbour order)."""
    prev = {start: None}
    queue = deque([start])
    while queue:
        room = queue.popleft()
        if room == goal:
            break
        for nxt in neighbours(world, room):
            if nxt not in prev:
                prev[nxt] = room
                queue.append(nxt)
    path = []
    room = goal
    while room != start:
        path.append(room)
        room = prev[room]
    return path[::-1]


def _plans(world: dict, spec: dict) -> dict[FailureMode, tuple[str, ...]]:
    obj, rec = spec["object"], spec["receptacle"]
    to_obj = [f"Goto[{r}]" for r in shortest_path(world, spec["start"], spec["object_room"])]
    to_rec = [f"Goto[{r}]" for r in shortest_path(world, spec["object_room"], world["receptacles"][rec])]
    to_wrong = [f"Goto[{r}]" for r in shortest_path(world, spec["start"], spec["distractor_room"])]
    gold = tuple(to_obj + [f"Take[{obj}]"] + to_rec + [f"Open[{rec}]", f"Put[{obj} in {rec}]"])
    return {
        FailureMode.NONE: gold,
        FailureMode.PREMATURE_FINISH: gold[:-1] + ("Finish[]",),
        FailureMode.WRONG_ENTITY: tuple(to_wrong + [f"Take[{obj}]", "Finish[]"]),
        FailureMode.LOOP_REPEAT: gold[:1],
        FailureMode.MISSED_LOOKUP: tuple(a for a in gold if not a.startswith("Open[")) + ("Finish[]",),
    }


def generate_tasks(world: dict, seed: int, n_train: int = 50, n_val: int = 30) -> list[TaskSpec]:
    gen = rng("synthhouse-tasks", seed)
    rooms = [name for row in world["grid"] for name in row]
    tasks = []
    j = 0
    while len(tasks) < n_train + n_val:
        obj = OBJECTS[int(gen.integers(0, len(OBJECTS)))]
        rec = RECEPTACLES[int(gen.integers(0, len(RECEPTACLES)))]
        start, object_room, distractor = (rooms[int(i)] for i in gen.choice(len(rooms), size=3, replace=False))
        spec = {"start": start, "object": obj, "object_room": object_room, "receptacle": rec,
                "distractor_room": distractor}
        plans = _plans(world, spec)
        if len(plans[FailureMode.NONE]) > MAX_GOLD_LENGTH:
            continue
        mode = MODES[j % len(MODES)]
        tasks.append(
            TaskSpec(
                env_id=SynthHouse.env_id,
                task_id=f"h{j + 1:03d}",
                goal_text=f"Your task is to: put a {obj} in the {rec}.",
                hidden_answer=spec,
                failure_mode=mode,
                gold_actions=plans[FailureMode.NONE],
                failure_actions=plans[mode],
                split="train" if j < n_train else "val",
            )
        )
        j += 1
    return tasks


class SynthHouse(Environment):
    env_id = "synthhouse"
    verbs = ("Goto", "Take", "Open", "Put", "Finish")
    default_max_steps = 20

    @classmethod
    def generate(cls, seed: int = 0, n_train: int = 50, n_val: int = 30) -> "SynthHouse":
        world = generate_world(seed)
        return cls(world, generate_tasks(world, seed, n_train, n_val), seed=seed)

    def _describe(self, task: TaskSpec, raw: dict) -> str:
        room = raw["room"]
        spec = task.hidden_answer
        items = []
        if spec["object_room"] == room and not raw["holding"] and not raw["placed"]:
            items.append(f"a {spec['object']}")
        for rec, rec_room in self.world["receptacles"].items():
            if rec_room == room:
                state = "open" if rec in raw["opened"] else "closed"
                items.append(f"a {rec} ({state})")
        seen = ", ".join(items) if items else "nothing of interest"
        exits = ", ".join(neighbours(self.world, room))
        return f"You are in the {room}. You see {seen}. Exits: {exits}."

    def _initial(self, task, seed):
        raw = {"room": task.hidden_answer["start"], "holding": None, "opened": [], "placed": None,
               "finished": False}
        return f"{task.goal_text} {self._describe(task, raw)}", raw

    def _transition(self, task, raw, verb, arg):
        spec = task.hidden_answer
        room = raw["room"]
        target = arg.strip().lower()
        if verb == "Goto":
            if target == room:
                return f"You are already in the {room}.", raw, False
            if target not in neighbours(self.world, room):
                return f"You can't reach the {target} from here.", raw, False
            raw["room"] = target
            return self._describe(task, raw), raw, False
        if verb == "Take":
            if (target == spec["object"] and spec["object_room"] == room and raw["holding"] is None
                    and raw["placed"] is None):
                raw["holding"] = target
                return f"You pick up the {target}.", raw, False
            return "Nothing happens.", raw, False
        if verb == "Open":
            if self.world["receptacles"].get(target) == room:
                raw["opened"] = sorted(set(raw["opened"]) | {target})
                return f"You open the {target}.", raw, False
            return "Nothing happens.", raw, False
        if verb == "Put":
            obj, _, rec = target.partition(" in ")
            obj, rec = obj.strip(), rec.strip()
            if raw["holding"] != obj or self.world["receptacles"].get(rec) != room:
                return "Nothing happens.", raw, False
            if rec not in raw["opened"]:
                return f"The {rec} is closed.", raw, False
            raw.update(holding=None, placed=rec)
            done = obj == spec["object"] and rec == spec["receptacle"]
            if done:
                return f"You put the {obj} in the {rec}. Task completed.", raw, True
            return f"You put the {obj} in the {rec}.", raw, False
        raw["finished"] = True
        return "You stop. Task not completed." if raw["placed"] != spec["receptacle"] else "You stop.", raw, True

    def episode_return(self, state):
        spec = self.get_task(state.raw["task_id"]).hidden_answer
        return binary_reward(state.raw["placed"] == spec["receptacle"])
