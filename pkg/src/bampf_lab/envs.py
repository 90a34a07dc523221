"""Benchmark environments, the environment-spec file format, and random instances.

Environment-spec documents are UTF-8 JSON::

    {
      "schema_version": 1,
      "name": "caterpillar",
      "discount": 0.95,
      "states": ["s_w", "s_b"],
      "actions": ["stay", "go"],
      "applicable": [[true, true], [true, true]],      # optional, default all true
      "candidates": [
        {
          "weight": 0.1,
          "initial_dist": [1.0, 0.0],
          "transitions": [[[...S floats...] per action] per state],
          "rewards": {"values": [...K floats...],
                      "probs": [[[[...K floats...] per s' or one] per action] per state]}
        },
        ...
      ],
      "annotations": {...},                            # optional, free-form
      "shaping": {"name": "...", "params": {...}, "scale": 1.0}   # optional
    }

Instead of ``values``/``probs`` a candidate may give ``"rewards": {"expected": R}``
with ``R`` of shape ``(S, A)`` or ``(S, A, S)`` for point-mass rewards.
``save_env_spec`` always writes the explicit form.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Any

import numpy as np

from bampf_lab.bamdp import PriorMixture
from bampf_lab.errors import ArgumentError, ValidationError
from bampf_lab.mdp import FiniteMdp

SCHEMA_VERSION = 1

BENCHMARKS = ("caterpillar", "goal_grid", "unique_grid", "noisy_tv", "necessity", "coin")


# --- benchmarks ----------------------------------------------------------------


def caterpillar(gamma: float = 0.95, p_food: float = 0.1) -> PriorMixture:
    """Weed ``s_w`` (reward 21 for staying) and bush ``s_b`` (150 with food, else 0); moving costs 5."""
    T = np.zeros((2, 2, 2))
    T[0, 0, 0] = T[1, 0, 1] = 1.0  # stay
    T[0, 1, 1] = T[1, 1, 0] = 1.0  # go
    names = dict(state_names=("s_w", "s_b"), action_names=("stay", "go"))
    init = [1.0, 0.0]
    food = FiniteMdp.from_deterministic_rewards(T, [[21.0, -5.0], [150.0, -5.0]], init, gamma, **names)
    empty = FiniteMdp.from_deterministic_rewards(T, [[21.0, -5.0], [0.0, -5.0]], init, gamma, **names)
    return PriorMixture(
        (food, empty),
        [p_food, 1.0 - p_food],
        name="caterpillar",
        annotations={"candidate_names": ["M1_food", "M2_empty"], "start": 0},
    )


GRID_ACTIONS = ("up", "down", "left", "right")
_MOVES = {"up": (0, 1), "down": (0, -1), "left": (-1, 0), "right": (1, 0)}


def grid_index(x: int, y: int, width: int) -> int:
    return y * width + x


def _grid_mdp(width: int, height: int, goal: tuple[int, int], start: tuple[int, int], gamma: float) -> FiniteMdp:
    if width < 1 or height < 1:
        raise ArgumentError(f"grid dimensions must be positive, got {width}x{height}")
    for name, (x, y) in (("goal", goal), ("start", start)):
        if not (0 <= x < width and 0 <= y < height):
            raise ArgumentError(f"{name} {(x, y)} lies outside the {width}x{height} grid")
    n = width * height
    T = np.zeros((n, 4, n))
    R = np.zeros((n, 4))
    g = grid_index(*goal, width)
    for y in range(height):
        for x in range(width):
            s = grid_index(x, y, width)
            for a, name in enumerate(GRID_ACTIONS):
                dx, dy = _MOVES[name]
                nx, ny = x + dx, y + dy
                if not (0 <= nx < width and 0 <= ny < height):
                    nx, ny = x, y
                T[s, a, grid_index(nx, ny, width)] = 1.0
            if s == g:
                R[s, :] = 1.0
    init = np.zeros(n)
    init[grid_index(*start, width)] = 1.0
    names = tuple(f"({x},{y})" for y in range(height) for x in range(width))
    return FiniteMdp.from_deterministic_rewards(T, R, init, gamma, state_names=names, action_names=GRID_ACTIONS)


def goal_grid(
    width: int = 5,
    height: int = 5,
    goal: tuple[int, int] | None = None,
    start: tuple[int, int] = (0, 0),
    gamma: float = 0.99,
) -> PriorMixture:
    """Deterministic 4-neighbour grid; every action taken at the goal pays 1. Walls block in place."""
    goal = (width - 1, height - 1) if goal is None else tuple(goal)
    mdp = _grid_mdp(width, height, goal, tuple(start), gamma)
    ann = {"width": width, "height": height, "goal": list(goal), "start": list(start)}
    return PriorMixture((mdp,), [1.0], name="goal_grid", annotations=ann)


def unique_grid(
    width: int = 5,
    height: int = 5,
    goal: tuple[int, int] | None = None,
    start: tuple[int, int] = (0, 0),
    episode_length: int = 50,
    gamma: float = 0.99,
) -> PriorMixture:
    """``goal_grid`` wrapped episodically (state index ``cell * L + step``)."""
    from bampf_lab.mdp import episodic_wrapper

    goal = (width - 1, height - 1) if goal is None else tuple(goal)
    mdp = episodic_wrapper(_grid_mdp(width, height, goal, tuple(start), gamma), episode_length)
    ann = {
        "width": width,
        "height": height,
        "goal": list(goal),
        "start": list(start),
        "episode_length": episode_length,
    }
    return PriorMixture((mdp,), [1.0], name="unique_grid", annotations=ann)


NOISY_TV_ACTIONS = ("left", "right", "stay")


def noisy_tv(corridor_len: int = 4, channels: int = 8, gamma: float = 0.95, goal_prob: float = 1.0) -> PriorMixture:
    """Corridor whose first cell holds a TV; the goal (reward 1 per step) is at the far end.

    Position 0 is the TV cell and is split into ``channels`` states, one per
    channel shown; every action that ends at the TV redraws the channel
    uniformly. Positions ``1 .. corridor_len - 1`` are ordinary cells. The
    TV behaves identically in every candidate, so it carries no information.
    With ``goal_prob < 1`` a second candidate (weight ``1 - goal_prob``) has
    an empty goal, which makes the goal the only informative place.
    """
    L, C = int(corridor_len), int(channels)
    if L < 2 or C < 1:
        raise ArgumentError(f"noisy_tv needs corridor_len >= 2 and channels >= 1, got {L}, {C}")
    if not 0.0 < goal_prob <= 1.0:
        raise ArgumentError(f"goal_prob must lie in (0, 1], got {goal_prob}")
    n = C + L - 1
    tv = list(range(C))

    def cell(pos: int) -> int:
        return C + pos - 1

    T = np.zeros((n, 3, n))
    R = np.zeros((n, 3))
    uniform = np.zeros(n)
    uniform[tv] = 1.0 / C

    def moves(pos: int) -> dict[int, int]:
        return {0: max(pos - 1, 0), 1: min(pos + 1, L - 1), 2: pos}

    for pos in range(L):
        sources = tv if pos == 0 else [cell(pos)]
        for s in sources:
            for a, dest in moves(pos).items():
                if dest == 0:
                    T[s, a] = uniform
                else:
                    T[s, a, cell(dest)] = 1.0
            if pos == L - 1:
                R[s, :] = 1.0
    names = tuple(f"tv:{c}" for c in range(C)) + tuple(f"c{p}" for p in range(1, L))
    mdp = FiniteMdp.from_deterministic_rewards(T, R, uniform, gamma, state_names=names, action_names=NOISY_TV_ACTIONS)
    ann = {"tv_states": tv, "goal": cell(L - 1), "channels": C, "corridor_len": L}
    if goal_prob == 1.0:
        return PriorMixture((mdp,), [1.0], name="noisy_tv", annotations=ann)
    empty = FiniteMdp.from_deterministic_rewards(
        T, np.zeros_like(R), uniform, gamma, state_names=names, action_names=NOISY_TV_ACTIONS
    )
    ann["goal_prob"] = goal_prob
    return PriorMixture((mdp, empty), [goal_prob, 1.0 - goal_prob], name="noisy_tv", annotations=ann)


def necessity(r_prime: float = 0.0, delta: float = 1.0, gamma: float = 0.9) -> PriorMixture:
    """Deterministic three-state instance ``s1, s2, s_a`` with actions ``a`` (absorb) and ``a'``.

    From ``s1``: ``a`` goes to ``s_a`` paying ``r' + delta/2``; ``a'`` goes to ``s2``
    paying ``r'``. From ``s2`` and ``s_a`` only ``a`` applies, to ``s_a`` with reward 0.
    """
    T = np.zeros((3, 2, 3))
    T[0, 0, 2] = 1.0
    T[0, 1, 1] = 1.0
    T[1, 0, 2] = 1.0
    T[2, 0, 2] = 1.0
    R = np.zeros((3, 2))
    R[0, 0] = r_prime + delta / 2.0
    R[0, 1] = r_prime
    mask = np.array([[True, True], [True, False], [True, False]])
    mdp = FiniteMdp.from_deterministic_rewards(
        T, R, [1.0, 0.0, 0.0], gamma, mask, state_names=("s1", "s2", "s_a"), action_names=("a", "a'")
    )
    return PriorMixture((mdp,), [1.0], name="necessity", annotations={"r_prime": r_prime, "delta": delta})


def coin(
    p_heads: tuple[float, ...] = (0.8, 0.2), weights: tuple[float, ...] = (0.5, 0.5), gamma: float = 0.9
) -> PriorMixture:
    """Coin of unknown bias: ``toss`` lands heads (reward 1) or tails (reward 0); ``stay`` pays 0.

    States ``ready, heads, tails``; tossing is available everywhere.
    """
    if len(p_heads) != len(weights):
        raise ArgumentError("p_heads and weights must have the same length")
    cands = []
    for p in p_heads:
        if not 0.0 <= p <= 1.0:
            raise ArgumentError(f"heads probability {p} outside [0, 1]")
        T = np.zeros((3, 2, 3))
        T[:, 0, 1] = p
        T[:, 0, 2] = 1.0 - p
        for s in range(3):
            T[s, 1, s] = 1.0
        R = np.zeros((3, 2, 3))
        R[:, 0, 1] = 1.0
        cands.append(
            FiniteMdp.from_deterministic_rewards(
                T, R, [1.0, 0.0, 0.0], gamma, state_names=("ready", "heads", "tails"), action_names=("toss", "stay")
            )
        )
    return PriorMixture(tuple(cands), list(weights), name="coin", annotations={"p_heads": list(p_heads)})


def with_discount(prior: PriorMixture, gamma: float) -> PriorMixture:
    """Same prior with every candidate's discount replaced."""
    cands = tuple(dataclasses.replace(m, discount=float(gamma)) for m in prior.candidates)
    return PriorMixture(cands, prior.weights, name=prior.name, annotations=dict(prior.annotations))


def make_benchmark(name: str, **params: Any) -> PriorMixture:
    """Construct a named benchmark; annotations travel on ``prior.annotations``."""
    builders = {
        "caterpillar": caterpillar,
        "goal_grid": goal_grid,
        "unique_grid": unique_grid,
        "noisy_tv": noisy_tv,
        "necessity": necessity,
        "coin": coin,
    }
    if name not in builders:
        raise ArgumentError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
    try:
        return builders[name](**params)
    except TypeError as exc:
        raise ArgumentError(f"bad parameters for benchmark {name!r}: {exc}") from None


# --- random instances ---------------------------------------------------------------


def gen_random_bamdp(
    seed: int,
    n_states: int = 3,
    n_actions: int = 2,
    n_candidates: int = 2,
    reward_grid: tuple[float, ...] = (0.0, 0.5, 1.0),
    sparsity: float = 0.6,
    gamma: float = 0.7,
    diff_prob: float = 0.5,
    stochastic_reward_prob: float = 0.25,
) -> PriorMixture:
    """Seeded random prior for property tests.

    Transition rows put mass 1 or 1/2 on one or two successors (one with
    probability ``sparsity``); rewards are point masses or 50/50 mixtures on
    ``reward_grid``. Candidates copy a base model and redraw each ``(s, a)``
    entry with probability ``diff_prob``. Values on dyadic grids keep the
    posteriors exact. Intended sizes: ``|S| <= 5``, ``|A| <= 3``, ``<= 3``
    candidates.
    """
    rng = np.random.default_rng(seed)
    grid = np.asarray(reward_grid, dtype=np.float64)

    def draw_row() -> np.ndarray:
        row = np.zeros(n_states)
        if n_states == 1 or rng.random() < sparsity:
            row[rng.integers(n_states)] = 1.0
        else:
            a, b = rng.choice(n_states, size=2, replace=False)
            row[a] = row[b] = 0.5
        return row

    def draw_reward() -> np.ndarray:
        p = np.zeros(grid.size)
        if grid.size > 1 and rng.random() < stochastic_reward_prob:
            a, b = rng.choice(grid.size, size=2, replace=False)
            p[a] = p[b] = 0.5
        else:
            p[rng.integers(grid.size)] = 1.0
        return p

    base_T = np.array([[draw_row() for _ in range(n_actions)] for _ in range(n_states)])
    base_R = np.array([[draw_reward() for _ in range(n_actions)] for _ in range(n_states)])
    init = np.zeros(n_states)
    init[0] = 1.0
    cands = []
    for i in range(n_candidates):
        T, R = base_T.copy(), base_R.copy()
        if i > 0:
            for s in range(n_states):
                for a in range(n_actions):
                    if rng.random() < diff_prob:
                        T[s, a] = draw_row()
                    if rng.random() < diff_prob:
                        R[s, a] = draw_reward()
        names = dict(state_names=tuple(f"s{k}" for k in range(n_states)), action_names=tuple(f"a{k}" for k in range(n_actions)))
        cands.append(FiniteMdp(T, grid, R[:, :, None, :], init, gamma, None, **names))
    w = np.round(rng.dirichlet(np.ones(n_candidates)), 2) + 0.01
    w = w / w.sum()
    return PriorMixture(tuple(cands), w, name=f"random-{seed}", annotations={"seed": int(seed)})


# --- spec files ---------------------------------------------------------------------


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ValidationError(f"{path}: missing required field {key!r}")
    return doc[key]


def _array(value, path: str, ndim: int | tuple[int, ...]) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ValidationError(f"{path}: expected a numeric array") from None
    allowed = (ndim,) if isinstance(ndim, int) else ndim
    if arr.ndim not in allowed:
        raise ValidationError(f"{path}: expected {' or '.join(map(str, allowed))}-D array, got {arr.ndim}-D")
    return arr


def prior_from_document(doc: dict) -> PriorMixture:
    """Validate a parsed spec document and build the prior."""
    if not isinstance(doc, dict):
        raise ValidationError("$: spec document must be a JSON object")
    version = _require(doc, "schema_version", "$")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"$.schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")
    gamma = _require(doc, "discount", "$")
    if not isinstance(gamma, (int, float)) or isinstance(gamma, bool):
        raise ValidationError("$.discount: expected a number")
    states = _require(doc, "states", "$")
    actions = _require(doc, "actions", "$")
    if not isinstance(states, list) or not isinstance(actions, list):
        raise ValidationError("$.states and $.actions must be lists of names")
    n_s, n_a = len(states), len(actions)
    applicable = doc.get("applicable")
    if applicable is not None:
        mask = np.asarray(applicable, dtype=object)
        if mask.shape != (n_s, n_a) or not all(isinstance(x, bool) for x in mask.reshape(-1)):
            raise ValidationError(f"$.applicable: expected a {n_s}x{n_a} boolean table")
        applicable = mask.astype(bool)
    cands_doc = _require(doc, "candidates", "$")
    if not isinstance(cands_doc, list) or not cands_doc:
        raise ValidationError("$.candidates: expected a nonempty list")
    cands, weights = [], []
    for i, c in enumerate(cands_doc):
        path = f"$.candidates[{i}]"
        if not isinstance(c, dict):
            raise ValidationError(f"{path}: expected an object")
        weights.append(_require(c, "weight", path))
        T = _array(_require(c, "transitions", path), f"{path}.transitions", 3)
        if T.shape != (n_s, n_a, n_s):
            raise ValidationError(f"{path}.transitions: expected shape {(n_s, n_a, n_s)}, got {T.shape}")
        init = _array(_require(c, "initial_dist", path), f"{path}.initial_dist", 1)
        rew = _require(c, "rewards", path)
        if not isinstance(rew, dict):
            raise ValidationError(f"{path}.rewards: expected an object")
        try:
            if "expected" in rew:
                R = _array(rew["expected"], f"{path}.rewards.expected", (2, 3))
                m = FiniteMdp.from_deterministic_rewards(T, R, init, gamma, applicable, states, actions)
            else:
                values = _array(_require(rew, "values", f"{path}.rewards"), f"{path}.rewards.values", 1)
                probs = _array(_require(rew, "probs", f"{path}.rewards"), f"{path}.rewards.probs", 4)
                m = FiniteMdp(T, values, probs, init, gamma, applicable, tuple(states), tuple(actions))
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from None
        cands.append(m)
    try:
        prior = PriorMixture(
            tuple(cands), weights, name=str(doc.get("name", "custom")), annotations=dict(doc.get("annotations", {}))
        )
    except ValidationError as exc:
        raise ValidationError(f"$: {exc}") from None
    return prior


def load_env_spec(text: str) -> PriorMixture:
    """Parse a spec document; the optional ``shaping`` block is available via ``load_shaping_spec``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"$: not valid JSON ({exc})") from None
    return prior_from_document(doc)


def load_shaping_spec(text: str) -> dict | None:
    doc = json.loads(text)
    spec = doc.get("shaping") if isinstance(doc, dict) else None
    if spec is None:
        return None
    if not isinstance(spec, dict) or "name" not in spec:
        raise ValidationError("$.shaping: expected an object with a 'name'")
    return {"name": spec["name"], "params": dict(spec.get("params", {})), "scale": float(spec.get("scale", 1.0))}


def prior_to_document(prior: PriorMixture, shaping: dict | None = None) -> dict:
    m0 = prior.candidates[0]
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "name": prior.name,
        "discount": prior.discount,
        "states": list(m0.state_names or [f"s{i}" for i in range(m0.n_states)]),
        "actions": list(m0.action_names or [f"a{j}" for j in range(m0.n_actions)]),
        "applicable": m0.applicable.tolist(),
        "candidates": [
            {
                "weight": float(w),
                "initial_dist": m.initial_dist.tolist(),
                "transitions": m.transition.tolist(),
                "rewards": {"values": m.reward_values.tolist(), "probs": m.reward_probs.tolist()},
            }
            for w, m in zip(prior.weights, prior.candidates)
        ],
        "annotations": prior.annotations,
    }
    if shaping is not None:
        doc["shaping"] = shaping
    return doc


def save_env_spec(prior: PriorMixture, shaping: dict | None = None) -> str:
    """Serialise to the JSON spec format; ``load_env_spec(save_env_spec(p))`` reproduces ``p`` bitwise."""
    return json.dumps(prior_to_document(prior, shaping), indent=1) + "\n"
