"""Command-line front end.

Usage: ``bampf-lab <command> [flags]``. Every run validates its configuration
first, writes ``config.json`` into the output directory and stamps each
artifact with the schema version and a hash of that configuration:
JSON files carry ``schema_version`` and ``config_hash`` keys, CSV files
start with a ``# schema_version=<n> config_hash=<hash>`` line.

CSV schemas:

* traces: ``seed,t,s,a,r,F,G_partial`` (``G_partial`` is the discounted
  extrinsic return up to and including step ``t``)
* heatmaps: ``x,y,value``
* decomposition: ``node,s,depth,belief,voi,voo,total,error_bound``
* tables: ``quantity,value,reference,error_bound``

Exit status: 0 on success, 1 on invalid input or operational failure, 2 when
a verification fails (bound violated, theorem check failed, reproduced value
out of tolerance). Errors are reported on stderr as one JSON record.
Outputs are byte-identical for identical configurations and seeds,
whatever ``--jobs`` is.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from bampf_lab import __version__
from bampf_lab.agents import (
    AGENTS,
    BeliefInterpreter,
    CertaintyEquivalentAgent,
    PolicySearch,
    RandomAgent,
    make_agent,
)
from bampf_lab.bamdp import AugmentedState, BayesPlanner, PlannerConfig, PriorMixture, decompose_value, initial_state
from bampf_lab.envs import (
    BENCHMARKS,
    SCHEMA_VERSION,
    gen_random_bamdp,
    grid_index,
    load_env_spec,
    load_shaping_spec,
    make_benchmark,
    save_env_spec,
    with_discount,
)
from bampf_lab.errors import BampfLabError
from bampf_lab.evaluation import (
    BOUND_KINDS,
    bayesian_regret,
    reachable_states,
    rollout,
    theorem1_campaign,
    verify_bounds,
)
from bampf_lab.mdp import StationaryPolicy
from bampf_lab.shaping import BUILTINS, build_necessity_counterexample, check_bampf, make_builtin

DEFAULT_OUT = "bampf_out"


class UsageError(BampfLabError):
    pass


class VerificationFailed(Exception):
    def __init__(self, message: str, record: dict | None = None):
        super().__init__(message)
        self.record = record or {}


# --- configuration ------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    command: str
    env: str | None = None
    spec: str | None = None
    env_params: dict = field(default_factory=dict)
    agent: str = "bayes"
    agent_params: dict = field(default_factory=dict)
    shaping: str | None = None
    shaping_params: dict = field(default_factory=dict)
    scale: float = 1.0
    gamma_override: float | None = None
    horizon: int = 200
    planner_horizon: int = 250
    seeds: list[int] = field(default_factory=lambda: [0])
    jobs: int = 1
    out: str = DEFAULT_OUT
    tol: float = 1e-9
    options: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        doc = asdict(self)
        doc.pop("out")
        doc.pop("jobs")
        return doc

    @property
    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_pairs(items: Sequence[str] | None, flag: str) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"{flag} expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v)
    return out


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"0,2,5"`` or ``"0-9"`` (inclusive)."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part[1:]:
                lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise UsageError(f"cannot parse --seeds {text!r}") from None
    if not out:
        raise UsageError("--seeds is empty")
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--env", help=f"built-in environment ({', '.join(BENCHMARKS)})")
    common.add_argument("--spec", help="environment spec file (JSON)")
    common.add_argument("--env-param", action="append", metavar="K=V", help="benchmark parameter (repeatable)")
    common.add_argument("--agent", default="bayes", help=f"agent ({', '.join(AGENTS)})")
    common.add_argument("--agent-param", action="append", metavar="K=V", help="agent parameter (repeatable)")
    common.add_argument("--shaping", help=f"built-in pseudo-reward ({', '.join(BUILTINS)})")
    common.add_argument("--shaping-param", action="append", metavar="K=V", help="shaping parameter (repeatable)")
    common.add_argument("--scale", type=float, default=None, help="shaping scale beta (default 1)")
    common.add_argument("--gamma-override", type=float, help="replace the environment's discount")
    common.add_argument("--horizon", type=int, default=None, help="rollout / evaluation horizon")
    common.add_argument("--planner-horizon", type=int, default=250, help="expectimax depth")
    common.add_argument("--seeds", default="0", help="seed list: 3, 0,2,5 or 0-9")
    common.add_argument("--jobs", type=int, default=1, help="parallel rollouts (output order is fixed)")
    common.add_argument("--out", help="output directory (default $BAMPF_LAB_OUT or ./bampf_out)")
    common.add_argument("--tol", type=float, default=1e-9, help="numerical tolerance")

    p = _Parser(prog="bampf-lab", description="Bayes-adaptive MDP planning and BAMDP reward shaping lab.")
    p.add_argument("--version", action="version", version=f"bampf-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("plan", parents=[common], help="Bayes-optimal values at an initial state")
    sp.add_argument("--state", type=int, default=None, help="physical start state (default: every initial state)")

    sub.add_parser("rollout", parents=[common], help="simulate an agent; traces as CSV")

    sp = sub.add_parser("decompose", parents=[common], help="VOI/VOO decomposition over reachable states")
    sp.add_argument("--depth", type=int, default=2)

    sp = sub.add_parser("check-bampf", parents=[common], help="certify a pseudo-reward as potential-based")
    sp.add_argument("--builtin", help="alias of --shaping")
    sp.add_argument("--depth", type=int, default=3)

    sp = sub.add_parser("counterexample", parents=[common], help="build the instance on which a non-BAMPF changes behaviour")
    sp.add_argument("--builtin", help="alias of --shaping")
    sp.add_argument("--depth", type=int, default=3)

    sp = sub.add_parser("bounds", parents=[common], help="check a shaping guarantee")
    sp.add_argument("--kind", required=True, choices=BOUND_KINDS)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--phi-max", type=float, default=1.0)
    sp.add_argument("--d", type=float, default=0.01)

    sp = sub.add_parser("verify-theorem1", parents=[common], help="shaped vs unshaped planning on random priors")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--depth", type=int, default=2)

    sp = sub.add_parser("reproduce", parents=[common], help="regenerate a worked example")
    sp.add_argument("target", choices=("caterpillar", "fig1", "noisytv"))

    sp = sub.add_parser("gen-random", parents=[common], help="write random environment specs")
    sp.add_argument("--n-states", type=int, default=3)
    sp.add_argument("--n-actions", type=int, default=2)
    sp.add_argument("--n-candidates", type=int, default=2)
    return p


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    cmd = args.command
    if getattr(args, "builtin", None):
        if args.shaping and args.shaping != args.builtin:
            raise UsageError("--builtin and --shaping disagree")
        args.shaping = args.builtin
    if args.env and args.spec:
        raise UsageError("give either --env or --spec, not both")
    if args.env and args.env not in BENCHMARKS:
        raise UsageError(f"unknown --env {args.env!r}; choose from {', '.join(BENCHMARKS)}")
    if args.spec and not Path(args.spec).is_file():
        raise UsageError(f"--spec file not found: {args.spec}")
    if args.agent not in AGENTS:
        raise UsageError(f"unknown --agent {args.agent!r}; choose from {', '.join(AGENTS)}")
    if args.shaping and args.shaping not in BUILTINS:
        raise UsageError(f"unknown --shaping {args.shaping!r}; choose from {', '.join(BUILTINS)}")
    if args.gamma_override is not None and not 0.0 <= args.gamma_override < 1.0:
        raise UsageError("--gamma-override must lie in [0, 1)")
    if args.horizon is not None and args.horizon < 1:
        raise UsageError("--horizon must be >= 1")
    if args.planner_horizon < 0:
        raise UsageError("--planner-horizon must be >= 0")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    options = {}
    for key in ("state", "depth", "kind", "k", "phi_max", "d", "n", "target", "n_states", "n_actions", "n_candidates"):
        if hasattr(args, key):
            options[key] = getattr(args, key)
    needs_env = cmd in ("plan", "rollout", "decompose", "check-bampf", "counterexample") or (
        cmd == "bounds" and args.kind != "d-horizon"
    )
    if needs_env and not (args.env or args.spec):
        raise UsageError(f"{cmd} needs --env or --spec")
    if cmd in ("check-bampf", "counterexample") and not args.shaping:
        raise UsageError(f"{cmd} needs --shaping (or --builtin)")
    out = args.out or os.environ.get("BAMPF_LAB_OUT") or DEFAULT_OUT
    horizon = args.horizon if args.horizon is not None else 200
    return ExperimentConfig(
        command=cmd,
        env=args.env,
        spec=args.spec,
        env_params=_parse_pairs(args.env_param, "--env-param"),
        agent=args.agent,
        agent_params=_parse_pairs(args.agent_param, "--agent-param"),
        shaping=args.shaping,
        shaping_params=_parse_pairs(args.shaping_param, "--shaping-param"),
        scale=1.0 if args.scale is None else float(args.scale),
        gamma_override=args.gamma_override,
        horizon=horizon,
        planner_horizon=args.planner_horizon,
        seeds=parse_seeds(args.seeds),
        jobs=args.jobs,
        out=out,
        tol=args.tol,
        options=options,
    )


# --- output ---------------------------------------------------------------------------------


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, frozenset, set)):
        seq = sorted(x) if isinstance(x, (frozenset, set)) else x
        return [_jsonable(v) for v in seq]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


class Output:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dir = Path(cfg.out)
        self.written: list[str] = []

    def _path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written.append(name)
        return self.dir / name

    def json(self, name: str, payload: dict) -> None:
        doc = {"schema_version": SCHEMA_VERSION, "config_hash": self.cfg.hash, **_jsonable(payload)}
        self._path(name).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    def csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        buf = io.StringIO()
        buf.write(f"# schema_version={SCHEMA_VERSION} config_hash={self.cfg.hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self._path(name).write_text(buf.getvalue())

    def raw(self, name: str, text: str) -> None:
        self._path(name).write_text(text)

    def config(self) -> None:
        self.json("config.json", {"config": self.cfg.canonical()})


# --- shared construction ---------------------------------------------------------------------


def load_prior(cfg: ExperimentConfig) -> tuple[PriorMixture, dict | None]:
    shaping_doc = None
    if cfg.spec:
        text = Path(cfg.spec).read_text()
        prior = load_env_spec(text)
        shaping_doc = load_shaping_spec(text)
    else:
        prior = make_benchmark(cfg.env or "caterpillar", **cfg.env_params)
    if cfg.gamma_override is not None:
        prior = with_discount(prior, cfg.gamma_override)
    return prior, shaping_doc


def load_shaping(cfg: ExperimentConfig, prior: PriorMixture, shaping_doc: dict | None):
    if cfg.shaping:
        return make_builtin(cfg.shaping, prior, scale=cfg.scale, **dict(cfg.shaping_params))
    if shaping_doc is not None:
        return make_builtin(shaping_doc["name"], prior, scale=shaping_doc["scale"], **dict(shaping_doc["params"]))
    return None


def planner_cfg(cfg: ExperimentConfig) -> PlannerConfig:
    return PlannerConfig(horizon=cfg.planner_horizon, tol=cfg.tol)


def _initial_states(prior: PriorMixture, state: int | None) -> list[int]:
    if state is not None:
        prior.candidates[0].check_state(state)
        return [int(state)]
    return [int(s) for s in np.flatnonzero(prior.mean_initial_dist() > 0)]


def _names(prior: PriorMixture):
    sn = prior.state_names or tuple(f"s{i}" for i in range(prior.n_states))
    an = prior.action_names or tuple(f"a{j}" for j in range(prior.n_actions))
    return sn, an


# --- commands ----------------------------------------------------------------------------------


def cmd_plan(cfg: ExperimentConfig, out: Output) -> int:
    prior, doc = load_prior(cfg)
    f = load_shaping(cfg, prior, doc)
    planner = BayesPlanner(prior, f, planner_cfg(cfg))
    sn, an = _names(prior)
    results = []
    for s0 in _initial_states(prior, cfg.options.get("state")):
        res = planner.plan(initial_state(prior, s0, f))
        results.append(
            {
                "state": s0,
                "state_name": sn[s0],
                "value": res.value,
                "action_values": {an[a]: q for a, q in sorted(res.action_values.items())},
                "optimal_actions": [an[a] for a in sorted(res.optimal_action_set)],
                "error_bound": res.error_bound,
            }
        )
    out.json("plan.json", {"env": prior.name, "shaping": None if f is None else f.name, "results": results, "nodes": planner.nodes})
    return 0


def _agent(cfg: ExperimentConfig, prior: PriorMixture, f):
    params = dict(cfg.agent_params)
    objective_shaping = f if params.pop("shaped", True) else None
    return make_agent(cfg.agent, prior, objective_shaping, planner_cfg(cfg), **params)


def cmd_rollout(cfg: ExperimentConfig, out: Output) -> int:
    prior, doc = load_prior(cfg)
    f = load_shaping(cfg, prior, doc)
    agent = _agent(cfg, prior, f)
    traces = rollout(prior, agent, f, cfg.horizon, cfg.seeds, cfg.jobs)
    g = prior.discount
    rows = []
    for tr in traces:
        partial = 0.0
        for st in tr.steps:
            partial += g**st.t * st.r
            rows.append((tr.seed, st.t, st.s, st.a, float(st.r), float(st.f), partial))
    out.csv("traces.csv", ("seed", "t", "s", "a", "r", "F", "G_partial"), rows)
    summary = [
        {
            "seed": tr.seed,
            "model_index": tr.model_index,
            "extrinsic_return": tr.extrinsic_return,
            "shaped_return": tr.shaped_return,
            "tail_bound": tr.tail_bound,
        }
        for tr in traces
    ]
    out.json("rollout_summary.json", {"agent": agent.name, "horizon": cfg.horizon, "traces": summary})
    return 0


def cmd_decompose(cfg: ExperimentConfig, out: Output) -> int:
    prior, _ = load_prior(cfg)
    planner = BayesPlanner(prior, None, planner_cfg(cfg))
    rows = []
    for j, aug in enumerate(reachable_states(prior, None, int(cfg.options.get("depth", 2)))):
        d = decompose_value(prior, aug, planner=planner)
        belief = " ".join(repr(w) for w in aug.belief.weights)
        rows.append((j, aug.physical_state, aug.depth, belief, d.voi, d.voo, d.total, d.error_bound))
    out.csv("decomposition.csv", ("node", "s", "depth", "belief", "voi", "voo", "total", "error_bound"), rows)
    return 0


def _certificate(cfg: ExperimentConfig, prior: PriorMixture, f):
    return check_bampf(f, prior, int(cfg.options.get("depth", 3)), tol=cfg.tol)


def cmd_check_bampf(cfg: ExperimentConfig, out: Output) -> int:
    prior, doc = load_prior(cfg)
    f = load_shaping(cfg, prior, doc)
    cert = _certificate(cfg, prior, f)
    out.json("certificate.json", {"env": prior.name, "shaping": f.name, "certificate": cert.to_dict()})
    return 0


def cmd_counterexample(cfg: ExperimentConfig, out: Output) -> int:
    prior, doc = load_prior(cfg)
    f = load_shaping(cfg, prior, doc)
    cert = _certificate(cfg, prior, f)
    if cert.verdict != "witness-found":
        raise UsageError(f"no witness found (verdict {cert.verdict}); nothing to construct")
    inst, record = build_necessity_counterexample(f, cert, prior, tol=cfg.tol)
    pc = PlannerConfig(horizon=max(cfg.planner_horizon, 1), tol=cfg.tol)
    plain = BayesPlanner(inst, None, pc).plan(initial_state(inst, record.start_state))
    shaped = BayesPlanner(inst, f, pc).plan(initial_state(inst, record.start_state, f))
    gap = plain.action_values[record.absorb_action] - plain.action_values[record.witness_action]
    checks = {
        "unshaped_optimal": sorted(plain.optimal_action_set),
        "shaped_optimal": sorted(shaped.optimal_action_set),
        "q_gap_measured": gap,
        "q_gap_predicted": record.q_gap,
        "disjoint": not (plain.optimal_action_set & shaped.optimal_action_set),
    }
    out.raw("counterexample_env.json", save_env_spec(inst))
    out.json("disagreement.json", {"record": record.to_dict(), "certificate": cert.to_dict(), "planner": checks})
    ok = (
        checks["disjoint"]
        and plain.optimal_action_set == {record.unshaped_optimal}
        and abs(gap - record.q_gap) <= 1e-6 + plain.error_bound
    )
    if not ok:
        raise VerificationFailed("planner disagrees with the predicted disagreement", checks)
    return 0


def cmd_bounds(cfg: ExperimentConfig, out: Output) -> int:
    o = cfg.options
    kind = o["kind"]
    if kind == "d-horizon":
        gamma = cfg.gamma_override if cfg.gamma_override is not None else 0.95
        rep = verify_bounds("d-horizon", phi_max=o["phi_max"], d=o["d"], gamma=gamma)
    else:
        prior, doc = load_prior(cfg)
        f = load_shaping(cfg, prior, doc) or make_builtin("unique_state_count", prior, scale=cfg.scale)
        if f.claimed_potential is None:
            raise UsageError(f"bounds need a potential-based shaping; {f.name!r} has none")
        params: dict[str, Any] = {"prior": prior, "potential": f.claimed_potential, "cfg": planner_cfg(cfg), "k": o["k"]}
        if kind == "cor2":
            ce = CertaintyEquivalentAgent(prior)
            params["agents"] = [ce, RandomAgent(prior), make_agent("eps-greedy", prior, None, planner_cfg(cfg))]
        rep = verify_bounds(kind, **params)
    out.json("bounds.json", {"report": rep.to_dict()})
    if not rep.satisfied:
        raise VerificationFailed(f"{kind} bound violated", rep.to_dict())
    return 0


def cmd_theorem1(cfg: ExperimentConfig, out: Output) -> int:
    n = int(cfg.options.get("n", 100))
    res = theorem1_campaign(n, seed=cfg.seeds[0], depth=int(cfg.options.get("depth", 2)))
    rows = [
        {
            "seed": r.seed,
            "family": r.family,
            "states": r.n_states,
            "actions": r.n_actions,
            "candidates": r.n_candidates,
            "passed": r.report.passed,
            "states_checked": r.report.states_checked,
            "root_shift": r.report.root_shift,
            "root_phi": r.report.root_phi,
            "max_shift_error": r.report.max_shift_error,
            "findings": [fd.detail for fd in r.report.findings],
        }
        for r in res
    ]
    passed = sum(r.report.passed for r in res)
    out.json("theorem1.json", {"passed": passed, "total": n, "instances": rows})
    if passed != n:
        raise VerificationFailed(f"theorem 1 check failed on {n - passed} of {n} instances")
    return 0


# --- reproductions ---


def caterpillar_table(planner_horizon: int = 250) -> list[tuple[str, float, float, float]]:
    """``(quantity, value, reference, error_bound)`` rows of the caterpillar worked example."""
    prior = make_benchmark("caterpillar")
    planner = BayesPlanner(prior, None, PlannerConfig(horizon=planner_horizon))
    root = planner.plan(initial_state(prior, 0))
    at_bush = planner.plan(AugmentedState(1, prior.prior_belief, None, 1))
    interp = BeliefInterpreter("exact")
    search = PolicySearch(prior, interp)
    b = prior.prior_belief
    rows = [
        ("bayes_Q_go", root.action_values[1], 600.03, root.error_bound),
        ("bayes_Q_stay", root.action_values[0], 591.03, root.error_bound),
        ("bayes_V_bush_after_go", at_bush.value, 636.87, at_bush.error_bound),
    ]
    named = {
        "ce_V_stay_at_weed": ((0, 0), 0, 420.0),
        "ce_V_go_and_stay_at_bush": ((1, 0), 0, 280.0),
        "ce_V_alternate": ((1, 1), 0, -100.0),
        "ce_V_bush_return_and_stay": ((0, 1), 1, 394.0),
        "ce_V_bush_stay": ((0, 0), 1, 300.0),
    }
    from bampf_lab.agents import ce_policy_value

    for name, (acts, s, ref) in named.items():
        pi = StationaryPolicy.deterministic(acts, prior.n_actions)
        rows.append((name, ce_policy_value(prior, interp, b, pi, s), ref, 0.0))
    rows.append(("ce_Q_bush_stay", search.q_values(b, 1)[0], 389.3, 0.0))
    ce = CertaintyEquivalentAgent(prior)
    rows.append(("ce_action_at_weed", float(ce.decide(initial_state(prior, 0)).action), 0.0, 0.0))
    rep = bayesian_regret(prior, ce, 400, planner=planner)
    rows.append(("ce_regret_direct", rep.direct.value, 180.03, rep.direct.half_width))
    rows.append(("ce_regret_pdl", rep.pdl.value, 180.03, rep.pdl.half_width))
    rows.append(("bayes_Q_gap_at_weed", root.action_values[1] - root.action_values[0], 9.0, 2 * root.error_bound))
    d = decompose_value(prior, AugmentedState(1, prior.prior_belief, None, 1), planner=planner)
    rows.append(("voi_bush_after_go", d.voi, 0.0, d.error_bound))
    rows.append(("voo_bush", d.voo, 636.87, d.error_bound))
    return rows


def fig1a_cells(width: int = 5, height: int = 5, start=(0, 0), goal=None, gamma: float = 0.99) -> list[tuple[int, int, float]]:
    """Shaping reward for moving from the start directly into each cell (state-potential shaping)."""
    prior = make_benchmark("goal_grid", width=width, height=height, start=tuple(start), goal=goal, gamma=gamma)
    f = make_builtin("state_potential_pbsf", prior)
    s0 = grid_index(start[0], start[1], width)
    stat = f.initial(s0)
    rows = []
    for y in range(height):
        for x in range(width):
            _, val = f.step(stat, s0, 0, 0.0, grid_index(x, y, width))
            rows.append((x, y, val))
    return rows


def fig1b_history(seed: int = 0, width: int = 5, height: int = 5, episode_length: int = 50, episodes: int = 3, gamma: float = 0.99):
    """Random-walk history over ``episodes`` episodes and, per episode start, the unique-count shaping map."""
    prior = make_benchmark("unique_grid", width=width, height=height, episode_length=episode_length, gamma=gamma)
    f = make_builtin("unique_state_count", prior)
    L = episode_length
    tr = rollout(prior, RandomAgent(prior), None, episodes * L, [seed])[0]
    states = tr.states
    maps = []
    stat = f.initial(states[0])
    for ep in range(episodes):
        start = states[ep * L]
        s0_cell = start // L
        cells = []
        for y in range(height):
            for x in range(width):
                target = grid_index(x, y, width) * L + 1
                _, val = f.step(stat, start, 0, 0.0, target)
                cells.append((x, y, val))
        maps.append({"episode": ep + 1, "start_cell": s0_cell, "visited_before": sorted(stat), "cells": cells})
        for st, sp in zip(states[ep * L : (ep + 1) * L], states[ep * L + 1 : (ep + 1) * L + 1]):
            stat, _ = f.step(stat, st, 0, 0.0, sp)
    return maps


def noisytv_table(betas=(0.0, 0.2, 1.0, 5.0), horizon: int = 60, planner_horizon: int = 250, goal_prob: float = 0.5, seeds=range(8)):
    """Behaviour of the Bayes-optimal agent in the noisy-TV corridor under different shapings."""
    from bampf_lab.agents import BayesOptimalAgent

    prior = make_benchmark("noisy_tv", goal_prob=goal_prob)
    tv = set(prior.annotations["tv_states"])
    pc = PlannerConfig(horizon=planner_horizon)
    base = BayesOptimalAgent(prior, None, pc)
    base_paths = {tr.seed: tr.states for tr in rollout(prior, base, None, horizon, seeds)}
    rows = []
    configs = [("none", 0.0)] + [("prediction_error", b) for b in betas if b > 0] + [("information_gain", b) for b in betas if b > 0]
    for name, beta in configs:
        f = None if name == "none" else make_builtin(name, prior, scale=beta)
        agent = base if f is None else BayesOptimalAgent(prior, f, pc)
        traces = rollout(prior, agent, f, horizon, seeds)
        at_tv = np.mean([np.mean([s in tv for s in tr.states[1:]]) for tr in traces])
        same = all(tr.states == base_paths[tr.seed] for tr in traces)
        res = agent.plan(initial_state(prior, 0, f))
        rows.append(
            {
                "shaping": name,
                "scale": beta,
                "tv_fraction": float(at_tv),
                "mean_extrinsic_return": float(np.mean([tr.extrinsic_return for tr in traces])),
                "mean_shaped_return": float(np.mean([tr.shaped_return for tr in traces])),
                "same_path_as_unshaped": same,
                "initial_action_values": res.action_values,
                "initial_optimal_actions": sorted(res.optimal_action_set),
            }
        )
    return rows


def cmd_reproduce(cfg: ExperimentConfig, out: Output) -> int:
    target = cfg.options["target"]
    if target == "caterpillar":
        rows = caterpillar_table(cfg.planner_horizon)
        out.csv("caterpillar.csv", ("quantity", "value", "reference", "error_bound"), rows)
        bad = [r[0] for r in rows if r[0].startswith("bayes_") and abs(r[1] - r[2]) > 0.05 + r[3]]
        bad += [r[0] for r in rows if r[0].startswith("ce_V") and abs(r[1] - r[2]) > 1e-9]
        if bad:
            raise VerificationFailed("caterpillar values out of tolerance", {"quantities": bad})
        return 0
    if target == "fig1":
        rows = fig1a_cells()
        out.csv("fig1a_heatmap.csv", ("x", "y", "value"), rows)
        seed = cfg.seeds[0]
        maps = fig1b_history(seed)
        for m in maps:
            out.csv(f"fig1b_episode{m['episode']}_heatmap.csv", ("x", "y", "value"), m["cells"])
        out.json("fig1b_history.json", {"seed": seed, "episodes": [{k: v for k, v in m.items() if k != "cells"} for m in maps]})
        return 0
    rows = noisytv_table(seeds=cfg.seeds if len(cfg.seeds) > 1 else range(8))
    out.json("noisytv.json", {"rows": rows})
    return 0


def cmd_gen_random(cfg: ExperimentConfig, out: Output) -> int:
    o = cfg.options
    gamma = cfg.gamma_override if cfg.gamma_override is not None else 0.7
    for sd in cfg.seeds:
        prior = gen_random_bamdp(sd, o["n_states"], o["n_actions"], o["n_candidates"], gamma=gamma)
        out.raw(f"random-{sd}.json", save_env_spec(prior))
    return 0


COMMANDS = {
    "plan": cmd_plan,
    "rollout": cmd_rollout,
    "decompose": cmd_decompose,
    "check-bampf": cmd_check_bampf,
    "counterexample": cmd_counterexample,
    "bounds": cmd_bounds,
    "verify-theorem1": cmd_theorem1,
    "reproduce": cmd_reproduce,
    "gen-random": cmd_gen_random,
}


def _error(kind: str, message: str, extra: dict | None = None) -> None:
    rec = {"error": kind, "message": message}
    if extra:
        rec["details"] = _jsonable(extra)
    sys.stderr.write(json.dumps(rec, sort_keys=True) + "\n")


def run_command(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = build_config(args)
        out = Output(cfg)
        out.config()
        code = COMMANDS[cfg.command](cfg, out)
        sys.stdout.write(json.dumps({"status": "ok", "out": str(out.dir), "files": out.written}) + "\n")
        return code
    except VerificationFailed as exc:
        _error("verification-failed", str(exc), exc.record)
        return 2
    except BampfLabError as exc:
        _error(type(exc).__name__, str(exc))
        return 1
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _error(type(exc).__name__, str(exc))
        return 1


def main() -> None:  # pragma: no cover
    sys.exit(run_command())


if __name__ == "__main__":  # pragma: no cover
    main()
