"""Command-line experiment driver.

Subcommands write into ``--out``: ``config.json`` (the canonical run config
and its digest) plus command-specific CSV/JSON/PGM files, each stamped with the
digest.  ``replay`` re-runs a directory's ``config.json`` and checks that every
output is reproduced byte for byte.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from escapeflow import suites
from escapeflow.closed_form import PeelState, parent_forward_step, peel
from escapeflow.dynamics import run
from escapeflow.errors import EscapeflowError
from escapeflow.forest import (
    Forest,
    build_msf,
    escape_forest,
    layer_embed,
    orient,
    sample_weights,
    stats,
    verify_property_ii,
)
from escapeflow.init import InitSpec
from escapeflow.io import config_digest, write_csv, write_json, write_pgm
from escapeflow.lattice import LatticeSpec

RUN_COMMANDS = ("simulate", "forest", "closed-form")


@dataclass
class RunConfig:
    subcommand: str
    d: int
    sides: list[int]
    topology: str
    init: dict
    forest: str
    root_policy: str
    shift: str
    W: list[int] | None
    seed: int
    budget: int
    stop: str
    snapshot_every: int
    value_mode: str
    version: int = 1

    def to_json(self) -> dict:
        return asdict(self)

    @property
    def digest(self) -> str:
        return config_digest(self.to_json())

    @property
    def spec(self) -> LatticeSpec:
        return LatticeSpec(self.d, tuple(self.sides), self.topology)

    @property
    def init_spec(self) -> InitSpec:
        return InitSpec(
            self.init["kind"], tuple(self.init["params"]), self.value_mode, self.init.get("path")
        )


def build_forest(cfg: RunConfig) -> Forest:
    spec = cfg.spec
    if cfg.forest == "scaled":
        W = cfg.W if cfg.shift == "fixed" else None
        f = escape_forest(tuple(cfg.sides), cfg.seed, cfg.d, cfg.root_policy, W)
    elif cfg.forest == "msf2d":
        if cfg.d != 2:
            raise EscapeflowError("msf2d forests need --d 2")
        f = orient(build_msf(spec, sample_weights(spec, cfg.seed)), policy=cfg.root_policy)
    elif cfg.forest == "layered":
        f = orient(layer_embed(spec, cfg.seed), policy=cfg.root_policy)
    else:
        raise EscapeflowError(f"unknown forest kind {cfg.forest!r}")
    if f.spec != spec:
        f = Forest(spec, f.vertices, f.edges, f.parent, f.roots)
    return f


# -- subcommand bodies ------------------------------------------------------


def do_simulate(cfg: RunConfig, out: Path) -> int:
    digest = cfg.digest
    init = cfg.init_spec
    forest = build_forest(cfg) if init.kind == "descendants" else None
    fld = init.build(cfg.spec, cfg.seed, forest)
    roots = forest.root_mask if forest is not None else None
    scale = max(fld.values.tolist(), default=0)
    snaps = out / "snapshots"

    def on_step(cur, decision) -> None:
        if cfg.snapshot_every and cur.step_index % cfg.snapshot_every == 0:
            snaps.mkdir(exist_ok=True)
            write_pgm(snaps / f"step_{cur.step_index:06d}.pgm", cur, scale, digest)

    tr = run(fld, cfg.budget, cfg.stop, roots, cfg.seed, on_step)
    write_csv(
        out / "trace.csv",
        digest,
        ["step", "total", "sink", "positive", "ties"],
        ([r.step, r.total, r.sink, r.positive, r.ties] for r in tr.records),
    )
    write_json(
        out / "report.json",
        {
            "config_digest": digest,
            "status": tr.status,
            "stop_step": tr.stop_step,
            "initial_total": tr.records[0].total,
            "final_total": tr.final.total,
            "final_sink": tr.final.sink,
            "final_positive": tr.final.positive,
            "total_ties": sum(r.ties for r in tr.records),
        },
    )
    return 0


def do_forest(cfg: RunConfig, out: Path) -> int:
    digest = cfg.digest
    f = build_forest(cfg)
    ok_ii, bad = verify_property_ii(f)
    st = stats(f)
    write_json(out / "forest.json", {"config_digest": digest, **f.to_json()})
    write_json(
        out / "report.json",
        {
            "config_digest": digest,
            "members": len(f.vertices),
            "roots": len(f.roots),
            "max_height": max(st.height.values(), default=0),
            "max_desc": max(st.desc.values(), default=0),
            "property_ii": ok_ii,
            "property_ii_violations": len(bad),
        },
    )
    return 0


def do_closed_form(cfg: RunConfig, out: Path) -> int:
    digest = cfg.digest
    f = build_forest(cfg)
    fld = InitSpec("descendants").build(cfg.spec, cfg.seed, f)
    state = PeelState.initial(f)
    rows = []
    while True:
        rows.append([state.n, int(state.alive_mask.sum()), fld.total, fld.sink, fld.positive])
        if state.empty or state.n >= cfg.budget:
            break
        fld = parent_forward_step(fld, f, state)
        state = peel(state, f)
    write_csv(out / "trace.csv", digest, ["step", "alive", "total", "sink", "positive"], rows)
    write_json(
        out / "report.json",
        {
            "config_digest": digest,
            "extinction_step": state.n if state.empty else None,
            "initial_total": rows[0][2],
            "final_sink": fld.sink,
        },
    )
    return 0


COMMANDS = {"simulate": do_simulate, "forest": do_forest, "closed-form": do_closed_form}


def execute(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", {"config": cfg.to_json(), "config_digest": cfg.digest})
    return COMMANDS[cfg.subcommand](cfg, out)


def load_config(run_dir: Path) -> RunConfig:
    path = run_dir / "config.json"
    try:
        obj = json.loads(path.read_text())
        cfg = RunConfig(**obj["config"])
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise EscapeflowError(f"cannot load {path}: {exc}") from exc
    if cfg.digest != obj.get("config_digest"):
        raise EscapeflowError(f"{run_dir}/config.json: digest does not match its contents")
    return cfg


def replay(run_dir: Path, out: Path) -> dict:
    cfg = load_config(run_dir)
    execute(cfg, out)
    orig = sorted(p.relative_to(run_dir) for p in run_dir.rglob("*") if p.is_file())
    new = sorted(p.relative_to(out) for p in out.rglob("*") if p.is_file())
    differing = [str(p) for p in orig if p in new and (run_dir / p).read_bytes() != (out / p).read_bytes()]
    return {
        "config_digest": cfg.digest,
        "identical": not differing and orig == new,
        "differing": differing,
        "missing": [str(p) for p in orig if p not in new],
        "extra": [str(p) for p in new if p not in orig],
    }


# -- argument parsing ---------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _run_parser(sub, name: str, help: str) -> argparse.ArgumentParser:
    p = sub.add_parser(name, help=help)
    p.add_argument("--size", type=int, required=True, help="side length of every axis")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--topology", choices=("torus", "box-zero", "box-sink"), default="box-sink")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--stop", choices=("fixation", "empty", "budget"), default="fixation")
    p.add_argument(
        "--init",
        choices=("descendants", "iid-uniform", "iid-exponential", "iid-integer", "file"),
        default="descendants",
    )
    p.add_argument("--init-params", type=_float_list, default=None, help="e.g. 0,1 for uniform(0,1)")
    p.add_argument("--init-file", default=None)
    p.add_argument("--value-mode", choices=("exact", "float"), default=None)
    p.add_argument("--forest", choices=("scaled", "msf2d", "layered"), default="scaled")
    p.add_argument("--root-policy", choices=("boundary", "lexmin"), default="boundary")
    p.add_argument("--shift", choices=("random", "fixed"), default="random")
    p.add_argument("--W", type=_int_list, default=None, help="fixed shift, e.g. 0,1")
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--out", required=True)
    return p


_DEFAULT_PARAMS = {
    "descendants": [],
    "iid-uniform": [0.0, 1.0],
    "iid-exponential": [1.0],
    "iid-integer": [0, 9],
    "file": [],
}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    params = args.init_params if args.init_params is not None else _DEFAULT_PARAMS[args.init]
    if args.init == "iid-integer":
        params = [int(p) for p in params]
    mode = args.value_mode or ("float" if args.init in ("iid-uniform", "iid-exponential") else "exact")
    W = args.W
    if args.shift == "fixed" and W is None:
        raise EscapeflowError("--shift fixed needs --W")
    if args.shift == "random":
        W = None
    cfg = RunConfig(
        subcommand=args.command,
        d=args.d,
        sides=[args.size] * args.d,
        topology=args.topology,
        init={"kind": args.init, "params": params, "path": args.init_file},
        forest=args.forest,
        root_policy=args.root_policy,
        shift=args.shift,
        W=W,
        seed=args.seed,
        budget=args.budget,
        stop=args.stop,
        snapshot_every=args.snapshot_every,
        value_mode=mode,
    )
    cfg.spec
    cfg.init_spec
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="escapeflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _run_parser(sub, "simulate", "raw clustering dynamics trace")
    _run_parser(sub, "forest", "construct, verify and serialize a forest")
    _run_parser(sub, "closed-form", "leaf-peeling / parent-forwarding trace")

    v = sub.add_parser("verify", help="run a named verification suite")
    v.add_argument("suite", choices=sorted(suites.SUITES))
    v.add_argument("--seed", type=int, default=None, help="first seed")
    v.add_argument("--seeds", type=int, default=None, help="number of seeds")
    v.add_argument("--size", type=int, default=None)
    v.add_argument("--out", default=None, help="also write verdict.json here")

    r = sub.add_parser("replay", help="re-run a run directory and compare outputs byte for byte")
    r.add_argument("run_dir")
    r.add_argument("--out", default=None, help="where to write the replayed outputs (default: temp dir)")
    return parser


def _suite_kwargs(args: argparse.Namespace) -> dict:
    name = args.suite
    kw: dict = {}
    first = args.seed if args.seed is not None else 0
    if args.seed is not None or args.seeds is not None:
        count = args.seeds if args.seeds is not None else 1
        seeds = list(range(first, first + count))
        if name == "lightcone":
            kw["seed"] = first
        else:
            kw["seeds"] = seeds
    if args.size is not None:
        if name in ("closedform", "escape", "property-ii", "peeling"):
            kw["sizes"] = (args.size,)
        elif name in ("fixation", "conservation"):
            kw["side"] = args.size
        elif name == "lightcone":
            kw["L"] = args.size
        elif name == "divergence":
            kw["sides"] = (args.size // 4, args.size // 2, args.size)
    return kw


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in RUN_COMMANDS:
            return execute(config_from_args(args), Path(args.out))
        if args.command == "verify":
            result = suites.SUITES[args.suite](**_suite_kwargs(args))
            text = json.dumps(result, sort_keys=True, indent=2, default=str)
            print(text)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "verdict.json").write_text(text + "\n")
            return 0 if result["verdict"] == "pass" else 1
        if args.command == "replay":
            run_dir = Path(args.run_dir)
            if args.out:
                result = replay(run_dir, Path(args.out))
            else:
                with tempfile.TemporaryDirectory() as tmp:
                    result = replay(run_dir, Path(tmp))
            print(json.dumps(result, sort_keys=True, indent=2))
            return 0 if result["identical"] else 1
    except (EscapeflowError, OSError) as exc:
        print(f"escapeflow: error: {exc}", file=sys.stderr)
        return 2
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
