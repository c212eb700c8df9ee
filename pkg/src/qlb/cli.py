"""Config-driven experiment runner.

Exit codes: 0 every check passed, 1 a check failed, 2 the config or a seed
could not be parsed, 3 a size cap was exceeded.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .algorithms import (
    blind_sequential_algorithm,
    constant_algorithm,
    constant_measurement,
    difference_test_algorithm,
    random_algorithm,
    random_measurement,
)
from .analysis.framework import framework_bound, relaxed_vs_strict
from .analysis.gamma import compute_gamma
from .analysis.suite import SuiteParams, framework_orbit, run_suite
from .analysis.trajectory import knowledge_trajectory
from .errors import CapExceeded, ConfigError, QlbError, RankCollapse, SeedParseError
from .fourier import ProblemDims, run_uniform
from .partitions import (
    DEFAULT_MAX_ORBIT,
    HighlightedPartition,
    KnowledgeSystem,
    Partition,
    PartitionOrbit,
    build_hierarchy,
    kdist_seed,
    parse_seed,
    ed_orbit,
    singleton_rich_orbit,
    unhighlight,
)
from .transfer import ResponseSet, apply_knowledge, apply_transfer, success_probability

log = logging.getLogger("qlb")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_CAP = 0, 1, 2, 3

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "n": 4,
    "q": 5,
    "dimW": 1,
    "T": 2,
    "k": 2,
    "t": None,
    "n_list": [],
    "q_list": [],
    "family": "ed",
    "seed_partition": None,
    "singletons": None,
    "knowledge": "intersection",
    "flavor": "minus",
    "algorithm": "random",
    "measurement": "none",
    "rng_seed": 0,
    "samples": 50,
    "output": None,
    "caps": {"orbit": DEFAULT_MAX_ORBIT, "basis": 50_000, "dense": 2000},
    "test_hooks": {"inject_nonunitary": False},
}


def load_schema() -> dict:
    return json.loads(resources.files("qlb").joinpath("config.schema.json").read_text())


def load_config(path: str | None, overrides: dict) -> dict:
    """Read, validate and fill defaults; QLB_MAX_ORBIT wins over the config's orbit cap."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from None
    cfg = json.loads(json.dumps(DEFAULTS))
    for key, value in raw.items():
        if isinstance(value, dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    env = os.environ.get("QLB_MAX_ORBIT")
    if env is not None:
        try:
            cfg["caps"]["orbit"] = int(env)
        except ValueError:
            raise ConfigError(f"QLB_MAX_ORBIT must be an integer, got {env!r}") from None
    if cfg["caps"]["orbit"] <= 0:
        raise ConfigError("orbit cap must be positive")
    if cfg["knowledge"] == "intersection" and cfg["k"] < 2:
        raise ConfigError("intersection knowledge needs k >= 2")
    if cfg["singletons"] is not None and cfg["singletons"] > cfg["n"] - cfg["k"]:
        raise ConfigError(f"singletons must be at most n - k = {cfg['n'] - cfg['k']}")
    if cfg["seed_partition"] is not None:
        parse_seed(cfg["seed_partition"])
    return cfg


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


class Report:
    """CSV rows plus the JSON check list, written by one writer at the end."""

    def __init__(self, cfg: dict, experiment: str, columns: list[str] | None = None):
        self.cfg = cfg
        self.experiment = experiment
        self.columns = columns
        self.rows: list[list] = []
        self.checks: list[dict] = []

    def row(self, *values) -> None:
        self.rows.append([fmt(v) for v in values])

    def check(self, name: str, params: dict, value, bound, passed: bool, note: str = "") -> None:
        entry = {"check_name": name, "params": params, "value": _json_num(value), "bound": _json_num(bound), "pass": bool(passed)}
        if note:
            entry["note"] = note
        self.checks.append(entry)

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def summary(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "qlb_version": __version__,
            "experiment": self.experiment,
            "config": self.cfg,
            "checks": self.checks,
            "pass": self.passed,
        }

    def csv_text(self) -> str:
        buf = io.StringIO()
        provenance = {k: v for k, v in self.cfg.items() if k != "output"}
        buf.write("# config " + json.dumps(provenance, sort_keys=True) + "\n")
        buf.write(f"# qlb {__version__} schema {SCHEMA_VERSION}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()

    def write(self, out: str | None) -> None:
        summary = json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"
        if self.columns is None:
            if out:
                Path(out).write_text(summary)
            else:
                sys.stdout.write(summary)
            return
        text = self.csv_text()
        if out:
            Path(out).write_text(text)
            Path(out).with_suffix(".json").write_text(summary)
        else:
            sys.stdout.write(text)


def _json_num(x):
    if x is None:
        return None
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if np.isfinite(x) else None


# ---------------------------------------------------------------- experiments


def cmd_verify(cfg: dict) -> Report:
    params = SuiteParams(
        n=cfg["n"],
        q=cfg["q"],
        dimW=cfg["dimW"],
        T=cfg["T"],
        k=cfg["k"],
        singletons=cfg["singletons"],
        samples=cfg["samples"],
        seed=cfg["rng_seed"],
        basis_cap=cfg["caps"]["basis"],
        orbit_cap=cfg["caps"]["orbit"],
        inject_nonunitary=cfg["test_hooks"]["inject_nonunitary"],
    )
    report = Report(cfg, "verify")
    for res in run_suite(params):
        report.check(res.check_name, res.params, res.value, res.bound, res.passed, res.note)
    return report


def _family_orbit(cfg: dict, n: int) -> tuple[PartitionOrbit, int]:
    """Orbit and default t for one n of an anti-concentration sweep."""
    family, k, cap = cfg["family"], cfg["k"], cfg["caps"]["orbit"]
    if family == "ed":
        return ed_orbit(n, cap), n // 2
    if family == "singleton_rich":
        return singleton_rich_orbit(n, k, cap), (n - k) // 2
    seed = unhighlight(_kdist(cfg, n))
    singles = sum(1 for s in seed.sizes() if s == 1)
    return PartitionOrbit(seed, KnowledgeSystem.intersection(k), cap), singles // 2


ANTI_COLUMNS = ["n", "t", "k", "flavor", "gamma", "rank", "gamma_n", "gamma_sqrt_n", "argmax_rho", "basis_size", "method", "status"]


def cmd_anticoncentration(cfg: dict) -> Report:
    report = Report(cfg, "anticoncentration", ANTI_COLUMNS)
    flavor, q = cfg["flavor"], cfg["q"]
    scaled = []
    for n in cfg["n_list"]:
        try:
            orbit, t_default = _family_orbit(cfg, n)
            t = t_default if cfg["t"] is None else cfg["t"]
            rep = compute_gamma(orbit, flavor, t, q, max_basis=cfg["caps"]["basis"], dense_max=cfg["caps"]["dense"])
        except CapExceeded as exc:
            log.warning("n=%d skipped: %s", n, exc)
            t = cfg["t"] if cfg["t"] is not None else n // 2
            report.row(n, t, cfg["k"], flavor, "", "", "", "", "", "", "", "skipped")
            report.check("gamma_in_unit_interval", {"n": n, "t": t}, None, 1.0, True, note=f"skipped: {exc}")
            continue
        rank = "" if rep.rank is None else rep.rank
        rho = " ".join(map(str, rep.argmax))
        report.row(n, t, orbit.k, flavor, rep.gamma, rank, rep.gamma * n, rep.gamma * np.sqrt(n), rho, rep.basis_size, rep.method, "ok")
        report.check("gamma_in_unit_interval", {"n": n, "t": t, "flavor": flavor}, rep.gamma, 1.0, 0.0 <= rep.gamma <= 1.0 + 1e-12)
        scaled.append(rep.gamma * (n if cfg["family"] == "ed" else np.sqrt(n)))
    if len(scaled) >= 2:
        spread = max(scaled) / min(scaled)
        report.check("normalized_gamma_spread", {"family": cfg["family"]}, spread, 3.0, spread < 3.0)
    return report


def _build_algorithm(cfg: dict, rng: np.random.Generator):
    n, q, T = cfg["n"], cfg["q"], cfg["T"]
    kind = cfg["algorithm"]
    if kind == "blind":
        return blind_sequential_algorithm(n, q, T)
    if kind == "constant":
        return constant_algorithm(ProblemDims(n, q, cfg["dimW"]), T)
    if kind == "difference":
        alg, _ = difference_test_algorithm(n, q)
        return alg
    return random_algorithm(ProblemDims(n, q, cfg["dimW"]), T, rng)


def _hierarchy(cfg: dict):
    cap = cfg["caps"]["orbit"]
    if cfg["seed_partition"]:
        seed = parse_seed(cfg["seed_partition"])
        if not isinstance(seed, HighlightedPartition):
            raise ConfigError("a trajectory seed needs a highlighted block, e.g. '*1,2/3/4'")
        return build_hierarchy(seed, cap)
    return build_hierarchy(_kdist(cfg, cfg["n"]), cap)


def _kdist(cfg: dict, n: int) -> HighlightedPartition:
    """k-distinctness seed; ``singletons`` fixes how many singleton blocks it carries."""
    try:
        return kdist_seed(n, cfg["k"], cfg["singletons"])
    except ValueError as exc:
        raise ConfigError(f"cannot build a k-distinctness seed for n={n}: {exc}") from None


TRAJ_COLUMNS = [
    "t",
    "level",
    "knowledge",
    "knowledge_prime",
    "gain_prime",
    "gain_next",
    "gain",
    "profile_norm",
    "identity_residual",
    "simple_residual",
    "refined_residual",
    "telescoped_residual",
    "framework_bound",
    "framework_measured",
    "framework_pass",
]


def cmd_trajectory(cfg: dict) -> Report:
    rng = np.random.default_rng(cfg["rng_seed"])
    hierarchy = _hierarchy(cfg)
    cfg_n = hierarchy.n
    if cfg_n != cfg["n"]:
        raise ConfigError(f"seed has n={cfg_n} but config says n={cfg['n']}")
    alg = _build_algorithm(cfg, rng)
    states = run_uniform(alg)
    traj = knowledge_trajectory(alg, hierarchy, trajectory=states)
    report = Report(cfg, "trajectory", TRAJ_COLUMNS)
    for r in traj.rows:
        report.row(
            r.t, r.level, r.knowledge, r.knowledge_prime, r.gain_prime, r.gain_next, r.gain, r.profile,
            r.identity_residual, r.simple_residual, r.refined_residual, r.telescoped_residual, "", "", "",
        )
    for msg in traj.failures():
        report.check("trajectory_inequality", {"detail": msg}, None, None, False)
    report.check("trajectory_inequalities", {"rows": len(traj.rows)}, len(traj.failures()), 0, traj.passed)

    if cfg["measurement"] != "none":
        orbit = framework_orbit(hierarchy)
        responses = ResponseSet(orbit)
        sets = responses.as_sets()
        if cfg["measurement"] == "constant":
            meas = constant_measurement(alg.dims, sets)
        else:
            meas = random_measurement(alg.dims, sets, rng)
        psi = states[-1]
        gamma = compute_gamma(orbit, "minus", alg.T, cfg["q"], max_basis=cfg["caps"]["basis"], dense_max=cfg["caps"]["dense"]).gamma
        delta = apply_knowledge(psi, orbit, "plus").norm()
        measured = success_probability(apply_transfer(psi, orbit), meas, responses)
        chk = framework_bound(gamma, delta, measured)
        report.row(alg.T, "framework", delta, "", "", "", "", "", "", "", "", "", chk.bound, chk.measured, chk.passed)
        report.check("framework_bound", {"gamma": gamma, "delta": delta}, chk.measured, chk.bound, chk.passed)
    return report


def ed_seed(n: int) -> Partition:
    return Partition.from_blocks([[1, 2]] + [[i] for i in range(3, n + 1)], n)


def cmd_orbit(cfg: dict) -> Report:
    cap = cfg["caps"]["orbit"]
    if cfg["seed_partition"]:
        seed = parse_seed(cfg["seed_partition"])
    else:
        seed = _kdist(cfg, cfg["n"]) if cfg["family"] == "kdist" else ed_seed(cfg["n"])
    knowledge = None
    if cfg["knowledge"] == "highlighted":
        knowledge = KnowledgeSystem.highlighted()
    elif cfg["knowledge"] == "intersection" and not isinstance(seed, HighlightedPartition):
        knowledge = KnowledgeSystem.intersection(cfg["k"])
    orbit = PartitionOrbit(seed, knowledge, cap)
    report = Report(cfg, "orbit", ["member_id", "partition"])
    for j, mu in enumerate(orbit.members):
        report.row(j, mu.text())
    report.check("orbit_size", {"seed": seed.text()}, len(orbit), cap, True)
    return report


RS_COLUMNS = ["n", "q", "p_strict", "p_relaxed", "p_collision", "bound", "ratio", "inputs", "pass"]


def cmd_relaxed_vs_strict(cfg: dict) -> Report:
    rng = np.random.default_rng(cfg["rng_seed"])
    n = cfg["n"]
    q_values = cfg["q_list"] or [cfg["q"]]
    report = Report(cfg, "relaxed-vs-strict", RS_COLUMNS)
    ratios = []
    for q in q_values:
        local = {**cfg, "q": q}
        orbit = ed_orbit(n, cfg["caps"]["orbit"]) if cfg["k"] == 2 else framework_orbit(_hierarchy(local))
        if cfg["algorithm"] == "difference":
            alg, meas = difference_test_algorithm(n, q)
        else:
            alg = _build_algorithm(local, rng)
            sets = ResponseSet(orbit).as_sets()
            meas = constant_measurement(alg.dims, sets) if cfg["measurement"] == "constant" else random_measurement(alg.dims, sets, rng)
        res = relaxed_vs_strict(alg, orbit, meas, cap=cfg["caps"]["orbit"])
        report.row(n, q, res.p_strict, res.p_relaxed, res.p_collision, res.bound, res.ratio, res.inputs, res.passed)
        report.check("strict_le_relaxed_over_no_collision", {"n": n, "q": q}, res.p_strict, res.bound, res.passed)
        ratios.append(abs(res.ratio - 1.0))
    if len(ratios) >= 2:
        improving = all(b <= a + 1e-15 for a, b in zip(ratios, ratios[1:]))
        report.check("ratio_approaches_one", {"q": q_values}, ratios[-1], ratios[0], improving)
    return report


COMMANDS = {
    "verify": cmd_verify,
    "anticoncentration": cmd_anticoncentration,
    "trajectory": cmd_trajectory,
    "orbit": cmd_orbit,
    "relaxed-vs-strict": cmd_relaxed_vs_strict,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qlb {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (see config.schema.json)")
        p.add_argument("--out", help="output path; CSV experiments also write a .json summary next to it")
        p.add_argument("--seed", type=int, help="RNG seed, overrides rng_seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"rng_seed": args.seed, "output": args.out})
        if cfg.get("experiment", args.command) != args.command:
            raise ConfigError(f"config is for {cfg['experiment']!r}, not {args.command!r}")
        cfg["experiment"] = args.command
        report = COMMANDS[args.command](cfg)
    except (SeedParseError, ConfigError) as exc:
        print(f"qlb: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CapExceeded as exc:
        print(f"qlb: cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (QlbError, RankCollapse, ValueError) as exc:
        print(f"qlb: {exc}", file=sys.stderr)
        return EXIT_CHECK
    report.write(cfg["output"])
    for c in report.checks:
        if not c["pass"]:
            print(f"FAIL {c['check_name']} {json.dumps(c['params'], sort_keys=True)}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
