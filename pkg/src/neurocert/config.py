"""Problem configuration files and certificate dumps.

Configuration is TOML::

    [problem]
    kind = "rwa"                      # stability roa safety swa rwa rsws rswa rar
    dynamics = ["-x0^3 + x1", "u0"]   # one string per state; u0.. are inputs
    inputs = 1                        # optional, inferred from the u indices
    gamma = 0.1                       # optional: epsilon, delta, roa_margin

    [regions]                         # domain init unsafe|safe goal final
    domain = "Rectangle([-1.5, -1.5], [1.5, 1.5])"
    init = "Rectangle([-0.5, -0.5], [0.5, 0.5])"
    safe = "Rectangle([-1, -1], [1, 1])"
    goal = "Rectangle([-0.05, -0.05], [0.05, 0.05])"

    [network.V]                       # also network.B and network.ctrl
    neurons = [4]
    activations = ["poly2"]

    [train]                           # any TrainConfig field
    learn_rate = 0.1
    [cegis]                           # max_loops, seed, precision, short_circuit, ...
    [verifier]                        # delta, max_splits, timeout, batch
    [consolidator]                    # n_cloud, r_cloud, n_ascent, step

Instead of ``[problem]``/``[regions]`` a file may say ``benchmark = 15`` at
top level and override any of the other tables.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from . import expr as ex
from .certificate import Kind, Problem, ProblemError
from .cegis import CegisConfig, SynthesisResult
from .geometry import RegionError, parse_region
from .network import NetSpec
from .verifier import VerifierConfig

FORMAT = "neurocert-certificate/1"


class ConfigError(ValueError):
    pass


@dataclass
class ProblemSpec:
    """Text form of a problem; round-trips through config files and dumps."""

    kind: str
    dynamics: list
    regions: dict
    inputs: int | None = None
    gamma: float = 0.1
    epsilon: float = 0.01
    delta: float = 1e-4
    roa_margin: float = 0.05
    name: str = ""

    def n_inputs(self) -> int:
        if self.inputs is not None:
            return int(self.inputs)
        found = [int(m) for d in self.dynamics for m in re.findall(r"\bu(\d+)\b", d)]
        return max(found) + 1 if found else 0

    def build(self) -> Problem:
        try:
            f = ex.VectorField.parse(list(self.dynamics), self.n_inputs())
        except ValueError as e:
            raise ConfigError(f"dynamics: {e}") from None
        if "domain" not in self.regions:
            raise ConfigError("regions: 'domain' is required")
        regions = {}
        try:
            regions["domain"] = parse_region(self.regions["domain"])
            for k, text in self.regions.items():
                if k != "domain":
                    regions[k] = parse_region(text, regions["domain"])
        except (RegionError, ValueError) as e:
            raise ConfigError(f"regions: {e}") from None
        try:
            return Problem(Kind.parse(self.kind), f, regions, self.gamma, self.epsilon, self.delta,
                           self.roa_margin, self.name)
        except ProblemError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["inputs"] = self.n_inputs()
        return d


def spec_from_entry(entry, **overrides) -> ProblemSpec:
    hyper = {k: v for k, v in entry.hyper.items() if k in ("gamma", "epsilon", "delta", "roa_margin")}
    hyper.update({k: v for k, v in overrides.items() if v is not None})
    return ProblemSpec(entry.kind.value, list(entry.dynamics), dict(entry.regions), entry.n_inputs,
                       name=entry.label, **hyper)


# ----------------------------------------------------------------------------
# loading


def _decode_error(e: tomli.TOMLDecodeError, path, text: str) -> ConfigError:
    m = re.search(r"line (\d+)", str(e))
    line = m.group(1) if m else str(max(1, len(text.splitlines())))
    return ConfigError(f"{path}: parse error at line {line}: {e}")


def _replace(obj, table: dict, where: str):
    names = {f.name for f in dataclasses.fields(obj)}
    bad = sorted(set(table) - names)
    if bad:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(bad)}")
    try:
        return dataclasses.replace(obj, **table)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{where}] {e}") from None


def _netspec(table: dict, where: str) -> NetSpec:
    try:
        return NetSpec(tuple(table["neurons"]), tuple(table["activations"]))
    except KeyError as e:
        raise ConfigError(f"[{where}] missing {e.args[0]!r}") from None
    except ValueError as e:
        raise ConfigError(f"[{where}] {e}") from None


def loads(text: str, path: str = "<config>") -> tuple[ProblemSpec, CegisConfig]:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise _decode_error(e, path, text) from None
    cfg = CegisConfig()
    if "benchmark" in data:
        from .benchmarks import get

        entry = get(data["benchmark"])
        spec = spec_from_entry(entry)
        cfg = entry.config()
    else:
        spec = None
    prob = data.get("problem", {})
    if spec is None:
        for key in ("kind", "dynamics"):
            if key not in prob:
                raise ConfigError(f"[problem] missing {key!r}")
        if "regions" not in data:
            raise ConfigError("missing [regions] table")
        spec = ProblemSpec(prob["kind"], list(prob["dynamics"]), {})
    extra = {k: v for k, v in prob.items() if k not in ("kind", "dynamics")}
    spec = _replace(spec, {**extra, **({"kind": prob["kind"]} if "kind" in prob else {}),
                           **({"dynamics": list(prob["dynamics"])} if "dynamics" in prob else {})}, "problem")
    if "regions" in data:
        spec.regions = {**spec.regions, **{k: str(v) for k, v in data["regions"].items()}}
    for name, table in data.get("network", {}).items():
        if name not in ("V", "B", "ctrl"):
            raise ConfigError(f"[network.{name}] expected V, B or ctrl")
        cfg.nets = {**cfg.nets, name: _netspec(table, f"network.{name}")}
    if "train" in data:
        cfg.train = _replace(cfg.train, data["train"], "train")
    if "verifier" in data:
        cfg.verifier = _replace(cfg.verifier or VerifierConfig(delta=spec.delta), data["verifier"], "verifier")
    if "consolidator" in data:
        cfg.consolidator = _replace(cfg.consolidator, data["consolidator"], "consolidator")
    if "cegis" in data:
        cfg = _replace(cfg, data["cegis"], "cegis")
    unknown = set(data) - {"benchmark", "problem", "regions", "network", "train", "verifier", "consolidator", "cegis"}
    if unknown:
        raise ConfigError(f"unknown table(s): {', '.join(sorted(unknown))}")
    return spec, cfg


def load_problem(path) -> tuple[Problem, CegisConfig]:
    """Parse and validate a configuration file."""
    spec, cfg = load_spec(path)
    return spec.build(), cfg


def load_spec(path) -> tuple[ProblemSpec, CegisConfig]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    return loads(path.read_text(), str(path))


# ----------------------------------------------------------------------------
# certificate dumps


@dataclass
class CertificateDump:
    problem: ProblemSpec
    certificates: dict  # name -> expression text
    controller: list | None = None
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    networks_file: str | None = None

    def to_json(self) -> str:
        return json.dumps({
            "format": FORMAT,
            "problem": self.problem.to_dict(),
            "certificates": self.certificates,
            "controller": self.controller,
            "params": self.params,
            "meta": self.meta,
            "networks_file": self.networks_file,
        }, indent=2)

    def expressions(self) -> tuple[dict, list | None]:
        n = len(self.problem.dynamics)
        funcs = {k: ex.parse(v, n) for k, v in self.certificates.items()}
        ctrl = None if self.controller is None else ex.share([ex.parse(c, n) for c in self.controller])
        return funcs, ctrl


def dump_result(res: SynthesisResult, spec: ProblemSpec, path, meta: dict | None = None) -> Path:
    """Write the certificate JSON and, next to it, the raw network parameters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    side = path.with_name(path.stem + ".networks.json")
    side.write_text(json.dumps({k: n.to_dict() for k, n in res.networks.items()}))
    dump = CertificateDump(
        spec,
        {k: ex.pretty(e) for k, e in res.certificates.items()},
        None if res.controller is None else [ex.pretty(c) for c in res.controller],
        {k: float(v) for k, v in res.params.items()},
        dict(meta or {}),
        side.name,
    )
    path.write_text(dump.to_json())
    return path


def load_dump(path) -> CertificateDump:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from None
    if d.get("format") != FORMAT:
        raise ConfigError(f"{path}: not a certificate dump (format {d.get('format')!r})")
    spec = ProblemSpec(**d["problem"])
    return CertificateDump(spec, d["certificates"], d.get("controller"), d.get("params", {}), d.get("meta", {}),
                           d.get("networks_file"))
