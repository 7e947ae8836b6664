"""Schema-validated run configurations."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

FORMAT_VERSION = "1.0"
SUPPORTED_MAJOR = 1


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(path, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


@lru_cache(maxsize=1)
def load_schema() -> dict:
    text = resources.files("grwlab").joinpath("schema/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def check_version(version, where: str = "/format_version") -> None:
    try:
        major = int(str(version).split(".")[0])
    except ValueError:
        raise ConfigError([(where, f"malformed version {version!r}")]) from None
    if major != SUPPORTED_MAJOR:
        raise ConfigError([(where, f"unsupported format major version {major}")])


def validate(doc: dict) -> None:
    """Raise :class:`ConfigError` listing every schema violation."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errs = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errs:
        raise ConfigError([(_pointer(e.absolute_path), e.message) for e in errs])
    check_version(doc["format_version"])


def _complex(pair) -> complex:
    return complex(float(pair[0]), float(pair[1]))


@dataclass
class RunConfig:
    """A validated configuration document."""

    doc: dict
    path: str | None = None

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    def section(self, name: str) -> dict:
        return copy.deepcopy(self.doc.get(name, {}))

    def require(self, name: str) -> dict:
        if name not in self.doc:
            raise ConfigError([(f"/{name}", "section is required for this command")])
        return self.section(name)

    @property
    def window(self) -> tuple[float, float]:
        w = self.doc.get("window", [0.0, 1.0])
        if not w[0] < w[1]:
            raise ConfigError([("/window", "window must have positive length")])
        return float(w[0]), float(w[1])

    def model(self):
        from ..model import GrwModel, ModelError, build_hamiltonian

        spec = self.require("model")
        n, L = spec["n_particles"], spec["sites"]
        masses = spec.get("masses") or [1.0] * n
        if len(masses) != n:
            raise ConfigError([("/model/masses", f"expected {n} masses, got {len(masses)}")])
        ham = spec.get("hamiltonian", {"kind": "zero"})
        params = dict(ham.get("params", {}))
        params.setdefault("masses", masses)
        params.setdefault("spacing", spec.get("spacing", 1.0))
        if L**n > 4096:
            raise ConfigError([("/model", f"Hilbert space dimension {L**n} exceeds 4096")])
        try:
            h = build_hamiltonian(ham["kind"], n, L, params)
            return GrwModel(n, L, spec.get("spacing", 1.0), spec.get("lam", 0.0), spec.get("sigma", 1.0),
                            tuple(masses), h)
        except ModelError as exc:
            raise ConfigError([("/model", str(exc))]) from None

    def split(self, model):
        from ..model import ModelError, SystemSplit

        spec = self.require("split")
        region = spec.get("sys_region")
        sp = SystemSplit(tuple(spec["sys_labels"]), None if region is None else tuple(region))
        try:
            sp.validate(model)
        except ModelError as exc:
            raise ConfigError([("/split", str(exc))]) from None
        return sp

    def initial_state(self, model) -> np.ndarray:
        spec = self.doc.get("initial_state", {"kind": "localized", "config": [0] * model.n_particles})
        kind = spec["kind"]
        try:
            if kind == "localized":
                psi = model.localized_state(self._config(spec["config"], model, "/initial_state/config"))
            elif kind == "superposition":
                psi = np.zeros(model.dim, dtype=np.complex128)
                for k, term in enumerate(spec["terms"]):
                    cfg = self._config(term["config"], model, f"/initial_state/terms/{k}/config")
                    psi += _complex(term["amplitude"]) * model.localized_state(cfg)
            elif kind == "vector":
                psi = np.array([_complex(p) for p in spec["amplitudes"]], dtype=np.complex128)
                if psi.size != model.dim:
                    raise ConfigError([("/initial_state/amplitudes", f"expected {model.dim} amplitudes")])
            elif kind == "uniform":
                psi = np.ones(model.dim, dtype=np.complex128)
            else:
                psi = np.linalg.eigh(model.hamiltonian)[1][:, 0].astype(np.complex128)
        except ConfigError:
            raise
        except (IndexError, ValueError) as exc:
            raise ConfigError([("/initial_state", str(exc))]) from None
        nrm = np.linalg.norm(psi)
        if nrm == 0:
            raise ConfigError([("/initial_state", "state has zero norm")])
        return psi / nrm

    @staticmethod
    def _config(cfg, model, where):
        if len(cfg) != model.n_particles or any(not 0 <= x < model.sites for x in cfg):
            raise ConfigError([(where, "configuration does not fit the model")])
        return cfg

    def experiment(self):
        from ..experiments import diagonal_projector, runtime_experiment, standard_experiment
        from ..formalism import ConstantCalibration, CountThreshold, ExperimentError, LastFlashRegion

        spec = self.require("experiment")
        try:
            if spec["kind"] == "runtime":
                kw = {k: spec[k] for k in ("lam", "sigma", "grid") if k in spec}
                return runtime_experiment(**kw)
            cal = None
            c = spec.get("calibration", {"kind": "pointer"})
            if c["kind"] == "last_region":
                cal = LastFlashRegion(c.get("regions", {"left": [0, 1], "right": [2, 3]}), c.get("labels"))
            elif c["kind"] == "count_threshold":
                cal = CountThreshold(c.get("threshold", 1), c.get("labels"))
            elif c["kind"] == "constant":
                cal = ConstantCalibration(c.get("outcome", "any"))
            proj = diagonal_projector() if spec.get("object_projector") == "diagonal" else None
            kw = {k: spec[k] for k in ("lam", "sigma", "ready_site") if k in spec}
            if "window" in spec:
                kw["window"] = tuple(spec["window"])
            return standard_experiment(calibration=cal, object_projector=proj, **kw)
        except ExperimentError as exc:
            raise ConfigError([("/experiment", str(exc))]) from None

    def object_state(self, d: int) -> np.ndarray:
        spec = self.doc.get("experiment", {})
        if "object_state" not in spec:
            return np.full(d, 1 / np.sqrt(d), dtype=np.complex128)
        psi = np.array([_complex(p) for p in spec["object_state"]], dtype=np.complex128)
        if psi.size != d or np.linalg.norm(psi) == 0:
            raise ConfigError([("/experiment/object_state", f"expected {d} amplitudes with nonzero norm")])
        return psi / np.linalg.norm(psi)


def parse_config(doc: dict, path: str | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError([("/", "configuration must be a JSON object")])
    validate(doc)
    return RunConfig(doc, path)


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON configuration file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([("/", f"malformed JSON: {exc}")]) from None
    except OSError as exc:
        raise ConfigError([("/", f"cannot read {path}: {exc.strerror}")]) from None
    return parse_config(doc, str(path))


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
