"""Run configuration: flat ``key=value`` text files with CLI overrides."""
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from .exceptions import ParameterError

STRUCTURAL = ("k", "J", "m", "L", "dim")


@dataclass(frozen=True)
class RunConfig:
    dataset_dir: str = ""
    output_dir: str = "runs"
    k: int = 6
    J: int = 2
    m: int = 100
    L: int = 2
    dim: int = 32
    batch_size: int = 16
    learning_rate: float = 0.001
    epochs: int = 50
    patience: int = 10
    negatives_train: int = 1
    negatives_eval: int = 50
    valid_max_queries: int = 500
    auc_seeds: int = 5
    seed: int = 0
    relational_multiplicity: bool = True
    filtered_eval: bool = True
    threads: Optional[int] = None

    def validate(self) -> "RunConfig":
        for name in ("J", "m", "L", "dim", "batch_size", "epochs", "negatives_train",
                     "negatives_eval", "auc_seeds"):
            if getattr(self, name) < (0 if name == "J" else 1):
                raise ParameterError(f"config: {name} must be positive, got {getattr(self, name)}")
        if self.k < 1:
            raise ParameterError(f"config: k must be >= 1, got {self.k}")
        if self.patience < 0 or self.learning_rate < 0:
            raise ParameterError("config: patience and learning_rate must be non-negative")
        return self

    def estimator_params(self) -> dict:
        return dict(k=self.k, J=self.J, n_clusters=self.m, n_layers=self.L, dim=self.dim,
                    batch_size=self.batch_size, learning_rate=self.learning_rate, max_epochs=self.epochs,
                    patience=self.patience, negatives_train=self.negatives_train,
                    negatives_eval=self.negatives_eval, valid_max_queries=self.valid_max_queries,
                    relational_multiplicity=self.relational_multiplicity, random_state=self.seed)

    def structural(self) -> dict:
        return {k: getattr(self, k) for k in STRUCTURAL}

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            lines.append(f"{key}={'' if value is None else value}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, **overrides) -> "RunConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean)


def _coerce(name, raw: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ParameterError(f"config: unknown key {name!r}")
    kind = types[name]
    raw = raw.strip()
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        if kind in (bool, "bool"):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "Optional[int]" in str(kind):
            return int(raw) if raw else None
    except ValueError:
        raise ParameterError(f"config: bad value for {name}: {raw!r}") from None
    return raw


def parse_config(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected key=value")
        key, raw = line.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), raw)
    return replace(base, **values)


def load_config(path, base: RunConfig = RunConfig()) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)
