"""Run configuration: one INI file with sections for paths, schema, labels, split, model and analyses."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .eventlog import CATEGORICAL, RANGE, Feature, FeatureSchema
from .experiments import SIGNALS, VARIANTS, SyntheticLogSpec
from .features import LabelRule
from .models import BATCH_SIZES, KERNEL_SIZES, KINDS, SIZE_MULTIPLIERS, ModelConfig
from .training import DEFAULT_SEQ_LENS

OUTPUT_DIR_ENV = "PROCOUTCOME_OUTPUT_DIR"


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


class _Reader:
    """Typed access to a ConfigParser that records every problem instead of stopping at the first."""

    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp
        self.problems: list[str] = []

    def get(self, section, key, default=None, required=False):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        if required:
            self.problems.append(f"[{section}] {key}: required")
        return default

    def _typed(self, section, key, default, cast, what):
        raw = self.get(section, key)
        if raw is None or raw == "":
            return default
        try:
            return cast(raw)
        except ValueError:
            self.problems.append(f"[{section}] {key}: expected {what}, got {raw!r}")
            return default

    def int(self, section, key, default=None):
        return self._typed(section, key, default, int, "an integer")

    def float(self, section, key, default=None):
        return self._typed(section, key, default, float, "a number")

    def ints(self, section, key, default):
        return self._typed(section, key, default, lambda s: tuple(int(x) for x in _list(s)), "integers")

    def strs(self, section, key, default=()):
        raw = self.get(section, key)
        return tuple(_list(raw)) if raw else tuple(default)

    def optional_int(self, section, key):
        raw = self.get(section, key)
        if raw in (None, "", "none", "None"):
            return None
        return self.int(section, key)

    def check_subset(self, section, key, values, allowed):
        bad = [v for v in values if v not in allowed]
        if bad:
            self.problems.append(f"[{section}] {key}: {bad} not in {list(allowed)}")


@dataclass
class RunConfig:
    input_path: Path | None
    output_dir: Path
    schema: FeatureSchema | None
    rule: LabelRule | None
    test_fraction: float = 0.2
    seed: int = 0
    kinds: tuple[str, ...] = KINDS
    n_trials: int | None = None
    max_epochs: int = 100
    patience: int = 5
    base_width: int = 8
    batch_sizes: tuple[int, ...] = BATCH_SIZES
    size_multipliers: tuple[int, ...] = SIZE_MULTIPLIERS
    seq_lens: tuple[int, ...] | None = None
    kernel_sizes: tuple[int, ...] = KERNEL_SIZES
    train_configs: dict = field(default_factory=dict)
    prepare_seq_len: int = 15
    max_prefix: int | None = None
    variants: tuple[str, ...] = VARIANTS
    n_seeds: int = 3
    synth: SyntheticLogSpec | None = None
    gradcheck_instances: int = 3

    @classmethod
    def from_file(cls, path, overrides=(), env=None) -> "RunConfig":
        path = Path(path)
        cp = configparser.ConfigParser(interpolation=None)
        if not path.exists():
            raise ConfigError([f"config file {path} not found"])
        cp.read(path, encoding="utf-8")
        return cls.from_parser(cp, overrides, env, base_dir=path.parent)

    @classmethod
    def from_text(cls, text: str, overrides=(), env=None, base_dir=".") -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        return cls.from_parser(cp, overrides, env, base_dir=Path(base_dir))

    @classmethod
    def from_parser(cls, cp, overrides=(), env=None, base_dir=Path(".")) -> "RunConfig":
        env = os.environ if env is None else env
        r = _Reader(cp)
        for item in overrides:
            key, sep, value = item.partition("=")
            section, dot, option = key.strip().rpartition(".")
            if not sep or not dot or not section or not option:
                r.problems.append(f"--set {item!r}: expected section.key=value")
                continue
            if not cp.has_section(section):
                cp.add_section(section)
            cp.set(section, option, value)

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base_dir / p

        inp = r.get("paths", "input")
        out = env.get(OUTPUT_DIR_ENV) or r.get("paths", "output_dir", "output")
        cfg = cls(input_path=resolve(inp) if inp else None, output_dir=resolve(out), schema=None, rule=None)

        if cp.has_section("schema"):
            cfg.schema = _schema(r)
        if cp.has_section("label"):
            outcome = r.strs("label", "outcome")
            positive = r.strs("label", "positive")
            policy = r.get("label", "policy", "drop")
            try:
                cfg.rule = LabelRule(frozenset(outcome), frozenset(positive), policy)
            except ValueError as exc:
                r.problems.append(f"[label] {exc}")

        cfg.test_fraction = r.float("split", "test_fraction", 0.2)
        if not 0.0 < cfg.test_fraction < 1.0:
            r.problems.append("[split] test_fraction: must lie in (0, 1)")
        cfg.seed = r.int("split", "seed", 0)

        cfg.kinds = r.strs("model", "kinds", KINDS)
        r.check_subset("model", "kinds", cfg.kinds, KINDS)
        cfg.n_trials = r.optional_int("model", "n_trials")
        cfg.max_epochs = r.int("model", "max_epochs", 100)
        cfg.patience = r.int("model", "patience", 5)
        cfg.base_width = r.int("model", "base_width", 8)
        cfg.batch_sizes = r.ints("model", "batch_sizes", BATCH_SIZES)
        r.check_subset("model", "batch_sizes", cfg.batch_sizes, BATCH_SIZES)
        cfg.size_multipliers = r.ints("model", "size_multipliers", SIZE_MULTIPLIERS)
        r.check_subset("model", "size_multipliers", cfg.size_multipliers, SIZE_MULTIPLIERS)
        cfg.seq_lens = r.ints("model", "seq_lens", None)
        cfg.kernel_sizes = r.ints("model", "kernel_sizes", KERNEL_SIZES)
        cfg.prepare_seq_len = r.int("model", "seq_len", 15)

        for kind in KINDS:
            section = f"train.{kind}"
            if not cp.has_section(section):
                continue
            try:
                cfg.train_configs[kind] = ModelConfig(
                    kind,
                    seq_len=r.int(section, "seq_len", 15),
                    batch_size=r.int(section, "batch_size", 128),
                    size_multiplier=r.int(section, "size_multiplier", 1),
                    kernel_size=r.optional_int(section, "kernel_size"),
                    seed=r.int(section, "seed", cfg.seed),
                    max_epochs=cfg.max_epochs, patience=cfg.patience, base_width=cfg.base_width,
                )
            except (ValueError, TypeError) as exc:
                r.problems.append(f"[{section}] {exc}")

        cfg.max_prefix = r.optional_int("analysis", "max_prefix")
        cfg.variants = r.strs("analysis", "variants", VARIANTS)
        r.check_subset("analysis", "variants", cfg.variants, VARIANTS)
        cfg.n_seeds = r.int("analysis", "n_seeds", 3)
        if cfg.n_seeds is not None and cfg.n_seeds < 3:
            r.problems.append("[analysis] n_seeds: must be >= 3")
        cfg.gradcheck_instances = r.int("analysis", "gradcheck_instances", 3)

        if cp.has_section("synth"):
            signal = r.get("synth", "signal", "activity")
            if signal not in SIGNALS:
                r.problems.append(f"[synth] signal: {signal!r} not in {list(SIGNALS)}")
            else:
                try:
                    cfg.synth = SyntheticLogSpec(
                        n_cases=r.int("synth", "n_cases", 1000),
                        min_length=r.int("synth", "min_length", 3),
                        max_length=r.int("synth", "max_length", 10),
                        signal=signal,
                        positive_rate=r.float("synth", "positive_rate", 0.4),
                        signal_depth=r.int("synth", "signal_depth", 3),
                        seed=r.int("synth", "seed", 0),
                    )
                except (ValueError, TypeError) as exc:
                    r.problems.append(f"[synth] {exc}")

        if r.problems:
            raise ConfigError(r.problems)
        return cfg

    def require(self, *what: str) -> None:
        """Raise one ConfigError listing every missing piece a command needs."""
        problems = []
        if "input" in what:
            if self.input_path is None:
                problems.append("[paths] input: required")
            elif not self.input_path.exists():
                problems.append(f"[paths] input: {self.input_path} does not exist")
        if "synth_output" in what and self.input_path is None:
            problems.append("[paths] input: required (synthetic log destination)")
        if "schema" in what and self.schema is None:
            problems.append("[schema]: section required")
        if "label" in what and self.rule is None:
            problems.append("[label]: section required")
        if "synth" in what and self.synth is None:
            problems.append("[synth]: section required")
        if "output" in what:
            try:
                self.output_dir.mkdir(parents=True, exist_ok=True)
                if not os.access(self.output_dir, os.W_OK):
                    raise PermissionError
            except OSError:
                problems.append(f"[paths] output_dir: {self.output_dir} is not writable")
        if problems:
            raise ConfigError(problems)

    def search_grid(self, median_case_length: float):
        from .training import SearchGrid, default_seq_lens

        seq_lens = self.seq_lens or default_seq_lens(median_case_length)
        return SearchGrid(self.batch_sizes, self.size_multipliers, tuple(seq_lens), self.kernel_sizes)


def _schema(r: _Reader) -> FeatureSchema | None:
    case_id = r.get("schema", "case_id", required=True)
    timestamp = r.get("schema", "timestamp", required=True)
    activity = r.get("schema", "activity", required=True)
    cats = r.strs("schema", "categorical")
    rngs = r.strs("schema", "range")
    fmt = r.get("schema", "timestamp_format", "%Y-%m-%d %H:%M:%S")
    delim = r.get("schema", "delimiter", ",")
    if delim == "\\t":
        delim = "\t"
    if activity and activity not in cats:
        r.problems.append(f"[schema] activity: column {activity!r} is not listed under categorical")
    dup = sorted(set(cats) & set(rngs))
    if dup:
        r.problems.append(f"[schema] columns {dup} are listed as both categorical and range")
    for col in (case_id, timestamp):
        if col and (col in cats or col in rngs):
            r.problems.append(f"[schema] {col!r} is a bookkeeping column and cannot be a feature")
    if not (case_id and timestamp and activity) or r.problems:
        return None
    feats = [Feature(c, CATEGORICAL) for c in cats] + [Feature(c, RANGE) for c in rngs]
    try:
        return FeatureSchema(tuple(feats), case_id, timestamp, activity, fmt, delim)
    except ValueError as exc:
        r.problems.append(f"[schema] {exc}")
        return None
