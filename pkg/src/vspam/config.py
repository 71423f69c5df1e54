"""Run configuration for the experiment harness."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidConfig

SEED_STREAMS = ("train", "valid", "database", "population", "probe", "bold")


@dataclass
class RunConfig:
    """Every knob of a harness run. Random streams derive from ``seed``.

    Stream ``name`` gets an integer seed hashed from ``seed`` and the index
    of ``name`` in SEED_STREAMS, so changing ``seed`` changes every stream.
    """

    image_size: int = 64
    levels: int = 6
    orientations: int = 8
    aperture: bool = False
    n_train: int = 1750
    n_valid: int = 120
    n_database: int = 2000
    n_voxels: int = 50
    n_active: int = 1
    family: str = "saturating"
    saturation_quantile: float = 50.0
    target_r2: float = 0.5
    candidate_levels: list = field(default_factory=lambda: [2, 3])
    kinds: list = field(default_factory=lambda: ["sqrtX", "log1psqrtX", "vspam"])
    screen_k: int = 500
    target_df: float = 4.0
    n_lambda: int = 50
    lambda_ratio: float = 1e-3
    patience: int | None = 10
    max_df: float | None = None
    max_cycles: int = 500
    selection: str = "top_k"
    top_k: int = 40
    threshold: float = 0.1
    b_grid: list = field(default_factory=lambda: [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000])
    mc_draws: int = 10000
    mc_b: list = field(default_factory=lambda: [10, 100])
    sweep_thresholds: list = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    rf_grid: int = 16
    probe_frequencies: list = field(default_factory=lambda: [1, 2, 4, 8, 16])
    probe_orientations: int = 8
    contrast_values: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0])
    n_noise: int = 8
    bold_images: int = 30
    bold_repeats: int = 4
    bold_rho: float = 0.5
    bold_snr: float = 0.0
    seed: int = 0
    out: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise InvalidConfig(msg)

        need(self.image_size >= 2, "image_size must be >= 2")
        need(self.levels >= 1 and self.orientations >= 1, "levels and orientations must be >= 1")
        need(self.image_size >= 2 ** (self.levels - 1), "image_size too small for the bank levels")
        for name in ("n_train", "n_valid", "n_database", "n_voxels", "n_active", "screen_k",
                     "n_lambda", "max_cycles", "mc_draws", "n_noise", "bold_images", "bold_repeats"):
            need(isinstance(getattr(self, name), int) and getattr(self, name) >= 1, f"{name} must be a positive integer")
        need(self.n_train >= 50, "n_train must be >= 50")
        need(self.family in ("linear", "saturating", "bump"), f"unknown family {self.family!r}")
        need(0 < self.target_r2 <= 1, "target_r2 must lie in (0, 1]")
        need(0 < self.saturation_quantile < 100, "saturation_quantile must lie in (0, 100)")
        need(all(0 <= lev < self.levels for lev in self.candidate_levels), "candidate_levels out of range")
        need(set(self.kinds) <= {"sqrtX", "log1psqrtX", "vspam"} and self.kinds, "unknown model kind")
        need(self.target_df > 2, "target_df must be > 2")
        need(0 < self.lambda_ratio < 1, "lambda_ratio must lie in (0, 1)")
        need(self.patience is None or self.patience >= 1, "patience must be >= 1 or null")
        need(self.selection in ("top_k", "threshold"), "selection must be 'top_k' or 'threshold'")
        need(self.top_k >= 1, "top_k must be >= 1")
        need(all(0 <= b <= self.n_database for b in self.b_grid), "b_grid values must lie in [0, n_database]")
        need(all(0 <= b <= self.n_database for b in self.mc_b), "mc_b values must lie in [0, n_database]")
        need(self.rf_grid >= 2, "rf_grid must be >= 2")
        need(all(t >= 0 for t in self.contrast_values), "contrast values must be >= 0")
        need(-1 < self.bold_rho < 1, "bold_rho must lie in (-1, 1)")
        need(self.bold_snr >= 0, "bold_snr must be >= 0")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")

    def stream(self, name):
        ss = np.random.SeedSequence([self.seed, SEED_STREAMS.index(name)])
        return int(ss.generate_state(1)[0])

    def fit_options(self):
        return {"k": self.screen_k, "target_df": self.target_df, "n_lambda": self.n_lambda,
                "lambda_ratio": self.lambda_ratio, "patience": self.patience,
                "max_df": self.max_df, "max_cycles": self.max_cycles}

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        bad = sorted(set(d) - known)
        if bad:
            raise InvalidConfig(f"unknown config keys: {bad}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise InvalidConfig("config must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def with_overrides(self, overrides):
        """New config with ``{key: value}`` applied; JSON-literal strings are decoded."""
        d = self.to_dict()
        for key, value in overrides.items():
            if key not in d:
                raise InvalidConfig(f"unknown config key {key!r}")
            if isinstance(value, str):
                try:
                    value = json.loads(value)
                except json.JSONDecodeError:
                    pass
            d[key] = value
        return RunConfig.from_dict(d)
