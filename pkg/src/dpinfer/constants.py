"""Calibrated constants record shared by the testers and the sample-complexity calculators.

The defaults below were produced by :func:`dpinfer.harness.calibrate_constants`
with its default reference grid and seed; ``dpinfer calibrate`` regenerates them.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class Constants:
    # uniformity statistic separation constant
    c: float = 0.549
    # closeness concentration and privacy-margin constants
    C1: float = 3.2
    C2: float = 18.38047940053836
    # sample-complexity multipliers
    mult_ut: float = 2.0
    mult_ct: float = 2.5
    mult_est: float = 1.26
    # expected TV error multiplier for k-ary estimation
    C_est: float = 0.561
    # coupling lower-bound constant c in eps + delta >= c / D
    c_lb: float = 0.04236
    # multiplier in the Frank-Wolfe risk bound
    mult_fw: float = 0.0835
    # constant of the binomial-moment bound feeding the second Paninski path bound
    C_binom: float = 0.956

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, overrides: dict | None) -> "Constants":
        if not overrides:
            return self
        names = {f.name for f in fields(self)}
        bad = set(overrides) - names
        if bad:
            raise ConfigError(f"unknown constant(s) {sorted(bad)}", field="constants")
        vals = {}
        for k, v in overrides.items():
            try:
                x = float(v)
            except (TypeError, ValueError):
                raise ConfigError(f"constant {k!r} must be a number", field="constants") from None
            if not (math.isfinite(x) and x > 0):
                raise ConfigError(f"constant {k!r} must be finite and positive", field="constants")
            vals[k] = x
        return replace(self, **vals)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Constants":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(str(exc.msg), line=exc.lineno) from exc
        if not isinstance(data, dict):
            raise ConfigError("constants file must hold a JSON object")
        return cls().with_overrides(data)


DEFAULT_CONSTANTS = Constants()
