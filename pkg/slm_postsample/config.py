# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Monte Carlo experiment configuration from flat ``key = value`` files."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Mapping

from slm_postsample.errors import SlmDataError
from slm_postsample.models import McConfig
from slm_postsample.weights import normalize_scheme


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(item) for item in _items(text))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(item) for item in _items(text))


def _schemes(text: str) -> tuple[str, ...]:
    return tuple(normalize_scheme(item) for item in _items(text))


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def parse_switch(text: str) -> bool:
    """Read on/off style booleans."""

    value = text.strip().lower()
    if value in ("on", "true", "yes", "1"):
        return True
    if value in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on or off, got {text!r}")


def _items(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


_PARSERS: dict[str, Callable[[str], Any]] = {
    "population_counts": _int_list,
    "sample_counts": _int_list,
    "beta": float,
    "sigma2": float,
    "rho_grid": _float_list,
    "zeta_grid": _float_list,
    "schemes": _schemes,
    "replications": int,
    "seed": int,
    "x_mean": float,
    "x_var": float,
    "knn_k": int,
    "threshold": _optional_float,
    "row_standardize": parse_switch,
    "dgp_level": str.strip,
    "workers": int,
    "slope_shift": _float_list,
    "intercept": parse_switch,
}

KNOWN_KEYS = tuple(_PARSERS)


def parse_assignment(text: str) -> tuple[str, str]:
    """Split ``key = value``."""

    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise SlmDataError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


def apply_overrides(config: McConfig, values: Mapping[str, str], origin: str = "") -> McConfig:
    """Return ``config`` with textual values parsed onto it."""

    where = f"{origin}: " if origin else ""
    parsed: dict[str, Any] = {}
    for key, raw in values.items():
        parser = _PARSERS.get(key)
        if parser is None:
            raise SlmDataError(f"{where}unknown configuration key {key!r}")
        try:
            parsed[key] = parser(raw)
        except ValueError as exc:
            raise SlmDataError(f"{where}bad value for {key}: {exc}") from exc
    return replace(config, **parsed)


def load_mc_config(
    path: str | Path | None,
    overrides: Mapping[str, str] | None = None,
) -> McConfig:
    """Read a config file (``#`` comments allowed) and then apply overrides."""

    config = McConfig()
    if path is not None:
        values: dict[str, str] = {}
        with Path(path).open(encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                content = line.split("#", 1)[0].strip()
                if not content:
                    continue
                try:
                    key, value = parse_assignment(content)
                except SlmDataError as exc:
                    raise SlmDataError(f"{path}:{number}: {exc}") from exc
                values[key] = value
        config = apply_overrides(config, values, str(path))
    if overrides:
        config = apply_overrides(config, overrides, "override")
    return config
