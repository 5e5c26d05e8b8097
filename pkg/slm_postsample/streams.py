# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Seeded random streams.

Every draw in the package comes from a numpy ``Philox`` counter-based generator
keyed by ``SeedSequence([seed, *stream])``, so ``(seed, stream)`` fixes the draws
on every platform and independent streams never overlap.
"""

from __future__ import annotations

import numpy as np

from slm_postsample.errors import SlmDataError

_SEED_MASK = (1 << 64) - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return the generator for ``seed`` and an optional stream path."""

    if seed < 0:
        raise SlmDataError(f"seed must be nonnegative, got {seed}")
    if any(index < 0 for index in stream):
        raise SlmDataError(f"stream indices must be nonnegative, got {stream}")
    entropy = [seed & _SEED_MASK, *stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
