# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Exception types shared across the package."""

from __future__ import annotations


class SlmDataError(ValueError):
    """Invalid input data, file contents or sampling design."""


class NumericalError(ArithmeticError):
    """Singular system, inadmissible parameter or failed numerical step."""
