# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""slm-postsample package entrypoint."""

__all__ = ["__version__"]

__version__ = "0.1.0"
