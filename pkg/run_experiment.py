#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Spot scheduler deney komutları: train / compare / generate
"""

import sys

from spot_scheduler.experiment_runner import main

if __name__ == "__main__":
    sys.exit(main())
