#!/usr/bin/env python3
"""
ParaHom - numerical parabolic homogenization with lower-order terms.

Entry point for running the command-line interface from a source checkout:

    python main.py converge --config configs/periodic1d.toml
"""

from src.cli import main

if __name__ == "__main__":
    main()
