#!/usr/bin/env python3
"""
Main entry point for the actkit package when run as a module.
Usage: python -m actkit [args]
"""
# this_file: src/actkit/__main__.py

from actkit.cli import main

if __name__ == "__main__":
    main()
