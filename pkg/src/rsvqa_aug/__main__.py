"""Main entry point for the rsvqa-aug command line."""

from .cli import run

if __name__ == "__main__":
    run()
