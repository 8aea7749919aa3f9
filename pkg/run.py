"""Entry point for the splitstream command line."""

from splitstream.cli import run


if __name__ == "__main__":
    raise SystemExit(run())
