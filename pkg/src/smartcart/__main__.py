"""python -m smartcart entry point."""

from .cli import entry

if __name__ == "__main__":
    entry()
