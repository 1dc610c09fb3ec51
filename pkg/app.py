import sys

from dotenv import load_dotenv

load_dotenv()

from src.commands import run_command


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == '__main__':
    main()
