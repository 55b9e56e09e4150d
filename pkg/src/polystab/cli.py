"""~/
program entry point
- dispatches argv to ReportView
- maps errors raised by ReportView and the services to exit codes:
  0 ok, 1 usage, 2 input validation, 3 identity check failure, 4 numerical tolerance
"""
import sys

from polystab.errors import PolystabError
from polystab.models.cli_view import ReportView, View


def main(argv: list[str] | None = None) -> int:
    """
    Run one command and return its exit code.

    Expects:
    - View.handle_input() to return an int exit code on success.
    - every library error to be a ValueError; PolystabError subclasses carry their exit code.
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    view: View = ReportView()
    try:
        return view.handle_input(argv)
    except PolystabError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return PolystabError.exit_code
    except SystemExit as e:
        # argparse --help
        return e.code if isinstance(e.code, int) else 0
