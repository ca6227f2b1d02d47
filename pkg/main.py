#!/usr/bin/env python3
"""
NetCournot - Main Entry Point

Cournot competition on platform networks: Nash and Stackelberg equilibria,
social welfare and price of anarchy under open access, discriminatory access
and controlled allocation.
"""

import sys
import os

# Add src to Python path
project_root = os.path.dirname(os.path.abspath(__file__))
src_path = os.path.join(project_root, 'src')
sys.path.insert(0, src_path)


def main():
    """Main entry point for the NetCournot command line"""
    try:
        from cli.commands import main as cli_main
        return cli_main(sys.argv[1:])
    except KeyboardInterrupt:
        print("\nInterrupted.", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
