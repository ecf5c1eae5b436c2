"""Run the bridge: ``python -m poa_bridge [--port 8787] [--model demo|real|auto]``."""

import argparse

import uvicorn

from poa_bridge.app import create_app


def main() -> None:
    parser = argparse.ArgumentParser(prog="poa-bridge")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8787)
    parser.add_argument("--model", choices=["auto", "demo", "real"], default="auto")
    args = parser.parse_args()
    uvicorn.run(create_app(args.model), host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
