"""Run the sidecar: ``python -m embed_sidecar`` (listen address via env)."""

import os

import uvicorn

from embed_sidecar.service import create_app


def main() -> None:
    host = os.environ.get("EMBED_SIDECAR_HOST", "127.0.0.1")
    port = int(os.environ.get("EMBED_SIDECAR_PORT", "8094"))
    uvicorn.run(create_app(load_async=True), host=host, port=port)


if __name__ == "__main__":
    main()
