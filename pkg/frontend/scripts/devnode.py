"""Boot a throwaway node + admin API for frontend tests and dev.

Prints one JSON line {"url": ...} when ready, then serves until stdin
closes. State lives in a temp directory that is removed on exit.
"""

import json
import sys
import tempfile

from peervault.adminapi import AdminApiServer
from peervault.node import Node, NodeConfig
from peervault.registry import InProcessRegistryClient, RegistryStore


def main() -> None:
    with tempfile.TemporaryDirectory() as workdir:
        config = NodeConfig(
            vault_dir=f"{workdir}/vault",
            transport="udp",
            listen_port=0,
            kdf_iterations=1000,
            announce_interval=1.0,
        )
        registry = InProcessRegistryClient(RegistryStore(), cache_ttl=0)
        node = Node.init(config, "devnode", registry=registry)
        node.unlock("devnode")
        node.start_network()
        admin = AdminApiServer(node)
        admin.start()
        print(json.dumps({"url": admin.url}), flush=True)
        try:
            sys.stdin.read()
        finally:
            admin.stop()
            node.shutdown()


if __name__ == "__main__":
    main()
