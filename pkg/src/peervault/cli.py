"""Operator command line: node lifecycle plus a thin admin-API client.

Exit codes: 0 success, 1 usage error, 2 node unreachable, 3 operation
error. `--json` switches every command to stable JSON output.
"""

from __future__ import annotations

import json
import signal
import sys
import threading
from pathlib import Path

import click
import requests

from .node import ConfigError, Node, NodeConfig
from .policy import MalformedPolicy, node_from_dict, node_to_dict
from .policytext import format_expression, parse_expression
from .values import to_wire

EXIT_USAGE = 1
EXIT_UNREACHABLE = 2
EXIT_OPERATION = 3

DEFAULT_CONFIG = "peervault.conf"


class CliState:
    def __init__(self, config_path: str, as_json: bool):
        self.config_path = config_path
        self.as_json = as_json
        self._config = None

    @property
    def config(self) -> NodeConfig:
        if self._config is None:
            try:
                self._config = NodeConfig.load(self.config_path)
            except FileNotFoundError:
                raise click.UsageError(f"config file not found: {self.config_path}")
            except ConfigError as exc:
                raise click.UsageError(str(exc))
        return self._config

    @property
    def base_url(self) -> str:
        return f"http://{self.config.admin_host}:{self.config.admin_port}"

    def call(self, method: str, path: str, **kwargs):
        try:
            resp = requests.request(method, self.base_url + path, timeout=120, **kwargs)
        except requests.RequestException as exc:
            click.echo(f"node unreachable at {self.base_url}: {exc}", err=True)
            sys.exit(EXIT_UNREACHABLE)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("error", resp.text)
            except ValueError:
                detail = resp.text
            click.echo(f"error ({resp.status_code}): {detail}", err=True)
            sys.exit(EXIT_OPERATION)
        return resp

    def emit(self, payload, human) -> None:
        if self.as_json:
            click.echo(json.dumps(payload, indent=2, sort_keys=True))
        else:
            human(payload)


pass_state = click.make_pass_decorator(CliState)


@click.group()
@click.option("--config", "config_path", default=DEFAULT_CONFIG, show_default=True,
              help="Path to the node config file.")
@click.option("--json", "as_json", is_flag=True, help="Stable JSON output.")
@click.pass_context
def main(ctx, config_path, as_json):
    """Personal data vault node: encrypted storage shared peer to peer."""
    ctx.obj = CliState(config_path, as_json)


@main.command()
@click.option("--vault-dir", default="vault", show_default=True)
@click.option("--registry", "registry_url", default="http://127.0.0.1:9300", show_default=True)
@click.option("--listen-port", default=9400, show_default=True)
@click.option("--admin-port", default=8420, show_default=True)
@click.option("--bootstrap", multiple=True, help="host:port of a known peer (repeatable).")
@click.option("--password", prompt=True, hide_input=True, confirmation_prompt=True)
@pass_state
def init(state: CliState, vault_dir, registry_url, listen_port, admin_port, bootstrap, password):
    """Create the vault, generate an identity, register its DID."""
    config = NodeConfig(
        vault_dir=vault_dir,
        registry_url=registry_url,
        listen_port=listen_port,
        admin_port=admin_port,
        bootstrap=list(bootstrap),
    )
    node = Node.init(config, password)
    config.dump(state.config_path)
    payload = {
        "configPath": state.config_path,
        "vaultDir": vault_dir,
        "fingerprint": node.identity.fingerprint,
        "did": node.identity.did,
        "didRegistered": node._did_registered,
    }
    state.emit(payload, lambda p: click.echo(
        f"vault created at {p['vaultDir']}\n"
        f"fingerprint: {p['fingerprint']}\n"
        f"did: {p['did']}" + ("" if p["didRegistered"] else "\n(warning: DID registration deferred)")
    ))


@main.command()
@click.option("--password", prompt=True, hide_input=True)
@pass_state
def serve(state: CliState, password):
    """Unlock the vault and run the node until interrupted."""
    from .adminapi import AdminApiServer

    config = state.config
    node = Node(config)
    node.unlock(password)
    node.start_network()
    admin = AdminApiServer(node, config.admin_host, config.admin_port)
    admin.start()
    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, on_signal)
    signal.signal(signal.SIGTERM, on_signal)
    click.echo(f"serving on {node.endpoint.address}, admin API at {admin.url}", err=True)
    try:
        stop.wait()
    finally:
        admin.stop()
        node.shutdown()
        click.echo("vault locked, node stopped", err=True)


@main.command()
@click.option("--password", prompt=True, hide_input=True)
@pass_state
def unlock(state: CliState, password):
    """Unlock the running node's vault."""
    state.call("POST", "/unlock", json={"password": password})
    state.emit({"unlocked": True}, lambda p: click.echo("unlocked"))


@main.command()
@pass_state
def lock(state: CliState):
    """Lock the running node's vault."""
    state.call("POST", "/lock")
    state.emit({"unlocked": False}, lambda p: click.echo("locked"))


@main.command()
@pass_state
def status(state: CliState):
    """Node identity and state."""
    payload = state.call("GET", "/status").json()
    state.emit(payload, lambda p: click.echo(
        f"fingerprint: {p['fingerprint']}\ndid: {p['did']}\n"
        f"unlocked: {p['unlocked']}\npeers: {p['peerCount']}"
    ))


@main.command()
@pass_state
def peers(state: CliState):
    """Live peers discovered on the network."""
    payload = state.call("GET", "/peers").json()

    def human(p):
        if not p["peers"]:
            click.echo("no live peers")
        for peer in p["peers"]:
            click.echo(f"{peer['fingerprint']}  {peer['address'][0]}:{peer['address'][1]}  {peer['did']}")

    state.emit(payload, human)


@main.command()
@click.argument("peer", required=False)
@pass_state
def browse(state: CliState, peer):
    """List the local tree, or a peer's accessible files."""
    if peer:
        payload = state.call("GET", f"/remote/{peer}/tree").json()
        state.emit(payload, lambda p: click.echo("\n".join(p["files"]) or "(nothing accessible)"))
    else:
        payload = state.call("GET", "/tree").json()

        def human(p):
            for entry in p["entries"]:
                suffix = "/" if entry["kind"] == "folder" else f"  {entry['size']}B"
                click.echo(f"{entry['path']}{suffix}")

        state.emit(payload, human)


@main.command()
@click.argument("peer")
@click.argument("path")
@click.option("-o", "--output", type=click.Path(), help="Write to file instead of stdout.")
@pass_state
def get(state: CliState, peer, path, output):
    """Fetch a file from a peer (cached, on demand)."""
    resp = state.call("GET", f"/remote/{peer}/file", params={"path": path})
    if output:
        Path(output).write_bytes(resp.content)
        state.emit({"written": output, "bytes": len(resp.content)},
                   lambda p: click.echo(f"wrote {p['bytes']} bytes to {p['written']}"))
    else:
        sys.stdout.buffer.write(resp.content)


@main.command()
@click.argument("path")
@click.option("-i", "--input", "input_file", type=click.Path(exists=True), required=True)
@pass_state
def put(state: CliState, path, input_file):
    """Store a local file into the vault."""
    data = Path(input_file).read_bytes()
    payload = state.call("PUT", "/file", params={"path": path}, data=data).json()
    state.emit(payload, lambda p: click.echo(f"stored {p['path']} ({p['size']}B)"))


@main.group()
def policy():
    """Show or set access policies."""


@policy.command("show")
@click.argument("path")
@pass_state
def policy_show(state: CliState, path):
    payload = state.call("GET", "/policy", params={"path": path}).json()

    def human(p):
        pol = p["policy"]
        if all(pol[k] is None for k in ("combined", "read", "write")):
            click.echo("(no restriction)")
            return
        for selector in ("combined", "read", "write"):
            if pol[selector] is not None:
                click.echo(f"{selector}: {format_expression(node_from_dict(pol[selector]))}")
        click.echo(f"version: {p['version']}")

    state.emit(payload, human)


@policy.command("set")
@click.argument("path")
@click.argument("expression")
@click.option("--mode", type=click.Choice(["combined", "read", "write"]), default="combined",
              show_default=True)
@pass_state
def policy_set(state: CliState, path, expression, mode):
    """Set a policy from the inline syntax, e.g. '(age gte 18)'."""
    try:
        node = parse_expression(expression) if expression.strip() not in ("", "none") else None
    except MalformedPolicy as exc:
        raise click.UsageError(f"bad policy expression: {exc}")
    body = {"path": path, "selector": mode,
            "node": None if node is None else node_to_dict(node)}
    payload = state.call("PUT", "/policy", json=body).json()
    state.emit(payload, lambda p: click.echo(f"policy version {p['version']} set on {p['path'] or '/'}"))


@main.group()
def sic():
    """Self-issued credentials."""


@sic.command("issue")
@click.argument("peer")
@click.argument("claims", nargs=-1, required=True)
@pass_state
def sic_issue(state: CliState, peer, claims):
    """Issue claims k=v to a peer; the credential is delivered to them."""
    parsed = {}
    for claim in claims:
        if "=" not in claim:
            raise click.UsageError(f"claims are key=value, got {claim!r}")
        key, _, value = claim.partition("=")
        parsed[key] = to_wire(_coerce(value))
    payload = state.call("POST", "/sic", json={"peer": peer, "claims": parsed}).json()
    state.emit(payload, lambda p: click.echo(f"issued {p['credential']['id']} to {peer}"))


def _coerce(value: str):
    from .policytext import _parse_value

    return _parse_value(value)


@main.group()
def trust():
    """Local trusted-issuer list."""


@trust.command("add")
@click.argument("issuer")
@pass_state
def trust_add(state: CliState, issuer):
    payload = state.call("POST", "/trust", json={"issuer": issuer}).json()
    state.emit(payload, lambda p: click.echo("\n".join(p["trusted"])))


@trust.command("rm")
@click.argument("issuer")
@pass_state
def trust_rm(state: CliState, issuer):
    payload = state.call("DELETE", f"/trust/{issuer}").json()
    state.emit(payload, lambda p: click.echo("\n".join(p["trusted"])))


@trust.command("list")
@pass_state
def trust_list(state: CliState):
    payload = state.call("GET", "/trust").json()
    state.emit(payload, lambda p: click.echo("\n".join(p["trusted"])))


@main.group()
def log():
    """Tamper-evident access log."""


@log.command("list")
@pass_state
def log_list(state: CliState):
    payload = state.call("GET", "/log").json()

    def human(p):
        if not p["blocks"]:
            click.echo("no log blocks")
        for b in p["blocks"]:
            click.echo(
                f"#{b['seq']}  {b['hash'][:16]}  paths={b['insertedPaths']}"
                f"  fp~{b['fpEstimate']:.4f}  dual={b['dualSigned']}"
            )

    state.emit(payload, human)


@log.command("verify")
@click.option("--file", "chain_file", type=click.Path(exists=True),
              help="Verify an exported chain file instead of the live chain.")
@pass_state
def log_verify(state: CliState, chain_file):
    if chain_file:
        from .accesslog import ChainStore, verify_chain

        store = ChainStore.import_json(Path(chain_file).read_text())
        report = verify_chain(store.blocks, store.owner_public_key)
        payload = {
            "ok": report.ok,
            "length": report.length,
            "error": None if report.ok else {
                "position": report.error.position, "reason": report.error.reason,
            },
        }
    else:
        payload = state.call("GET", "/log/verify").json()
    state.emit(payload, lambda p: click.echo(
        "chain ok" if p["ok"] else f"chain BROKEN at block {p['error']['position']}: {p['error']['reason']}"
    ))
    if not payload["ok"]:
        sys.exit(EXIT_OPERATION)


@log.command("export")
@click.option("-o", "--output", type=click.Path(), help="Write to file (default stdout).")
@pass_state
def log_export(state: CliState, output):
    """Export the local chain for cross-node verification."""
    text = state.call("GET", "/log/export").text
    if output:
        Path(output).write_text(text)
        click.echo(f"chain exported to {output}", err=True)
    else:
        click.echo(text, nl=False)


@log.command("audit")
@click.argument("block", type=int)
@click.argument("path")
@pass_state
def log_audit(state: CliState, block, path):
    payload = state.call("GET", "/log/audit", params={"seq": block, "path": path}).json()
    state.emit(payload, lambda p: click.echo(
        (f"{p['path']} WAS offered (false-positive probability {p['fpEstimate']:.4f})"
         if p["present"] else f"{p['path']} was NOT offered (bloom filters have no false negatives)")
    ))


@main.command()
@pass_state
def metrics(state: CliState):
    """Verification counters and request history."""
    payload = state.call("GET", "/metrics").json()
    state.emit(payload, lambda p: click.echo(
        f"requests: {p['requestsHandled']}\n"
        f"verifications: {json.dumps(p['verifications'])}\n"
        f"registry lookups: {p['registryLookups']}\n"
        f"log blocks: {p['logBlocks']}"
    ))


@main.command()
@click.option("--delta", default=5.0, show_default=True, help="Seconds between requests.")
@click.option("--size", "size_kb", default=220, show_default=True, help="File size in kB.")
@click.option("--n", "runs", default=50, show_default=True, help="Runs per token type.")
@click.option("--out", type=click.Path(), help="CSV output path (default stdout).")
def bench(delta, size_kb, runs, out):
    """Run the local workload experiment and emit CSV."""
    import tempfile

    from .bench import run_bench

    with tempfile.TemporaryDirectory() as workdir:
        result = run_bench(Path(workdir), delta_s=delta, file_kb=size_kb, runs=runs)
    csv_text = result.to_csv()
    if out:
        Path(out).write_text(csv_text)
        click.echo(f"wrote {len(result.rows)} rows to {out}", err=True)
    else:
        click.echo(csv_text, nl=False)


def run() -> None:
    try:
        main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(EXIT_USAGE)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_USAGE)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)


if __name__ == "__main__":
    run()
