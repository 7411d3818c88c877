"""Run the bridge: load checkpoints, bind, serve until interrupted."""

from __future__ import annotations

import argparse
import sys

from disclip_bridge.config import BridgeConfig
from disclip_bridge.models import CausalLMAdapter, EncoderAdapter
from disclip_bridge.server import BridgeServer, RequestHandler


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="disclip-bridge", description=__doc__)
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--encoder", help="encoder checkpoint name or path")
    parser.add_argument("--lm", help="causal LM checkpoint name or path")
    parser.add_argument("--listen", help="host:port to bind")
    parser.add_argument("--device", help="torch device selector, e.g. cpu")
    args = parser.parse_args(argv)

    overrides = {
        "encoder_checkpoint": args.encoder,
        "lm_checkpoint": args.lm,
        "listen": args.listen,
        "device": args.device,
    }
    try:
        if args.config:
            config = BridgeConfig.from_file(args.config, **overrides)
        else:
            config = BridgeConfig(
                **{k: v for k, v in overrides.items() if v is not None}
            )
    except (OSError, ValueError) as exc:
        print(f"disclip-bridge: bad configuration: {exc}", file=sys.stderr)
        return 2

    try:
        encoder = EncoderAdapter(config.encoder_checkpoint, device=config.device)
        lm = CausalLMAdapter(config.lm_checkpoint, device=config.device)
    except Exception as exc:  # noqa: BLE001 - load failure is fatal by design
        print(f"disclip-bridge: checkpoint load failed: {exc}", file=sys.stderr)
        return 1

    host, port = config.listen_host_port()
    server = BridgeServer(RequestHandler(lm, encoder), host=host, port=port)
    print(
        f"disclip-bridge: serving {config.encoder_checkpoint} + {config.lm_checkpoint} "
        f"(dim {encoder.dim}) on {server.endpoint}",
        file=sys.stderr,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
