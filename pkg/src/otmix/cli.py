"""Command-line entry point: run simulations, attack scenarios, and the
analysis report.

    otmix run     --clients 20 --duration 120 --seed 1 --out metrics.jsonl
    otmix attack  --scenario blending.scn ...
    otmix analyze --params net.json --out report.json

Metrics files are line-delimited JSON records (one event per line, keys
sorted).  Scenario files are declarative: ``at=<ms> action=<name>
key=value ...`` per line.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from . import analysis
from .params import InvalidConfig, NetworkParams
from .sim.adversary import AdversaryPolicy, parse_scenario
from .sim.network import SimNetwork, WorkloadSpec, run_workload
from .sim.scenarios import apply_directives


def _add_net_flags(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--q1", type=int, default=2)
    ap.add_argument("--q2", type=int, default=2)
    ap.add_argument("--q3", type=int, default=5)
    ap.add_argument("--alpha", type=int, default=2)
    ap.add_argument("--beta1", type=int, default=4)
    ap.add_argument("--beta2", type=int, default=None)
    ap.add_argument("--lambda", dest="lam", type=int, default=4)
    ap.add_argument("--tau", type=float, default=10.0, help="publication deadline, seconds")
    ap.add_argument("--gamma", type=int, default=64)
    ap.add_argument("--zeta", type=int, default=None)
    ap.add_argument("--clients", type=int, default=20)
    ap.add_argument("--duration", type=float, default=120.0, help="virtual seconds")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--scenario", type=str, default=None)
    ap.add_argument("--out", type=str, default=None, help="metrics file (JSONL)")
    ap.add_argument("--rate", type=float, default=None, help="messages/s (default: nominal)")
    ap.add_argument("--messages", type=int, default=100)
    ap.add_argument("--t2", type=float, default=1200.0, help="max dummy-request interval, seconds")
    ap.add_argument("--pool", action="store_true", help="pool-mode publication")


def _params_from(args) -> NetworkParams:
    return NetworkParams(
        q1=args.q1,
        q2=args.q2,
        q3=args.q3,
        alpha=args.alpha,
        rho=args.q3 - args.alpha,
        beta1=args.beta1,
        beta2=args.beta2,
        lam=args.lam,
        tau_s=args.tau,
        gamma=args.gamma,
        zeta=args.zeta,
        u=args.clients,
        t2_s=args.t2,
        pool_mode=args.pool,
    )


def _build_net(args) -> SimNetwork:
    params = _params_from(args)
    adversary = AdversaryPolicy()
    net = SimNetwork(params, seed=args.seed, clients=args.clients, adversary=adversary)
    if args.scenario:
        with open(args.scenario) as fh:
            directives = parse_scenario(fh.read())
        apply_directives(net, directives)
    return net


def cmd_run(args) -> int:
    try:
        net = _build_net(args)
    except InvalidConfig as exc:
        print(f"invalid-config: {exc}", file=sys.stderr)
        return 2
    rate = args.rate if args.rate is not None else net.params.nominal_rate
    spec = WorkloadSpec(
        n_messages=args.messages, rate_per_s=rate, max_virtual_s=args.duration
    )
    tracked, summary = run_workload(net, spec)
    report = {
        "sent": summary.sent,
        "tracked": len(tracked),
        "delivered": summary.delivered,
        "cross_delivered": summary.cross_delivered,
        "drops": summary.drops,
        "mean_submit_to_publish_s": round(summary.mean_latency_s, 3),
        "max_repository_dwell_s": round(summary.max_dwell_s, 3),
        "ot_sessions": summary.ot_sessions,
        "virtual_end_s": net.sim.now_ms / 1000.0,
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        net.log.write(args.out)
        print(f"metrics written to {args.out}", file=sys.stderr)
    return 0


def cmd_attack(args) -> int:
    from .sim import scenarios

    try:
        params = _params_from(args)
    except InvalidConfig as exc:
        print(f"invalid-config: {exc}", file=sys.stderr)
        return 2
    if args.kind == "blending":
        result = scenarios.blending_scenario(
            params, seed=args.seed, clients=args.clients,
            dummies_enabled=not args.no_dummies, observe_s=args.duration,
        )
    elif args.kind == "replay":
        result = scenarios.replay_scenario(params, seed=args.seed, injections=args.messages)
    elif args.kind == "tagging":
        result = scenarios.tagging_scenario(params, seed=args.seed)
    else:
        result = scenarios.malicious_node_scenario(params, seed=args.seed, faults=args.messages)
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


def cmd_analyze(args) -> int:
    if args.params:
        with open(args.params) as fh:
            raw = json.load(fh)
        params = NetworkParams(**raw)
    else:
        params = _params_from(args)
    total, per_node = analysis.storage_requirement(params)
    report = {
        "params": {k: getattr(params, k) for k in (
            "q1", "q2", "q3", "alpha", "rho", "beta1", "beta2", "lam", "tau_s",
            "gamma", "zeta", "t1_s", "t2_s", "h_hours", "u", "v_msgs_per_s", "msg_size",
        )},
        "sender_anonymity_set": analysis.sender_anonymity_set(params),
        "receiver_anonymity_bound": analysis.receiver_anonymity_bound(params),
        "expected_publication_latency_s": analysis.expected_publication_latency(params),
        "storage_network_total_bytes": total,
        "storage_per_node_bytes": per_node,
        "standard_dwell_steps_mean_var": analysis.standard_dwell_stats(params.lam),
        "pool_dwell_steps_mean_var": analysis.pool_dwell_stats(params.lam),
        "pool_entropy_bits": analysis.pool_mode_entropy(params),
        "pool_conversion_gain_bits": analysis.pool_conversion_gain(params.lam),
        "pool_conversion_factor": analysis.pool_conversion_factor(params.lam),
    }
    if args.monte_carlo:
        lam = params.lam
        bucket = params.bucket_size
        if bucket % lam != 0:
            bucket = lam * max(1, bucket // lam)
        std = analysis.simulate_standard_dwell(lam, bucket, args.mc_messages, seed=args.seed)
        pool = analysis.simulate_pool_dwell(lam, bucket, args.mc_messages, seed=args.seed)
        empirical = analysis.empirical_pool_entropy(pool, bucket)
        closed = analysis.pool_entropy(bucket * (lam - 1) / 2, bucket)
        report["monte_carlo"] = {
            "messages": args.mc_messages,
            "standard_dwell_mean": float(std.mean()),
            "standard_dwell_var": float(std.var()),
            "pool_dwell_mean": float(pool.mean()),
            "pool_dwell_var": float(pool.var()),
            "pool_entropy_bits": empirical,
            "pool_entropy_delta": empirical - closed,
        }
    out = json.dumps(report, indent=2, sort_keys=True)
    print(out)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(out + "\n")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="otmix", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)

    run_p = sub.add_parser("run", help="run an honest-network simulation")
    _add_net_flags(run_p)
    run_p.set_defaults(fn=cmd_run)

    atk = sub.add_parser("attack", help="run an adversary scenario")
    _add_net_flags(atk)
    atk.add_argument("--kind", choices=["blending", "replay", "tagging", "malicious"],
                     default="blending")
    atk.add_argument("--no-dummies", action="store_true")
    atk.set_defaults(fn=cmd_attack)

    an = sub.add_parser("analyze", help="closed-form report, optionally with Monte-Carlo")
    _add_net_flags(an)
    an.add_argument("--params", type=str, default=None, help="JSON NetworkParams file")
    an.add_argument("--monte-carlo", action="store_true")
    an.add_argument("--mc-messages", type=int, default=100_000)
    an.set_defaults(fn=cmd_analyze)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
