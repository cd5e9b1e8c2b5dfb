"""Attack scenarios: blending, replay, tagging, and randomized malicious
node behavior with audit attribution.

Each scenario builds a network with an adversary, drives it, and returns
a plain-dict result for tests and the CLI.  Ground truth for every
injected fault is recorded so attribution can be checked exactly.
"""

from __future__ import annotations

import hashlib
import random
from typing import Dict, List, Tuple

from .. import messages as m
from ..client import ClientConfig
from ..crypto import sign
from ..params import NetworkParams
from ..wire import TaggedMessage
from .adversary import AdversaryPolicy, Rule, ScenarioDirective
from .network import SimNetwork, WorkloadSpec, run_workload

__all__ = [
    "blending_scenario",
    "replay_scenario",
    "tagging_scenario",
    "malicious_node_scenario",
    "apply_directives",
]


def _flip_tm_body(tm: TaggedMessage) -> TaggedMessage:
    raw = bytearray(tm.to_bytes())
    raw[80] ^= 0x01  # inside the sealed key block / body, never the tag
    return TaggedMessage.from_bytes(bytes(raw))


# ---------------------------------------------------------------------------
# Blending (n-1) attack
# ---------------------------------------------------------------------------


def blending_scenario(
    params: NetworkParams,
    seed: int = 1,
    clients: int = 200,
    dummies_enabled: bool = True,
    observe_s: float = 3600.0,
    fillers: int = 8,
) -> Dict:
    """Isolate one target message and measure the receiver anonymity set.

    The adversary blocks every honest submission except the target's and
    keeps the pipeline moving with traffic from clients it controls.  It
    then watches who runs OT sessions against the node that published
    the target tag while the tag sits in the publication repository.
    """
    adversary = AdversaryPolicy()
    net = SimNetwork(
        params,
        seed=seed,
        clients=clients,
        adversary=adversary,
        client_config=ClientConfig(
            poll_interval_s=30.0,
            dummies_enabled=dummies_enabled,
            self_verify_enabled=False,
        ),
    )
    ids = net.registry.client_ids
    rng = random.Random(seed * 7919 + 13)
    target_sender, target_receiver = rng.sample(ids, 2)
    controlled = [c for c in ids if c not in (target_sender, target_receiver)][:fillers]
    adversary.control_clients(controlled)

    # block all honest submissions except the target sender's
    blocked = set(ids) - set(controlled) - {target_sender}
    adversary.add_rule(Rule(action="drop", src=blocked, mtype={m.SUBMIT}))

    net.preshare_all([(min(target_sender, target_receiver), max(target_sender, target_receiver))])
    filler_pairs = [(controlled[i], controlled[(i + 1) % len(controlled)]) for i in range(len(controlled))]
    net.preshare_all(sorted({(min(a, b), max(a, b)) for a, b in filler_pairs}))

    # controlled clients keep batches filling for the whole observation
    interval_ms = 2_000
    total_ms = int(observe_s * 1000) + 120_000
    fi = 0
    for t in range(5_000, total_ms, interval_ms):
        a, b = filler_pairs[fi % len(filler_pairs)]
        fi += 1
        data = b"AD" + fi.to_bytes(6, "big")
        net.sim.schedule_at(t, lambda a=a, b=b, d=data: net.clients[a].send(b, d))

    target_data = b"TARGET-MESSAGE"
    net.sim.schedule_at(10_000, lambda: net.clients[target_sender].send(target_receiver, target_data))
    net.start()
    net.run_until(60_000)

    # locate the target's publication
    sent = [r for r in net.log.records if r["ev"] == "sent" and r["party"] == target_sender]
    assert sent, "target message was never sent"
    target_tag = sent[0]["tag"]
    publish = [r for r in net.log.records if r["ev"] == "publish" and r["tag"] == target_tag]
    t_guard = 60_000
    while not publish and t_guard < 600_000:
        t_guard += 30_000
        net.run_until(t_guard)
        publish = [r for r in net.log.records if r["ev"] == "publish" and r["tag"] == target_tag]
    assert publish, "target message was never published"
    pub = publish[0]
    node, t_pub = pub["party"], pub["t"]

    net.run_until(t_pub + int(observe_s * 1000))

    window = (t_pub, t_pub + int(observe_s * 1000))
    requesters = {
        r["client"]
        for r in net.log.records
        if r["ev"] == "ot_request"
        and r["party"] == node
        and window[0] <= r["t"] <= window[1]
        and r["client"] not in controlled
    }
    delivered = any(
        r["ev"] == "delivered" and r["party"] == target_receiver and r["data"] == target_data.hex()
        for r in net.log.records
    )
    honest_u = clients - len(controlled)
    h_window_s = min(observe_s, params.h_hours * 3600.0)
    expected_requests = h_window_s * honest_u / (params.t2_s * params.q3)
    return {
        "node": node,
        "anonymity_set_size": len(requesters),
        "receiver_in_set": target_receiver in requesters,
        "delivered": delivered,
        "expected_dummy_requests": expected_requests,
        "dummies_enabled": dummies_enabled,
        "controlled": len(controlled),
        "honest_clients": honest_u,
        "clients": clients,
    }


# ---------------------------------------------------------------------------
# Replay attack
# ---------------------------------------------------------------------------


def replay_scenario(
    params: NetworkParams,
    seed: int = 1,
    injections: int = 1000,
    honest_messages: int = 20,
    resend_victims: int = 5,
) -> Dict:
    """Duplicate captured submissions inside the replay window and count
    the Level-2 drops; separately force legitimate resends (new tag, new
    timestamp, same payload) and check they all go through."""
    adversary = AdversaryPolicy()
    net = SimNetwork(
        params, seed=seed, adversary=adversary,
        client_config=ClientConfig(poll_interval_s=params.publication_period_s,
                                   dummies_enabled=False, self_verify_enabled=False,
                                   loop_slack_factor=1.2),
    )
    ids = net.registry.client_ids
    rng = random.Random(seed * 31 + 5)
    replayer = ids[-1]

    # victims' first submissions are suppressed to force resends
    victims = ids[: min(resend_victims, len(ids) // 2)]
    adversary.add_rule(
        Rule(action="drop", src=set(victims), mtype={m.SUBMIT}, from_ms=0, until_ms=12_000)
    )

    spec = WorkloadSpec(n_messages=honest_messages, rate_per_s=2.0, start_ms=2_000,
                        max_virtual_s=900.0)
    non_victims = [c for c in ids[:-1] if c not in victims]
    pairs = []
    for i in range(honest_messages):
        a = victims[i % len(victims)] if i < len(victims) else rng.choice(non_victims)
        b = rng.choice([c for c in ids if c != a and c != replayer])
        pairs.append((a, b))
    spec.pairs = pairs
    tracked, summary = run_workload(net, spec)

    # only submissions that actually reached the mix are replayable; the
    # victims' suppressed first attempts were never processed, so
    # re-submitting those would be fresh traffic, not replays
    captured = [
        (t, src, dst, mtype, payload)
        for (t, src, dst, mtype, payload) in adversary.observed
        if mtype == m.SUBMIT and src != replayer and src not in victims
    ]
    assert captured, "no submissions captured"
    replay_sk = net.topology.keypair(replayer).secret
    l1_targets = net.registry.l1_ids
    base_t = net.sim.now_ms + 1_000
    done = 0
    per_env = max(1, injections // len(captured) + 1)
    drops_before = sum(1 for r in net.log.records if r["ev"] == "drop" and r.get("cause") == "replay")
    for (_, _, _, _, payload) in captured:
        env_bytes, _ = m.unpack_submit(payload)
        resigned = m.pack_submit(env_bytes, sign(replay_sk, env_bytes))
        for k in range(per_env):
            if done >= injections:
                break
            t = base_t + done * 23
            dst = l1_targets[done % len(l1_targets)]
            net.sim.schedule_at(t, lambda dst=dst, p=resigned: net.transport.send(replayer, dst, m.SUBMIT, p))
            done += 1
        if done >= injections:
            break
    net.run_until(net.sim.now_ms + injections * 23 + 120_000)

    replay_drops = (
        sum(1 for r in net.log.records if r["ev"] == "drop" and r.get("cause") == "replay")
        - drops_before
    )
    resends = sum(1 for r in net.log.records if r["ev"] == "resend" and r["party"] in victims)
    victim_data = [d for d, (a, b) in tracked.items() if a in victims]
    victim_delivered = {
        r["data"] for r in net.log.records if r["ev"] == "delivered" and r["data"] in set(victim_data)
    }
    return {
        "injections": done,
        "replay_drops": replay_drops,
        "drop_rate": replay_drops / done if done else 0.0,
        "delivered": summary.delivered,
        "tracked": len(tracked),
        "forced_resends": resends,
        "victim_messages": len(victim_data),
        "victim_delivered": len(victim_delivered),
    }


# ---------------------------------------------------------------------------
# Tagging attack (alteration at Level 1)
# ---------------------------------------------------------------------------


def tagging_scenario(params: NetworkParams, seed: int = 1, alterations: int = 5) -> Dict:
    """A malicious Level-1 node alters messages before forwarding; every
    alteration must be dropped at Level 2 and attributed to that node."""
    net = SimNetwork(params, seed=seed,
                     client_config=ClientConfig(dummies_enabled=False, self_verify_enabled=False))
    l1_id = net.registry.l1_ids[0]
    remaining = [alterations]

    def tamper(node, l2_id, seq, outputs):
        if remaining[0] > 0:
            remaining[0] -= 1
            mutated = bytearray(outputs[0])
            mutated[100] ^= 0x01
            outputs = [bytes(mutated)] + outputs[1:]
        return outputs

    net.l1[l1_id].tamper_hook = tamper
    spec = WorkloadSpec(n_messages=alterations * 4, rate_per_s=2.0, max_virtual_s=600.0)
    tracked, summary = run_workload(net, spec)
    net.run_until(net.sim.now_ms + 60_000)
    verdicts = net.auditor.verdicts
    blamed_l1 = [v for v in verdicts if v.outcome == "node_malicious" and v.blamed == l1_id]
    false_blame = [
        v for v in verdicts if v.outcome == "node_malicious" and v.blamed != l1_id
    ]
    return {
        "alterations": alterations,
        "integrity_drops": summary.drops.get("integrity", 0),
        "attributed_to_l1": len(blamed_l1),
        "false_accusations": len(false_blame),
        "delivered": summary.delivered,
        "tracked": len(tracked),
    }


# ---------------------------------------------------------------------------
# Randomized malicious-node fault injection
# ---------------------------------------------------------------------------

FAULT_KINDS = ("l1_alter", "l2_alter", "l3_publish_alter", "l3_serve_alter", "sender_garbage")


def malicious_node_scenario(
    params: NetworkParams,
    seed: int = 1,
    faults: int = 100,
    kinds: Tuple[str, ...] = FAULT_KINDS,
) -> Dict:
    """Inject randomized alterations at every level plus corrupted sender
    inputs; compare audit verdicts against ground truth.

    Soundness demands the blamed party always be the actual alterer and
    honest parties never be blamed.  Fault kinds run in phases so two
    categories can never overlap on one message and confuse attribution.
    """
    net = SimNetwork(
        params, seed=seed,
        client_config=ClientConfig(poll_interval_s=params.publication_period_s,
                                   dummies_enabled=False, self_verify_enabled=False,
                                   resend_max=1, loop_slack_factor=4.0),
    )
    rng = random.Random(seed * 104729 + 7)
    ids = net.registry.client_ids
    l1_id = net.registry.l1_ids[0]
    l2_id = net.registry.l2_ids[0]
    l3_ids = set(net.registry.l3_ids)

    plan = [kinds[rng.randrange(len(kinds))] for _ in range(faults)]
    plan_counts = {k: plan.count(k) for k in kinds}

    # pairs for the driving traffic, pre-shared once
    pair_pool = [tuple(rng.sample(ids, 2)) for _ in range(12)]
    net.preshare_all(sorted({(min(a, b), max(a, b)) for a, b in pair_pool}))
    net.start()
    msg_n = [0]

    def drive(n_messages: int, gap_ms: int = 400) -> None:
        base = net.sim.now_ms + 100
        for i in range(n_messages):
            a, b = pair_pool[(msg_n[0] + i) % len(pair_pool)]
            data = b"MX" + (msg_n[0] + i).to_bytes(6, "big")
            net.sim.schedule_at(base + i * gap_ms, lambda a=a, b=b, d=data: net.clients[a].send(b, d))
        msg_n[0] += n_messages

    def verdict_tally() -> Dict[str, int]:
        t = {"l1": 0, "l2": 0, "l3": 0, "sender": 0, "other_blame": 0, "no_blame": 0}
        for v in net.auditor.verdicts:
            if v.outcome == "node_malicious":
                if v.blamed == l1_id:
                    t["l1"] += 1
                elif v.blamed == l2_id:
                    t["l2"] += 1
                elif v.blamed in l3_ids:
                    t["l3"] += 1
                else:
                    t["other_blame"] += 1
            elif v.outcome == "sender_input_error":
                t["sender"] += 1
            else:
                t["no_blame"] += 1
        return t

    def run_phase(count_box, n_faults: int, settle_key: str, settle_target: int) -> None:
        """Drive traffic until this phase's faults all fire and their
        verdicts land (bounded by a virtual deadline)."""
        deadline = net.sim.now_ms + 600_000 + n_faults * 8_000
        while net.sim.now_ms < deadline:
            remaining = count_box[0] if count_box is not None else 0
            if remaining <= 0 and verdict_tally()[settle_key] >= settle_target:
                break
            drive(max(4, min(remaining * 2 + 2, 12)))
            net.run_until(net.sim.now_ms + 20_000)
        net.run_until(net.sim.now_ms + 45_000)  # let stragglers settle

    # --- phase 1: Level-1 alterations ---------------------------------
    l1_count = [plan_counts["l1_alter"]]

    def l1_tamper(node, l2_dst, seq, outputs):
        if l1_count[0] > 0:
            l1_count[0] -= 1
            mutated = bytearray(outputs[0])
            mutated[100] ^= 0x01
            return [bytes(mutated)] + outputs[1:]
        return outputs

    net.l1[l1_id].tamper_hook = l1_tamper
    if l1_count[0]:
        run_phase(l1_count, plan_counts["l1_alter"], "l1", plan_counts["l1_alter"])
    net.l1[l1_id].tamper_hook = None
    after_l1 = verdict_tally()

    # --- phase 2: Level-2 alterations ---------------------------------
    from ..level2 import _Pending

    l2_count = [plan_counts["l2_alter"]]

    def l2_tamper(node, round_no, shuffled):
        if l2_count[0] > 0 and shuffled:
            l2_count[0] -= 1
            victim = shuffled[0]
            shuffled = [
                _Pending(tm=_flip_tm_body(victim.tm), blob=victim.blob, l1_id=victim.l1_id,
                         container_seq=victim.container_seq, position=victim.position)
            ] + shuffled[1:]
        return shuffled

    net.l2[l2_id].tamper_hook = l2_tamper
    if l2_count[0]:
        run_phase(l2_count, plan_counts["l2_alter"], "l2",
                  after_l1["l2"] + plan_counts["l2_alter"])
    net.l2[l2_id].tamper_hook = None
    after_l2 = verdict_tally()

    # --- phase 3: Level-3 alteration at publication -------------------
    pub_count = [plan_counts["l3_publish_alter"]]
    sent_tags = set()
    scan_idx = [0]

    def refresh_sent_tags():
        recs = net.log.records
        while scan_idx[0] < len(recs):
            r = recs[scan_idx[0]]
            scan_idx[0] += 1
            if r["ev"] == "sent":
                sent_tags.add(r["tag"])

    def l3_pub_tamper(node, tm, ordinal):
        if pub_count[0] > 0:
            refresh_sent_tags()
            if tm.tag.hex() in sent_tags:  # alter only real traffic
                pub_count[0] -= 1
                return _flip_tm_body(tm)
        return tm

    for l3 in net.l3.values():
        l3.publish_tamper_hook = l3_pub_tamper
    if pub_count[0]:
        run_phase(pub_count, plan_counts["l3_publish_alter"], "l3",
                  after_l2["l3"] + plan_counts["l3_publish_alter"])
    for l3 in net.l3.values():
        l3.publish_tamper_hook = None
    after_pub = verdict_tally()

    # --- phase 4: Level-3 alteration while serving OT ------------------
    serve_count = [plan_counts["l3_serve_alter"]]

    def l3_serve_tamper(node, strings):
        if serve_count[0] > 0:
            serve_count[0] -= 1
            out = []
            for s in strings:
                mutated = bytearray(s)
                mutated[40] ^= 0x01
                out.append(bytes(mutated))
            return out
        return strings

    for l3 in net.l3.values():
        l3.serve_tamper_hook = l3_serve_tamper
    if serve_count[0]:
        run_phase(serve_count, plan_counts["l3_serve_alter"], "l3",
                  after_pub["l3"] + plan_counts["l3_serve_alter"])
    for l3 in net.l3.values():
        l3.serve_tamper_hook = None
    after_serve = verdict_tally()

    # --- phase 5: corrupted sender inputs ------------------------------
    garbage_n = plan_counts["sender_garbage"]
    if garbage_n:
        from ..wire import build_envelope

        garbage_client = ids[0]
        kp = net.topology.keypair(garbage_client)
        g_rng = random.Random(seed + 999)
        base = net.sim.now_ms + 100
        for i in range(garbage_n):
            peer = ids[1 + (i % (len(ids) - 1))]
            env, _, _ = build_envelope(
                kp, net.registry.pk(peer), b"garbage", l2_id, net.registry.pk(l2_id),
                (base // 1000) + i, sigma=b"\x42" * 32, counter=i + 1, direction=0, rng=g_rng,
            )
            raw = bytearray(env.to_bytes())
            raw[200] ^= 0x01  # corrupt inside the outer sealed box
            payload = m.pack_submit(bytes(raw), sign(kp.secret, bytes(raw)))
            net.sim.schedule_at(
                base + i * 500,
                lambda p=payload, dst=l1_id: net.transport.send(garbage_client, dst, m.SUBMIT, p),
            )
        deadline = net.sim.now_ms + 600_000 + garbage_n * 6_000
        while net.sim.now_ms < deadline and verdict_tally()["sender"] < after_serve["sender"] + garbage_n:
            drive(6)
            net.run_until(net.sim.now_ms + 20_000)
        net.run_until(net.sim.now_ms + 45_000)

    tally = verdict_tally()
    honest_l1 = set(net.registry.l1_ids) - {l1_id}
    honest_l2 = set(net.registry.l2_ids) - {l2_id}
    false_blame = [
        v for v in net.auditor.verdicts
        if v.outcome == "node_malicious" and (v.blamed in honest_l1 or v.blamed in honest_l2
                                              or v.blamed is None or v.blamed in ids)
    ]
    return {
        "plan": plan_counts,
        "attributed": {
            "l1": tally["l1"],
            "l2": tally["l2"],
            "l3": tally["l3"],
            "sender_input_error": tally["sender"],
        },
        "false_accusations": len(false_blame) + tally["other_blame"],
        "unfired_hooks": l1_count[0] + l2_count[0] + pub_count[0] + serve_count[0],
        "total_cases": len(net.auditor.verdicts),
    }


# ---------------------------------------------------------------------------
# Scenario-file directives (CLI)
# ---------------------------------------------------------------------------


def _parse_party_set(net: SimNetwork, spec: str) -> set:
    if spec == "clients":
        return set(net.registry.client_ids)
    if spec == "nodes":
        return set(net.registry.node_ids)
    if spec == "all":
        return set(net.registry.client_ids) | set(net.registry.node_ids)
    if spec.startswith("all_clients_except:"):
        keep = {int(x) for x in spec.split(":", 1)[1].split(",")}
        return set(net.registry.client_ids) - keep
    return {int(x) for x in spec.split(",")}


def apply_directives(net: SimNetwork, directives: List[ScenarioDirective]) -> None:
    """Wire scenario-file directives into a built network."""
    adversary = net.adversary
    if adversary is None:
        raise ValueError("network was built without an adversary")
    for d in directives:
        if d.action in ("drop", "delay", "tamper", "duplicate"):
            rule = Rule(
                action=d.action,
                src=_parse_party_set(net, d.args["src"]) if "src" in d.args else None,
                dst=_parse_party_set(net, d.args["dst"]) if "dst" in d.args else None,
                mtype={int(x) for x in d.args["mtype"].split(",")} if "mtype" in d.args else None,
                from_ms=d.at_ms,
                until_ms=int(d.args.get("until", 2**62)),
                delay_ms=int(d.args.get("ms", 0)),
            )
            adversary.add_rule(rule)
        elif d.action == "disable_dummies":
            for c in net.clients.values():
                c.config.dummies_enabled = False
        elif d.action == "node_down":
            node = int(d.args["node"])
            net.sim.schedule_at(d.at_ms, lambda n=node: net.transport.down.add(n))
        elif d.action == "node_up":
            node = int(d.args["node"])
            net.sim.schedule_at(d.at_ms, lambda n=node: net.transport.down.discard(n))
        elif d.action == "control_clients":
            adversary.control_clients(_parse_party_set(net, d.args["ids"]))
        elif d.action == "replay_submits":
            _schedule_replay(net, d)
        elif d.action == "control_node":
            _apply_node_control(net, d)
        else:
            raise ValueError(f"unknown scenario action {d.action!r}")


def _schedule_replay(net: SimNetwork, d: ScenarioDirective) -> None:
    """Re-submit observed submissions from a controlled client."""
    client = int(d.args["client"])
    count = int(d.args.get("count", "1"))
    net.adversary.control_clients({client})
    sk = net.topology.keypair(client).secret

    def fire():
        captured = [
            payload for (_, src, _, mtype, payload) in net.adversary.observed
            if mtype == m.SUBMIT and src != client
        ][:count]
        for i, payload in enumerate(captured):
            env_bytes, _ = m.unpack_submit(payload)
            resigned = m.pack_submit(env_bytes, sign(sk, env_bytes))
            dst = net.registry.l1_ids[i % len(net.registry.l1_ids)]
            net.sim.schedule_at(
                net.sim.now_ms + 50 + i * 50,
                lambda p=resigned, dst=dst: net.transport.send(client, dst, m.SUBMIT, p),
            )

    net.sim.schedule_at(d.at_ms, fire)


def _apply_node_control(net: SimNetwork, d: ScenarioDirective) -> None:
    """Arm a malicious behavior on a controlled node."""
    node = int(d.args["node"])
    behavior = d.args["behavior"]
    count = [int(d.args.get("count", "1"))]
    net.adversary.control_nodes({node})
    if behavior == "alter_flush" and node in net.l1:
        def l1_tamper(n, l2_dst, seq, outputs):
            if count[0] > 0:
                count[0] -= 1
                mut = bytearray(outputs[0])
                mut[100] ^= 1
                return [bytes(mut)] + outputs[1:]
            return outputs
        net.l1[node].tamper_hook = l1_tamper
    elif behavior == "alter_batch" and node in net.l2:
        from ..level2 import _Pending

        def l2_tamper(n, round_no, shuffled):
            if count[0] > 0 and shuffled:
                count[0] -= 1
                v = shuffled[0]
                shuffled = [_Pending(tm=_flip_tm_body(v.tm), blob=v.blob, l1_id=v.l1_id,
                                     container_seq=v.container_seq, position=v.position)] + shuffled[1:]
            return shuffled
        net.l2[node].tamper_hook = l2_tamper
    elif behavior == "alter_publish" and node in net.l3:
        def pub_tamper(n, tm, ordinal):
            if count[0] > 0:
                count[0] -= 1
                return _flip_tm_body(tm)
            return tm
        net.l3[node].publish_tamper_hook = pub_tamper
    elif behavior == "alter_serve" and node in net.l3:
        def serve_tamper(n, strings):
            if count[0] > 0:
                count[0] -= 1
                return [bytes(b ^ (1 if i == 40 else 0) for i, b in enumerate(s)) for s in strings]
            return strings
        net.l3[node].serve_tamper_hook = serve_tamper
    else:
        raise ValueError(f"unknown control behavior {behavior!r} for node {node}")
