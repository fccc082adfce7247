import json
import os
import time

from clockchain import merkle, spv
from clockchain.cli import main
from clockchain.core import allocation_outpoint
from clockchain.simnet import SimConfig, run

SMOKE = os.path.join(os.path.dirname(__file__), "..", "configs", "smoke.json")


def test_run_smoke_config_under_ten_seconds(tmp_path):
    start = time.monotonic()
    code = main(["run", "--config", SMOKE, "--out", str(tmp_path)])
    elapsed = time.monotonic() - start
    assert code == 0
    assert elapsed < 10.0
    assert (tmp_path / "trace.json").exists()
    assert (tmp_path / "metrics.json").exists()
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["consistency_violations"] == 0


def test_replay_matches(tmp_path):
    assert main(["run", "--config", SMOKE, "--out", str(tmp_path)]) == 0
    assert main(["replay", "--trace", str(tmp_path / "trace.json")]) == 0


def test_replay_detects_tampered_trace(tmp_path):
    assert main(["run", "--config", SMOKE, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "trace.json").read_text())
    doc["trace_digest"] = "0" * 64
    (tmp_path / "trace.json").write_text(json.dumps(doc))
    assert main(["replay", "--trace", str(tmp_path / "trace.json")]) == 1


def test_bad_config_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"m": 0}))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    missing = tmp_path / "nope.json"
    assert main(["run", "--config", str(missing), "--out", str(tmp_path)]) == 2


def _write_spv_files(tmp_path):
    cfg = SimConfig(m=2, n=8, rho=0.0, delta=2, mp=0.15, T=5, rounds=300, seed=3,
                    tx_rate=1.5, clients=8, client_utxos=8, sample_interval=30)
    result = run(cfg)
    obs = result.observers[0]
    genesis_ops = {allocation_outpoint(k) for k in range(8 * 8)}
    state = spv.LightClientState(m=2, depth_k=cfg.T, window=cfg.T,
                                 genesis_outpoints=genesis_ops)
    for i in range(2):
        records = []
        for bid in obs.dag.main_chain(i)[1:]:
            b = obs.dag.blocks[bid]
            records.append(spv.HeaderRecord(
                b.header, b.parent_ref, merkle.tx_root(b.transactions),
                b.chain_slot_proof))
        state.extend(i, records)
    target = None
    for _rnd, st in obs.settled_log:
        if st.verdict.valid and obs.depth_of(
            obs.tx_locations[st.tx_id][0]
        ) >= 2 * cfg.T:
            target = st.tx_id
    assert target is not None
    proof = spv.build_spv_proof(target, obs.locate_tx, obs.depth_of, cfg.T,
                                genesis_ops)
    headers_path = tmp_path / "headers.json"
    proof_path = tmp_path / "proof.json"
    headers_path.write_text(json.dumps(spv.state_to_json(state)))
    proof_path.write_text(json.dumps(spv.proof_to_json_doc(proof)))
    return headers_path, proof_path


def test_spv_verify_roundtrip_and_tamper(tmp_path):
    headers_path, proof_path = _write_spv_files(tmp_path)
    assert main(["spv-verify", "--proof", str(proof_path),
                 "--headers", str(headers_path)]) == 0
    doc = json.loads(proof_path.read_text())
    flipped = bytearray.fromhex(doc["target"]["block_ref"])
    flipped[0] ^= 0xFF
    doc["target"]["block_ref"] = flipped.hex()
    proof_path.write_text(json.dumps(doc))
    assert main(["spv-verify", "--proof", str(proof_path),
                 "--headers", str(headers_path)]) == 1


def test_spv_verify_bad_file_exits_2(tmp_path):
    p = tmp_path / "junk.json"
    p.write_text("{not json")
    assert main(["spv-verify", "--proof", str(p), "--headers", str(p)]) == 2


def test_sweep_writes_grid_and_csv(tmp_path):
    cfg = tmp_path / "base.json"
    cfg.write_text(json.dumps({
        "m": 2, "n": 6, "rho": 0.0, "delta": 1, "mp": 0.2, "T": 4,
        "rounds": 120, "seed": 5, "sample_interval": 30,
    }))
    code = main(["sweep", "--config", str(cfg), "--grid", "m=1,2;seed=5,6",
                 "--out", str(tmp_path)])
    assert code == 0
    names = sorted(p.name for p in tmp_path.glob("metrics-*.json"))
    assert len(names) == 4
    csv_text = (tmp_path / "sweep.csv").read_text()
    assert csv_text.count("\n") == 5  # header + 4 rows
    assert "throughput" in csv_text.splitlines()[0]
