import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedlsgan import baselines, federation
from fedlsgan.data import ClientDataset
from fedlsgan.federation import (
    FederationConfig,
    FederationState,
    ParamMessage,
    PayloadError,
    Transport,
    aggregate,
    broadcast,
    delta_accuracy,
    fresh_client_state,
    run_federated,
    select_clients,
)
from fedlsgan.genmodel import ModelParams, SchemaError, init_params
from helpers import (
    TINY,
    SpyClient,
    privacy_violations,
    random_client,
    random_clients,
    recording_transport,
)


def fed(**kw):
    base = dict(W=2, K=1, E=1.0, m=32, seed=0)
    base.update(kw)
    return FederationConfig(**base)


# -- selection ------------------------------------------------------------------------

def test_select_examples():
    rng = np.random.default_rng(0)
    assert select_clients(4, 1.0, rng) == (0, 1, 2, 3)
    two = select_clients(4, 0.5, rng)
    assert len(two) == 2 and len(set(two)) == 2
    assert len(select_clients(3, 0.01, rng)) == 1
    with pytest.raises(ValueError):
        select_clients(0, 1.0, rng)


def test_select_is_uniform():
    rng = np.random.default_rng(1)
    counts = np.zeros(4)
    for _ in range(4000):
        for i in select_clients(4, 0.5, rng):
            counts[i] += 1
    np.testing.assert_allclose(counts / 4000, 0.5, atol=0.03)


def test_config_validation():
    with pytest.raises(ValueError):
        FederationConfig(W=10, K=20)
    with pytest.raises(ValueError):
        FederationConfig(W=10, K=5, E=0.0)
    with pytest.raises(ValueError):
        FederationConfig(W=10, K=5, E=1.5)


# -- aggregation algebra ----------------------------------------------------------------

def test_aggregate_examples():
    g, _ = init_params(TINY, 0)
    assert aggregate([g, g]).equals(g)
    assert aggregate([g]).equals(g)
    zero = aggregate([g, g.map(np.negative)])
    assert all(np.all(zero[n] == 0) for n in zero)
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_schema_mismatch():
    g, _ = init_params(TINY, 0)
    other = ModelParams(g.role, {**g.entries, "g.fc.bias": np.zeros(3)})
    with pytest.raises(SchemaError):
        aggregate([g, other])


@given(st.integers(0, 1000), st.integers(1, 5), st.sampled_from([0.0, 1.0, -2.0, 0.25, 3.5]))
@settings(max_examples=20, deadline=None)
def test_aggregate_linearity(seed, n, delta):
    # offsets that are exact in binary keep the identity bit-exact
    sets = [init_params(TINY, seed + i)[1].map(lambda a: np.round(a * 1024) / 1024) for i in range(n)]
    shifted = aggregate([p.map(lambda a: a + delta) for p in sets])
    expected = aggregate(sets).map(lambda a: a + delta)
    for name in expected:
        np.testing.assert_allclose(shifted[name], expected[name], rtol=0, atol=1e-12)


def test_aggregate_is_plain_mean():
    ps = [init_params(TINY, i)[0] for i in range(3)]
    avg = aggregate(ps)
    for name in avg:
        np.testing.assert_allclose(avg[name], np.mean([p[name] for p in ps], axis=0), atol=1e-15)


# -- broadcast --------------------------------------------------------------------------

def test_broadcast_overwrites_params_keeps_optimizer():
    cfg = fed()
    states = []
    for i in range(3):
        g, d = init_params(TINY, i)
        s = fresh_client_state(g, d, cfg)
        opt = s.opt_G.__class__(t=5, m={k: v + i for k, v in s.opt_G.m.items()}, v=s.opt_G.v)
        states.append(federation.ClientState(g, d, opt, s.opt_D))
    server = init_params(TINY, 99)
    st0 = FederationState(w=7, server_G=states[0].params_G, server_D=states[0].params_D, clients=states)
    st1 = broadcast(server, st0)
    for before, after in zip(states, st1.clients):
        assert after.params_G.equals(server[0]) and after.params_D.equals(server[1])
        assert after.opt_G is before.opt_G and after.opt_D is before.opt_D
    assert st1.sync_epochs == [7]
    assert st1.server_G.equals(server[0])


def test_delta_accuracy():
    assert delta_accuracy(1.0, 1.0) == 0
    assert delta_accuracy(1.0, 1.1) == pytest.approx(0.1)
    assert delta_accuracy(0.3, 0.7) == delta_accuracy(0.7, 0.3)


# -- transport --------------------------------------------------------------------------

def test_transport_rejects_data_payloads():
    t = Transport()
    g, d = init_params(TINY, 0)
    window = random_client().train[0]
    with pytest.raises(PayloadError):
        t.send_params(Transport.SERVER, window)
    with pytest.raises(PayloadError):
        t.send_params(Transport.SERVER, ParamMessage(0, 1, window, d))
    msg = ParamMessage(0, 1, g, d)
    t.send_params(Transport.SERVER, msg)
    got = t.recv_params(Transport.SERVER)
    assert len(got) == 1 and got[0].params_G.equals(g)
    assert got[0].params_G.entries["g.fc.weight"] is not g.entries["g.fc.weight"]
    assert t.recv_params(Transport.SERVER) == []


# -- full loop -------------------------------------------------------------------------

@given(st.integers(1, 6), st.integers(1, 6))
@settings(max_examples=8, deadline=None)
def test_sync_count_is_floor_w_over_k(W, K):
    if K > W:
        W, K = K, W
    _, _, state = run_federated(random_clients(2), TINY, fed(W=W, K=K))
    assert state.sync_epochs == [k * K for k in range(1, W // K + 1)]
    assert len(state.sync_epochs) == W // K
    synced = {r.epoch for r in state.history if r.synced}
    assert synced == set(state.sync_epochs)


def test_sync_markers_at_100_and_200():
    cfg = fed(W=200, K=100)
    _, _, state = run_federated([random_client()], TINY, cfg)
    assert state.sync_epochs == [100, 200]


def test_server_constant_between_syncs():
    seen = {}
    run_federated(random_clients(2), TINY, fed(W=6, K=3),
                  on_epoch=lambda w, s: seen.__setitem__(w, (s.server_G.copy(), s.server_D.copy())))
    assert seen[1][0].equals(seen[2][0])
    assert not seen[2][0].equals(seen[3][0])
    assert seen[3][0].equals(seen[4][0]) and seen[4][0].equals(seen[5][0])
    assert not seen[5][1].equals(seen[6][1])


def test_final_clients_equal_server_after_last_sync():
    G, D, state = run_federated(random_clients(3), TINY, fed(W=4, K=2, E=0.67))
    for c in state.clients:
        assert c.params_G.equals(G) and c.params_D.equals(D)
        assert c.params_G.schema() == G.schema()
    for w in range(1, 5):
        assert len(state.selected[w]) == 2


def test_single_client_matches_centralized():
    client = random_client(n_windows=80)
    G, D, _ = run_federated([client], TINY, fed(W=3, K=1, seed=4))
    Gc, Dc = baselines.train_centralized(client, TINY, "lsgan", epochs=3, seed=4)
    assert G.equals(Gc) and D.equals(Dc)
    # with K>1 the final server is the client itself after W epochs
    G2, D2, st = run_federated([client], TINY, fed(W=3, K=3, seed=4))
    assert G2.equals(Gc) and st.clients[0].params_G.equals(Gc)


def test_deterministic_and_order_independent():
    clients = random_clients(3)
    a = run_federated(clients, TINY, fed(W=2, K=2, E=0.67, seed=3))
    b = run_federated(list(reversed(clients)), TINY, fed(W=2, K=2, E=0.67, seed=3))
    assert a[0].equals(b[0]) and a[1].equals(b[1])
    assert [(r.epoch, r.client_id, r.loss_d) for r in a[2].history] == \
           [(r.epoch, r.client_id, r.loss_d) for r in b[2].history]


def test_parallel_workers_bit_equal_sequential():
    clients = random_clients(3)
    seq = run_federated(clients, TINY, fed(W=2, K=2, workers=1, seed=2))
    par = run_federated(clients, TINY, fed(W=2, K=2, workers=3, seed=2))
    assert seq[0].equals(par[0]) and seq[1].equals(par[1])


def test_training_error_names_client():
    clients = random_clients(2)
    bad = ClientDataset(1, clients[1].train[:10], clients[1].test, clients[1].stats,
                        clients[1].label, "short")
    with pytest.raises(ValueError, match="client 1"):
        run_federated([clients[0], bad], TINY, fed())
    with pytest.raises(ValueError):
        run_federated([clients[0], clients[0]], TINY, fed())


def test_privacy_witness():
    clients = random_clients(2)
    log = []
    transport = recording_transport()
    run_federated([SpyClient(c, log) for c in clients], TINY, fed(W=4, K=2), transport=transport)
    assert privacy_violations(clients, log, transport) == []
    assert len(transport.sent) == 4


def test_history_csv_roundtrip(tmp_path):
    _, _, state = run_federated(random_clients(2), TINY, fed(W=2, K=2))
    path = tmp_path / "history.csv"
    federation.write_history_csv(path, state)
    assert path.read_text().splitlines()[0] == "epoch,client_id,L_D,L_G,synced"
    assert federation.read_history_csv(path) == state.history
    assert len(state.history) == 4
    assert state.mean_loss_by_epoch().shape == (2, 2)


def test_checkpoints_written_at_syncs(tmp_path):
    run_federated(random_clients(1), TINY, fed(W=4, K=2),
                  on_sync=federation.checkpoint_writer(tmp_path, TINY))
    names = sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
    assert names == ["sync_000002.flgc", "sync_000004.flgc"]
