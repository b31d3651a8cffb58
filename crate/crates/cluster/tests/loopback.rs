use std::io::{BufReader, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use bm_cluster::wire::{decode, read_frame, write_frame, Frame, MsgType, NodeStatus};
use bm_cluster::{
    single_process_match, Backend, ClientSession, ClusterClient, ClusterConfig, ClusterError, LocalCluster,
    ShardOutcome, Timeouts, WireError,
};
use bm_core::fvec::gen_dataset;

fn exact_config(shard_ms: u64) -> ClusterConfig {
    ClusterConfig {
        slots: 256,
        m: 32,
        n_in: 4,
        shards: 3,
        shard_capacity: 64,
        backend: Backend::Exact,
        timeouts: Timeouts {
            shard_ms,
            ..Timeouts::default()
        },
        ..ClusterConfig::default()
    }
}

fn ckks_config() -> ClusterConfig {
    ClusterConfig {
        slots: 512,
        m: 32,
        n_in: 4,
        shards: 3,
        shard_capacity: 64,
        backend: Backend::Ckks,
        insecure_test_only: true,
        ..ClusterConfig::default()
    }
}

fn ready_cluster(config: &ClusterConfig, seed: u64) -> (LocalCluster, ClientSession, ClusterClient) {
    let cluster = LocalCluster::start(config, None).unwrap();
    let session = ClientSession::generate(config, Some(seed)).unwrap();
    let client = ClusterClient::connect(&cluster.main_addr(), config).unwrap();
    client.upload_keys(session.upload()).unwrap();
    (cluster, session, client)
}

#[test]
fn routes_to_shard_and_local_index() {
    let config = ClusterConfig {
        backend: Backend::Exact,
        ..ClusterConfig::default()
    };
    let (cluster, session, client) = ready_cluster(&config, 1);
    let f = gen_dataset(1, 128, 4).unwrap().row_f64(0);
    client.enroll(2050, session.encrypt_enrollee(&f).unwrap()).unwrap();
    assert!(cluster.shards[1].store().is_occupied(2));
    assert_eq!(cluster.shards[0].store().len() + cluster.shards[2].store().len(), 0);
    let err = client.enroll(6144, session.encrypt_enrollee(&f).unwrap()).unwrap_err();
    assert!(matches!(err, ClusterError::CapacityExceeded { index: 6144, capacity: 6144 }));
    let err = client.enroll(2050, session.encrypt_enrollee(&f).unwrap()).unwrap_err();
    assert!(matches!(err, ClusterError::SlotOccupied(2050)));
}

#[test]
fn status_and_key_rejection() {
    let config = exact_config(2_000);
    let cluster = LocalCluster::start(&config, None).unwrap();
    let client = ClusterClient::connect(&cluster.main_addr(), &config).unwrap();
    let status = client.status().unwrap();
    assert!(!status.keys_loaded && status.shards.iter().all(|s| s.reachable && !s.ready));
    let session = ClientSession::generate(&config, Some(2)).unwrap();
    let f = gen_dataset(1, 32, 1).unwrap().row_f64(0);
    assert!(matches!(
        client.enroll(0, session.encrypt_enrollee(&f).unwrap()),
        Err(ClusterError::NotReady)
    ));

    let mut bad = session.upload().clone();
    bad.digest[0] ^= 1;
    assert!(matches!(client.upload_keys(&bad), Err(ClusterError::KeyRejected)));
    let other = ClusterConfig {
        scale_bits: 30,
        ..config.clone()
    };
    let foreign = ClientSession::generate(&other, None).unwrap();
    assert!(matches!(client.upload_keys(foreign.upload()), Err(ClusterError::KeyRejected)));

    client.upload_keys(session.upload()).unwrap();
    let status = client.status().unwrap();
    assert!(status.all_ready());
    assert_eq!(status.shards.len(), 3);
}

#[test]
fn unknown_message_keeps_connection() {
    let config = exact_config(2_000);
    let cluster = LocalCluster::start(&config, None).unwrap();
    let mut s = TcpStream::connect(cluster.shard_handles[0].local_addr()).unwrap();
    let mut r = BufReader::new(s.try_clone().unwrap());
    write_frame(&mut s, &Frame { msg_type: 42, request_id: 7, payload: vec![1, 2, 3] }).unwrap();
    let reply = read_frame(&mut r, 1 << 20).unwrap();
    assert_eq!((reply.kind(), reply.request_id), (Some(MsgType::Error), 7));
    assert_eq!(decode::<WireError>(&reply.payload).unwrap(), WireError::UnknownMessage(42));
    write_frame(&mut s, &Frame::new(MsgType::Status, 8, Vec::new())).unwrap();
    let reply = read_frame(&mut r, 1 << 20).unwrap();
    assert_eq!((reply.kind(), reply.request_id), (Some(MsgType::Status), 8));
    assert!(!decode::<NodeStatus>(&reply.payload).unwrap().keys_loaded);
    // A garbled header closes the connection after an ERROR frame.
    s.write_all(b"XXXXgarbage-garbage").unwrap();
    let reply = read_frame(&mut r, 1 << 20).unwrap();
    assert_eq!(reply.kind(), Some(MsgType::Error));
}

#[test]
fn exact_cluster_equals_single_process() {
    let config = exact_config(10_000);
    for seed in 0..10u64 {
        let (_cluster, session, client) = ready_cluster(&config, seed);
        let count = 20 + (seed as usize * 17) % 150;
        let data = gen_dataset(count + 1, 32, 100 + seed).unwrap();
        let enrollees: Vec<(u64, Vec<f64>)> = (0..count)
            .map(|i| (((i * 37 + seed as usize) % 192) as u64, data.row_f64(i)))
            .collect::<std::collections::BTreeMap<_, _>>()
            .into_iter()
            .collect();
        for (g, f) in &enrollees {
            client.enroll(*g, session.encrypt_enrollee(f).unwrap()).unwrap();
        }
        let query = data.row_f64(count);
        let reply = client.match_query(session.encrypt_query(&query).unwrap()).unwrap();
        assert!(!reply.partial);
        let cluster_result = session.decide(&reply, 0.9).unwrap();
        let single = single_process_match(&session, &enrollees, &query, 0.9).unwrap();
        assert_eq!(cluster_result.scores.len(), enrollees.len());
        for (g, v) in &single.scores {
            assert_eq!(cluster_result.scores[g].to_bits(), v.to_bits(), "index {g}");
        }
        assert_eq!(cluster_result, single);
    }
}

#[test]
fn ckks_cluster_matches_single_process() {
    let config = ckks_config();
    let (cluster, session, client) = ready_cluster(&config, 11);
    let data = gen_dataset(40, 32, 5).unwrap();
    let enrollees: Vec<(u64, Vec<f64>)> = (0..40).map(|i| ((i * 4) as u64, data.row_f64(i))).collect();
    for (g, f) in &enrollees {
        client.enroll(*g, session.encrypt_enrollee(f).unwrap()).unwrap();
    }
    assert_eq!(cluster.shards.iter().map(|s| s.store().len()).sum::<usize>(), 40);
    for probe in [3usize, 17, 31] {
        let query = data.row_f64(probe);
        let reply = client.match_query(session.encrypt_query(&query).unwrap()).unwrap();
        let remote = session.decide(&reply, 0.9).unwrap();
        let single = single_process_match(&session, &enrollees, &query, 0.9).unwrap();
        assert_eq!(remote.best_index, Some(probe * 4));
        assert_eq!(remote.best_index, single.best_index);
        assert!(remote.accepted);
        let rank = |r: &bm_core::pipeline::MatchResult| {
            let mut v: Vec<_> = r.scores.iter().map(|(g, s)| (*g, *s)).collect();
            v.sort_by(|a, b| b.1.total_cmp(&a.1));
            v.into_iter().map(|(g, _)| g).collect::<Vec<_>>()
        };
        assert_eq!(rank(&remote), rank(&single));
        for (g, v) in &single.scores {
            assert!((remote.scores[g] - v).abs() <= 1e-6, "index {g}");
        }
    }
}

#[test]
fn self_match_and_negative_query() {
    let config = exact_config(10_000);
    let (_cluster, session, client) = ready_cluster(&config, 3);
    let empty = session
        .decide(&client.match_query(session.encrypt_query(&gen_dataset(1, 32, 0).unwrap().row_f64(0)).unwrap()).unwrap(), 0.5)
        .unwrap();
    assert_eq!((empty.best_index, empty.accepted), (None, false));

    let config = ClusterConfig {
        m: 64,
        slots: 512,
        ..exact_config(10_000)
    };
    let (_cluster, session, client) = ready_cluster(&config, 3);
    let data = gen_dataset(101, 64, 77).unwrap();
    for i in 0..100 {
        client.enroll(i as u64, session.encrypt_enrollee(&data.row_f64(i)).unwrap()).unwrap();
    }
    for i in 0..100 {
        let reply = client.match_query(session.encrypt_query(&data.row_f64(i)).unwrap()).unwrap();
        let r = session.decide(&reply, 0.9).unwrap();
        assert_eq!(r.best_index, Some(i));
        assert!(r.accepted);
    }
    let reply = client.match_query(session.encrypt_query(&data.row_f64(100)).unwrap()).unwrap();
    let r = session.decide(&reply, 0.9).unwrap();
    assert!(!r.accepted);
}

#[test]
fn empty_shard_is_reported() {
    let config = exact_config(5_000);
    let (_cluster, session, client) = ready_cluster(&config, 4);
    let data = gen_dataset(3, 32, 9).unwrap();
    client.enroll(1, session.encrypt_enrollee(&data.row_f64(0)).unwrap()).unwrap();
    client.enroll(130, session.encrypt_enrollee(&data.row_f64(1)).unwrap()).unwrap();
    let reply = client.match_query(session.encrypt_query(&data.row_f64(2)).unwrap()).unwrap();
    assert!(!reply.partial);
    let results = reply.shards.iter().filter(|r| matches!(r.outcome, ShardOutcome::Result(_))).count();
    assert_eq!(results, 2);
    assert_eq!(reply.shards[1].outcome, ShardOutcome::Empty);
    let r = session.decide(&reply, 0.0).unwrap();
    assert_eq!(r.scores.keys().copied().collect::<Vec<_>>(), vec![1, 130]);
}

#[test]
fn dead_or_stalled_shard_gives_partial_result() {
    let config = exact_config(400);
    let (mut cluster, session, client) = ready_cluster(&config, 5);
    let data = gen_dataset(7, 32, 13).unwrap();
    for (i, g) in [0u64, 5, 70, 75, 140, 150].into_iter().enumerate() {
        client.enroll(g, session.encrypt_enrollee(&data.row_f64(i)).unwrap()).unwrap();
    }
    let query = session.encrypt_query(&data.row_f64(2)).unwrap();

    cluster.shards[2].set_match_delay(Duration::from_secs(3));
    let start = Instant::now();
    let reply = client.match_query(query.clone()).unwrap();
    assert!(start.elapsed() < Duration::from_secs(2));
    assert!(reply.partial);
    assert_eq!(reply.shards[2].outcome, ShardOutcome::TimedOut);
    assert_eq!(reply.timed_out(), vec![2]);
    let r = session.decide(&reply, 0.9).unwrap();
    assert_eq!(r.scores.keys().copied().collect::<Vec<_>>(), vec![0, 5, 70, 75]);
    assert_eq!(r.best_index, Some(70));
    cluster.shards[2].set_match_delay(Duration::ZERO);

    // Killed while a request is in flight.
    cluster.shards[1].set_match_delay(Duration::from_millis(200));
    let addr = cluster.main_addr();
    let q2 = query.clone();
    let cfg = config.clone();
    let pending = std::thread::spawn(move || ClusterClient::connect(&addr, &cfg).unwrap().match_query(q2).unwrap());
    std::thread::sleep(Duration::from_millis(50));
    cluster.kill_shard(1);
    let reply = pending.join().unwrap();
    assert!(reply.partial);
    assert!(reply.timed_out().contains(&1));

    let start = Instant::now();
    let reply = client.match_query(query).unwrap();
    assert!(start.elapsed() < Duration::from_secs(2));
    assert!(reply.partial);
    assert!(matches!(reply.shards[1].outcome, ShardOutcome::Failed(_) | ShardOutcome::TimedOut));
    let r = session.decide(&reply, 0.9).unwrap();
    assert_eq!(r.scores.keys().copied().collect::<Vec<_>>(), vec![0, 5, 140, 150]);
}

#[test]
fn server_files_hold_no_secret_key() {
    let config = ckks_config();
    let root = tempfile::tempdir().unwrap();
    let cluster = LocalCluster::start(&config, Some(root.path())).unwrap();
    let session = ClientSession::generate(&config, Some(8)).unwrap();
    let client = ClusterClient::connect(&cluster.main_addr(), &config).unwrap();
    client.upload_keys(session.upload()).unwrap();
    let data = gen_dataset(6, 32, 3).unwrap();
    for i in 0..6 {
        client.enroll(i as u64 * 30, session.encrypt_enrollee(&data.row_f64(i)).unwrap()).unwrap();
    }

    let client_dir = tempfile::tempdir().unwrap();
    session.save(client_dir.path()).unwrap();
    let mut needle = b"BMK1".to_vec();
    needle.extend_from_slice(&session.digest());
    needle.push(1);
    let secret = std::fs::read(client_dir.path().join("secret.key")).unwrap();
    assert!(secret.starts_with(&needle), "client secret file carries the marker");

    let files = cluster.server_files();
    assert!(files.len() >= 7, "{files:?}");
    for f in files {
        let bytes = std::fs::read(&f).unwrap();
        assert!(!bytes.windows(needle.len()).any(|w| w == needle.as_slice()), "{}", f.display());
        assert!(!bytes.windows(secret.len()).any(|w| w == secret.as_slice()));
    }
}

#[test]
fn shard_reloads_store_after_restart() {
    let config = exact_config(5_000);
    let root = tempfile::tempdir().unwrap();
    let session = ClientSession::generate(&config, Some(9)).unwrap();
    let data = gen_dataset(9, 32, 21).unwrap();
    let query = session.encrypt_query(&data.row_f64(4)).unwrap();
    let before = {
        let cluster = LocalCluster::start(&config, Some(root.path())).unwrap();
        let client = ClusterClient::connect(&cluster.main_addr(), &config).unwrap();
        client.upload_keys(session.upload()).unwrap();
        for i in 0..9 {
            client.enroll(i as u64 * 20, session.encrypt_enrollee(&data.row_f64(i)).unwrap()).unwrap();
        }
        session.decide(&client.match_query(query.clone()).unwrap(), 0.9).unwrap()
    };
    let cluster = LocalCluster::start(&config, Some(root.path())).unwrap();
    let client = ClusterClient::connect(&cluster.main_addr(), &config).unwrap();
    assert!(client.status().unwrap().all_ready());
    let after = session.decide(&client.match_query(query).unwrap(), 0.9).unwrap();
    assert_eq!(after, before);
    assert_eq!(after.best_index, Some(80));
}
