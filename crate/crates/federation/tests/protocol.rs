mod common;

use std::time::Duration;

use common::{blobs, shards};
use privml_core::data::Dataset;
use privml_core::rng::seeded;
use privml_federation::wire::unpack_chunk;
use privml_federation::*;

fn m(b: u8) -> Measurement {
    Measurement([b; 32])
}

fn sessions(whitelisted: Measurement) -> (Channel, Channel) {
    let hs = ConsumerHandshake::new(whitelisted, [5u8; 32]);
    let (p, reply) = provider_accept(&[whitelisted], &hs.attest_frame(), [6u8; 32]).unwrap();
    (hs.finish(&reply).unwrap(), p)
}

fn provider_cfg(id: u32, chunk: usize) -> ProviderConfig {
    ProviderConfig {
        id,
        whitelist: vec![m(1)],
        chunk_examples: chunk,
        seed: 3,
    }
}

#[test]
fn handshake_agrees_on_key() {
    let (c, p) = sessions(m(1));
    assert_eq!(c.session_key(), p.session_key());
    let (c2, _) = sessions(m(2));
    assert_ne!(c.session_key(), c2.session_key());
}

#[test]
fn every_transcript_bit_flip_fails() {
    let hs = ConsumerHandshake::new(m(1), [5u8; 32]);
    let attest = hs.attest_frame();
    let (_, reply) = provider_accept(&[m(1)], &attest, [6u8; 32]).unwrap();

    for bit in 0..attest.len() * 8 {
        let mut f = attest.clone();
        f[bit / 8] ^= 1 << (bit % 8);
        assert!(provider_accept(&[m(1)], &f, [6u8; 32]).is_err(), "ATTEST bit {bit} accepted");
    }
    for bit in 0..reply.len() * 8 {
        let mut f = reply.clone();
        f[bit / 8] ^= 1 << (bit % 8);
        let hs = ConsumerHandshake::new(m(1), [5u8; 32]);
        assert!(hs.finish(&f).is_err(), "ATTEST_OK bit {bit} accepted");
    }
}

#[test]
fn rejected_consumer_never_gets_a_chunk() {
    let (c, p) = loopback_pair();
    let handle = spawn_provider(provider_cfg(0, 4), blobs(16, 3, 0), p);
    let log = WireLog::new();
    let layout = ChunkLayout {
        chunk_examples: 4,
        dim: 3,
        classes: 2,
    };
    let err = ConsumerSession::connect(0, Box::new(Capture::new(c, 0, log.clone())), m(2), [1u8; 32], layout, Duration::from_secs(5))
        .unwrap_err();
    assert!(matches!(err, Error::Rejected(_)), "{err}");
    let report = handle.join().unwrap();
    assert_eq!(report.chunks_served, 0);
    assert!(matches!(report.outcome, ProviderOutcome::Refused(_)));
    let types: Vec<MsgType> = log.records().iter().map(|r| r.msg_type).collect();
    assert_eq!(types, vec![MsgType::Attest, MsgType::Done]);
}

#[test]
fn shard_of_eight_is_covered_by_two_chunks() {
    let shard = blobs(8, 3, 1);
    let (mut c, p) = sessions(m(1));
    let mut s = ProviderSession::new(&provider_cfg(0, 4), p, &shard).unwrap();
    let mut got = Vec::new();
    for it in 1..=2 {
        let Step::Respond(f) = s.handle(&shard, &c.seal(MsgType::ChunkReq, it, &[])) else {
            panic!("no response")
        };
        let msg = c.open(&f).unwrap();
        assert_eq!((msg.msg_type, msg.iteration), (MsgType::ChunkResp, it));
        let chunk = unpack_chunk(&msg.payload, 3, 2).unwrap();
        assert_eq!(chunk.len(), 4);
        for i in 0..4 {
            let (x, y) = chunk.example(i);
            got.push((x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y));
        }
    }
    let mut want: Vec<_> = (0..8)
        .map(|i| {
            let (x, y) = shard.example(i);
            (x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y)
        })
        .collect();
    got.sort();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn chunk_responses_have_identical_length() {
    let mut lens = Vec::new();
    for (seed, scale) in [(1u64, 1.0f32), (2, 1e6)] {
        let base = blobs(10, 5, seed);
        let feats: Vec<f32> = base.features().iter().map(|x| x * scale).collect();
        let shard = Dataset::new(5, 2, feats, base.labels().to_vec()).unwrap();
        let (mut c, p) = sessions(m(1));
        let mut s = ProviderSession::new(&provider_cfg(0, 3), p, &shard).unwrap();
        for it in 1..=5 {
            let Step::Respond(f) = s.handle(&shard, &c.seal(MsgType::ChunkReq, it, &[])) else {
                panic!("no response")
            };
            lens.push(f.len());
        }
    }
    assert!(lens.iter().all(|&l| l == lens[0]));
    assert_eq!(lens[0], 13 + 1024 + 16);
}

#[test]
fn replayed_request_aborts() {
    let shard = blobs(12, 3, 2);
    let (mut c, p) = sessions(m(1));
    let mut s = ProviderSession::new(&provider_cfg(0, 2), p, &shard).unwrap();
    let mut third = Vec::new();
    for it in 1..=3 {
        let f = c.seal(MsgType::ChunkReq, it, &[]);
        assert!(matches!(s.handle(&shard, &f), Step::Respond(_)));
        third = f;
    }
    assert!(matches!(s.handle(&shard, &third), Step::Abort { error: Error::BadTag, .. }));

    // A correctly sealed request that repeats an old iteration.
    let (mut c, p) = sessions(m(1));
    let mut s = ProviderSession::new(&provider_cfg(0, 2), p, &shard).unwrap();
    for it in 1..=3 {
        let Step::Respond(f) = s.handle(&shard, &c.seal(MsgType::ChunkReq, it, &[])) else {
            panic!("no response")
        };
        c.open(&f).unwrap();
    }
    match s.handle(&shard, &c.seal(MsgType::ChunkReq, 3, &[])) {
        Step::Abort { reply: Some(done), error } => {
            assert!(matches!(error, Error::Protocol(_)));
            assert_eq!(c.open(&done).unwrap().msg_type, MsgType::Done);
        }
        other => panic!("expected abort, got {other:?}"),
    }
    assert_eq!(s.served(), 3);
}

#[test]
fn unauthenticated_request_aborts() {
    let shard = blobs(4, 3, 2);
    let (_, p) = sessions(m(1));
    let mut s = ProviderSession::new(&provider_cfg(0, 2), p, &shard).unwrap();
    let mut forged = Header {
        msg_type: MsgType::ChunkReq,
        iteration: 1,
        payload_len: 0,
    }
    .encode()
    .to_vec();
    forged.extend_from_slice(&[0u8; 16]);
    assert!(matches!(s.handle(&shard, &forged), Step::Abort { .. }));
}

fn connect(links: Vec<(u32, Loopback)>, chunk: usize, dim: usize) -> Vec<ConsumerSession> {
    let layout = ChunkLayout {
        chunk_examples: chunk,
        dim,
        classes: 2,
    };
    links
        .into_iter()
        .map(|(id, t)| ConsumerSession::connect(id, Box::new(t), m(1), [id as u8 + 1; 32], layout, Duration::from_secs(5)).unwrap())
        .collect()
}

#[test]
fn three_providers_make_a_lot_of_twelve() {
    let ds = blobs(60, 3, 4);
    let mut links = Vec::new();
    let mut handles = Vec::new();
    for (id, shard) in shards(&ds, 3) {
        let (c, p) = loopback_pair();
        handles.push(spawn_provider(provider_cfg(id, 4), shard, p));
        links.push((id, c));
    }
    let mut sessions = connect(links, 4, 3);
    let events = EventLog::new();
    let lot = consumer_fetch_round(&mut sessions, 1, Duration::from_secs(5), &mut seeded(1, 0), &events).unwrap();
    assert_eq!(lot.len(), 12);
    let lot2 = consumer_fetch_round(&mut sessions, 2, Duration::from_secs(5), &mut seeded(1, 0), &events).unwrap();
    assert_eq!(lot2.len(), 12);
    for s in sessions {
        s.close().unwrap();
    }
    for h in handles {
        let r = h.join().unwrap();
        assert_eq!((r.chunks_served, r.outcome), (2, ProviderOutcome::Finished));
    }
}

/// Delays every frame it sends after the handshake.
struct Slow<T> {
    inner: T,
    delay: Duration,
    sent: usize,
}

impl<T: Transport> Transport for Slow<T> {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        self.sent += 1;
        if self.sent > 1 {
            std::thread::sleep(self.delay);
        }
        self.inner.send(frame)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>> {
        self.inner.recv(timeout)
    }
}

fn slow_federation(delay: Duration, timeout: f64) -> (Result<TrainOutcome>, Vec<Event>) {
    let ds = blobs(48, 6, 5);
    let mut cfg = common::small_config(36, 4);
    cfg.epochs = 1;
    cfg.timeout_seconds = timeout;
    let measurement = cfg.measurement().unwrap();
    let mut links = Vec::new();
    let mut handles = Vec::new();
    let (train, test) = ds.split_at(36);
    for (id, shard) in shards(&train, 3) {
        let (c, p) = loopback_pair();
        let pcfg = ProviderConfig {
            id,
            whitelist: vec![measurement],
            chunk_examples: 4,
            seed: 1,
        };
        if id == 1 {
            handles.push(spawn_provider(pcfg, shard, Slow { inner: p, delay, sent: 0 }));
        } else {
            handles.push(spawn_provider(pcfg, shard, p));
        }
        links.push((id, c));
    }
    let layout = ChunkLayout {
        chunk_examples: 4,
        dim: 6,
        classes: 2,
    };
    let mut sessions: Vec<ConsumerSession> = links
        .into_iter()
        .map(|(id, t)| ConsumerSession::connect(id, Box::new(t), measurement, [9; 32], layout, Duration::from_secs(5)).unwrap())
        .collect();
    let events = EventLog::new();
    let out = train_loop(&cfg, &mut sessions, &test, &events, |_| {});
    drop(sessions);
    for h in handles {
        h.join().unwrap();
    }
    (out, events.snapshot())
}

#[test]
fn delayed_provider_blocks_the_update() {
    let (out, events) = slow_federation(Duration::from_millis(60), 30.0);
    let out = out.unwrap();
    assert_eq!(out.plan.total_steps, 3);
    for it in 1..=3u64 {
        let pos = |e: &Event| events.iter().position(|x| x == e).unwrap();
        let update = pos(&Event::Update { iteration: it, private: true });
        for p in 0..3 {
            assert!(pos(&Event::ChunkReceived { provider: p, iteration: it }) < update);
        }
        // The slow provider arrives last, immediately before the round closes.
        let round = pos(&Event::RoundComplete { iteration: it, lot_size: 12 });
        assert_eq!(pos(&Event::ChunkReceived { provider: 1, iteration: it }) + 1, round);
        assert_eq!(round + 1, update);
    }
}

#[test]
fn provider_timeout_aborts_the_round() {
    let (out, events) = slow_federation(Duration::from_millis(400), 0.1);
    assert!(matches!(out, Err(Error::Timeout { provider: 1, .. })), "{out:?}");
    assert!(!events.iter().any(|e| matches!(e, Event::Update { .. } | Event::RoundComplete { .. })));
}
