//! Benchmark harness: stage timings of split matching over several `N_in`
//! values and of the whole-vector baseline, on `K` in-process shards.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use bm_cluster::session::Crypto;
use bm_cluster::{Backend, ClusterConfig};
use bm_core::ckks::{CkksClient, CkksContext, CkksEvaluator, KeySet};
use bm_core::cost::{
    calibrate, optimal_nin, predict_from_counts, total_f, Geometry, TimingTable,
};
use bm_core::fvec::FeatureSet;
use bm_core::he::{Ciphertext, Evaluator, ExactEngine, Op, SchemeParams};
use bm_core::pipeline::{
    conventional_rotation_steps, decide, decrypt_all, extract_scores, make_masks, match_query,
    match_query_conventional, pack_set_plain, prepare_query_vector, rotation_steps,
    EnrollmentStore, MaskSet, PackingLayout, PipelineError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::report::{BenchReport, BenchRow, Stat};
use crate::CliError;

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub reps: usize,
    /// Exact backend only: matching time is modeled from operation counts
    /// with this table and the client-side stages are reported as zero,
    /// which makes the report deterministic.
    pub timing: Option<TimingTable>,
    /// Table behind the predicted columns; falls back to `timing`.
    pub predictor: Option<TimingTable>,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            reps: 10,
            timing: None,
            predictor: None,
            seed: 1,
        }
    }
}

impl BenchOptions {
    fn predictor(&self) -> Option<&TimingTable> {
        self.predictor.as_ref().or(self.timing.as_ref())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Split,
    Conventional,
}

struct Engines {
    eval: Arc<dyn Evaluator>,
    crypto: Arc<dyn Crypto>,
    params: SchemeParams,
    digest: [u8; 32],
}

fn engines(config: &ClusterConfig, steps: &[usize], seed: u64) -> Result<Engines, CliError> {
    let params = config.scheme_params();
    let digest = config.params_digest();
    match config.backend {
        Backend::Exact => {
            let e = Arc::new(ExactEngine::new(params.clone())?);
            Ok(Engines {
                eval: e.clone(),
                crypto: e,
                params,
                digest,
            })
        }
        Backend::Ckks => {
            let ctx = Arc::new(CkksContext::new(config.ring())?);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let keys = KeySet::generate(&ctx, steps, &mut rng);
            let client = CkksClient::from_key_set(ctx.clone(), &keys).with_seed(seed.wrapping_add(1));
            Ok(Engines {
                eval: Arc::new(CkksEvaluator::new(ctx, keys.evaluation)),
                crypto: Arc::new(client),
                params,
                digest,
            })
        }
    }
}

struct Shard {
    offset: usize,
    store: EnrollmentStore,
}

/// Rows `k*per .. (k+1)*per` go to shard `k`, filled set by set. Sets are
/// packed and encrypted client-side in one go, which yields the same
/// store as enrolling one vector at a time.
fn build_shards(
    layout: &PackingLayout,
    data: &FeatureSet,
    shards: usize,
    crypto: &dyn Crypto,
    level: usize,
) -> Result<Vec<Shard>, CliError> {
    let per = data.len().div_ceil(shards);
    let b = layout.capacity();
    let mut out = Vec::with_capacity(shards);
    for k in 0..shards {
        let lo = (k * per).min(data.len());
        let hi = ((k + 1) * per).min(data.len());
        let mut store = EnrollmentStore::new(*layout, level, per.div_ceil(b).max(1) * b);
        let rows: Vec<usize> = (lo..hi).collect();
        for (t, chunk) in rows.chunks(b).enumerate() {
            let vecs: Vec<Vec<f64>> = chunk.iter().map(|&i| data.row_f64(i)).collect();
            let members: Vec<(usize, &[f64])> = vecs.iter().enumerate().map(|(j, v)| (j, v.as_slice())).collect();
            let cts = pack_set_plain(layout, &members)?
                .iter()
                .map(|p| crypto.encrypt_at_level(p, level))
                .collect::<Result<Vec<_>, _>>()?;
            let blocks: Vec<usize> = (0..chunk.len()).collect();
            store.load_set(t, cts, &blocks)?;
        }
        out.push(Shard { offset: lo, store });
    }
    Ok(out)
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn roundtrip(ct: &Ciphertext, e: &Engines) -> Result<Ciphertext, CliError> {
    let bytes = ct.to_bytes(&e.digest);
    Ok(Ciphertext::from_bytes(&bytes, &e.params, &e.digest)?)
}

/// Query rows drawn with replacement from the dataset.
fn query_rows(n: usize, reps: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5155_4552_59);
    (0..reps).map(|_| rng.gen_range(0..n)).collect()
}

struct RunOutput {
    row: BenchRow,
    /// Decrypted global scores of every query, in query order.
    scores: Vec<BTreeMap<usize, f64>>,
}

fn check_input(config: &ClusterConfig, data: &FeatureSet) -> Result<(), CliError> {
    if data.is_empty() {
        return Err(CliError::Usage("dataset is empty".into()));
    }
    if data.dim != config.m {
        return Err(PipelineError::DimMismatch {
            got: data.dim,
            expected: config.m,
        }
        .into());
    }
    if config.depth < 3 {
        return Err(CliError::Usage("the matching pipeline needs depth >= 3".into()));
    }
    Ok(())
}

fn run(
    config: &ClusterConfig,
    n_in: usize,
    mode: Mode,
    data: &FeatureSet,
    opts: &BenchOptions,
) -> Result<RunOutput, CliError> {
    let mut config = config.clone();
    config.n_in = n_in;
    let layout = PackingLayout::new(config.slots, config.m, n_in)?;
    let shards = config.shards.max(1);
    let per = data.len().div_ceil(shards);
    let sets_per_shard = per.div_ceil(layout.capacity());
    let steps = match mode {
        Mode::Split => rotation_steps(&layout, sets_per_shard, false),
        Mode::Conventional => conventional_rotation_steps(&layout, sets_per_shard),
    };
    let eng = engines(&config, &steps, opts.seed)?;
    let d = config.depth;
    let stores = build_shards(&layout, data, shards, eng.crypto.as_ref(), d - 1)?;
    let masks: MaskSet = make_masks(&layout);
    let modeled = match (config.backend, &opts.timing) {
        (Backend::Exact, Some(t)) => Some(t),
        _ => None,
    };
    let reps = opts.reps.max(1);
    let queries = query_rows(data.len(), reps, opts.seed);

    // Untimed warm-up: mask plaintexts are encoded on first use and cached,
    // a one-time setup cost that would otherwise land on the first query.
    if modeled.is_none() {
        let qv = prepare_query_vector(&data.row_f64(queries[0]), &layout)?;
        let ct = match mode {
            Mode::Split => eng.crypto.encrypt(&qv)?,
            Mode::Conventional => eng.crypto.encrypt_at_level(&qv, d - 1)?,
        };
        let store = &stores[0].store;
        match mode {
            Mode::Split => match_query(eng.eval.as_ref(), store, &masks, &ct)?,
            Mode::Conventional => match_query_conventional(eng.eval.as_ref(), store, &masks, &ct)?,
        };
    }

    let mut enc = Vec::with_capacity(reps);
    let mut dec = Vec::with_capacity(reps);
    let mut matching = Vec::with_capacity(reps);
    let mut network = Vec::with_capacity(reps);
    let mut rotations = 0;
    let mut predicted = None;
    let mut hits = 0usize;
    let mut all_scores = Vec::with_capacity(reps);

    for &q in &queries {
        let qv = prepare_query_vector(&data.row_f64(q), &layout)?;
        let t = Instant::now();
        let ct = match mode {
            Mode::Split => eng.crypto.encrypt(&qv)?,
            Mode::Conventional => eng.crypto.encrypt_at_level(&qv, d - 1)?,
        };
        let enc_ms = ms_since(t);

        let t = Instant::now();
        let ct = roundtrip(&ct, &eng)?;
        let mut net_ms = ms_since(t);

        let mut match_ms: f64 = 0.0;
        let mut modeled_ms: f64 = 0.0;
        let mut pred_ms: f64 = 0.0;
        let mut rot = 0;
        let mut outputs = Vec::with_capacity(shards);
        for shard in &stores {
            let before = eng.eval.counters().snapshot();
            let t = Instant::now();
            let out = match mode {
                Mode::Split => match_query(eng.eval.as_ref(), &shard.store, &masks, &ct)?,
                Mode::Conventional => match_query_conventional(eng.eval.as_ref(), &shard.store, &masks, &ct)?,
            };
            match_ms = match_ms.max(ms_since(t));
            let counts = eng.eval.counters().snapshot().since(&before);
            rot += counts.total(Op::Rot);
            if let Some(tt) = modeled {
                modeled_ms = modeled_ms.max(predict_from_counts(&counts, tt));
            }
            if let Some(tt) = opts.predictor() {
                pred_ms = pred_ms.max(predict_from_counts(&counts, tt));
            }
            let t = Instant::now();
            let packed = out
                .packed
                .iter()
                .map(|p| roundtrip(p, &eng))
                .collect::<Result<Vec<_>, _>>()?;
            net_ms += ms_since(t);
            outputs.push((shard, out.sets, packed));
        }
        rotations = rot;
        predicted = opts.predictor().map(|_| pred_ms);

        let t = Instant::now();
        let mut scores = BTreeMap::new();
        for (shard, sets, packed) in &outputs {
            let plain = decrypt_all(eng.crypto.as_ref(), packed)?;
            let occupancy = |t: usize| shard.store.occupancy(t).to_vec();
            for (local, v) in extract_scores(&plain, &layout, sets, &occupancy) {
                scores.insert(shard.offset + local, v);
            }
        }
        let result = decide(scores, 0.0);
        let dec_ms = ms_since(t);
        if result.best_index == Some(q) {
            hits += 1;
        }
        all_scores.push(result.scores);

        if modeled.is_some() {
            enc.push(0.0);
            dec.push(0.0);
            network.push(0.0);
            matching.push(modeled_ms);
        } else {
            enc.push(enc_ms);
            dec.push(dec_ms);
            network.push(net_ms);
            matching.push(match_ms);
        }
    }

    let total: Vec<f64> = (0..reps).map(|i| enc[i] + dec[i] + network[i] + matching[i]).collect();
    let model_ms = match (mode, opts.predictor()) {
        (Mode::Split, Some(tt)) => total_f(tt, &shard_geometry(&config, data.len()), n_in)
            .ok()
            .map(|b| b.total_ms),
        _ => None,
    };
    Ok(RunOutput {
        row: BenchRow {
            label: match mode {
                Mode::Split => n_in.to_string(),
                Mode::Conventional => "Base".into(),
            },
            n_in,
            reps,
            encryption_ms: Stat::from_samples(&enc),
            decryption_ms: Stat::from_samples(&dec),
            matching_ms: Stat::from_samples(&matching),
            network_ms: Stat::from_samples(&network),
            total_ms: Stat::from_samples(&total),
            rotations,
            rank1: hits as f64 / reps as f64,
            predicted_ms: predicted,
            model_ms,
        },
        scores: all_scores,
    })
}

/// One shard's share of the database; shards run in parallel, so this is
/// the geometry that bounds matching time.
fn shard_geometry(config: &ClusterConfig, rows: usize) -> Geometry {
    Geometry::new(config.m, rows.div_ceil(config.shards.max(1)), config.slots)
}

fn empty_report(config: &ClusterConfig, data: &FeatureSet, opts: &BenchOptions) -> BenchReport {
    let backend = match (config.backend, &opts.timing) {
        (Backend::Exact, Some(_)) => "exact (modeled)",
        (Backend::Exact, None) => "exact",
        (Backend::Ckks, _) => "ckks",
    };
    let mut notes = vec![
        "Matching is the slowest shard per query; shards are timed one after another.".to_string(),
        "Network is ciphertext serialization and parsing in process, without a socket.".to_string(),
    ];
    if opts.timing.is_none() || config.backend == Backend::Ckks {
        notes.push("One untimed warm-up query per column encodes and caches the mask plaintexts.".into());
    }
    BenchReport {
        slots: config.slots,
        m: config.m,
        r: data.len(),
        backend: backend.into(),
        shards: config.shards.max(1),
        rows: Vec::new(),
        predicted_nin: None,
        notes,
    }
}

/// Split matching for every `N_in` in `n_ins`.
pub fn bench_match(
    config: &ClusterConfig,
    data: &FeatureSet,
    n_ins: &[usize],
    opts: &BenchOptions,
) -> Result<BenchReport, CliError> {
    check_input(config, data)?;
    let mut report = empty_report(config, data, opts);
    for &n in n_ins {
        log::info!("bench-match: N_in = {n}");
        report.rows.push(run(config, n, Mode::Split, data, opts)?.row);
    }
    let modeled: Vec<usize> = report.rows.iter().filter(|r| r.model_ms.is_some()).map(|r| r.n_in).collect();
    if let Some(tt) = opts.predictor() {
        report.predicted_nin = optimal_nin(tt, &shard_geometry(config, data.len()), &modeled).ok();
    }
    Ok(report)
}

/// The whole-vector baseline next to split matching at `config.n_in`, with
/// their matching-time and rotation ratios and the largest score gap.
pub fn bench_baseline(
    config: &ClusterConfig,
    data: &FeatureSet,
    opts: &BenchOptions,
) -> Result<BenchReport, CliError> {
    check_input(config, data)?;
    let mut report = empty_report(config, data, opts);
    let split = run(config, config.n_in, Mode::Split, data, opts)?;
    let base = run(config, 1, Mode::Conventional, data, opts)?;
    let gap = split
        .scores
        .iter()
        .zip(&base.scores)
        .flat_map(|(a, b)| {
            a.iter()
                .map(move |(g, v)| b.get(g).map_or(f64::INFINITY, |w| (v - w).abs()))
        })
        .fold(0.0, f64::max);
    let same_keys = split
        .scores
        .iter()
        .zip(&base.scores)
        .all(|(a, b)| a.keys().eq(b.keys()));
    report.notes.push(format!(
        "Base / split matching time: {:.2}x",
        base.row.matching_ms.mean / split.row.matching_ms.mean
    ));
    report.notes.push(format!(
        "Base / split rotations per query: {} / {} = {:.2}",
        base.row.rotations,
        split.row.rotations,
        base.row.rotations as f64 / split.row.rotations.max(1) as f64
    ));
    report.notes.push(format!(
        "Largest |score difference| Base vs split: {gap:.3e}{}",
        if same_keys { "" } else { " (score sets differ)" }
    ));
    report.rows.push(split.row);
    report.rows.push(base.row);
    Ok(report)
}

/// Per-operation timings on the configured backend at levels 1 to 3.
pub fn bench_ops(config: &ClusterConfig, reps: usize, seed: u64) -> Result<TimingTable, CliError> {
    let steps: Vec<usize> = (0..config.slots.trailing_zeros()).map(|k| 1 << k).collect();
    let eng = engines(config, &steps, seed)?;
    Ok(calibrate(eng.eval.as_ref(), eng.crypto.as_ref(), reps, seed)?)
}
