//! On-disk shard state: uploaded keys, an append-log of set ciphertexts
//! and an occupancy sidecar.
//!
//! Log record: `set u32 | blocks u32 | occupancy bytes | count u32 | (len u32 | BMC1 blob) * count`.
//! The last record for a set wins; a truncated tail record is ignored.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use bm_core::he::{Ciphertext, SchemeParams};
use bm_core::pipeline::{EnrollmentStore, PackingLayout};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::ClusterError;
use crate::wire::{decode, encode, KeysUpload};

const KEYS_FILE: &str = "keys.bin";
const LOG_FILE: &str = "store.log";
const OCCUPANCY_FILE: &str = "occupancy.bin";
const OCCUPANCY_MAGIC: &[u8; 4] = b"BMO1";

/// Rewrite the log once it holds this many times the live records.
const COMPACT_RATIO: u64 = 4;

#[derive(Debug)]
pub struct ShardFiles {
    dir: PathBuf,
    log_records: u64,
}

impl ShardFiles {
    pub fn open(dir: &Path) -> Result<Self, ClusterError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            log_records: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_keys(&self, upload: &KeysUpload) -> Result<(), ClusterError> {
        write_atomic(&self.dir.join(KEYS_FILE), &encode(upload))
    }

    pub fn read_keys(&self) -> Result<Option<KeysUpload>, ClusterError> {
        match fs::read(self.dir.join(KEYS_FILE)) {
            Ok(b) => decode(&b).map(Some).map_err(|e| ClusterError::Corrupt(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Appends the current contents of set `t`, then refreshes the sidecar.
    pub fn record_set(
        &mut self,
        store: &EnrollmentStore,
        t: usize,
        digest: &[u8; 32],
    ) -> Result<(), ClusterError> {
        let live = store.occupied_sets().len() as u64;
        if self.log_records >= COMPACT_RATIO * live.max(1) {
            self.compact(store, digest)?;
        } else {
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.dir.join(LOG_FILE))?;
            let mut w = BufWriter::new(f);
            write_record(&mut w, store, t, digest)?;
            w.flush()?;
            self.log_records += 1;
        }
        write_atomic(&self.dir.join(OCCUPANCY_FILE), &occupancy_bytes(store))
    }

    fn compact(&mut self, store: &EnrollmentStore, digest: &[u8; 32]) -> Result<(), ClusterError> {
        let tmp = self.dir.join(format!("{LOG_FILE}.tmp"));
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            for t in store.occupied_sets() {
                write_record(&mut w, store, t, digest)?;
            }
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(LOG_FILE))?;
        self.log_records = store.occupied_sets().len() as u64;
        Ok(())
    }

    /// Rebuilds the store from the log; an absent log gives an empty store.
    pub fn load_store(
        &mut self,
        layout: PackingLayout,
        level: usize,
        capacity: usize,
        params: &SchemeParams,
        digest: &[u8; 32],
    ) -> Result<EnrollmentStore, ClusterError> {
        let empty = EnrollmentStore::new(layout, level, capacity);
        let bytes = match fs::read(self.dir.join(LOG_FILE)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(empty),
            Err(e) => return Err(e.into()),
        };
        let n_sets = empty.set_count();
        let mut sets: Vec<Option<Vec<Ciphertext>>> = vec![None; n_sets];
        let mut occupancy = vec![vec![false; layout.capacity()]; n_sets];
        let mut r = bytes.as_slice();
        let mut records = 0;
        while !r.is_empty() {
            let Some((t, occ, blobs)) = read_record(&mut r)? else {
                log::warn!("ignoring truncated record at the end of {}", self.dir.display());
                break;
            };
            if t >= n_sets || occ.len() != layout.capacity() {
                return Err(ClusterError::Corrupt(format!("record for set {t} does not fit the layout")));
            }
            let cts = blobs
                .iter()
                .map(|b| Ciphertext::from_bytes(b, params, digest))
                .collect::<Result<Vec<_>, _>>()?;
            sets[t] = Some(cts);
            occupancy[t] = occ;
            records += 1;
        }
        self.log_records = records;
        if let Ok(side) = fs::read(self.dir.join(OCCUPANCY_FILE)) {
            if parse_occupancy(&side).as_ref() != Some(&occupancy) {
                log::warn!("occupancy sidecar disagrees with the log; using the log");
            }
        }
        Ok(EnrollmentStore::from_parts(layout, level, capacity, sets, occupancy)?)
    }

    /// Every file this shard has written.
    pub fn files(&self) -> Vec<PathBuf> {
        [KEYS_FILE, LOG_FILE, OCCUPANCY_FILE]
            .iter()
            .map(|f| self.dir.join(f))
            .filter(|p| p.exists())
            .collect()
    }
}

fn write_record<W: Write>(
    w: &mut W,
    store: &EnrollmentStore,
    t: usize,
    digest: &[u8; 32],
) -> Result<(), ClusterError> {
    let cts = store
        .set(t)
        .ok_or_else(|| ClusterError::Corrupt(format!("set {t} is empty")))?;
    let occ = store.occupancy(t);
    w.write_u32::<LittleEndian>(t as u32)?;
    w.write_u32::<LittleEndian>(occ.len() as u32)?;
    w.write_all(&occ.iter().map(|&b| b as u8).collect::<Vec<_>>())?;
    w.write_u32::<LittleEndian>(cts.len() as u32)?;
    for ct in cts {
        let b = ct.to_bytes(digest);
        w.write_u32::<LittleEndian>(b.len() as u32)?;
        w.write_all(&b)?;
    }
    Ok(())
}

type Record = (usize, Vec<bool>, Vec<Vec<u8>>);

fn read_record(r: &mut &[u8]) -> Result<Option<Record>, ClusterError> {
    fn inner(r: &mut &[u8]) -> std::io::Result<Record> {
        let t = r.read_u32::<LittleEndian>()? as usize;
        let blocks = r.read_u32::<LittleEndian>()? as usize;
        let mut occ = vec![0u8; blocks];
        r.read_exact(&mut occ)?;
        let count = r.read_u32::<LittleEndian>()? as usize;
        let mut blobs = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut b = vec![0u8; len];
            r.read_exact(&mut b)?;
            blobs.push(b);
        }
        Ok((t, occ.into_iter().map(|b| b != 0).collect(), blobs))
    }
    match inner(r) {
        Ok(rec) => Ok(Some(rec)),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn occupancy_bytes(store: &EnrollmentStore) -> Vec<u8> {
    let b = store.layout().capacity();
    let mut out = Vec::new();
    out.extend_from_slice(OCCUPANCY_MAGIC);
    out.extend_from_slice(&(store.set_count() as u32).to_le_bytes());
    out.extend_from_slice(&(b as u32).to_le_bytes());
    let mut bits = vec![0u8; (store.set_count() * b).div_ceil(8)];
    for t in 0..store.set_count() {
        for (k, &o) in store.occupancy(t).iter().enumerate() {
            if o {
                let i = t * b + k;
                bits[i / 8] |= 1 << (i % 8);
            }
        }
    }
    out.extend_from_slice(&bits);
    out
}

fn parse_occupancy(bytes: &[u8]) -> Option<Vec<Vec<bool>>> {
    if bytes.len() < 12 || &bytes[..4] != OCCUPANCY_MAGIC {
        return None;
    }
    let sets = u32::from_le_bytes(bytes[4..8].try_into().ok()?) as usize;
    let b = u32::from_le_bytes(bytes[8..12].try_into().ok()?) as usize;
    let bits = &bytes[12..];
    if bits.len() != (sets * b).div_ceil(8) {
        return None;
    }
    Some(
        (0..sets)
            .map(|t| (0..b).map(|k| bits[(t * b + k) / 8] >> ((t * b + k) % 8) & 1 == 1).collect())
            .collect(),
    )
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ClusterError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
