use std::collections::BTreeMap;
use std::path::Path;

use bdaheap::analyzer::PageCache;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{empty_report, finish, new_kv, rng, settle, snapshot, snapshot_points, value_bytes};
use crate::config::{CliError, RunConfig, WorkloadSpec};
use crate::kv::{hash, Kv, Table};
use crate::report::MetricsReport;

/// Distinct field keys shared by all rows, so groups span many rows.
pub const KEY_SPACE: u64 = 1024;

/// One generated input row: table, row key and (field key, value bytes)
/// sorted by field key. The numeric value is the first 8 bytes.
#[derive(Clone, Debug)]
pub struct InputRow {
    pub table: usize,
    pub key: u64,
    pub fields: Vec<(u64, Vec<u8>)>,
}

fn gen_row(r: &mut rand_chacha::ChaCha8Rng, spec: &WorkloadSpec) -> Vec<(u64, Vec<u8>)> {
    let n = spec.fields_per_row.min(KEY_SPACE as usize);
    let mut keys: Vec<u64> = sample(r, KEY_SPACE as usize, n)
        .into_iter()
        .map(|k| k as u64)
        .collect();
    keys.sort_unstable();
    keys.into_iter()
        .map(|k| {
            let v = r.gen::<u32>() as u64;
            (k, value_bytes(r, spec.value_bytes, v))
        })
        .collect()
}

/// The live input rows, in insertion order.
pub fn mapreduce_input(spec: &WorkloadSpec) -> Vec<InputRow> {
    if spec.entries == 0 {
        return Vec::new();
    }
    let mut r = rng(spec.seed, 0);
    let rows = spec.rows_per_table();
    let mut out = Vec::with_capacity(rows * spec.threads);
    for row in 0..rows {
        for table in 0..spec.threads {
            out.push(InputRow {
                table,
                key: row as u64,
                fields: gen_row(&mut r, spec),
            });
        }
    }
    out
}

fn mix(key: u64, sum: u64, count: u64) -> u64 {
    hash(key ^ hash(sum ^ hash(count)))
}

pub fn checksum(reduced: &[(u64, u64, u64)]) -> u64 {
    reduced
        .iter()
        .fold(0u64, |acc, (k, s, c)| acc.wrapping_add(mix(*k, *s, *c)))
}

/// Plain in-process map-reduce over the same input: (key, sum, count)
/// sorted by key.
pub fn reference_mapreduce(spec: &WorkloadSpec) -> Vec<(u64, u64, u64)> {
    let mut groups: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for row in mapreduce_input(spec) {
        for (k, v) in row.fields {
            let e = groups.entry(k).or_default();
            e.0 =
                e.0.wrapping_add(u64::from_le_bytes(v[..8].try_into().unwrap()));
            e.1 += 1;
        }
    }
    groups.into_iter().map(|(k, (s, c))| (k, s, c)).collect()
}

/// Bootstrap of input tables plus garbage rows for memory pressure, a map
/// phase grouping values by field key into managed lists, and a reduce
/// phase summing each group. All map and reduce accesses go through the
/// page-cache model.
pub fn run_mapreduce(cfg: &RunConfig, snap_dir: Option<&Path>) -> Result<MetricsReport, CliError> {
    let spec = &cfg.workload;
    let mut report = empty_report(cfg);
    let mut kv = new_kv(cfg)?;
    let input = mapreduce_input(spec);
    let tables: Vec<Table> = if input.is_empty() {
        Vec::new()
    } else {
        (0..spec.threads)
            .map(|_| kv.create_table(spec.rows_per_table()))
            .collect::<Result<_, _>>()?
    };

    // garbage rows interleave with live ones until the bootstrap volume is met
    let row_bytes = estimated_row_bytes(&kv);
    let volume = (cfg.heap.heap_bytes as f64 * spec.bootstrap_fraction) as u64;
    let garbage = (volume / row_bytes).saturating_sub(input.len() as u64);
    let mut gr = rng(spec.seed, 1);
    let mut made = 0u64;
    for (i, row) in input.iter().enumerate() {
        let fields: Vec<(u64, &[u8])> =
            row.fields.iter().map(|(k, v)| (*k, v.as_slice())).collect();
        kv.build_row(&fields)?;
        kv.insert_from_temp(tables[row.table], row.key)?;
        while made * (input.len() as u64) < garbage * (i as u64 + 1) {
            let g = gen_row(&mut gr, spec);
            let fields: Vec<(u64, &[u8])> = g.iter().map(|(k, v)| (*k, v.as_slice())).collect();
            kv.build_row(&fields)?;
            kv.heap.pop_temp();
            made += 1;
        }
    }
    settle(&mut kv)?;

    kv.cache = Some(PageCache::new(cfg.cache_pages()));
    let groups = kv.create_table(KEY_SPACE as usize)?;
    let total_rows = input.len() as u64;
    let mut points = snapshot_points(total_rows, spec.snapshot_count)
        .into_iter()
        .peekable();
    let mut seq = 0;
    let mut done = 0u64;
    let mut ops = 0u64;
    // map tasks take the rows in a seeded order unrelated to either layout
    let mut order: Vec<(usize, u64)> = input.iter().map(|r| (r.table, r.key)).collect();
    order.shuffle(&mut rng(spec.seed, 3));
    for (t, key) in order {
        while points.next_if(|p| *p <= done).is_some() {
            report
                .snapshots
                .push(snapshot(&mut kv, &tables, seq, snap_dir, &report.run_id)?);
            seq += 1;
        }
        let row = kv.get(tables[t], key).expect("input row present");
        kv.heap.push_temp(row);
        let n = kv.row_len(row);
        for i in 0..n {
            let row = kv.heap.temp(0);
            let (fk, data) = kv.row_field(row, i);
            // the map function emits the parsed number as a new object
            let value = kv.data_value(data);
            let boxed = kv
                .heap
                .allocate(kv.classes.key, &[], &value.to_le_bytes())?;
            let head = kv.get(groups, fk).unwrap_or(bdaheap::ManagedRef::NULL);
            let cell = kv.heap.allocate(kv.classes.node, &[head, boxed], &[])?;
            kv.heap.push_temp(cell);
            kv.insert_from_temp(groups, fk)?;
            ops += 1;
        }
        kv.heap.pop_temp();
        done += 1;
    }
    for _ in points {
        report
            .snapshots
            .push(snapshot(&mut kv, &tables, seq, snap_dir, &report.run_id)?);
        seq += 1;
    }

    let mut reduced = Vec::new();
    for slot in 0..groups.capacity {
        let Some((fk, mut cell)) = kv.entry_at(groups, slot) else {
            continue;
        };
        let (mut sum, mut count) = (0u64, 0u64);
        while !cell.is_null() {
            let boxed = kv.read(cell, 1);
            sum = sum.wrapping_add(kv.word(boxed, 0));
            count += 1;
            cell = kv.read(cell, 0);
        }
        reduced.push((fk, sum, count));
    }
    reduced.sort_unstable();
    report.ops = ops;
    report.checksum = checksum(&reduced);
    report.reduced = reduced;
    finish(&kv, &mut report);
    Ok(report)
}

/// Bytes of one full row: the map, plus node, key and data per field.
fn estimated_row_bytes(kv: &Kv) -> u64 {
    let f = kv.fields_per_row as u64;
    let map = 16 + 8 * f + 8;
    let per_field = (16 + 16) + (16 + 8) + (16 + kv.value_bytes as u64).next_multiple_of(8);
    map + f * per_field
}
