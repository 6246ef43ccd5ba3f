use std::path::Path;
use std::time::Instant;

use bdaheap::analyzer::PageCache;
use rand::Rng;

use super::{empty_report, finish, new_kv, rng, settle, snapshot, snapshot_points, value_bytes};
use crate::config::{CliError, RunConfig};
use crate::kv::{Kv, Table};
use crate::report::{LatencyStats, MetricsReport};

const BATCH: usize = 256;
/// Gets replayed through the page-cache model after the timed phase.
const TRACED_GETS: usize = 200_000;

/// One get: table, row key, field key.
type Get = (u32, u32, u32);

fn get(kv: &mut Kv, tables: &[Table], (t, row, field): Get) -> u64 {
    let r = kv.get(tables[t as usize], row as u64).expect("row present");
    let d = kv.row_get(r, field as u64).expect("field present");
    kv.data_value(d)
}

/// Tables of integer-keyed rows with random values, then timed random gets.
pub fn run_readonly(cfg: &RunConfig, snap_dir: Option<&Path>) -> Result<MetricsReport, CliError> {
    let spec = &cfg.workload;
    let mut report = empty_report(cfg);
    let mut kv = new_kv(cfg)?;
    let rows = if spec.entries == 0 {
        0
    } else {
        spec.rows_per_table()
    };
    let f = spec.fields_per_row;
    let mut r = rng(spec.seed, 0);

    let tables: Vec<Table> = if rows == 0 {
        Vec::new()
    } else {
        (0..spec.threads)
            .map(|_| kv.create_table(rows))
            .collect::<Result<_, _>>()?
    };
    // threads' inserts interleave row by row
    for row in 0..rows {
        for t in &tables {
            let values: Vec<Vec<u8>> = (0..f)
                .map(|_| {
                    let v = r.gen::<u32>() as u64;
                    value_bytes(&mut r, spec.value_bytes, v)
                })
                .collect();
            let fields: Vec<(u64, &[u8])> = values
                .iter()
                .enumerate()
                .map(|(i, v)| (i as u64, v.as_slice()))
                .collect();
            kv.build_row(&fields)?;
            kv.insert_from_temp(*t, row as u64)?;
        }
    }
    settle(&mut kv)?;

    let gets: Vec<Get> = if rows == 0 {
        Vec::new()
    } else {
        (0..spec.operations as usize * spec.threads)
            .map(|i| {
                (
                    (i % spec.threads) as u32,
                    r.gen_range(0..rows as u32),
                    r.gen_range(0..f as u32),
                )
            })
            .collect()
    };
    let mut points = snapshot_points(gets.len() as u64, spec.snapshot_count)
        .into_iter()
        .peekable();
    let mut samples = Vec::with_capacity(gets.len() / BATCH + 1);
    let mut checksum = 0u64;
    let mut seq = 0;
    for (b, batch) in gets.chunks(BATCH).enumerate() {
        let done = (b * BATCH) as u64;
        while points.next_if(|p| *p <= done).is_some() {
            report
                .snapshots
                .push(snapshot(&mut kv, &tables, seq, snap_dir, &report.run_id)?);
            seq += 1;
        }
        let start = Instant::now();
        for g in batch {
            checksum = checksum.wrapping_add(get(&mut kv, &tables, *g));
        }
        samples.push(start.elapsed().as_nanos() as f64 / batch.len() as f64);
    }
    // snapshots not reached (no gets) are taken at the end
    for _ in points {
        report
            .snapshots
            .push(snapshot(&mut kv, &tables, seq, snap_dir, &report.run_id)?);
        seq += 1;
    }
    report.ops = gets.len() as u64;
    report.checksum = checksum;
    report.latency = LatencyStats::from_samples(samples);

    kv.cache = Some(PageCache::new(cfg.cache_pages()));
    for g in gets.iter().take(TRACED_GETS) {
        get(&mut kv, &tables, *g);
    }
    finish(&kv, &mut report);
    Ok(report)
}
