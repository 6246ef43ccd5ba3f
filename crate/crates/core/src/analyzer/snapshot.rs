use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::AnalyzerError;
use crate::heap::Heap;
use crate::object::ManagedRef;

pub const SNAPSHOT_HEADER: &str = "# bdaheap-snapshot v1";

/// One live object. `refs` keeps null fields as 0 so field positions survive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub addr: u64,
    pub size: u64,
    pub class: u32,
    pub color: Option<u32>,
    pub refs: Vec<u64>,
}

/// Live objects at one safepoint, sorted by address.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HeapSnapshot {
    pub seq: u64,
    pub records: Vec<Record>,
}

impl HeapSnapshot {
    pub fn new(seq: u64, mut records: Vec<Record>) -> Self {
        records.sort_by_key(|r| r.addr);
        HeapSnapshot { seq, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn index_of(&self, addr: u64) -> Option<usize> {
        self.records.binary_search_by_key(&addr, |r| r.addr).ok()
    }

    /// Address to record index.
    pub(crate) fn index(&self) -> HashMap<u64, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.addr, i))
            .collect()
    }

    /// Same snapshot with every address shifted by `delta` bytes.
    pub fn translated(&self, delta: u64) -> Self {
        let mv = |a: u64| if a == 0 { 0 } else { a + delta };
        let records = self
            .records
            .iter()
            .map(|r| Record {
                addr: mv(r.addr),
                refs: r.refs.iter().map(|a| mv(*a)).collect(),
                ..r.clone()
            })
            .collect();
        HeapSnapshot {
            seq: self.seq,
            records,
        }
    }
}

/// Records every object reachable from the heap's roots and colors the
/// subgraphs of `color_roots`. Call between collections.
pub fn take_snapshot(
    heap: &Heap,
    color_roots: &[ManagedRef],
    seq: u64,
) -> Result<HeapSnapshot, AnalyzerError> {
    let records = heap
        .reachable()
        .into_iter()
        .map(|a| Record {
            addr: a,
            size: heap.size_at(a),
            class: heap.class_of(ManagedRef(a)).map(|c| c.0).unwrap_or(0),
            color: None,
            refs: heap.fields_of(a).collect(),
        })
        .collect();
    let snap = HeapSnapshot::new(seq, records);
    let roots: Vec<u64> = color_roots.iter().map(|r| r.addr()).collect();
    super::color_subgraphs(&snap, &roots)
}

/// Text format: the header line with the sequence number, then one
/// `addr,size,class,color,refs` line per object. Addresses are hex, a missing
/// color is `-`, and refs are `;`-separated.
pub fn write_snapshot(snap: &HeapSnapshot, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{SNAPSHOT_HEADER} seq={}", snap.seq)?;
    for r in &snap.records {
        let color = r.color.map_or_else(|| "-".to_string(), |c| c.to_string());
        let refs: Vec<String> = r.refs.iter().map(|a| format!("{a:x}")).collect();
        writeln!(
            out,
            "{:x},{},{},{},{}",
            r.addr,
            r.size,
            r.class,
            color,
            refs.join(";")
        )?;
    }
    Ok(())
}

pub fn read_snapshot(input: impl BufRead) -> Result<HeapSnapshot, AnalyzerError> {
    let err = |line: usize, message: String| AnalyzerError::Parse { line, message };
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let seq = match lines.next() {
        Some((n, l)) => {
            let l = l?;
            let seq = l
                .trim_end()
                .strip_prefix(SNAPSHOT_HEADER)
                .and_then(|r| r.strip_prefix(" seq="));
            let seq = seq.ok_or_else(|| err(n, format!("expected `{SNAPSHOT_HEADER} seq=<n>`")))?;
            seq.parse().map_err(|e| err(n, format!("bad seq: {e}")))?
        }
        None => return Err(err(1, "empty file".into())),
    };
    let mut records = Vec::new();
    for (n, line) in lines {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err(n, format!("expected 5 fields, found {}", f.len())));
        }
        let hex = |s: &str| {
            u64::from_str_radix(s, 16).map_err(|e| err(n, format!("bad address `{s}`: {e}")))
        };
        let addr = hex(f[0])?;
        let size = f[1].parse().map_err(|e| err(n, format!("bad size: {e}")))?;
        let class = f[2]
            .parse()
            .map_err(|e| err(n, format!("bad class: {e}")))?;
        let color = match f[3] {
            "-" => None,
            c => Some(c.parse().map_err(|e| err(n, format!("bad color: {e}")))?),
        };
        let refs = if f[4].is_empty() {
            Vec::new()
        } else {
            f[4].split(';').map(hex).collect::<Result<_, _>>()?
        };
        records.push((
            n,
            Record {
                addr,
                size,
                class,
                color,
                refs,
            },
        ));
    }
    let mut seen = HashMap::new();
    for (n, r) in &records {
        if seen.insert(r.addr, *n).is_some() {
            return Err(err(*n, format!("duplicate address {:x}", r.addr)));
        }
    }
    for (n, r) in &records {
        if let Some(a) = r.refs.iter().find(|a| **a != 0 && !seen.contains_key(a)) {
            return Err(err(*n, format!("reference {a:x} does not resolve")));
        }
    }
    Ok(HeapSnapshot::new(
        seq,
        records.into_iter().map(|(_, r)| r).collect(),
    ))
}
