use std::collections::{HashMap, HashSet, VecDeque};

use super::{AnalyzerError, HeapSnapshot, PAGE_BYTES};

/// Colors each object with the index of the first root, in root order, that
/// reaches it. Objects no root reaches stay uncolored.
pub fn color_subgraphs(snap: &HeapSnapshot, roots: &[u64]) -> Result<HeapSnapshot, AnalyzerError> {
    let index = snap.index();
    let mut out = snap.clone();
    for r in &mut out.records {
        r.color = None;
    }
    for (color, root) in roots.iter().enumerate() {
        let &start = index.get(root).ok_or(AnalyzerError::UnknownRoot(*root))?;
        if out.records[start].color.is_some() {
            continue;
        }
        out.records[start].color = Some(color as u32);
        let mut q = VecDeque::from([start]);
        while let Some(i) = q.pop_front() {
            for a in snap.records[i].refs.iter().filter(|a| **a != 0) {
                let j = index[a];
                if out.records[j].color.is_none() {
                    out.records[j].color = Some(color as u32);
                    q.push_back(j);
                }
            }
        }
    }
    Ok(out)
}

/// Mean object count over every (page, color) pair holding at least one
/// colored object. Objects belong to the page of their start address.
pub fn objects_per_page(snap: &HeapSnapshot) -> f64 {
    let mut pairs: HashMap<(u64, u32), u64> = HashMap::new();
    for r in &snap.records {
        if let Some(c) = r.color {
            *pairs.entry((r.addr / PAGE_BYTES, c)).or_default() += 1;
        }
    }
    if pairs.is_empty() {
        log::warn!(
            "objects per page is undefined for a snapshot without colored objects; reporting 0"
        );
        return 0.0;
    }
    pairs.values().sum::<u64>() as f64 / pairs.len() as f64
}

/// Mean distinct pages a color spans, i.e. the pages one traversal of a
/// subgraph touches.
pub fn pages_per_color(snap: &HeapSnapshot) -> f64 {
    let mut pages: HashMap<u32, HashSet<u64>> = HashMap::new();
    for r in &snap.records {
        if let Some(c) = r.color {
            pages.entry(c).or_default().insert(r.addr / PAGE_BYTES);
        }
    }
    if pages.is_empty() {
        return 0.0;
    }
    pages.values().map(|p| p.len()).sum::<usize>() as f64 / pages.len() as f64
}

/// Mean absolute address distance over edges whose ends share a color.
pub fn mean_reference_distance(snap: &HeapSnapshot) -> f64 {
    let index = snap.index();
    let (mut sum, mut n) = (0u128, 0u64);
    for r in &snap.records {
        let Some(c) = r.color else { continue };
        for a in r.refs.iter().filter(|a| **a != 0) {
            if snap.records[index[a]].color == Some(c) {
                sum += r.addr.abs_diff(*a) as u128;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::super::Record;
    use super::*;

    fn snap(objs: &[(u64, Vec<u64>)]) -> HeapSnapshot {
        HeapSnapshot::new(
            0,
            objs.iter()
                .map(|(a, refs)| Record {
                    addr: *a,
                    size: 64,
                    class: 1,
                    color: None,
                    refs: refs.clone(),
                })
                .collect(),
        )
    }

    fn colors(s: &HeapSnapshot) -> Vec<Option<u32>> {
        s.records.iter().map(|r| r.color).collect()
    }

    #[test]
    fn disjoint_trees_get_distinct_colors() {
        let s = snap(&[
            (0x100, vec![0x140]),
            (0x140, vec![]),
            (0x200, vec![0x240, 0]),
            (0x240, vec![]),
            (0x300, vec![]),
        ]);
        let c = color_subgraphs(&s, &[0x100, 0x200]).unwrap();
        assert_eq!(colors(&c), vec![Some(0), Some(0), Some(1), Some(1), None]);
    }

    #[test]
    fn shared_child_takes_first_root_color() {
        let s = snap(&[(0x100, vec![0x300]), (0x200, vec![0x300]), (0x300, vec![])]);
        let c = color_subgraphs(&s, &[0x200, 0x100]).unwrap();
        assert_eq!(colors(&c), vec![Some(1), Some(0), Some(0)]);
        assert!(matches!(
            color_subgraphs(&s, &[0x999]),
            Err(AnalyzerError::UnknownRoot(0x999))
        ));
    }

    #[test]
    fn packed_pages_average_64() {
        // 128 objects of 64 bytes from a page-aligned base
        let objs: Vec<(u64, Vec<u64>)> = (0..128u64).map(|i| (0x10000 + 64 * i, vec![])).collect();
        let mut s = snap(&objs);
        for r in &mut s.records {
            r.color = Some(0);
        }
        assert_eq!(objects_per_page(&s), 64.0);
        assert_eq!(pages_per_color(&s), 2.0);
    }

    #[test]
    fn one_object_per_page_is_one() {
        let objs: Vec<(u64, Vec<u64>)> =
            (0..10u64).map(|i| (PAGE_BYTES * (i + 1), vec![])).collect();
        let mut s = snap(&objs);
        for r in &mut s.records {
            r.color = Some(0);
        }
        assert_eq!(objects_per_page(&s), 1.0);
    }

    #[test]
    fn empty_snapshot_reports_zero() {
        assert_eq!(objects_per_page(&HeapSnapshot::default()), 0.0);
        assert_eq!(mean_reference_distance(&HeapSnapshot::default()), 0.0);
    }

    #[test]
    fn reference_distance_counts_same_color_edges() {
        let s = snap(&[
            (0x100, vec![0x180, 0x1000]),
            (0x180, vec![]),
            (0x1000, vec![]),
        ]);
        let mut c = color_subgraphs(&s, &[0x100]).unwrap();
        assert_eq!(mean_reference_distance(&c), (0x80 + 0xf00) as f64 / 2.0);
        c.records[2].color = Some(9);
        assert_eq!(mean_reference_distance(&c), 0x80 as f64);
    }
}
