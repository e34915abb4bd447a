use std::fmt::Write as _;

use serde::Serialize;

use crate::eval::EvalError;
use crate::masking::BinaryMask;

/// Overlap of two masks within one group: indices selected only by A,
/// only by B, or by both. The three sets are disjoint and together
/// cover every set bit of the group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupOverlap {
    pub group: usize,
    pub only_a: Vec<usize>,
    pub only_b: Vec<usize>,
    pub both: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskOverlapReport {
    pub groups: Vec<GroupOverlap>,
    /// `|A and B| / |A or B|`; 1.0 when both masks are empty.
    pub jaccard: f64,
    pub intersection_size: usize,
    pub union_size: usize,
}

impl MaskOverlapReport {
    pub fn to_csv(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        let mut out = String::from(
            "group,only_a_count,only_b_count,both_count,only_a,only_b,both\n",
        );
        for g in &self.groups {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                g.group,
                g.only_a.len(),
                g.only_b.len(),
                g.both.len(),
                join(&g.only_a),
                join(&g.only_b),
                join(&g.both)
            )
            .expect("string write");
        }
        out
    }
}

/// Compare two masks of equal length. `level_map` assigns each input
/// index to a group (for per-level breakdowns); without it everything
/// lands in group 0.
pub fn compare_masks(
    a: &BinaryMask,
    b: &BinaryMask,
    level_map: Option<&[usize]>,
) -> Result<MaskOverlapReport, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Shape(format!(
            "mask lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if let Some(map) = level_map {
        if map.len() != a.len() {
            return Err(EvalError::Shape(format!(
                "level map has {} entries for {} inputs",
                map.len(),
                a.len()
            )));
        }
    }

    let group_of = |j: usize| level_map.map(|m| m[j]).unwrap_or(0);
    let mut group_ids: Vec<usize> = (0..a.len()).map(group_of).collect();
    group_ids.sort_unstable();
    group_ids.dedup();

    let mut groups: Vec<GroupOverlap> = group_ids
        .into_iter()
        .map(|group| GroupOverlap {
            group,
            only_a: Vec::new(),
            only_b: Vec::new(),
            both: Vec::new(),
        })
        .collect();

    let (mut intersection, mut union) = (0usize, 0usize);
    for j in 0..a.len() {
        let (in_a, in_b) = (a.bits()[j], b.bits()[j]);
        if !(in_a || in_b) {
            continue;
        }
        union += 1;
        let group = groups
            .iter_mut()
            .find(|g| g.group == group_of(j))
            .expect("group ids were collected above");
        match (in_a, in_b) {
            (true, true) => {
                intersection += 1;
                group.both.push(j);
            }
            (true, false) => group.only_a.push(j),
            (false, true) => group.only_b.push(j),
            (false, false) => unreachable!(),
        }
    }
    groups.retain(|g| !(g.only_a.is_empty() && g.only_b.is_empty() && g.both.is_empty()));

    Ok(MaskOverlapReport {
        groups,
        jaccard: if union == 0 {
            1.0
        } else {
            intersection as f64 / union as f64
        },
        intersection_size: intersection,
        union_size: union,
    })
}
