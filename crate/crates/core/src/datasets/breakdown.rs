use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::SampleRecord;
use crate::judges::{JudgeVerdict, VerdictOutcome};
use crate::prompt::SpatialPrimitive;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub key: String,
    /// Mean rubric score or retrieval accuracy; `None` for an empty row.
    pub mean: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownTable {
    pub rows: Vec<BreakdownRow>,
    /// Verdicts whose id matched no sample.
    pub unjoined: usize,
    /// Joined verdicts without a per-sample value (flagged or loss-only).
    pub unscored: usize,
}

impl BreakdownTable {
    pub fn row(&self, key: &str) -> Option<&BreakdownRow> {
        self.rows.iter().find(|r| r.key == key)
    }

    pub fn total_count(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }
}

/// Per-sample value of a verdict: the rubric score or 1/0 for a correct or
/// wrong retrieval.
pub fn verdict_value(v: &JudgeVerdict) -> Option<f64> {
    match &v.outcome {
        VerdictOutcome::Generative { score, .. } => Some(f64::from(score.value())),
        VerdictOutcome::Contrastive { correct, .. } => Some(if *correct { 1.0 } else { 0.0 }),
        VerdictOutcome::BatchLoss | VerdictOutcome::Flagged { .. } => None,
    }
}

struct Joined<'a> {
    pairs: Vec<(&'a SampleRecord, f64)>,
    unjoined: usize,
    unscored: usize,
}

fn join<'a>(verdicts: &[JudgeVerdict], samples: &'a [SampleRecord]) -> Joined<'a> {
    let by_id: HashMap<u64, &SampleRecord> = samples.iter().map(|s| (s.id, s)).collect();
    let mut joined = Joined {
        pairs: Vec::new(),
        unjoined: 0,
        unscored: 0,
    };
    for v in verdicts {
        match (by_id.get(&v.id), verdict_value(v)) {
            (None, _) => joined.unjoined += 1,
            (Some(_), None) => joined.unscored += 1,
            (Some(s), Some(x)) => joined.pairs.push((s, x)),
        }
    }
    joined
}

fn table(keys: Vec<String>, sums: Vec<(f64, usize)>, j: &Joined) -> BreakdownTable {
    BreakdownTable {
        rows: keys
            .into_iter()
            .zip(sums)
            .map(|(key, (sum, count))| BreakdownRow {
                key,
                mean: (count > 0).then(|| sum / count as f64),
                count,
            })
            .collect(),
        unjoined: j.unjoined,
        unscored: j.unscored,
    }
}

/// One row per primitive, averaging over samples whose true relation has it.
pub fn per_term_breakdown(verdicts: &[JudgeVerdict], samples: &[SampleRecord]) -> BreakdownTable {
    let j = join(verdicts, samples);
    let mut sums = vec![(0.0, 0usize); 6];
    for (s, x) in &j.pairs {
        for p in s.relation.primitives().iter() {
            let e = &mut sums[p.index()];
            e.0 += x;
            e.1 += 1;
        }
    }
    let keys = SpatialPrimitive::ALL.iter().map(|p| p.name().to_string()).collect();
    table(keys, sums, &j)
}

/// Rows for relations of one, two and three primitives.
pub fn complexity_breakdown(verdicts: &[JudgeVerdict], samples: &[SampleRecord]) -> BreakdownTable {
    let j = join(verdicts, samples);
    let mut sums = vec![(0.0, 0usize); 3];
    for (s, x) in &j.pairs {
        let e = &mut sums[s.relation.complexity().clamp(1, 3) - 1];
        e.0 += x;
        e.1 += 1;
    }
    table((1..=3).map(|c| c.to_string()).collect(), sums, &j)
}
