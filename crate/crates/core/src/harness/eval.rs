use serde::Serialize;

/// What happened to one mention.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub gold: Option<String>,
    pub predicted: Option<String>,
    /// Whether the gold entity is part of the knowledge base.
    pub in_kb: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Metrics {
    /// Correct / mentions whose gold entity is in the KB.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub in_kb: usize,
    pub predicted: usize,
    pub correct: usize,
}

/// Micro precision, recall, F1 and in-KB accuracy. With no predictions,
/// precision is reported as 0.
pub fn evaluate(outcomes: &[Outcome]) -> Metrics {
    let mut m = Metrics::default();
    let mut in_kb_correct = 0;
    for o in outcomes {
        let correct = o.gold.is_some() && o.gold == o.predicted;
        m.gold += usize::from(o.gold.is_some());
        m.predicted += usize::from(o.predicted.is_some());
        m.correct += usize::from(correct);
        if o.gold.is_some() && o.in_kb {
            m.in_kb += 1;
            in_kb_correct += usize::from(correct);
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    m.precision = ratio(m.correct, m.predicted);
    m.recall = ratio(m.correct, m.gold);
    m.f1 = if m.precision + m.recall > 0.0 { 2.0 * m.precision * m.recall / (m.precision + m.recall) } else { 0.0 };
    m.accuracy = ratio(in_kb_correct, m.in_kb);
    m
}

/// A bucket with a closed upper bound: it holds values in `(previous upper, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub label: String,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakdown {
    pub by_frequency: Vec<Bucket>,
    pub by_prior: Vec<Bucket>,
}

/// One gold-in-candidates mention for the breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownRow {
    pub correct: bool,
    /// Training frequency of the gold entity.
    pub frequency: u64,
    /// `p̂(gold | mention)`.
    pub prior: f64,
}

pub const FREQUENCY_BOUNDS: [f64; 4] = [0.0, 10.0, 20.0, 50.0];
pub const PRIOR_BOUNDS: [f64; 4] = [0.01, 0.03, 0.1, 0.3];

fn bucket_index(bounds: &[f64], v: f64) -> usize {
    bounds.iter().position(|&b| v <= b).unwrap_or(bounds.len())
}

fn fill(labels: Vec<String>, rows: impl Iterator<Item = (usize, bool)>) -> Vec<Bucket> {
    let mut b: Vec<Bucket> = labels.into_iter().map(|label| Bucket { label, count: 0, correct: 0, accuracy: 0.0 }).collect();
    for (i, ok) in rows {
        b[i].count += 1;
        b[i].correct += usize::from(ok);
    }
    for x in &mut b {
        x.accuracy = if x.count == 0 { 0.0 } else { x.correct as f64 / x.count as f64 };
    }
    b
}

/// Accuracy bucketed by gold-entity frequency `{0, 1–10, 11–20, 21–50, >50}`
/// and by gold prior `{≤0.01, 0.01–0.03, 0.03–0.1, 0.1–0.3, >0.3}`.
pub fn breakdown_report(rows: &[BreakdownRow]) -> Breakdown {
    let freq_labels = ["0", "1-10", "11-20", "21-50", ">50"].map(String::from).to_vec();
    let prior_labels = ["<=0.01", "0.01-0.03", "0.03-0.1", "0.1-0.3", ">0.3"].map(String::from).to_vec();
    Breakdown {
        by_frequency: fill(freq_labels, rows.iter().map(|r| (bucket_index(&FREQUENCY_BOUNDS, r.frequency as f64), r.correct))),
        by_prior: fill(prior_labels, rows.iter().map(|r| (bucket_index(&PRIOR_BOUNDS, r.prior), r.correct))),
    }
}
