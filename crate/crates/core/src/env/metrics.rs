use alloc::format;
use alloc::string::String;
use serde::{Deserialize, Serialize};

/// Per-step quantities the episode metrics are built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub dt: f64,
    pub ds: f64,
    pub was_collided: bool,
    pub collided: bool,
    pub roll: f64,
    pub pitch: f64,
    pub violation: bool,
}

/// Running sums; merging two accumulators of consecutive stretches equals
/// accumulating the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsAccumulator {
    pub n_collisions: u64,
    pub collision_time: f64,
    pub progress: f64,
    pub cumulative_unevenness: f64,
    pub n_cbf_violations: u64,
    pub steps: u64,
    pub duration: f64,
}

impl MetricsAccumulator {
    pub fn record(&mut self, s: &StepSample) {
        if s.collided && !s.was_collided {
            self.n_collisions += 1;
        }
        if s.collided {
            self.collision_time += s.dt;
        }
        self.progress += s.ds;
        self.cumulative_unevenness += s.roll * s.roll + s.pitch * s.pitch;
        self.n_cbf_violations += u64::from(s.violation);
        self.steps += 1;
        self.duration += s.dt;
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            n_collisions: self.n_collisions + other.n_collisions,
            collision_time: self.collision_time + other.collision_time,
            progress: self.progress + other.progress,
            cumulative_unevenness: self.cumulative_unevenness + other.cumulative_unevenness,
            n_cbf_violations: self.n_cbf_violations + other.n_cbf_violations,
            steps: self.steps + other.steps,
            duration: self.duration + other.duration,
        }
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            n_collisions: self.n_collisions,
            collision_time: self.collision_time,
            progress: self.progress.max(0.0),
            cumulative_unevenness: self.cumulative_unevenness,
            n_cbf_violations: self.n_cbf_violations,
            steps: self.steps,
            duration: self.duration,
        }
    }
}

/// The five evaluation metrics of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Number of collision onsets.
    pub n_collisions: u64,
    /// Seconds spent in a collided state.
    pub collision_time: f64,
    /// Net distance travelled along the trail (m), floored at zero.
    pub progress: f64,
    /// Sum of `roll² + pitch²` over all steps.
    pub cumulative_unevenness: f64,
    /// Steps on which the shield reported a violation.
    pub n_cbf_violations: u64,
    pub steps: u64,
    pub duration: f64,
}

/// Per-field arithmetic mean over runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub n_collisions: f64,
    pub collision_time: f64,
    pub progress: f64,
    pub cumulative_unevenness: f64,
    pub n_cbf_violations: f64,
}

/// Mean report; zero everywhere when `reports` is empty.
pub fn aggregate(reports: &[MetricsReport]) -> AggregateReport {
    if reports.is_empty() {
        return AggregateReport::default();
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    AggregateReport {
        runs: reports.len(),
        n_collisions: mean(|r| r.n_collisions as f64),
        collision_time: mean(|r| r.collision_time),
        progress: mean(|r| r.progress),
        cumulative_unevenness: mean(|r| r.cumulative_unevenness),
        n_cbf_violations: mean(|r| r.n_cbf_violations as f64),
    }
}

/// Configuration columns of a results-table row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLabel {
    pub index: usize,
    pub privileged: bool,
    pub discrete: bool,
    pub cbf: bool,
    pub pretrain: Option<String>,
}

pub const TABLE_COLUMNS: [&str; 10] = [
    "Index",
    "Privileged",
    "Discrete Actions",
    "CBF",
    "Pretrain",
    "# collisions",
    "Collision time (s)",
    "Progress",
    "Cumulative unevenness",
    "# CBF Violations",
];

impl AggregateReport {
    pub fn table_header() -> String {
        let mut out = String::from("|");
        for c in TABLE_COLUMNS {
            out.push(' ');
            out.push_str(c);
            out.push_str(" |");
        }
        out
    }

    /// One pipe-separated row; the violations column is `-` when the shield is off.
    pub fn table_row(&self, label: &RunLabel) -> String {
        let mark = |b: bool| if b { "✓" } else { "✗" };
        let violations = if label.cbf { format!("{:.1}", self.n_cbf_violations) } else { String::from("-") };
        format!(
            "| {} | {} | {} | {} | {} | {:.1} | {:.2} | {:.2} | {:.2} | {} |",
            label.index,
            mark(label.privileged),
            mark(label.discrete),
            mark(label.cbf),
            label.pretrain.as_deref().unwrap_or("-"),
            self.n_collisions,
            self.collision_time,
            self.progress,
            self.cumulative_unevenness,
            violations,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(collided: bool, was: bool) -> StepSample {
        StepSample { dt: 0.02, ds: 0.1, was_collided: was, collided, roll: 0.1, pitch: 0.0, violation: false }
    }

    #[test]
    fn onsets_are_counted_once() {
        let mut acc = MetricsAccumulator::default();
        let mut was = false;
        for k in 0..100 {
            let c = (10..60).contains(&k);
            acc.record(&sample(c, was));
            was = c;
        }
        let r = acc.report();
        assert_eq!(r.n_collisions, 1);
        assert!((r.collision_time - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_aggregate_is_zero() {
        assert_eq!(aggregate(&[]), AggregateReport::default());
    }

    #[test]
    fn aggregate_is_the_mean() {
        let a = MetricsReport { n_collisions: 2, progress: 10.0, ..Default::default() };
        let b = MetricsReport { n_collisions: 5, progress: 20.0, ..Default::default() };
        let m = aggregate(&[a, b]);
        assert_eq!(m.runs, 2);
        assert_eq!(m.n_collisions, 3.5);
        assert_eq!(m.progress, 15.0);
    }

    #[test]
    fn header_and_row_have_matching_columns() {
        let header = AggregateReport::table_header();
        let label = RunLabel { index: 2, privileged: true, discrete: true, cbf: false, pretrain: None };
        let row = AggregateReport::default().table_row(&label);
        assert_eq!(header.matches('|').count(), row.matches('|').count());
        assert!(row.ends_with("| - |"));
    }
}
