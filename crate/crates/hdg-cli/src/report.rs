//! Benchmark report: line-delimited per-query records followed by an
//! aggregate block recomputable from the records.
//!
//! Floats are written in shortest round-trip form so reports are
//! byte-reproducible under fixed seeds. Wall-clock latencies are recorded
//! only when timing is requested; otherwise the latency field is zero so
//! repeated runs stay byte-identical.

use std::fmt::Write as _;

/// One benchmarked query.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub query_id: u64,
    pub loop_index: u32,
    /// "recall" or "distance".
    pub path: &'static str,
    /// |result intersect true kNN| / k.
    pub recall: f64,
    /// max distance of the result over the true k-th distance.
    pub dist_ratio: f64,
    /// Whether max distance <= c * T_k held (exact comparison).
    pub dist_ok: bool,
    pub descent_visits: u32,
    pub nav_visits: u32,
    pub backend_calls: u32,
    pub scanned: u64,
    pub fallback: bool,
    pub latency_ns: u64,
}

pub const FIELDS: &str = "query_id loop_index path recall dist_ratio dist_ok \
                          descent_visits nav_visits backend_calls scanned fallback latency_ns";

impl BenchRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {:?} {:?} {} {} {} {} {} {} {}",
            self.query_id,
            self.loop_index,
            self.path,
            self.recall,
            self.dist_ratio,
            self.dist_ok as u8,
            self.descent_visits,
            self.nav_visits,
            self.backend_calls,
            self.scanned,
            self.fallback as u8,
            self.latency_ns,
        )
    }

}

/// Aggregates over a record set; every value is a pure function of the
/// records plus the (k, c, delta) the run was configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub queries: u64,
    pub mean_recall: f64,
    pub recall_p50: f64,
    pub recall_p90: f64,
    /// Fraction meeting the unified contract: distance criterion, or
    /// recall >= delta.
    pub fraction_unified_ok: f64,
    pub fraction_distance_ok: f64,
    pub fraction_recall_path: f64,
    /// Of recall-path (loop 0) queries, the fraction with recall >= delta.
    pub recall_path_frac_ge_delta: f64,
    pub mean_descent_visits: f64,
    pub mean_nav_visits: f64,
    pub mean_backend_calls: f64,
    pub mean_scanned: f64,
    pub fallback_count: u64,
}

impl Aggregates {
    pub fn compute(records: &[BenchRecord], delta: f64) -> Aggregates {
        let n = records.len() as f64;
        let mut recalls: Vec<f64> = records.iter().map(|r| r.recall).collect();
        recalls.sort_unstable_by(f64::total_cmp);
        let pct = |p: f64| -> f64 {
            if recalls.is_empty() {
                return 0.0;
            }
            let idx = ((p * recalls.len() as f64).ceil() as usize).clamp(1, recalls.len());
            recalls[idx - 1]
        };
        let recall_zero = records.iter().filter(|r| r.loop_index == 0).count();
        let ge_delta = records
            .iter()
            .filter(|r| r.loop_index == 0 && r.recall >= delta)
            .count();
        Aggregates {
            queries: records.len() as u64,
            mean_recall: records.iter().map(|r| r.recall).sum::<f64>() / n,
            recall_p50: pct(0.50),
            recall_p90: pct(0.90),
            fraction_unified_ok: records
                .iter()
                .filter(|r| r.dist_ok || r.recall >= delta)
                .count() as f64
                / n,
            fraction_distance_ok: records.iter().filter(|r| r.dist_ok).count() as f64 / n,
            fraction_recall_path: recall_zero as f64 / n,
            recall_path_frac_ge_delta: if recall_zero > 0 {
                ge_delta as f64 / recall_zero as f64
            } else {
                0.0
            },
            mean_descent_visits: records.iter().map(|r| r.descent_visits as f64).sum::<f64>() / n,
            mean_nav_visits: records.iter().map(|r| r.nav_visits as f64).sum::<f64>() / n,
            mean_backend_calls: records.iter().map(|r| r.backend_calls as f64).sum::<f64>() / n,
            mean_scanned: records.iter().map(|r| r.scanned as f64).sum::<f64>() / n,
            fallback_count: records.iter().filter(|r| r.fallback).count() as u64,
        }
    }

    pub fn to_block(&self) -> String {
        let mut s = String::new();
        writeln!(s, "queries {}", self.queries).unwrap();
        writeln!(s, "mean_recall {:?}", self.mean_recall).unwrap();
        writeln!(s, "recall_p50 {:?}", self.recall_p50).unwrap();
        writeln!(s, "recall_p90 {:?}", self.recall_p90).unwrap();
        writeln!(s, "fraction_unified_ok {:?}", self.fraction_unified_ok).unwrap();
        writeln!(s, "fraction_distance_ok {:?}", self.fraction_distance_ok).unwrap();
        writeln!(s, "fraction_recall_path {:?}", self.fraction_recall_path).unwrap();
        writeln!(
            s,
            "recall_path_frac_ge_delta {:?}",
            self.recall_path_frac_ge_delta
        )
        .unwrap();
        writeln!(s, "mean_descent_visits {:?}", self.mean_descent_visits).unwrap();
        writeln!(s, "mean_nav_visits {:?}", self.mean_nav_visits).unwrap();
        writeln!(s, "mean_backend_calls {:?}", self.mean_backend_calls).unwrap();
        writeln!(s, "mean_scanned {:?}", self.mean_scanned).unwrap();
        writeln!(s, "fallback_count {}", self.fallback_count).unwrap();
        s
    }
}
