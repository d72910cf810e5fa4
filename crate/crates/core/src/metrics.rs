//! Navigation metrics: NE, SR, OSR and SPL, stratified by difficulty and
//! assistance level.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance, Vec3};
use crate::labels::{Assistance, Difficulty};
use crate::scalar::Scalar;

/// Per-episode quantities behind the aggregate metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EpisodeResult<T: Scalar> {
    pub success: bool,
    pub final_distance: T,
    pub min_distance: T,
    pub initial_distance: T,
    pub agent_path_length: T,
    pub oracle_path_length: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeMode {
    /// Meters.
    #[default]
    Raw,
    /// Final distance over initial distance.
    Normalized,
}

impl fmt::Display for NeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeMode::Raw => "raw",
            NeMode::Normalized => "normalized",
        })
    }
}

/// True iff any visited position lies within `success_radius` of `goal` (closed ball).
pub fn episode_success<T: Scalar>(positions: impl IntoIterator<Item = Vec3<T>>, goal: &Vec3<T>, success_radius: T) -> bool {
    positions
        .into_iter()
        .any(|p| euclidean_distance(&p, goal) <= success_radius)
}

pub fn normalized_error<T: Scalar>(final_distance: T, initial_distance: T, mode: NeMode) -> Result<T> {
    match mode {
        NeMode::Raw => Ok(final_distance),
        NeMode::Normalized => {
            if !(initial_distance > T::zero()) {
                return Err(Error::ZeroInitialDistance);
            }
            Ok(final_distance / initial_distance)
        }
    }
}

pub fn oracle_success<T: Scalar>(min_distance: T, success_radius: T) -> bool {
    min_distance <= success_radius
}

/// Success weighted by path length: `S · l / max(p, l)`.
pub fn spl<T: Scalar>(success: bool, oracle_len: T, agent_len: T) -> Result<T> {
    if !(oracle_len > T::zero()) {
        return Err(Error::NonPositiveOracleLength(oracle_len.to_f64_lossy()));
    }
    if !success {
        return Ok(T::zero());
    }
    Ok(oracle_len / agent_len.max(oracle_len))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Full,
    Easy,
    Hard,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Full, Stratum::Easy, Stratum::Hard];

    fn admits(self, d: Difficulty) -> bool {
        match self {
            Stratum::Full => true,
            Stratum::Easy => d == Difficulty::Easy,
            Stratum::Hard => d == Difficulty::Hard,
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::Full => "full",
            Stratum::Easy => "easy",
            Stratum::Hard => "hard",
        })
    }
}

/// Aggregates over one stratum; rates are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumMetrics {
    pub count: usize,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
}

/// Labeled result fed to [`aggregate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LabeledResult<T: Scalar> {
    pub result: EpisodeResult<T>,
    pub difficulty: Difficulty,
    pub assistance: Assistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ne_mode: NeMode,
    /// Keyed by `(assistance, stratum)`; empty strata are absent.
    pub strata: BTreeMap<(Assistance, Stratum), StratumMetrics>,
}

impl MetricsReport {
    pub fn get(&self, a: Assistance, s: Stratum) -> Option<&StratumMetrics> {
        self.strata.get(&(a, s))
    }

    /// One row per `(label, assistance, stratum)`.
    pub fn to_csv_rows(&self, label: &str) -> Vec<String> {
        self.strata
            .iter()
            .map(|((a, s), m)| {
                format!(
                    "{label},{a},{s},{},{},{:.4},{:.4},{:.4},{:.4}",
                    m.count, self.ne_mode, m.ne, m.sr, m.osr, m.spl
                )
            })
            .collect()
    }

    pub const CSV_HEADER: &'static str = "method,assistance,stratum,count,ne_mode,NE,SR,OSR,SPL";

    pub fn to_csv(&self, label: &str) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in self.to_csv_rows(label) {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

/// Stratified means over `results`. Success implies oracle success.
pub fn aggregate<T: Scalar>(results: &[LabeledResult<T>], success_radius: T, ne_mode: NeMode) -> Result<MetricsReport> {
    // per-episode terms first, in input order
    let mut terms = Vec::with_capacity(results.len());
    for r in results {
        let e = &r.result;
        let ne = normalized_error(e.final_distance, e.initial_distance, ne_mode)?.to_f64_lossy();
        let s = spl(e.success, e.oracle_path_length, e.agent_path_length)?.to_f64_lossy();
        let os = e.success || oracle_success(e.min_distance, success_radius);
        terms.push((r.assistance, r.difficulty, ne, e.success, os, s));
    }
    let mut strata = BTreeMap::new();
    for a in Assistance::ALL {
        for st in Stratum::ALL {
            let mut sel: Vec<_> = terms
                .iter()
                .filter(|t| t.0 == a && st.admits(t.1))
                .collect();
            if sel.is_empty() {
                continue;
            }
            // fixed summation order makes the result permutation-invariant
            sel.sort_by(|x, y| {
                x.2.total_cmp(&y.2)
                    .then(x.5.total_cmp(&y.5))
                    .then(x.3.cmp(&y.3))
                    .then(x.4.cmp(&y.4))
            });
            let n = sel.len() as f64;
            let ne = sel.iter().map(|t| t.2).sum::<f64>() / n;
            let sr = sel.iter().filter(|t| t.3).count() as f64;
            let osr = sel.iter().filter(|t| t.4).count() as f64;
            let spl_sum = sel.iter().map(|t| t.5).sum::<f64>();
            strata.insert(
                (a, st),
                StratumMetrics {
                    count: sel.len(),
                    ne,
                    sr: 100.0 * sr / n,
                    osr: 100.0 * osr / n,
                    spl: 100.0 * spl_sum / n,
                },
            );
        }
    }
    Ok(MetricsReport { ne_mode, strata })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(success: bool, fin: f64, min: f64, init: f64, agent: f64, oracle: f64) -> EpisodeResult<f64> {
        EpisodeResult {
            success,
            final_distance: fin,
            min_distance: min,
            initial_distance: init,
            agent_path_length: agent,
            oracle_path_length: oracle,
        }
    }

    #[test]
    fn success_cases() {
        let g = Vec3::new(10.0, 0.0, 0.0);
        assert!(episode_success([Vec3::zero(), g], &g, 20.0));
        assert!(episode_success([Vec3::new(30.0, 0.0, 0.0)], &g, 20.0));
        assert!(!episode_success([Vec3::new(31.0, 0.0, 0.0), Vec3::new(50.0, 0.0, 0.0)], &g, 20.0));
    }

    #[test]
    fn ne_cases() {
        assert_eq!(normalized_error(0.0, 100.0, NeMode::Raw).unwrap(), 0.0);
        assert_eq!(normalized_error(0.0, 100.0, NeMode::Normalized).unwrap(), 0.0);
        assert_eq!(normalized_error(50.0, 100.0, NeMode::Normalized).unwrap(), 0.5);
        assert_eq!(normalized_error(125.97, 300.0, NeMode::Raw).unwrap(), 125.97);
        assert!(matches!(
            normalized_error(5.0, 0.0, NeMode::Normalized),
            Err(Error::ZeroInitialDistance)
        ));
    }

    #[test]
    fn oracle_success_cases() {
        assert!(oracle_success(3.0, 20.0));
        assert!(oracle_success(20.0, 20.0));
        assert!(!oracle_success(20.5, 20.0));
    }

    #[test]
    fn spl_cases() {
        assert_eq!(spl(true, 100.0, 100.0).unwrap(), 1.0);
        assert_eq!(spl(false, 100.0, 100.0).unwrap(), 0.0);
        assert_eq!(spl(true, 100.0, 200.0).unwrap(), 0.5);
        assert_eq!(spl(true, 100.0, 50.0).unwrap(), 1.0);
        assert!(spl(true, 0.0, 10.0).is_err());
    }

    #[test]
    fn all_perfect_is_hundred() {
        let r: Vec<_> = (0..5)
            .map(|i| LabeledResult {
                result: res(true, 5.0, 5.0, 100.0, 100.0 + i as f64 * 0.0, 100.0),
                difficulty: Difficulty::Easy,
                assistance: Assistance::L1,
            })
            .collect();
        let rep = aggregate(&r, 20.0, NeMode::Raw).unwrap();
        let m = rep.get(Assistance::L1, Stratum::Full).unwrap();
        assert_eq!((m.sr, m.osr, m.spl), (100.0, 100.0, 100.0));
        assert!(rep.get(Assistance::L1, Stratum::Hard).is_none());
        assert!(rep.get(Assistance::L2, Stratum::Full).is_none());
    }

    #[test]
    fn four_episode_hand_check() {
        let rs = vec![
            // success, efficient
            (res(true, 10.0, 10.0, 100.0, 100.0, 100.0), Difficulty::Easy),
            // success, twice as long
            (res(true, 0.0, 0.0, 200.0, 600.0, 300.0), Difficulty::Hard),
            // passes by the goal, ends far
            (res(false, 50.0, 15.0, 80.0, 120.0, 80.0), Difficulty::Easy),
            // never close
            (res(false, 300.0, 250.0, 300.0, 90.0, 320.0), Difficulty::Hard),
        ];
        let labeled: Vec<_> = rs
            .iter()
            .map(|(r, d)| LabeledResult {
                result: *r,
                difficulty: *d,
                assistance: Assistance::L2,
            })
            .collect();
        let rep = aggregate(&labeled, 20.0, NeMode::Raw).unwrap();
        let full = rep.get(Assistance::L2, Stratum::Full).unwrap();
        assert_eq!(full.count, 4);
        assert!((full.ne - 90.0).abs() < 1e-12);
        assert_eq!(full.sr, 50.0);
        assert_eq!(full.osr, 75.0);
        assert!((full.spl - 37.5).abs() < 1e-12);
        let easy = rep.get(Assistance::L2, Stratum::Easy).unwrap();
        assert_eq!((easy.count, easy.sr, easy.osr, easy.spl), (2, 50.0, 100.0, 50.0));
        let hard = rep.get(Assistance::L2, Stratum::Hard).unwrap();
        assert_eq!((hard.count, hard.sr, hard.osr, hard.spl), (2, 50.0, 50.0, 25.0));
        assert_eq!(hard.ne, 150.0);
    }

    #[test]
    fn csv_layout() {
        let labeled = vec![LabeledResult {
            result: res(true, 1.0, 1.0, 60.0, 60.0, 60.0),
            difficulty: Difficulty::Hard,
            assistance: Assistance::L3,
        }];
        let csv = aggregate(&labeled, 20.0, NeMode::Raw).unwrap().to_csv("ours");
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], MetricsReport::CSV_HEADER);
        assert_eq!(lines[1], "ours,L3,full,1,raw,1.0000,100.0000,100.0000,100.0000");
        assert_eq!(lines.len(), 3);
    }
}
