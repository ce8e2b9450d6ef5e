//! Budget sweeps: one row per (budget, method), written as CSV.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bilp::AttackStructure;
use crate::decompose::certify_decomposed;
use crate::error::{CertError, Result};
use crate::solver::{certify, certify_samplewise, CertifyConfig};
use crate::votes::{relative_gap, Budget, CertStatus, Certificate, VoteMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    SampleWise,
    Collective,
    Decomposed,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SampleWise => "samplewise",
            Method::Collective => "collective",
            Method::Decomposed => "decomposed",
        }
    }
}

impl FromStr for Method {
    type Err = CertError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "samplewise" | "sample-wise" => Ok(Method::SampleWise),
            "collective" => Ok(Method::Collective),
            "decomposed" => Ok(Method::Decomposed),
            other => Err(CertError::InvalidArgument(format!(
                "unknown mode {other:?}"
            ))),
        }
    }
}

/// Budget for a per-pair cap: insertions for hash bagging, modifications
/// for vanilla bagging (the only kind it models).
pub fn budget_for_cap(structure: &AttackStructure, cap: usize) -> Budget {
    match structure {
        AttackStructure::Hash(_) => Budget::new(cap, 0, 0),
        AttackStructure::Vanilla(_) => Budget::modifications(cap),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    /// Budget as a fraction of `G`, as reported.
    pub fraction: f64,
    pub cap: usize,
}

impl SweepPoint {
    pub fn from_fraction(fraction: f64, num_classifiers: usize) -> Self {
        Self {
            fraction,
            cap: (fraction * num_classifiers as f64).round() as usize,
        }
    }

    pub fn from_cap(cap: usize, num_classifiers: usize) -> Self {
        let fraction = if num_classifiers == 0 {
            0.0
        } else {
            cap as f64 / num_classifiers as f64
        };
        Self { fraction, cap }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub budget_fraction: f64,
    pub cap: usize,
    pub method: Method,
    pub cr: usize,
    pub ca: Option<usize>,
    /// `None`: not applicable (sample-wise rows); `Some(None)`: 0/0.
    pub alpha: Option<Option<f64>>,
    pub status: CertStatus,
    pub seconds: f64,
}

/// Certificate for one method at one budget.
pub fn run_method(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    budget: Budget,
    labels: Option<&[usize]>,
    method: Method,
    delta: usize,
    config: &CertifyConfig,
) -> Result<Certificate> {
    match method {
        Method::SampleWise => certify_samplewise(votes, structure, budget, labels, config),
        Method::Collective => certify(votes, structure, budget, labels, config),
        Method::Decomposed => certify_decomposed(votes, structure, budget, labels, delta, config),
    }
}

/// Runs every method at every budget point. Rows come out sorted by budget,
/// then in the order `methods` lists them.
pub fn sweep(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    labels: Option<&[usize]>,
    points: &[SweepPoint],
    methods: &[Method],
    delta: usize,
    config: &CertifyConfig,
) -> Result<Vec<ReportRow>> {
    let mut points = points.to_vec();
    points.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
    let mut rows = Vec::new();
    for point in points {
        let budget = budget_for_cap(structure, point.cap);
        let samplewise = certify_samplewise(votes, structure, budget, labels, config)?;
        for &method in methods {
            let cert = match method {
                Method::SampleWise => samplewise.clone(),
                _ => run_method(votes, structure, budget, labels, method, delta, config)?,
            };
            let alpha = match method {
                Method::SampleWise => None,
                _ => Some(relative_gap(samplewise.attacked_ub, cert.attacked_ub)?),
            };
            rows.push(ReportRow {
                budget_fraction: point.fraction,
                cap: point.cap,
                method,
                cr: cert.collective_robustness_lb,
                ca: cert.certified_accuracy,
                alpha,
                status: cert.status,
                seconds: cert.solve_seconds,
            });
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "budget_fraction,method,cr,ca,alpha,status,seconds";

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let ca = r.ca.map(|v| v.to_string()).unwrap_or_default();
        let alpha = match r.alpha {
            None => String::new(),
            Some(None) => "NaN".to_string(),
            Some(Some(a)) => format!("{a:.6}"),
        };
        let status = match r.status {
            CertStatus::Exact => "Exact",
            CertStatus::TimeLimitBound => "TimeLimitBound",
            CertStatus::Decomposed => "Decomposed",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.3}",
            r.budget_fraction,
            r.method.as_str(),
            r.cr,
            ca,
            alpha,
            status,
            r.seconds
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash_bagging::PairStructure;

    fn three_way() -> VoteMatrix {
        VoteMatrix::new(3, 2, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]).unwrap()
    }

    #[test]
    fn three_way_alpha() {
        let s = AttackStructure::Hash(PairStructure::single(3));
        let pts = [SweepPoint::from_cap(1, 3), SweepPoint::from_cap(0, 3)];
        let rows = sweep(
            &three_way(),
            &s,
            None,
            &pts,
            &[Method::SampleWise, Method::Collective],
            1,
            &CertifyConfig::unlimited(),
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].cap, 0);
        assert_eq!(rows[1].alpha, Some(None));
        assert_eq!(rows[2].cr, 0);
        assert_eq!(rows[3].cr, 1);
        let a = rows[3].alpha.unwrap().unwrap();
        assert!((a - 1.0 / 3.0).abs() < 1e-12);

        let csv = to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("0,samplewise,3,,,Exact,"));
        assert!(lines
            .next()
            .unwrap()
            .starts_with("0,collective,3,,NaN,Exact,"));
    }

    #[test]
    fn parse_methods() {
        assert_eq!("collective".parse::<Method>().unwrap(), Method::Collective);
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn fraction_rounding() {
        assert_eq!(SweepPoint::from_fraction(0.05, 20).cap, 1);
        assert_eq!(SweepPoint::from_fraction(0.25, 40).cap, 10);
    }
}
